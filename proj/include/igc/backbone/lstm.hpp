#pragma once

#include "igc/backbone/backbone.hpp"

namespace igc {

/// Single-layer LSTM over the concatenated per-step streams, followed by a linear
/// projection Z_s = W_out dropout(h_s) + b_out. Gate order in W: input, forget, cell, output.
class LstmBackbone : public Backbone {
 public:
  LstmBackbone(BackboneConfig cfg, std::size_t d_in, Rng& rng) : Backbone(cfg), d_in_(d_in) {
    const std::size_t dh = cfg_.hidden;
    Rng r = rng.fork("lstm");
    W_ = params_.add("lstm.W", ad::xavier_uniform({d_in + dh, 4 * dh}, d_in + dh, 4 * dh, r));
    b_ = params_.add("lstm.b", ad::Tensor::parameter({4 * dh}, std::vector<double>(4 * dh, 0.0)));
    out_ = nn::Linear(params_, "lstm.out", dh, cfg_.repr, r);
  }

  std::size_t input_dim() const { return d_in_; }

  /// One recurrence step on a (B, d_in) input; returns (h', c').
  std::pair<ad::Tensor, ad::Tensor> cell(const ad::Tensor& x, const ad::Tensor& h, const ad::Tensor& c) const {
    const std::size_t dh = cfg_.hidden;
    const ad::Tensor g = ad::add(ad::matmul(ad::concat({x, h}, 1), W_), b_);
    const ad::Tensor i = ad::sigmoid(ad::slice(g, 1, 0, dh));
    const ad::Tensor f = ad::sigmoid(ad::slice(g, 1, dh, 2 * dh));
    const ad::Tensor u = ad::tanh(ad::slice(g, 1, 2 * dh, 3 * dh));
    const ad::Tensor o = ad::sigmoid(ad::slice(g, 1, 3 * dh, 4 * dh));
    ad::Tensor c2 = ad::add(ad::mul(f, c), ad::mul(i, u));
    ad::Tensor h2 = ad::mul(o, ad::tanh(c2));
    return {std::move(h2), std::move(c2)};
  }

  ad::Tensor encode_streams(const ad::Tensor& y, const ad::Tensor& x, const ad::Tensor& a,
                            const std::vector<std::size_t>& lengths, bool training, Rng* rng) const override {
    const std::size_t B = y.dim(0), T = y.dim(1), dh = cfg_.hidden;
    if (B == 0 || T == 0) throw ContractError("lstm: empty history");
    if (y.dim(2) + x.dim(2) + a.dim(2) != d_in_) throw DimensionError("lstm: input width does not match the configured streams");
    std::vector<ad::Tensor> parts;
    for (const auto* s : {&y, &x, &a})
      if (s->dim(2) > 0) parts.push_back(*s);
    const ad::Tensor in = parts.size() == 1 ? parts[0] : ad::concat(parts, 2);
    ad::Tensor hs = ad::Tensor::zeros({B, dh});
    ad::Tensor cs = ad::Tensor::zeros({B, dh});
    std::vector<ad::Tensor> outs;
    outs.reserve(T);
    for (std::size_t s = 0; s < T; ++s) {
      auto [hn, cn] = cell(ad::reshape(ad::slice(in, 1, s, s + 1), {B, d_in_}), hs, cs);
      std::vector<double> m(B), keep(B);
      bool all = true;
      for (std::size_t b = 0; b < B; ++b) {
        m[b] = s < lengths[b] ? 1.0 : 0.0;
        keep[b] = 1.0 - m[b];
        all = all && m[b] == 1.0;
      }
      if (all) {
        hs = hn;
        cs = cn;
      } else {
        const ad::Tensor mk = ad::Tensor::constant({B, 1}, std::move(m));
        const ad::Tensor kp = ad::Tensor::constant({B, 1}, std::move(keep));
        hs = ad::add(ad::mul(mk, hn), ad::mul(kp, hs));
        cs = ad::add(ad::mul(mk, cn), ad::mul(kp, cs));
      }
      outs.push_back(ad::reshape(hs, {B, 1, dh}));
    }
    const ad::Tensor H = ad::dropout(ad::concat(outs, 1), cfg_.dropout, training, rng);
    return out_(H);
  }

  /// Reuses the factual recurrent state at each cut and only runs the L substituted steps.
  ad::Tensor encode_branches(const HistoryBatch& h, std::span<const BranchCut> cuts, const Matrix& abar,
                             std::size_t L) const override {
    ad::NoGradGuard ng;
    check_width(h);
    const std::size_t R = cuts.size(), dh = cfg_.hidden, dz = cfg_.repr;
    if (R == 0 || L == 0) return ad::Tensor::zeros({R, L, dz});
    if (abar.rows < L || abar.cols != h.da) throw ContractError("interventional sequence shorter than substitution range");
    for (const auto& c : cuts)
      if (c.t + L >= h.lengths.at(c.row)) throw ContractError("branch extends beyond the observed history");

    // Factual states after every step.
    std::vector<double> Hs(h.B * h.T * dh), Cs(h.B * h.T * dh);
    {
      ad::Tensor hs = ad::Tensor::zeros({h.B, dh}), cs = ad::Tensor::zeros({h.B, dh});
      for (std::size_t s = 0; s < h.T; ++s) {
        std::tie(hs, cs) = cell(step_input(h, s), hs, cs);
        for (std::size_t b = 0; b < h.B; ++b) {
          std::copy_n(hs.values().data() + b * dh, dh, Hs.data() + (b * h.T + s) * dh);
          std::copy_n(cs.values().data() + b * dh, dh, Cs.data() + (b * h.T + s) * dh);
        }
      }
    }
    std::vector<double> h0(R * dh), c0(R * dh);
    for (std::size_t r = 0; r < R; ++r) {
      std::copy_n(Hs.data() + (cuts[r].row * h.T + cuts[r].t) * dh, dh, h0.data() + r * dh);
      std::copy_n(Cs.data() + (cuts[r].row * h.T + cuts[r].t) * dh, dh, c0.data() + r * dh);
    }
    ad::Tensor hs = ad::Tensor::constant({R, dh}, std::move(h0));
    ad::Tensor cs = ad::Tensor::constant({R, dh}, std::move(c0));
    std::vector<double> out(R * L * dz);
    for (std::size_t k = 0; k < L; ++k) {
      std::vector<double> in(R * d_in_, 0.0);
      for (std::size_t r = 0; r < R; ++r) {
        const std::size_t b = cuts[r].row, s = cuts[r].t + 1 + k;
        double* dst = in.data() + r * d_in_;
        std::copy_n(h.y.data() + h.at(b, s, 0, h.dy), h.dy, dst);
        std::copy_n(h.x.data() + h.at(b, s, 0, h.dx), h.dx, dst + h.dy);
        for (std::size_t c = 0; c < h.da; ++c) dst[h.dy + h.dx + c] = abar(k, c);
      }
      std::tie(hs, cs) = cell(ad::Tensor::constant({R, d_in_}, std::move(in)), hs, cs);
      const ad::Tensor z = out_(hs);
      for (std::size_t r = 0; r < R; ++r) std::copy_n(z.values().data() + r * dz, dz, out.data() + (r * L + k) * dz);
    }
    return ad::Tensor::constant({R, L, dz}, std::move(out));
  }

 private:
  void check_width(const HistoryBatch& h) const {
    if (h.dy + h.dx + h.da != d_in_) throw DimensionError("lstm: input width does not match the configured streams");
  }

  ad::Tensor step_input(const HistoryBatch& h, std::size_t s) const {
    std::vector<double> in(h.B * d_in_);
    for (std::size_t b = 0; b < h.B; ++b) {
      double* dst = in.data() + b * d_in_;
      std::copy_n(h.y.data() + h.at(b, s, 0, h.dy), h.dy, dst);
      std::copy_n(h.x.data() + h.at(b, s, 0, h.dx), h.dx, dst + h.dy);
      std::copy_n(h.a_prev.data() + h.at(b, s, 0, h.da), h.da, dst + h.dy + h.dx);
    }
    return ad::Tensor::constant({h.B, d_in_}, std::move(in));
  }

  std::size_t d_in_;
  ad::Tensor W_, b_;
  nn::Linear out_;
};

}  // namespace igc
