#pragma once

#include <memory>
#include <optional>
#include <string>

#include "igc/backbone/history.hpp"
#include "igc/nn/layers.hpp"

namespace igc {

enum class BackboneKind { lstm, transformer };

inline std::string to_string(BackboneKind k) { return k == BackboneKind::lstm ? "lstm" : "transformer"; }

struct BackboneConfig {
  BackboneKind kind = BackboneKind::lstm;
  std::size_t hidden = 16;     // d_h
  std::size_t repr = 8;        // d_z
  std::size_t blocks = 1;      // J (transformer)
  std::size_t heads = 2;       // M (transformer)
  std::size_t ff_hidden = 32;  // feed-forward width (transformer)
  std::size_t max_rel = 15;    // l_max (transformer)
  double dropout = 0.0;
};

/// A cut (batch row, time t) at which a treatment branch starts.
struct BranchCut {
  std::size_t row = 0;
  std::size_t t = 0;
};

/// Sequence encoder z(.) mapping histories to per-step representations Z_s.
class Backbone {
 public:
  explicit Backbone(BackboneConfig cfg) : cfg_(cfg) {}
  virtual ~Backbone() = default;
  Backbone(const Backbone&) = delete;
  Backbone& operator=(const Backbone&) = delete;

  /// (B, T, d_z). Dropout is active only when `training` is set.
  ad::Tensor encode(const HistoryBatch& h, bool training, Rng* rng) const {
    if (h.T == 0 || h.B == 0) throw ContractError("backbone: empty history");
    return encode_streams(h.y_tensor(), h.x_tensor(), h.a_tensor(), h.lengths, training, rng);
  }

  /// Same as encode() on stream tensors y (B,T,d_y), x (B,T,d_x), a_prev (B,T,d_a), which may
  /// require grad (used to verify causality through gradients).
  virtual ad::Tensor encode_streams(const ad::Tensor& y, const ad::Tensor& x, const ad::Tensor& a,
                                    const std::vector<std::size_t>& lengths, bool training, Rng* rng) const = 0;

  /// For each cut (b, t): Z at steps t+1..t+L of the history in which A_t..A_{t+L-1}
  /// are replaced by abar rows 0..L-1. Evaluated without dropout or graph. Shape (R, L, d_z).
  virtual ad::Tensor encode_branches(const HistoryBatch& h, std::span<const BranchCut> cuts, const Matrix& abar,
                                     std::size_t L) const {
    return encode_branches_generic(h, cuts, abar, L);
  }

  /// Reference implementation: re-encodes every spliced history from scratch.
  ad::Tensor encode_branches_generic(const HistoryBatch& h, std::span<const BranchCut> cuts, const Matrix& abar,
                                     std::size_t L) const {
    ad::NoGradGuard ng;
    const std::size_t R = cuts.size();
    const std::size_t dz = cfg_.repr;
    std::vector<double> out(R * L * dz, 0.0);
    if (R == 0 || L == 0) return ad::Tensor::constant({R, L, dz}, std::move(out));
    HistoryBatch sub;
    sub.B = R;
    sub.dy = h.dy;
    sub.dx = h.dx;
    sub.da = h.da;
    sub.lengths.resize(R);
    for (std::size_t r = 0; r < R; ++r) {
      const auto [b, t] = cuts[r];
      if (t + L >= h.lengths.at(b)) throw ContractError("branch extends beyond the observed history");
      sub.lengths[r] = t + L + 1;
      sub.T = std::max(sub.T, sub.lengths[r]);
    }
    sub.y.assign(R * sub.T * sub.dy, 0.0);
    sub.x.assign(R * sub.T * sub.dx, 0.0);
    sub.a_prev.assign(R * sub.T * sub.da, 0.0);
    for (std::size_t r = 0; r < R; ++r) {
      const std::size_t b = cuts[r].row;
      for (std::size_t s = 0; s < sub.lengths[r]; ++s) {
        std::copy_n(h.y.data() + h.at(b, s, 0, h.dy), h.dy, sub.y.data() + sub.at(r, s, 0, sub.dy));
        std::copy_n(h.x.data() + h.at(b, s, 0, h.dx), h.dx, sub.x.data() + sub.at(r, s, 0, sub.dx));
        std::copy_n(h.a_prev.data() + h.at(b, s, 0, h.da), h.da, sub.a_prev.data() + sub.at(r, s, 0, sub.da));
      }
      substitute_treatments(sub, r, cuts[r].t, abar, L);
    }
    const ad::Tensor z = encode(sub, false, nullptr);
    const auto zv = z.values();
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t k = 0; k < L; ++k) {
        const std::size_t s = cuts[r].t + 1 + k;
        std::copy_n(zv.data() + (r * sub.T + s) * dz, dz, out.data() + (r * L + k) * dz);
      }
    return ad::Tensor::constant({R, L, dz}, std::move(out));
  }

  const BackboneConfig& config() const { return cfg_; }
  std::size_t repr_dim() const { return cfg_.repr; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

 protected:
  BackboneConfig cfg_;
  nn::ParamStore params_;
};

/// Encoder output for one history, tagged with the substituted treatment range.
struct HiddenStates {
  ad::Tensor Z;  // (T', d_z)
  bool intervened = false;
  std::size_t sub_begin = 0, sub_end = 0;  // treatments A_{sub_begin..sub_end-1} replaced
};

/// Encodes the history of `tr` through step t+delta. When `abar` is given, treatments
/// A_t..A_{t+delta-1} are replaced by its first delta rows; Y and X stay factual.
inline HiddenStates encode_history(const Backbone& net, const Trajectory& tr, const Dims& dims, const Scaler& sc,
                                   std::size_t t, std::size_t delta, const Matrix* abar) {
  if (t + delta >= tr.length()) throw ContractError("encode_history: t + delta beyond trajectory length");
  if (abar != nullptr && abar->rows < delta) throw ContractError("encode_history: interventional sequence shorter than delta");
  Dataset one;
  one.dims = dims;
  one.items.push_back(tr);
  const std::size_t idx[1] = {0};
  const std::size_t len[1] = {t + delta + 1};
  HistoryBatch h = make_history_batch(one, idx, sc, len);
  HiddenStates hs;
  if (abar != nullptr && delta > 0) {
    substitute_treatments(h, 0, t, *abar, delta);
    hs.intervened = true;
    hs.sub_begin = t;
    hs.sub_end = t + delta;
  }
  ad::NoGradGuard ng;
  const ad::Tensor z = net.encode(h, false, nullptr);
  hs.Z = ad::reshape(z, {h.T, net.repr_dim()});
  return hs;
}

}  // namespace igc
