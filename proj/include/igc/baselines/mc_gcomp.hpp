#pragma once

#include "igc/estimators/igc.hpp"

namespace igc {

struct GcompConfig {
  std::size_t samples = 100;  // K rollouts per query
  bool deterministic = false;  // propagate the density mean instead of sampling
  std::uint64_t seed = 0;
};

/// Monte-Carlo g-computation: a Gaussian one-step density p(X_{s+1}, Y_{s+1} | H_s, A_s) on
/// top of the backbone, rolled forward under the plan.
class GcompModel {
 public:
  GcompModel(const BackboneConfig& cfg, const Dims& dims, std::size_t tau, std::size_t head_hidden,
             std::uint64_t seed)
      : tau_(check_tau(tau)),
        net_(cfg, dims, head_hidden, {{"density", cfg.repr + dims.a, 2 * (dims.x + dims.y)}}, seed) {}

  std::size_t tau() const { return tau_; }
  std::size_t next_width() const { return net_.dims().x + net_.dims().y; }
  SequenceModel& net() { return net_; }
  const SequenceModel& net() const { return net_; }

  /// Mean and log-variance of the standardized next (X, Y), each (..., d_x + d_y).
  std::pair<ad::Tensor, ad::Tensor> density(const ad::Tensor& z, const ad::Tensor& a) const {
    const long axis = static_cast<long>(z.shape().size()) - 1;
    const ad::Tensor out = net_.head(0, ad::concat({z, a}, axis));
    const std::size_t w = next_width();
    return {ad::slice(out, axis, 0, w), ad::slice(out, axis, w, 2 * w)};
  }

 private:
  static std::size_t check_tau(std::size_t tau) {
    if (tau < 1) throw ConfigError("tau", "horizon must be >= 1");
    return tau;
  }
  std::size_t tau_;
  SequenceModel net_;
};

/// Gaussian negative log-likelihood of (X_{s+1}, Y_{s+1}) given (H_s, A_s) for s = 0..T-2.
inline std::vector<double> train_gcomp(GcompModel& m, const Dataset& d, const TrainConfig& cfg) {
  check_training_data(d, std::max<std::size_t>(m.tau(), 1));
  if (cfg.fit_scaler) m.net().set_scaler(Scaler::fit(d));
  const Scaler& sc = m.net().scaler();
  const std::size_t dxo = d.dims.x, w = m.next_width();
  return run_training(m.net().parameters(), d, cfg, [&](std::size_t, std::span<const std::size_t> idx, Rng& drop) {
    const HistoryBatch h = make_history_batch(d, idx, sc);
    const std::size_t B = h.B, T = h.T;
    const ad::Tensor z = m.net().backbone().encode(h, true, &drop);
    const ad::Tensor a = ad::Tensor::constant({B, T, h.da}, treatment_windows(d, idx, T, 1));
    auto [mu, logvar] = m.density(z, a);
    std::vector<double> target(B * T * w, 0.0), wt(B * T * w, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      const double wb = 1.0 / (static_cast<double>(B) * static_cast<double>(h.lengths[b] - 1) * static_cast<double>(w));
      for (std::size_t s = 0; s + 1 < h.lengths[b]; ++s) {
        double* dst = target.data() + (b * T + s) * w;
        for (std::size_t c = 0; c < dxo; ++c) dst[c] = h.x[h.at(b, s + 1, c, h.dx)];
        for (std::size_t j = 0; j < h.dy; ++j) dst[dxo + j] = h.y[h.at(b, s + 1, j, h.dy)];
        std::fill_n(wt.data() + (b * T + s) * w, w, wb);
      }
    }
    LossTerms out;
    out.total = ad::gaussian_nll(mu, logvar, ad::Tensor::constant({B, T, w}, std::move(target)), std::move(wt));
    out.heads.push_back(out.total);
    return out;
  });
}

inline constexpr std::size_t kRolloutRows = 4096;

struct RolloutEstimate {
  std::vector<std::vector<double>> mean;  // per query, d_y values in outcome units
  std::vector<std::vector<double>> sd;    // spread of the K rollout values
};

/// Appends one step to every row: X and Y from `next` (standardized), statics carried over,
/// treatment input taken from `a`.
inline HistoryBatch extend_history(const HistoryBatch& h, std::size_t dxo, const std::vector<double>& next,
                                   const std::vector<double>& a) {
  HistoryBatch e;
  e.B = h.B;
  e.T = h.T + 1;
  e.dy = h.dy;
  e.dx = h.dx;
  e.da = h.da;
  e.lengths = h.lengths;
  e.y.assign(e.B * e.T * e.dy, 0.0);
  e.x.assign(e.B * e.T * e.dx, 0.0);
  e.a_prev.assign(e.B * e.T * e.da, 0.0);
  const std::size_t w = dxo + h.dy;
  for (std::size_t b = 0; b < h.B; ++b) {
    const std::size_t L = h.lengths[b];
    std::copy_n(h.y.data() + h.at(b, 0, 0, h.dy), L * h.dy, e.y.data() + e.at(b, 0, 0, e.dy));
    std::copy_n(h.x.data() + h.at(b, 0, 0, h.dx), L * h.dx, e.x.data() + e.at(b, 0, 0, e.dx));
    std::copy_n(h.a_prev.data() + h.at(b, 0, 0, h.da), L * h.da, e.a_prev.data() + e.at(b, 0, 0, e.da));
    for (std::size_t c = 0; c < dxo; ++c) e.x[e.at(b, L, c, e.dx)] = next[b * w + c];
    for (std::size_t c = dxo; c < h.dx; ++c) e.x[e.at(b, L, c, e.dx)] = h.x[h.at(b, L - 1, c, h.dx)];
    for (std::size_t j = 0; j < h.dy; ++j) e.y[e.at(b, L, j, e.dy)] = next[b * w + dxo + j];
    std::copy_n(a.data() + b * h.da, h.da, e.a_prev.data() + e.at(b, L, 0, e.da));
    e.lengths[b] = L + 1;
  }
  return e;
}

/// Rolls K copies of each query in `c` forward and appends their summaries to `est`.
inline void rollout_chunk(const GcompModel& m, const Dataset& d, const QueryChunk& c, const GcompConfig& g, Rng& rng,
                          RolloutEstimate& est) {
  const std::size_t K = g.samples, tau = m.tau(), dxo = d.dims.x, dy = d.dims.y, da = d.dims.a, w = m.next_width();
  const std::size_t n = c.size(), R = n * K;
  std::vector<std::size_t> traj(R), len(R);
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t k = 0; k < K; ++k) {
      traj[q * K + k] = c.traj[q];
      len[q * K + k] = c.cut[q] + 1;
    }
  HistoryBatch h = make_history_batch(d, traj, m.net().scaler(), len);
  std::vector<double> final_y(R * dy);
  for (std::size_t step = 0; step < tau; ++step) {
    const ad::Tensor z = m.net().backbone().encode(h, false, nullptr);
    std::vector<BranchCut> at(R);
    for (std::size_t r = 0; r < R; ++r) at[r] = {r, h.lengths[r] - 1};
    std::vector<double> a(R * da);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t j = 0; j < da; ++j) a[r * da + j] = (*c.abar[r / K])(step, j);
    auto [mu, logvar] = m.density(gather_steps(z, at), ad::Tensor::constant({R, da}, a));
    const auto mv = mu.values(), lv = logvar.values();
    if (step + 1 == tau) {
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t j = 0; j < dy; ++j) final_y[r * dy + j] = mv[r * w + dxo + j];
      break;
    }
    std::vector<double> next(mv.begin(), mv.end());
    if (!g.deterministic)
      for (std::size_t i = 0; i < next.size(); ++i) next[i] += std::exp(0.5 * lv[i]) * rng.normal();
    h = extend_history(h, dxo, next, a);
  }
  const Standardizer& sy = m.net().scaler().y;
  for (std::size_t q = 0; q < n; ++q) {
    std::vector<double> mean(dy, 0.0), sd(dy, 0.0);
    for (std::size_t j = 0; j < dy; ++j) {
      // shifted by the first draw so identical rollouts give a spread of exactly zero
      const double v0 = sy.inverse(final_y[q * K * dy + j], j);
      double s = 0.0, s2 = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const double x = sy.inverse(final_y[(q * K + k) * dy + j], j) - v0;
        s += x;
        s2 += x * x;
      }
      const auto kd = static_cast<double>(K);
      mean[j] = v0 + s / kd;
      sd[j] = K > 1 ? std::sqrt(std::max(0.0, (s2 - s * s / kd) / (kd - 1.0))) : 0.0;
    }
    est.mean.push_back(std::move(mean));
    est.sd.push_back(std::move(sd));
  }
}

/// Rolls K copies of each history forward under its plan. Intermediate (X, Y) are drawn from
/// the fitted density (or set to its mean); the estimate at the horizon is the density mean of Y.
inline RolloutEstimate gcomp_rollout(const GcompModel& m, const Dataset& d, std::span<const CapoQuery> qs,
                                     const GcompConfig& g) {
  if (g.samples < 1) throw ContractError("g-computation needs at least one rollout per query");
  ad::NoGradGuard ng;
  const Rng root(g.seed, "gcomp-rollout");
  const std::size_t per_batch = std::max<std::size_t>(1, kRolloutRows / g.samples);
  RolloutEstimate est;
  for_each_query_chunk(d, qs, m.tau(), [&](const QueryChunk& all) {
    for (std::size_t q0 = 0; q0 < all.size(); q0 += per_batch) {
      QueryChunk c;
      for (std::size_t q = q0; q < std::min(all.size(), q0 + per_batch); ++q) {
        c.traj.push_back(all.traj[q]);
        c.cut.push_back(all.cut[q]);
        c.abar.push_back(all.abar[q]);
      }
      Rng rng = root.fork(est.mean.size());
      rollout_chunk(m, d, c, g, rng, est);
    }
  });
  return est;
}

inline std::vector<std::vector<double>> predict_capo(const GcompModel& m, const Dataset& d,
                                                     std::span<const CapoQuery> qs, const GcompConfig& g) {
  return gcomp_rollout(m, d, qs, g).mean;
}

}  // namespace igc
