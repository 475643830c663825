#pragma once

#include "igc/estimators/igc.hpp"

namespace igc {

/// Direct regression of Y_{t+tau} on (z(H_t), a_t..a_{t+tau-1}). Targets the conditional
/// E[Y_{t+tau} | H_t, A_{t:t+tau-1}], not the CAPO, once time-varying confounding is present.
class HistoryRegressor {
 public:
  HistoryRegressor(const BackboneConfig& cfg, const Dims& dims, std::size_t tau, std::size_t head_hidden,
                   std::uint64_t seed)
      : tau_(check_tau(tau)), net_(cfg, dims, head_hidden, {{"outcome", cfg.repr + tau * dims.a, dims.y}}, seed) {}

  std::size_t tau() const { return tau_; }
  SequenceModel& net() { return net_; }
  const SequenceModel& net() const { return net_; }

 private:
  static std::size_t check_tau(std::size_t tau) {
    if (tau < 1) throw ConfigError("tau", "horizon must be >= 1");
    return tau;
  }
  std::size_t tau_;
  SequenceModel net_;
};

inline std::vector<double> train_history_regressor(HistoryRegressor& m, const Dataset& d, const TrainConfig& cfg) {
  const std::size_t tau = m.tau();
  check_training_data(d, tau);
  if (cfg.fit_scaler) m.net().set_scaler(Scaler::fit(d));
  const Scaler& sc = m.net().scaler();
  return run_training(m.net().parameters(), d, cfg, [&](std::size_t, std::span<const std::size_t> idx, Rng& drop) {
    const HistoryBatch h = make_history_batch(d, idx, sc);
    const std::size_t B = h.B, T = h.T, dy = h.dy;
    const ad::Tensor z = m.net().backbone().encode(h, true, &drop);
    const ad::Tensor plans = ad::Tensor::constant({B, T, tau * h.da}, treatment_windows(d, idx, T, tau));
    const ad::Tensor pred = m.net().head(0, ad::concat({z, plans}, 2));
    std::vector<double> target(B * T * dy, 0.0), w(B * T * dy, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      const double wb = 1.0 / (static_cast<double>(B) * static_cast<double>(h.lengths[b] - tau) * static_cast<double>(dy));
      for (std::size_t t = 0; t + tau < h.lengths[b]; ++t)
        for (std::size_t j = 0; j < dy; ++j) {
          target[(b * T + t) * dy + j] = h.y[h.at(b, t + tau, j, dy)];
          w[(b * T + t) * dy + j] = wb;
        }
    }
    LossTerms out;
    out.total = ad::weighted_sse(pred, ad::Tensor::constant({B, T, dy}, std::move(target)), std::move(w));
    out.heads.push_back(out.total);
    return out;
  });
}

inline std::vector<std::vector<double>> predict_capo(const HistoryRegressor& m, const Dataset& d,
                                                     std::span<const CapoQuery> qs) {
  ad::NoGradGuard ng;
  std::vector<std::vector<double>> out;
  for_each_query_chunk(d, qs, m.tau(), [&](const QueryChunk& c) {
    const ad::Tensor z = encode_prefixes(m.net(), d, c.traj, c.cut, false, nullptr);
    append_outcomes(out, m.net().head(0, ad::concat({z, plan_tensor(c.abar, m.tau())}, 1)), m.net().scaler().y);
  });
  return out;
}

}  // namespace igc
