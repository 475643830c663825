#pragma once

#include "igc/estimators/igc.hpp"

namespace igc {

/// pi(A_s = 1 | H_s) per treatment dimension: backbone plus a sigmoid read-out, clipped to
/// [eps, 1 - eps].
class PropensityModel {
 public:
  PropensityModel(const BackboneConfig& cfg, const Dims& dims, std::size_t head_hidden, double clip_eps,
                  std::uint64_t seed)
      : eps_(check_eps(clip_eps)), net_(cfg, dims, head_hidden, {{"propensity", cfg.repr, dims.a}}, seed) {}

  double clip_eps() const { return eps_; }
  SequenceModel& net() { return net_; }
  const SequenceModel& net() const { return net_; }

  /// Logits for every step of the batch, (B, T, d_a).
  ad::Tensor logits(const HistoryBatch& h, bool training, Rng* rng) const {
    return net_.head(0, net_.backbone().encode(h, training, rng));
  }

  double clip(double p) const { return std::clamp(p, eps_, 1.0 - eps_); }

 private:
  static double check_eps(double e) {
    if (!(e > 0.0 && e < 0.5)) throw ConfigError("propensity.clip_eps", "must lie in (0, 0.5)");
    return e;
  }
  double eps_;
  SequenceModel net_;
};

struct CalibrationBin {
  double lo = 0, hi = 0;
  double mean_predicted = 0, empirical_rate = 0;
  std::size_t count = 0;
};

struct PropensityFit {
  std::vector<double> loss_history;
  std::vector<std::string> warnings;
};

/// Per-step binary cross-entropy of A_s given H_s, averaged per trajectory and over the batch.
inline PropensityFit fit_propensity(PropensityModel& m, const Dataset& d, const TrainConfig& cfg) {
  check_training_data(d, 0);
  PropensityFit fit;
  for (std::size_t c = 0; c < d.dims.a; ++c) {
    double ones = 0, n = 0;
    for (const auto& tr : d.items)
      for (std::size_t s = 0; s < tr.length(); ++s) {
        ones += tr.A(s, c);
        n += 1;
      }
    if (ones == 0 || ones == n)
      fit.warnings.push_back("treatment " + std::to_string(c) + " has a single observed class; propensities will sit at the clipping bound");
  }
  if (cfg.fit_scaler) m.net().set_scaler(Scaler::fit(d));
  const Scaler& sc = m.net().scaler();
  fit.loss_history = run_training(m.net().parameters(), d, cfg, [&](std::size_t, std::span<const std::size_t> idx, Rng& drop) {
    const HistoryBatch h = make_history_batch(d, idx, sc);
    const std::size_t B = h.B, T = h.T, da = h.da;
    std::vector<double> w(B * T * da, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      const double wb = 1.0 / (static_cast<double>(B) * static_cast<double>(h.lengths[b]) * static_cast<double>(da));
      for (std::size_t s = 0; s < h.lengths[b]; ++s)
        for (std::size_t c = 0; c < da; ++c) w[(b * T + s) * da + c] = wb;
    }
    LossTerms out;
    out.total = ad::bce_with_logits(m.logits(h, true, &drop),
                                    ad::Tensor::constant({B, T, da}, treatment_windows(d, idx, T, 1)), std::move(w));
    out.heads.push_back(out.total);
    return out;
  });
  return fit;
}

/// Clipped pi(A_s^c = 1 | H_s) for every step of every trajectory, one (T, d_a) matrix each.
inline std::vector<Matrix> predict_propensities(const PropensityModel& m, const Dataset& d) {
  ad::NoGradGuard ng;
  std::vector<Matrix> out;
  out.reserve(d.size());
  for (std::size_t start = 0; start < d.size(); start += kPredictChunk) {
    const std::size_t n = std::min(kPredictChunk, d.size() - start);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = start + i;
    const HistoryBatch h = make_history_batch(d, idx, m.net().scaler());
    const ad::Tensor lg = m.logits(h, false, nullptr);
    for (std::size_t b = 0; b < n; ++b) {
      Matrix p(h.lengths[b], h.da);
      for (std::size_t s = 0; s < p.rows; ++s)
        for (std::size_t c = 0; c < h.da; ++c) p(s, c) = m.clip(ad::sigmoid_scalar(lg[(b * h.T + s) * h.da + c]));
      out.push_back(std::move(p));
    }
  }
  return out;
}

/// Ten equal-width bins of predicted probability with the observed treatment rate in each.
inline std::vector<CalibrationBin> calibration(const PropensityModel& m, const Dataset& d) {
  const auto probs = predict_propensities(m, d);
  std::vector<CalibrationBin> bins(10);
  std::vector<double> psum(10, 0.0), asum(10, 0.0);
  for (std::size_t k = 0; k < 10; ++k) {
    bins[k].lo = static_cast<double>(k) / 10.0;
    bins[k].hi = static_cast<double>(k + 1) / 10.0;
  }
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t s = 0; s < probs[i].rows; ++s)
      for (std::size_t c = 0; c < d.dims.a; ++c) {
        const double p = probs[i](s, c);
        const auto k = std::min<std::size_t>(9, static_cast<std::size_t>(p * 10.0));
        psum[k] += p;
        asum[k] += d.items[i].A(s, c);
        ++bins[k].count;
      }
  for (std::size_t k = 0; k < 10; ++k)
    if (bins[k].count) {
      bins[k].mean_predicted = psum[k] / static_cast<double>(bins[k].count);
      bins[k].empirical_rate = asum[k] / static_cast<double>(bins[k].count);
    }
  return bins;
}

}  // namespace igc
