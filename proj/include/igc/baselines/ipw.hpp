#pragma once

#include <optional>

#include "igc/baselines/propensity.hpp"

namespace igc {

struct IpwConfig {
  double clip_eps = 0.01;
  std::optional<bool> stabilized;  // unset: stabilize for tau >= 2
  double propensity_fraction = 0.5;  // share of trajectories reserved for the propensity model
};

/// Inverse-propensity-weighted regression of Y_{t+tau} on z(H_t) for one fixed plan abar.
class IpwModel {
 public:
  IpwModel(const BackboneConfig& cfg, const Dims& dims, std::size_t tau, std::size_t head_hidden,
           const IpwConfig& ipw, std::uint64_t seed)
      : tau_(tau),
        ipw_(ipw),
        propensity_(cfg, dims, head_hidden, ipw.clip_eps, Rng(seed, "ipw").fork("propensity").next_u64()),
        outcome_(cfg, dims, head_hidden, {{"outcome", cfg.repr, dims.y}}, Rng(seed, "ipw").fork("outcome").next_u64()) {
    if (tau < 1) throw ConfigError("tau", "horizon must be >= 1");
    if (!(ipw.propensity_fraction > 0.0 && ipw.propensity_fraction < 1.0))
      throw ConfigError("ipw.propensity_fraction", "must lie in (0, 1)");
  }

  std::size_t tau() const { return tau_; }
  const IpwConfig& config() const { return ipw_; }
  bool stabilized() const { return ipw_.stabilized.value_or(tau_ >= 2); }
  const Matrix& abar() const { return abar_; }
  void set_abar(Matrix a) { abar_ = std::move(a); }
  PropensityModel& propensity() { return propensity_; }
  const PropensityModel& propensity() const { return propensity_; }
  SequenceModel& outcome() { return outcome_; }
  const SequenceModel& outcome() const { return outcome_; }
  std::size_t skipped_batches = 0;

 private:
  std::size_t tau_;
  IpwConfig ipw_;
  PropensityModel propensity_;
  SequenceModel outcome_;
  Matrix abar_;
};

/// Probability of treatment vector `a` under per-dimension propensities (row s of p).
inline double joint_probability(const Matrix& p, std::size_t s, std::span<const double> a) {
  double v = 1.0;
  for (std::size_t c = 0; c < a.size(); ++c) v *= a[c] == 1.0 ? p(s, c) : 1.0 - p(s, c);
  return v;
}

/// Per time index s, the fraction of trajectories observed at s whose A_s equals abar row k.
inline Matrix marginal_plan_frequencies(const Dataset& d, const Matrix& abar) {
  std::size_t Tmax = 0;
  for (const auto& tr : d.items) Tmax = std::max(Tmax, tr.length());
  Matrix f(Tmax, abar.rows);
  for (std::size_t k = 0; k < abar.rows; ++k)
    for (std::size_t s = 0; s < Tmax; ++s) {
      double hit = 0, n = 0;
      for (const auto& tr : d.items) {
        if (s >= tr.length()) continue;
        n += 1;
        hit += std::equal(abar.row(k).begin(), abar.row(k).end(), tr.A.row(s).begin()) ? 1 : 0;
      }
      f(s, k) = n > 0 ? hit / n : 0.0;
    }
  return f;
}

/// W_t = prod_delta 1{A_{t+delta} = abar_delta} / pi(abar_delta | H_{t+delta}); stabilized
/// weights multiply by the marginal frequency of abar_delta at step t+delta. Row i holds one
/// weight per cut t = 0..T_i-1-tau.
inline std::vector<std::vector<double>> ipw_weights(const Dataset& d, const std::vector<Matrix>& propensities,
                                                    const Matrix& abar, bool stabilized) {
  const std::size_t tau = abar.rows;
  const Matrix freq = stabilized ? marginal_plan_frequencies(d, abar) : Matrix();
  std::vector<std::vector<double>> w(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Trajectory& tr = d.items[i];
    for (std::size_t t = 0; t + tau < tr.length(); ++t) {
      double v = 1.0;
      for (std::size_t k = 0; k < tau && v != 0.0; ++k) {
        if (!std::equal(abar.row(k).begin(), abar.row(k).end(), tr.A.row(t + k).begin())) {
          v = 0.0;
          break;
        }
        v /= joint_probability(propensities[i], t + k, abar.row(k));
        if (stabilized) v *= freq(t + k, k);
      }
      w[i].push_back(v);
    }
  }
  return w;
}

/// Self-normalized weighted squared error per batch; batches with zero total weight are skipped
/// and counted in m.skipped_batches.
inline std::vector<double> ipw_regress(IpwModel& m, const Dataset& d, const std::vector<Matrix>& propensities,
                                       const TrainConfig& cfg) {
  const std::size_t tau = m.tau();
  check_training_data(d, tau);
  check_intervention(cfg.abar, tau, d.dims.a);
  if (propensities.size() != d.size()) throw ContractError("ipw_regress: one propensity matrix per trajectory required");
  m.set_abar(cfg.abar);
  if (cfg.fit_scaler) m.outcome().set_scaler(Scaler::fit(d));
  const Scaler& sc = m.outcome().scaler();
  const auto weights = ipw_weights(d, propensities, cfg.abar, m.stabilized());
  m.skipped_batches = 0;
  return run_training(m.outcome().parameters(), d, cfg, [&](std::size_t, std::span<const std::size_t> idx, Rng& drop) {
    const HistoryBatch h = make_history_batch(d, idx, sc);
    const std::size_t B = h.B, T = h.T, dy = h.dy;
    std::vector<double> target(B * T * dy, 0.0), w(B * T * dy, 0.0);
    double total = 0.0;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t + tau < h.lengths[b]; ++t) total += weights[idx[b]][t];
    LossTerms out;
    if (total <= 0.0) {
      ++m.skipped_batches;
      return out;
    }
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t + tau < h.lengths[b]; ++t)
        for (std::size_t j = 0; j < dy; ++j) {
          target[(b * T + t) * dy + j] = h.y[h.at(b, t + tau, j, dy)];
          w[(b * T + t) * dy + j] = weights[idx[b]][t] / (total * static_cast<double>(dy));
        }
    const ad::Tensor pred = m.outcome().head(0, m.outcome().backbone().encode(h, true, &drop));
    out.total = ad::weighted_sse(pred, ad::Tensor::constant({B, T, dy}, std::move(target)), std::move(w));
    out.heads.push_back(out.total);
    return out;
  });
}

struct IpwFit {
  PropensityFit propensity;
  std::vector<double> outcome_history;
  std::size_t skipped_batches = 0;
};

/// Disjoint index sets (propensity, outcome) covering 0..n-1, each sorted and nonempty.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> honest_split(std::size_t n, double fraction,
                                                                                  std::uint64_t seed) {
  if (n < 2) throw ContractError("IPW needs at least two trajectories for the honest split");
  Rng split(seed, "ipw-split");
  const auto perm = split.permutation(n);
  const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1,
                                         n - 1);
  std::vector<std::size_t> a(perm.begin(), perm.begin() + static_cast<long>(k));
  std::vector<std::size_t> b(perm.begin() + static_cast<long>(k), perm.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {std::move(a), std::move(b)};
}

/// Honest split: the propensity model and the weighted regression see disjoint trajectories.
inline IpwFit train_ipw(IpwModel& m, const Dataset& d, const TrainConfig& cfg) {
  check_training_data(d, m.tau());
  const auto [a, b] = honest_split(d.size(), m.config().propensity_fraction, cfg.seed);
  const Dataset prop_split = d.subset(a), outcome_split = d.subset(b);
  IpwFit fit;
  fit.propensity = fit_propensity(m.propensity(), prop_split, cfg);
  const auto probs = predict_propensities(m.propensity(), outcome_split);
  fit.outcome_history = ipw_regress(m, outcome_split, probs, cfg);
  fit.skipped_batches = m.skipped_batches;
  return fit;
}

/// Estimates for queries whose plan equals the trained plan.
inline std::vector<std::vector<double>> predict_capo(const IpwModel& m, const Dataset& d,
                                                     std::span<const CapoQuery> qs) {
  ad::NoGradGuard ng;
  std::vector<std::vector<double>> out;
  for_each_query_chunk(d, qs, m.tau(), [&](const QueryChunk& c) {
    for (const Matrix* a : c.abar)
      if (!(*a == m.abar())) throw ContractError("IPW model was trained for a different interventional sequence");
    append_outcomes(out, m.outcome().head(0, encode_prefixes(m.outcome(), d, c.traj, c.cut, false, nullptr)),
                    m.outcome().scaler().y);
  });
  return out;
}

}  // namespace igc
