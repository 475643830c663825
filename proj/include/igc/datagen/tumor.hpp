#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "igc/autodiff/ops.hpp"
#include "igc/core/rng.hpp"
#include "igc/data/dataset.hpp"

namespace igc::tumor {

inline double volume_from_diameter(double d) { return std::numbers::pi * d * d * d / 6.0; }
inline double diameter_from_volume(double v) { return std::cbrt(6.0 * v / std::numbers::pi); }

/// Pharmacokinetic-pharmacodynamic tumor growth model with confounded chemo/radio assignment.
/// Volumes in cm^3, diameters in cm. Per-patient coefficients are drawn around the means
/// with the given standard deviations (truncated at zero).
struct TumorParams {
  double rho_g = 7e-5, rho_g_sd = 7.23e-3;
  double K = volume_from_diameter(30.0);
  double alpha_c = 0.028, alpha_c_sd = 0.0007;
  double alpha_r = 0.0398, alpha_r_sd = 0.168;
  double beta_r = 0.00398;  // per-patient beta_r keeps the ratio beta_r / alpha_r
  double D_max = 13.0;      // diameter; the volume cap is the matching sphere
  double sigma_eps = 0.01;
  double gamma = 10.0;
  double rho_ov = 1.0;
  double omega = 0.0;
  double u_logit = 0.2;
  std::size_t window = 15;
  double chemo_dose = 5.0, chemo_decay = 0.5;
  double radio_dose = 2.0;
  double init_diameter_logmean = std::log(6.0), init_diameter_logsd = 0.35;
  double min_volume = 1e-3;
  std::size_t T_min = 20, T_max = 20;

  void validate() const {
    if (!(K > 0) || !(D_max > 0) || sigma_eps < 0 || gamma < 0 || !(rho_ov > 0) || omega < 0 || window == 0 ||
        T_min < 2 || T_max < T_min)
      throw ConfigError("dgp", "tumor parameters violate K > 0, D_max > 0, sigma >= 0, gamma >= 0, rho > 0, omega >= 0");
  }
  double max_volume() const { return volume_from_diameter(D_max); }
};

struct Coefficients {
  double rho_g = 0, alpha_c = 0, alpha_r = 0, beta_r = 0;
};

struct Patient {
  Coefficients coef;
  double U = 0.0;
  double initial_volume = 1.0;
};

/// Y_{t+1} = (1 + rho log(K/Y_t) - alpha_c c_t - (alpha_r d_t + beta_r d_t^2) + eps_t + omega U) Y_t,
/// floored at `min_volume` and capped at the volume of diameter D_max.
inline double tumor_step(double y, double c, double d, double eps, double U, const Coefficients& k,
                         const TumorParams& p) {
  if (!(y > 0.0)) throw ContractError("tumor_step: volume must be positive");
  const double factor =
      1.0 + k.rho_g * std::log(p.K / y) - k.alpha_c * c - (k.alpha_r * d + k.beta_r * d * d) + eps + p.omega * U;
  return std::clamp(factor * y, p.min_volume, p.max_volume());
}

struct Assignment {
  int chemo = 0, radio = 0;
  double p_chemo = 0.5, p_radio = 0.5;
};

/// Assignment probability from the mean diameter over the recent window.
inline double assignment_probability(double mean_diameter, double U, const TumorParams& p) {
  double logit = p.gamma / p.D_max * (mean_diameter - p.D_max / 2.0);
  if (p.omega > 0.0) logit += p.u_logit * U;
  return ad::sigmoid_scalar(p.rho_ov * logit);
}

inline Assignment assign_treatment(double mean_diameter, double U, const TumorParams& p, Rng& rng) {
  Assignment a;
  a.p_chemo = a.p_radio = assignment_probability(mean_diameter, U, p);
  a.chemo = rng.bernoulli(a.p_chemo) ? 1 : 0;
  a.radio = rng.bernoulli(a.p_radio) ? 1 : 0;
  return a;
}

/// Mean diameter over the last `window` volumes ending at index t (inclusive).
inline double window_mean_diameter(const Matrix& Y, std::size_t t, std::size_t window) {
  const std::size_t lo = t + 1 >= window ? t + 1 - window : 0;
  double s = 0.0;
  for (std::size_t k = lo; k <= t; ++k) s += diameter_from_volume(Y(k, 0));
  return s / static_cast<double>(t + 1 - lo);
}

inline Patient draw_patient(const TumorParams& p, std::uint64_t seed, std::uint64_t id) {
  Rng r = Rng(seed, "tumor").fork(id).fork("patient");
  Patient pt;
  pt.coef.rho_g = std::max(0.0, r.normal(p.rho_g, p.rho_g_sd));
  pt.coef.alpha_c = std::max(0.0, r.normal(p.alpha_c, p.alpha_c_sd));
  pt.coef.alpha_r = std::max(0.0, r.normal(p.alpha_r, p.alpha_r_sd));
  pt.coef.beta_r = p.alpha_r > 0.0 ? pt.coef.alpha_r * (p.beta_r / p.alpha_r) : p.beta_r;
  pt.U = r.normal();
  const double d0 = std::exp(r.normal(p.init_diameter_logmean, p.init_diameter_logsd));
  pt.initial_volume = std::clamp(volume_from_diameter(d0), p.min_volume, p.max_volume());
  return pt;
}

/// Chemotherapy concentration after applying the treatment at row t.
inline double chemo_concentration(const Matrix& A, std::size_t t, const TumorParams& p) {
  double c = 0.0;
  for (std::size_t k = 0; k <= t; ++k) c = p.chemo_decay * c + p.chemo_dose * A(k, 0);
  return c;
}

inline Trajectory simulate_trajectory(const TumorParams& p, std::uint64_t seed, std::uint64_t id) {
  const Patient pt = draw_patient(p, seed, id);
  Rng base = Rng(seed, "tumor").fork(id);
  Rng len_rng = base.fork("length"), noise = base.fork("noise"), assign = base.fork("assign");
  const auto T = static_cast<std::size_t>(
      len_rng.uniform_int(static_cast<std::int64_t>(p.T_min), static_cast<std::int64_t>(p.T_max)));
  Trajectory tr;
  tr.id = id;
  tr.Y = Matrix(T, 1);
  tr.X = Matrix(T, 0);
  tr.A = Matrix(T, 2);
  tr.true_propensities = Matrix(T, 2);
  tr.U = pt.U;
  double y = pt.initial_volume, c = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    tr.Y(t, 0) = y;
    const Assignment a = assign_treatment(window_mean_diameter(tr.Y, t, p.window), pt.U, p, assign);
    tr.A(t, 0) = a.chemo;
    tr.A(t, 1) = a.radio;
    tr.true_propensities(t, 0) = a.p_chemo;
    tr.true_propensities(t, 1) = a.p_radio;
    c = p.chemo_decay * c + p.chemo_dose * a.chemo;
    const double eps = p.sigma_eps > 0.0 ? noise.normal(0.0, p.sigma_eps) : 0.0;
    if (t + 1 < T) y = tumor_step(y, c, p.radio_dose * a.radio, eps, pt.U, pt.coef, p);
  }
  return tr;
}

/// N trajectories with ids first_id..first_id+N-1; each is a pure function of (params, seed, id).
inline Dataset simulate_tumor_dataset(const TumorParams& p, std::size_t N, std::uint64_t seed,
                                      std::uint64_t first_id = 0) {
  p.validate();
  Dataset d;
  d.dims = Dims{1, 0, 2, 0};
  d.items.reserve(N);
  for (std::size_t i = 0; i < N; ++i) d.items.push_back(simulate_trajectory(p, seed, first_id + i));
  return d;
}

struct OracleValue {
  double mean = 0.0;
  double se = 0.0;
  std::size_t draws = 0;
};

/// E[Y_{t+tau}[abar] | history up to t] by Monte-Carlo rollouts from the prefix state
/// (volume, chemo concentration, patient coefficients, U). One rollout when sigma_eps = 0.
inline OracleValue counterfactual_oracle(const TumorParams& p, std::uint64_t seed, const Trajectory& tr,
                                         std::size_t t, const Matrix& abar, std::size_t draws) {
  if (draws < 1) throw ContractError("oracle: draws must be >= 1");
  if (t >= tr.length()) throw ContractError("oracle: cut beyond trajectory");
  if (abar.cols != 2) throw DimensionError("oracle: tumor interventions have two treatment columns");
  const Patient pt = draw_patient(p, seed, tr.id);
  const double c_prev = t > 0 ? chemo_concentration(tr.A, t - 1, p) : 0.0;
  const std::size_t n = p.sigma_eps > 0.0 ? draws : 1;
  Rng rng = Rng(seed, "tumor-oracle").fork(tr.id).fork(static_cast<std::uint64_t>(t));
  double sum = 0.0, sq = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double y = tr.Y(t, 0), c = c_prev;
    for (std::size_t s = 0; s < abar.rows; ++s) {
      c = p.chemo_decay * c + p.chemo_dose * abar(s, 0);
      const double eps = p.sigma_eps > 0.0 ? rng.normal(0.0, p.sigma_eps) : 0.0;
      y = tumor_step(y, c, p.radio_dose * abar(s, 1), eps, pt.U, pt.coef, p);
    }
    sum += y;
    sq += y * y;
  }
  OracleValue o;
  o.draws = n;
  o.mean = sum / static_cast<double>(n);
  if (n > 1) {
    const double var = std::max(0.0, (sq - sum * o.mean) / static_cast<double>(n - 1));
    o.se = std::sqrt(var / static_cast<double>(n));
  }
  return o;
}

}  // namespace igc::tumor
