#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "igc/autodiff/ops.hpp"
#include "igc/core/rng.hpp"
#include "igc/data/dataset.hpp"

namespace igc::semisynth {

inline constexpr std::size_t kDy = 2;
inline constexpr std::size_t kDa = 3;

/// Outcomes built from a time spline, a per-unit smooth time function and a random function of
/// the covariates; three confounded treatments add windowed effects. Covariates are simulated
/// AR(1) processes; static covariates are i.i.d. normal per unit.
struct SemiSynthParams {
  std::size_t d_x = 5, d_s = 2;
  double ar_coef = 0.8, ar_noise = 0.6;
  std::size_t rff_features = 16;
  double rff_bandwidth = 1.5;   // length scale of the covariate functions
  double time_bandwidth = 8.0;  // length scale of the per-unit time functions
  std::array<double, kDy> alpha_s{1.0, 0.8}, alpha_g{0.5, 0.5}, alpha_f{1.0, 1.0};
  double noise_sd = 0.1;
  std::array<double, kDa> gamma_y{0.8, 0.8, 0.8}, gamma_x{0.8, 0.8, 0.8}, bias{-0.5, -0.5, -0.5};
  std::array<std::size_t, kDa> omega{2, 3, 4};
  std::array<std::array<double, kDy>, kDa> beta{{{-1.0, -0.5}, {-0.8, -1.0}, {-0.6, 0.6}}};
  std::uint64_t function_seed = 1;  // fixes the DGP's random functions across splits
  std::size_t T_min = 20, T_max = 30;

  void validate() const {
    for (auto w : omega)
      if (w < 1) throw ConfigError("dgp.omega", "effect windows must be >= 1");
    if (rff_features < 1) throw ConfigError("dgp.rff_features", "need at least one random feature");
    if (T_min < 2 || T_max < T_min) throw ConfigError("dgp.T_min", "invalid length range");
  }
};

/// Random Fourier feature approximation of a GP sample: f(z) = sqrt(2/R) sum_r w_r cos(<v_r, z> + b_r).
struct RffFunction {
  std::vector<double> freq;  // R x d
  std::vector<double> phase, weight;
  std::size_t dim = 0;

  static RffFunction draw(std::size_t dim, std::size_t R, double bandwidth, Rng& rng) {
    RffFunction f;
    f.dim = dim;
    f.freq.resize(R * dim);
    for (auto& v : f.freq) v = rng.normal(0.0, 1.0 / bandwidth);
    f.phase.resize(R);
    f.weight.resize(R);
    for (std::size_t r = 0; r < R; ++r) {
      f.phase[r] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      f.weight[r] = rng.normal();
    }
    return f;
  }

  double operator()(std::span<const double> z) const {
    const std::size_t R = weight.size();
    double s = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      double dot = phase[r];
      for (std::size_t k = 0; k < dim; ++k) dot += freq[r * dim + k] * z[k];
      s += weight[r] * std::cos(dot);
    }
    return std::sqrt(2.0 / static_cast<double>(R)) * s;
  }
};

/// Cubic B-spline curve with uniform clamped knots on [0, t_max].
struct CubicSpline {
  std::vector<double> coef;
  std::vector<double> knots;

  static CubicSpline draw(std::size_t n_basis, double t_max, Rng& rng) {
    CubicSpline s;
    s.coef.resize(n_basis);
    for (auto& c : s.coef) c = rng.normal();
    const std::size_t inner = n_basis - 3;  // number of knot spans
    for (int k = 0; k < 3; ++k) s.knots.push_back(0.0);
    for (std::size_t k = 0; k <= inner; ++k) s.knots.push_back(t_max * static_cast<double>(k) / inner);
    for (int k = 0; k < 3; ++k) s.knots.push_back(t_max);
    return s;
  }

  double basis(std::size_t i, int p, double t) const {
    if (p == 0) {
      const bool last = knots[i + 1] == knots.back() && t == knots.back() && knots[i] < knots[i + 1];
      return (knots[i] <= t && t < knots[i + 1]) || last ? 1.0 : 0.0;
    }
    double v = 0.0;
    const double d1 = knots[i + p] - knots[i], d2 = knots[i + p + 1] - knots[i + 1];
    if (d1 > 0) v += (t - knots[i]) / d1 * basis(i, p - 1, t);
    if (d2 > 0) v += (knots[i + p + 1] - t) / d2 * basis(i + 1, p - 1, t);
    return v;
  }

  double operator()(double t) const {
    t = std::clamp(t, knots.front(), knots.back());
    double s = 0.0;
    for (std::size_t i = 0; i < coef.size(); ++i) s += coef[i] * basis(i, 3, t);
    return s;
  }
};

/// Random functions shared by every unit of the process.
struct Functions {
  std::array<CubicSpline, 3> splines;
  std::array<RffFunction, kDy> f_y;
  std::array<RffFunction, kDa> f_a;
};

inline Functions make_functions(const SemiSynthParams& p) {
  Rng rng(p.function_seed, "semisynth.functions");
  Functions f;
  for (auto& s : f.splines) s = CubicSpline::draw(6, static_cast<double>(p.T_max), rng);
  for (auto& g : f.f_y) g = RffFunction::draw(p.d_x + p.d_s, p.rff_features, p.rff_bandwidth, rng);
  for (auto& g : f.f_a) g = RffFunction::draw(p.d_x + p.d_s, p.rff_features, p.rff_bandwidth, rng);
  return f;
}

struct Unit {
  std::size_t spline = 0;
  std::array<RffFunction, kDy> g;  // per-unit functions of time
  std::vector<double> statics;
};

inline Unit draw_unit(const SemiSynthParams& p, std::uint64_t seed, std::uint64_t id) {
  Rng r = Rng(seed, "semisynth").fork(id).fork("latent");
  Unit u;
  u.spline = static_cast<std::size_t>(r.uniform_int(0, 2));
  for (auto& g : u.g) g = RffFunction::draw(1, p.rff_features, p.time_bandwidth, r);
  u.statics.resize(p.d_s);
  for (auto& s : u.statics) s = r.normal();
  return u;
}

/// Covariates ++ statics at step t (the input of the covariate functions).
inline std::vector<double> features(const Matrix& X, std::size_t t, const std::vector<double>& statics) {
  std::vector<double> z(X.row(t).begin(), X.row(t).end());
  z.insert(z.end(), statics.begin(), statics.end());
  return z;
}

inline double untreated_outcome(const SemiSynthParams& p, const Functions& f, const Unit& u, std::size_t t,
                                std::span<const double> z, std::size_t j, double eps) {
  const double tt = static_cast<double>(t);
  const double time_arg[1] = {tt};
  return p.alpha_s[j] * f.splines[u.spline](tt) + p.alpha_g[j] * u.g[j](time_arg) + p.alpha_f[j] * f.f_y[j](z) + eps;
}

/// Windowed effect on row t from treatments at rows r < t. A treatment at row r acts on rows
/// r+1..r+1+omega_l with weight 1/(omega_l - lag + 1)^2, lag = t - r - 1; among the treatments
/// active at row r whose window covers t, the minimal p_r^l beta^{l,j} / (...)^2 is taken.
inline double treatment_effect(const SemiSynthParams& p, const Matrix& A, const Matrix& P, std::size_t t,
                               std::size_t j) {
  double total = 0.0;
  for (std::size_t r = 0; r < t; ++r) {
    const std::size_t lag = t - r - 1;
    bool any = false;
    double best = 0.0;
    for (std::size_t l = 0; l < kDa; ++l) {
      if (A(r, l) != 1.0 || lag > p.omega[l]) continue;
      const double w = static_cast<double>(p.omega[l] - lag + 1);
      const double v = P(r, l) * p.beta[l][j] / (w * w);
      if (!any || v < best) best = v;
      any = true;
    }
    if (any) total += best;
  }
  return total;
}

inline double assignment_probability(const SemiSynthParams& p, const Functions& f, const Matrix& Y, std::size_t t,
                                     std::span<const double> z, std::size_t l) {
  // Mean of the last (l+1) values of outcome dimension l mod d_y, up to and including row t.
  const std::size_t n = std::min(l + 1, t + 1);
  double ybar = 0.0;
  for (std::size_t k = 0; k < n; ++k) ybar += Y(t - k, l % kDy);
  ybar /= static_cast<double>(n);
  return ad::sigmoid_scalar(p.gamma_y[l] * ybar + p.gamma_x[l] * f.f_a[l](z) + p.bias[l]);
}

/// Applies treatments to untreated outcomes row by row. `choose(t, l, p)` returns A_t^l given its
/// propensity. Fills Y, A and P (propensities).
inline void apply_treatments(const SemiSynthParams& p, const Functions& f, const Matrix& untreated, const Matrix& X,
                             const std::vector<double>& statics, const std::function<int(std::size_t, std::size_t, double)>& choose,
                             Matrix& Y, Matrix& A, Matrix& P) {
  const std::size_t T = untreated.rows;
  Y = Matrix(T, kDy);
  A = Matrix(T, kDa);
  P = Matrix(T, kDa);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < kDy; ++j) Y(t, j) = untreated(t, j) + treatment_effect(p, A, P, t, j);
    const auto z = features(X, t, statics);
    for (std::size_t l = 0; l < kDa; ++l) {
      P(t, l) = assignment_probability(p, f, Y, t, z, l);
      A(t, l) = choose(t, l, P(t, l));
    }
  }
}

struct Simulated {
  Trajectory traj;
  Matrix untreated;
};

inline Simulated simulate_unit(const SemiSynthParams& p, const Functions& f, std::uint64_t seed, std::uint64_t id) {
  const Unit u = draw_unit(p, seed, id);
  Rng base = Rng(seed, "semisynth").fork(id);
  Rng len_rng = base.fork("length"), cov = base.fork("covariates"), noise = base.fork("noise"),
      assign = base.fork("assign");
  const auto T = static_cast<std::size_t>(
      len_rng.uniform_int(static_cast<std::int64_t>(p.T_min), static_cast<std::int64_t>(p.T_max)));
  Simulated s;
  Trajectory& tr = s.traj;
  tr.id = id;
  tr.statics = u.statics;
  tr.X = Matrix(T, p.d_x);
  const double stationary_sd = p.ar_noise / std::sqrt(std::max(1e-12, 1.0 - p.ar_coef * p.ar_coef));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < p.d_x; ++k)
      tr.X(t, k) = t == 0 ? cov.normal(0.0, stationary_sd) : p.ar_coef * tr.X(t - 1, k) + cov.normal(0.0, p.ar_noise);
  s.untreated = Matrix(T, kDy);
  for (std::size_t t = 0; t < T; ++t) {
    const auto z = features(tr.X, t, u.statics);
    for (std::size_t j = 0; j < kDy; ++j)
      s.untreated(t, j) = untreated_outcome(p, f, u, t, z, j, noise.normal(0.0, p.noise_sd));
  }
  apply_treatments(
      p, f, s.untreated, tr.X, u.statics, [&](std::size_t, std::size_t, double pr) { return assign.bernoulli(pr) ? 1 : 0; },
      tr.Y, tr.A, tr.true_propensities);
  return s;
}

inline Dataset simulate_semisynth_dataset(const SemiSynthParams& p, std::size_t N, std::uint64_t seed,
                                          std::uint64_t first_id = 0) {
  p.validate();
  const Functions f = make_functions(p);
  Dataset d;
  d.dims = Dims{kDy, p.d_x, kDa, p.d_s};
  for (std::size_t i = 0; i < N; ++i) d.items.push_back(simulate_unit(p, f, seed, first_id + i).traj);
  return d;
}

struct OracleValue {
  std::vector<double> mean, se;
  std::size_t draws = 0;
};

/// E[Y_{t+tau}[abar] | history up to t] by Monte-Carlo rollouts: future covariates follow the
/// AR(1) law from X_t, fresh outcome noise, treatments at rows t..t+tau-1 forced to abar and
/// propensities (effect magnitudes) recomputed on the counterfactual path.
inline OracleValue counterfactual_oracle(const SemiSynthParams& p, const Functions& f, std::uint64_t seed,
                                         const Trajectory& tr, std::size_t t, const Matrix& abar, std::size_t draws) {
  if (draws < 1) throw ContractError("oracle: draws must be >= 1");
  if (abar.cols != kDa) throw DimensionError("oracle: intervention must have 3 treatment columns");
  const std::size_t tau = abar.rows;
  const Unit u = draw_unit(p, seed, tr.id);
  Rng rng = Rng(seed, "semisynth-oracle").fork(tr.id).fork(static_cast<std::uint64_t>(t));
  const std::size_t L = t + tau + 1;
  OracleValue o;
  o.draws = draws;
  std::vector<double> sum(kDy, 0.0), sq(kDy, 0.0);
  for (std::size_t n = 0; n < draws; ++n) {
    Matrix X(L, p.d_x), Y(L, kDy), A(L, kDa), P(L, kDa);
    for (std::size_t s = 0; s <= t; ++s) {
      for (std::size_t k = 0; k < p.d_x; ++k) X(s, k) = tr.X(s, k);
      for (std::size_t j = 0; j < kDy; ++j) Y(s, j) = tr.Y(s, j);
      for (std::size_t l = 0; l < kDa; ++l) P(s, l) = tr.true_propensities(s, l);
      if (s < t)
        for (std::size_t l = 0; l < kDa; ++l) A(s, l) = tr.A(s, l);
    }
    for (std::size_t l = 0; l < kDa; ++l) A(t, l) = abar(0, l);
    for (std::size_t s = t + 1; s < L; ++s) {
      for (std::size_t k = 0; k < p.d_x; ++k) X(s, k) = p.ar_coef * X(s - 1, k) + rng.normal(0.0, p.ar_noise);
      const auto z = features(X, s, u.statics);
      for (std::size_t j = 0; j < kDy; ++j)
        Y(s, j) = untreated_outcome(p, f, u, s, z, j, rng.normal(0.0, p.noise_sd)) + treatment_effect(p, A, P, s, j);
      if (s < L - 1)
        for (std::size_t l = 0; l < kDa; ++l) {
          P(s, l) = assignment_probability(p, f, Y, s, z, l);
          A(s, l) = abar(s - t, l);
        }
    }
    for (std::size_t j = 0; j < kDy; ++j) {
      sum[j] += Y(L - 1, j);
      sq[j] += Y(L - 1, j) * Y(L - 1, j);
    }
  }
  o.mean.resize(kDy);
  o.se.assign(kDy, 0.0);
  const double n = static_cast<double>(draws);
  for (std::size_t j = 0; j < kDy; ++j) {
    o.mean[j] = sum[j] / n;
    if (draws > 1) o.se[j] = std::sqrt(std::max(0.0, (sq[j] - sum[j] * o.mean[j]) / (n - 1)) / n);
  }
  return o;
}

}  // namespace igc::semisynth
