#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "igc/core/rng.hpp"

namespace igc::eval {

/// Static fixture with discrete X: P(X = k) = px[k], pi(k) = P(A = 1 | X = k), and Y | X = k, A = 1
/// taking y_values[k][m] with probability y_probs[k][m]. Outcomes under A = 0 are irrelevant here.
struct StaticDgp {
  std::vector<double> px;
  std::vector<double> pi;
  std::vector<std::vector<double>> y_values, y_probs;

  void validate() const {
    const std::size_t K = px.size();
    if (K == 0 || pi.size() != K || y_values.size() != K || y_probs.size() != K)
      throw ContractError("static dgp: px, pi, y_values and y_probs must have one entry per covariate value");
    double tot = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (px[k] < 0.0) throw ContractError("static dgp: negative covariate probability");
      tot += px[k];
      if (!(pi[k] > 0.0 && pi[k] <= 1.0))
        throw ContractError("static dgp: positivity requires 0 < pi(x) <= 1 (pi(x) = " + std::to_string(pi[k]) + ")");
      if (y_values[k].empty() || y_values[k].size() != y_probs[k].size())
        throw ContractError("static dgp: outcome support and probabilities differ in length");
      double py = 0.0;
      for (double p : y_probs[k]) {
        if (p < 0.0) throw ContractError("static dgp: negative outcome probability");
        py += p;
      }
      if (std::abs(py - 1.0) > 1e-12) throw ContractError("static dgp: outcome probabilities must sum to 1");
    }
    if (std::abs(tot - 1.0) > 1e-12) throw ContractError("static dgp: covariate probabilities must sum to 1");
  }

  double g1(std::size_t k) const {
    double m = 0.0;
    for (std::size_t i = 0; i < y_values[k].size(); ++i) m += y_probs[k][i] * y_values[k][i];
    return m;
  }
  double second_moment(std::size_t k) const {
    double m = 0.0;
    for (std::size_t i = 0; i < y_values[k].size(); ++i) m += y_probs[k][i] * y_values[k][i] * y_values[k][i];
    return m;
  }
};

/// Four covariate values with uneven overlap and a noisy outcome under treatment.
inline StaticDgp reference_static_dgp() {
  return StaticDgp{{0.1, 0.25, 0.4, 0.25},
                   {0.2, 0.9, 0.5, 0.05},
                   {{0.0, 1.0}, {2.0, 3.0, 4.0}, {1.0}, {-1.0, 5.0}},
                   {{0.3, 0.7}, {0.2, 0.5, 0.3}, {1.0}, {0.5, 0.5}}};
}

struct VarianceComparison {
  double var_ipw = 0.0, var_gcomp = 0.0;  // exact, over the fixture's distribution
  double gap = 0.0;                       // var_ipw - var_gcomp
  double gap_decomposition = 0.0;         // E[(1/pi - 1) E[Y^2 | X, 1]] + E[Var[Y | X, 1]]
  double emp_var_ipw = 0.0, emp_var_gcomp = 0.0;  // from n simulated samples
  double se_var_ipw = 0.0, se_var_gcomp = 0.0;    // standard errors of the sample variances (exact moments)
  std::size_t n = 0;
};

namespace detail {

inline double sample_variance(const std::vector<double>& v) {
  const auto n = static_cast<double>(v.size());
  double m = 0.0;
  for (double x : v) m += x;
  m /= n;
  double m2 = 0.0;
  for (double x : v) m2 += (x - m) * (x - m);
  return m2 / (n - 1.0);
}

/// Large-sample standard error sqrt((mu4 - sigma^4) / n) of a sample variance, from the exact
/// distribution given as (value, probability) atoms.
inline double variance_se(const std::vector<std::pair<double, double>>& atoms, std::size_t n) {
  double mu = 0.0;
  for (const auto& [v, p] : atoms) mu += p * v;
  double m2 = 0.0, m4 = 0.0;
  for (const auto& [v, p] : atoms) {
    const double d = (v - mu) * (v - mu);
    m2 += p * d;
    m4 += p * d * d;
  }
  return std::sqrt(std::max(0.0, m4 - m2 * m2) / static_cast<double>(n));
}

}  // namespace detail

/// Variance of the IPW pseudo-outcome Y A / pi(X) against the regression pseudo-outcome g1(X).
inline VarianceComparison variance_comparison(const StaticDgp& dgp, std::size_t n, std::uint64_t seed) {
  dgp.validate();
  if (n < 2) throw ContractError("variance_comparison: need at least two samples");
  VarianceComparison r;
  r.n = n;
  double mean_y1 = 0.0, e_g2 = 0.0, e_ipw2 = 0.0;
  for (std::size_t k = 0; k < dgp.px.size(); ++k) {
    const double g = dgp.g1(k), m2 = dgp.second_moment(k);
    mean_y1 += dgp.px[k] * g;
    e_g2 += dgp.px[k] * g * g;
    e_ipw2 += dgp.px[k] * m2 / dgp.pi[k];
    r.gap_decomposition += dgp.px[k] * ((1.0 / dgp.pi[k] - 1.0) * m2 + (m2 - g * g));
  }
  std::vector<std::pair<double, double>> ipw_atoms, gc_atoms;
  for (std::size_t k = 0; k < dgp.px.size(); ++k) {
    gc_atoms.emplace_back(dgp.g1(k), dgp.px[k]);
    ipw_atoms.emplace_back(0.0, dgp.px[k] * (1.0 - dgp.pi[k]));
    for (std::size_t i = 0; i < dgp.y_values[k].size(); ++i)
      ipw_atoms.emplace_back(dgp.y_values[k][i] / dgp.pi[k], dgp.px[k] * dgp.pi[k] * dgp.y_probs[k][i]);
  }
  r.se_var_ipw = detail::variance_se(ipw_atoms, n);
  r.se_var_gcomp = detail::variance_se(gc_atoms, n);
  r.var_gcomp = e_g2 - mean_y1 * mean_y1;
  r.var_ipw = e_ipw2 - mean_y1 * mean_y1;
  r.gap = r.var_ipw - r.var_gcomp;

  Rng rng(seed, "variance-comparison");
  auto draw = [&](const std::vector<double>& probs) {
    const double u = rng.uniform();
    double c = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      c += probs[i];
      if (u < c) return i;
    }
    return probs.size() - 1;
  };
  std::vector<double> ipw(n), gc(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = draw(dgp.px);
    const bool treated = rng.bernoulli(dgp.pi[k]);
    const double y = dgp.y_values[k][draw(dgp.y_probs[k])];
    ipw[i] = treated ? y / dgp.pi[k] : 0.0;
    gc[i] = dgp.g1(k);
  }
  r.emp_var_ipw = detail::sample_variance(ipw);
  r.emp_var_gcomp = detail::sample_variance(gc);
  return r;
}

}  // namespace igc::eval
