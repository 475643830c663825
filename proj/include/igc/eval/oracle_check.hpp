#pragma once

#include <string>
#include <vector>

#include "igc/datagen/discrete_scm.hpp"
#include "igc/eval/variance.hpp"

namespace igc::eval {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline double one_step(const scm::DiscreteScm& m, int s, int a) {
  double v = 0.0;
  for (int s2 = 0; s2 < 4; ++s2) v += m.transition(s, a, s2) * scm::DiscreteScm::y_of(s2);
  return v;
}

}  // namespace detail

/// Self-checks of the discrete SCM enumeration oracle and of the IPW / regression variance
/// comparison. Each check recomputes its reference independently.
inline std::vector<CheckResult> oracle_checks(const scm::DiscreteScm& m, std::uint64_t seed) {
  std::vector<CheckResult> out;
  auto add = [&](std::string name, bool ok, std::string detail) { out.push_back({std::move(name), ok, std::move(detail)}); };

  try {
    m.validate();
    add("scm.valid", true, "");
  } catch (const std::exception& e) {
    add("scm.valid", false, e.what());
    return out;
  }

  double worst = 0.0;
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 2; ++a) {
      double tot = 0.0;
      for (int s2 = 0; s2 < 4; ++s2) tot += m.transition(s, a, s2);
      worst = std::max(worst, std::abs(tot - 1.0));
    }
  add("scm.kernels_row_stochastic", worst < 1e-12, "max |row sum - 1| = " + std::to_string(worst));

  double err2 = 0.0;
  for (int s0 = 0; s0 < 4; ++s0)
    for (int a0 = 0; a0 < 2; ++a0)
      for (int a1 = 0; a1 < 2; ++a1) {
        double g = 0.0;
        for (int s1 = 0; s1 < 4; ++s1) g += m.transition(s0, a0, s1) * detail::one_step(m, s1, a1);
        err2 = std::max(err2, std::abs(scm::exact_values(m, s0, {a0, a1}).gformula - g));
      }
  add("scm.two_step_recursion", err2 < 1e-12, "max deviation " + std::to_string(err2));

  Rng rng(seed, "oracle-check");
  double worst_z = 0.0;
  for (int s0 = 0; s0 < 4; ++s0) {
    const std::vector<int> abar{1, 0, 1};
    const auto [mean, se] = scm::mc_gformula(m, s0, abar, 40000, rng);
    worst_z = std::max(worst_z, std::abs(mean - scm::exact_values(m, s0, abar).gformula) / std::max(se, 1e-12));
  }
  add("scm.monte_carlo_agreement", worst_z < 4.0, "max |z| = " + std::to_string(worst_z));

  double gap = 0.0;
  for (int s0 = 0; s0 < 4; ++s0)
    for (int code = 0; code < 4; ++code) {
      const auto v = scm::exact_values(m, s0, {code & 1, code >> 1});
      gap = std::max(gap, std::abs(v.gformula - v.naive));
    }
  add("scm.confounding_gap", gap > 0.02, "max |g-formula - naive| = " + std::to_string(gap));

  const auto null = m.without_treatment_effect();
  double spread = 0.0;
  for (int s0 = 0; s0 < 4; ++s0) {
    const double ref = scm::exact_values(null, s0, {0, 0}).gformula;
    for (int code = 1; code < 4; ++code)
      spread = std::max(spread, std::abs(scm::exact_values(null, s0, {code & 1, code >> 1}).gformula - ref));
  }
  add("scm.null_effect", spread < 1e-12, "max plan dependence " + std::to_string(spread));

  const StaticDgp fx = reference_static_dgp();
  const auto r = variance_comparison(fx, 200000, seed);
  add("variance.dominance", r.var_ipw >= r.var_gcomp && r.gap > 0.0,
      "var_ipw = " + std::to_string(r.var_ipw) + ", var_gcomp = " + std::to_string(r.var_gcomp));
  add("variance.decomposition", std::abs(r.gap - r.gap_decomposition) < 1e-10,
      "gap = " + std::to_string(r.gap) + ", decomposition = " + std::to_string(r.gap_decomposition));
  const double z_ipw = std::abs(r.emp_var_ipw - r.var_ipw) / r.se_var_ipw;
  const double z_gc = std::abs(r.emp_var_gcomp - r.var_gcomp) / r.se_var_gcomp;
  add("variance.empirical_agreement", z_ipw < 3.0 && z_gc < 3.0,
      "|z_ipw| = " + std::to_string(z_ipw) + ", |z_gcomp| = " + std::to_string(z_gc));
  const StaticDgp half{{0.2, 0.5, 0.3}, {0.5, 0.5, 0.5}, {{1.0}, {0.0}, {1.0}}, {{1.0}, {1.0}, {1.0}}};
  const auto h = variance_comparison(half, 2, seed);
  add("variance.half_propensity_gap", std::abs(h.gap - 0.5) < 1e-12, "gap = " + std::to_string(h.gap) + ", q = 0.5");
  return out;
}

}  // namespace igc::eval
