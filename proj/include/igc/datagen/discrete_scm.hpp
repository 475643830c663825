#pragma once

#include <array>
#include <cmath>
#include <functional>

#include "igc/core/rng.hpp"
#include "igc/data/dataset.hpp"

namespace igc::scm {

/// Binary covariate X, binary outcome Y, one binary treatment A. The Markov state at step s
/// is (x_s, y_s), indexed 2x + y. Dynamics:
///   (x_0, y_0) ~ init;   A_s ~ Ber(propensity[state_s]);
///   x_{s+1} ~ Ber(px[x_s][a_s]);   y_{s+1} ~ Ber(py[x_{s+1}][y_s][a_s]).
/// X_{s+1} is moved by A_s and then drives both A_{s+1} and Y_{s+2}: time-varying confounding.
struct DiscreteScm {
  std::array<double, 4> init{0.4, 0.1, 0.3, 0.2};
  std::array<double, 4> propensity{0.15, 0.3, 0.7, 0.85};
  std::array<std::array<double, 2>, 2> px{{{0.2, 0.7}, {0.4, 0.9}}};
  std::array<std::array<std::array<double, 2>, 2>, 2> py{{{{{{0.1, 0.4}}, {{0.3, 0.6}}}}, {{{{0.6, 0.9}}, {{0.7, 0.95}}}}}};
  std::size_t T = 5;

  static int state(int x, int y) { return 2 * x + y; }
  static int x_of(int s) { return s / 2; }
  static int y_of(int s) { return s % 2; }

  /// p(state' | state, a).
  double transition(int s, int a, int s2) const {
    const int x = x_of(s), y = y_of(s), x2 = x_of(s2), y2 = y_of(s2);
    const double pxv = px[x][a];
    const double pyv = py[x2][y][a];
    return (x2 ? pxv : 1 - pxv) * (y2 ? pyv : 1 - pyv);
  }
  double prop(int s, int a) const { return a ? propensity[s] : 1 - propensity[s]; }

  void validate() const {
    double tot = 0.0;
    for (double p : init) {
      if (p < 0) throw ConfigError("dgp.init", "negative probability");
      tot += p;
    }
    if (std::abs(tot - 1.0) > 1e-12) throw ConfigError("dgp.init", "initial distribution must sum to 1");
    for (double p : propensity)
      if (!(p > 0.0 && p < 1.0)) throw ConfigError("dgp.propensity", "positivity requires propensities in (0, 1)");
    for (auto& r : px)
      for (double p : r)
        if (p < 0 || p > 1) throw ConfigError("dgp.px", "probability outside [0, 1]");
    for (auto& a : py)
      for (auto& r : a)
        for (double p : r)
          if (p < 0 || p > 1) throw ConfigError("dgp.py", "probability outside [0, 1]");
    if (T < 2) throw ConfigError("dgp.T", "need at least two steps");
  }

  /// The same dynamics with treatment-independent kernels (null effect fixture).
  DiscreteScm without_treatment_effect() const {
    DiscreteScm s = *this;
    for (auto& r : s.px) r[1] = r[0];
    for (auto& a : s.py)
      for (auto& r : a) r[1] = r[0];
    return s;
  }
};

inline int state_at(const Trajectory& tr, std::size_t t) {
  return DiscreteScm::state(static_cast<int>(tr.X(t, 0)), static_cast<int>(tr.Y(t, 0)));
}

inline Trajectory simulate_trajectory(const DiscreteScm& m, std::uint64_t seed, std::uint64_t id) {
  Rng r = Rng(seed, "scm").fork(id);
  Trajectory tr;
  tr.id = id;
  tr.Y = Matrix(m.T, 1);
  tr.X = Matrix(m.T, 1);
  tr.A = Matrix(m.T, 1);
  tr.true_propensities = Matrix(m.T, 1);
  double u = r.uniform(), acc = 0.0;
  int s = 3;
  for (int k = 0; k < 4; ++k) {
    acc += m.init[k];
    if (u < acc) {
      s = k;
      break;
    }
  }
  for (std::size_t t = 0; t < m.T; ++t) {
    tr.X(t, 0) = DiscreteScm::x_of(s);
    tr.Y(t, 0) = DiscreteScm::y_of(s);
    const double p = m.propensity[s];
    const int a = r.bernoulli(p) ? 1 : 0;
    tr.A(t, 0) = a;
    tr.true_propensities(t, 0) = p;
    const int x2 = r.bernoulli(m.px[DiscreteScm::x_of(s)][a]) ? 1 : 0;
    const int y2 = r.bernoulli(m.py[x2][DiscreteScm::y_of(s)][a]) ? 1 : 0;
    s = DiscreteScm::state(x2, y2);
  }
  return tr;
}

inline Dataset simulate_dataset(const DiscreteScm& m, std::size_t N, std::uint64_t seed, std::uint64_t first_id = 0) {
  m.validate();
  Dataset d;
  d.dims = Dims{1, 1, 1, 0};
  for (std::size_t i = 0; i < N; ++i) d.items.push_back(simulate_trajectory(m, seed, first_id + i));
  return d;
}

inline constexpr std::size_t kMaxPaths = 1000000;

/// Enumerates every path of future states s_{t+1..t+tau} and treatments A_{t+1..t+tau-1}.
/// `visit(weight_under_kernel_only, propensity_weight, final_state, treatments)` is called for
/// each path; the kernel weight uses treatment `fixed(k)` at step k when fixed(k) >= 0, and the
/// enumerated treatment otherwise.
inline void enumerate_paths(const DiscreteScm& m, int s0, std::size_t tau,
                            const std::function<int(std::size_t)>& fixed,
                            const std::function<void(double, double, int, const std::vector<int>&)>& visit) {
  double count = std::pow(4.0, static_cast<double>(tau)) * std::pow(2.0, static_cast<double>(tau));
  if (count > static_cast<double>(kMaxPaths)) throw ContractError("scm oracle: more than 1e6 paths to enumerate");
  std::vector<int> acts(tau, 0);
  std::function<void(std::size_t, int, double, double)> rec = [&](std::size_t k, int s, double w, double pw) {
    if (k == tau) {
      visit(w, pw, s, acts);
      return;
    }
    for (int a = 0; a < 2; ++a) {
      const int f = fixed(k);
      if (f >= 0 && f != a) continue;
      acts[k] = a;
      // Propensity of the enumerated treatment is tracked for steps after the cut.
      const double pk = k == 0 ? 1.0 : m.prop(s, a);
      for (int s2 = 0; s2 < 4; ++s2) {
        const double tr = m.transition(s, a, s2);
        if (tr == 0.0) continue;
        rec(k + 1, s2, w * tr, pw * pk);
      }
    }
  };
  rec(0, s0, 1.0, 1.0);
}

struct ScmValues {
  double gformula = 0.0;       // E[Y_{t+tau}[abar] | h_t]
  double naive = 0.0;          // E[Y_{t+tau} | h_t, A_{t:t+tau-1} = abar]
  double observational = 0.0;  // E[Y_{t+tau} | h_t, A_t = abar_0], later treatments by the policy
};

/// Exact values by path enumeration from the state at the cut.
inline ScmValues exact_values(const DiscreteScm& m, int s0, const std::vector<int>& abar) {
  const std::size_t tau = abar.size();
  if (tau == 0) throw ContractError("scm oracle: empty intervention");
  ScmValues v;
  enumerate_paths(
      m, s0, tau, [&](std::size_t k) { return abar[k]; },
      [&](double w, double, int s, const std::vector<int>&) { v.gformula += w * DiscreteScm::y_of(s); });
  double num = 0.0, den = 0.0;
  enumerate_paths(
      m, s0, tau, [&](std::size_t k) { return abar[k]; },
      [&](double w, double pw, int s, const std::vector<int>&) {
        num += w * pw * DiscreteScm::y_of(s);
        den += w * pw;
      });
  v.naive = num / den;
  enumerate_paths(
      m, s0, tau, [&](std::size_t k) { return k == 0 ? abar[0] : -1; },
      [&](double w, double pw, int s, const std::vector<int>&) { v.observational += w * pw * DiscreteScm::y_of(s); });
  return v;
}

inline ScmValues exact_values(const DiscreteScm& m, const Trajectory& tr, std::size_t t, const Matrix& abar) {
  if (t >= tr.length()) throw ContractError("scm oracle: cut beyond trajectory");
  std::vector<int> a(abar.rows);
  for (std::size_t k = 0; k < abar.rows; ++k) a[k] = static_cast<int>(abar(k, 0));
  return exact_values(m, state_at(tr, t), a);
}

/// Monte-Carlo estimate of the G-formula value: forward simulation under forced treatments.
inline std::pair<double, double> mc_gformula(const DiscreteScm& m, int s0, const std::vector<int>& abar,
                                             std::size_t draws, Rng& rng) {
  if (draws < 1) throw ContractError("oracle: draws must be >= 1");
  double sum = 0.0;
  for (std::size_t n = 0; n < draws; ++n) {
    int s = s0;
    for (int a : abar) {
      const int x2 = rng.bernoulli(m.px[DiscreteScm::x_of(s)][a]) ? 1 : 0;
      const int y2 = rng.bernoulli(m.py[x2][DiscreteScm::y_of(s)][a]) ? 1 : 0;
      s = DiscreteScm::state(x2, y2);
    }
    sum += DiscreteScm::y_of(s);
  }
  const double mean = sum / static_cast<double>(draws);
  return {mean, std::sqrt(mean * (1 - mean) / static_cast<double>(draws))};
}

}  // namespace igc::scm
