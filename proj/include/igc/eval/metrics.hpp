#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "igc/core/error.hpp"

namespace igc::eval {

/// sqrt(mean (p_i - o_i)^2). With `scale` the errors are divided by it before squaring.
inline double rmse(std::span<const double> pred, std::span<const double> oracle, double scale = 1.0) {
  if (pred.size() != oracle.size())
    throw ContractError("rmse: " + std::to_string(pred.size()) + " predictions for " + std::to_string(oracle.size()) +
                        " oracle values");
  if (pred.empty()) throw ContractError("rmse: no predictions");
  if (!(scale > 0.0)) throw ContractError("rmse: normalization scale must be positive");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = (pred[i] - oracle[i]) / scale;
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(pred.size()));
}

inline double mean(std::span<const double> v) {
  if (v.empty()) throw ContractError("mean of an empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator).
inline double sample_std(std::span<const double> v) {
  if (v.size() < 2) throw ContractError("sample standard deviation needs at least two values");
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Sample std / mean; empty when the mean is zero (undefined).
inline std::optional<double> coefficient_of_variation(std::span<const double> v) {
  if (v.size() < 2) throw ContractError("coefficient of variation needs at least two seeds");
  const double m = mean(v);
  if (m == 0.0) return std::nullopt;
  return sample_std(v) / m;
}

/// (best baseline - ours) / best baseline, in percent; empty when the baseline is zero.
inline std::optional<double> relative_improvement(double best_baseline, double ours) {
  if (best_baseline == 0.0) return std::nullopt;
  return 100.0 * (best_baseline - ours) / best_baseline;
}

/// Ranks starting at 1 with ties sharing their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

/// Pearson correlation of the average ranks.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("spearman: need two equally long samples of size >= 2");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw ContractError("spearman: constant sample");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace igc::eval
