#pragma once

#include <functional>
#include <string>
#include <vector>

#include "igc/core/rng.hpp"
#include "igc/data/dataset.hpp"

namespace igc {

struct OracleResult {
  std::vector<double> value;
  double se = 0.0;
  std::string method;
};

using OracleFn = std::function<OracleResult(const Trajectory&, std::size_t t, const Matrix& abar)>;

/// Draws `count` (trajectory, cut) pairs with min_t <= t <= T - 1 - tau and attaches oracle values.
inline std::vector<CapoQuery> sample_queries(const Dataset& d, const Matrix& abar, std::size_t count, Rng& rng,
                                             const OracleFn& oracle, std::size_t min_t = 1) {
  const std::size_t tau = abar.rows;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.items[i].length() >= min_t + tau + 1) eligible.push_back(i);
  if (eligible.empty()) throw ContractError("no trajectory is long enough for the requested horizon");
  std::vector<CapoQuery> out;
  out.reserve(count);
  for (std::size_t q = 0; q < count; ++q) {
    const std::size_t i = eligible[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(eligible.size()) - 1))];
    const Trajectory& tr = d.items[i];
    const auto t = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(min_t),
                                                            static_cast<std::int64_t>(tr.length() - 1 - tau)));
    CapoQuery cq;
    cq.trajectory_id = tr.id;
    cq.t = t;
    cq.a_seq = abar;
    if (oracle) {
      OracleResult r = oracle(tr, t, abar);
      cq.oracle = std::move(r.value);
      cq.oracle_se = r.se;
      cq.oracle_method = std::move(r.method);
    }
    out.push_back(std::move(cq));
  }
  return out;
}

}  // namespace igc
