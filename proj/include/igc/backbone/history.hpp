#pragma once

#include <span>
#include <vector>

#include "igc/autodiff/tensor.hpp"
#include "igc/data/dataset.hpp"

namespace igc {

/// Right-padded batch of standardized histories. Step s carries (Y_s, X_s ++ static, A_{s-1}),
/// with A_{-1} = 0, so the encoding at s summarizes exactly H_s = (Y_{<=s}, X_{<=s}, A_{<=s-1}).
struct HistoryBatch {
  std::size_t B = 0, T = 0;
  std::size_t dy = 0, dx = 0, da = 0;  // dx includes broadcast statics
  std::vector<double> y, x, a_prev;    // (B, T, d) row-major
  std::vector<std::size_t> lengths;

  std::size_t at(std::size_t b, std::size_t s, std::size_t d, std::size_t width) const { return (b * T + s) * width + d; }
  bool valid(std::size_t b, std::size_t s) const { return s < lengths[b]; }

  ad::Tensor y_tensor() const { return ad::Tensor::constant({B, T, dy}, y); }
  ad::Tensor x_tensor() const { return ad::Tensor::constant({B, T, dx}, x); }
  ad::Tensor a_tensor() const { return ad::Tensor::constant({B, T, da}, a_prev); }

  /// (B, T, 1) step mask as constant values.
  std::vector<double> mask_column(std::size_t s) const {
    std::vector<double> m(B);
    for (std::size_t b = 0; b < B; ++b) m[b] = valid(b, s) ? 1.0 : 0.0;
    return m;
  }
};

/// Builds a batch from the selected trajectories. `truncate` optionally limits each
/// history to its first `truncate[i]` steps (used for prefix encodings).
inline HistoryBatch make_history_batch(const Dataset& d, std::span<const std::size_t> idx, const Scaler& sc,
                                       std::span<const std::size_t> truncate = {}) {
  HistoryBatch h;
  h.B = idx.size();
  h.dy = d.dims.y;
  h.dx = d.dims.x + d.dims.s;
  h.da = d.dims.a;
  h.lengths.resize(h.B);
  for (std::size_t i = 0; i < h.B; ++i) {
    std::size_t L = d.items.at(idx[i]).length();
    if (!truncate.empty()) {
      if (truncate[i] == 0 || truncate[i] > L) throw ContractError("history prefix length out of range");
      L = truncate[i];
    }
    h.lengths[i] = L;
    h.T = std::max(h.T, L);
  }
  h.y.assign(h.B * h.T * h.dy, 0.0);
  h.x.assign(h.B * h.T * h.dx, 0.0);
  h.a_prev.assign(h.B * h.T * h.da, 0.0);
  for (std::size_t i = 0; i < h.B; ++i) {
    const Trajectory& tr = d.items[idx[i]];
    for (std::size_t s = 0; s < h.lengths[i]; ++s) {
      for (std::size_t c = 0; c < h.dy; ++c) h.y[h.at(i, s, c, h.dy)] = sc.y.forward(tr.Y(s, c), c);
      for (std::size_t c = 0; c < d.dims.x; ++c) h.x[h.at(i, s, c, h.dx)] = sc.x.forward(tr.X(s, c), c);
      for (std::size_t c = 0; c < d.dims.s; ++c)
        h.x[h.at(i, s, d.dims.x + c, h.dx)] = sc.s.forward(tr.statics[c], c);
      if (s > 0)
        for (std::size_t c = 0; c < h.da; ++c) h.a_prev[h.at(i, s, c, h.da)] = tr.A(s - 1, c);
    }
  }
  return h;
}

/// Replaces treatments A_t..A_{t+L-1} of batch row b by the first L rows of `abar`
/// (i.e. the A_prev inputs at steps t+1..t+L).
inline void substitute_treatments(HistoryBatch& h, std::size_t b, std::size_t t, const Matrix& abar, std::size_t L) {
  if (abar.rows < L || abar.cols != h.da) throw ContractError("interventional sequence shorter than substitution range");
  for (std::size_t k = 0; k < L; ++k) {
    const std::size_t s = t + 1 + k;
    if (s >= h.T) break;
    for (std::size_t c = 0; c < h.da; ++c) h.a_prev[h.at(b, s, c, h.da)] = abar(k, c);
  }
}

}  // namespace igc
