#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "igc/core/error.hpp"

namespace igc {

/// Row-major dense matrix: one row per time step.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  bool operator==(const Matrix&) const = default;
};

/// One unit's observed path. Row s of A is the treatment decided after observing Y_s, X_s.
struct Trajectory {
  std::uint64_t id = 0;
  Matrix Y, X, A;
  std::vector<double> statics;
  Matrix true_propensities;
  double U = 0.0;

  std::size_t length() const { return Y.rows; }
  bool operator==(const Trajectory&) const = default;
};

struct Dims {
  std::size_t y = 1, x = 0, a = 1, s = 0;
  bool operator==(const Dims&) const = default;
};

struct Dataset {
  Dims dims;
  std::vector<Trajectory> items;

  std::size_t size() const { return items.size(); }

  void validate() const {
    for (const auto& tr : items) {
      const std::size_t T = tr.length();
      if (T == 0) throw ContractError("trajectory " + std::to_string(tr.id) + " is empty");
      if (tr.Y.cols != dims.y || tr.X.cols != dims.x || tr.A.cols != dims.a || tr.statics.size() != dims.s)
        throw DimensionError("trajectory " + std::to_string(tr.id) + " has inconsistent stream widths");
      if (tr.X.rows != T || tr.A.rows != T)
        throw DimensionError("trajectory " + std::to_string(tr.id) + " has inconsistent stream lengths");
      for (double a : tr.A.data)
        if (a != 0.0 && a != 1.0) throw ContractError("treatments must be binary");
    }
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset d;
    d.dims = dims;
    for (auto i : idx) d.items.push_back(items.at(i));
    return d;
  }
};

/// Index of a trajectory id inside a dataset.
inline std::size_t find_trajectory(const Dataset& d, std::uint64_t id) {
  if (id < d.size() && d.items[id].id == id) return id;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.items[i].id == id) return i;
  throw ContractError("unknown trajectory id " + std::to_string(id));
}

/// Interventional query: history up to `t`, treatments a_seq (tau x d_a) applied at t..t+tau-1.
struct CapoQuery {
  std::uint64_t trajectory_id = 0;
  std::size_t t = 0;
  Matrix a_seq;
  std::vector<double> oracle;  // d_y values; empty when unknown
  double oracle_se = 0.0;
  std::string oracle_method;

  std::size_t tau() const { return a_seq.rows; }
};

/// Per-dimension standardization fitted on training data.
struct Standardizer {
  std::vector<double> mean, sd;

  static Standardizer fit_rows(const std::vector<const Matrix*>& mats, std::size_t cols) {
    Standardizer s;
    s.mean.assign(cols, 0.0);
    s.sd.assign(cols, 1.0);
    std::vector<double> sum(cols, 0.0), sq(cols, 0.0);
    double n = 0.0;
    for (const Matrix* m : mats)
      for (std::size_t r = 0; r < m->rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          sum[c] += (*m)(r, c);
          sq[c] += (*m)(r, c) * (*m)(r, c);
        }
        n += 1.0;
      }
    if (n == 0.0) return s;
    for (std::size_t c = 0; c < cols; ++c) {
      s.mean[c] = sum[c] / n;
      const double var = std::max(0.0, sq[c] / n - s.mean[c] * s.mean[c]);
      const double sd = std::sqrt(var);
      s.sd[c] = sd > 1e-8 * std::max(1.0, std::abs(s.mean[c])) ? sd : 1.0;
    }
    return s;
  }

  double forward(double v, std::size_t c) const { return (v - mean[c]) / sd[c]; }
  double inverse(double v, std::size_t c) const { return v * sd[c] + mean[c]; }
  bool operator==(const Standardizer&) const = default;
};

struct Scaler {
  Standardizer y, x, s;

  static Scaler fit(const Dataset& d) {
    Scaler sc;
    std::vector<const Matrix*> ys, xs;
    Matrix statics(d.size(), d.dims.s);
    for (std::size_t i = 0; i < d.size(); ++i) {
      ys.push_back(&d.items[i].Y);
      xs.push_back(&d.items[i].X);
      for (std::size_t c = 0; c < d.dims.s; ++c) statics(i, c) = d.items[i].statics[c];
    }
    sc.y = Standardizer::fit_rows(ys, d.dims.y);
    sc.x = Standardizer::fit_rows(xs, d.dims.x);
    sc.s = Standardizer::fit_rows({&statics}, d.dims.s);
    return sc;
  }

  static Scaler identity(const Dims& dims) {
    Scaler sc;
    sc.y = {std::vector<double>(dims.y, 0.0), std::vector<double>(dims.y, 1.0)};
    sc.x = {std::vector<double>(dims.x, 0.0), std::vector<double>(dims.x, 1.0)};
    sc.s = {std::vector<double>(dims.s, 0.0), std::vector<double>(dims.s, 1.0)};
    return sc;
  }
  bool operator==(const Scaler&) const = default;
};

}  // namespace igc
