#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "igc/autodiff/tensor.hpp"
#include "igc/core/rng.hpp"

namespace igc::ad {

namespace detail {

[[noreturn]] inline void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

// Index maps for numpy-style broadcasting. An empty map means identity.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> ia, ib;
};

inline std::vector<std::size_t> broadcast_map(const Shape& in, const Shape& out) {
  if (in == out) return {};
  const std::size_t r = out.size();
  const std::size_t n = numel(out);
  const std::size_t nin = numel(in);
  // Suffix broadcast (bias rows, masks over leading dims): repeat every nin elements.
  if (in.size() <= r && std::equal(in.rbegin(), in.rend(), out.rbegin())) {
    std::vector<std::size_t> m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = i % nin;
    return m;
  }
  std::vector<std::size_t> stride(r, 0);
  std::size_t s = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t d = in.size() - 1 - k;
    const std::size_t od = r - 1 - k;
    stride[od] = in[d] == 1 ? 0 : s;
    s *= in[d];
  }
  std::vector<std::size_t> m(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = off;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      off += stride[d];
      if (idx[d] < out[d]) break;
      off -= stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return m;
}

inline Broadcast broadcast(const char* op, const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t k = 0; k < r; ++k) {
    const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) shape_error(op, a, b);
    out[r - 1 - k] = std::max(da, db);
    if (da == 0 || db == 0) out[r - 1 - k] = 0;
  }
  Broadcast bc;
  bc.ia = broadcast_map(a, out);
  bc.ib = broadcast_map(b, out);
  bc.out = std::move(out);
  return bc;
}

inline std::size_t at(const std::vector<std::size_t>& m, std::size_t i) { return m.empty() ? i : m[i]; }

// C[M,N] += A[M,K] * B[K,N]
inline void gemm_nn(std::size_t M, std::size_t K, std::size_t N, const double* A, const double* B, double* C) {
  for (std::size_t i = 0; i < M; ++i) {
    double* c = C + i * N;
    const double* a = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const double av = a[k];
      if (av == 0.0) continue;
      const double* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// dA[M,K] += dC[M,N] * B[K,N]^T
inline void gemm_nt(std::size_t M, std::size_t K, std::size_t N, const double* dC, const double* B, double* dA) {
  for (std::size_t i = 0; i < M; ++i) {
    const double* g = dC + i * N;
    double* da = dA + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const double* b = B + k * N;
      double acc = 0.0;
      for (std::size_t j = 0; j < N; ++j) acc += g[j] * b[j];
      da[k] += acc;
    }
  }
}

// dB[K,N] += A[M,K]^T * dC[M,N]
inline void gemm_tn(std::size_t M, std::size_t K, std::size_t N, const double* A, const double* dC, double* dB) {
  for (std::size_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    const double* g = dC + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const double av = a[k];
      if (av == 0.0) continue;
      double* db = dB + k * N;
      for (std::size_t j = 0; j < N; ++j) db[j] += av * g[j];
    }
  }
}

inline std::size_t normalize_axis(long axis, std::size_t rank, const char* op) {
  const long r = static_cast<long>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError(std::string(op) + ": axis out of range");
  return static_cast<std::size_t>(axis);
}

template <class F, class D>
Tensor unary(OpKind kind, const Tensor& x, F f, D dfdx_from_xy) {
  const auto xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return make_result(kind, x.shape(), std::move(y), {x}, [dfdx_from_xy](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx_from_xy(p.value[i], self.value[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// (..., m, k) x (k, n) -> (..., m, n), or batched (B, m, k) x (B, k, n) -> (B, m, n).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) detail::shape_error("matmul", a.shape(), b.shape());
  const std::size_t K = a.shape().back();
  if (b.rank() == 2) {
    if (b.dim(0) != K) detail::shape_error("matmul", a.shape(), b.shape());
    const std::size_t N = b.dim(1);
    const std::size_t M = a.size() / std::max<std::size_t>(K, 1);
    Shape out = a.shape();
    out.back() = N;
    std::vector<double> c(M * N, 0.0);
    detail::gemm_nn(M, K, N, a.values().data(), b.values().data(), c.data());
    return make_result(OpKind::matmul, std::move(out), std::move(c), {a, b}, [M, K, N](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) detail::gemm_nt(M, K, N, self.grad.data(), pb.value.data(), pa.ensure_grad().data());
      if (pb.requires_grad) detail::gemm_tn(M, K, N, pa.value.data(), self.grad.data(), pb.ensure_grad().data());
    });
  }
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || b.dim(1) != K) {
    detail::shape_error("matmul", a.shape(), b.shape());
  }
  const std::size_t B = a.dim(0), M = a.dim(1), N = b.dim(2);
  std::vector<double> c(B * M * N, 0.0);
  for (std::size_t s = 0; s < B; ++s) {
    detail::gemm_nn(M, K, N, a.values().data() + s * M * K, b.values().data() + s * K * N, c.data() + s * M * N);
  }
  return make_result(OpKind::matmul, {B, M, N}, std::move(c), {a, b}, [B, M, K, N](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t s = 0; s < B; ++s) {
      const double* g = self.grad.data() + s * M * N;
      if (pa.requires_grad) {
        detail::gemm_nt(M, K, N, g, pb.value.data() + s * K * N, pa.ensure_grad().data() + s * M * K);
      }
      if (pb.requires_grad) {
        detail::gemm_tn(M, K, N, pa.value.data() + s * M * K, g, pb.ensure_grad().data() + s * K * N);
      }
    }
  });
}

/// Swaps the last two axes.
inline Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("transpose: rank < 2");
  const std::size_t R = a.dim(a.rank() - 2), C = a.dim(a.rank() - 1);
  const std::size_t B = a.size() / std::max<std::size_t>(R * C, 1);
  Shape out = a.shape();
  std::swap(out[out.size() - 1], out[out.size() - 2]);
  std::vector<double> y(a.size());
  const auto x = a.values();
  for (std::size_t s = 0; s < B; ++s)
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j) y[s * R * C + j * R + i] = x[s * R * C + i * C + j];
  return make_result(OpKind::transpose, std::move(out), std::move(y), {a}, [B, R, C](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t s = 0; s < B; ++s)
      for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j) g[s * R * C + i * C + j] += self.grad[s * R * C + j * R + i];
  });
}

// ---------------------------------------------------------------------------
// Broadcasting arithmetic

inline Tensor add(const Tensor& a, const Tensor& b) {
  auto bc = detail::broadcast("add", a.shape(), b.shape());
  const auto av = a.values(), bv = b.values();
  std::vector<double> y(numel(bc.out));
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[detail::at(bc.ia, i)] + bv[detail::at(bc.ib, i)];
  return make_result(OpKind::add, bc.out, std::move(y), {a, b},
                     [ia = std::move(bc.ia), ib = std::move(bc.ib)](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       if (pa.requires_grad) {
                         auto& g = pa.ensure_grad();
                         for (std::size_t i = 0; i < self.grad.size(); ++i) g[detail::at(ia, i)] += self.grad[i];
                       }
                       if (pb.requires_grad) {
                         auto& g = pb.ensure_grad();
                         for (std::size_t i = 0; i < self.grad.size(); ++i) g[detail::at(ib, i)] += self.grad[i];
                       }
                     });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  auto bc = detail::broadcast("sub", a.shape(), b.shape());
  const auto av = a.values(), bv = b.values();
  std::vector<double> y(numel(bc.out));
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[detail::at(bc.ia, i)] - bv[detail::at(bc.ib, i)];
  return make_result(OpKind::sub, bc.out, std::move(y), {a, b},
                     [ia = std::move(bc.ia), ib = std::move(bc.ib)](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       if (pa.requires_grad) {
                         auto& g = pa.ensure_grad();
                         for (std::size_t i = 0; i < self.grad.size(); ++i) g[detail::at(ia, i)] += self.grad[i];
                       }
                       if (pb.requires_grad) {
                         auto& g = pb.ensure_grad();
                         for (std::size_t i = 0; i < self.grad.size(); ++i) g[detail::at(ib, i)] -= self.grad[i];
                       }
                     });
}

/// Elementwise product with broadcasting.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  auto bc = detail::broadcast("mul", a.shape(), b.shape());
  const auto av = a.values(), bv = b.values();
  std::vector<double> y(numel(bc.out));
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[detail::at(bc.ia, i)] * bv[detail::at(bc.ib, i)];
  return make_result(OpKind::mul, bc.out, std::move(y), {a, b},
                     [ia = std::move(bc.ia), ib = std::move(bc.ib)](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       if (pa.requires_grad) {
                         auto& g = pa.ensure_grad();
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           g[detail::at(ia, i)] += self.grad[i] * pb.value[detail::at(ib, i)];
                       }
                       if (pb.requires_grad) {
                         auto& g = pb.ensure_grad();
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           g[detail::at(ib, i)] += self.grad[i] * pa.value[detail::at(ia, i)];
                       }
                     });
}

inline Tensor scale(const Tensor& a, double c) {
  return detail::unary(
      OpKind::scale, a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  return detail::unary(
      OpKind::add_scalar, a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) detail::shape_error("reshape", a.shape(), shape);
  std::vector<double> y(a.values().begin(), a.values().end());
  return make_result(OpKind::reshape, std::move(shape), std::move(y), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

inline Tensor concat(const std::vector<Tensor>& parts, long axis_in) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  const std::size_t axis = detail::normalize_axis(axis_in, s0.size(), "concat");
  Shape out = s0;
  out[axis] = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.rank() != s0.size()) detail::shape_error("concat", s0, p.shape());
    for (std::size_t d = 0; d < s0.size(); ++d)
      if (d != axis && p.dim(d) != s0[d]) detail::shape_error("concat", s0, p.shape());
    out[axis] += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
  for (const auto& p : parts) widths.push_back(p.dim(axis) * inner);
  const std::size_t row = out[axis] * inner;
  std::vector<double> y(outer * row);
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.data() + o * widths[k], widths[k], y.data() + o * row + col);
    col += widths[k];
  }
  return make_result(OpKind::concat, std::move(out), std::move(y), parts, [outer, row, widths](Node& self) {
    std::size_t c = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (p.requires_grad) {
        auto& g = p.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < widths[k]; ++j) g[o * widths[k] + j] += self.grad[o * row + c + j];
      }
      c += widths[k];
    }
  });
}

/// Half-open range [begin, end) along `axis`.
inline Tensor slice(const Tensor& a, long axis_in, std::size_t begin, std::size_t end) {
  const std::size_t axis = detail::normalize_axis(axis_in, a.rank(), "slice");
  if (begin > end || end > a.dim(axis)) throw DimensionError("slice: range out of bounds for " + to_string(a.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.dim(d);
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
  const std::size_t src_row = a.dim(axis) * inner;
  const std::size_t w = (end - begin) * inner;
  const std::size_t off = begin * inner;
  Shape out = a.shape();
  out[axis] = end - begin;
  std::vector<double> y(outer * w);
  const auto v = a.values();
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(v.data() + o * src_row + off, w, y.data() + o * w);
  return make_result(OpKind::slice, std::move(out), std::move(y), {a}, [outer, src_row, w, off](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < w; ++j) g[o * src_row + off + j] += self.grad[o * w + j];
  });
}

/// Selects items along the first axis (with repetition allowed).
inline Tensor index_select(const Tensor& a, std::vector<std::size_t> indices) {
  if (a.rank() < 1) throw DimensionError("index_select: scalar input");
  const std::size_t inner = a.size() / std::max<std::size_t>(a.dim(0), 1);
  Shape out = a.shape();
  out[0] = indices.size();
  std::vector<double> y(indices.size() * inner);
  const auto v = a.values();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= a.dim(0)) throw DimensionError("index_select: index out of range");
    std::copy_n(v.data() + indices[r] * inner, inner, y.data() + r * inner);
  }
  return make_result(OpKind::index_select, std::move(out), std::move(y), {a},
                     [inner, idx = std::move(indices)](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       auto& g = p.ensure_grad();
                       for (std::size_t r = 0; r < idx.size(); ++r)
                         for (std::size_t j = 0; j < inner; ++j) g[idx[r] * inner + j] += self.grad[r * inner + j];
                     });
}

/// Relative-position logit bias: table (..., 2L+1) -> (..., T, T) with
/// out[..., i, j] = table[..., clamp(j - i, -L, L) + L].
inline Tensor rel_position_bias(const Tensor& table, std::size_t T) {
  if (table.rank() < 1 || table.shape().back() % 2 == 0) throw DimensionError("rel_position_bias: width must be odd");
  const std::size_t width = table.shape().back();
  const long L = static_cast<long>(width / 2);
  const std::size_t groups = table.size() / width;
  Shape out(table.shape().begin(), table.shape().end() - 1);
  out.push_back(T);
  out.push_back(T);
  std::vector<std::size_t> pos(T * T);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j) {
      long d = static_cast<long>(j) - static_cast<long>(i);
      d = std::clamp(d, -L, L);
      pos[i * T + j] = static_cast<std::size_t>(d + L);
    }
  std::vector<double> y(groups * T * T);
  const auto v = table.values();
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t k = 0; k < T * T; ++k) y[g * T * T + k] = v[g * width + pos[k]];
  return make_result(OpKind::rel_bias, std::move(out), std::move(y), {table},
                     [groups, width, T, pos = std::move(pos)](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       auto& g = p.ensure_grad();
                       for (std::size_t q = 0; q < groups; ++q)
                         for (std::size_t k = 0; k < T * T; ++k) g[q * width + pos[k]] += self.grad[q * T * T + k];
                     });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

inline double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(OpKind::sigmoid, x, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary(
      OpKind::tanh, x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary(
      OpKind::relu, x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

inline Tensor elu(const Tensor& x, double alpha = 1.0) {
  return detail::unary(
      OpKind::elu, x, [alpha](double v) { return v > 0 ? v : alpha * std::expm1(v); },
      [alpha](double v, double y) { return v > 0 ? 1.0 : y + alpha; });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary(
      OpKind::exp, x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
  if (x.size() == 0) throw DomainError("log: empty input");
  for (double v : x.values())
    if (!(v > 0.0)) throw DomainError("log: non-positive input");
  return detail::unary(
      OpKind::log, x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Tensor square(const Tensor& x) {
  return detail::unary(
      OpKind::square, x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

// ---------------------------------------------------------------------------
// Normalizations

inline Tensor softmax(const Tensor& x, long axis_in = -1) {
  const std::size_t axis = detail::normalize_axis(axis_in, x.rank(), "softmax");
  const std::size_t n = x.dim(axis);
  if (n == 0) throw DomainError("softmax: empty axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const auto v = x.values();
  std::vector<double> y(v.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n; ++k) m = std::max(m, v[base + k * inner]);
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += (y[base + k * inner] = std::exp(v[base + k * inner] - m));
      for (std::size_t k = 0; k < n; ++k) y[base + k * inner] /= s;
    }
  return make_result(OpKind::softmax, x.shape(), std::move(y), {x}, [outer, inner, n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += self.grad[base + k * inner] * self.value[base + k * inner];
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t i = base + k * inner;
          g[i] += self.value[i] * (self.grad[i] - dot);
        }
      }
  });
}

/// Normalizes each row over the last axis to zero mean and unit variance (no affine part).
inline Tensor layer_norm(const Tensor& x, double eps = 1e-5) {
  if (x.rank() == 0 || x.shape().back() == 0) throw DomainError("layer_norm: empty axis");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  const auto v = x.values();
  std::vector<double> y(v.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = v.data() + r * n;
    double mu = 0.0;
    for (std::size_t k = 0; k < n; ++k) mu += xr[k];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t k = 0; k < n; ++k) var += (xr[k] - mu) * (xr[k] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t k = 0; k < n; ++k) y[r * n + k] = (xr[k] - mu) * inv_std[r];
  }
  return make_result(OpKind::layer_norm, x.shape(), std::move(y), {x},
                     [rows, n, inv_std = std::move(inv_std)](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       auto& g = p.ensure_grad();
                       const double dn = static_cast<double>(n);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* gy = self.grad.data() + r * n;
                         const double* yh = self.value.data() + r * n;
                         double mg = 0.0, mgy = 0.0;
                         for (std::size_t k = 0; k < n; ++k) {
                           mg += gy[k];
                           mgy += gy[k] * yh[k];
                         }
                         mg /= dn;
                         mgy /= dn;
                         for (std::size_t k = 0; k < n; ++k) g[r * n + k] += inv_std[r] * (gy[k] - mg - yh[k] * mgy);
                       }
                     });
}

/// Inverted dropout: in training mode each element is zeroed with probability p
/// and survivors are scaled by 1/(1-p). Identity in eval mode or for p = 0.
inline Tensor dropout(const Tensor& x, double p, bool training, Rng* rng) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: rate must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  if (rng == nullptr) throw ContractError("dropout: training mode requires an rng stream");
  const double keep = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = rng->uniform() >= p ? keep : 0.0;
  const auto v = x.values();
  std::vector<double> y(v.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = v[i] * mask[i];
  return make_result(OpKind::dropout, x.shape(), std::move(y), {x}, [mask = std::move(mask)](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result(OpKind::sum, {}, {s}, {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (auto& gi : g) gi += self.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw DomainError("mean: empty input");
  double s = 0.0;
  for (double v : x.values()) s += v;
  const double n = static_cast<double>(x.size());
  return make_result(OpKind::mean, {}, {s / n}, {x}, [n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (auto& gi : g) gi += self.grad[0] / n;
  });
}

/// mean((pred - target)^2)
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) detail::shape_error("mse_loss", pred.shape(), target.shape());
  if (pred.size() == 0) throw DomainError("mse_loss: empty input");
  const auto p = pred.values(), t = target.values();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  const double n = static_cast<double>(p.size());
  return make_result(OpKind::mse_loss, {}, {s / n}, {pred, target}, [n](Node& self) {
    Node& pp = *self.parents[0];
    Node& pt = *self.parents[1];
    const double c = 2.0 * self.grad[0] / n;
    for (std::size_t i = 0; i < pp.value.size(); ++i) {
      const double d = c * (pp.value[i] - pt.value[i]);
      if (pp.requires_grad) pp.ensure_grad()[i] += d;
      if (pt.requires_grad) pt.ensure_grad()[i] -= d;
    }
  });
}

/// sum_i w_i (pred_i - target_i)^2 with constant weights of the same shape. Entries with zero
/// weight are masked out entirely, so non-finite values there do not propagate.
inline Tensor weighted_sse(const Tensor& pred, const Tensor& target, std::vector<double> weights) {
  if (pred.shape() != target.shape()) detail::shape_error("weighted_sse", pred.shape(), target.shape());
  if (weights.size() != pred.size()) throw DimensionError("weighted_sse: weight count mismatch");
  const auto p = pred.values(), t = target.values();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (weights[i] != 0.0) s += weights[i] * (p[i] - t[i]) * (p[i] - t[i]);
  return make_result(OpKind::weighted_sse, {}, {s}, {pred, target}, [w = std::move(weights)](Node& self) {
    Node& pp = *self.parents[0];
    Node& pt = *self.parents[1];
    for (std::size_t i = 0; i < pp.value.size(); ++i) {
      if (w[i] == 0.0) continue;
      const double d = 2.0 * self.grad[0] * w[i] * (pp.value[i] - pt.value[i]);
      if (pp.requires_grad) pp.ensure_grad()[i] += d;
      if (pt.requires_grad) pt.ensure_grad()[i] -= d;
    }
  });
}

/// sum_i w_i [softplus(z_i) - y_i z_i]: binary cross-entropy on logits.
inline Tensor bce_with_logits(const Tensor& logits, const Tensor& targets, std::vector<double> weights) {
  if (logits.shape() != targets.shape()) detail::shape_error("bce_with_logits", logits.shape(), targets.shape());
  if (weights.size() != logits.size()) throw DimensionError("bce_with_logits: weight count mismatch");
  const auto z = logits.values(), y = targets.values();
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (weights[i] == 0.0) continue;
    const double sp = z[i] > 0 ? z[i] + std::log1p(std::exp(-z[i])) : std::log1p(std::exp(z[i]));
    s += weights[i] * (sp - y[i] * z[i]);
  }
  return make_result(OpKind::bce_logits, {}, {s}, {logits, targets}, [w = std::move(weights)](Node& self) {
    Node& pz = *self.parents[0];
    Node& py = *self.parents[1];
    for (std::size_t i = 0; i < pz.value.size(); ++i) {
      if (w[i] == 0.0) continue;
      if (pz.requires_grad)
        pz.ensure_grad()[i] += self.grad[0] * w[i] * (sigmoid_scalar(pz.value[i]) - py.value[i]);
      if (py.requires_grad) py.ensure_grad()[i] -= self.grad[0] * w[i] * pz.value[i];
    }
  });
}

/// sum_i w_i * 0.5 [logvar_i + (target_i - mean_i)^2 exp(-logvar_i)] (constant term dropped).
inline Tensor gaussian_nll(const Tensor& mu, const Tensor& logvar, const Tensor& target, std::vector<double> weights) {
  if (mu.shape() != logvar.shape() || mu.shape() != target.shape())
    detail::shape_error("gaussian_nll", mu.shape(), logvar.shape());
  if (weights.size() != mu.size()) throw DimensionError("gaussian_nll: weight count mismatch");
  const auto m = mu.values(), lv = logvar.values(), t = target.values();
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (weights[i] == 0.0) continue;
    const double r = t[i] - m[i];
    s += weights[i] * 0.5 * (lv[i] + r * r * std::exp(-lv[i]));
  }
  return make_result(OpKind::gaussian_nll, {}, {s}, {mu, logvar, target}, [w = std::move(weights)](Node& self) {
    Node& pm = *self.parents[0];
    Node& pl = *self.parents[1];
    Node& pt = *self.parents[2];
    const double g0 = self.grad[0];
    for (std::size_t i = 0; i < pm.value.size(); ++i) {
      if (w[i] == 0.0) continue;
      const double r = pt.value[i] - pm.value[i];
      const double prec = std::exp(-pl.value[i]);
      if (pm.requires_grad) pm.ensure_grad()[i] -= g0 * w[i] * r * prec;
      if (pt.requires_grad) pt.ensure_grad()[i] += g0 * w[i] * r * prec;
      if (pl.requires_grad) pl.ensure_grad()[i] += g0 * w[i] * 0.5 * (1.0 - r * r * prec);
    }
  });
}

inline Tensor detach(const Tensor& x) { return x.detach(); }

}  // namespace igc::ad
