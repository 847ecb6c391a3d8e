#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "lqd/numerics/tape.hpp"
#include "lqd/numerics/tensor.hpp"

namespace lqd {

enum class OpKind {
  add,
  sub,
  mul,
  div,
  exp,
  log,
  softplus,
  tanh,
  relu,
  silu,
  sigmoid,
  square,
  negate,
};

inline bool is_binary(OpKind k) {
  return k == OpKind::add || k == OpKind::sub || k == OpKind::mul || k == OpKind::div;
}

namespace detail {

// Numerically stable log(1 + e^x).
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// For each flat output index, the flat index into an operand of shape `in`.
inline std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  const std::size_t offset = rank - in.size();
  std::vector<std::size_t> in_stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t i = rank; i-- > offset;) {
    const std::size_t d = in[i - offset];
    in_stride[i] = d == 1 ? 0 : s;
    s *= d;
  }
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> idx(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t flat = 0;
  for (std::size_t o = 0; o < n; ++o) {
    idx[o] = flat;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      flat += in_stride[d];
      if (counter[d] < out[d]) break;
      flat -= in_stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  return idx;
}

inline void check_finite_domain(OpKind kind, double x) {
  if (kind == OpKind::log && !(x > 0.0)) {
    throw std::domain_error("log: non-positive argument " + std::to_string(x));
  }
}

}  // namespace detail

/// Binary elementwise op with trailing-dimension broadcasting.
inline Tensor binary(OpKind kind, const Tensor& a, const Tensor& b) {
  if (!is_binary(kind)) throw std::invalid_argument("binary: unary op kind");
  const bool same = a.shape() == b.shape();
  const Shape out_shape = same ? a.shape() : detail::broadcast_shape(a.shape(), b.shape());
  const std::size_t n = shape_numel(out_shape);
  std::vector<std::size_t> ia, ib;
  if (!same) {
    ia = detail::broadcast_index(a.shape(), out_shape);
    ib = detail::broadcast_index(b.shape(), out_shape);
  }
  auto at_a = [&](std::size_t i) { return same ? i : ia[i]; };
  auto at_b = [&](std::size_t i) { return same ? i : ib[i]; };

  const auto& av = a.vec();
  const auto& bv = b.vec();
  std::vector<double> out(n);
  switch (kind) {
    case OpKind::add:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[at_a(i)] + bv[at_b(i)];
      break;
    case OpKind::sub:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[at_a(i)] - bv[at_b(i)];
      break;
    case OpKind::mul:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[at_a(i)] * bv[at_b(i)];
      break;
    case OpKind::div:
      for (std::size_t i = 0; i < n; ++i) {
        const double d = bv[at_b(i)];
        if (d == 0.0) throw std::domain_error("div: division by zero");
        out[i] = av[at_a(i)] / d;
      }
      break;
    default:
      break;
  }
  Tensor value(out_shape, std::move(out));
  if (!a.attached() && !b.attached()) return value;

  auto as = a.storage();
  auto bs = b.storage();
  return make_result(std::move(value), {a, b},
                     [kind, same, ia = std::move(ia), ib = std::move(ib), as, bs](
                         std::span<const double> g, std::span<GradSlot> p) {
                       const auto& av = *as;
                       const auto& bv = *bs;
                       const std::size_t n = g.size();
                       auto ja = [&](std::size_t i) { return same ? i : ia[i]; };
                       auto jb = [&](std::size_t i) { return same ? i : ib[i]; };
                       GradSlot ga = p[0], gb = p[1];
                       for (std::size_t i = 0; i < n; ++i) {
                         const double x = av[ja(i)], y = bv[jb(i)];
                         switch (kind) {
                           case OpKind::add:
                             if (!ga.empty()) ga[ja(i)] += g[i];
                             if (!gb.empty()) gb[jb(i)] += g[i];
                             break;
                           case OpKind::sub:
                             if (!ga.empty()) ga[ja(i)] += g[i];
                             if (!gb.empty()) gb[jb(i)] -= g[i];
                             break;
                           case OpKind::mul:
                             if (!ga.empty()) ga[ja(i)] += g[i] * y;
                             if (!gb.empty()) gb[jb(i)] += g[i] * x;
                             break;
                           case OpKind::div:
                             if (!ga.empty()) ga[ja(i)] += g[i] / y;
                             if (!gb.empty()) gb[jb(i)] -= g[i] * x / (y * y);
                             break;
                           default:
                             break;
                         }
                       }
                     });
}

/// Unary elementwise op.
inline Tensor unary(OpKind kind, const Tensor& a) {
  if (is_binary(kind)) throw std::invalid_argument("unary: binary op kind");
  const auto& av = a.vec();
  const std::size_t n = av.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[i];
    detail::check_finite_domain(kind, x);
    switch (kind) {
      case OpKind::exp: out[i] = std::exp(x); break;
      case OpKind::log: out[i] = std::log(x); break;
      case OpKind::softplus: out[i] = detail::softplus(x); break;
      case OpKind::tanh: out[i] = std::tanh(x); break;
      case OpKind::relu: out[i] = x > 0 ? x : 0.0; break;
      case OpKind::silu: out[i] = x * detail::sigmoid(x); break;
      case OpKind::sigmoid: out[i] = detail::sigmoid(x); break;
      case OpKind::square: out[i] = x * x; break;
      case OpKind::negate: out[i] = -x; break;
      default: break;
    }
  }
  Tensor value(a.shape(), std::move(out));
  if (!a.attached()) return value;

  auto as = a.storage();
  auto os = value.storage();
  return make_result(std::move(value), {a}, [kind, as, os](std::span<const double> g, std::span<GradSlot> p) {
    const auto& x = *as;
    const auto& y = *os;
    GradSlot ga = p[0];
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) {
      double d = 0.0;
      switch (kind) {
        case OpKind::exp: d = y[i]; break;
        case OpKind::log: d = 1.0 / x[i]; break;
        case OpKind::softplus: d = detail::sigmoid(x[i]); break;
        case OpKind::tanh: d = 1.0 - y[i] * y[i]; break;
        case OpKind::relu: d = x[i] > 0 ? 1.0 : 0.0; break;
        case OpKind::silu: {
          const double s = detail::sigmoid(x[i]);
          d = s * (1.0 + x[i] * (1.0 - s));
          break;
        }
        case OpKind::sigmoid: d = y[i] * (1.0 - y[i]); break;
        case OpKind::square: d = 2.0 * x[i]; break;
        case OpKind::negate: d = -1.0; break;
        default: break;
      }
      ga[i] += g[i] * d;
    }
  });
}

inline Tensor elementwise(OpKind kind, const Tensor& a) { return unary(kind, a); }
inline Tensor elementwise(OpKind kind, const Tensor& a, const Tensor& b) { return binary(kind, a, b); }

inline Tensor add(const Tensor& a, const Tensor& b) { return binary(OpKind::add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return binary(OpKind::sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return binary(OpKind::mul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return binary(OpKind::div, a, b); }
inline Tensor exp(const Tensor& a) { return unary(OpKind::exp, a); }
inline Tensor log(const Tensor& a) { return unary(OpKind::log, a); }
inline Tensor softplus(const Tensor& a) { return unary(OpKind::softplus, a); }
inline Tensor tanh(const Tensor& a) { return unary(OpKind::tanh, a); }
inline Tensor relu(const Tensor& a) { return unary(OpKind::relu, a); }
inline Tensor silu(const Tensor& a) { return unary(OpKind::silu, a); }
inline Tensor sigmoid(const Tensor& a) { return unary(OpKind::sigmoid, a); }
inline Tensor square(const Tensor& a) { return unary(OpKind::square, a); }
inline Tensor negate(const Tensor& a) { return unary(OpKind::negate, a); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return negate(a); }

/// a * c + offset for constants c, offset.
inline Tensor affine(const Tensor& a, double c, double offset = 0.0) {
  std::vector<double> out(a.size());
  const auto& av = a.vec();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c + offset;
  Tensor value(a.shape(), std::move(out));
  if (!a.attached()) return value;
  return make_result(std::move(value), {a}, [c](std::span<const double> g, std::span<GradSlot> p) {
    for (std::size_t i = 0; i < g.size(); ++i) p[0][i] += g[i] * c;
  });
}

inline Tensor scale(const Tensor& a, double c) { return affine(a, c, 0.0); }
inline Tensor add_scalar(const Tensor& a, double c) { return affine(a, 1.0, c); }

/// Clamp into [lo, hi]; gradient passes only where the input is strictly inside.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  const auto& av = a.vec();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(av[i], lo, hi);
  Tensor value(a.shape(), std::move(out));
  if (!a.attached()) return value;
  auto as = a.storage();
  return make_result(std::move(value), {a}, [as, lo, hi](std::span<const double> g, std::span<GradSlot> p) {
    const auto& x = *as;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > lo && x[i] < hi) p[0][i] += g[i];
    }
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.vec()) s += v;
  Tensor value = Tensor::scalar(s);
  if (!a.attached()) return value;
  return make_result(std::move(value), {a}, [](std::span<const double> g, std::span<GradSlot> p) {
    for (double& v : p[0]) v += g[0];
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

/// Reshape preserving tape participation (gradient is flat-identical).
inline Tensor reshape(const Tensor& a, Shape shape) {
  Tensor value = a.detach().reshaped(std::move(shape));
  if (!a.attached()) return value;
  return make_result(std::move(value), {a}, [](std::span<const double> g, std::span<GradSlot> p) {
    for (std::size_t i = 0; i < g.size(); ++i) p[0][i] += g[i];
  });
}

/// Concatenate along the leading dimension; trailing extents must agree.
inline Tensor concat0(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() == 0 ||
      !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw std::invalid_argument("concat0: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.vec().begin(), a.vec().end());
  out.insert(out.end(), b.vec().begin(), b.vec().end());
  Tensor value(std::move(shape), std::move(out));
  const std::size_t na = a.size();
  return make_result(std::move(value), {a, b}, [na](std::span<const double> g, std::span<GradSlot> p) {
    if (!p[0].empty()) {
      for (std::size_t i = 0; i < na; ++i) p[0][i] += g[i];
    }
    if (!p[1].empty()) {
      for (std::size_t i = na; i < g.size(); ++i) p[1][i - na] += g[i];
    }
  });
}

/// Rows [begin, end) of the leading dimension.
inline Tensor slice0(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() == 0 || begin >= end || end > a.dim(0)) {
    throw std::invalid_argument("slice0: bad range for " + shape_str(a.shape()));
  }
  const std::size_t inner = a.size() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = end - begin;
  std::vector<double> out(a.vec().begin() + static_cast<std::ptrdiff_t>(begin * inner),
                          a.vec().begin() + static_cast<std::ptrdiff_t>(end * inner));
  Tensor value(std::move(shape), std::move(out));
  const std::size_t off = begin * inner;
  return make_result(std::move(value), {a}, [off](std::span<const double> g, std::span<GradSlot> p) {
    for (std::size_t i = 0; i < g.size(); ++i) p[0][off + i] += g[i];
  });
}

namespace detail {

// c[m×n] += a[m×k] · b[k×n], row-major. Four output rows share each b row.
inline void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double* c0 = c + i * n;
    double* c1 = c0 + n;
    double* c2 = c1 + n;
    double* c3 = c2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a0 = a[i * k + p], a1 = a[(i + 1) * k + p], a2 = a[(i + 2) * k + p], a3 = a[(i + 3) * k + p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double bv = bp[j];
        c0[j] += a0 * bv;
        c1[j] += a1 * bv;
        c2[j] += a2 * bv;
        c3[j] += a3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m×k] += a[m×n] · b[k×n]ᵀ.
inline void gemm_abt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  std::vector<double> bt(n * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  gemm_acc(a, bt.data(), c, m, n, k);
}

// c[k×n] += a[m×k]ᵀ · b[m×n].
inline void gemm_atb_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* bi = b + i * n;
    const double* ai = a + i * k;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const double a0 = ai[p], a1 = ai[p + 1], a2 = ai[p + 2], a3 = ai[p + 3];
      double* c0 = c + p * n;
      double* c1 = c0 + n;
      double* c2 = c1 + n;
      double* c3 = c2 + n;
      for (std::size_t j = 0; j < n; ++j) {
        const double bv = bi[j];
        c0[j] += a0 * bv;
        c1[j] += a1 * bv;
        c2[j] += a2 * bv;
        c3[j] += a3 * bv;
      }
    }
    for (; p < k; ++p) {
      const double av = ai[p];
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  detail::gemm_acc(a.vec().data(), b.vec().data(), out.data(), m, k, n);
  Tensor value({m, n}, std::move(out));
  auto as = a.storage();
  auto bs = b.storage();
  return make_result(std::move(value), {a, b}, [as, bs, m, k, n](std::span<const double> g, std::span<GradSlot> p) {
    if (!p[0].empty()) detail::gemm_abt_acc(g.data(), bs->data(), p[0].data(), m, n, k);
    if (!p[1].empty()) detail::gemm_atb_acc(as->data(), g.data(), p[1].data(), m, k, n);
  });
}

}  // namespace lqd
