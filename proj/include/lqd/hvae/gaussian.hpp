#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "lqd/numerics.hpp"

namespace lqd::hvae {

inline constexpr double kLogVarMin = -14.0;
inline constexpr double kLogVarMax = 14.0;
inline const double kLog2Pi = std::log(2.0 * std::numbers::pi);

/// Diagonal Gaussian given by per-element mean and log-variance.
struct GaussianParams {
  Tensor mean;
  Tensor log_variance;

  static GaussianParams standard(const Shape& shape) { return {Tensor::zeros(shape), Tensor::zeros(shape)}; }

  /// Split a 2C×H×W network output into mean (first C) and clamped log-variance.
  static GaussianParams from_network(const Tensor& out) {
    const std::size_t c = out.dim(0) / 2;
    return {slice0(out, 0, c), clamp(slice0(out, c, 2 * c), kLogVarMin, kLogVarMax)};
  }

  GaussianParams detach() const { return {mean.detach(), log_variance.detach()}; }
};

/// mean + exp(½·logvar)·eps (reparameterized; differentiable in both parameters).
inline Tensor reparameterize(const GaussianParams& g, const Tensor& eps) {
  return g.mean + exp(scale(g.log_variance, 0.5)) * eps;
}

/// Analytic KL[q ‖ p] summed over all elements, as a tape-aware scalar.
inline Tensor kl_divergence(const GaussianParams& q, const GaussianParams& p) {
  if (q.mean.shape() != p.mean.shape()) throw std::invalid_argument("kl_divergence: shape mismatch");
  // ½ Σ (lv_p − lv_q + (e^{lv_q} + (μ_q − μ_p)²) e^{−lv_p} − 1)
  const Tensor diff = q.mean - p.mean;
  const Tensor ratio = (exp(q.log_variance) + square(diff)) * exp(negate(p.log_variance));
  return scale(sum(add_scalar(p.log_variance - q.log_variance + ratio, -1.0)), 0.5);
}

/// KL of q against the standard normal.
inline Tensor kl_standard(const GaussianParams& q) {
  const Tensor t = exp(q.log_variance) + square(q.mean) - q.log_variance;
  return scale(sum(add_scalar(t, -1.0)), 0.5);
}

/// Σ log N(x; mean, exp(logvar)) with a tensor-valued log-variance.
inline Tensor log_density(const Tensor& x, const GaussianParams& g) {
  const Tensor diff = x - g.mean;
  const Tensor t = square(diff) * exp(negate(g.log_variance)) + g.log_variance;
  return scale(sum(add_scalar(t, kLog2Pi)), -0.5);
}

/// Σ log N(x; mean, exp(logvar)) with one shared scalar log-variance tensor.
inline Tensor log_density_shared(const Tensor& x, const Tensor& mean, const Tensor& logvar) {
  const double n = static_cast<double>(x.size());
  const Tensor sq = sum(square(x - mean));
  const Tensor quad = sq * exp(negate(logvar));
  const Tensor t = quad + scale(logvar, n);
  return scale(add_scalar(t, n * kLog2Pi), -0.5);
}

}  // namespace lqd::hvae
