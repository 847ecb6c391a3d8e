#pragma once

#include <cmath>
#include <stdexcept>

#include "lqd/hvae/gaussian.hpp"

namespace lqd::scoring {

using hvae::GaussianParams;

/// KL[q1 ‖ q2] between diagonal Gaussians, summed over elements.
inline double kl_diag_gaussian(const GaussianParams& q1, const GaussianParams& q2) {
  if (q1.mean.shape() != q2.mean.shape() || q1.log_variance.shape() != q1.mean.shape() ||
      q2.log_variance.shape() != q2.mean.shape()) {
    throw std::invalid_argument("kl_diag_gaussian: shape mismatch");
  }
  const auto& m1 = q1.mean.vec();
  const auto& m2 = q2.mean.vec();
  const auto& l1 = q1.log_variance.vec();
  const auto& l2 = q2.log_variance.vec();
  double total = 0.0;
  for (std::size_t i = 0; i < m1.size(); ++i) {
    const double d = m1[i] - m2[i];
    // With t = lv1 − lv2: (expm1(t) − t) >= 0 in floating point, and is
    // exactly zero for identical parameters.
    const double t = l1[i] - l2[i];
    const double term = (std::expm1(t) - t) + d * d * std::exp(-l2[i]);
    total += 0.5 * term;
  }
  return total;
}

}  // namespace lqd::scoring
