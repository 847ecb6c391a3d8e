#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "lqd/numerics.hpp"

namespace lqd::scoring {

/// Unweighted channel mean of a C×H×W image -> H×W.
inline Tensor grayscale(const Tensor& image) {
  if (image.rank() == 2) return image;
  if (image.rank() != 3) throw std::invalid_argument("grayscale: expects C×H×W");
  const std::size_t c = image.dim(0), hw = image.dim(1) * image.dim(2);
  std::vector<double> out(hw, 0.0);
  const auto& v = image.vec();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) out[i] += v[ch * hw + i];
  for (auto& o : out) o /= static_cast<double>(c);
  return Tensor({image.dim(1), image.dim(2)}, std::move(out));
}

/// True when (u, v) of an unshifted H×W spectrum falls inside the centred
/// H/2 × W/2 low-frequency box of the centre-shifted spectrum.
inline bool in_low_box(std::size_t u, std::size_t v, std::size_t h, std::size_t w) {
  const std::size_t su = (u + h / 2) % h, sv = (v + w / 2) % w;
  return su >= h / 4 && su < h / 4 + h / 2 && sv >= w / 4 && sv < w / 4 + w / 2;
}

/// Mean spectral magnitude outside the centred half-size box (unnormalized DFT).
inline double high_freq_mean(const Tensor& image) {
  const Tensor gray = grayscale(image);
  const ComplexGrid spec = fft2d(gray);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t u = 0; u < spec.height; ++u) {
    for (std::size_t v = 0; v < spec.width; ++v) {
      if (in_low_box(u, v, spec.height, spec.width)) continue;
      total += spec.magnitude(u, v);
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace lqd::scoring
