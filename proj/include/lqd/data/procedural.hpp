#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lqd/numerics.hpp"

namespace lqd::data {

/// Round to the nearest 8-bit level. All stored and scored images live on this grid.
inline Tensor quantize8(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto& v = x.vec();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::round(std::clamp(v[i], 0.0, 1.0) * 255.0) / 255.0;
  return Tensor(x.shape(), std::move(out));
}

namespace detail {

using Color = std::array<double, 3>;

inline Color random_color(Rng& rng) {
  Color c;
  for (auto& v : c) v = std::round(rng.uniform(0.05, 0.95) * 255.0) / 255.0;
  return c;
}

}  // namespace detail

/// Synthetic "clean" scene: flat background with 2 to 5 flat-coloured
/// rectangles and discs on the pixel grid. No anti-aliasing, so every clean
/// edge is a hard one-pixel step and the image is already on the 8-bit grid.
/// Output is 3×size×size; size must be at least 8.
inline Tensor procedural_scene(std::uint64_t seed, std::size_t size = 32) {
  if (size < 8) throw std::invalid_argument("procedural_scene: size must be >= 8");
  Rng rng(derive_seed(seed, "scene"));
  const auto n = static_cast<long>(size);
  const auto bg = detail::random_color(rng);
  std::vector<double> img(3 * size * size);
  for (std::size_t ch = 0; ch < 3; ++ch) std::fill_n(img.begin() + static_cast<long>(ch * size * size), size * size, bg[ch]);

  const long shapes = rng.between(2, 5);
  for (long s = 0; s < shapes; ++s) {
    const auto c = detail::random_color(rng);
    const bool disc = rng.uniform() < 0.4;
    const long w = rng.between(n / 8, n / 2), h = rng.between(n / 8, n / 2);
    const long x0 = rng.between(0, n - w), y0 = rng.between(0, n - h);
    const double cx = static_cast<double>(x0) + 0.5 * static_cast<double>(w);
    const double cy = static_cast<double>(y0) + 0.5 * static_cast<double>(h);
    const double r = 0.5 * static_cast<double>(std::min(w, h));
    for (long y = y0; y < y0 + h; ++y) {
      for (long x = x0; x < x0 + w; ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
        if (disc && dx * dx + dy * dy > r * r) continue;
        for (std::size_t ch = 0; ch < 3; ++ch) img[(ch * size + static_cast<std::size_t>(y)) * size + static_cast<std::size_t>(x)] = c[ch];
      }
    }
  }
  return Tensor({3, size, size}, std::move(img));
}

}  // namespace lqd::data
