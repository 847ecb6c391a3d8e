#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "lqd/numerics/tensor.hpp"

namespace lqd {

/// H×W grid of complex values stored as separate real/imaginary planes.
struct ComplexGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> re;
  std::vector<double> im;

  std::complex<double> at(std::size_t u, std::size_t v) const { return {re[u * width + v], im[u * width + v]}; }
  double magnitude(std::size_t u, std::size_t v) const { return std::abs(at(u, v)); }
};

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace detail {

// In-place iterative radix-2 forward transform (e^{-2πi nk/N}, unnormalized).
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Direct twiddle (no running product).
        const std::complex<double> wk = std::polar(1.0, ang * static_cast<double>(k));
        const auto u = a[i + k];
        const auto t = wk * a[i + k + len / 2];
        a[i + k] = u + t;
        a[i + k + len / 2] = u - t;
      }
    }
  }
}

}  // namespace detail

/// Unnormalized forward 2D DFT of an H×W (or 1×H×W) tensor; H and W must be powers of two.
inline ComplexGrid fft2d(const Tensor& image) {
  std::size_t h = 0, w = 0;
  if (image.rank() == 2) {
    h = image.dim(0);
    w = image.dim(1);
  } else if (image.rank() == 3 && image.dim(0) == 1) {
    h = image.dim(1);
    w = image.dim(2);
  } else {
    throw std::invalid_argument("fft2d: expects H×W, got " + shape_str(image.shape()));
  }
  if (!is_power_of_two(h) || !is_power_of_two(w)) {
    throw std::invalid_argument("fft2d: extents must be powers of two, got " + shape_str(image.shape()));
  }
  std::vector<std::complex<double>> grid(h * w);
  const auto& x = image.vec();
  for (std::size_t i = 0; i < h * w; ++i) grid[i] = x[i];

  std::vector<std::complex<double>> line(w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) line[c] = grid[r * w + c];
    detail::fft_inplace(line);
    for (std::size_t c = 0; c < w; ++c) grid[r * w + c] = line[c];
  }
  line.resize(h);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) line[r] = grid[r * w + c];
    detail::fft_inplace(line);
    for (std::size_t r = 0; r < h; ++r) grid[r * w + c] = line[r];
  }

  ComplexGrid out{h, w, std::vector<double>(h * w), std::vector<double>(h * w)};
  for (std::size_t i = 0; i < h * w; ++i) {
    out.re[i] = grid[i].real();
    out.im[i] = grid[i].imag();
  }
  return out;
}

}  // namespace lqd
