#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "lqd/numerics.hpp"

namespace lqd::corruptions {

// Annex K tables (natural row-major order).
inline constexpr std::array<int, 64> kLumaQuant = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,  14, 13, 16, 24, 40,  57,
    69, 56, 14, 17, 22,  29,  51,  87,  80, 62, 18, 22, 37,  56,  68,  109, 103, 77, 24, 35, 55, 64,
    81, 104, 113, 92, 49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

inline constexpr std::array<int, 64> kChromaQuant = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99,
    99, 99, 47, 66, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

/// libjpeg quality scaling of a base table; quality in [1, 100].
inline std::array<int, 64> scaled_quant_table(const std::array<int, 64>& base, int quality) {
  if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg quality must be in [1, 100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> out{};
  for (std::size_t i = 0; i < 64; ++i) out[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
  return out;
}

namespace detail {

inline const std::array<double, 64>& dct_basis() {
  static const std::array<double, 64> basis = [] {
    std::array<double, 64> b{};
    for (int u = 0; u < 8; ++u) {
      const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) b[u * 8 + x] = a * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
    return b;
  }();
  return basis;
}

// Orthonormal 8×8 DCT-II, quantize/dequantize, inverse, in place.
inline void quantize_block(std::array<double, 64>& block, const std::array<int, 64>& q) {
  const auto& c = dct_basis();
  std::array<double, 64> tmp{}, coef{};
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int y = 0; y < 8; ++y) s += c[u * 8 + y] * block[y * 8 + x];
      tmp[u * 8 + x] = s;
    }
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double s = 0;
      for (int x = 0; x < 8; ++x) s += tmp[u * 8 + x] * c[v * 8 + x];
      const double step = q[u * 8 + v];
      coef[u * 8 + v] = std::round(s / step) * step;
    }
  for (int y = 0; y < 8; ++y)
    for (int v = 0; v < 8; ++v) {
      double s = 0;
      for (int u = 0; u < 8; ++u) s += c[u * 8 + y] * coef[u * 8 + v];
      tmp[y * 8 + v] = s;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int v = 0; v < 8; ++v) s += tmp[y * 8 + v] * c[v * 8 + x];
      block[y * 8 + x] = s;
    }
}

}  // namespace detail

/// Lossy stage of baseline JPEG: full-range YCbCr, no chroma subsampling,
/// 8×8 DCT quantization with the Annex K tables scaled by `quality`. The
/// result is rounded to 8-bit levels. Accepts 1- or 3-channel C×H×W in [0,1];
/// partial edge blocks are padded by edge replication.
inline Tensor jpeg_roundtrip(const Tensor& image, int quality) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw std::invalid_argument("jpeg_roundtrip: expects 1×H×W or 3×H×W");
  }
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2), hw = h * w;
  const auto& px = image.vec();
  const auto qy = scaled_quant_table(kLumaQuant, quality);
  const auto qc = scaled_quant_table(kChromaQuant, quality);

  std::vector<std::vector<double>> planes(c, std::vector<double>(hw));
  for (std::size_t i = 0; i < hw; ++i) {
    if (c == 1) {
      planes[0][i] = std::round(std::clamp(px[i], 0.0, 1.0) * 255.0);
      continue;
    }
    const double r = std::round(std::clamp(px[i], 0.0, 1.0) * 255.0);
    const double g = std::round(std::clamp(px[hw + i], 0.0, 1.0) * 255.0);
    const double b = std::round(std::clamp(px[2 * hw + i], 0.0, 1.0) * 255.0);
    planes[0][i] = 0.299 * r + 0.587 * g + 0.114 * b;
    planes[1][i] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
    planes[2][i] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
  }

  for (std::size_t ch = 0; ch < c; ++ch) {
    const auto& q = ch == 0 ? qy : qc;
    auto& plane = planes[ch];
    for (std::size_t by = 0; by < h; by += 8) {
      for (std::size_t bx = 0; bx < w; bx += 8) {
        std::array<double, 64> block{};
        for (std::size_t y = 0; y < 8; ++y)
          for (std::size_t x = 0; x < 8; ++x) {
            const std::size_t sy = std::min(by + y, h - 1), sx = std::min(bx + x, w - 1);
            block[y * 8 + x] = plane[sy * w + sx] - 128.0;
          }
        detail::quantize_block(block, q);
        for (std::size_t y = 0; y < 8 && by + y < h; ++y)
          for (std::size_t x = 0; x < 8 && bx + x < w; ++x) plane[(by + y) * w + bx + x] = block[y * 8 + x] + 128.0;
      }
    }
  }

  std::vector<double> out(c * hw);
  auto to_unit = [](double v) { return std::clamp(std::round(v), 0.0, 255.0) / 255.0; };
  for (std::size_t i = 0; i < hw; ++i) {
    if (c == 1) {
      out[i] = to_unit(planes[0][i]);
      continue;
    }
    const double y = planes[0][i], cb = planes[1][i] - 128.0, cr = planes[2][i] - 128.0;
    out[i] = to_unit(y + 1.402 * cr);
    out[hw + i] = to_unit(y - 0.344136 * cb - 0.714136 * cr);
    out[2 * hw + i] = to_unit(y + 1.772 * cb);
  }
  return Tensor(image.shape(), std::move(out));
}

}  // namespace lqd::corruptions
