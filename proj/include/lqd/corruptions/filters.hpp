#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "lqd/numerics.hpp"

// Image-space helpers for the corruption kinds. Images are C×H×W tensors;
// every spatial operator uses half-sample symmetric ("reflect") borders.
namespace lqd::corruptions::filters {

/// Index into [0, n) with half-sample symmetric reflection (… c b a | a b c …).
inline std::size_t reflect(long i, std::size_t n) {
  const long m = static_cast<long>(n);
  if (m == 1) return 0;
  const long period = 2 * m;
  long r = i % period;
  if (r < 0) r += period;
  return static_cast<std::size_t>(r < m ? r : period - 1 - r);
}

inline std::vector<double> gaussian_kernel_1d(double sigma, double truncate = 4.0) {
  if (sigma <= 0) return {1.0};
  const long radius = static_cast<long>(truncate * sigma + 0.5);
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double s = 0;
  for (long i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    s += v;
  }
  for (auto& v : k) v /= s;
  return k;
}

/// Separable Gaussian blur per channel.
inline Tensor gaussian_blur(const Tensor& x, double sigma) {
  if (sigma <= 0) return x;
  const auto k = gaussian_kernel_1d(sigma);
  const long r = static_cast<long>(k.size() / 2);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto& in = x.vec();
  std::vector<double> tmp(in.size()), out(in.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        double s = 0;
        for (long i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * in[(ch * h + y) * w + reflect(static_cast<long>(xx) + i, w)];
        tmp[(ch * h + y) * w + xx] = s;
      }
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        double s = 0;
        for (long i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * tmp[(ch * h + reflect(static_cast<long>(y) + i, h)) * w + xx];
        out[(ch * h + y) * w + xx] = s;
      }
  return Tensor(x.shape(), std::move(out));
}

/// Square 2D kernel of odd side, applied per channel (correlation).
struct Kernel2D {
  std::size_t side = 1;
  std::vector<double> weights{1.0};
};

inline Tensor filter2d(const Tensor& x, const Kernel2D& k) {
  const long r = static_cast<long>(k.side / 2);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto& in = x.vec();
  std::vector<double> out(in.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        double s = 0;
        for (long dy = -r; dy <= r; ++dy)
          for (long dx = -r; dx <= r; ++dx) {
            const double kw = k.weights[static_cast<std::size_t>((dy + r) * static_cast<long>(k.side) + dx + r)];
            if (kw == 0.0) continue;
            s += kw * in[(ch * h + reflect(static_cast<long>(y) + dy, h)) * w + reflect(static_cast<long>(xx) + dx, w)];
          }
        out[(ch * h + y) * w + xx] = s;
      }
  return Tensor(x.shape(), std::move(out));
}

/// Aliased disk of the given radius smoothed by a 3×3 Gaussian of `alias_sigma`.
inline Kernel2D defocus_kernel(double radius, double alias_sigma) {
  const long r = std::max<long>(1, static_cast<long>(std::ceil(radius)));
  const std::size_t disk_side = static_cast<std::size_t>(2 * r + 1);
  std::vector<double> disk(disk_side * disk_side, 0.0);
  double total = 0;
  for (long y = -r; y <= r; ++y)
    for (long x = -r; x <= r; ++x)
      if (static_cast<double>(x * x + y * y) <= radius * radius) {
        disk[static_cast<std::size_t>((y + r) * (2 * r + 1) + x + r)] = 1.0;
        total += 1.0;
      }
  for (auto& v : disk) v /= total;

  // 3×3 Gaussian, normalized.
  double g[3];
  double gs = 0;
  for (int i = -1; i <= 1; ++i) gs += g[i + 1] = std::exp(-0.5 * i * i / (alias_sigma * alias_sigma));
  for (double& v : g) v /= gs;

  Kernel2D k;
  k.side = disk_side + 2;
  k.weights.assign(k.side * k.side, 0.0);
  const long kr = r + 1;
  for (long y = -r; y <= r; ++y)
    for (long x = -r; x <= r; ++x) {
      const double d = disk[static_cast<std::size_t>((y + r) * (2 * r + 1) + x + r)];
      if (d == 0.0) continue;
      for (int gy = -1; gy <= 1; ++gy)
        for (int gx = -1; gx <= 1; ++gx)
          k.weights[static_cast<std::size_t>((y + gy + kr) * static_cast<long>(k.side) + x + gx + kr)] += d * g[gy + 1] * g[gx + 1];
    }
  return k;
}

/// Bilinear sample of channel `ch` at continuous (y, x) with reflect borders.
inline double bilinear(const Tensor& img, std::size_t ch, double y, double x) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  const double fy = std::floor(y), fx = std::floor(x);
  const double ty = y - fy, tx = x - fx;
  const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
  const auto& v = img.vec();
  auto at = [&](long yy, long xx) { return v[(ch * h + reflect(yy, h)) * w + reflect(xx, w)]; };
  return (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) + ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
}

/// Area-weighted (box filter) resize of each channel.
inline Tensor box_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (out_h == h && out_w == w) return x;
  auto weights = [](std::size_t in, std::size_t out) {
    // weights[o] = list of (input index, overlap fraction) for output cell o.
    std::vector<std::vector<std::pair<std::size_t, double>>> wt(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double lo = static_cast<double>(o) * scale, hi = lo + scale;
      for (std::size_t i = static_cast<std::size_t>(std::floor(lo)); i < in && static_cast<double>(i) < hi; ++i) {
        const double ov = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
        if (ov > 1e-12) wt[o].push_back({i, ov / scale});
      }
    }
    return wt;
  };
  const auto wy = weights(h, out_h), wx = weights(w, out_w);
  const auto& in = x.vec();
  std::vector<double> out(c * out_h * out_w, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        double s = 0;
        for (const auto& [iy, fy] : wy[oy])
          for (const auto& [ix, fx] : wx[ox]) s += fy * fx * in[(ch * h + iy) * w + ix];
        out[(ch * out_h + oy) * out_w + ox] = s;
      }
  return Tensor({c, out_h, out_w}, std::move(out));
}

}  // namespace lqd::corruptions::filters
