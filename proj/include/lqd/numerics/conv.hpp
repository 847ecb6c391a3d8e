#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "lqd/numerics/ops.hpp"

namespace lqd {

namespace detail {

struct ConvGeometry {
  std::size_t c_in, h, w, c_out, kh, kw, stride, pad, ho, wo;
  std::size_t patch() const { return c_in * kh * kw; }
  std::size_t out_pixels() const { return ho * wo; }
};

// cols[(c,ki,kj) × (oy,ox)] from a zero-padded input.
inline void im2col(const double* in, const ConvGeometry& g, double* cols) {
  const std::size_t np = g.out_pixels();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = cols + ((c * g.kh + ki) * g.kw + kj) * np;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          double* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            for (std::size_t ox = 0; ox < g.wo; ++ox) dst[ox] = 0.0;
            continue;
          }
          const double* src = in + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

inline void col2im_acc(const double* cols, const ConvGeometry& g, double* in_grad) {
  const std::size_t np = g.out_pixels();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = cols + ((c * g.kh + ki) * g.kw + kj) * np;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = in_grad + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += row[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2D cross-correlation with zero padding.
///
/// input C_in×H×W, kernel C_out×C_in×kh×kw -> C_out×H'×W' with
/// H' = (H + 2·padding − kh) / stride + 1.
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride = 1, std::size_t padding = 0) {
  if (input.rank() != 3 || kernel.rank() != 4 || kernel.dim(1) != input.dim(0)) {
    throw std::invalid_argument("conv2d: input " + shape_str(input.shape()) + ", kernel " +
                                shape_str(kernel.shape()));
  }
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be >= 1");
  detail::ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernel.dim(0), kernel.dim(2), kernel.dim(3),
                         stride,       padding,       0,             0};
  if (g.kh > g.h + 2 * padding || g.kw > g.w + 2 * padding) {
    throw std::invalid_argument("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                                shape_str(input.shape()));
  }
  g.ho = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wo = (g.w + 2 * padding - g.kw) / stride + 1;

  auto cols = std::make_shared<std::vector<double>>(g.patch() * g.out_pixels());
  detail::im2col(input.vec().data(), g, cols->data());
  std::vector<double> out(g.c_out * g.out_pixels(), 0.0);
  detail::gemm_acc(kernel.vec().data(), cols->data(), out.data(), g.c_out, g.patch(), g.out_pixels());
  Tensor value({g.c_out, g.ho, g.wo}, std::move(out));
  if (!input.attached() && !kernel.attached()) return value;

  auto ks = kernel.storage();
  return make_result(std::move(value), {input, kernel}, [g, cols, ks](std::span<const double> grad, std::span<GradSlot> p) {
    const std::size_t np = g.out_pixels();
    if (!p[1].empty()) detail::gemm_abt_acc(grad.data(), cols->data(), p[1].data(), g.c_out, np, g.patch());
    if (!p[0].empty()) {
      std::vector<double> dcols(g.patch() * np, 0.0);
      detail::gemm_atb_acc(ks->data(), grad.data(), dcols.data(), g.c_out, g.patch(), np);
      detail::col2im_acc(dcols.data(), g, p[0].data());
    }
  });
}

enum class Resample { down, up };

/// down: non-overlapping factor×factor mean pooling; up: nearest-neighbour repetition.
inline Tensor resample(const Tensor& input, std::size_t factor, Resample direction) {
  if (input.rank() != 3 || factor == 0) throw std::invalid_argument("resample: expects C×H×W and factor >= 1");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (factor == 1) return input;
  const auto& x = input.vec();
  if (direction == Resample::down) {
    if (h % factor || w % factor) {
      throw std::invalid_argument("resample down: extents " + shape_str(input.shape()) + " not divisible by " +
                                  std::to_string(factor));
    }
    const std::size_t ho = h / factor, wo = w / factor;
    const double inv = 1.0 / static_cast<double>(factor * factor);
    std::vector<double> out(c * ho * wo, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx)
          out[(ch * ho + y / factor) * wo + xx / factor] += x[(ch * h + y) * w + xx] * inv;
    Tensor value({c, ho, wo}, std::move(out));
    return make_result(std::move(value), {input}, [c, h, w, ho, wo, factor, inv](std::span<const double> g, std::span<GradSlot> p) {
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t xx = 0; xx < w; ++xx)
            p[0][(ch * h + y) * w + xx] += g[(ch * ho + y / factor) * wo + xx / factor] * inv;
    });
  }
  const std::size_t ho = h * factor, wo = w * factor;
  std::vector<double> out(c * ho * wo);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xx = 0; xx < wo; ++xx) out[(ch * ho + y) * wo + xx] = x[(ch * h + y / factor) * w + xx / factor];
  Tensor value({c, ho, wo}, std::move(out));
  return make_result(std::move(value), {input}, [c, h, w, ho, wo, factor](std::span<const double> g, std::span<GradSlot> p) {
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t xx = 0; xx < wo; ++xx) p[0][(ch * h + y / factor) * w + xx / factor] += g[(ch * ho + y) * wo + xx];
  });
}

}  // namespace lqd
