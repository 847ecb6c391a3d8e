#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "lqd/io/files.hpp"
#include "lqd/numerics.hpp"

namespace lqd::io {

namespace detail {

struct PngReadBuf {
  const unsigned char* data;
  std::size_t size;
  std::size_t pos;
};

inline void png_read_mem(png_structp png, png_bytep out, png_size_t n) {
  auto* b = static_cast<PngReadBuf*>(png_get_io_ptr(png));
  if (b->pos + n > b->size) png_error(png, "truncated PNG");
  std::memcpy(out, b->data + b->pos, n);
  b->pos += n;
}

inline void png_write_mem(png_structp png, png_bytep in, png_size_t n) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(in), n);
}

inline void png_flush_noop(png_structp) {}

[[noreturn]] inline void png_throw(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  *err = msg;
  longjmp(png_jmpbuf(png), 1);
}

}  // namespace detail

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// 8-bit PNG (grayscale for C=1, RGB for C=3) of a C×H×W image in [0,1].
inline std::string encode_png(const Tensor& img) {
  if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3)) throw IoError("encode_png: expects 1×H×W or 3×H×W");
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  std::vector<std::uint8_t> rows(h * w * c);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) rows[(y * w + x) * c + ch] = to_byte(img[(ch * h + y) * w + x]);

  std::string out, err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_throw, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed: " + err);
  }
  png_set_write_fn(png, &out, detail::png_write_mem, detail::png_flush_noop);
  png_set_compression_level(png, 9);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < h; ++y) png_write_row(png, rows.data() + y * w * c);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

/// Decode an 8-bit (or lower, expanded) PNG into C×H×W with C ∈ {1, 3}. Alpha
/// is dropped; palettes are expanded to RGB.
inline Tensor decode_png(const std::string& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw IoError("not a PNG file");
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_throw, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> rows;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("PNG decode failed: " + err);
  }
  detail::PngReadBuf buf{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), 0};
  png_set_read_fn(png, &buf, detail::png_read_mem);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const std::size_t w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  const std::size_t c = png_get_channels(png, info);
  if (c != 1 && c != 3) png_error(png, "unsupported channel layout");
  rows.resize(h * w * c);
  std::vector<png_bytep> ptrs(h);
  for (std::size_t y = 0; y < h; ++y) ptrs[y] = rows.data() + y * w * c;
  png_read_image(png, ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  std::vector<double> px(c * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) px[(ch * h + y) * w + x] = rows[(y * w + x) * c + ch] / 255.0;
  return Tensor({c, h, w}, std::move(px));
}

inline void save_png(const std::filesystem::path& p, const Tensor& img) { write_file_atomic(p, encode_png(img)); }

inline Tensor load_png(const std::filesystem::path& p) {
  try {
    return decode_png(read_file(p));
  } catch (const IoError& e) {
    throw IoError(p.string() + ": " + e.what());
  }
}

}  // namespace lqd::io
