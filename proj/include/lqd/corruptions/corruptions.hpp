#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lqd/corruptions/filters.hpp"
#include "lqd/corruptions/jpeg.hpp"
#include "lqd/data/procedural.hpp"
#include "lqd/numerics.hpp"

namespace lqd::corruptions {

/// Supported kinds, in the row order of the usual common-corruption tables.
enum class Kind {
  gaussian_noise,
  impulse_noise,
  shot_noise,
  speckle_noise,
  defocus_blur,
  gaussian_blur,
  glass_blur,
  motion_blur,
  zoom_blur,
  brightness,
  contrast,
  elastic_transform,
  pixelate,
  jpeg_compression,
  saturate,
};

inline constexpr std::array<Kind, 15> kAllKinds = {
    Kind::gaussian_noise, Kind::impulse_noise, Kind::shot_noise,        Kind::speckle_noise, Kind::defocus_blur,
    Kind::gaussian_blur,  Kind::glass_blur,    Kind::motion_blur,       Kind::zoom_blur,     Kind::brightness,
    Kind::contrast,       Kind::elastic_transform, Kind::pixelate,     Kind::jpeg_compression, Kind::saturate,
};

inline constexpr std::array<std::string_view, 15> kKindNames = {
    "gaussian_noise", "impulse_noise", "shot_noise",        "speckle_noise", "defocus_blur",
    "gaussian_blur",  "glass_blur",    "motion_blur",       "zoom_blur",     "brightness",
    "contrast",       "elastic_transform", "pixelate",     "jpeg_compression", "saturate",
};

inline constexpr std::array<std::string_view, 15> kKindTitles = {
    "Gaussian Noise", "Impulse Noise", "Shot Noise",        "Speckle Noise", "Defocus Blur",
    "Gaussian Blur",  "Glass Blur",    "Motion Blur",       "Zoom Blur",     "Brightness",
    "Contrast",       "Elastic Transform", "Pixelate",     "JPEG Compression", "Saturate",
};

inline std::string_view name(Kind k) { return kKindNames[static_cast<std::size_t>(k)]; }
inline std::string_view title(Kind k) { return kKindTitles[static_cast<std::size_t>(k)]; }

inline std::optional<Kind> parse_kind(std::string_view s) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == s) return kAllKinds[i];
  }
  return std::nullopt;
}

/// Position in the standard table order (used to order report rows).
inline std::size_t table_rank(Kind k) { return static_cast<std::size_t>(k); }

class UnsupportedCorruption : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CorruptionSpec {
  Kind kind = Kind::gaussian_noise;
  int severity = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (severity < 1 || severity > 5) {
      throw UnsupportedCorruption("severity " + std::to_string(severity) + " outside [1, 5]");
    }
  }

  friend bool operator==(const CorruptionSpec&, const CorruptionSpec&) = default;
};

/// Named parameters of one (kind, severity) cell.
using CorruptionParams = std::map<std::string, double>;

/// Parameter record for every supported kind × severity 1..5.
///
/// Values follow the 32-pixel (CIFAR-10-C) variants of the reference
/// corruption definitions. Elastic transform uses its own smooth-warp table
/// (amplitude in pixels, smoothing sigma in pixels).
class SeverityTable {
 public:
  static const SeverityTable& standard() {
    static const SeverityTable table = build();
    return table;
  }

  const CorruptionParams& at(Kind k, int severity) const {
    if (severity < 1 || severity > 5) throw UnsupportedCorruption("severity outside [1, 5]");
    return cells_.at(static_cast<std::size_t>(k))[static_cast<std::size_t>(severity - 1)];
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (Kind k : kAllKinds) {
      nlohmann::json sev = nlohmann::json::array();
      for (int s = 1; s <= 5; ++s) sev.push_back(at(k, s));
      j[std::string(name(k))] = sev;
    }
    return j;
  }

  /// FNV-1a of the canonical JSON, as 16 hex digits.
  std::string hash() const {
    const auto h = fnv1a(to_json().dump());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

 private:
  static SeverityTable build() {
    SeverityTable t;
    auto set = [&t](Kind k, const char* key, std::array<double, 5> v) {
      for (std::size_t s = 0; s < 5; ++s) t.cells_[static_cast<std::size_t>(k)][s][key] = v[s];
    };
    set(Kind::gaussian_noise, "sigma", {0.04, 0.06, 0.08, 0.09, 0.10});
    set(Kind::shot_noise, "lambda", {500, 250, 100, 75, 50});
    set(Kind::impulse_noise, "amount", {0.01, 0.02, 0.03, 0.05, 0.07});
    set(Kind::speckle_noise, "sigma", {0.06, 0.10, 0.12, 0.16, 0.20});
    set(Kind::gaussian_blur, "sigma", {0.4, 0.6, 0.7, 0.8, 1.0});
    set(Kind::glass_blur, "sigma", {0.05, 0.25, 0.4, 0.25, 0.4});
    set(Kind::glass_blur, "max_delta", {1, 1, 1, 1, 1});
    set(Kind::glass_blur, "iterations", {1, 1, 1, 2, 2});
    set(Kind::defocus_blur, "radius", {0.3, 0.4, 0.5, 1.0, 1.5});
    set(Kind::defocus_blur, "alias_sigma", {0.4, 0.5, 0.6, 0.2, 0.1});
    set(Kind::motion_blur, "radius", {10, 10, 10, 10, 12});
    set(Kind::motion_blur, "sigma", {1.0, 1.5, 2.0, 2.5, 3.0});
    set(Kind::zoom_blur, "max_zoom", {0.05, 0.10, 0.15, 0.20, 0.25});
    set(Kind::zoom_blur, "zoom_step", {0.01, 0.01, 0.01, 0.01, 0.01});
    set(Kind::brightness, "offset", {0.05, 0.10, 0.15, 0.20, 0.30});
    set(Kind::contrast, "factor", {0.75, 0.5, 0.4, 0.3, 0.15});
    set(Kind::saturate, "factor", {0.3, 0.1, 1.5, 2.0, 2.5});
    set(Kind::pixelate, "scale", {0.95, 0.9, 0.85, 0.75, 0.65});
    set(Kind::jpeg_compression, "quality", {80, 65, 58, 50, 40});
    set(Kind::elastic_transform, "alpha", {0.5, 0.75, 1.0, 1.25, 1.5});
    set(Kind::elastic_transform, "sigma", {2.0, 2.0, 2.0, 1.75, 1.5});
    return t;
  }

  std::array<std::array<CorruptionParams, 5>, 15> cells_;
};

namespace detail {

inline Tensor clip01(std::vector<double> v, const Shape& shape) {
  for (auto& x : v) x = std::clamp(x, 0.0, 1.0);
  return Tensor(shape, std::move(v));
}

inline double param(const CorruptionParams& p, const char* key) {
  auto it = p.find(key);
  if (it == p.end()) throw UnsupportedCorruption(std::string("missing corruption parameter '") + key + "'");
  return it->second;
}

inline Tensor glass(const Tensor& x, const CorruptionParams& p, Rng& rng) {
  const double sigma = param(p, "sigma");
  const long d = static_cast<long>(param(p, "max_delta"));
  const int iters = static_cast<int>(param(p, "iterations"));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor y = data::quantize8(filters::gaussian_blur(x, sigma));
  std::vector<double> v = y.vec();
  for (int it = 0; it < iters; ++it) {
    for (long yy = static_cast<long>(h) - d; yy > d; --yy) {
      for (long xx = static_cast<long>(w) - d; xx > d; --xx) {
        // Offsets drawn from [-d, d) as in the reference definition.
        const long dx = rng.between(-d, d - 1), dy = rng.between(-d, d - 1);
        const long ys = yy + dy, xs = xx + dx;
        if (ys < 0 || xs < 0 || ys >= static_cast<long>(h) || xs >= static_cast<long>(w) ||
            yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) {
          continue;
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::swap(v[(ch * h + static_cast<std::size_t>(yy)) * w + static_cast<std::size_t>(xx)],
                    v[(ch * h + static_cast<std::size_t>(ys)) * w + static_cast<std::size_t>(xs)]);
        }
      }
    }
  }
  return filters::gaussian_blur(Tensor(x.shape(), std::move(v)), sigma);
}

inline Tensor motion(const Tensor& x, const CorruptionParams& p, Rng& rng) {
  const double radius = param(p, "radius"), sigma = param(p, "sigma");
  const double angle = rng.uniform(-45.0, 45.0) * std::numbers::pi / 180.0;
  const std::size_t taps = static_cast<std::size_t>(2 * radius + 1);
  std::vector<double> wt(taps);
  double total = 0;
  for (std::size_t i = 0; i < taps; ++i) total += wt[i] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<double> out(x.size(), 0.0);
  const double dy = std::sin(angle), dx = std::cos(angle);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        double s = 0;
        for (std::size_t i = 0; i < taps; ++i) {
          if (wt[i] < 1e-12 * total) break;
          const double t = static_cast<double>(i);
          s += wt[i] * filters::bilinear(x, ch, static_cast<double>(y) - t * dy, static_cast<double>(xx) - t * dx);
        }
        out[(ch * h + y) * w + xx] = s / total;
      }
  return Tensor(x.shape(), std::move(out));
}

inline Tensor zoom(const Tensor& x, const CorruptionParams& p) {
  const double max_zoom = param(p, "max_zoom"), step = param(p, "zoom_step");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const double cy = (static_cast<double>(h) - 1) / 2, cx = (static_cast<double>(w) - 1) / 2;
  std::vector<double> acc = x.vec();
  std::size_t n = 1;
  const auto count = static_cast<std::size_t>(std::floor(max_zoom / step + 1e-9)) + 1;
  for (std::size_t z = 0; z < count; ++z) {
    const double factor = 1.0 + static_cast<double>(z) * step;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx)
          acc[(ch * h + y) * w + xx] += filters::bilinear(x, ch, cy + (static_cast<double>(y) - cy) / factor,
                                                          cx + (static_cast<double>(xx) - cx) / factor);
    ++n;
  }
  for (auto& a : acc) a /= static_cast<double>(n);
  return Tensor(x.shape(), std::move(acc));
}

inline Tensor elastic(const Tensor& x, const CorruptionParams& p, Rng& rng) {
  const double alpha = param(p, "alpha"), sigma = param(p, "sigma");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  auto field = [&]() {
    std::vector<double> f(h * w);
    for (auto& v : f) v = rng.uniform(-1.0, 1.0);
    Tensor sm = filters::gaussian_blur(Tensor({1, h, w}, std::move(f)), sigma);
    double rms = 0;
    for (double v : sm.vec()) rms += v * v;
    rms = std::sqrt(rms / static_cast<double>(h * w));
    std::vector<double> out = sm.vec();
    for (auto& v : out) v = rms > 0 ? v / rms * alpha : 0.0;
    return out;
  };
  const auto fx = field(), fy = field();
  std::vector<double> out(x.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx)
        out[(ch * h + y) * w + xx] = filters::bilinear(x, ch, static_cast<double>(y) + fy[y * w + xx],
                                                       static_cast<double>(xx) + fx[y * w + xx]);
  return Tensor(x.shape(), std::move(out));
}

}  // namespace detail

/// Apply one corruption with explicit parameters. Output is clipped to [0,1]
/// and rounded to 8-bit levels; a pure function of (x, kind, params, seed).
inline Tensor apply_params(const Tensor& x, Kind kind, const CorruptionParams& p, std::uint64_t seed) {
  if (x.rank() != 3) throw std::invalid_argument("corruption: expects C×H×W image");
  for (double v : x.vec()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("corruption: input pixels must lie in [0,1]");
  }
  Rng rng(derive_seed(seed, name(kind)));
  const auto& in = x.vec();
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), hw = h * w;
  std::vector<double> v(in.size());
  Tensor out;
  switch (kind) {
    case Kind::gaussian_noise: {
      const double s = detail::param(p, "sigma");
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = in[i] + s * rng.normal();
      out = detail::clip01(std::move(v), x.shape());
      break;
    }
    case Kind::shot_noise: {
      const double lam = detail::param(p, "lambda");
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(rng.poisson(in[i] * lam)) / lam;
      out = detail::clip01(std::move(v), x.shape());
      break;
    }
    case Kind::impulse_noise: {
      const double amount = detail::param(p, "amount");
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = in[i];
        if (rng.uniform() < amount) v[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
      }
      out = detail::clip01(std::move(v), x.shape());
      break;
    }
    case Kind::speckle_noise: {
      const double s = detail::param(p, "sigma");
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = in[i] + in[i] * s * rng.normal();
      out = detail::clip01(std::move(v), x.shape());
      break;
    }
    case Kind::gaussian_blur:
      out = filters::gaussian_blur(x, detail::param(p, "sigma"));
      break;
    case Kind::defocus_blur:
      out = filters::filter2d(x, filters::defocus_kernel(detail::param(p, "radius"), detail::param(p, "alias_sigma")));
      break;
    case Kind::glass_blur:
      out = detail::glass(x, p, rng);
      break;
    case Kind::motion_blur:
      out = detail::motion(x, p, rng);
      break;
    case Kind::zoom_blur:
      out = detail::zoom(x, p);
      break;
    case Kind::brightness: {
      const double b = detail::param(p, "offset");
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = in[i] + b;
      out = detail::clip01(std::move(v), x.shape());
      break;
    }
    case Kind::contrast: {
      const double f = detail::param(p, "factor");
      for (std::size_t ch = 0; ch < c; ++ch) {
        double m = 0;
        for (std::size_t i = 0; i < hw; ++i) m += in[ch * hw + i];
        m /= static_cast<double>(hw);
        for (std::size_t i = 0; i < hw; ++i) v[ch * hw + i] = (in[ch * hw + i] - m) * f + m;
      }
      out = detail::clip01(std::move(v), x.shape());
      break;
    }
    case Kind::saturate: {
      const double f = detail::param(p, "factor");
      for (std::size_t i = 0; i < hw; ++i) {
        double m = 0;
        for (std::size_t ch = 0; ch < c; ++ch) m += in[ch * hw + i];
        m /= static_cast<double>(c);
        for (std::size_t ch = 0; ch < c; ++ch) v[ch * hw + i] = m + f * (in[ch * hw + i] - m);
      }
      out = detail::clip01(std::move(v), x.shape());
      break;
    }
    case Kind::pixelate: {
      const double s = detail::param(p, "scale");
      const auto sh = std::max<std::size_t>(1, static_cast<std::size_t>(static_cast<double>(h) * s));
      const auto sw = std::max<std::size_t>(1, static_cast<std::size_t>(static_cast<double>(w) * s));
      out = filters::box_resize(filters::box_resize(x, sh, sw), h, w);
      break;
    }
    case Kind::jpeg_compression:
      out = jpeg_roundtrip(x, static_cast<int>(detail::param(p, "quality")));
      break;
    case Kind::elastic_transform:
      out = detail::elastic(x, p, rng);
      break;
  }
  return data::quantize8(out);
}

inline Tensor apply(const Tensor& x, const CorruptionSpec& spec, const SeverityTable& table = SeverityTable::standard()) {
  spec.validate();
  return apply_params(x, spec.kind, table.at(spec.kind, spec.severity), spec.seed);
}

inline nlohmann::json to_json(const CorruptionSpec& s) {
  return {{"kind", std::string(name(s.kind))}, {"severity", s.severity}, {"seed", s.seed}};
}

inline CorruptionSpec spec_from_json(const nlohmann::json& j) {
  CorruptionSpec s;
  const auto kind = j.at("kind").get<std::string>();
  const auto k = parse_kind(kind);
  if (!k) throw UnsupportedCorruption("unsupported corruption kind '" + kind + "'");
  s.kind = *k;
  s.severity = j.at("severity").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.validate();
  return s;
}

}  // namespace lqd::corruptions
