#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lqd/corruptions/corruptions.hpp"

namespace lqd::corruptions {

enum class Label { clean, corrupted };

inline std::string_view label_name(Label l) { return l == Label::clean ? "clean" : "corrupted"; }

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "clean") return Label::clean;
  if (s == "corrupted") return Label::corrupted;
  return std::nullopt;
}

struct SourceImage {
  std::string id;
  Tensor image;
};

struct BenchmarkItem {
  std::string id;
  std::string source_id;
  std::string group;  // kind name for per-kind splits, "pooled" for the mixed split
  Label label = Label::clean;
  std::optional<CorruptionSpec> spec;
  Tensor image;
};

inline constexpr std::string_view kPooledGroup = "pooled";

struct BenchmarkOptions {
  int severity = 1;
  std::uint64_t seed = 0;
  bool per_kind = true;
  bool pooled = true;
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx.begin(), idx.end());
  return idx;
}

inline BenchmarkItem make_item(const SourceImage& src, std::string_view group, std::optional<CorruptionSpec> spec) {
  BenchmarkItem it;
  it.source_id = src.id;
  it.group = std::string(group);
  it.id = it.group + "-" + src.id;
  if (spec) {
    it.label = Label::corrupted;
    it.spec = spec;
    it.image = apply(src.image, *spec);
  } else {
    it.image = data::quantize8(src.image);
  }
  return it;
}

inline std::uint64_t corruption_seed(std::uint64_t seed, const std::string& source_id, Kind kind) {
  return derive_seed(seed, source_id + "/" + std::string(name(kind)));
}

}  // namespace detail

/// Clean/corrupted splits built from `clean`. Each split uses floor(n/2) clean
/// and floor(n/2) corrupted images drawn from disjoint halves of a per-split
/// shuffle. The pooled split assigns kinds round-robin over its corrupted half,
/// so per-kind counts differ by at most one.
inline std::vector<BenchmarkItem> build_benchmark(const std::vector<SourceImage>& clean, const std::vector<Kind>& kinds,
                                                  const BenchmarkOptions& opts) {
  if (clean.empty()) throw std::invalid_argument("build_benchmark: empty clean set");
  if (kinds.empty()) throw std::invalid_argument("build_benchmark: empty kinds list");
  if (opts.severity < 1 || opts.severity > 5) throw UnsupportedCorruption("severity outside [1, 5]");
  const std::size_t half = clean.size() / 2;
  if (half == 0) throw std::invalid_argument("build_benchmark: need at least two clean images");

  std::vector<BenchmarkItem> out;
  if (opts.per_kind) {
    for (Kind k : kinds) {
      const auto idx = detail::shuffled_indices(clean.size(), derive_seed(opts.seed, name(k)));
      for (std::size_t i = 0; i < half; ++i) out.push_back(detail::make_item(clean[idx[i]], name(k), std::nullopt));
      for (std::size_t i = half; i < 2 * half; ++i) {
        const auto& src = clean[idx[i]];
        out.push_back(detail::make_item(src, name(k), CorruptionSpec{k, opts.severity, detail::corruption_seed(opts.seed, src.id, k)}));
      }
    }
  }
  if (opts.pooled) {
    const auto idx = detail::shuffled_indices(clean.size(), derive_seed(opts.seed, kPooledGroup));
    for (std::size_t i = 0; i < half; ++i) out.push_back(detail::make_item(clean[idx[i]], kPooledGroup, std::nullopt));
    auto order = detail::shuffled_indices(half, derive_seed(opts.seed, "pooled-kinds"));
    for (std::size_t j = 0; j < half; ++j) {
      const Kind k = kinds[order[j] % kinds.size()];
      const auto& src = clean[idx[half + j]];
      out.push_back(detail::make_item(src, kPooledGroup, CorruptionSpec{k, opts.severity, detail::corruption_seed(opts.seed, src.id, k)}));
    }
  }
  return out;
}

}  // namespace lqd::corruptions
