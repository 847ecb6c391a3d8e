#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "lqd/data/procedural.hpp"
#include "lqd/hvae/model.hpp"

namespace lqd::testing {

namespace fs = std::filesystem;

/// Small ladder over 8×8 images, cheap enough for exhaustive unit tests.
inline hvae::HvaeConfig tiny_config() {
  hvae::HvaeConfig c;
  c.image_height = 8;
  c.image_width = 8;
  c.hidden = 6;
  c.layers = {{2, 4, 4}, {2, 4, 4}, {2, 2, 2}, {2, 1, 1}};
  return c;
}

inline Tensor tiny_image(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "tiny-image"));
  std::vector<double> v(3 * 8 * 8);
  for (auto& x : v) x = std::round(rng.uniform() * 255.0) / 255.0;
  return Tensor({3, 8, 8}, std::move(v));
}

/// Desk-shaped model with random weights (no training).
inline hvae::HvaeCheckpoint untrained_desk(std::uint64_t seed = 1) {
  return hvae::initialize(hvae::HvaeConfig::desk(6), seed);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("lqd-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

}  // namespace lqd::testing
