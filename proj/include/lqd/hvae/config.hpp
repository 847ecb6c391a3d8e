#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace lqd::hvae {

struct LayerSpec {
  std::size_t channels = 4;
  std::size_t height = 16;
  std::size_t width = 16;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class ObsVariance { fixed, learned };

/// Architecture of the ladder. `layers[0]` is stochastic layer 1 (finest),
/// `layers.back()` is layer L (coarsest, standard-normal prior).
struct HvaeConfig {
  std::size_t image_channels = 3;
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  std::size_t hidden = 32;
  std::vector<LayerSpec> layers;
  ObsVariance obs_mode = ObsVariance::learned;
  double obs_logvar = -2.0;  // fixed value, or initial value when learned

  std::size_t num_layers() const { return layers.size(); }
  const LayerSpec& layer(std::size_t l) const { return layers.at(l - 1); }

  friend bool operator==(const HvaeConfig&, const HvaeConfig&) = default;

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("HvaeConfig: need at least one stochastic layer");
    if (!image_channels || !image_height || !image_width || !hidden) {
      throw std::invalid_argument("HvaeConfig: extents must be positive");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& s = layers[i];
      const std::string where = "HvaeConfig: layer " + std::to_string(i + 1);
      if (!s.channels || !s.height || !s.width) throw std::invalid_argument(where + " has a zero extent");
      if (image_height % s.height || image_width % s.width) {
        throw std::invalid_argument(where + " resolution does not divide the image size");
      }
      if (i > 0) {
        const auto& below = layers[i - 1];
        if (s.height > below.height || s.width > below.width) {
          throw std::invalid_argument(where + " is finer than the layer below it");
        }
        if (below.height % s.height || below.width % s.width) {
          throw std::invalid_argument(where + " resolution does not divide the layer below");
        }
      }
    }
  }

  /// The desk-scale ladder: 32×32 RGB, L stochastic layers spread over
  /// 16×16, 8×8 and 4×4, with a fixed observation noise of sd ≈ 0.018.
  static HvaeConfig desk(std::size_t num_layers = 6) {
    if (num_layers < 3) throw std::invalid_argument("desk config needs L >= 3");
    HvaeConfig c;
    const std::size_t per = num_layers / 3, extra = num_layers % 3;
    const std::size_t res[3] = {16, 8, 4};
    for (std::size_t g = 0; g < 3; ++g) {
      const std::size_t count = per + (g < extra ? 1 : 0);
      for (std::size_t i = 0; i < count; ++i) c.layers.push_back({4, res[g], res[g]});
    }
    c.obs_mode = ObsVariance::fixed;
    c.obs_logvar = -8.0;
    return c;
  }
};

inline nlohmann::json to_json(const HvaeConfig& c) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& s : c.layers) {
    layers.push_back({{"channels", s.channels}, {"height", s.height}, {"width", s.width}});
  }
  return {
      {"image", {c.image_channels, c.image_height, c.image_width}},
      {"hidden", c.hidden},
      {"layers", layers},
      {"obs_variance", c.obs_mode == ObsVariance::learned ? "learned" : "fixed"},
      {"obs_logvar", c.obs_logvar},
  };
}

inline HvaeConfig config_from_json(const nlohmann::json& j) {
  HvaeConfig c;
  try {
    const auto& img = j.at("image");
    c.image_channels = img.at(0).get<std::size_t>();
    c.image_height = img.at(1).get<std::size_t>();
    c.image_width = img.at(2).get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.layers.clear();
    for (const auto& s : j.at("layers")) {
      c.layers.push_back({s.at("channels").get<std::size_t>(), s.at("height").get<std::size_t>(),
                          s.at("width").get<std::size_t>()});
    }
    const auto mode = j.value("obs_variance", std::string("learned"));
    if (mode != "learned" && mode != "fixed") throw std::invalid_argument("obs_variance must be learned|fixed");
    c.obs_mode = mode == "learned" ? ObsVariance::learned : ObsVariance::fixed;
    c.obs_logvar = j.value("obs_logvar", -2.0);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("HvaeConfig: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace lqd::hvae
