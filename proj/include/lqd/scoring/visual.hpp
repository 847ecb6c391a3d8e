#pragma once

#include <stdexcept>
#include <string_view>
#include <vector>

#include "lqd/data/procedural.hpp"
#include "lqd/scoring/score.hpp"

namespace lqd::scoring {

/// The x̂ that S_KL compares against at split k, quantized for display.
inline Tensor clue_image(const HvaeCheckpoint& ck, const Tensor& x, std::size_t k, const ScoreConfig& cfg,
                         std::string_view image_id) {
  Rng rng = image_rng(cfg.seed, image_id);
  return data::quantize8(averaged_partial_reconstruction(ck, x, k, cfg.samples, rng));
}

/// Images of equal C and H placed left to right.
inline Tensor hconcat(const std::vector<Tensor>& panels) {
  if (panels.empty()) throw std::invalid_argument("hconcat: no panels");
  const std::size_t c = panels[0].dim(0), h = panels[0].dim(1);
  std::size_t w = 0;
  for (const auto& p : panels) {
    if (p.rank() != 3 || p.dim(0) != c || p.dim(1) != h) throw std::invalid_argument("hconcat: panel shape mismatch");
    w += p.dim(2);
  }
  std::vector<double> out(c * h * w);
  std::size_t x0 = 0;
  for (const auto& p : panels) {
    const std::size_t pw = p.dim(2);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < pw; ++x) out[(ch * h + y) * w + x0 + x] = p[(ch * h + y) * pw + x];
    x0 += pw;
  }
  return Tensor({c, h, w}, std::move(out));
}

/// Images of equal C and W stacked top to bottom.
inline Tensor vconcat(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::invalid_argument("vconcat: no rows");
  const std::size_t c = rows[0].dim(0), w = rows[0].dim(2);
  std::size_t h = 0;
  for (const auto& r : rows) {
    if (r.rank() != 3 || r.dim(0) != c || r.dim(2) != w) throw std::invalid_argument("vconcat: row shape mismatch");
    h += r.dim(1);
  }
  std::vector<double> flat(c * h * w);
  std::size_t y0 = 0;
  for (const auto& r : rows) {
    const std::size_t rh = r.dim(1);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < rh; ++y)
        for (std::size_t x = 0; x < w; ++x) flat[(ch * h + y0 + y) * w + x] = r[(ch * rh + y) * w + x];
    y0 += rh;
  }
  return Tensor({c, h, w}, std::move(flat));
}

/// [input | reconstruction | partial reconstruction at each k], one panel per entry.
inline Tensor strip(const HvaeCheckpoint& ck, const Tensor& x, const std::vector<std::size_t>& ks,
                    const ScoreConfig& cfg, std::string_view image_id) {
  const std::size_t L = ck.config.num_layers();
  for (std::size_t k : ks) {
    if (k >= L) throw std::invalid_argument("strip: k=" + std::to_string(k) + " outside [0, L-1]");
  }
  std::vector<Tensor> panels{data::quantize8(x), clue_image(ck, x, 0, cfg, image_id)};
  for (std::size_t k : ks) panels.push_back(clue_image(ck, x, k, cfg, image_id));
  return hconcat(panels);
}

}  // namespace lqd::scoring
