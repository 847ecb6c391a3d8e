#include <gtest/gtest.h>

#include <cmath>

#include "lqd/scoring/score.hpp"
#include "lqd/scoring/visual.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace lqd;
using namespace lqd::scoring;

namespace {

const hvae::HvaeCheckpoint& model() {
  static const auto ck = lqd::testing::untrained_desk(5);
  return ck;
}

// Box test written directly on centred coordinates: shift by (H/2, W/2) and
// keep |u − H/2| < H/4 style membership of the middle half.
double oracle_high_freq_mean(const Tensor& rgb) {
  const std::size_t h = rgb.dim(1), w = rgb.dim(2);
  Tensor gray = grayscale(rgb);
  const auto spec = lqd::testing::direct_dft(gray);
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      const std::size_t cu = (u + h / 2) % h, cv = (v + w / 2) % w;  // centred position
      const bool low = cu >= h / 4 && cu < 3 * h / 4 && cv >= w / 4 && cv < 3 * w / 4;
      if (low) continue;
      total += std::abs(spec[u * w + v]);
      ++n;
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST(Frequency, HighFreqMeanMatchesDirectDftOracle) {
  for (std::uint64_t i = 0; i < 4; ++i) {
    const Tensor x = data::procedural_scene(i, 16);
    EXPECT_NEAR(high_freq_mean(x), oracle_high_freq_mean(x), 1e-9);
  }
}

TEST(Frequency, ConstantImageHasNoHighFrequency) {
  EXPECT_NEAR(high_freq_mean(Tensor::full({3, 32, 32}, 0.7)), 0.0, 1e-12);
}

TEST(Frequency, BrightnessOffsetLeavesSelectionUnchanged) {
  Rng rng(31);
  for (int i = 0; i < 50; ++i) {
    const Tensor x = lqd::testing::random_tensor(rng, {3, 32, 32}, 0.25, 0.75);
    const double c = rng.uniform(-0.25, 0.25);
    const Tensor y = add_scalar(x, c);
    const double mx = high_freq_mean(x), my = high_freq_mean(y);
    EXPECT_NEAR(mx, my, 1e-9 * mx);
    for (double t : {0.5 * mx, 2.0 * mx, rng.uniform(0.0, 4.0 * mx)}) {
      ScoreConfig cfg{1, 3, t};
      EXPECT_EQ(select_k(x, cfg), select_k(y, cfg));
    }
  }
}

TEST(ScoreConfig, ValidationAndJson) {
  ScoreConfig c{2, 4, 1.5, 3, 9, true, 2};
  EXPECT_EQ(score_config_from_json(to_json(c)), c);
  EXPECT_NO_THROW(c.validate(6));
  EXPECT_THROW((ScoreConfig{3, 3, 1.0}).validate(6), std::invalid_argument);
  EXPECT_THROW((ScoreConfig{1, 6, 1.0}).validate(6), std::invalid_argument);
  ScoreConfig z{1, 2, 1.0};
  z.samples = 0;
  EXPECT_THROW(z.validate(6), std::invalid_argument);
  EXPECT_THROW(score_config_from_json({{"k1", 1}}), std::invalid_argument);
}

TEST(Skl, NonNegativeWithPerLayerContributions) {
  for (std::uint64_t i = 0; i < 6; ++i) {
    const Tensor x = data::procedural_scene(i);
    for (std::size_t k = 0; k < 6; ++k) {
      Rng rng(i * 10 + k);
      const auto r = s_kl(model(), x, k, rng);
      EXPECT_GE(r.score, 0.0);
      ASSERT_EQ(r.contributions.size(), 6 - k);
      double total = 0.0;
      for (std::size_t j = 0; j < r.contributions.size(); ++j) {
        EXPECT_EQ(r.contributions[j].layer, k + 1 + j);
        EXPECT_GE(r.contributions[j].kl, 0.0);
        total += r.contributions[j].kl;
      }
      EXPECT_DOUBLE_EQ(total, r.score);
    }
  }
}

TEST(Skl, ZeroWhenReconstructionIsTheInput) {
  const Tensor x = data::procedural_scene(7);
  for (std::size_t k = 0; k < 6; ++k) {
    Rng rng(k);
    EXPECT_EQ(s_kl_against(model(), x, x, k, rng).score, 0.0);
  }
}

TEST(Skl, ReproducibleUnderFixedSeed) {
  const Tensor x = data::procedural_scene(8);
  ScoreConfig cfg{1, 3, 50.0};
  const auto a = score(model(), x, cfg, "img-8"), b = score(model(), x, cfg, "img-8");
  EXPECT_EQ(a.score, b.score);
  ASSERT_EQ(a.contributions.size(), b.contributions.size());
  for (std::size_t i = 0; i < a.contributions.size(); ++i) EXPECT_EQ(a.contributions[i].kl, b.contributions[i].kl);
  const auto c = score(model(), x, cfg, "img-9");
  EXPECT_NE(a.score, c.score);
}

TEST(Skl, AdaptiveSplitUsesK1OrK2) {
  Rng rng(33);
  for (int i = 0; i < 12; ++i) {
    const Tensor x = data::procedural_scene(200 + i);
    const double m = high_freq_mean(x);
    ScoreConfig cfg{1, 4, rng.uniform(0.5, 1.5) * m};
    const auto r = score(model(), x, cfg, "id");
    EXPECT_TRUE(r.k_used == 1 || r.k_used == 4);
    EXPECT_EQ(r.k_used, m > cfg.threshold ? 1u : 4u);
    EXPECT_DOUBLE_EQ(r.high_freq_mean, m);
  }
}

TEST(Skl, RejectsSplitOutsideLadder) {
  Rng rng(1);
  EXPECT_THROW(s_kl(model(), data::procedural_scene(1), 6, rng), std::invalid_argument);
  EXPECT_THROW(score(model(), data::procedural_scene(1), ScoreConfig{1, 6, 1.0}, "x"), std::invalid_argument);
}

TEST(Skl, AveragedReconstructionStaysInRange) {
  Rng rng(2);
  const Tensor xh = averaged_partial_reconstruction(model(), data::procedural_scene(2), 2, 4, rng);
  for (double v : xh.vec()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(averaged_partial_reconstruction(model(), data::procedural_scene(2), 2, 0, rng), std::invalid_argument);
}

TEST(Baselines, FiniteAndSeeded) {
  const Tensor x = data::procedural_scene(3);
  Rng a(4), b(4);
  const double la = likelihood_score(model(), x, a), lb = likelihood_score(model(), x, b);
  EXPECT_TRUE(std::isfinite(la));
  EXPECT_EQ(la, lb);
  Rng c(5), d(5);
  EXPECT_EQ(llr_k_score(model(), x, 2, c), llr_k_score(model(), x, 2, d));
  Rng e(6);
  EXPECT_THROW(llr_k_score(model(), x, 6, e), std::invalid_argument);
  Rng f(7);
  EXPECT_EQ(llr_k_score(model(), x, 0, f), 0.0);
}

TEST(Visual, StripAndClueShapes) {
  const Tensor x = data::procedural_scene(4);
  ScoreConfig cfg{1, 3, 1.0};
  const Tensor clue = clue_image(model(), x, 2, cfg, "a");
  EXPECT_EQ(clue.shape(), x.shape());
  EXPECT_EQ(clue.vec(), clue_image(model(), x, 2, cfg, "a").vec());
  const Tensor s = strip(model(), x, {1, 3}, cfg, "a");
  EXPECT_EQ(s.shape(), (Shape{3, 32, 32 * 4}));
  EXPECT_THROW(hconcat({}), std::invalid_argument);
}
