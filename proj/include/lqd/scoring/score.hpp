#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lqd/hvae/model.hpp"
#include "lqd/scoring/frequency.hpp"
#include "lqd/scoring/kl.hpp"

namespace lqd::scoring {

using hvae::HvaeCheckpoint;

/// Adaptive split-layer configuration: k1 for high-frequency images (M > T), else k2.
struct ScoreConfig {
  std::size_t k1 = 1;
  std::size_t k2 = 3;
  double threshold = 1.0;
  std::size_t samples = 1;       // partial reconstructions averaged into x̂
  std::uint64_t seed = 0;
  bool sampled_inference = false;  // compare posteriors from sampled instead of mean latents
  std::size_t llr_k = 1;         // split for the LLR^{>k} baseline

  void validate(std::size_t num_layers) const {
    if (!(k1 < k2)) throw std::invalid_argument("ScoreConfig: need k1 < k2");
    if (k2 > num_layers - 1) throw std::invalid_argument("ScoreConfig: k2 must be <= L-1");
    if (samples == 0) throw std::invalid_argument("ScoreConfig: samples must be >= 1");
    if (!(threshold >= 0.0)) throw std::invalid_argument("ScoreConfig: threshold must be non-negative");
    if (llr_k > num_layers - 1) throw std::invalid_argument("ScoreConfig: llr_k must be <= L-1");
  }

  friend bool operator==(const ScoreConfig&, const ScoreConfig&) = default;
};

/// VDVAE/FFHQ-256 setting (66-layer model); kept for reference, not usable with the desk ladder.
inline constexpr std::size_t kReferenceK1 = 36;
inline constexpr std::size_t kReferenceK2 = 54;
inline constexpr double kReferenceThreshold = 1.8;

inline nlohmann::json to_json(const ScoreConfig& c) {
  return {{"k1", c.k1},
          {"k2", c.k2},
          {"threshold", c.threshold},
          {"samples", c.samples},
          {"seed", c.seed},
          {"sampled_inference", c.sampled_inference},
          {"llr_k", c.llr_k}};
}

inline ScoreConfig score_config_from_json(const nlohmann::json& j) {
  ScoreConfig c;
  try {
    c.k1 = j.at("k1").get<std::size_t>();
    c.k2 = j.at("k2").get<std::size_t>();
    c.threshold = j.at("threshold").get<double>();
    c.samples = j.value("samples", std::size_t{1});
    c.seed = j.value("seed", std::uint64_t{0});
    c.sampled_inference = j.value("sampled_inference", false);
    c.llr_k = j.value("llr_k", std::size_t{1});
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("ScoreConfig: ") + e.what());
  }
  return c;
}

struct LayerContribution {
  std::size_t layer;
  double kl;
};

struct ScoreResult {
  double score = 0.0;
  std::size_t k_used = 0;
  double high_freq_mean = 0.0;
  std::vector<LayerContribution> contributions;  // layers k_used+1 .. L
};

/// Posterior parameters of layers L .. k+1 with each layer conditioned on
/// the posterior mean (or a sample, when `sampled`) of the layer above.
inline std::vector<hvae::GaussianParams> upper_posteriors(const HvaeCheckpoint& ck, const Tensor& x, std::size_t k,
                                                          bool sampled, Rng& rng) {
  const hvae::Network net(ck);
  const auto features = hvae::encode_bottom_up(net, x);
  const auto st = hvae::top_down_pass(net, &features, {0, !sampled, k + 1}, rng);
  std::vector<hvae::GaussianParams> out;
  for (std::size_t l = k + 1; l <= ck.config.num_layers(); ++l) out.push_back(*st.latent_path.layer(l).posterior);
  return out;
}

/// Σ_{l>k} KL[q(z_l | x) ‖ q(z_l | x̂)] for a given reconstruction x̂.
inline ScoreResult s_kl_against(const HvaeCheckpoint& ck, const Tensor& x, const Tensor& x_hat, std::size_t k,
                                Rng& rng, bool sampled = false) {
  const std::size_t L = ck.config.num_layers();
  if (k >= L) throw std::invalid_argument("s_kl: k=" + std::to_string(k) + " outside [0, L-1]");
  Rng rng_hat = rng;  // both inference passes see the same noise
  const auto qx = upper_posteriors(ck, x, k, sampled, rng);
  const auto qh = upper_posteriors(ck, x_hat, k, sampled, rng_hat);
  ScoreResult r;
  r.k_used = k;
  for (std::size_t i = 0; i < qx.size(); ++i) {
    const double kl = kl_diag_gaussian(qx[i], qh[i]);
    r.contributions.push_back({k + 1 + i, kl});
    r.score += kl;
  }
  return r;
}

/// Mean of `samples` partial reconstructions at split k (each clamped to [0,1]).
inline Tensor averaged_partial_reconstruction(const HvaeCheckpoint& ck, const Tensor& x, std::size_t k,
                                              std::size_t samples, Rng& rng) {
  if (samples == 0) throw std::invalid_argument("samples must be >= 1");
  const hvae::Network net(ck);
  const auto features = hvae::encode_bottom_up(net, x);
  std::vector<double> acc(x.size(), 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    const auto st = hvae::top_down_pass(net, &features, {k, false, 1}, rng);
    const Tensor img = st.image();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += img[i];
  }
  if (samples > 1) {
    for (auto& a : acc) a /= static_cast<double>(samples);
  }
  return Tensor(x.shape(), std::move(acc));
}

/// S_KL at a fixed split k.
inline ScoreResult s_kl(const HvaeCheckpoint& ck, const Tensor& x, std::size_t k, Rng& rng, std::size_t samples = 1,
                        bool sampled = false) {
  if (k >= ck.config.num_layers()) throw std::invalid_argument("s_kl: k=" + std::to_string(k) + " outside [0, L-1]");
  const Tensor x_hat = averaged_partial_reconstruction(ck, x, k, samples, rng);
  return s_kl_against(ck, x, x_hat, k, rng, sampled);
}

inline std::size_t select_k(double high_freq_mean, const ScoreConfig& cfg) {
  return high_freq_mean > cfg.threshold ? cfg.k1 : cfg.k2;
}

inline std::size_t select_k(const Tensor& x, const ScoreConfig& cfg) { return select_k(high_freq_mean(x), cfg); }

/// Per-image generator derived from (config seed, image id).
inline Rng image_rng(std::uint64_t seed, std::string_view image_id) { return Rng(derive_seed(seed, image_id)); }

/// Adaptive-k S_KL.
inline ScoreResult score(const HvaeCheckpoint& ck, const Tensor& x, const ScoreConfig& cfg, std::string_view image_id) {
  cfg.validate(ck.config.num_layers());
  const double m = high_freq_mean(x);
  Rng rng = image_rng(cfg.seed, image_id);
  ScoreResult r = s_kl(ck, x, select_k(m, cfg), rng, cfg.samples, cfg.sampled_inference);
  r.high_freq_mean = m;
  return r;
}

/// Negative single-sample ELBO.
inline double likelihood_score(const HvaeCheckpoint& ck, const Tensor& x, Rng& rng) {
  return -hvae::elbo(ck, x, rng).elbo.item();
}

/// ELBO(x) − ELBO^{>k}(x); both passes draw the same noise stream.
inline double llr_k_score(const HvaeCheckpoint& ck, const Tensor& x, std::size_t k, Rng& rng) {
  if (k >= ck.config.num_layers()) throw std::invalid_argument("llr_k_score: k=" + std::to_string(k) + " outside [0, L-1]");
  Rng rng_split = rng;
  const double full = hvae::elbo(ck, x, rng).elbo.item();
  const double upper = hvae::elbo(ck, x, rng_split, k).elbo.item();
  return full - upper;
}

}  // namespace lqd::scoring
