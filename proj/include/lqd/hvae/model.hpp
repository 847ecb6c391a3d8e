#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lqd/hvae/config.hpp"
#include "lqd/hvae/gaussian.hpp"
#include "lqd/numerics.hpp"

namespace lqd::hvae {

using ParamSet = std::map<std::string, Tensor>;

struct TrainingMeta {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double final_loss = 0.0;

  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

/// Complete model: configuration, generative parameters θ (top-down path,
/// priors, decoder) and inference parameters φ (bottom-up path, posteriors).
struct HvaeCheckpoint {
  HvaeConfig config;
  ParamSet theta;
  ParamSet phi;
  TrainingMeta meta;
};

/// Borrowed view of a model; training passes tape-attached parameter maps.
struct Network {
  const HvaeConfig& config;
  const ParamSet& theta;
  const ParamSet& phi;

  explicit Network(const HvaeCheckpoint& c) : config(c.config), theta(c.theta), phi(c.phi) {}
  Network(const HvaeConfig& c, const ParamSet& t, const ParamSet& p) : config(c), theta(t), phi(p) {}
};

enum class Source { posterior, prior };

struct LatentLayer {
  std::optional<GaussianParams> posterior;
  GaussianParams prior;
  Tensor sample;
  Source source = Source::prior;
};

/// Per-layer latent record; `layers[l-1]` holds layer l.
struct LatentPath {
  std::vector<LatentLayer> layers;

  std::size_t size() const { return layers.size(); }
  const LatentLayer& layer(std::size_t l) const { return layers.at(l - 1); }
};

struct ReconState {
  Tensor mean;        // predicted observation mean (unclamped)
  Tensor obs_logvar;  // scalar
  LatentPath latent_path;

  /// Observation mean clamped to [0,1] for export.
  Tensor image() const { return clamp(mean.detach(), 0.0, 1.0); }
};

/// Bottom-up feature per stochastic layer; `[l-1]` feeds layer l.
using FeatureStack = std::vector<Tensor>;

struct TopDownOptions {
  std::size_t k = 0;             // layers l > k use the posterior
  bool deterministic = false;    // use distribution means instead of samples
  std::size_t stop_layer = 1;    // last layer processed; > 1 skips the decoder
};

namespace detail {

inline const Tensor& param(const ParamSet& set, const std::string& name) {
  auto it = set.find(name);
  if (it == set.end()) throw std::invalid_argument("missing parameter '" + name + "'");
  return it->second;
}

inline Tensor conv_bias(const Tensor& x, const ParamSet& set, const std::string& prefix, std::size_t pad = 1) {
  return add(conv2d(x, param(set, prefix + ".w"), 1, pad), param(set, prefix + ".b"));
}

inline std::string lname(const char* group, std::size_t l, const char* leaf = nullptr) {
  std::string s = std::string(group) + ".l" + std::to_string(l);
  if (leaf) s += std::string(".") + leaf;
  return s;
}

inline void put_conv(ParamSet& set, Rng& rng, const std::string& prefix, std::size_t out, std::size_t in,
                     std::size_t k, double gain, double bias = 0.0) {
  const double sd = gain / std::sqrt(static_cast<double>(in * k * k));
  std::vector<double> w(out * in * k * k);
  for (auto& v : w) v = rng.normal() * sd;
  set[prefix + ".w"] = Tensor({out, in, k, k}, std::move(w));
  set[prefix + ".b"] = Tensor::full({out, 1, 1}, bias);
}

}  // namespace detail

/// Seeded parameter initialization for `config`.
inline HvaeCheckpoint initialize(const HvaeConfig& config, std::uint64_t seed) {
  config.validate();
  HvaeCheckpoint ck;
  ck.config = config;
  ck.meta.seed = seed;
  Rng rng(derive_seed(seed, "hvae-init"));
  const std::size_t w = config.hidden;
  const std::size_t L = config.num_layers();

  detail::put_conv(ck.phi, rng, "enc.stem", w, config.image_channels, 3, 1.0);
  for (std::size_t l = 1; l <= L; ++l) {
    const auto& s = config.layer(l);
    detail::put_conv(ck.phi, rng, detail::lname("enc", l), w, w, 3, 0.5);
    detail::put_conv(ck.phi, rng, detail::lname("post", l), 2 * s.channels, 2 * w, 3, 0.1);
    if (l < L) detail::put_conv(ck.theta, rng, detail::lname("prior", l), 2 * s.channels, w, 3, 0.1);
    detail::put_conv(ck.theta, rng, detail::lname("dec", l, "z"), w, s.channels, 3, 1.0);
    detail::put_conv(ck.theta, rng, detail::lname("dec", l, "res"), w, w, 3, 0.5);
  }
  const auto& top = config.layer(L);
  ck.theta["dec.top"] = Tensor::zeros({w, top.height, top.width});
  detail::put_conv(ck.theta, rng, "dec.out1", w, w, 3, 1.0);
  detail::put_conv(ck.theta, rng, "dec.out2", config.image_channels, w, 3, 0.1, 0.5);
  if (config.obs_mode == ObsVariance::learned) ck.theta["dec.obs_logvar"] = Tensor::scalar(config.obs_logvar);
  return ck;
}

inline void check_image(const HvaeConfig& config, const Tensor& x) {
  const Shape want{config.image_channels, config.image_height, config.image_width};
  if (x.shape() != want) {
    throw std::invalid_argument("image shape " + shape_str(x.shape()) + " does not match model " + shape_str(want));
  }
}

/// Deterministic bottom-up pass: one feature map per stochastic layer.
inline FeatureStack encode_bottom_up(const Network& net, const Tensor& x) {
  check_image(net.config, x);
  FeatureStack features;
  features.reserve(net.config.num_layers());
  Tensor a = silu(detail::conv_bias(x, net.phi, "enc.stem"));
  for (std::size_t l = 1; l <= net.config.num_layers(); ++l) {
    const auto& s = net.config.layer(l);
    if (a.dim(1) != s.height) a = resample(a, a.dim(1) / s.height, Resample::down);
    a = a + silu(detail::conv_bias(a, net.phi, detail::lname("enc", l)));
    features.push_back(a);
  }
  return features;
}

inline FeatureStack encode_bottom_up(const HvaeCheckpoint& ck, const Tensor& x) {
  return encode_bottom_up(Network(ck), x);
}

inline Tensor observation_logvar(const Network& net) {
  if (net.config.obs_mode == ObsVariance::learned) {
    return clamp(detail::param(net.theta, "dec.obs_logvar"), kLogVarMin, kLogVarMax);
  }
  return Tensor::scalar(net.config.obs_logvar);
}

/// Top-down pass from layer L to `opts.stop_layer`.
///
/// Layer l > k samples from q(z_l | z_{l+1}, x) and records both posterior
/// and prior; layer l <= k samples from p(z_l | z_{l+1}). With k = L no
/// features are needed (unconditional generation).
inline ReconState top_down_pass(const Network& net, const FeatureStack* features, const TopDownOptions& opts,
                                Rng& rng) {
  const auto& cfg = net.config;
  const std::size_t L = cfg.num_layers();
  if (opts.k > L) throw std::invalid_argument("top_down_pass: k=" + std::to_string(opts.k) + " outside [0, L]");
  if (opts.k < L && (!features || features->size() != L)) {
    throw std::invalid_argument("top_down_pass: bottom-up features required for k < L");
  }
  if (opts.stop_layer < 1 || opts.stop_layer > L) throw std::invalid_argument("top_down_pass: bad stop_layer");

  ReconState state;
  state.latent_path.layers.resize(L);
  Tensor h = detail::param(net.theta, "dec.top");
  for (std::size_t l = L; l >= opts.stop_layer; --l) {
    const auto& s = cfg.layer(l);
    if (h.dim(1) != s.height) h = resample(h, s.height / h.dim(1), Resample::up);
    const Shape zshape{s.channels, s.height, s.width};

    LatentLayer& rec = state.latent_path.layers[l - 1];
    rec.prior = l == L ? GaussianParams::standard(zshape)
                       : GaussianParams::from_network(detail::conv_bias(h, net.theta, detail::lname("prior", l)));
    const GaussianParams* dist = &rec.prior;
    if (l > opts.k) {
      rec.posterior = GaussianParams::from_network(
          detail::conv_bias(concat0(h, (*features)[l - 1]), net.phi, detail::lname("post", l)));
      rec.source = Source::posterior;
      dist = &*rec.posterior;
    } else {
      rec.source = Source::prior;
    }
    if (opts.deterministic) {
      rec.sample = dist->mean;
    } else {
      std::vector<double> eps(shape_numel(zshape));
      for (auto& e : eps) e = rng.normal();
      rec.sample = reparameterize(*dist, Tensor(zshape, std::move(eps)));
    }
    h = h + detail::conv_bias(rec.sample, net.theta, detail::lname("dec", l, "z"));
    h = h + silu(detail::conv_bias(h, net.theta, detail::lname("dec", l, "res")));
    if (l == 1) break;
  }
  if (opts.stop_layer > 1) return state;

  if (h.dim(1) != cfg.image_height) h = resample(h, cfg.image_height / h.dim(1), Resample::up);
  const Tensor o = silu(detail::conv_bias(h, net.theta, "dec.out1"));
  state.mean = detail::conv_bias(o, net.theta, "dec.out2");
  state.obs_logvar = observation_logvar(net);
  return state;
}

inline ReconState top_down_pass(const HvaeCheckpoint& ck, const FeatureStack* features, const TopDownOptions& opts,
                                Rng& rng) {
  return top_down_pass(Network(ck), features, opts, rng);
}

/// Partial reconstruction: posterior for z_{>k}, prior for z_{<=k}; the
/// returned state's image() is the observation mean clamped to [0,1].
inline ReconState partial_reconstruct(const HvaeCheckpoint& ck, const Tensor& x, std::size_t k, Rng& rng,
                                      bool deterministic = false) {
  const std::size_t L = ck.config.num_layers();
  if (k >= L) throw std::invalid_argument("partial_reconstruct: k=" + std::to_string(k) + " outside [0, L-1]");
  const Network net(ck);
  const FeatureStack features = encode_bottom_up(net, x);
  return top_down_pass(net, &features, {k, deterministic, 1}, rng);
}

inline ReconState reconstruct(const HvaeCheckpoint& ck, const Tensor& x, Rng& rng, bool deterministic = false) {
  return partial_reconstruct(ck, x, 0, rng, deterministic);
}

/// Unconditional sample (all layers from the prior).
inline ReconState generate(const HvaeCheckpoint& ck, Rng& rng) {
  return top_down_pass(Network(ck), nullptr, {ck.config.num_layers(), false, 1}, rng);
}

struct ElboTerms {
  Tensor elbo;                  // scalar, tape-aware when parameters are
  Tensor reconstruction;        // log p(x | z_1)
  std::vector<double> kl;       // per layer, kl[l-1]; zero for prior-sampled layers
  ReconState state;
};

/// Single-sample ELBO with analytic per-layer KL. With k > 0 the posterior is
/// replaced by the prior at layers l <= k in both sampling and KL accounting.
inline ElboTerms elbo(const Network& net, const Tensor& x, Rng& rng, std::size_t k = 0) {
  const FeatureStack features = encode_bottom_up(net, x);
  ElboTerms out;
  out.state = top_down_pass(net, &features, {k, false, 1}, rng);
  out.reconstruction = log_density_shared(x, out.state.mean, out.state.obs_logvar);
  Tensor total = out.reconstruction;
  const std::size_t L = net.config.num_layers();
  out.kl.assign(L, 0.0);
  for (std::size_t l = L; l > k; --l) {
    const LatentLayer& rec = out.state.latent_path.layer(l);
    const Tensor kl = l == L ? kl_standard(*rec.posterior) : kl_divergence(*rec.posterior, rec.prior);
    out.kl[l - 1] = kl.item();
    total = total - kl;
  }
  out.elbo = total;
  return out;
}

inline ElboTerms elbo(const HvaeCheckpoint& ck, const Tensor& x, Rng& rng, std::size_t k = 0) {
  return elbo(Network(ck), x, rng, k);
}

/// Monte-Carlo log weight log p(x, z) − log q(z | x) for one posterior sample.
inline double log_importance_weight(const HvaeCheckpoint& ck, const Tensor& x, Rng& rng) {
  const Network net(ck);
  const FeatureStack features = encode_bottom_up(net, x);
  const ReconState st = top_down_pass(net, &features, {0, false, 1}, rng);
  double lw = log_density_shared(x, st.mean, st.obs_logvar).item();
  for (const auto& rec : st.latent_path.layers) {
    lw += log_density(rec.sample, rec.prior).item();
    lw -= log_density(rec.sample, *rec.posterior).item();
  }
  return lw;
}

/// Importance-weighted bound log (1/K) Σ_k w_k.
inline double iwae_bound(const HvaeCheckpoint& ck, const Tensor& x, std::size_t samples, Rng& rng) {
  if (samples == 0) throw std::invalid_argument("iwae_bound: samples must be >= 1");
  std::vector<double> lw(samples);
  for (auto& v : lw) v = log_importance_weight(ck, x, rng);
  const double m = *std::max_element(lw.begin(), lw.end());
  double s = 0.0;
  for (double v : lw) s += std::exp(v - m);
  return m + std::log(s / static_cast<double>(samples));
}

}  // namespace lqd::hvae
