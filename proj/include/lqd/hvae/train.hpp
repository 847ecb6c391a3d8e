#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "lqd/hvae/model.hpp"

namespace lqd::hvae {

struct TrainOptions {
  double lr = 2e-3;
  std::size_t epochs = 60;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  double grad_clip = 50.0;          // global-norm clip on the per-pixel loss gradient
  std::size_t kl_warmup_steps = 0;  // linear KL weight ramp 0 -> 1
  double lr_final_fraction = 0.1;   // cosine decay to lr·fraction by the last step
};

inline nlohmann::json to_json(const TrainOptions& o) {
  return {{"lr", o.lr},
          {"epochs", o.epochs},
          {"batch", o.batch},
          {"seed", o.seed},
          {"grad_clip", o.grad_clip},
          {"kl_warmup_steps", o.kl_warmup_steps},
          {"lr_final_fraction", o.lr_final_fraction}};
}

/// Missing keys keep their defaults.
inline TrainOptions train_options_from_json(const nlohmann::json& j) {
  TrainOptions o;
  try {
    o.lr = j.value("lr", o.lr);
    o.epochs = j.value("epochs", o.epochs);
    o.batch = j.value("batch", o.batch);
    o.seed = j.value("seed", o.seed);
    o.grad_clip = j.value("grad_clip", o.grad_clip);
    o.kl_warmup_steps = j.value("kl_warmup_steps", o.kl_warmup_steps);
    o.lr_final_fraction = j.value("lr_final_fraction", o.lr_final_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("TrainOptions: ") + e.what());
  }
  if (!(o.lr > 0.0)) throw std::invalid_argument("TrainOptions: lr must be positive");
  if (o.batch == 0) throw std::invalid_argument("TrainOptions: batch must be >= 1");
  return o;
}

struct EpochLog {
  std::size_t epoch;        // 1-based
  double mean_neg_elbo;     // nats per image, at unit KL weight
  double mean_kl;           // nats per image
  const HvaeCheckpoint* model = nullptr;  // parameters after this epoch
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam over a flat view of named parameters.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void set_lr(double lr) { lr_ = lr; }

  void step(ParamSet& params, const std::map<std::string, std::vector<double>>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (auto& [name, tensor] : params) {
      auto git = grads.find(name);
      if (git == grads.end()) continue;
      const auto& g = git->second;
      auto& m = m_[name];
      auto& v = v_[name];
      if (m.empty()) {
        m.assign(g.size(), 0.0);
        v.assign(g.size(), 0.0);
      }
      std::vector<double> w = tensor.vec();
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
        v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
        w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
      tensor = Tensor(tensor.shape(), std::move(w));
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

namespace detail {

struct StepResult {
  double neg_elbo = 0.0;
  double kl = 0.0;
};

// Accumulates d(loss)/d(param) into `grads` for one image, where
// loss = −(recon − β·KL) / numel.
inline StepResult accumulate_gradients(const HvaeCheckpoint& ck, const Tensor& x, Rng& rng, double kl_weight,
                                       std::map<std::string, std::vector<double>>& theta_grads,
                                       std::map<std::string, std::vector<double>>& phi_grads) {
  Tape tape;
  ParamSet theta, phi;
  for (const auto& [n, t] : ck.theta) theta[n] = tape.watch(t);
  for (const auto& [n, t] : ck.phi) phi[n] = tape.watch(t);
  const Network net(ck.config, theta, phi);

  ElboTerms terms = elbo(net, x, rng);
  double kl_total = std::accumulate(terms.kl.begin(), terms.kl.end(), 0.0);
  const double elbo_value = terms.elbo.item();
  Tensor objective = terms.elbo;
  if (kl_weight != 1.0) {
    // recon − β·KL = elbo + (1 − β)·KL, with KL = recon − elbo on the tape.
    objective = terms.elbo + scale(terms.reconstruction - terms.elbo, 1.0 - kl_weight);
  }
  const Tensor loss = scale(objective, -1.0 / static_cast<double>(x.size()));
  if (!std::isfinite(loss.item())) {
    throw TrainingDiverged("non-finite loss (elbo=" + std::to_string(elbo_value) + ")");
  }
  const Gradients g = tape.backward(loss);
  auto collect = [&g](const ParamSet& attached, std::map<std::string, std::vector<double>>& into) {
    for (const auto& [n, t] : attached) {
      if (!g.reached(t)) continue;
      const Tensor gt = g.of(t);
      auto& acc = into[n];
      if (acc.empty()) acc.assign(gt.size(), 0.0);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += gt[i];
    }
  };
  collect(theta, theta_grads);
  collect(phi, phi_grads);
  return {-elbo_value, kl_total};
}

}  // namespace detail

/// Maximizes the ELBO over `images` with Adam. Deterministic given options.seed.
inline HvaeCheckpoint train(const std::vector<Tensor>& images, const HvaeConfig& config, const TrainOptions& opts,
                            const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (images.empty()) throw std::invalid_argument("train: empty dataset");
  if (opts.batch == 0) throw std::invalid_argument("train: batch must be >= 1");
  for (const auto& x : images) check_image(config, x);

  HvaeCheckpoint ck = initialize(config, opts.seed);
  Adam adam_theta(opts.lr), adam_phi(opts.lr);
  Rng order_rng(derive_seed(opts.seed, "train-order"));
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);

  const std::size_t steps_per_epoch = (images.size() + opts.batch - 1) / opts.batch;
  const std::size_t total_steps = steps_per_epoch * opts.epochs;
  std::size_t step = 0;
  double last_loss = 0.0;
  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    double sum_neg_elbo = 0.0, sum_kl = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      const double kl_weight =
          opts.kl_warmup_steps ? std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(opts.kl_warmup_steps))
                               : 1.0;
      std::map<std::string, std::vector<double>> tg, pg;
      const std::size_t begin = b * opts.batch;
      const std::size_t end = std::min(images.size(), begin + opts.batch);
      for (std::size_t i = begin; i < end; ++i) {
        Rng rng(derive_seed(derive_seed(opts.seed, epoch), order[i]));
        detail::StepResult r;
        try {
          r = detail::accumulate_gradients(ck, images[order[i]], rng, kl_weight, tg, pg);
        } catch (const TrainingDiverged& e) {
          throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(step) + ", image " + std::to_string(order[i]) + ": " + e.what());
        }
        sum_neg_elbo += r.neg_elbo;
        sum_kl += r.kl;
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      double norm2 = 0.0;
      for (auto* gs : {&tg, &pg})
        for (auto& [n, g] : *gs)
          for (auto& v : g) {
            v *= inv;
            norm2 += v * v;
          }
      const double norm = std::sqrt(norm2);
      if (!std::isfinite(norm)) throw TrainingDiverged("non-finite gradient norm at step " + std::to_string(step));
      if (opts.grad_clip > 0 && norm > opts.grad_clip) {
        const double s = opts.grad_clip / norm;
        for (auto* gs : {&tg, &pg})
          for (auto& [n, g] : *gs)
            for (auto& v : g) v *= s;
      }
      double lr = opts.lr;
      if (opts.lr_final_fraction != 1.0 && total_steps > 1) {
        const double progress = static_cast<double>(step) / static_cast<double>(total_steps - 1);
        const double f = opts.lr_final_fraction + (1.0 - opts.lr_final_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
        lr = opts.lr * f;
      }
      adam_theta.set_lr(lr);
      adam_phi.set_lr(lr);
      adam_theta.step(ck.theta, tg);
      adam_phi.step(ck.phi, pg);
    }
    const double n = static_cast<double>(images.size());
    last_loss = sum_neg_elbo / n;
    if (on_epoch) {
      ck.meta.epochs = epoch;
      ck.meta.final_loss = last_loss;
      on_epoch({epoch, last_loss, sum_kl / n, &ck});
    }
  }
  ck.meta.epochs = opts.epochs;
  ck.meta.final_loss = last_loss;
  return ck;
}

}  // namespace lqd::hvae
