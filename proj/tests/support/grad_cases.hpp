#pragma once

#include <string>
#include <vector>

#include "support/oracles.hpp"

namespace lqd::testing {

struct GradCase {
  std::string name;
  ScalarFn fn;
  std::vector<Tensor> inputs;
};

/// Randomized gradient-check instances covering every differentiable
/// primitive, `rounds` draws each. Inputs avoid kinks and domain edges.
inline std::vector<GradCase> primitive_grad_cases(Rng& rng, std::size_t rounds) {
  std::vector<GradCase> cases;
  auto unary_case = [&](std::string name, Tensor (*op)(const Tensor&), double lo, double hi,
                        std::vector<double> kinks = {}) {
    const Tensor w = random_tensor(rng, {2, 3});
    cases.push_back({std::move(name), [op, w](const std::vector<Tensor>& in) { return weighted_sum(op(in[0]), w); },
                     {random_away_from(rng, {2, 3}, lo, hi, std::move(kinks))}});
  };
  for (std::size_t r = 0; r < rounds; ++r) {
    const Tensor w23 = random_tensor(rng, {2, 3});
    cases.push_back({"add_broadcast",
                     [w23](const std::vector<Tensor>& in) { return weighted_sum(in[0] + in[1], w23); },
                     {random_tensor(rng, {2, 3}), random_tensor(rng, {3})}});
    cases.push_back({"sub_broadcast",
                     [w23](const std::vector<Tensor>& in) { return weighted_sum(in[0] - in[1], w23); },
                     {random_tensor(rng, {2, 1}), random_tensor(rng, {2, 3})}});
    cases.push_back({"mul_broadcast",
                     [w23](const std::vector<Tensor>& in) { return weighted_sum(in[0] * in[1], w23); },
                     {random_tensor(rng, {2, 3}), random_tensor(rng, {1, 3})}});
    cases.push_back({"div", [w23](const std::vector<Tensor>& in) { return weighted_sum(in[0] / in[1], w23); },
                     {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3}, 0.5, 2.0)}});
    unary_case("exp", &lqd::exp, -2.0, 2.0);
    unary_case("log", &lqd::log, 0.2, 3.0);
    unary_case("softplus", &lqd::softplus, -4.0, 4.0);
    unary_case("tanh", &lqd::tanh, -2.0, 2.0);
    unary_case("relu", &lqd::relu, -2.0, 2.0, {0.0});
    unary_case("silu", &lqd::silu, -4.0, 4.0);
    unary_case("sigmoid", &lqd::sigmoid, -4.0, 4.0);
    unary_case("square", &lqd::square, -2.0, 2.0);
    unary_case("negate", &lqd::negate, -2.0, 2.0);
    cases.push_back({"affine", [w23](const std::vector<Tensor>& in) { return weighted_sum(affine(in[0], -1.7, 0.3), w23); },
                     {random_tensor(rng, {2, 3})}});
    cases.push_back({"clamp",
                     [w23](const std::vector<Tensor>& in) { return weighted_sum(clamp(in[0], -0.5, 0.5), w23); },
                     {random_away_from(rng, {2, 3}, -1.0, 1.0, {-0.5, 0.5})}});
    cases.push_back({"mean", [](const std::vector<Tensor>& in) { return square(mean(in[0])); },
                     {random_tensor(rng, {2, 3})}});
    const Tensor w6 = random_tensor(rng, {3, 2});
    cases.push_back({"reshape", [w6](const std::vector<Tensor>& in) { return weighted_sum(reshape(in[0], {3, 2}), w6); },
                     {random_tensor(rng, {2, 3})}});
    const Tensor w43 = random_tensor(rng, {4, 3});
    cases.push_back({"concat0", [w43](const std::vector<Tensor>& in) { return weighted_sum(concat0(in[0], in[1]), w43); },
                     {random_tensor(rng, {1, 3}), random_tensor(rng, {3, 3})}});
    const Tensor w13 = random_tensor(rng, {2, 3});
    cases.push_back({"slice0", [w13](const std::vector<Tensor>& in) { return weighted_sum(slice0(in[0], 1, 3), w13); },
                     {random_tensor(rng, {4, 3})}});
    const Tensor w24 = random_tensor(rng, {2, 4});
    cases.push_back({"matmul", [w24](const std::vector<Tensor>& in) { return weighted_sum(matmul(in[0], in[1]), w24); },
                     {random_tensor(rng, {2, 3}), random_tensor(rng, {3, 4})}});
    const Tensor wc = random_tensor(rng, {2, 3, 3});
    cases.push_back({"conv2d_stride2_pad1",
                     [wc](const std::vector<Tensor>& in) { return weighted_sum(conv2d(in[0], in[1], 2, 1), wc); },
                     {random_tensor(rng, {2, 5, 5}), random_tensor(rng, {2, 2, 3, 3})}});
    const Tensor wd = random_tensor(rng, {2, 2, 2});
    cases.push_back({"resample_down",
                     [wd](const std::vector<Tensor>& in) { return weighted_sum(resample(in[0], 2, Resample::down), wd); },
                     {random_tensor(rng, {2, 4, 4})}});
    const Tensor wu = random_tensor(rng, {1, 4, 4});
    cases.push_back({"resample_up",
                     [wu](const std::vector<Tensor>& in) { return weighted_sum(resample(in[0], 2, Resample::up), wu); },
                     {random_tensor(rng, {1, 2, 2})}});
    cases.push_back({"kl_divergence",
                     [](const std::vector<Tensor>& in) {
                       return hvae::kl_divergence({in[0], in[1]}, {in[2], in[3]});
                     },
                     {random_tensor(rng, {4}), random_tensor(rng, {4}), random_tensor(rng, {4}), random_tensor(rng, {4})}});
    const Tensor x = random_tensor(rng, {5});
    cases.push_back({"log_density",
                     [x](const std::vector<Tensor>& in) { return hvae::log_density(x, {in[0], in[1]}); },
                     {random_tensor(rng, {5}), random_tensor(rng, {5})}});
    const Tensor eps = random_tensor(rng, {3});
    cases.push_back({"reparameterize",
                     [eps](const std::vector<Tensor>& in) { return sum(square(hvae::reparameterize({in[0], in[1]}, eps))); },
                     {random_tensor(rng, {3}), random_tensor(rng, {3})}});
  }
  return cases;
}

/// Three stacked conv → silu blocks with a Gaussian head and a KL + density
/// loss, the same shape of graph the model builds.
inline GradCase composite_grad_case(Rng& rng) {
  const Tensor x = random_tensor(rng, {2, 4, 4}, 0.0, 1.0);
  const Tensor eps = random_tensor(rng, {1, 2, 2});
  std::vector<Tensor> params = {random_tensor(rng, {3, 2, 3, 3}, -0.4, 0.4), random_tensor(rng, {3, 1, 1}, -0.1, 0.1),
                                random_tensor(rng, {3, 3, 3, 3}, -0.4, 0.4), random_tensor(rng, {2, 3, 3, 3}, -0.4, 0.4),
                                random_tensor(rng, {2, 1, 3, 3}, -0.4, 0.4)};
  auto fn = [x, eps](const std::vector<Tensor>& p) {
    Tensor h = silu(conv2d(x, p[0], 1, 1) + p[1]);
    h = h + silu(conv2d(h, p[2], 1, 1));
    h = resample(h, 2, Resample::down);
    const Tensor head = conv2d(h, p[3], 1, 1);
    const hvae::GaussianParams q = hvae::GaussianParams::from_network(head);
    const Tensor z = hvae::reparameterize(q, eps);
    const Tensor recon = resample(tanh(conv2d(z, p[4], 1, 1)), 2, Resample::up);
    const Tensor nll = negate(hvae::log_density_shared(x, recon, Tensor::scalar(-1.0)));
    return nll + hvae::kl_standard(q);
  };
  return {"composite_3_layer", fn, params};
}

}  // namespace lqd::testing
