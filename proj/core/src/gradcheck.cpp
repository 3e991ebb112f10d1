#include "dwiratio/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "dwiratio/losses.hpp"
#include "dwiratio/network.hpp"
#include "dwiratio/random.hpp"

namespace dwiratio {

namespace {

Image2D random_image(std::size_t nx, std::size_t ny, PhiloxStream& rng, double lo, double hi) {
  Image2D img(nx, ny);
  for (double& v : img.values()) v = rng.uniform(lo, hi);
  return img;
}

std::vector<double> central_differences(std::span<double> x, const std::function<double()>& f) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + kFiniteDifferenceStep;
    const double up = f();
    x[i] = saved - kFiniteDifferenceStep;
    const double down = f();
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * kFiniteDifferenceStep);
  }
  return grad;
}

void merge_case(std::vector<GradCheckCase>& cases, const std::string& name, std::size_t entries, double error,
                double tolerance) {
  auto it = std::find_if(cases.begin(), cases.end(), [&](const GradCheckCase& c) { return c.name == name; });
  if (it == cases.end()) {
    cases.push_back({name, entries, error, tolerance});
    return;
  }
  it->entries += entries;
  it->max_relative_error = std::max(it->max_relative_error, error);
}

}  // namespace

double relative_gradient_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double scale = 0.0;
  for (double a : analytic) scale = std::max(scale, std::abs(a));
  const double floor = std::max(1e-6 * scale, std::numeric_limits<double>::min());
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

std::vector<GradCheckCase> check_loss_gradients(std::uint64_t seed, std::size_t trials) {
  using LossFn = std::function<LossValue(const Image2D&, const Image2D&, const Image2D&)>;
  const std::vector<std::pair<std::string, LossFn>> losses{
      {"mse_loss", [](const Image2D& p, const Image2D& g, const Image2D&) { return mse_loss(p, g); }},
      {"fft_loss", [](const Image2D& p, const Image2D& g, const Image2D&) { return fft_loss(p, g); }},
      {"ratio_log_loss", [](const Image2D& p, const Image2D& g, const Image2D& b) { return ratio_log_loss(p, g, b); }},
      {"total_loss",
       [](const Image2D& p, const Image2D& g, const Image2D& b) { return total_loss(p, g, b, LossWeights{}); }},
  };

  std::vector<GradCheckCase> cases;
  PhiloxStream rng(seed, 0x6c6f7373);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const Image2D gt = random_image(6, 6, rng, 0.05, 1.0);
    const Image2D b0 = random_image(6, 6, rng, 0.05, 1.0);
    const Image2D pred0 = random_image(6, 6, rng, 0.05, 1.0);
    for (const auto& [name, fn] : losses) {
      Image2D pred = pred0;
      const auto analytic = fn(pred, gt, b0).gradient.data();
      const auto numeric = central_differences(pred.values(), [&] { return fn(pred, gt, b0).value; });
      merge_case(cases, name, analytic.size(), relative_gradient_error(analytic, numeric), kLossGradientTolerance);
    }
  }
  return cases;
}

std::vector<GradCheckCase> check_network_gradients(std::uint64_t seed) {
  PhiloxStream rng(seed, 0x6e6574);
  ConvNetParams params = init_network(seed);
  // Nonzero biases so every parameter tensor carries signal.
  for (auto& layer : params.layers) {
    for (double& b : layer.bias) b = rng.uniform(-0.1, 0.1);
  }
  const Image2D input = random_image(12, 12, rng, 0.05, 1.0);
  const Image2D gt = random_image(12, 12, rng, 0.05, 1.0);
  const Image2D b0 = random_image(12, 12, rng, 0.05, 1.0);
  const LossWeights weights;

  auto loss_at = [&] { return total_loss(forward(params, input).prediction, gt, b0, weights).value; };
  const auto fwd = forward(params, input);
  const auto loss_grad = total_loss(fwd.prediction, gt, b0, weights).gradient;
  const ParamGradients grads = backward(params, fwd.cache, loss_grad);

  static constexpr const char* kNames[ConvNetParams::kTensorCount] = {"conv1.weight", "conv1.bias", "conv2.weight",
                                                                       "conv2.bias",   "conv3.weight", "conv3.bias"};
  std::vector<GradCheckCase> cases;
  auto tensors = params.tensors();
  const auto analytic_tensors = grads.tensors();
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const std::vector<double> analytic(analytic_tensors[t].begin(), analytic_tensors[t].end());
    const auto numeric = central_differences(tensors[t], loss_at);
    cases.push_back({kNames[t], analytic.size(), relative_gradient_error(analytic, numeric), kNetworkGradientTolerance});
  }
  return cases;
}

}  // namespace dwiratio
