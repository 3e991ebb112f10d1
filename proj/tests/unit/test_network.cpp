#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dwiratio/error.hpp"
#include "dwiratio/losses.hpp"
#include "dwiratio/network.hpp"
#include "dwiratio/optim.hpp"
#include "support.hpp"

using namespace dwiratio;
using dwiratio::test::random_image;

namespace {

using Channels = std::vector<Image2D>;

/// Direct 3x3 convolution with edge replication, written out loop by loop.
Channels reference_conv(const ConvLayer& layer, const Channels& in, bool relu_input) {
  const std::size_t nx = in[0].nx();
  const std::size_t ny = in[0].ny();
  const auto clamp = [](long v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp(v, 0L, static_cast<long>(n) - 1));
  };
  Channels out(layer.out_channels, Image2D(nx, ny));
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t x = 0; x < nx; ++x) {
        double acc = layer.bias[o];
        for (std::size_t c = 0; c < layer.in_channels; ++c) {
          for (long ky = 0; ky < 3; ++ky) {
            for (long kx = 0; kx < 3; ++kx) {
              double v = in[c](clamp(static_cast<long>(x) + kx - 1, nx), clamp(static_cast<long>(y) + ky - 1, ny));
              if (relu_input) v = std::max(v, 0.0);
              acc += layer.weights[((o * layer.in_channels + c) * 3 + static_cast<std::size_t>(ky)) * 3 +
                                   static_cast<std::size_t>(kx)] *
                     v;
            }
          }
        }
        out[o](x, y) = acc;
      }
    }
  }
  return out;
}

Image2D reference_forward(const ConvNetParams& p, const Image2D& input) {
  auto h = reference_conv(p.layers[0], {input}, false);
  h = reference_conv(p.layers[1], h, true);
  h = reference_conv(p.layers[2], h, true);
  Image2D out = input;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += h[0][i];
  return out;
}

ConvNetParams random_params(std::uint64_t seed) {
  auto p = init_network(seed);
  PhiloxStream rng(seed, 99);
  for (auto& layer : p.layers) {
    for (double& b : layer.bias) b = rng.uniform(-0.1, 0.1);
  }
  return p;
}

double max_abs_diff(const Image2D& a, const Image2D& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::IoFailure;
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("parameter layout") {
  const ConvNetParams p;
  CHECK(p.parameter_count() == (1 * 16 * 9 + 16) + (16 * 16 * 9 + 16) + (16 * 9 + 1));
  const auto t = p.tensors();
  CHECK(t[0].size() == 144);
  CHECK(t[1].size() == 16);
  CHECK(t[2].size() == 2304);
  CHECK(t[3].size() == 16);
  CHECK(t[4].size() == 144);
  CHECK(t[5].size() == 1);
}

TEST_CASE("initialization is deterministic with He-scaled spread") {
  CHECK(init_network(4) == init_network(4));
  CHECK_FALSE(init_network(4) == init_network(5));
  CHECK(init_network(4).fingerprint() == init_network(4).fingerprint());
  CHECK(init_network(4).fingerprint() != init_network(5).fingerprint());
  for (std::size_t l = 0; l < 3; ++l) {
    const double fan_in = static_cast<double>(ConvNetParams{}.layers[l].in_channels * 9);
    double s2 = 0.0;
    std::size_t n = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto p = init_network(seed);
      for (double w : p.layers[l].weights) {
        s2 += w * w;
        ++n;
        CHECK(std::abs(w) <= std::sqrt(6.0 / fan_in));
      }
      for (double b : p.layers[l].bias) CHECK(b == 0.0);
    }
    const double stddev = std::sqrt(s2 / static_cast<double>(n));
    CHECK(std::abs(stddev / std::sqrt(2.0 / fan_in) - 1.0) < 0.15);
  }
}

TEST_CASE("zero weights give the identity mapping") {
  ConvNetParams p;
  PhiloxStream rng(1, 0);
  const auto x = random_image(rng, 9, 7, -1.0, 1.0);
  CHECK(forward(p, x).prediction == x);
}

TEST_CASE("forward matches a direct convolution") {
  PhiloxStream rng(2, 0);
  const auto p = random_params(3);
  for (auto [nx, ny] : {std::pair<std::size_t, std::size_t>{12, 12}, {16, 8}, {5, 9}, {1, 1}, {3, 1}}) {
    const auto x = random_image(rng, nx, ny, 0.0, 1.0);
    const auto y = forward(p, x).prediction;
    CHECK(y.nx() == nx);
    CHECK(y.ny() == ny);
    CHECK(max_abs_diff(y, reference_forward(p, x)) < 1e-12);
  }
}

TEST_CASE("batched forward equals per-sample forward") {
  PhiloxStream rng(4, 0);
  const auto p = random_params(5);
  std::vector<Image2D> xs;
  for (int i = 0; i < 4; ++i) xs.push_back(random_image(rng, 8, 8, 0.0, 1.0));
  std::vector<const Image2D*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);
  const auto batch = forward_batch(p, ptrs);
  const auto plain = predict_batch(p, ptrs);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto single = forward(p, xs[i]).prediction;
    CHECK(batch.predictions[i] == single);
    CHECK(plain[i] == single);
  }
  std::vector<Image2D> mixed{Image2D(8, 8), Image2D(8, 6)};
  const std::vector<const Image2D*> mixed_ptrs{&mixed[0], &mixed[1]};
  CHECK(code_of([&] { forward_batch(p, mixed_ptrs); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("parameter and input gradients match central differences") {
  PhiloxStream rng(6, 0);
  const auto p = random_params(7);
  const auto x = random_image(rng, 12, 12, 0.05, 1.0);
  const auto gt = random_image(rng, 12, 12, 0.05, 1.0);
  const auto b0 = random_image(rng, 12, 12, 0.5, 1.0);
  const LossWeights w{};
  const auto loss_of = [&](const ConvNetParams& q, const Image2D& in) {
    return total_loss(reference_forward(q, in), gt, b0, w).value;
  };

  auto fwd = forward(p, x);
  const auto dl = total_loss(fwd.prediction, gt, b0, w).gradient;
  const std::vector<Image2D> grads{dl};
  const auto bw = backward(p, fwd.cache, grads, true);
  const double h = 1e-6;

  auto q = p;
  const auto analytic = bw.params.tensors();
  auto params = q.tensors();
  for (std::size_t t = 0; t < params.size(); ++t) {
    double scale = 0.0;
    for (double g : analytic[t]) scale = std::max(scale, std::abs(g));
    double worst = 0.0;
    // Every entry of the small tensors, a fixed stride through the large one.
    const std::size_t stride = params[t].size() > 200 ? 7 : 1;
    for (std::size_t i = 0; i < params[t].size(); i += stride) {
      const double v = params[t][i];
      params[t][i] = v + h;
      const double up = loss_of(q, x);
      params[t][i] = v - h;
      const double down = loss_of(q, x);
      params[t][i] = v;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[t][i]), std::abs(numeric), 1e-6 * scale});
      worst = std::max(worst, std::abs(analytic[t][i] - numeric) / denom);
    }
    CHECK_MESSAGE(worst < 1e-4, "tensor " << t << " relative error " << worst);
  }

  REQUIRE(bw.input_gradients.size() == 1);
  Image2D xi = x;
  double worst = 0.0;
  double scale = 0.0;
  for (double g : bw.input_gradients[0].values()) scale = std::max(scale, std::abs(g));
  for (std::size_t i = 0; i < xi.size(); ++i) {
    const double v = xi[i];
    xi[i] = v + h;
    const double up = loss_of(p, xi);
    xi[i] = v - h;
    const double down = loss_of(p, xi);
    xi[i] = v;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(bw.input_gradients[0][i]), std::abs(numeric), 1e-6 * scale});
    worst = std::max(worst, std::abs(bw.input_gradients[0][i] - numeric) / denom);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("batched gradients are the sum of per-sample gradients") {
  PhiloxStream rng(8, 0);
  const auto p = random_params(9);
  std::vector<Image2D> xs, gs;
  for (int i = 0; i < 3; ++i) {
    xs.push_back(random_image(rng, 6, 6, 0.0, 1.0));
    gs.push_back(random_image(rng, 6, 6, -1.0, 1.0));
  }
  std::vector<const Image2D*> ptrs{&xs[0], &xs[1], &xs[2]};
  auto batch = forward_batch(p, ptrs);
  const auto total = backward(p, batch.cache, gs).params;
  ParamGradients sum;
  auto acc = sum.tensors();
  for (std::size_t i = 0; i < 3; ++i) {
    auto f = forward(p, xs[i]);
    const auto g = backward(p, f.cache, gs[i]);
    const auto gt = g.tensors();
    for (std::size_t t = 0; t < acc.size(); ++t) {
      for (std::size_t k = 0; k < acc[t].size(); ++k) acc[t][k] += gt[t][k];
    }
  }
  const auto tt = total.tensors();
  for (std::size_t t = 0; t < acc.size(); ++t) {
    for (std::size_t k = 0; k < acc[t].size(); ++k) CHECK(std::abs(tt[t][k] - acc[t][k]) < 1e-12);
  }
}

TEST_CASE("zero loss gradient gives zero parameter gradients") {
  PhiloxStream rng(10, 0);
  const auto p = random_params(11);
  const auto x = random_image(rng, 7, 7, 0.0, 1.0);
  auto f = forward(p, x);
  const auto g = backward(p, f.cache, Image2D(7, 7, 0.0));
  for (const auto& t : g.tensors()) {
    for (double v : t) CHECK(v == 0.0);
  }
}

TEST_CASE("stale caches are rejected") {
  PhiloxStream rng(12, 0);
  auto p = random_params(13);
  const auto x = random_image(rng, 6, 6, 0.0, 1.0);
  auto f = forward(p, x);
  CHECK(code_of([&] { backward(p, f.cache, Image2D(6, 5)); }) == ErrorCode::StaleCache);
  const std::vector<Image2D> two(2, Image2D(6, 6));
  CHECK(code_of([&] { backward(p, f.cache, two); }) == ErrorCode::StaleCache);
  p.layers[1].weights[3] += 1e-3;
  CHECK(code_of([&] { backward(p, f.cache, Image2D(6, 6)); }) == ErrorCode::StaleCache);
}

TEST_CASE("malformed parameter shapes are rejected") {
  auto p = init_network(1);
  p.layers[1] = ConvLayer(16, 8);
  PhiloxStream rng(1, 0);
  const auto x = random_image(rng, 6, 6, 0.0, 1.0);
  CHECK(code_of([&] { forward(p, x); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("adam first step closed form") {
  auto p = random_params(14);
  const auto before = p;
  ParamGradients g;
  PhiloxStream rng(15, 0);
  for (auto t : g.tensors()) {
    for (double& v : t) v = rng.uniform(-2.0, 2.0);
  }
  auto state = AdamState::for_params(p);
  adam_step(p, g, state, 1e-3);
  CHECK(state.step == 1);
  const auto pa = p.tensors();
  const auto pb = before.tensors();
  const auto ga = g.tensors();
  for (std::size_t t = 0; t < pa.size(); ++t) {
    for (std::size_t i = 0; i < pa[t].size(); ++i) {
      // m_hat = g and v_hat = g^2 after one step.
      const double expected = pb[t][i] - 1e-3 * ga[t][i] / (std::abs(ga[t][i]) + 1e-8);
      CHECK(std::abs(pa[t][i] - expected) < 1e-15);
    }
  }
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  auto p = random_params(16);
  const auto before = p;
  auto state = AdamState::for_params(p);
  for (int i = 0; i < 5; ++i) adam_step(p, ParamGradients{}, state, 1e-2);
  CHECK(p == before);
  CHECK(state.step == 5);
}

TEST_CASE("adam second step closed form") {
  ConvNetParams p;
  ParamGradients g1, g2;
  g1.layers[2].bias[0] = 0.5;
  g2.layers[2].bias[0] = -0.25;
  auto state = AdamState::for_params(p);
  adam_step(p, g1, state, 0.1);
  adam_step(p, g2, state, 0.1);
  const double m = 0.9 * 0.1 * 0.5 + 0.1 * -0.25;
  const double v = 0.999 * 0.001 * 0.25 + 0.001 * 0.0625;
  const double step2 = 0.1 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  const double expected = -0.1 * 0.5 / (0.5 + 1e-8) - step2;
  CHECK(p.layers[2].bias[0] == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("adam rejects mismatched shapes") {
  auto p = init_network(1);
  auto state = AdamState::for_params(p);
  state.first_moment.pop_back();
  CHECK(code_of([&] { adam_step(p, ParamGradients{}, state, 1e-3); }) == ErrorCode::ShapeMismatch);
}

}  // TEST_SUITE
