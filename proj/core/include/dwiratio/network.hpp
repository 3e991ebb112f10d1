#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "dwiratio/grid.hpp"

namespace dwiratio {

/// 3x3 convolution, weights laid out [out][in][ky][kx].
struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  static constexpr std::size_t kTaps = 9;
  ConvLayer() = default;
  ConvLayer(std::size_t in, std::size_t out)
      : in_channels(in), out_channels(out), weights(in * out * kTaps, 0.0), bias(out, 0.0) {}
  bool operator==(const ConvLayer&) const = default;
};

/// Residual refiner: pred = input + conv3(relu(conv2(relu(conv1(input))))).
/// Channel widths 1 -> 16 -> 16 -> 1, same-size padding with edge replication.
struct ConvNetParams {
  static constexpr std::size_t kHidden = 16;
  static constexpr std::size_t kTensorCount = 6;

  std::array<ConvLayer, 3> layers{ConvLayer(1, kHidden), ConvLayer(kHidden, kHidden), ConvLayer(kHidden, 1)};

  /// weights0, bias0, weights1, bias1, weights2, bias2
  std::array<std::span<double>, kTensorCount> tensors();
  std::array<std::span<const double>, kTensorCount> tensors() const;
  std::size_t parameter_count() const;
  /// Order-sensitive hash of every parameter bit pattern.
  std::uint64_t fingerprint() const;
  bool all_finite() const;

  bool operator==(const ConvNetParams&) const = default;
};

/// Zeroed gradients with the same shapes as a parameter set.
using ParamGradients = ConvNetParams;

/// Uniform(-b, b) weights with b = sqrt(6 / fan_in), zero biases.
ConvNetParams init_network(std::uint64_t seed);

/// Intermediates of one forward call, consumed by backward.
class ForwardCache {
 public:
  ForwardCache();
  ~ForwardCache();
  ForwardCache(ForwardCache&&) noexcept;
  ForwardCache& operator=(ForwardCache&&) noexcept;

  struct Impl;
  Impl& impl() { return *impl_; }
  const Impl& impl() const { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

struct ForwardResult {
  std::vector<Image2D> predictions;
  ForwardCache cache;
};

/// Batched forward pass; every input must share one size of at least 1x1.
ForwardResult forward_batch(const ConvNetParams& params, std::span<const Image2D* const> inputs);

struct SingleForward {
  Image2D prediction;
  ForwardCache cache;
};
SingleForward forward(const ConvNetParams& params, const Image2D& input);

/// Prediction only; avoids keeping intermediates.
std::vector<Image2D> predict_batch(const ConvNetParams& params, std::span<const Image2D* const> inputs);

struct BackwardResult {
  ParamGradients params;
  std::vector<Image2D> input_gradients;  // filled when requested
};

/// Exact gradients of a scalar loss given dLoss/dprediction for each sample.
/// Throws StaleCache when the parameters or shapes differ from the forward call.
BackwardResult backward(const ConvNetParams& params, const ForwardCache& cache,
                        std::span<const Image2D> loss_gradients, bool want_input_gradients = false);

ParamGradients backward(const ConvNetParams& params, const ForwardCache& cache, const Image2D& loss_gradient);

}  // namespace dwiratio
