#include "dwiratio/network.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "dwiratio/error.hpp"
#include "dwiratio/random.hpp"

namespace dwiratio {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

struct Geometry {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t batch = 0;
  std::size_t pixels() const { return nx * ny; }
};

inline std::size_t clamp_index(std::size_t v, int delta, std::size_t n) {
  const auto s = static_cast<std::ptrdiff_t>(v) + delta;
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(s, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

/// For each pixel and tap, the source pixel under edge replication.
/// Tap t = (ky + 1) * 3 + (kx + 1).
std::vector<std::uint32_t> tap_sources(std::size_t nx, std::size_t ny) {
  std::vector<std::uint32_t> src(nx * ny * ConvLayer::kTaps);
  for (std::size_t y = 0; y < ny; ++y) {
    for (std::size_t x = 0; x < nx; ++x) {
      for (int ky = -1; ky <= 1; ++ky) {
        for (int kx = -1; kx <= 1; ++kx) {
          const auto tap = static_cast<std::size_t>((ky + 1) * 3 + (kx + 1));
          src[(y * nx + x) * ConvLayer::kTaps + tap] =
              static_cast<std::uint32_t>(clamp_index(y, ky, ny) * nx + clamp_index(x, kx, nx));
        }
      }
    }
  }
  return src;
}

template <Eigen::Index C, bool Relu>
void im2col_fixed(const double* act, Eigen::Index channels, Eigen::Index pixels,
                  std::span<const std::uint32_t> sources, double* cols) {
  const Eigen::Index c_count = C > 0 ? C : channels;
  for (Eigen::Index p = 0; p < pixels; ++p) {
    const std::uint32_t* src = sources.data() + static_cast<std::size_t>(p) * ConvLayer::kTaps;
    for (std::size_t t = 0; t < ConvLayer::kTaps; ++t) {
      const double* a = act + static_cast<Eigen::Index>(src[t]) * c_count;
      for (Eigen::Index c = 0; c < c_count; ++c) cols[c] = Relu ? std::max(a[c], 0.0) : a[c];
      cols += c_count;
    }
  }
}

/// Unfolds activations (C x P) into rows ordered tap-major: row = tap * C + c.
/// With `relu`, max(0, .) is applied on the fly.
void im2col(const Matrix& act, std::span<const std::uint32_t> sources, bool relu, Matrix& cols) {
  const auto channels = act.rows();
  const auto pixels = act.cols();
  cols.resize(channels * static_cast<Eigen::Index>(ConvLayer::kTaps), pixels);
  constexpr auto kHidden = static_cast<Eigen::Index>(ConvNetParams::kHidden);
  if (channels == kHidden && relu) {
    im2col_fixed<kHidden, true>(act.data(), channels, pixels, sources, cols.data());
  } else if (channels == kHidden) {
    im2col_fixed<kHidden, false>(act.data(), channels, pixels, sources, cols.data());
  } else if (relu) {
    im2col_fixed<0, true>(act.data(), channels, pixels, sources, cols.data());
  } else {
    im2col_fixed<0, false>(act.data(), channels, pixels, sources, cols.data());
  }
}

template <Eigen::Index C>
void col2im_fixed(const double* cols, Eigen::Index channels, Eigen::Index pixels,
                  std::span<const std::uint32_t> sources, double* act) {
  const Eigen::Index c_count = C > 0 ? C : channels;
  for (Eigen::Index p = 0; p < pixels; ++p) {
    const std::uint32_t* src = sources.data() + static_cast<std::size_t>(p) * ConvLayer::kTaps;
    for (std::size_t t = 0; t < ConvLayer::kTaps; ++t) {
      double* a = act + static_cast<Eigen::Index>(src[t]) * c_count;
      for (Eigen::Index c = 0; c < c_count; ++c) a[c] += cols[c];
      cols += c_count;
    }
  }
}

/// Adjoint of im2col (without the relu).
void col2im(const Matrix& cols, std::span<const std::uint32_t> sources, Matrix& act) {
  const Eigen::Index channels = cols.rows() / static_cast<Eigen::Index>(ConvLayer::kTaps);
  act.setZero(channels, cols.cols());
  constexpr auto kHidden = static_cast<Eigen::Index>(ConvNetParams::kHidden);
  if (channels == kHidden) {
    col2im_fixed<kHidden>(cols.data(), channels, cols.cols(), sources, act.data());
  } else {
    col2im_fixed<0>(cols.data(), channels, cols.cols(), sources, act.data());
  }
}

/// Single-output-channel convolution as a per-tap GEMM: z = W^T act (taps x P),
/// then out(p) = sum_t z(t, src(p, t)).
void gather_taps(const Matrix& z, std::span<const std::uint32_t> sources, Matrix& out) {
  out.resize(1, z.cols());
  for (Eigen::Index p = 0; p < z.cols(); ++p) {
    const std::uint32_t* src = sources.data() + static_cast<std::size_t>(p) * ConvLayer::kTaps;
    double acc = 0.0;
    for (std::size_t t = 0; t < ConvLayer::kTaps; ++t) acc += z(static_cast<Eigen::Index>(t), src[t]);
    out(0, p) = acc;
  }
}

/// Adjoint of gather_taps: g(t, src(p, t)) += grad(p).
void scatter_taps(const Matrix& grad, std::span<const std::uint32_t> sources, Matrix& g) {
  g.setZero(static_cast<Eigen::Index>(ConvLayer::kTaps), grad.cols());
  for (Eigen::Index p = 0; p < grad.cols(); ++p) {
    const std::uint32_t* src = sources.data() + static_cast<std::size_t>(p) * ConvLayer::kTaps;
    for (std::size_t t = 0; t < ConvLayer::kTaps; ++t) g(static_cast<Eigen::Index>(t), src[t]) += grad(0, p);
  }
}

/// Weights rearranged to match the tap-major column order: W'(o, tap * C + c) = W[o][c][tap].
Matrix tap_major_weights(const ConvLayer& layer) {
  const auto in = layer.in_channels;
  Matrix w(static_cast<Eigen::Index>(layer.out_channels), static_cast<Eigen::Index>(in * ConvLayer::kTaps));
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    for (std::size_t c = 0; c < in; ++c) {
      for (std::size_t t = 0; t < ConvLayer::kTaps; ++t) {
        w(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(t * in + c)) =
            layer.weights[(o * in + c) * ConvLayer::kTaps + t];
      }
    }
  }
  return w;
}

void scatter_tap_major(const Matrix& grad, ConvLayer& layer) {
  const auto in = layer.in_channels;
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    for (std::size_t c = 0; c < in; ++c) {
      for (std::size_t t = 0; t < ConvLayer::kTaps; ++t) {
        layer.weights[(o * in + c) * ConvLayer::kTaps + t] =
            grad(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(t * in + c));
      }
    }
  }
}

Eigen::Map<const Eigen::VectorXd> bias_vector(const ConvLayer& layer) {
  return {layer.bias.data(), static_cast<Eigen::Index>(layer.out_channels)};
}

struct LayerMatrices {
  std::array<Matrix, 3> weights;
  explicit LayerMatrices(const ConvNetParams& params) {
    for (std::size_t l = 0; l < 3; ++l) weights[l] = tap_major_weights(params.layers[l]);
  }
};

/// Scratch buffers reused across calls on the same thread.
struct Workspace {
  Matrix cols_small, cols, act, pre1, pre2, out;
  std::vector<std::uint32_t> sources;
  std::size_t nx = 0, ny = 0;

  std::span<const std::uint32_t> sources_for(std::size_t w, std::size_t h) {
    if (w != nx || h != ny || sources.empty()) {
      sources = tap_sources(w, h);
      nx = w;
      ny = h;
    }
    return sources;
  }
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

/// Runs one image through the network; pre-activations land in ws.pre1 / ws.pre2, the residual in ws.out.
void forward_one(const LayerMatrices& w, const ConvNetParams& params, const Image2D& input, Workspace& ws) {
  const auto sources = ws.sources_for(input.nx(), input.ny());
  const auto pixels = static_cast<Eigen::Index>(input.size());
  const Eigen::Map<const Matrix> x(input.values().data(), 1, pixels);

  im2col(x, sources, false, ws.cols_small);
  ws.pre1.noalias() = w.weights[0] * ws.cols_small;
  ws.pre1.colwise() += bias_vector(params.layers[0]);
  im2col(ws.pre1, sources, true, ws.cols);
  ws.pre2.noalias() = w.weights[1] * ws.cols;
  ws.pre2.colwise() += bias_vector(params.layers[1]);
  ws.act = ws.pre2.cwiseMax(0.0);
  // Tap-major columns of the 1 x (9 C) output weights form a C x 9 matrix.
  const Eigen::Map<const Matrix> w3(w.weights[2].data(), ws.act.rows(), ConvLayer::kTaps);
  ws.cols.noalias() = w3.transpose() * ws.act;
  gather_taps(ws.cols, sources, ws.out);
  ws.out.array() += params.layers[2].bias[0];
}

Image2D residual_output(const Image2D& input, const Matrix& out) {
  Image2D pred(input.nx(), input.ny());
  for (std::size_t i = 0; i < input.size(); ++i) pred[i] = input[i] + out(0, static_cast<Eigen::Index>(i));
  return pred;
}

Geometry geometry_of(std::span<const Image2D* const> inputs) {
  if (inputs.empty()) throw Error(ErrorCode::ShapeMismatch, "empty batch");
  Geometry g{inputs[0]->nx(), inputs[0]->ny(), inputs.size()};
  if (g.pixels() == 0) throw Error(ErrorCode::ShapeMismatch, "empty input image");
  for (const auto* img : inputs) {
    if (!img->same_dims(*inputs[0])) throw Error(ErrorCode::ShapeMismatch, "batch images differ in size");
  }
  return g;
}

void check_layer_shapes(const ConvNetParams& params) {
  const ConvNetParams reference;
  for (std::size_t l = 0; l < reference.layers.size(); ++l) {
    if (params.layers[l].in_channels != reference.layers[l].in_channels ||
        params.layers[l].out_channels != reference.layers[l].out_channels) {
      throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(l) + " has unexpected channel counts");
    }
  }
  for (const auto& layer : params.layers) {
    if (layer.weights.size() != layer.in_channels * layer.out_channels * ConvLayer::kTaps ||
        layer.bias.size() != layer.out_channels) {
      throw Error(ErrorCode::ShapeMismatch, "layer storage does not match its channel counts");
    }
  }
}

}  // namespace

struct ForwardCache::Impl {
  struct Sample {
    Image2D input;
    Matrix pre1, pre2;  // pre-activation outputs of layers 1 and 2
  };
  Geometry geometry;
  std::uint64_t fingerprint = 0;
  std::vector<Sample> samples;
};

ForwardCache::ForwardCache() : impl_(std::make_unique<Impl>()) {}
ForwardCache::~ForwardCache() = default;
ForwardCache::ForwardCache(ForwardCache&&) noexcept = default;
ForwardCache& ForwardCache::operator=(ForwardCache&&) noexcept = default;

std::array<std::span<double>, ConvNetParams::kTensorCount> ConvNetParams::tensors() {
  return {layers[0].weights, layers[0].bias, layers[1].weights, layers[1].bias, layers[2].weights, layers[2].bias};
}

std::array<std::span<const double>, ConvNetParams::kTensorCount> ConvNetParams::tensors() const {
  return {layers[0].weights, layers[0].bias, layers[1].weights, layers[1].bias, layers[2].weights, layers[2].bias};
}

std::size_t ConvNetParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.size();
  return n;
}

std::uint64_t ConvNetParams::fingerprint() const {
  // FNV-1a over the raw bytes.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& t : tensors()) {
    h ^= t.size();
    h *= 0x100000001b3ull;
    for (double v : t) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h ^= bits;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

bool ConvNetParams::all_finite() const {
  for (const auto& t : tensors()) {
    for (double v : t) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

ConvNetParams init_network(std::uint64_t seed) {
  ConvNetParams params;
  PhiloxStream rng(seed, 0x1417);
  for (auto& layer : params.layers) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.in_channels * ConvLayer::kTaps));
    for (double& w : layer.weights) w = rng.uniform(-bound, bound);
  }
  return params;
}

ForwardResult forward_batch(const ConvNetParams& params, std::span<const Image2D* const> inputs) {
  check_layer_shapes(params);
  const Geometry g = geometry_of(inputs);
  const LayerMatrices w(params);
  auto& ws = workspace();

  ForwardResult result;
  auto& c = result.cache.impl();
  c.geometry = g;
  c.fingerprint = params.fingerprint();
  c.samples.reserve(g.batch);
  result.predictions.reserve(g.batch);
  for (const auto* input : inputs) {
    forward_one(w, params, *input, ws);
    c.samples.push_back({*input, ws.pre1, ws.pre2});
    result.predictions.push_back(residual_output(*input, ws.out));
  }
  return result;
}

std::vector<Image2D> predict_batch(const ConvNetParams& params, std::span<const Image2D* const> inputs) {
  check_layer_shapes(params);
  geometry_of(inputs);
  const LayerMatrices w(params);
  auto& ws = workspace();
  std::vector<Image2D> out;
  out.reserve(inputs.size());
  for (const auto* input : inputs) {
    forward_one(w, params, *input, ws);
    out.push_back(residual_output(*input, ws.out));
  }
  return out;
}

SingleForward forward(const ConvNetParams& params, const Image2D& input) {
  const Image2D* ptr = &input;
  auto r = forward_batch(params, std::span<const Image2D* const>(&ptr, 1));
  return {std::move(r.predictions.front()), std::move(r.cache)};
}

BackwardResult backward(const ConvNetParams& params, const ForwardCache& cache,
                        std::span<const Image2D> loss_gradients, bool want_input_gradients) {
  check_layer_shapes(params);
  const auto& c = cache.impl();
  const Geometry& g = c.geometry;
  if (g.batch == 0) throw Error(ErrorCode::StaleCache, "cache holds no forward pass");
  if (c.fingerprint != params.fingerprint()) {
    throw Error(ErrorCode::StaleCache, "parameters changed since the forward pass");
  }
  if (loss_gradients.size() != g.batch) {
    throw Error(ErrorCode::StaleCache, "expected " + std::to_string(g.batch) + " loss gradients, got " +
                                           std::to_string(loss_gradients.size()));
  }
  for (const auto& lg : loss_gradients) {
    if (lg.nx() != g.nx || lg.ny() != g.ny) {
      throw Error(ErrorCode::StaleCache, "loss gradient size differs from the cached forward pass");
    }
  }

  const LayerMatrices w(params);
  auto& ws = workspace();
  const auto sources = ws.sources_for(g.nx, g.ny);
  const auto pixels = static_cast<Eigen::Index>(g.pixels());

  std::array<Matrix, 3> dw;
  std::array<Eigen::VectorXd, 3> db;
  for (std::size_t l = 0; l < 3; ++l) {
    dw[l].setZero(w.weights[l].rows(), w.weights[l].cols());
    db[l].setZero(w.weights[l].rows());
  }

  BackwardResult result;
  Matrix dcols, dact, dpre;
  // Samples are accumulated in batch order.
  for (std::size_t s = 0; s < g.batch; ++s) {
    const auto& sample = c.samples[s];
    const Eigen::Map<const Matrix> grad_out(loss_gradients[s].values().data(), 1, pixels);

    // Layer 3 (linear output).
    scatter_taps(grad_out, sources, dcols);
    ws.act = sample.pre2.cwiseMax(0.0);
    Eigen::Map<Matrix> dw3(dw[2].data(), ws.act.rows(), ConvLayer::kTaps);
    const Eigen::Map<const Matrix> w3(w.weights[2].data(), ws.act.rows(), ConvLayer::kTaps);
    dw3.noalias() += ws.act * dcols.transpose();
    db[2] += grad_out.rowwise().sum();
    dact.noalias() = w3 * dcols;
    dpre = dact.cwiseProduct((sample.pre2.array() > 0.0).cast<double>().matrix());

    // Layer 2.
    im2col(sample.pre1, sources, true, ws.cols);
    dw[1].noalias() += dpre * ws.cols.transpose();
    db[1] += dpre.rowwise().sum();
    dcols.noalias() = w.weights[1].transpose() * dpre;
    col2im(dcols, sources, dact);
    dpre = dact.cwiseProduct((sample.pre1.array() > 0.0).cast<double>().matrix());

    // Layer 1.
    const Eigen::Map<const Matrix> x(sample.input.values().data(), 1, pixels);
    im2col(x, sources, false, ws.cols_small);
    dw[0].noalias() += dpre * ws.cols_small.transpose();
    db[0] += dpre.rowwise().sum();

    if (want_input_gradients) {
      dcols.noalias() = w.weights[0].transpose() * dpre;
      col2im(dcols, sources, dact);
      Image2D gi(g.nx, g.ny);
      // Residual path contributes the loss gradient directly.
      for (Eigen::Index i = 0; i < pixels; ++i) gi[static_cast<std::size_t>(i)] = grad_out(0, i) + dact(0, i);
      result.input_gradients.push_back(std::move(gi));
    }
  }

  for (std::size_t l = 0; l < 3; ++l) {
    scatter_tap_major(dw[l], result.params.layers[l]);
    for (std::size_t o = 0; o < result.params.layers[l].out_channels; ++o) {
      result.params.layers[l].bias[o] = db[l](static_cast<Eigen::Index>(o));
    }
  }
  return result;
}

ParamGradients backward(const ConvNetParams& params, const ForwardCache& cache, const Image2D& loss_gradient) {
  return backward(params, cache, std::span<const Image2D>(&loss_gradient, 1)).params;
}

}  // namespace dwiratio
