#include "dwiratio/optim.hpp"

#include <cmath>
#include <string>

#include "dwiratio/error.hpp"

namespace dwiratio {

AdamState AdamState::for_params(const ConvNetParams& params) {
  AdamState state;
  for (const auto& t : params.tensors()) {
    state.first_moment.emplace_back(t.size(), 0.0);
    state.second_moment.emplace_back(t.size(), 0.0);
  }
  return state;
}

void adam_step(ConvNetParams& params, const ParamGradients& grads, AdamState& state, double lr) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  if (state.first_moment.size() != p.size() || state.second_moment.size() != p.size()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer state has " + std::to_string(state.first_moment.size()) +
                                              " tensors, parameters have " + std::to_string(p.size()));
  }
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (g[t].size() != p[t].size() || state.first_moment[t].size() != p[t].size() ||
        state.second_moment[t].size() != p[t].size()) {
      throw Error(ErrorCode::ShapeMismatch, "tensor " + std::to_string(t) + " shape differs");
    }
  }

  ++state.step;
  const double correction1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < p.size(); ++t) {
    auto& m = state.first_moment[t];
    auto& v = state.second_moment[t];
    for (std::size_t i = 0; i < p[t].size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[t][i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[t][i] * g[t][i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[t][i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace dwiratio
