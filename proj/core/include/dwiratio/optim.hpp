#pragma once

#include <vector>

#include "dwiratio/network.hpp"

namespace dwiratio {

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Zero moments shaped like `params`.
  static AdamState for_params(const ConvNetParams& params);
  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update applied in place. Throws ShapeMismatch.
void adam_step(ConvNetParams& params, const ParamGradients& grads, AdamState& state, double lr);

}  // namespace dwiratio
