#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dwiratio {

/// Outcome of comparing one analytic gradient tensor against central differences.
struct GradCheckCase {
  std::string name;
  std::size_t entries = 0;
  double max_relative_error = 0.0;
  double tolerance = 0.0;

  bool passed() const noexcept { return max_relative_error <= tolerance; }
};

inline constexpr double kFiniteDifferenceStep = 1e-6;
inline constexpr double kLossGradientTolerance = 1e-5;
inline constexpr double kNetworkGradientTolerance = 1e-4;

/// |a - n| / max(|a|, |n|, floor) where floor = 1e-6 * max |a| over the tensor,
/// so entries that are zero up to rounding do not dominate.
double relative_gradient_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

/// mse, fft, ratio_log and total losses on `trials` random 6x6 inputs with entries in [0.05, 1].
std::vector<GradCheckCase> check_loss_gradients(std::uint64_t seed, std::size_t trials = 5);

/// Every parameter tensor of a randomly initialized network on a 12x12 input, through total_loss.
std::vector<GradCheckCase> check_network_gradients(std::uint64_t seed);

}  // namespace dwiratio
