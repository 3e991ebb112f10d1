#pragma once

#include "dwiratio/grid.hpp"

namespace dwiratio {

/// Denominator guard for the DWI/b0 ratio; also the lower clamp of the
/// ratio inside the log.
inline constexpr double kRatioEpsilon = 1e-6;

/// A DWI slice with its b=0 reference on the same grid, both normalized.
struct SlicePair {
  Image2D dwi;
  Image2D b0;

  /// Throws DimMismatch / InvalidSpec when the pair violates its invariants.
  void validate() const;
};

struct LossWeights {
  double mse = 15.0;
  double fft = 0.0025;
  double ratio_log = 0.01;

  static LossWeights baseline() noexcept { return {15.0, 0.0025, 0.0}; }
  bool operator==(const LossWeights&) const = default;
};

struct LossValue {
  double value = 0.0;
  Image2D gradient;  // d value / d pred
};

/// Per-term values of the composite loss, with the combined gradient.
struct CompositeLoss {
  LossValue total;
  double mse = 0.0;
  double fft = 0.0;
  double ratio_log = 0.0;
};

LossValue mse_loss(const Image2D& pred, const Image2D& gt);

/// Mean squared magnitude of the difference between the 2D DFTs.
LossValue fft_loss(const Image2D& pred, const Image2D& gt);

/// d_ratio: pixel mean of (pred/(b0+eps) - gt/(b0+eps))^2.
double ratio_distance(const Image2D& pred_dwi, const Image2D& gt_dwi, const Image2D& gt_b0);

/// Pixel mean of (log r_pred - log r_gt)^2 with r = max(dwi/(b0+eps), eps).
/// Pixels whose predicted ratio is clamped contribute no gradient.
LossValue ratio_log_loss(const Image2D& pred_dwi, const Image2D& gt_dwi, const Image2D& gt_b0);

LossValue total_loss(const Image2D& pred, const Image2D& gt_dwi, const Image2D& gt_b0, const LossWeights& w);
CompositeLoss total_loss_terms(const Image2D& pred, const Image2D& gt_dwi, const Image2D& gt_b0,
                               const LossWeights& w);

/// 10 log10(1 / mse) for images normalized to peak 1; +infinity when mse is 0.
double psnr(const Image2D& pred, const Image2D& gt);

}  // namespace dwiratio
