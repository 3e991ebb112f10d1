#include "dwiratio/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dwiratio/dft.hpp"
#include "dwiratio/error.hpp"

namespace dwiratio {

namespace {

std::string dims_str(const Image2D& a) { return std::to_string(a.nx()) + "x" + std::to_string(a.ny()); }

void require_same_dims(const Image2D& a, const Image2D& b, const char* what) {
  if (!a.same_dims(b)) {
    throw Error(ErrorCode::DimMismatch, std::string(what) + ": " + dims_str(a) + " vs " + dims_str(b));
  }
}

double clamped_log_ratio(double dwi, double b0) {
  return std::log(std::max(dwi / (b0 + kRatioEpsilon), kRatioEpsilon));
}

}  // namespace

void SlicePair::validate() const {
  require_same_dims(dwi, b0, "slice pair");
  for (double v : dwi.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidSpec, "non-finite DWI value");
  }
  for (double v : b0.values()) {
    if (!std::isfinite(v) || v < 0.0) throw Error(ErrorCode::InvalidSpec, "b0 values must be finite and >= 0");
  }
}

LossValue mse_loss(const Image2D& pred, const Image2D& gt) {
  require_same_dims(pred, gt, "mse_loss");
  const auto n = static_cast<double>(pred.size());
  LossValue out{0.0, Image2D(pred.nx(), pred.ny())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - gt[i];
    out.value += d * d;
    out.gradient[i] = 2.0 * d / n;
  }
  out.value /= n;
  return out;
}

LossValue fft_loss(const Image2D& pred, const Image2D& gt) {
  require_same_dims(pred, gt, "fft_loss");
  const auto bins = static_cast<double>(pred.size());
  // F p - F g = F (p - g) by linearity.
  Image2D residual(pred.nx(), pred.ny());
  for (std::size_t i = 0; i < pred.size(); ++i) residual[i] = pred[i] - gt[i];
  const auto diff = dft2d(residual);
  double value = 0.0;
  for (const auto& v : diff.data) value += std::norm(v);
  value /= bins;

  // d/dpred of (1/K)|F p - F g|^2 is (2/K) Re(F^H (F p - F g)), and F^H = K * idft.
  const auto back = idft2d(diff);
  LossValue out{value, Image2D(pred.nx(), pred.ny())};
  for (std::size_t i = 0; i < back.data.size(); ++i) out.gradient[i] = 2.0 * back.data[i].real();
  return out;
}

double ratio_distance(const Image2D& pred_dwi, const Image2D& gt_dwi, const Image2D& gt_b0) {
  require_same_dims(pred_dwi, gt_dwi, "ratio_distance");
  require_same_dims(pred_dwi, gt_b0, "ratio_distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred_dwi.size(); ++i) {
    const double denom = gt_b0[i] + kRatioEpsilon;
    const double d = pred_dwi[i] / denom - gt_dwi[i] / denom;
    acc += d * d;
  }
  return acc / static_cast<double>(pred_dwi.size());
}

LossValue ratio_log_loss(const Image2D& pred_dwi, const Image2D& gt_dwi, const Image2D& gt_b0) {
  require_same_dims(pred_dwi, gt_dwi, "ratio_log_loss");
  require_same_dims(pred_dwi, gt_b0, "ratio_log_loss");
  const auto n = static_cast<double>(pred_dwi.size());
  LossValue out{0.0, Image2D(pred_dwi.nx(), pred_dwi.ny())};
  for (std::size_t i = 0; i < pred_dwi.size(); ++i) {
    const double d = clamped_log_ratio(pred_dwi[i], gt_b0[i]) - clamped_log_ratio(gt_dwi[i], gt_b0[i]);
    out.value += d * d;
    const bool clamped = !(pred_dwi[i] / (gt_b0[i] + kRatioEpsilon) > kRatioEpsilon);
    out.gradient[i] = clamped ? 0.0 : 2.0 * d / (n * pred_dwi[i]);
  }
  out.value /= n;
  return out;
}

CompositeLoss total_loss_terms(const Image2D& pred, const Image2D& gt_dwi, const Image2D& gt_b0,
                               const LossWeights& w) {
  require_same_dims(pred, gt_dwi, "total_loss");
  require_same_dims(pred, gt_b0, "total_loss");
  CompositeLoss out;
  out.total.gradient = Image2D(pred.nx(), pred.ny());
  auto accumulate = [&](const LossValue& term, double weight) {
    out.total.value += weight * term.value;
    for (std::size_t i = 0; i < pred.size(); ++i) out.total.gradient[i] += weight * term.gradient[i];
  };

  const auto mse = mse_loss(pred, gt_dwi);
  out.mse = mse.value;
  if (w.mse != 0.0) accumulate(mse, w.mse);

  const auto fft = fft_loss(pred, gt_dwi);
  out.fft = fft.value;
  if (w.fft != 0.0) accumulate(fft, w.fft);

  const auto ratio = ratio_log_loss(pred, gt_dwi, gt_b0);
  out.ratio_log = ratio.value;
  if (w.ratio_log != 0.0) accumulate(ratio, w.ratio_log);
  return out;
}

LossValue total_loss(const Image2D& pred, const Image2D& gt_dwi, const Image2D& gt_b0, const LossWeights& w) {
  return total_loss_terms(pred, gt_dwi, gt_b0, w).total;
}

double psnr(const Image2D& pred, const Image2D& gt) {
  require_same_dims(pred, gt, "psnr");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - gt[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(pred.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace dwiratio
