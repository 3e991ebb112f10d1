#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dwiratio/losses.hpp"
#include "dwiratio/network.hpp"
#include "dwiratio/phantom.hpp"

namespace dwiratio {

struct TrainConfig {
  std::size_t batch_size = 16;
  double lr0 = 1e-4;
  std::size_t lr_halving_period_epochs = 10;
  std::size_t epochs = 40;
  LossWeights weights;
  std::uint64_t seed = 1;
  bool deterministic = true;
  std::size_t validation_interval = 50;
  /// Batch shards evaluated concurrently. In deterministic mode shard
  /// gradients are summed in shard order.
  std::size_t threads = 1;

  /// Throws InvalidSpec.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// lr0 * 0.5^floor(epoch / period)
double lr_at(std::size_t epoch, const TrainConfig& cfg);

struct TrainingRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  // Mean training loss terms over the steps since the previous record.
  double loss_total = 0.0;
  double loss_mse = 0.0;
  double loss_fft = 0.0;
  double loss_ratio_log = 0.0;
  double val_psnr = 0.0;
  double val_d_ratio = 0.0;

  bool operator==(const TrainingRecord&) const = default;
};

struct TrainingSummary {
  double best_psnr = 0.0;
  double best_d_ratio = 0.0;
  double final_psnr = 0.0;
  double final_d_ratio = 0.0;
  /// Means over the last (up to) 5 validation points.
  double converged_psnr = 0.0;
  double converged_d_ratio = 0.0;

  bool operator==(const TrainingSummary&) const = default;
};

inline constexpr std::size_t kConvergenceWindow = 5;

struct TrainingLog {
  std::vector<TrainingRecord> records;
  std::vector<double> step_losses;  // total loss of every optimizer step
  TrainingSummary summary;

  bool operator==(const TrainingLog&) const = default;
};

TrainingSummary summarize(std::span<const TrainingRecord> records);

struct EvaluationResult {
  double psnr_mean = 0.0;
  double d_ratio_mean = 0.0;
};

/// Mean PSNR and d_ratio over the set; independent of sample order.
EvaluationResult evaluate(const ConvNetParams& params, std::span<const TrainingSample> samples);

struct TrainResult {
  ConvNetParams params;
  TrainingLog log;
};

using RecordCallback = std::function<void(const TrainingRecord&)>;

TrainResult train(const Dataset& dataset, const TrainConfig& cfg, const RecordCallback& on_record = {});

struct ArmResult {
  LossWeights weights;
  TrainingLog log;
};

struct SeedComparison {
  std::uint64_t seed = 0;
  ArmResult baseline;
  ArmResult ratio;
  /// sign(ratio converged d_ratio - baseline converged d_ratio)
  int d_ratio_difference_sign = 0;
};

struct ComparisonReport {
  std::vector<SeedComparison> seeds;
  std::size_t ratio_lower_d_ratio_count = 0;
  /// Seeds where the ratio arm's final PSNR is no more than 0.5 dB below baseline.
  std::size_t psnr_within_tolerance_count = 0;
};

inline constexpr double kPsnrTolerance = 0.5;

/// Trains the baseline arm (ratio_log weight 0) and the ratio arm (cfg.weights)
/// for every seed with identical data order and initialization.
ComparisonReport compare_arms(const Dataset& dataset, const TrainConfig& cfg, std::span<const std::uint64_t> seeds,
                              const std::function<void(std::uint64_t, bool, const TrainingRecord&)>& on_record = {});

}  // namespace dwiratio
