#pragma once

#include <filesystem>
#include <string>

#include "dwiratio/run_config.hpp"
#include "dwiratio/trainer.hpp"

namespace dwiratio {

/// Column order of every training-curve CSV.
inline constexpr std::string_view kTrainingCsvHeader =
    "step,epoch,lr,loss_total,loss_mse,loss_fft,loss_ratio_log,val_psnr,val_d_ratio";

std::string training_log_csv(const TrainingLog& log);
void write_training_csv(const TrainingLog& log, const std::filesystem::path& path);

/// JSON summary of a single training run. Wall-clock fields live only under "metadata".
std::string training_summary_json(const TrainingLog& log, const RunConfig& cfg, const LossWeights& weights);

/// JSON summary of a baseline-vs-ratio comparison.
std::string comparison_summary_json(const ComparisonReport& report, const RunConfig& cfg);

}  // namespace dwiratio
