#include "dwiratio/report.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>

#include "dwiratio/file_util.hpp"

namespace dwiratio {

using nlohmann::json;

namespace {

json number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);  // "inf" / "nan" as strings
}

json metadata() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return {{"created_utc", buf}, {"tool", "dwiratio"}, {"csv_columns", kTrainingCsvHeader}};
}

json summary_json(const TrainingSummary& s) {
  return {{"best_psnr", number(s.best_psnr)},           {"best_d_ratio", number(s.best_d_ratio)},
          {"final_psnr", number(s.final_psnr)},         {"final_d_ratio", number(s.final_d_ratio)},
          {"converged_psnr", number(s.converged_psnr)}, {"converged_d_ratio", number(s.converged_d_ratio)}};
}

json weights_json(const LossWeights& w) { return {{"mse", w.mse}, {"fft", w.fft}, {"ratio_log", w.ratio_log}}; }

}  // namespace

std::string training_log_csv(const TrainingLog& log) {
  std::string out(kTrainingCsvHeader);
  out += '\n';
  for (const auto& r : log.records) {
    out += std::to_string(r.step) + ',' + std::to_string(r.epoch) + ',' + format_double(r.lr) + ',' +
           format_double(r.loss_total) + ',' + format_double(r.loss_mse) + ',' + format_double(r.loss_fft) + ',' +
           format_double(r.loss_ratio_log) + ',' + format_double(r.val_psnr) + ',' + format_double(r.val_d_ratio) +
           '\n';
  }
  return out;
}

void write_training_csv(const TrainingLog& log, const std::filesystem::path& path) {
  atomic_write_file(path, training_log_csv(log));
}

std::string training_summary_json(const TrainingLog& log, const RunConfig& cfg, const LossWeights& weights) {
  json j = {{"metadata", metadata()},
            {"seed", cfg.seed},
            {"weights", weights_json(weights)},
            {"steps", log.step_losses.size()},
            {"validation_points", log.records.size()},
            {"summary", summary_json(log.summary)},
            {"config", json::parse(dump_run_config(cfg))}};
  return j.dump(2) + "\n";
}

std::string comparison_summary_json(const ComparisonReport& report, const RunConfig& cfg) {
  json seeds = json::array();
  for (const auto& s : report.seeds) {
    seeds.push_back({{"seed", s.seed},
                     {"baseline", {{"weights", weights_json(s.baseline.weights)}, {"summary", summary_json(s.baseline.log.summary)}}},
                     {"ratio", {{"weights", weights_json(s.ratio.weights)}, {"summary", summary_json(s.ratio.log.summary)}}},
                     {"d_ratio_difference_sign", s.d_ratio_difference_sign}});
  }
  json j = {{"metadata", metadata()},
            {"seeds", seeds},
            {"ratio_lower_d_ratio_count", report.ratio_lower_d_ratio_count},
            {"psnr_within_tolerance_count", report.psnr_within_tolerance_count},
            {"psnr_tolerance_db", kPsnrTolerance},
            {"convergence_window", kConvergenceWindow},
            {"config", json::parse(dump_run_config(cfg))}};
  return j.dump(2) + "\n";
}

}  // namespace dwiratio
