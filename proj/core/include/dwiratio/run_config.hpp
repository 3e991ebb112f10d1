#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dwiratio/phantom.hpp"
#include "dwiratio/trainer.hpp"

namespace dwiratio {

struct AcquisitionConfig {
  std::size_t directions = 45;
  double b_value = 1000.0;
  std::uint64_t scheme_seed = 2024;
  NoiseModel noise_model = NoiseModel::Rician;
  double noise_sigma = 0.03;
  std::size_t b0_repeats = 5;

  AcquisitionSpec build() const;
  bool operator==(const AcquisitionConfig&) const = default;
};

struct DatasetConfig {
  std::size_t fields = 8;
  DatasetSplit split;
  DatasetOptions options;
  std::array<double, 3> voxel_size_mm{2.0, 2.0, 2.0};

  bool operator==(const DatasetConfig& o) const {
    return fields == o.fields && split.train == o.split.train && split.validation == o.split.validation &&
           options.axis == o.options.axis && options.factor == o.options.factor &&
           options.kernel == o.options.kernel && voxel_size_mm == o.voxel_size_mm;
  }
};

/// Everything a CLI run needs. Loading rejects unknown keys; saving writes
/// every field so load -> save -> load is a fixed point.
struct RunConfig {
  std::uint64_t seed = 1;
  bool deterministic = true;
  std::string output_dir = "dwiratio_out";
  PhantomSpec phantom = desk_phantom();
  AcquisitionConfig acquisition;
  DatasetConfig dataset;
  TrainConfig training;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  /// Default phantom for training runs (smaller in-plane grid than PhantomSpec{}).
  static PhantomSpec desk_phantom();
  /// TrainConfig with the run-level seed and deterministic flag applied.
  TrainConfig train_config() const;

  bool operator==(const RunConfig&) const = default;
};

/// Throws InvalidConfig (unknown keys, wrong types, invalid values) or ParseError (malformed JSON).
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& cfg);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

std::string_view noise_model_name(NoiseModel m) noexcept;
std::string_view kernel_name(DownsampleKernel k) noexcept;

}  // namespace dwiratio
