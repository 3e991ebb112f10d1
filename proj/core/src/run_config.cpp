#include "dwiratio/run_config.hpp"

#include <json.hpp>

#include <set>

#include "dwiratio/error.hpp"
#include "dwiratio/file_util.hpp"

namespace dwiratio {

using nlohmann::json;

namespace {

/// Reads an object member by member, rejecting keys it was never asked about.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorCode::InvalidConfig, path_ + " must be an object");
  }
  ~StrictObject() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw Error(ErrorCode::InvalidConfig, "unknown key " + path_ + "." + key);
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorCode::InvalidConfig, path_ + "." + key + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

NoiseModel parse_noise(const std::string& s) {
  if (s == "none") return NoiseModel::None;
  if (s == "gaussian") return NoiseModel::Gaussian;
  if (s == "rician") return NoiseModel::Rician;
  throw Error(ErrorCode::InvalidConfig, "noise_model must be none, gaussian or rician, got '" + s + "'");
}

DownsampleKernel parse_kernel(const std::string& s) {
  if (s == "box") return DownsampleKernel::Box;
  if (s == "strided") return DownsampleKernel::Strided;
  throw Error(ErrorCode::InvalidConfig, "downsample_kernel must be box or strided, got '" + s + "'");
}

void read_phantom(const json& j, PhantomSpec& p) {
  StrictObject o(j, "phantom");
  o.read("dims", p.dims);
  o.read("background_diffusivity", p.background_diffusivity);
  o.read("gray_matter_diffusivity", p.gray_matter_diffusivity);
  o.read("fiber_axial_diffusivity", p.fiber_axial_diffusivity);
  o.read("fiber_radial_diffusivity", p.fiber_radial_diffusivity);
  o.read("brain_radius_fraction", p.brain_radius_fraction);
  o.read("ring_radius_fraction", p.ring_radius_fraction);
  o.read("ring_width_voxels", p.ring_width_voxels);
  o.read("bundle_width_voxels", p.bundle_width_voxels);
  o.read("bundle_angles_deg", p.bundle_angles_deg);
  o.read("bundle_angle_jitter_deg", p.bundle_angle_jitter_deg);
  o.read("s0_background", p.s0_background);
  o.read("s0_exterior", p.s0_exterior);
  o.read("s0_gray_matter", p.s0_gray_matter);
  o.read("s0_white_matter", p.s0_white_matter);
  o.read("s0_variation", p.s0_variation);
}

json write_phantom(const PhantomSpec& p) {
  return {{"dims", p.dims},
          {"background_diffusivity", p.background_diffusivity},
          {"gray_matter_diffusivity", p.gray_matter_diffusivity},
          {"fiber_axial_diffusivity", p.fiber_axial_diffusivity},
          {"fiber_radial_diffusivity", p.fiber_radial_diffusivity},
          {"brain_radius_fraction", p.brain_radius_fraction},
          {"ring_radius_fraction", p.ring_radius_fraction},
          {"ring_width_voxels", p.ring_width_voxels},
          {"bundle_width_voxels", p.bundle_width_voxels},
          {"bundle_angles_deg", p.bundle_angles_deg},
          {"bundle_angle_jitter_deg", p.bundle_angle_jitter_deg},
          {"s0_background", p.s0_background},
          {"s0_exterior", p.s0_exterior},
          {"s0_gray_matter", p.s0_gray_matter},
          {"s0_white_matter", p.s0_white_matter},
          {"s0_variation", p.s0_variation}};
}

}  // namespace

std::string_view noise_model_name(NoiseModel m) noexcept {
  switch (m) {
    case NoiseModel::None: return "none";
    case NoiseModel::Gaussian: return "gaussian";
    case NoiseModel::Rician: return "rician";
  }
  return "none";
}

std::string_view kernel_name(DownsampleKernel k) noexcept {
  return k == DownsampleKernel::Box ? "box" : "strided";
}

AcquisitionSpec AcquisitionConfig::build() const {
  AcquisitionSpec spec(make_even_scheme(directions, b_value, scheme_seed), noise_model, noise_sigma, b0_repeats);
  spec.validate();
  return spec;
}

PhantomSpec RunConfig::desk_phantom() {
  PhantomSpec p;
  p.dims = {32, 32, 16};
  p.ring_width_voxels = 2.5;
  p.bundle_width_voxels = 2.5;
  return p;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = training;
  t.seed = seed;
  t.deterministic = deterministic;
  return t;
}

RunConfig parse_run_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("config JSON: ") + e.what());
  }

  RunConfig cfg;
  StrictObject root(j, "config");
  root.read("seed", cfg.seed);
  root.read("deterministic", cfg.deterministic);
  root.read("output_dir", cfg.output_dir);
  root.read("seeds", cfg.seeds);
  if (const auto* p = root.child("phantom")) read_phantom(*p, cfg.phantom);

  if (const auto* a = root.child("acquisition")) {
    StrictObject o(*a, "acquisition");
    auto& acq = cfg.acquisition;
    std::string noise(noise_model_name(acq.noise_model));
    o.read("directions", acq.directions);
    o.read("b_value", acq.b_value);
    o.read("scheme_seed", acq.scheme_seed);
    o.read("noise_model", noise);
    o.read("noise_sigma", acq.noise_sigma);
    o.read("b0_repeats", acq.b0_repeats);
    acq.noise_model = parse_noise(noise);
  }

  if (const auto* d = root.child("dataset")) {
    StrictObject o(*d, "dataset");
    auto& ds = cfg.dataset;
    std::array<double, 2> split{ds.split.train, ds.split.validation};
    std::string kernel(kernel_name(ds.options.kernel));
    o.read("fields", ds.fields);
    o.read("split", split);
    o.read("downsample_axis", ds.options.axis);
    o.read("downsample_factor", ds.options.factor);
    o.read("downsample_kernel", kernel);
    o.read("voxel_size_mm", ds.voxel_size_mm);
    ds.split = {split[0], split[1]};
    ds.options.kernel = parse_kernel(kernel);
  }

  if (const auto* t = root.child("training")) {
    StrictObject o(*t, "training");
    auto& tr = cfg.training;
    o.read("batch_size", tr.batch_size);
    o.read("lr0", tr.lr0);
    o.read("lr_halving_period_epochs", tr.lr_halving_period_epochs);
    o.read("epochs", tr.epochs);
    o.read("validation_interval", tr.validation_interval);
    o.read("threads", tr.threads);
  }

  if (const auto* w = root.child("loss_weights")) {
    StrictObject o(*w, "loss_weights");
    o.read("mse", cfg.training.weights.mse);
    o.read("fft", cfg.training.weights.fft);
    o.read("ratio_log", cfg.training.weights.ratio_log);
  }

  try {
    cfg.phantom.validate();
    cfg.train_config().validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  if (cfg.acquisition.directions < 6 || !(cfg.acquisition.b_value > 0.0) || !(cfg.acquisition.noise_sigma >= 0.0) ||
      cfg.acquisition.b0_repeats < 1) {
    throw Error(ErrorCode::InvalidConfig, "acquisition needs >= 6 directions, b_value > 0, noise_sigma >= 0, "
                                          "b0_repeats >= 1");
  }
  if (cfg.dataset.options.axis < 0 || cfg.dataset.options.axis > 1 || cfg.dataset.options.factor < 1) {
    throw Error(ErrorCode::InvalidConfig, "downsample_axis must be 0 or 1 and downsample_factor >= 1");
  }
  if (cfg.seeds.empty()) throw Error(ErrorCode::InvalidConfig, "seeds must not be empty");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_file(path)); }

std::string dump_run_config(const RunConfig& cfg) {
  const auto& acq = cfg.acquisition;
  const auto& ds = cfg.dataset;
  const auto& tr = cfg.training;
  json j = {
      {"seed", cfg.seed},
      {"deterministic", cfg.deterministic},
      {"output_dir", cfg.output_dir},
      {"seeds", cfg.seeds},
      {"phantom", write_phantom(cfg.phantom)},
      {"acquisition",
       {{"directions", acq.directions},
        {"b_value", acq.b_value},
        {"scheme_seed", acq.scheme_seed},
        {"noise_model", noise_model_name(acq.noise_model)},
        {"noise_sigma", acq.noise_sigma},
        {"b0_repeats", acq.b0_repeats}}},
      {"dataset",
       {{"fields", ds.fields},
        {"split", {ds.split.train, ds.split.validation}},
        {"downsample_axis", ds.options.axis},
        {"downsample_factor", ds.options.factor},
        {"downsample_kernel", kernel_name(ds.options.kernel)},
        {"voxel_size_mm", ds.voxel_size_mm}}},
      {"training",
       {{"batch_size", tr.batch_size},
        {"lr0", tr.lr0},
        {"lr_halving_period_epochs", tr.lr_halving_period_epochs},
        {"epochs", tr.epochs},
        {"validation_interval", tr.validation_interval},
        {"threads", tr.threads}}},
      {"loss_weights", {{"mse", tr.weights.mse}, {"fft", tr.weights.fft}, {"ratio_log", tr.weights.ratio_log}}},
  };
  return j.dump(2) + "\n";
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  atomic_write_file(path, dump_run_config(cfg));
}

}  // namespace dwiratio
