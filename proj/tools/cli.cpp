#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dwiratio/diffusion.hpp"
#include "dwiratio/error.hpp"
#include "dwiratio/file_util.hpp"
#include "dwiratio/gradcheck.hpp"
#include "dwiratio/losses.hpp"
#include "dwiratio/model_file.hpp"
#include "dwiratio/nifti.hpp"
#include "dwiratio/phantom.hpp"
#include "dwiratio/random.hpp"
#include "dwiratio/report.hpp"
#include "dwiratio/run_config.hpp"
#include "dwiratio/scheme_io.hpp"
#include "dwiratio/trainer.hpp"

namespace dwiratio::cli {

namespace {

namespace fs = std::filesystem;

/// Seed tag for the noise stream of `render`, kept apart from the phantom stream.
constexpr std::uint64_t kRenderNoiseTag = 1;

struct CommonOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::string out_dir;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* deterministic_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

void add_common(CLI::App& sub, CommonOptions& c) {
  sub.add_option("--config", c.config_path, "Run configuration (JSON)");
  c.seed_opt = sub.add_option("--seed", c.seed, "Run seed (overrides the config)");
  c.deterministic_opt = sub.add_flag("--deterministic,!--nondeterministic", c.deterministic,
                                     "Reproducible gradient reduction order (default on)");
  c.out_opt = sub.add_option("--out", c.out_dir, "Output directory (overrides config and environment)");
}

RunConfig resolve_config(const CommonOptions& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  if (c.seed_opt->count() > 0) cfg.seed = c.seed;
  if (c.deterministic_opt->count() > 0) cfg.deterministic = c.deterministic;
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') cfg.output_dir = env;
  if (c.out_opt->count() > 0) cfg.output_dir = c.out_dir;
  return cfg;
}

fs::path prepare_output(const RunConfig& cfg) {
  const fs::path dir = cfg.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::vector<Volume3D> tensor_volumes(std::size_t nx, std::size_t ny, std::size_t nz,
                                     std::span<const DiffusionTensor> tensors) {
  std::vector<Volume3D> vols(6, Volume3D(nx, ny, nz));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto c = tensors[i].as_array();
    for (std::size_t k = 0; k < 6; ++k) vols[k][i] = c[k];
  }
  return vols;
}

struct ScalarMaps {
  Volume3D fa;
  Volume3D md;
};

ScalarMaps scalar_maps(std::size_t nx, std::size_t ny, std::size_t nz, std::span<const DiffusionTensor> tensors) {
  ScalarMaps maps{Volume3D(nx, ny, nz), Volume3D(nx, ny, nz)};
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto eig = eigendecompose_sym3(tensors[i]);
    maps.fa[i] = fractional_anisotropy(eig);
    maps.md[i] = mean_diffusivity(eig);
  }
  return maps;
}

void write_volume(const fs::path& path, const Volume3D& vol, const RunConfig& cfg, std::ostream& out) {
  write_nifti(path, vol, cfg.dataset.voxel_size_mm);
  out << "wrote " << path.string() << "\n";
}

void write_series(const fs::path& path, std::span<const Volume3D> vols, std::array<double, 3> voxel,
                  std::ostream& out) {
  write_nifti(path, NiftiImage::from_volumes(vols, voxel));
  out << "wrote " << path.string() << "\n";
}

int run_phantom(const RunConfig& cfg, std::ostream& out) {
  const auto dir = prepare_output(cfg);
  const TensorField field = generate_phantom(cfg.phantom, cfg.seed);
  write_series(dir / "tensor.nii", tensor_volumes(field.nx, field.ny, field.nz, field.tensors),
               cfg.dataset.voxel_size_mm, out);
  write_volume(dir / "s0.nii", field.s0, cfg, out);
  Volume3D labels(field.nx, field.ny, field.nz);
  for (std::size_t i = 0; i < field.size(); ++i) labels[i] = static_cast<double>(field.labels[i]);
  write_volume(dir / "labels.nii", labels, cfg, out);
  const auto maps = scalar_maps(field.nx, field.ny, field.nz, field.tensors);
  write_volume(dir / "fa.nii", maps.fa, cfg, out);
  write_volume(dir / "md.nii", maps.md, cfg, out);
  return kExitOk;
}

int run_render(const RunConfig& cfg, bool noiseless, std::ostream& out) {
  const auto dir = prepare_output(cfg);
  const TensorField field = generate_phantom(cfg.phantom, cfg.seed);
  AcquisitionSpec acq = cfg.acquisition.build();
  if (noiseless) acq.noise_model = NoiseModel::None;
  const DwiVolumeSet set = render_dwis(field, acq, derive_seed(cfg.seed, kRenderNoiseTag));

  // Series layout: the averaged b=0 volume first, then one volume per weighted entry.
  std::vector<Volume3D> series{set.b0};
  series.insert(series.end(), set.dwis.begin(), set.dwis.end());
  std::vector<GradientEntry> entries{GradientEntry{0.0, UnitDirection{}}};
  entries.insert(entries.end(), set.dwi_entries.begin(), set.dwi_entries.end());

  write_volume(dir / "b0.nii", set.b0, cfg, out);
  write_series(dir / "dwi.nii", series, cfg.dataset.voxel_size_mm, out);
  write_scheme(GradientScheme(entries), dir / "dwi.bval", dir / "dwi.bvec");
  out << "wrote " << (dir / "dwi.bval").string() << "\nwrote " << (dir / "dwi.bvec").string() << "\n";
  return kExitOk;
}

struct DownsampleOptions {
  std::string input;
  std::string output;
  int axis = 0;
  std::size_t factor = 2;
  DownsampleKernel kernel = DownsampleKernel::Box;
};

int run_downsample(const DownsampleOptions& opt, std::ostream& out) {
  const NiftiImage img = read_nifti_image(opt.input);
  std::vector<Volume3D> reduced;
  for (const auto& vol : img.volumes()) reduced.push_back(downsample_anisotropic(vol, opt.axis, opt.factor, opt.kernel));
  auto voxel = img.voxel_size;
  voxel[static_cast<std::size_t>(opt.axis)] *= static_cast<double>(opt.factor);
  if (img.volume_count() == 1 && img.dims.size() <= 3) {
    write_nifti(opt.output, reduced.front(), voxel);
    out << "wrote " << opt.output << "\n";
  } else {
    write_series(opt.output, reduced, voxel, out);
  }
  return kExitOk;
}

Dataset build_dataset(const RunConfig& cfg) {
  return make_dataset(cfg.dataset.fields, cfg.phantom, cfg.acquisition.build(), cfg.dataset.split, cfg.seed,
                      cfg.dataset.options);
}

int run_train(RunConfig cfg, bool baseline_arm, std::ostream& out) {
  // The saved config records the weights this arm actually used.
  if (baseline_arm) cfg.training.weights = LossWeights::baseline();
  const auto dir = prepare_output(cfg);
  const Dataset dataset = build_dataset(cfg);
  const TrainConfig tc = cfg.train_config();
  out << "dataset: " << dataset.train.size() << " train / " << dataset.validation.size() << " validation slices\n";

  const TrainResult result = train(dataset, tc);
  write_training_csv(result.log, dir / "train.csv");
  atomic_write_file(dir / "summary.json", training_summary_json(result.log, cfg, tc.weights));
  save_model(result.params, dir / "model.bin");
  save_run_config(cfg, dir / "config.json");

  const auto& s = result.log.summary;
  out << "final psnr " << format_double(s.final_psnr) << " dB, converged d_ratio " << format_double(s.converged_d_ratio)
      << "\nwrote train.csv, summary.json, model.bin, config.json to " << dir.string() << "\n";
  return kExitOk;
}

int run_compare(const RunConfig& cfg, std::ostream& out) {
  const auto dir = prepare_output(cfg);
  if (cfg.seeds.empty()) throw Error(ErrorCode::InvalidConfig, "seeds list is empty");
  const Dataset dataset = build_dataset(cfg);
  out << "dataset: " << dataset.train.size() << " train / " << dataset.validation.size() << " validation slices\n";

  const ComparisonReport report = compare_arms(dataset, cfg.train_config(), cfg.seeds);
  for (const auto& s : report.seeds) {
    const auto tag = std::to_string(s.seed);
    write_training_csv(s.baseline.log, dir / ("baseline_seed" + tag + ".csv"));
    write_training_csv(s.ratio.log, dir / ("ratio_seed" + tag + ".csv"));
    out << "seed " << tag << ": d_ratio " << format_double(s.baseline.log.summary.converged_d_ratio) << " -> "
        << format_double(s.ratio.log.summary.converged_d_ratio) << ", psnr "
        << format_double(s.baseline.log.summary.final_psnr) << " -> " << format_double(s.ratio.log.summary.final_psnr)
        << "\n";
  }
  write_training_csv(report.seeds.front().baseline.log, dir / "baseline.csv");
  write_training_csv(report.seeds.front().ratio.log, dir / "ratio.csv");
  atomic_write_file(dir / "summary.json", comparison_summary_json(report, cfg));
  save_run_config(cfg, dir / "config.json");
  out << "ratio arm lower d_ratio in " << report.ratio_lower_d_ratio_count << "/" << report.seeds.size()
      << " seeds; psnr within tolerance in " << report.psnr_within_tolerance_count << "/" << report.seeds.size()
      << "\nwrote baseline.csv, ratio.csv, summary.json to " << dir.string() << "\n";
  return kExitOk;
}

struct SchemePaths {
  std::string bval;
  std::string bvec;
  bool given() const { return !bval.empty() || !bvec.empty(); }
};

int run_fit(const RunConfig& cfg, const std::string& dwi_path, const SchemePaths& scheme_paths, std::ostream& out) {
  const NiftiImage img = read_nifti_image(dwi_path);
  const GradientScheme scheme = read_scheme(scheme_paths.bval, scheme_paths.bvec);
  if (img.volume_count() != scheme.size()) {
    throw Error(ErrorCode::ShapeMismatch, dwi_path + " has " + std::to_string(img.volume_count()) +
                                              " volumes but the scheme has " + std::to_string(scheme.size()) +
                                              " entries");
  }
  const auto vols = img.volumes();
  std::vector<std::size_t> b0_index, weighted_index;
  std::vector<GradientEntry> weighted;
  for (std::size_t k = 0; k < scheme.size(); ++k) {
    if (scheme[k].b > 0.0) {
      weighted_index.push_back(k);
      weighted.push_back(scheme[k]);
    } else {
      b0_index.push_back(k);
    }
  }
  if (b0_index.empty()) throw Error(ErrorCode::InvalidSpec, "series has no b=0 volume");
  if (weighted.empty()) throw Error(ErrorCode::RankDeficientScheme, "series has no diffusion-weighted volume");

  const TensorFitter fitter{GradientScheme(weighted)};
  const auto& first = vols.front();
  std::vector<DiffusionTensor> tensors(first.size());
  std::vector<double> signals(weighted.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    double s0 = 0.0;
    for (auto k : b0_index) s0 += vols[k][i];
    s0 /= static_cast<double>(b0_index.size());
    if (!(s0 > 0.0)) continue;  // no signal to fit; tensor stays zero
    for (std::size_t k = 0; k < weighted.size(); ++k) signals[k] = vols[weighted_index[k]][i];
    tensors[i] = fitter.fit(signals, s0);
  }

  const auto dir = prepare_output(cfg);
  write_series(dir / "tensor.nii", tensor_volumes(first.nx(), first.ny(), first.nz(), tensors), img.voxel_size, out);
  return kExitOk;
}

int run_maps(const RunConfig& cfg, const std::string& tensor_path, const SchemePaths& scheme_paths,
             std::ostream& out) {
  const NiftiImage img = read_nifti_image(tensor_path);
  if (img.volume_count() != 6) {
    throw Error(ErrorCode::BadDimensions,
                tensor_path + " must hold 6 tensor volumes, found " + std::to_string(img.volume_count()));
  }
  const auto vols = img.volumes();
  const auto& first = vols.front();
  std::vector<DiffusionTensor> tensors(first.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    tensors[i] = {vols[0][i], vols[1][i], vols[2][i], vols[3][i], vols[4][i], vols[5][i]};
  }

  const auto dir = prepare_output(cfg);
  const auto maps = scalar_maps(first.nx(), first.ny(), first.nz(), tensors);
  write_nifti(dir / "fa.nii", maps.fa, img.voxel_size);
  write_nifti(dir / "md.nii", maps.md, img.voxel_size);
  out << "wrote " << (dir / "fa.nii").string() << "\nwrote " << (dir / "md.nii").string() << "\n";

  if (scheme_paths.given()) {
    const GradientScheme scheme = read_scheme(scheme_paths.bval, scheme_paths.bvec);
    // Under the tensor model the ADC along g is g^T D g.
    std::vector<Volume3D> adc_vols;
    for (const auto& entry : scheme) {
      if (!(entry.b > 0.0)) continue;
      Volume3D v(first.nx(), first.ny(), first.nz());
      for (std::size_t i = 0; i < tensors.size(); ++i) v[i] = tensors[i].quadratic_form(entry.dir);
      adc_vols.push_back(std::move(v));
    }
    if (adc_vols.empty()) throw Error(ErrorCode::InvalidSpec, "scheme has no b > 0 entry for ADC maps");
    write_series(dir / "adc.nii", adc_vols, img.voxel_size, out);
  }
  return kExitOk;
}

nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

struct EvalOptions {
  std::string pred;
  std::string gt;
  std::string b0;
  std::string output;
};

int run_eval(const EvalOptions& opt, std::ostream& out) {
  const NiftiImage pred = read_nifti_image(opt.pred);
  const NiftiImage gt = read_nifti_image(opt.gt);
  const Volume3D b0 = read_nifti(opt.b0).volume;
  if (pred.dims != gt.dims) throw Error(ErrorCode::DimMismatch, "prediction and ground truth dims differ");
  const auto pred_vols = pred.volumes();
  const auto gt_vols = gt.volumes();
  if (!pred_vols.front().same_dims(b0)) {
    throw Error(ErrorCode::DimMismatch, "b0 volume dims differ from the DWI volumes");
  }

  std::vector<double> psnrs, ratios;
  for (std::size_t v = 0; v < pred_vols.size(); ++v) {
    for (std::size_t z = 0; z < b0.nz(); ++z) {
      const auto p = pred_vols[v].slice_z(z);
      const auto g = gt_vols[v].slice_z(z);
      psnrs.push_back(psnr(p, g));
      ratios.push_back(ratio_distance(p, g, b0.slice_z(z)));
    }
  }
  // Ascending summation keeps the mean independent of slice order.
  auto mean = [](std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    double acc = 0.0;
    for (double x : xs) acc += x;
    return acc / static_cast<double>(xs.size());
  };

  nlohmann::ordered_json doc;
  doc["psnr"] = json_number(mean(psnrs));
  doc["d_ratio"] = json_number(mean(ratios));
  doc["slices"] = psnrs.size();
  const std::string text = doc.dump(2) + "\n";
  out << text;
  if (!opt.output.empty()) atomic_write_file(opt.output, text);
  return kExitOk;
}

int run_losscheck(const RunConfig& cfg, std::ostream& out) {
  auto cases = check_loss_gradients(cfg.seed);
  const auto net = check_network_gradients(cfg.seed);
  cases.insert(cases.end(), net.begin(), net.end());
  bool all = true;
  for (const auto& c : cases) {
    all = all && c.passed();
    out << (c.passed() ? "PASS " : "FAIL ") << c.name << " max_rel_err=" << format_double(c.max_relative_error)
        << " tol=" << format_double(c.tolerance) << " entries=" << c.entries << "\n";
  }
  out << (all ? "all gradient checks passed\n" : "gradient checks failed\n");
  return all ? kExitOk : kExitDataError;
}

}  // namespace

int dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion MRI phantom, tensor fitting and super-resolution training toolkit", "dwiratio"};
  app.require_subcommand(1, 1);

  std::map<std::string, CommonOptions> common;
  // Checked after parsing so that an unknown flag is reported before a missing one.
  std::vector<std::pair<const CLI::App*, CLI::Option*>> required;
  auto require = [&](const CLI::App* s, CLI::Option* o) { required.emplace_back(s, o); };
  auto sub = [&](const std::string& name, const std::string& help) {
    auto* s = app.add_subcommand(name, help);
    add_common(*s, common[name]);
    return s;
  };

  auto* phantom = sub("phantom", "Generate a tensor phantom and write its field maps");
  auto* render = sub("render", "Render b0 and DWI volumes plus bval/bvec files");
  bool noiseless = false;
  render->add_flag("--noiseless", noiseless, "Skip noise");

  auto* downsample = sub("downsample", "Anisotropically downsample a NIfTI volume or series");
  DownsampleOptions ds;
  require(downsample, downsample->add_option("--in", ds.input, "Input NIfTI file"));
  require(downsample, downsample->add_option("--output", ds.output, "Output NIfTI file"));
  downsample->add_option("--axis", ds.axis, "In-plane axis (0 or 1)")->check(CLI::IsMember({0, 1}));
  downsample->add_option("--factor", ds.factor, "Integer factor")->check(CLI::Range(1, 64));
  const std::map<std::string, DownsampleKernel> kernels{{"box", DownsampleKernel::Box},
                                                        {"strided", DownsampleKernel::Strided}};
  downsample->add_option("--kernel", ds.kernel, "box or strided")->transform(CLI::CheckedTransformer(kernels));

  auto* train_cmd = sub("train", "Train one arm on the phantom dataset");
  std::string arm = "ratio";
  train_cmd->add_option("--arm", arm, "ratio (configured weights) or baseline (no ratio-log term)")
      ->check(CLI::IsMember({"ratio", "baseline"}));

  auto* compare = sub("compare", "Train baseline and ratio arms for every configured seed");

  SchemePaths fit_scheme;
  std::string fit_dwi;
  auto* fit = sub("fit", "Fit a diffusion tensor per voxel");
  require(fit, fit->add_option("--dwi", fit_dwi, "4D series including at least one b=0 volume"));
  require(fit, fit->add_option("--bval", fit_scheme.bval, "b-values file"));
  require(fit, fit->add_option("--bvec", fit_scheme.bvec, "b-vectors file"));

  SchemePaths maps_scheme;
  std::string maps_tensor;
  auto* maps = sub("maps", "Write FA, MD and (with a scheme) ADC maps from a tensor volume");
  require(maps, maps->add_option("--tensor", maps_tensor, "6-volume tensor NIfTI"));
  auto* bval_opt = maps->add_option("--bval", maps_scheme.bval, "b-values file for ADC maps");
  auto* bvec_opt = maps->add_option("--bvec", maps_scheme.bvec, "b-vectors file for ADC maps");
  bval_opt->needs(bvec_opt);
  bvec_opt->needs(bval_opt);

  EvalOptions ev;
  auto* eval = sub("eval", "PSNR and d_ratio between predicted and reference DWIs");
  require(eval, eval->add_option("--pred", ev.pred, "Predicted DWI NIfTI"));
  require(eval, eval->add_option("--gt", ev.gt, "Reference DWI NIfTI"));
  require(eval, eval->add_option("--b0", ev.b0, "Reference b0 NIfTI"));
  eval->add_option("--output", ev.output, "Also write the JSON result here");

  auto* losscheck = sub("losscheck", "Run the finite-difference gradient checks");

  if (!args.empty() && !args.front().starts_with('-') && app.get_subcommand_no_throw(args.front()) == nullptr) {
    err << "error: unknown subcommand '" << args.front() << "'\n\n" << app.help();
    return kExitUsage;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
    for (const auto& [s, o] : required) {
      if (s->parsed() && o->count() == 0) throw CLI::RequiredError(o->get_name());
    }
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    auto config_for = [&](const CLI::App* s) { return resolve_config(common.at(s->get_name())); };
    if (phantom->parsed()) return run_phantom(config_for(phantom), out);
    if (render->parsed()) return run_render(config_for(render), noiseless, out);
    if (downsample->parsed()) return run_downsample(ds, out);
    if (train_cmd->parsed()) return run_train(config_for(train_cmd), arm == "baseline", out);
    if (compare->parsed()) return run_compare(config_for(compare), out);
    if (fit->parsed()) return run_fit(config_for(fit), fit_dwi, fit_scheme, out);
    if (maps->parsed()) return run_maps(config_for(maps), maps_tensor, maps_scheme, out);
    if (eval->parsed()) return run_eval(ev, out);
    if (losscheck->parsed()) return run_losscheck(config_for(losscheck), out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataError;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace dwiratio::cli
