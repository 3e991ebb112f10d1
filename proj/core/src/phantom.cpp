#include "dwiratio/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dwiratio/error.hpp"
#include "dwiratio/random.hpp"

namespace dwiratio {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

bool valid_diffusivity(double d) { return d > 0.0 && d <= 4e-3; }

/// Smooth field in [-1, 1] built from a few random low-frequency plane waves.
class SmoothModulation {
 public:
  SmoothModulation(const PhantomSpec& spec, std::uint64_t seed) {
    PhiloxStream rng(seed, 0x500D);
    double amp_sum = 0.0;
    for (auto& w : waves_) {
      for (std::size_t a = 0; a < 3; ++a) {
        const double cycles = rng.uniform(0.2, 1.2) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        w.k[a] = 2.0 * std::numbers::pi * cycles / static_cast<double>(spec.dims[a]);
      }
      w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      w.amplitude = rng.uniform(0.5, 1.0);
      amp_sum += w.amplitude;
    }
    for (auto& w : waves_) w.amplitude /= amp_sum;
  }

  double operator()(double x, double y, double z) const {
    double acc = 0.0;
    for (const auto& w : waves_) acc += w.amplitude * std::cos(w.k[0] * x + w.k[1] * y + w.k[2] * z + w.phase);
    return acc;
  }

 private:
  struct Wave {
    std::array<double, 3> k{};
    double phase = 0.0;
    double amplitude = 0.0;
  };
  std::array<Wave, 3> waves_{};
};

double slice_shrink(const PhantomSpec& spec, std::size_t z) {
  const double zf = (static_cast<double>(z) + 0.5) / static_cast<double>(spec.dims[2]);
  return std::sqrt(1.0 - 0.5 * zf * zf);
}

}  // namespace

void PhantomSpec::validate() const {
  if (dims[0] < 16 || dims[1] < 16 || dims[2] < 4) {
    throw Error(ErrorCode::InvalidSpec, "phantom dims must be at least 16x16x4");
  }
  for (double d : {background_diffusivity, gray_matter_diffusivity, fiber_axial_diffusivity,
                   fiber_radial_diffusivity}) {
    if (!valid_diffusivity(d)) throw Error(ErrorCode::InvalidSpec, "diffusivities must lie in (0, 4e-3]");
  }
  if (fiber_axial_diffusivity < fiber_radial_diffusivity) {
    throw Error(ErrorCode::InvalidSpec, "fiber axial diffusivity must be >= radial");
  }
  if (!(ring_radius_fraction > 0.0 && ring_radius_fraction < brain_radius_fraction && brain_radius_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidSpec, "need 0 < ring_radius_fraction < brain_radius_fraction <= 1");
  }
  if (!(ring_width_voxels > 0.0) || !(bundle_width_voxels > 0.0) || bundle_angle_jitter_deg < 0.0) {
    throw Error(ErrorCode::InvalidSpec, "widths must be > 0 and jitter >= 0");
  }
  for (double s : {s0_background, s0_exterior, s0_gray_matter, s0_white_matter}) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw Error(ErrorCode::InvalidSpec, "s0 levels must be >= 0");
  }
  if (!(s0_variation >= 0.0 && s0_variation < 1.0)) {
    throw Error(ErrorCode::InvalidSpec, "s0_variation must lie in [0, 1)");
  }
}

RingGeometry ring_geometry(const PhantomSpec& spec, std::size_t z) {
  const double half = 0.5 * static_cast<double>(std::min(spec.dims[0], spec.dims[1]));
  return {0.5 * (static_cast<double>(spec.dims[0]) - 1.0), 0.5 * (static_cast<double>(spec.dims[1]) - 1.0),
          spec.ring_radius_fraction * half * slice_shrink(spec, z)};
}

TensorField generate_phantom(const PhantomSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto [nx, ny, nz] = spec.dims;

  PhiloxStream rng(seed, 0xB0D1E5);
  std::array<UnitDirection, 2> bundle_dirs;
  for (std::size_t k = 0; k < 2; ++k) {
    const double jitter = rng.uniform(-spec.bundle_angle_jitter_deg, spec.bundle_angle_jitter_deg);
    const double theta = (spec.bundle_angles_deg[k] + jitter) * kDegToRad;
    bundle_dirs[k] = UnitDirection(std::cos(theta), std::sin(theta), 0.0);
  }
  const SmoothModulation modulation(spec, seed);

  const auto background = DiffusionTensor::isotropic(spec.background_diffusivity);
  const auto gray = DiffusionTensor::isotropic(spec.gray_matter_diffusivity);
  std::array<DiffusionTensor, 2> bundle_tensors;
  for (std::size_t k = 0; k < 2; ++k) {
    bundle_tensors[k] = DiffusionTensor::axially_symmetric(spec.fiber_axial_diffusivity,
                                                           spec.fiber_radial_diffusivity, bundle_dirs[k]);
  }

  TensorField field;
  field.nx = nx;
  field.ny = ny;
  field.nz = nz;
  field.tensors.resize(nx * ny * nz);
  field.labels.resize(nx * ny * nz);
  field.s0 = Volume3D(nx, ny, nz);

  const double half = 0.5 * static_cast<double>(std::min(nx, ny));
  const double ring_half_width = 0.5 * spec.ring_width_voxels;
  const double bundle_half_width = 0.5 * spec.bundle_width_voxels;

  for (std::size_t z = 0; z < nz; ++z) {
    const auto ring = ring_geometry(spec, z);
    const double brain_radius = spec.brain_radius_fraction * half * slice_shrink(spec, z);
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t x = 0; x < nx; ++x) {
        const double dx = static_cast<double>(x) - ring.cx;
        const double dy = static_cast<double>(y) - ring.cy;
        const double r = std::hypot(dx, dy);

        TissueClass label = TissueClass::Background;
        DiffusionTensor d = background;
        if (std::abs(r - ring.radius) <= ring_half_width && r > 0.0) {
          label = TissueClass::WhiteMatterRing;
          d = DiffusionTensor::axially_symmetric(spec.fiber_axial_diffusivity, spec.fiber_radial_diffusivity,
                                                 UnitDirection(-dy, dx, 0.0));
        } else if (r < ring.radius - ring_half_width) {
          std::array<bool, 2> inside{};
          for (std::size_t k = 0; k < 2; ++k) {
            // Perpendicular distance from the line through the centre along the bundle.
            inside[k] = std::abs(dx * bundle_dirs[k].y() - dy * bundle_dirs[k].x()) <= bundle_half_width;
          }
          if (inside[0] && inside[1]) {
            label = TissueClass::Bundle;
            d = (bundle_tensors[0] + bundle_tensors[1]) * 0.5;
          } else if (inside[0] || inside[1]) {
            label = TissueClass::Bundle;
            d = bundle_tensors[inside[0] ? 0 : 1];
          }
        } else if (r <= brain_radius) {
          label = TissueClass::GrayMatter;
          d = gray;
        }

        double s0 = r > brain_radius ? spec.s0_exterior : spec.s0_background;
        if (label == TissueClass::GrayMatter) s0 = spec.s0_gray_matter;
        if (label == TissueClass::WhiteMatterRing || label == TissueClass::Bundle) s0 = spec.s0_white_matter;
        s0 *= 1.0 + spec.s0_variation * modulation(static_cast<double>(x), static_cast<double>(y),
                                                   static_cast<double>(z));

        const std::size_t i = field.index(x, y, z);
        field.tensors[i] = d;
        field.labels[i] = label;
        field.s0[i] = s0;
      }
    }
  }
  return field;
}

void AcquisitionSpec::validate() const {
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw Error(ErrorCode::InvalidSpec, "noise_sigma must be >= 0");
  }
  if (b0_repeats < 1) throw Error(ErrorCode::InvalidSpec, "b0_repeats must be >= 1");
}

double absolute_noise_sigma(const TensorField& field, const AcquisitionSpec& acq) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (field.labels[i] != TissueClass::Background) {
      sum += field.s0[i];
      ++count;
    }
  }
  if (count == 0) {
    for (double v : field.s0.values()) sum += v;
    count = field.size();
  }
  return count == 0 ? 0.0 : acq.noise_sigma * sum / static_cast<double>(count);
}

DwiVolumeSet render_dwis(const TensorField& field, const AcquisitionSpec& acq, std::uint64_t seed) {
  acq.validate();
  const double sigma = acq.noise_model == NoiseModel::None ? 0.0 : absolute_noise_sigma(field, acq);
  const bool noisy = sigma > 0.0;

  // Each draw is addressed by (voxel, volume tag, repeat) so any evaluation order gives the same result.
  auto noisy_value = [&](double v, std::size_t voxel, std::uint64_t tag, std::uint64_t repeat) {
    if (!noisy) return v;
    const auto [n1, n2] = normal_pair(seed, voxel, (tag << 32) | repeat);
    if (acq.noise_model == NoiseModel::Gaussian) return v + sigma * n1;
    const double re = v + sigma * n1;
    const double im = sigma * n2;
    return std::sqrt(re * re + im * im);
  };

  DwiVolumeSet out;
  out.noise_model = acq.noise_model;
  out.noise_sigma_abs = sigma;
  out.seed = seed;
  out.b0 = Volume3D(field.nx, field.ny, field.nz);
  if (!noisy) {
    out.b0 = field.s0;
  } else {
    const auto repeats = static_cast<double>(acq.b0_repeats);
    for (std::size_t i = 0; i < field.size(); ++i) {
      double acc = 0.0;
      for (std::size_t r = 0; r < acq.b0_repeats; ++r) acc += noisy_value(field.s0[i], i, 0, r);
      out.b0[i] = acc / repeats;
    }
  }

  std::uint64_t tag = 1;
  for (const auto& entry : acq.scheme) {
    if (entry.b <= 0.0) continue;
    Volume3D dwi(field.nx, field.ny, field.nz);
    for (std::size_t i = 0; i < field.size(); ++i) {
      const double clean = field.s0[i] * predict_attenuation(field.tensors[i], entry.b, entry.dir);
      dwi[i] = noisy_value(clean, i, tag, 0);
    }
    out.dwis.push_back(std::move(dwi));
    out.dwi_entries.push_back(entry);
    ++tag;
  }
  return out;
}

Volume3D downsample_anisotropic(const Volume3D& vol, int axis, std::size_t factor, DownsampleKernel kernel) {
  if (axis < 0 || axis > 2) throw Error(ErrorCode::InvalidSpec, "axis must be 0, 1 or 2");
  if (factor == 0) throw Error(ErrorCode::InvalidSpec, "factor must be >= 1");
  const std::size_t n = vol.dim(axis);
  if (n % factor != 0) {
    throw Error(ErrorCode::NonDivisibleDim, "dimension " + std::to_string(n) + " along axis " +
                                                std::to_string(axis) + " not divisible by " + std::to_string(factor));
  }
  std::array<std::size_t, 3> dims{vol.nx(), vol.ny(), vol.nz()};
  dims[static_cast<std::size_t>(axis)] = n / factor;
  Volume3D out(dims[0], dims[1], dims[2]);
  const auto inv = 1.0 / static_cast<double>(factor);
  for (std::size_t z = 0; z < dims[2]; ++z) {
    for (std::size_t y = 0; y < dims[1]; ++y) {
      for (std::size_t x = 0; x < dims[0]; ++x) {
        std::array<std::size_t, 3> src{x, y, z};
        auto& s = src[static_cast<std::size_t>(axis)];
        s *= factor;
        if (kernel == DownsampleKernel::Strided) {
          out(x, y, z) = vol(src[0], src[1], src[2]);
          continue;
        }
        // Shifted mean keeps constant runs bit-exact.
        const double first = vol(src[0], src[1], src[2]);
        double acc = 0.0;
        for (std::size_t k = 0; k < factor; ++k, ++s) acc += vol(src[0], src[1], src[2]) - first;
        out(x, y, z) = first + acc * inv;
      }
    }
  }
  return out;
}

Image2D downsample_anisotropic(const Image2D& img, int axis, std::size_t factor, DownsampleKernel kernel) {
  if (axis < 0 || axis > 1) throw Error(ErrorCode::InvalidSpec, "2D axis must be 0 or 1");
  const Volume3D vol(img.nx(), img.ny(), 1, img.data());
  const auto out = downsample_anisotropic(vol, axis, factor, kernel);
  return out.slice_z(0);
}

Image2D bilinear_upsample(const Image2D& img, int axis, std::size_t factor) {
  if (axis < 0 || axis > 1) throw Error(ErrorCode::InvalidSpec, "2D axis must be 0 or 1");
  if (factor == 0) throw Error(ErrorCode::InvalidSpec, "factor must be >= 1");
  const std::size_t n = axis == 0 ? img.nx() : img.ny();
  const std::size_t out_n = n * factor;
  Image2D out(axis == 0 ? out_n : img.nx(), axis == 0 ? img.ny() : out_n);
  if (n == 0) return out;

  // Output sample j sits at input coordinate (j + 0.5) / factor - 0.5.
  std::vector<std::size_t> lo(out_n), hi(out_n);
  std::vector<double> frac(out_n);
  for (std::size_t j = 0; j < out_n; ++j) {
    double pos = (static_cast<double>(j) + 0.5) / static_cast<double>(factor) - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
    lo[j] = static_cast<std::size_t>(std::floor(pos));
    hi[j] = std::min(lo[j] + 1, n - 1);
    frac[j] = pos - static_cast<double>(lo[j]);
  }
  for (std::size_t y = 0; y < out.ny(); ++y) {
    for (std::size_t x = 0; x < out.nx(); ++x) {
      const std::size_t j = axis == 0 ? x : y;
      const double a = axis == 0 ? img(lo[j], y) : img(x, lo[j]);
      const double b = axis == 0 ? img(hi[j], y) : img(x, hi[j]);
      out(x, y) = frac[j] == 0.0 ? a : a + frac[j] * (b - a);
    }
  }
  return out;
}

double normalization_scale(std::span<const double> b0_values) {
  if (b0_values.empty()) throw Error(ErrorCode::DegenerateB0, "empty b0");
  std::vector<double> sorted(b0_values.begin(), b0_values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = 0.995 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  const double scale = frac == 0.0 ? sorted[lo] : sorted[lo] + frac * (sorted[hi] - sorted[lo]);
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorCode::DegenerateB0, "b0 99.5th percentile is " + std::to_string(scale));
  }
  return scale;
}

NormalizedSlices normalize_pair(std::span<const Image2D> dwi_slices, const Image2D& b0_slice, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw Error(ErrorCode::DegenerateB0, "scale must be > 0");
  auto divide = [scale](const Image2D& img) {
    Image2D out = img;
    for (double& v : out.values()) v /= scale;
    return out;
  };
  NormalizedSlices out;
  out.scale = scale;
  const auto b0 = divide(b0_slice);
  for (const auto& dwi : dwi_slices) {
    if (!dwi.same_dims(b0_slice)) throw Error(ErrorCode::DimMismatch, "DWI and b0 slices differ in size");
    out.pairs.push_back({divide(dwi), b0});
  }
  return out;
}

NormalizedSlices normalize_pair(std::span<const Image2D> dwi_slices, const Image2D& b0_slice) {
  return normalize_pair(dwi_slices, b0_slice, normalization_scale(b0_slice.values()));
}

std::size_t retained_slice_begin(std::size_t nz) noexcept { return nz / 2; }

Dataset make_dataset(std::size_t field_count, const PhantomSpec& spec, const AcquisitionSpec& acq,
                     const DatasetSplit& split, std::uint64_t seed, const DatasetOptions& options) {
  if (!(split.train >= 0.0 && split.validation >= 0.0) ||
      std::abs(split.train + split.validation - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidSplit, "split fractions must be >= 0 and sum to 1");
  }
  spec.validate();
  acq.validate();
  const auto train_fields = static_cast<std::size_t>(std::llround(split.train * static_cast<double>(field_count)));

  Dataset out;
  for (std::size_t f = 0; f < field_count; ++f) {
    const auto field = generate_phantom(spec, derive_seed(seed, 2 * f));
    auto rendered = render_dwis(field, acq, derive_seed(seed, 2 * f + 1));
    const double scale = normalization_scale(rendered.b0.values());

    std::vector<Volume3D> lowres;
    lowres.reserve(rendered.dwis.size());
    for (const auto& dwi : rendered.dwis) {
      lowres.push_back(downsample_anisotropic(dwi, options.axis, options.factor, options.kernel));
    }

    auto& target = f < train_fields ? out.train : out.validation;
    for (std::size_t z = retained_slice_begin(field.nz); z < field.nz; ++z) {
      std::vector<Image2D> gt_slices;
      for (const auto& dwi : rendered.dwis) gt_slices.push_back(dwi.slice_z(z));
      auto normalized = normalize_pair(gt_slices, rendered.b0.slice_z(z), scale);
      auto b0 = std::make_shared<const Image2D>(normalized.pairs.empty() ? Image2D{} : normalized.pairs[0].b0);
      for (std::size_t k = 0; k < normalized.pairs.size(); ++k) {
        Image2D input = bilinear_upsample(lowres[k].slice_z(z), options.axis, options.factor);
        for (double& v : input.values()) v /= scale;
        target.push_back({std::move(input), std::move(normalized.pairs[k].dwi), b0});
      }
    }
  }
  return out;
}

}  // namespace dwiratio
