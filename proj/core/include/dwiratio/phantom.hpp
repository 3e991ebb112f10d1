#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "dwiratio/diffusion.hpp"
#include "dwiratio/grid.hpp"
#include "dwiratio/losses.hpp"

namespace dwiratio {

enum class TissueClass : std::uint8_t {
  Background = 0,  // CSF-like, isotropic (also fills the ring interior)
  GrayMatter = 1,  // isotropic annulus outside the ring
  WhiteMatterRing = 2,
  Bundle = 3,  // straight bundles; averaged tensor where they cross
};

struct PhantomSpec {
  std::array<std::size_t, 3> dims{64, 64, 16};

  double background_diffusivity = 3.0e-3;
  double gray_matter_diffusivity = 0.8e-3;
  double fiber_axial_diffusivity = 1.7e-3;
  double fiber_radial_diffusivity = 0.3e-3;

  // Radii are fractions of the in-plane half extent; they shrink towards
  // the top slices.
  double brain_radius_fraction = 0.9;
  double ring_radius_fraction = 0.55;
  double ring_width_voxels = 3.0;
  double bundle_width_voxels = 3.0;
  std::array<double, 2> bundle_angles_deg{30.0, 120.0};
  double bundle_angle_jitter_deg = 10.0;

  double s0_background = 1.0;  // CSF-like fill inside the brain (ring interior)
  double s0_exterior = 1.0;    // background voxels outside the brain radius
  double s0_gray_matter = 0.75;
  double s0_white_matter = 0.6;
  double s0_variation = 0.10;  // peak relative amplitude of the smooth multiplicative field

  /// Throws InvalidSpec.
  void validate() const;
  bool operator==(const PhantomSpec&) const = default;
};

struct TensorField {
  std::size_t nx = 0, ny = 0, nz = 0;
  std::vector<DiffusionTensor> tensors;
  Volume3D s0;
  std::vector<TissueClass> labels;

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept { return (z * ny + y) * nx + x; }
  std::size_t size() const noexcept { return tensors.size(); }
  bool operator==(const TensorField&) const = default;
};

/// In-plane centre of the phantom and the ring radius used on slice z.
struct RingGeometry {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
};
RingGeometry ring_geometry(const PhantomSpec& spec, std::size_t z);

TensorField generate_phantom(const PhantomSpec& spec, std::uint64_t seed);

enum class NoiseModel { None, Gaussian, Rician };

struct AcquisitionSpec {
  explicit AcquisitionSpec(GradientScheme s, NoiseModel model = NoiseModel::Rician, double sigma = 0.03,
                           std::size_t repeats = 5)
      : scheme(std::move(s)), noise_model(model), noise_sigma(sigma), b0_repeats(repeats) {}

  GradientScheme scheme;
  NoiseModel noise_model;
  double noise_sigma;  // fraction of mean tissue s0
  std::size_t b0_repeats;

  /// Throws InvalidSpec.
  void validate() const;
};

struct DwiVolumeSet {
  Volume3D b0;
  std::vector<Volume3D> dwis;  // one per scheme entry with b > 0, in scheme order
  std::vector<GradientEntry> dwi_entries;
  NoiseModel noise_model = NoiseModel::None;
  double noise_sigma_abs = 0.0;
  std::uint64_t seed = 0;
};

/// Absolute noise sigma: noise_sigma times the mean s0 over non-background voxels.
double absolute_noise_sigma(const TensorField& field, const AcquisitionSpec& acq);

DwiVolumeSet render_dwis(const TensorField& field, const AcquisitionSpec& acq, std::uint64_t seed);

enum class DownsampleKernel {
  Box,      // mean of `factor` consecutive samples
  Strided,  // keep every factor-th sample
};

Volume3D downsample_anisotropic(const Volume3D& vol, int axis, std::size_t factor,
                                DownsampleKernel kernel = DownsampleKernel::Box);
Image2D downsample_anisotropic(const Image2D& img, int axis, std::size_t factor,
                               DownsampleKernel kernel = DownsampleKernel::Box);

/// Linear interpolation at output sample centres, edge samples replicated.
Image2D bilinear_upsample(const Image2D& img, int axis, std::size_t factor);

/// 99.5th percentile (linear interpolation between order statistics).
double normalization_scale(std::span<const double> b0_values);

struct NormalizedSlices {
  std::vector<SlicePair> pairs;
  double scale = 1.0;
};

/// Divides every DWI slice and the b0 slice by `scale`.
NormalizedSlices normalize_pair(std::span<const Image2D> dwi_slices, const Image2D& b0_slice, double scale);
/// Scale taken from the b0 slice itself.
NormalizedSlices normalize_pair(std::span<const Image2D> dwi_slices, const Image2D& b0_slice);

struct TrainingSample {
  Image2D input;  // low-resolution DWI slice restored to the target grid
  Image2D gt;     // high-resolution DWI slice
  std::shared_ptr<const Image2D> b0;
};

struct Dataset {
  std::vector<TrainingSample> train;
  std::vector<TrainingSample> validation;
};

struct DatasetSplit {
  double train = 0.75;
  double validation = 0.25;
};

struct DatasetOptions {
  int axis = 0;
  std::size_t factor = 2;
  DownsampleKernel kernel = DownsampleKernel::Box;
};

/// Retained slices z in [nz/2, nz) ("mid and upper").
std::size_t retained_slice_begin(std::size_t nz) noexcept;

Dataset make_dataset(std::size_t field_count, const PhantomSpec& spec, const AcquisitionSpec& acq,
                     const DatasetSplit& split, std::uint64_t seed, const DatasetOptions& options = {});

}  // namespace dwiratio
