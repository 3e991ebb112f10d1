#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace dwiratio {

/// Unit-length gradient direction. Construction normalizes; the zero vector is rejected.
class UnitDirection {
 public:
  UnitDirection() = default;  // (1, 0, 0)
  UnitDirection(double x, double y, double z);

  double x() const noexcept { return v_[0]; }
  double y() const noexcept { return v_[1]; }
  double z() const noexcept { return v_[2]; }
  const std::array<double, 3>& components() const noexcept { return v_; }
  double operator[](std::size_t i) const noexcept { return v_[i]; }
  double dot(const UnitDirection& o) const noexcept {
    return v_[0] * o.v_[0] + v_[1] * o.v_[1] + v_[2] * o.v_[2];
  }

  bool operator==(const UnitDirection&) const = default;

 private:
  std::array<double, 3> v_{1.0, 0.0, 0.0};
};

/// Symmetric 3x3 diffusion tensor in mm^2/s. Component order for all
/// 6-vectors is (dxx, dyy, dzz, dxy, dxz, dyz).
struct DiffusionTensor {
  double dxx = 0.0;
  double dyy = 0.0;
  double dzz = 0.0;
  double dxy = 0.0;
  double dxz = 0.0;
  double dyz = 0.0;

  static DiffusionTensor isotropic(double d) noexcept { return {d, d, d, 0.0, 0.0, 0.0}; }
  /// Cylindrically symmetric tensor with principal axis `axis`.
  static DiffusionTensor axially_symmetric(double axial, double radial, const UnitDirection& axis) noexcept;
  static DiffusionTensor from_array(const std::array<double, 6>& c) noexcept {
    return {c[0], c[1], c[2], c[3], c[4], c[5]};
  }

  std::array<double, 6> as_array() const noexcept { return {dxx, dyy, dzz, dxy, dxz, dyz}; }
  std::array<std::array<double, 3>, 3> as_matrix() const noexcept {
    return {{{dxx, dxy, dxz}, {dxy, dyy, dyz}, {dxz, dyz, dzz}}};
  }
  double trace() const noexcept { return dxx + dyy + dzz; }
  /// g^T D g
  double quadratic_form(const UnitDirection& g) const noexcept;
  /// True when every eigenvalue is >= -1e-12.
  bool is_positive_semidefinite() const;

  DiffusionTensor operator+(const DiffusionTensor& o) const noexcept {
    return {dxx + o.dxx, dyy + o.dyy, dzz + o.dzz, dxy + o.dxy, dxz + o.dxz, dyz + o.dyz};
  }
  DiffusionTensor operator*(double s) const noexcept {
    return {dxx * s, dyy * s, dzz * s, dxy * s, dxz * s, dyz * s};
  }
  bool operator==(const DiffusionTensor&) const = default;
};

struct GradientEntry {
  double b = 0.0;  // s/mm^2
  UnitDirection dir;
  bool operator==(const GradientEntry&) const = default;
};

/// Ordered (b, g) acquisition table. Never empty; all b >= 0.
class GradientScheme {
 public:
  explicit GradientScheme(std::vector<GradientEntry> entries);

  std::size_t size() const noexcept { return entries_.size(); }
  const GradientEntry& operator[](std::size_t i) const noexcept { return entries_[i]; }
  const std::vector<GradientEntry>& entries() const noexcept { return entries_; }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  std::size_t weighted_count() const noexcept;

  bool operator==(const GradientScheme&) const = default;

 private:
  std::vector<GradientEntry> entries_;
};

/// `count` directions at a single b-value, spread evenly over the sphere by
/// antipodally-symmetric electrostatic repulsion. Deterministic given seed.
GradientScheme make_even_scheme(std::size_t count, double b, std::uint64_t seed);

struct EigenSystem {
  std::array<double, 3> lambda{};  // descending
  std::array<UnitDirection, 3> vectors{};
};

double predict_attenuation(const DiffusionTensor& d, double b, const UnitDirection& g) noexcept;

std::vector<double> synthesize_signals(const DiffusionTensor& d, double s0, const GradientScheme& scheme);

/// Row i is -b_i [gx^2, gy^2, gz^2, 2gxgy, 2gxgz, 2gygz].
std::vector<std::array<double, 6>> design_matrix(const GradientScheme& scheme);

/// Log-linear ordinary least squares fit; the QR factorisation of the design
/// matrix is computed once and reused for every voxel.
class TensorFitter {
 public:
  explicit TensorFitter(const GradientScheme& scheme);
  ~TensorFitter();
  TensorFitter(TensorFitter&&) noexcept;
  TensorFitter& operator=(TensorFitter&&) noexcept;

  DiffusionTensor fit(std::span<const double> signals, double s0) const;
  std::size_t size() const noexcept { return count_; }

  static constexpr double kLogFloor = 1e-12;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::size_t count_ = 0;
};

DiffusionTensor fit_tensor(std::span<const double> signals, double s0, const GradientScheme& scheme);

/// Cyclic Jacobi eigendecomposition. Eigenvalues sorted descending (stable
/// for ties); each eigenvector's first component with |c| > 1e-12 is made
/// non-negative.
EigenSystem eigendecompose_sym3(const DiffusionTensor& d);

double mean_diffusivity(const EigenSystem& e) noexcept;
double fractional_anisotropy(const EigenSystem& e) noexcept;

/// Apparent diffusion coefficient from a single measurement: -ln(s/s0)/b.
double adc(double s, double s0, double b);

}  // namespace dwiratio
