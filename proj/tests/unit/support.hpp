#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "dwiratio/diffusion.hpp"
#include "dwiratio/grid.hpp"
#include "dwiratio/random.hpp"

namespace dwiratio::test {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dwiratio_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Haar-distributed rotation from a normalized random quaternion.
inline Eigen::Matrix3d random_rotation(PhiloxStream& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

inline DiffusionTensor to_tensor(const Eigen::Matrix3d& m) {
  return {m(0, 0), m(1, 1), m(2, 2), m(0, 1), m(0, 2), m(1, 2)};
}

inline Eigen::Matrix3d to_matrix(const DiffusionTensor& d) {
  Eigen::Matrix3d m;
  m << d.dxx, d.dxy, d.dxz, d.dxy, d.dyy, d.dyz, d.dxz, d.dyz, d.dzz;
  return m;
}

/// R diag(l) R^T with eigenvalues uniform in [lo, hi].
inline DiffusionTensor random_psd_tensor(PhiloxStream& rng, double lo = 0.1e-3, double hi = 3e-3) {
  const Eigen::Matrix3d r = random_rotation(rng);
  const Eigen::Vector3d l(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi));
  return to_tensor(r * l.asDiagonal() * r.transpose());
}

inline double max_component_error(const DiffusionTensor& a, const DiffusionTensor& b) {
  const auto x = a.as_array();
  const auto y = b.as_array();
  double worst = 0.0;
  for (std::size_t i = 0; i < 6; ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
  return worst;
}

inline Image2D random_image(PhiloxStream& rng, std::size_t nx, std::size_t ny, double lo, double hi) {
  Image2D img(nx, ny);
  for (auto& v : img.values()) v = rng.uniform(lo, hi);
  return img;
}

/// Closed-form FA evaluated directly from three eigenvalues.
inline double closed_form_fa(double l1, double l2, double l3) {
  const double num = (l1 - l2) * (l1 - l2) + (l2 - l3) * (l2 - l3) + (l3 - l1) * (l3 - l1);
  const double den = l1 * l1 + l2 * l2 + l3 * l3;
  return std::sqrt(0.5) * std::sqrt(num) / std::sqrt(den);
}

}  // namespace dwiratio::test
