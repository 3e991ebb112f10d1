#include "dwiratio/diffusion.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dwiratio/error.hpp"
#include "dwiratio/random.hpp"

namespace dwiratio {

UnitDirection::UnitDirection(double x, double y, double z) {
  const double norm = std::sqrt(x * x + y * y + z * z);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::ZeroDirection, "direction vector must be finite and nonzero");
  }
  v_ = {x / norm, y / norm, z / norm};
}

DiffusionTensor DiffusionTensor::axially_symmetric(double axial, double radial, const UnitDirection& a) noexcept {
  const double delta = axial - radial;
  return {radial + delta * a.x() * a.x(), radial + delta * a.y() * a.y(), radial + delta * a.z() * a.z(),
          delta * a.x() * a.y(),          delta * a.x() * a.z(),          delta * a.y() * a.z()};
}

double DiffusionTensor::quadratic_form(const UnitDirection& g) const noexcept {
  const double x = g.x(), y = g.y(), z = g.z();
  return dxx * x * x + dyy * y * y + dzz * z * z + 2.0 * (dxy * x * y + dxz * x * z + dyz * y * z);
}

bool DiffusionTensor::is_positive_semidefinite() const {
  return eigendecompose_sym3(*this).lambda[2] >= -1e-12;
}

GradientScheme::GradientScheme(std::vector<GradientEntry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw Error(ErrorCode::InvalidSpec, "gradient scheme needs at least one entry");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!(entries_[i].b >= 0.0) || !std::isfinite(entries_[i].b)) {
      throw Error(ErrorCode::InvalidSpec, "b-value " + std::to_string(i) + " must be finite and >= 0");
    }
  }
}

std::size_t GradientScheme::weighted_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [](const GradientEntry& e) { return e.b > 0.0; }));
}

GradientScheme make_even_scheme(std::size_t count, double b, std::uint64_t seed) {
  if (count == 0) throw Error(ErrorCode::InvalidSpec, "direction count must be >= 1");
  using Vec = Eigen::Vector3d;
  PhiloxStream rng(seed, 0x5C4E3Eu);
  std::vector<Vec> p(count);
  for (auto& v : p) {
    do {
      v = Vec(rng.normal(), rng.normal(), rng.normal());
    } while (v.norm() < 1e-6);
    v.normalize();
  }

  // Each direction repels the other directions and their antipodes.
  const int iterations = 400;
  std::vector<Vec> force(count);
  for (int it = 0; it < iterations; ++it) {
    const double step = 0.05 / std::sqrt(static_cast<double>(count)) * (1.0 - 0.9 * it / iterations);
    for (std::size_t i = 0; i < count; ++i) {
      Vec f = Vec::Zero();
      for (std::size_t j = 0; j < count; ++j) {
        if (i == j) continue;
        const Vec d1 = p[i] - p[j];
        const Vec d2 = p[i] + p[j];
        f += d1 / std::pow(d1.squaredNorm() + 1e-12, 1.5) + d2 / std::pow(d2.squaredNorm() + 1e-12, 1.5);
      }
      force[i] = f - f.dot(p[i]) * p[i];
    }
    double max_force = 0.0;
    for (const auto& f : force) max_force = std::max(max_force, f.norm());
    if (max_force == 0.0) break;
    for (std::size_t i = 0; i < count; ++i) {
      p[i] += step * force[i] / max_force;
      p[i].normalize();
    }
  }

  std::vector<GradientEntry> entries;
  entries.reserve(count);
  for (auto v : p) {
    if (v.z() < 0.0) v = -v;
    entries.push_back({b, UnitDirection(v.x(), v.y(), v.z())});
  }
  return GradientScheme(std::move(entries));
}

double predict_attenuation(const DiffusionTensor& d, double b, const UnitDirection& g) noexcept {
  return std::exp(-b * d.quadratic_form(g));
}

std::vector<double> synthesize_signals(const DiffusionTensor& d, double s0, const GradientScheme& scheme) {
  std::vector<double> out;
  out.reserve(scheme.size());
  for (const auto& e : scheme) out.push_back(s0 * predict_attenuation(d, e.b, e.dir));
  return out;
}

std::vector<std::array<double, 6>> design_matrix(const GradientScheme& scheme) {
  std::vector<std::array<double, 6>> rows;
  rows.reserve(scheme.size());
  for (const auto& e : scheme) {
    const double x = e.dir.x(), y = e.dir.y(), z = e.dir.z(), b = e.b;
    rows.push_back({-b * x * x, -b * y * y, -b * z * z, -2.0 * b * x * y, -2.0 * b * x * z, -2.0 * b * y * z});
  }
  return rows;
}

struct TensorFitter::Impl {
  Eigen::ColPivHouseholderQR<Eigen::Matrix<double, Eigen::Dynamic, 6>> qr;
};

TensorFitter::TensorFitter(const GradientScheme& scheme) : impl_(std::make_unique<Impl>()), count_(scheme.size()) {
  if (scheme.weighted_count() < 6) {
    throw Error(ErrorCode::RankDeficientScheme,
                "need >= 6 diffusion-weighted entries, got " + std::to_string(scheme.weighted_count()));
  }
  const auto rows = design_matrix(scheme);
  Eigen::Matrix<double, Eigen::Dynamic, 6> a(static_cast<Eigen::Index>(rows.size()), 6);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < 6; ++j) a(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  impl_->qr.compute(a);
  if (impl_->qr.rank() < 6) {
    throw Error(ErrorCode::RankDeficientScheme,
                "design matrix rank " + std::to_string(impl_->qr.rank()) + " < 6");
  }
}

TensorFitter::~TensorFitter() = default;
TensorFitter::TensorFitter(TensorFitter&&) noexcept = default;
TensorFitter& TensorFitter::operator=(TensorFitter&&) noexcept = default;

DiffusionTensor TensorFitter::fit(std::span<const double> signals, double s0) const {
  if (!(s0 > 0.0)) throw Error(ErrorCode::NonPositiveS0, "s0 must be > 0, got " + std::to_string(s0));
  if (signals.size() != count_) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(signals.size()) + " signals for a scheme of " +
                                               std::to_string(count_) + " entries");
  }
  Eigen::VectorXd y(static_cast<Eigen::Index>(count_));
  for (std::size_t i = 0; i < count_; ++i) {
    y(static_cast<Eigen::Index>(i)) = std::log(std::max(signals[i], kLogFloor) / s0);
  }
  const Eigen::Matrix<double, 6, 1> d = impl_->qr.solve(y);
  return {d(0), d(1), d(2), d(3), d(4), d(5)};
}

DiffusionTensor fit_tensor(std::span<const double> signals, double s0, const GradientScheme& scheme) {
  if (!(s0 > 0.0)) throw Error(ErrorCode::NonPositiveS0, "s0 must be > 0, got " + std::to_string(s0));
  if (signals.size() != scheme.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(signals.size()) + " signals for a scheme of " +
                                               std::to_string(scheme.size()) + " entries");
  }
  return TensorFitter(scheme).fit(signals, s0);
}

EigenSystem eigendecompose_sym3(const DiffusionTensor& d) {
  auto a = d.as_matrix();
  double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

  double frob = 0.0;
  for (const auto& row : a)
    for (double x : row) frob += x * x;
  frob = std::sqrt(frob);

  constexpr int kMaxSweeps = 50;
  constexpr double kOffTolerance = 1e-14;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    const double off = std::sqrt(2.0 * (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]));
    // Below eps * |A| no rotation can improve the result.
    if (off < kOffTolerance || off <= 1e-17 * frob) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        const double apq = a[p][q];
        if (apq == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // A <- J^T A J with J the (p, q) Givens rotation.
        for (int k = 0; k < 3; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        a[p][q] = a[q][p] = 0.0;
        for (int k = 0; k < 3; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return a[i][i] > a[j][j]; });

  EigenSystem out;
  for (std::size_t k = 0; k < 3; ++k) {
    const int col = order[k];
    std::array<double, 3> vec{v[0][col], v[1][col], v[2][col]};
    for (double c : vec) {
      if (std::abs(c) > 1e-12) {
        if (c < 0.0)
          for (double& x : vec) x = -x;
        break;
      }
    }
    out.lambda[k] = a[col][col];
    out.vectors[k] = UnitDirection(vec[0], vec[1], vec[2]);
  }
  return out;
}

double mean_diffusivity(const EigenSystem& e) noexcept {
  return (e.lambda[0] + e.lambda[1] + e.lambda[2]) / 3.0;
}

double fractional_anisotropy(const EigenSystem& e) noexcept {
  const auto& l = e.lambda;
  const double denom = l[0] * l[0] + l[1] * l[1] + l[2] * l[2];
  if (denom == 0.0) return 0.0;
  const double num = (l[0] - l[1]) * (l[0] - l[1]) + (l[1] - l[2]) * (l[1] - l[2]) + (l[2] - l[0]) * (l[2] - l[0]);
  return std::min(1.0, std::sqrt(0.5 * num / denom));
}

double adc(double s, double s0, double b) {
  if (!(s > 0.0) || !(s0 > 0.0) || !(b > 0.0)) {
    throw Error(ErrorCode::NonPositiveInput, "adc requires s, s0, b > 0 (s=" + std::to_string(s) +
                                                 ", s0=" + std::to_string(s0) + ", b=" + std::to_string(b) + ")");
  }
  return -std::log(s / s0) / b;
}

}  // namespace dwiratio
