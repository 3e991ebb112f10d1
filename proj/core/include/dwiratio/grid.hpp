#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace dwiratio {

/// 2D real image stored x-fastest: element (x, y) lives at y * nx + x.
/// Axis 0 is x, axis 1 is y.
class Image2D {
 public:
  Image2D() = default;
  Image2D(std::size_t nx, std::size_t ny, double fill = 0.0) : nx_(nx), ny_(ny), data_(nx * ny, fill) {}
  Image2D(std::size_t nx, std::size_t ny, std::vector<double> data) : nx_(nx), ny_(ny), data_(std::move(data)) {
    assert(data_.size() == nx_ * ny_);
  }

  std::size_t nx() const noexcept { return nx_; }
  std::size_t ny() const noexcept { return ny_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool same_dims(const Image2D& other) const noexcept { return nx_ == other.nx_ && ny_ == other.ny_; }

  double& operator()(std::size_t x, std::size_t y) noexcept { return data_[y * nx_ + x]; }
  double operator()(std::size_t x, std::size_t y) const noexcept { return data_[y * nx_ + x]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool operator==(const Image2D&) const = default;

 private:
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  std::vector<double> data_;
};

/// 3D real volume stored x-fastest, then y, then z (NIfTI order).
class Volume3D {
 public:
  Volume3D() = default;
  Volume3D(std::size_t nx, std::size_t ny, std::size_t nz, double fill = 0.0)
      : nx_(nx), ny_(ny), nz_(nz), data_(nx * ny * nz, fill) {}
  Volume3D(std::size_t nx, std::size_t ny, std::size_t nz, std::vector<double> data)
      : nx_(nx), ny_(ny), nz_(nz), data_(std::move(data)) {
    assert(data_.size() == nx_ * ny_ * nz_);
  }

  std::size_t nx() const noexcept { return nx_; }
  std::size_t ny() const noexcept { return ny_; }
  std::size_t nz() const noexcept { return nz_; }
  std::size_t dim(int axis) const noexcept { return axis == 0 ? nx_ : axis == 1 ? ny_ : nz_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool same_dims(const Volume3D& other) const noexcept {
    return nx_ == other.nx_ && ny_ == other.ny_ && nz_ == other.nz_;
  }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return (z * ny_ + y) * nx_ + x;
  }
  double& operator()(std::size_t x, std::size_t y, std::size_t z) noexcept { return data_[index(x, y, z)]; }
  double operator()(std::size_t x, std::size_t y, std::size_t z) const noexcept { return data_[index(x, y, z)]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  Image2D slice_z(std::size_t z) const {
    const auto first = data_.begin() + static_cast<std::ptrdiff_t>(z * nx_ * ny_);
    return Image2D(nx_, ny_, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(nx_ * ny_)));
  }

  bool operator==(const Volume3D&) const = default;

 private:
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  std::size_t nz_ = 0;
  std::vector<double> data_;
};

}  // namespace dwiratio
