#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "dwiratio/grid.hpp"

namespace dwiratio {

/// Complex grid with the same x-fastest layout as Image2D.
struct ComplexImage2D {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::vector<std::complex<double>> data;

  std::complex<double>& operator()(std::size_t x, std::size_t y) noexcept { return data[y * nx + x]; }
  const std::complex<double>& operator()(std::size_t x, std::size_t y) const noexcept { return data[y * nx + x]; }
};

/// Non-unitary forward transform X[u,v] = sum x[m,n] exp(-2 pi i (u m / M + v n / N)).
/// Power-of-two axes use radix-2 FFT, other lengths a direct O(n^2) sum.
ComplexImage2D dft2d(const Image2D& img);
ComplexImage2D dft2d(const ComplexImage2D& img);

/// Inverse of dft2d including the 1/(M N) factor.
ComplexImage2D idft2d(const ComplexImage2D& spectrum);

/// Real part of idft2d.
Image2D idft2d_real(const ComplexImage2D& spectrum);

}  // namespace dwiratio
