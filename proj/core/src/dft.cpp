#include "dwiratio/dft.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace dwiratio {

namespace {

using cd = std::complex<double>;

std::vector<cd> twiddles(std::size_t n, bool inverse) {
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<cd> twiddle(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double phase = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddle[k] = cd(std::cos(phase), std::sin(phase));
  }
  return twiddle;
}

void fft_radix2(std::vector<cd>& a, const std::vector<cd>& twiddle) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cd u = a[i + k];
        const cd v = a[i + k + len / 2] * twiddle[k * stride];
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

void dft_direct(std::vector<cd>& a, bool inverse) {
  const std::size_t n = a.size();
  std::vector<cd> out(n);
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    cd acc = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
      // (k * m) mod n keeps the phase argument small and exact.
      const double phase = sign * 2.0 * std::numbers::pi * static_cast<double>((k * m) % n) / static_cast<double>(n);
      acc += a[m] * cd(std::cos(phase), std::sin(phase));
    }
    out[k] = acc;
  }
  a = std::move(out);
}

/// 1D transform of fixed length; twiddles are computed once per instance.
class LineTransform {
 public:
  LineTransform(std::size_t n, bool inverse)
      : inverse_(inverse), radix2_(n > 1 && std::has_single_bit(n)) {
    if (radix2_) twiddle_ = twiddles(n, inverse);
  }

  void operator()(std::vector<cd>& a) const {
    if (a.size() <= 1) return;
    if (radix2_) {
      fft_radix2(a, twiddle_);
    } else {
      dft_direct(a, inverse_);
    }
  }

 private:
  bool inverse_;
  bool radix2_;
  std::vector<cd> twiddle_;
};

ComplexImage2D transform(ComplexImage2D img, bool inverse) {
  std::vector<cd> line(img.nx);
  const LineTransform rows(img.nx, inverse);
  for (std::size_t y = 0; y < img.ny; ++y) {
    for (std::size_t x = 0; x < img.nx; ++x) line[x] = img(x, y);
    rows(line);
    for (std::size_t x = 0; x < img.nx; ++x) img(x, y) = line[x];
  }
  line.resize(img.ny);
  const LineTransform cols(img.ny, inverse);
  for (std::size_t x = 0; x < img.nx; ++x) {
    for (std::size_t y = 0; y < img.ny; ++y) line[y] = img(x, y);
    cols(line);
    for (std::size_t y = 0; y < img.ny; ++y) img(x, y) = line[y];
  }
  return img;
}

}  // namespace

ComplexImage2D dft2d(const Image2D& img) {
  ComplexImage2D c{img.nx(), img.ny(), std::vector<cd>(img.values().begin(), img.values().end())};
  return transform(std::move(c), false);
}

ComplexImage2D dft2d(const ComplexImage2D& img) { return transform(img, false); }

ComplexImage2D idft2d(const ComplexImage2D& spectrum) {
  auto out = transform(spectrum, true);
  const double scale = 1.0 / static_cast<double>(out.nx * out.ny);
  for (auto& v : out.data) v *= scale;
  return out;
}

Image2D idft2d_real(const ComplexImage2D& spectrum) {
  const auto c = idft2d(spectrum);
  Image2D out(c.nx, c.ny);
  for (std::size_t i = 0; i < c.data.size(); ++i) out[i] = c.data[i].real();
  return out;
}

}  // namespace dwiratio
