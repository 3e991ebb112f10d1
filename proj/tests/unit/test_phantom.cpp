#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "dwiratio/error.hpp"
#include "dwiratio/phantom.hpp"
#include "support.hpp"

using namespace dwiratio;

namespace {

PhantomSpec small_spec() {
  PhantomSpec s;
  s.dims = {32, 32, 8};
  s.ring_width_voxels = 2.5;
  s.bundle_width_voxels = 2.5;
  return s;
}

GradientScheme scheme(std::size_t n = 30) { return make_even_scheme(n, 1000.0, 2024); }

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::IoFailure;
}

}  // namespace

TEST_SUITE("phantom") {

TEST_CASE("spec validation") {
  CHECK_NOTHROW(PhantomSpec{}.validate());
  auto s = PhantomSpec{};
  s.dims = {8, 16, 4};
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::InvalidSpec);
  s = PhantomSpec{};
  s.fiber_axial_diffusivity = 0.2e-3;
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::InvalidSpec);
  s = PhantomSpec{};
  s.background_diffusivity = 5e-3;
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::InvalidSpec);
  s = PhantomSpec{};
  s.gray_matter_diffusivity = 0.0;
  CHECK(code_of([&] { generate_phantom(s, 1); }) == ErrorCode::InvalidSpec);
}

TEST_CASE("generation is deterministic and seed dependent") {
  const auto a = generate_phantom(small_spec(), 5);
  CHECK(a == generate_phantom(small_spec(), 5));
  CHECK_FALSE(a == generate_phantom(small_spec(), 6));
}

TEST_CASE("field invariants and tissue classes") {
  const PhantomSpec spec;
  const auto f = generate_phantom(spec, 3);
  CHECK(f.nx == 64);
  CHECK(f.ny == 64);
  CHECK(f.nz == 16);
  CHECK(f.size() == 64 * 64 * 16);
  CHECK(f.s0.size() == f.size());
  CHECK(f.labels.size() == f.size());
  std::array<std::size_t, 4> counts{};
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(f.tensors[i].is_positive_semidefinite());
    CHECK(f.s0[i] >= 0.0);
    ++counts[static_cast<std::size_t>(f.labels[i])];
    const auto e = eigendecompose_sym3(f.tensors[i]);
    switch (f.labels[i]) {
      case TissueClass::Background:
        CHECK(fractional_anisotropy(e) < 1e-12);
        CHECK(std::abs(mean_diffusivity(e) - 3.0e-3) < 1e-15);
        break;
      case TissueClass::GrayMatter:
        CHECK(fractional_anisotropy(e) < 1e-12);
        CHECK(std::abs(mean_diffusivity(e) - 0.8e-3) < 1e-15);
        break;
      case TissueClass::WhiteMatterRing:
        CHECK(std::abs(fractional_anisotropy(e) - test::closed_form_fa(1.7e-3, 0.3e-3, 0.3e-3)) < 1e-9);
        break;
      case TissueClass::Bundle:
        CHECK(fractional_anisotropy(e) > 0.3);
        break;
    }
  }
  for (auto c : counts) CHECK(c > 100);
}

TEST_CASE("ring tensors are tangent to the ring") {
  const PhantomSpec spec;
  const auto f = generate_phantom(spec, 9);
  std::size_t checked = 0;
  for (std::size_t z = 0; z < f.nz; ++z) {
    const auto ring = ring_geometry(spec, z);
    for (std::size_t y = 0; y < f.ny; ++y) {
      for (std::size_t x = 0; x < f.nx; ++x) {
        const auto i = f.index(x, y, z);
        if (f.labels[i] != TissueClass::WhiteMatterRing) continue;
        const double dx = static_cast<double>(x) - ring.cx;
        const double dy = static_cast<double>(y) - ring.cy;
        const UnitDirection tangent(-dy, dx, 0.0);
        const auto e = eigendecompose_sym3(f.tensors[i]);
        const double cosine = std::min(1.0, std::abs(e.vectors[0].dot(tangent)));
        CHECK(std::acos(cosine) < 1e-6);
        ++checked;
      }
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("noiseless render reproduces s0 and the forward model") {
  const auto spec = small_spec();
  const auto f = generate_phantom(spec, 2);
  const auto s = scheme();
  const auto r = render_dwis(f, AcquisitionSpec(s, NoiseModel::None, 0.0), 4);
  REQUIRE(r.dwis.size() == s.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(r.b0[i] == f.s0[i]);
    for (std::size_t k = 0; k < s.size(); k += 7) {
      CHECK(std::abs(r.dwis[k][i] - f.s0[i] * predict_attenuation(f.tensors[i], 1000.0, s[k].dir)) < 1e-15);
      CHECK(r.dwis[k][i] <= r.b0[i]);
    }
  }
}

TEST_CASE("noiseless pipeline recovers the tensor field") {
  const auto spec = small_spec();
  const auto f = generate_phantom(spec, 8);
  const auto s = scheme(45);
  const auto r = render_dwis(f, AcquisitionSpec(s, NoiseModel::None, 0.0), 1);
  const TensorFitter fitter(s);
  double worst = 0.0;
  std::vector<double> signals(s.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (std::size_t k = 0; k < s.size(); ++k) signals[k] = r.dwis[k][i];
    worst = std::max(worst, test::max_component_error(fitter.fit(signals, r.b0[i]), f.tensors[i]));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("zero tensors render every DWI equal to b0") {
  auto f = generate_phantom(small_spec(), 1);
  for (auto& t : f.tensors) t = DiffusionTensor{};
  const auto r = render_dwis(f, AcquisitionSpec(scheme(), NoiseModel::None, 0.0), 1);
  for (const auto& dwi : r.dwis) CHECK(dwi == r.b0);
}

TEST_CASE("rician renders are non-negative and reproducible") {
  const auto f = generate_phantom(small_spec(), 1);
  const AcquisitionSpec acq(scheme(), NoiseModel::Rician, 0.2);
  const auto r = render_dwis(f, acq, 77);
  for (const auto& dwi : r.dwis) {
    for (double v : dwi.values()) CHECK(v >= 0.0);
  }
  CHECK(r.b0 == render_dwis(f, acq, 77).b0);
  CHECK_FALSE(r.b0 == render_dwis(f, acq, 78).b0);
}

TEST_CASE("gaussian noise level and b0 averaging") {
  const auto f = generate_phantom(PhantomSpec{}, 1);
  const GradientScheme s = scheme(6);
  const auto clean = render_dwis(f, AcquisitionSpec(s, NoiseModel::None, 0.0), 1);
  const AcquisitionSpec acq(s, NoiseModel::Gaussian, 0.05, 5);
  const double sigma = absolute_noise_sigma(f, acq);

  double tissue = 0.0;
  std::size_t n_tissue = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.labels[i] != TissueClass::Background) {
      tissue += f.s0[i];
      ++n_tissue;
    }
  }
  CHECK(sigma == doctest::Approx(0.05 * tissue / static_cast<double>(n_tissue)).epsilon(1e-12));

  const auto noisy = render_dwis(f, acq, 5);
  const auto stddev = [](const Volume3D& a, const Volume3D& b) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      s1 += d;
      s2 += d * d;
    }
    const double n = static_cast<double>(a.size());
    return std::sqrt(s2 / n - (s1 / n) * (s1 / n));
  };
  double dwi_sd = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) dwi_sd += stddev(noisy.dwis[k], clean.dwis[k]);
  dwi_sd /= static_cast<double>(s.size());
  CHECK(noisy.dwis[0].size() >= 65536);
  CHECK(std::abs(dwi_sd / sigma - 1.0) < 0.05);
  const double b0_sd = stddev(noisy.b0, clean.b0);
  CHECK(std::abs(b0_sd * std::sqrt(5.0) / sigma - 1.0) < 0.10);
}

TEST_CASE("downsampling examples and mean preservation") {
  Volume3D line(4, 1, 1, std::vector<double>{0.0, 2.0, 4.0, 6.0});
  CHECK(downsample_anisotropic(line, 0, 2).data() == std::vector<double>{1.0, 5.0});
  CHECK(downsample_anisotropic(line, 0, 2, DownsampleKernel::Strided).data() == std::vector<double>{0.0, 4.0});
  CHECK(downsample_anisotropic(line, 0, 1) == line);

  const Volume3D constant(8, 6, 3, 0.37);
  const auto c = downsample_anisotropic(constant, 1, 3);
  CHECK(c.nx() == 8);
  CHECK(c.ny() == 2);
  CHECK(c.nz() == 3);
  for (double v : c.values()) CHECK(v == 0.37);

  PhiloxStream rng(4, 0);
  Volume3D v(16, 8, 4);
  for (auto& x : v.values()) x = rng.uniform(-1.0, 1.0);
  for (int axis : {0, 1}) {
    const auto d = downsample_anisotropic(v, axis, 2);
    double a = 0.0, b = 0.0;
    for (double x : v.values()) a += x;
    for (double x : d.values()) b += x;
    CHECK(std::abs(a / static_cast<double>(v.size()) - b / static_cast<double>(d.size())) < 1e-14);
  }
  CHECK(code_of([&] { downsample_anisotropic(Volume3D(5, 4, 1), 0, 2); }) == ErrorCode::NonDivisibleDim);
  CHECK(code_of([&] { downsample_anisotropic(Image2D(4, 5), 1, 2); }) == ErrorCode::NonDivisibleDim);
}

TEST_CASE("upsampling examples") {
  const Image2D pair(2, 1, std::vector<double>{1.0, 3.0});
  CHECK(bilinear_upsample(pair, 0, 2).data() == std::vector<double>{1.0, 1.5, 2.5, 3.0});
  CHECK(bilinear_upsample(pair, 0, 1) == pair);
  const Image2D column(1, 2, std::vector<double>{1.0, 3.0});
  CHECK(bilinear_upsample(column, 1, 2).data() == std::vector<double>{1.0, 1.5, 2.5, 3.0});
  const Image2D constant(5, 4, 0.61);
  for (int axis : {0, 1}) {
    const auto round = bilinear_upsample(downsample_anisotropic(constant, 1, 2), 1, 2);
    CHECK(round == constant);
    const auto up = bilinear_upsample(constant, axis, 3);
    for (double v : up.values()) CHECK(v == 0.61);
  }
}

TEST_CASE("normalization") {
  std::vector<double> ramp(1001);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
  CHECK(normalization_scale(ramp) == doctest::Approx(995.0).epsilon(1e-14));

  const Image2D b0(4, 4, 2.5);
  const std::vector<Image2D> dwis{Image2D(4, 4, 1.0), Image2D(4, 4, 0.5)};
  const auto n = normalize_pair(dwis, b0);
  CHECK(n.scale == 2.5);
  REQUIRE(n.pairs.size() == 2);
  for (double v : n.pairs[0].b0.values()) CHECK(v == 1.0);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(n.pairs[k].dwi[i] * n.scale - dwis[k][i]) < 1e-12);
  }
  CHECK(code_of([&] { normalize_pair(dwis, Image2D(4, 4, 0.0)); }) == ErrorCode::DegenerateB0);
}

TEST_CASE("normalized noiseless DWIs stay below one") {
  const auto f = generate_phantom(small_spec(), 2);
  const auto r = render_dwis(f, AcquisitionSpec(scheme(), NoiseModel::None, 0.0), 1);
  const double scale = normalization_scale(r.b0.values());
  for (const auto& dwi : r.dwis) {
    for (double v : dwi.values()) CHECK(v / scale <= 1.0 + 0.1);
  }
}

TEST_CASE("dataset counts, split and determinism") {
  PhantomSpec spec;
  spec.dims = {32, 32, 16};
  const AcquisitionSpec acq(make_even_scheme(45, 1000.0, 2024));
  const auto d = make_dataset(8, spec, acq, {}, 11);
  CHECK(d.train.size() == 2160);
  CHECK(d.validation.size() == 720);
  for (const auto& s : d.train) {
    CHECK(s.input.same_dims(s.gt));
    CHECK(s.b0->same_dims(s.gt));
  }

  PhantomSpec tiny = small_spec();
  tiny.dims = {16, 16, 4};
  const AcquisitionSpec acq6(make_even_scheme(6, 1000.0, 1));
  const auto a = make_dataset(2, tiny, acq6, {1.0, 0.0}, 3);
  CHECK(a.validation.empty());
  CHECK(a.train.size() == 2 * 2 * 6);
  const auto b = make_dataset(2, tiny, acq6, {1.0, 0.0}, 3);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].input == b.train[i].input);
    CHECK(a.train[i].gt == b.train[i].gt);
    CHECK(*a.train[i].b0 == *b.train[i].b0);
  }
  CHECK(code_of([&] { make_dataset(2, tiny, acq6, {0.7, 0.2}, 3); }) == ErrorCode::InvalidSplit);
  CHECK(code_of([&] { make_dataset(2, tiny, acq6, {1.5, -0.5}, 3); }) == ErrorCode::InvalidSplit);
}

TEST_CASE("dataset inputs are the restored low-resolution slices") {
  PhantomSpec tiny = small_spec();
  tiny.dims = {16, 16, 4};
  const AcquisitionSpec acq(make_even_scheme(6, 1000.0, 1), NoiseModel::None, 0.0);
  const auto d = make_dataset(1, tiny, acq, {1.0, 0.0}, 3);
  for (const auto& s : d.train) {
    const auto expected = bilinear_upsample(downsample_anisotropic(s.gt, 0, 2), 0, 2);
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(std::abs(s.input[i] - expected[i]) < 1e-12);
  }
}

}  // TEST_SUITE
