#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace dwiratio {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
/// Every draw is a pure function of (key, counter), so noise for a voxel can be
/// derived independently of evaluation order.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key) noexcept;

/// Maps 53 random bits to [0, 1).
inline double to_unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Two independent standard normals for the substream addressed by (a, b).
std::pair<double, double> normal_pair(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept;

/// Mixes a seed with a tag into a new 64-bit seed (child streams).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept;

/// Sequential stream over consecutive Philox blocks.
class PhiloxStream {
 public:
  PhiloxStream(std::uint64_t seed, std::uint64_t stream) noexcept;

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1).
  double uniform() noexcept { return to_unit_interval(next_u64()); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, bound) by rejection; bound > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;
  double normal() noexcept;

 private:
  void refill() noexcept;

  PhiloxKey key_{};
  std::uint64_t stream_ = 0;
  std::uint64_t block_ = 0;
  PhiloxCounter buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Fisher-Yates shuffle driven by PhiloxStream; identical on every platform.
template <typename T>
void deterministic_shuffle(std::span<T> items, PhiloxStream& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace dwiratio
