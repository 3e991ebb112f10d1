#include "dwiratio/random.hpp"

#include <cmath>
#include <numbers>

namespace dwiratio {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline PhiloxKey key_from(std::uint64_t seed) noexcept {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

inline std::uint64_t join(std::uint32_t lo, std::uint32_t hi) noexcept {
  return static_cast<std::uint64_t>(lo) | (static_cast<std::uint64_t>(hi) << 32);
}

std::pair<double, double> box_muller(std::uint64_t bits_a, std::uint64_t bits_b) noexcept {
  // 1 - U keeps the log argument in (0, 1].
  const double u1 = 1.0 - to_unit_interval(bits_a);
  const double u2 = to_unit_interval(bits_b);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(theta), r * std::sin(theta)};
}

}  // namespace

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

std::pair<double, double> normal_pair(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
  const PhiloxCounter ctr{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                          static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  const auto out = philox4x32_10(ctr, key_from(seed));
  return box_muller(join(out[0], out[1]), join(out[2], out[3]));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  const PhiloxCounter ctr{static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32), 0x5EEDu,
                          0xC0FFEEu};
  const auto out = philox4x32_10(ctr, key_from(seed));
  return join(out[0], out[1]);
}

PhiloxStream::PhiloxStream(std::uint64_t seed, std::uint64_t stream) noexcept
    : key_(key_from(seed)), stream_(stream) {}

void PhiloxStream::refill() noexcept {
  const PhiloxCounter ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                          static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
  buffer_ = philox4x32_10(ctr, key_);
  ++block_;
  used_ = 0;
}

std::uint32_t PhiloxStream::next_u32() noexcept {
  if (used_ == 4) refill();
  return buffer_[static_cast<std::size_t>(used_++)];
}

std::uint64_t PhiloxStream::next_u64() noexcept {
  const std::uint32_t lo = next_u32();
  const std::uint32_t hi = next_u32();
  return join(lo, hi);
}

std::uint64_t PhiloxStream::below(std::uint64_t bound) noexcept {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % bound;
}

double PhiloxStream::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const std::uint64_t a = next_u64();
  const std::uint64_t b = next_u64();
  const auto [n1, n2] = box_muller(a, b);
  spare_ = n2;
  has_spare_ = true;
  return n1;
}

}  // namespace dwiratio
