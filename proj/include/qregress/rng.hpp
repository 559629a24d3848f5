#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace qregress {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based random stream keyed by (seed, stream id).
///
/// The n-th draw depends only on (seed, stream, n), so work split across
/// threads reproduces the serial sequence as long as each unit of work
/// owns its stream id.
class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(mix64(mix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 0x632be59bd9b4e019ULL))) {}

  /// Raw 64 bits at an explicit counter position.
  constexpr std::uint64_t bits_at(std::uint64_t counter) const noexcept {
    return mix64(key_ ^ mix64(counter + 0x2545f4914f6cdd1dULL));
  }

  std::uint64_t next_bits() noexcept { return bits_at(counter_++); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_bits() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1); never returns 0.
  double uniform_open() noexcept {
    return (static_cast<double>(next_bits() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (cosine branch only).
  double normal() noexcept {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Laplace(0, b) via inverse CDF.
  double laplace(double b) noexcept {
    const double u = uniform_open() - 0.5;
    return -b * (u < 0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(u));
  }

  /// +1 or -1 with equal probability.
  int rademacher() noexcept { return (next_bits() >> 63) ? 1 : -1; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    // Lemire's multiply-shift; bias is < n / 2^64 and irrelevant here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_bits()) * n) >> 64);
  }

  std::uint64_t position() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace qregress
