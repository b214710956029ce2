#pragma once

// Counter-based random streams.
//
// Every draw is a pure function of (seed, stream, counter), so any
// implementation that reproduces splitmix64 reproduces every fixture
// byte for byte:
//
//   z  = seed + 0x9E3779B97F4A7C15 * (counter + 1) + 0xD1B54A32D192ED03 * stream
//   z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
//   z ^= z >> 27; z *= 0x94D049BB133111EB
//   z ^= z >> 31
//
// Uniforms take the top 53 bits: (z >> 11) * 2^-53.  Normals use Box-Muller on
// two consecutive uniforms (cosine branch only, one normal per pair).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace eak {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
inline constexpr std::uint64_t kStreamMul = 0xD1B54A32D192ED03ULL;

constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derive a child seed, e.g. per RFE iteration or per subject.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return splitmix64_mix(seed ^ splitmix64_mix(tag + kGolden));
}

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : seed_(seed), stream_(stream) {}

  std::uint64_t at(std::uint64_t counter) const noexcept {
    return splitmix64_mix(seed_ + kGolden * (counter + 1) + kStreamMul * stream_);
  }

  std::uint64_t next_u64() noexcept { return at(counter_++); }

  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double normal() noexcept {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n) by rejection (unbiased).
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = n == 0 ? 0 : (~std::uint64_t{0} - (~std::uint64_t{0} % n));
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r < limit) return r % n;
    }
  }

  template <typename T>
  void shuffle(std::span<T> v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace eak
