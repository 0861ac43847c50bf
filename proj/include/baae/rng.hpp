#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace baae {

/// Counter-based SplitMix64 generator.
///
/// The i-th draw (i = 0, 1, ...) of a stream with key k is
/// `mix(k + (i + 1) * 0x9E3779B97F4A7C15)`, where `mix` is the SplitMix64
/// finalizer. Because draws depend only on (key, counter), any
/// implementation that follows this definition reproduces the same stream.
///
/// Streams split deterministically: `split(s)` returns a fresh stream with
/// key `mix(k ^ mix(s + 0xD1B54A32D192ED03))` and counter 0, independent of
/// how many draws the parent has made.
///
/// Uniform doubles take the top 53 bits of a draw. Normal variates use the
/// cosine branch of Box-Muller on two consecutive uniforms, so each normal
/// consumes exactly two draws.
class Rng {
 public:
  static constexpr std::string_view kName = "splitmix64-counter";

  explicit constexpr Rng(std::uint64_t key = 0) noexcept : key_(key) {}

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  constexpr Rng split(std::uint64_t stream) const noexcept {
    return Rng(mix(key_ ^ mix(stream + 0xD1B54A32D192ED03ULL)));
  }

  constexpr std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform on [0, 1).
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  /// Uniform integer in [0, n) by multiply-shift. n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Named sub-streams of the master seed. Every random draw in the library
/// comes from one of these.
namespace streams {
inline constexpr std::uint64_t kInitGenerator = 1;
inline constexpr std::uint64_t kInitInference = 2;
inline constexpr std::uint64_t kInitVisualDisc = 3;
inline constexpr std::uint64_t kInitSemanticDisc = 4;
inline constexpr std::uint64_t kInitClassifier = 5;
inline constexpr std::uint64_t kShuffle = 10;
inline constexpr std::uint64_t kNoise = 11;
inline constexpr std::uint64_t kInterpolation = 12;
inline constexpr std::uint64_t kSynthesis = 20;
inline constexpr std::uint64_t kSoftmax = 21;
inline constexpr std::uint64_t kCrossValidation = 30;
}  // namespace streams

/// Fisher-Yates shuffle driven by `rng`.
template <class RandomIt>
void shuffle(RandomIt first, RandomIt last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = rng.below(i);
    std::iter_swap(first + static_cast<std::ptrdiff_t>(i - 1),
                   first + static_cast<std::ptrdiff_t>(j));
  }
}

}  // namespace baae
