#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace rpush {

// Counter-based generator. Output i of stream `key` is
//   mix64(key + (i + 1) * kGamma)
// where mix64 is the SplitMix64 finalizer. Streams are addressed by
// derive_stream_key(master, run, role, node), so every draw of every run is
// reproducible from four integers in any language.

inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Stream roles. Values are part of the reproducibility contract.
enum class StreamRole : std::uint64_t {
  kTopology = 1,
  kWake = 2,
  kLink = 3,
  kNoise = 4,
  kCentralNoise = 5,
  kDataset = 6,
  kInitial = 7,
  kMask = 8,
};

/// key = fold of mix64(acc + kGamma * (component + 1)) over
/// (master, run, role, node), starting from acc = 0.
constexpr std::uint64_t derive_stream_key(std::uint64_t master, std::uint64_t run,
                                          StreamRole role, std::uint64_t node = 0) noexcept {
  std::uint64_t acc = 0;
  for (std::uint64_t c : {master, run, static_cast<std::uint64_t>(role), node}) {
    acc = mix64(acc + kGamma * (c + 1));
  }
  return acc;
}

class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr explicit CounterRng(std::uint64_t key = 0) noexcept : key_(key) {}
  CounterRng(std::uint64_t master, std::uint64_t run, StreamRole role, std::uint64_t node = 0) noexcept
      : key_(derive_stream_key(master, run, role, node)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGamma);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [lo, hi] by rejection (unbiased).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
    const auto range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>((*this)());
    const std::uint64_t limit = max() - (max() % range + 1) % range;
    std::uint64_t x;
    do {
      x = (*this)();
    } while (x > limit);
    return lo + static_cast<std::int64_t>(x % range);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Standard normal via Box-Muller; consumes two draws, returns the cosine branch.
  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace rpush
