// Counter-based random number streams.
//
// A stream is (key, counter): output i of a stream is a pure function of the
// key and i, so state save/restore is trivial and independently keyed streams
// can be consumed from any number of threads without coordination.

#pragma once

#include <cmath>
#include <cstdint>

namespace adloco {

namespace detail {

// SplitMix64 finalizer. Good avalanche; used both as the output function and
// for deriving child keys.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ull;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebull;
  z ^= z >> 31;
  return z;
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

}  // namespace detail

struct RngStream {
  std::uint64_t key = 0;
  std::uint64_t counter = 0;

  std::uint64_t next_u64() {
    const std::uint64_t x = key + detail::kGolden * (++counter);
    return detail::mix64(detail::mix64(x) + key);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n). Rejection sampling, so no modulo bias.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t min = (0 - n) % n;
    std::uint64_t x = next_u64();
    while (x < min) x = next_u64();
    return x % n;
  }

  // Standard normal via Box-Muller; always consumes exactly two draws.
  double next_gaussian() {
    double u1 = next_double();
    const double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }
};

// Child stream with an independent key. Chaining derive() with distinct tags
// yields the (seed, trainer, worker, ...) stream tree used across a run.
inline RngStream derive(std::uint64_t parent_key, std::uint64_t tag) {
  return RngStream{detail::mix64(parent_key + detail::kGolden * (tag + 1)) ^ parent_key, 0};
}

inline RngStream derive(const RngStream& parent, std::uint64_t tag) {
  return derive(parent.key, tag);
}

}  // namespace adloco
