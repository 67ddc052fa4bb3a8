#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace cbldm {

/// Counter-based random stream. Stateless apart from an incrementing
/// counter: output k depends only on (seed, k), so draws can be keyed
/// deterministically and forked substreams never collide with the parent.
class RngStream {
 public:
  explicit RngStream(uint64_t seed, uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }

  /// Child stream with an unrelated seed; lane selects the substream.
  RngStream fork(uint64_t lane) const {
    uint64_t child = mix(seed_ ^ 0x9E6D1A2B3C4F5E7DULL, lane + 1);
    return RngStream(child, 0);
  }

  uint64_t next_u64() {
    uint64_t v = mix(seed_, counter_ + 1);
    ++counter_;
    return v;
  }

  /// Uniform in [0,1) with 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0,1]; safe as a log argument.
  double uniform_pos() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

  /// Standard normal via Box-Muller. Consumes exactly two counter steps
  /// and caches nothing, so the counter fully determines every draw.
  double normal() {
    double u1 = uniform_pos();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  std::vector<double> normal_vec(size_t n) {
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = normal();
    return out;
  }

  /// Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) {
    // Multiply-shift; bias is negligible for n << 2^64 and the
    // pipeline only draws small indices.
    return uint64_t((__uint128_t(next_u64()) * n) >> 64);
  }

 private:
  static uint64_t mix(uint64_t seed, uint64_t k) {
    uint64_t z = seed + 0x9E3779B97F4A7C15ULL * k;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  uint64_t seed_;
  uint64_t counter_;
};

}  // namespace cbldm
