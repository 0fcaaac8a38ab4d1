#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace gmmem {

/// Deterministic random stream identified by (seed, stream_id).
///
/// Algorithm: xoshiro256** whose 256-bit state is filled by four SplitMix64
/// outputs, the SplitMix64 counter starting at seed ^ mix(stream_id).
/// Uniform doubles take the top 53 bits. Normal deviates use the
/// trigonometric Box-Muller transform, returning the cosine branch first and
/// caching the sine branch for the next call.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::uint64_t stream_id = 0) : seed_(seed), stream_id_(stream_id) {
    std::uint64_t sm = seed ^ splitmix_finalize(stream_id + 0x9E3779B97F4A7C15ULL);
    for (auto& s : state_) s = splitmix_next(sm);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1].
  double uniform_open_low() noexcept { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  double normal() noexcept {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = uniform_open_low();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
  }

  /// +1 or -1 with equal probability.
  double sign() noexcept { return (next_u64() >> 63) ? 1.0 : -1.0; }

  /// Uniformly distributed unit vector in R^d.
  std::vector<double> unit_vector(std::size_t d) {
    std::vector<double> v(d);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (auto& x : v) {
        x = normal();
        norm2 += x * x;
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : v) x *= inv;
    return v;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

  static std::uint64_t splitmix_finalize(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t splitmix_next(std::uint64_t& counter) noexcept {
    counter += 0x9E3779B97F4A7C15ULL;
    return splitmix_finalize(counter);
  }

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t state_[4]{};
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace gmmem
