#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>

#include <boost/random/normal_distribution.hpp>

namespace poc {

// Stateless counter-based generator: every draw is a pure function of its key.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t row_key(std::uint64_t seed, std::uint64_t stream, std::uint64_t step) {
  std::uint64_t h = splitmix64(seed ^ 0x5851F42D4C957F2DULL);
  h = splitmix64(h ^ stream);
  return splitmix64(h ^ (step * 0xD6E8FEB86659FD93ULL));
}

inline constexpr std::uint64_t counter_key(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                                           std::uint64_t index) {
  return splitmix64(row_key(seed, stream, step) ^ index);
}

// Uniform on (0, 1], 53 bits.
inline double key_to_unit(std::uint64_t key) {
  return (static_cast<double>(key >> 11) + 1.0) * 0x1.0p-53;
}

inline double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t step, std::uint64_t index) {
  return key_to_unit(counter_key(seed, stream, step, index));
}

// Standard normal via Box-Muller on two uniforms derived from one key.
inline double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t step, std::uint64_t index) {
  const std::uint64_t k = counter_key(seed, stream, step, index);
  const double u1 = key_to_unit(k);
  const double u2 = key_to_unit(splitmix64(k ^ 0xA0761D6478BD642FULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Sequential splitmix64 generator, used as a short sub-stream under one counter key.
struct SplitMixEngine {
  using result_type = std::uint64_t;
  std::uint64_t state;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    state += 0x9E3779B97F4A7C15ULL;
    return splitmix64(state);
  }
};

// Fills out[i] with standard normals for one (seed, stream, step) row. Entry i is a ziggurat draw
// from the sub-stream keyed by (seed, stream, step, i), so it does not depend on the other entries.
inline void counter_normal_row(std::uint64_t seed, std::uint64_t stream, std::uint64_t step, double* out,
                               std::size_t count) {
  const std::uint64_t row = row_key(seed, stream, step);
  boost::random::normal_distribution<double> normal;
  for (std::size_t i = 0; i < count; ++i) {
    SplitMixEngine eng{splitmix64(row ^ i)};
    out[i] = normal(eng);
  }
}

}  // namespace poc
