#pragma once

// Counter-based random streams.
//
// Every random quantity in the library is a pure function of (key, counter):
// the generator is Philox4x32-10 (Salmon et al., Random123), uniforms take 53
// bits from two consecutive 32-bit outputs, and standard normals come from the
// Box-Muller transform applied to one Philox block. No generator state is ever
// carried between calls, so results do not depend on evaluation order or on
// the number of worker threads.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace tipsc::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

namespace detail {

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

constexpr void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(product >> 32);
  lo = static_cast<std::uint32_t>(product);
}

constexpr Counter philox_round(const Counter& ctr, const Key& key) {
  std::uint32_t hi0 = 0, lo0 = 0, hi1 = 0, lo1 = 0;
  mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
  mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
  return {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

}  // namespace detail

/// Philox4x32 with 10 rounds.
constexpr Counter philox4x32(Counter ctr, Key key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += detail::kPhiloxW0;
      key[1] += detail::kPhiloxW1;
    }
    ctr = detail::philox_round(ctr, key);
  }
  return ctr;
}

constexpr Key key_from_seed(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

/// SplitMix64 finalizer; used to derive child seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Child seed for (parent, index, purpose). Distinct purposes give unrelated streams.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index,
                                    std::uint64_t purpose = 0) {
  return mix64(mix64(parent ^ mix64(purpose + 0x5851F42D4C957F2Dull)) + index);
}

/// Uniform double in (0, 1) on the midpoints of a 2^-52 grid, from two 32-bit words.
/// (52 bits, not 53: the top midpoint of a 53-bit grid rounds to 1.0.)
constexpr double uniform_open(std::uint32_t high, std::uint32_t low) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(high >> 6) << 26) | (low >> 6);
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

/// Stream tags partition the counter space between independent uses of one key.
enum class Stream : std::uint32_t {
  subspace_coefficients = 1,
  noise = 2,
  calibration = 3,
  start_vector = 4,
  test = 5,
};

/// A keyed family of standard-normal sequences indexed by (row, position).
class GaussianStream {
 public:
  GaussianStream(std::uint64_t seed, Stream stream)
      : key_(key_from_seed(seed)), tag_(static_cast<std::uint32_t>(stream)) {}

  /// Two independent N(0,1) variates for block `block` of row `row`.
  std::array<double, 2> pair(std::uint64_t row, std::uint32_t block) const {
    const Counter out = philox4x32(
        {block, static_cast<std::uint32_t>(row), tag_, static_cast<std::uint32_t>(row >> 32)},
        key_);
    const double u1 = uniform_open(out[0], out[1]);
    const double u2 = uniform_open(out[2], out[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  /// Fills `out` with the first out.size() variates of row `row`, scaled by `scale`.
  void fill(std::uint64_t row, std::span<double> out, double scale = 1.0) const {
    const std::size_t m = out.size();
    for (std::size_t k = 0; k < m; k += 2) {
      const auto z = pair(row, static_cast<std::uint32_t>(k / 2));
      out[k] = scale * z[0];
      if (k + 1 < m) out[k + 1] = scale * z[1];
    }
  }

 private:
  Key key_;
  std::uint32_t tag_;
};

/// Uniform (0,1) variates keyed the same way, for test harnesses and start vectors.
class UniformStream {
 public:
  UniformStream(std::uint64_t seed, Stream stream)
      : key_(key_from_seed(seed)), tag_(static_cast<std::uint32_t>(stream)) {}

  double at(std::uint64_t row, std::uint64_t index) const {
    const Counter out = philox4x32({static_cast<std::uint32_t>(index / 2),
                                    static_cast<std::uint32_t>(row), tag_,
                                    static_cast<std::uint32_t>(row >> 32)},
                                   key_);
    return index % 2 == 0 ? uniform_open(out[0], out[1]) : uniform_open(out[2], out[3]);
  }

 private:
  Key key_;
  std::uint32_t tag_;
};

}  // namespace tipsc::rng
