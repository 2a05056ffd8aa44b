#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "tipsc/rng.hpp"

using namespace tipsc::rng;

// Known-answer vectors published with Random123 for philox4x32_10.
TEST_CASE("philox4x32-10 matches the reference known-answer vectors", "[rng]") {
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) ==
        Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                   {0xffffffffu, 0xffffffffu}) ==
        Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                   {0xa4093822u, 0x299f31d0u}) ==
        Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("uniform_open stays strictly inside (0, 1)", "[rng]") {
  CHECK(uniform_open(0, 0) > 0.0);
  CHECK(uniform_open(0xffffffffu, 0xffffffffu) < 1.0);
}

TEST_CASE("derive_seed separates indices and purposes", "[rng]") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t purpose = 0; purpose < 4; ++purpose)
    for (std::uint64_t i = 0; i < 256; ++i) seen.insert(derive_seed(42, i, purpose));
  CHECK(seen.size() == 4 * 256);
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("gaussian stream has standard-normal moments", "[rng]") {
  const GaussianStream gauss(2024, Stream::test);
  const int rows = 2000;
  const int width = 50;
  std::vector<double> row(width);
  double sum = 0.0, sum2 = 0.0, sum4 = 0.0;
  for (int r = 0; r < rows; ++r) {
    gauss.fill(r, row);
    for (double z : row) {
      sum += z;
      sum2 += z * z;
      sum4 += z * z * z * z;
    }
  }
  const double count = rows * width;
  // 1e5 draws: standard errors are ~0.003 (mean), ~0.0045 (variance), ~0.03 (4th moment).
  CHECK(std::abs(sum / count) < 0.015);
  CHECK(std::abs(sum2 / count - 1.0) < 0.025);
  CHECK(std::abs(sum4 / count - 3.0) < 0.15);
}

TEST_CASE("gaussian stream is a pure function of (seed, row, position)", "[rng]") {
  const GaussianStream a(7, Stream::subspace_coefficients);
  const GaussianStream b(7, Stream::subspace_coefficients);
  const GaussianStream other_tag(7, Stream::noise);
  std::vector<double> x(9), y(9), z(9);
  a.fill(3, x);
  b.fill(3, y);
  other_tag.fill(3, z);
  CHECK(x == y);
  CHECK(x != z);

  // An odd-length prefix is a prefix of a longer fill.
  std::vector<double> longer(20);
  a.fill(3, longer);
  CHECK(std::equal(x.begin(), x.end(), longer.begin()));
}
