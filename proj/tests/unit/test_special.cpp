#include "qlbe/errors.hpp"
#include "qlbe/special.hpp"

#include <doctest.h>

#include <cmath>

using namespace qlbe;

TEST_CASE("spherical Bessel functions match the standard library") {
  for (double x : {1e-3, 0.1, 0.7, 1.0, 3.3, 10.0, 25.0, 50.0, 120.0}) {
    const int L = 60;
    const SphericalBessel b = spherical_bessel(L, x);
    REQUIRE(b.j.size() == L + 1);
    for (int l = 0; l <= L; ++l) {
      const double jr = std::sph_bessel(l, x);
      const double yr = std::sph_neumann(l, x);
      if (std::abs(jr) > 1e-280) {
        const double scale = l < x ? 1.0 / x : std::abs(jr);
        CHECK(std::abs(b.j[l] - jr) <= 1e-11 * scale);
      }
      if (std::isfinite(yr) && std::abs(yr) < 1e280) {
        const double scale = l < x ? std::max(1.0 / x, 1e-300) : std::abs(yr);
        CHECK(std::abs(b.y[l] - yr) <= 1e-11 * scale);
      }
    }
  }
}

TEST_CASE("spherical Bessel Wronskian at high order") {
  const double x = 150.0;
  const SphericalBessel b = spherical_bessel(300, x);
  for (int l = 1; l <= 200; ++l) {
    const double w = b.j[l] * b.y[l - 1] - b.j[l - 1] * b.y[l];
    CHECK(w * x * x == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("spherical Bessel rejects bad input") {
  CHECK_THROWS_AS(spherical_bessel(-1, 1.0), Error);
  CHECK_THROWS_AS(spherical_bessel(3, 0.0), Error);
}
