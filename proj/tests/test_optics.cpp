#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "vaf/error.hpp"
#include "vaf/optics.hpp"

using namespace vaf;

TEST_CASE("bessel_j0 matches reference values") {
  CHECK(bessel_j0(0.0) == 1.0);
  CHECK(std::abs(bessel_j0(1.0) - 0.7651976866) < 1e-9);
  CHECK(std::abs(bessel_j0(1.0) - oracle::j0_series(1.0)) < 1e-13);

  // First zero located by bisection on the series oracle.
  double lo = 2.0, hi = 3.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (oracle::j0_series(lo) * oracle::j0_series(mid) <= 0.0 ? hi : lo) = mid;
  }
  CHECK(std::abs(0.5 * (lo + hi) - 2.404825557695773) < 1e-12);
  CHECK(std::abs(bessel_j0(2.404825557695773)) < 1e-9);
}

TEST_CASE("bessel_j0 stays within 1e-10 of the standard library on |x| <= 100") {
  double worst = 0.0;
  for (int i = -20000; i <= 20000; ++i) {
    const double x = i * 0.005;
    worst = std::max(worst, std::abs(bessel_j0(x) - std::cyl_bessel_j(0.0, std::abs(x))));
  }
  CHECK(worst <= 1e-10);
  // Branch boundaries.
  for (double x : {7.999999, 8.0, 8.000001, 24.999999, 25.0, 25.000001}) {
    CHECK(std::abs(bessel_j0(x) - std::cyl_bessel_j(0.0, x)) <= 1e-10);
  }
}

TEST_CASE("bessel_j0 rejects non-finite input") {
  CHECK_THROWS_AS(bessel_j0(std::numeric_limits<double>::quiet_NaN()), DomainError);
  CHECK_THROWS_AS(bessel_j0(std::numeric_limits<double>::infinity()), DomainError);
}

TEST_CASE("Gauss-Legendre rule on [0,1] integrates polynomials exactly") {
  const QuadratureRule rule = gauss_legendre_unit(16);
  REQUIRE(rule.nodes.size() == 16);
  for (int p = 0; p <= 31; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) acc += rule.weights[i] * std::pow(rule.nodes[i], p);
    CHECK(acc == doctest::Approx(1.0 / (p + 1)).epsilon(1e-13));
  }
}

TEST_CASE("psf_value closed forms and symmetry") {
  const OpticalConfig cfg;
  CHECK(psf_value(0.0, 0.0, cfg) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK_THROWS_AS(psf_value(-0.1, 0.0, cfg), DomainError);

  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> r_dist(0.0, 3.0);
  std::uniform_real_distribution<double> d_dist(-10.0, 10.0);
  for (int i = 0; i < 100; ++i) {
    const double r = r_dist(gen);
    const double d = d_dist(gen);
    const double a = psf_value(r, d, cfg);
    const double b = psf_value(r, -d, cfg);
    CHECK(std::abs(a - b) <= 1e-12 * std::max(std::abs(a), 1e-300));
  }
}

TEST_CASE("psf_value agrees with a 4096-interval Simpson oracle") {
  const OpticalConfig cfg;
  const double ref = oracle::psf_simpson(0.5, 1.0, 0.75, 1.0, 0.55);
  CHECK(std::abs(psf_value(0.5, 1.0, cfg) - ref) <= 1e-8 * ref);

  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> r_dist(0.0, 2.0);
  std::uniform_real_distribution<double> d_dist(-10.0, 10.0);
  for (int i = 0; i < 20; ++i) {
    const double r = r_dist(gen);
    const double d = d_dist(gen);
    const double expect = oracle::psf_simpson(r, d, 0.75, 1.0, 0.55);
    CAPTURE(r);
    CAPTURE(d);
    CHECK(std::abs(psf_value(r, d, cfg) - expect) <= 1e-8 * expect);
  }
}

TEST_CASE("on-axis intensity never exceeds the in-focus value") {
  const OpticalConfig cfg;
  const double focus = psf_value(0.0, 0.0, cfg);
  for (double d = 0.5; d <= 10.0; d += 0.5) CHECK(psf_value(0.0, d, cfg) <= focus);
}

TEST_CASE("build_kernel invariants") {
  const OpticalConfig cfg;
  for (double d : {0.0, 0.5, 1.0, -1.5, 3.0, 7.0}) {
    const PsfKernel k = build_kernel(d, cfg);
    const int side = 2 * cfg.kernel_radius_px + 1;
    REQUIRE(k.samples.width() == side);
    REQUIRE(k.samples.height() == side);
    double sum = 0.0;
    for (double v : k.samples.pixels()) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        CHECK(k.samples.at(x, y) == k.samples.at(side - 1 - x, y));
        CHECK(k.samples.at(x, y) == k.samples.at(x, side - 1 - y));
        CHECK(k.samples.at(x, y) == k.samples.at(y, x));
      }
    }
  }
  const PsfKernel focus = build_kernel(0.0, cfg);
  const int c = cfg.kernel_radius_px;
  for (double v : focus.samples.pixels()) CHECK(v <= focus.samples.at(c, c));
}

TEST_CASE("defocus lowers the un-normalized center value") {
  const OpticalConfig cfg;
  const PsfKernel k0 = build_kernel(0.0, cfg);
  const PsfKernel k5 = build_kernel(0.5, cfg);
  const int c = cfg.kernel_radius_px;
  CHECK(k5.samples.at(c, c) * k5.raw_sum < k0.samples.at(c, c) * k0.raw_sum);
}

TEST_CASE("kernel truncation keeps 99% of the in-focus energy") {
  OpticalConfig cfg;
  OpticalConfig wide = cfg;
  wide.kernel_radius_px = 2 * cfg.kernel_radius_px;
  for (double d : {0.0, 0.5, 1.0, 2.0, 2.5}) {
    CAPTURE(d);
    CHECK(build_kernel(d, cfg).raw_sum >= 0.99 * build_kernel(d, wide).raw_sum);
  }
}

TEST_CASE("optical config validation") {
  OpticalConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.numerical_aperture = 1.2;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = OpticalConfig{};
  cfg.quadrature_nodes = 8;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = OpticalConfig{};
  cfg.kernel_radius_px = 0;
  CHECK_THROWS_AS(build_kernel(0.0, cfg), DomainError);
}
