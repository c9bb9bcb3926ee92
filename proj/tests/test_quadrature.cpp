#include <doctest.h>

#include <cmath>

#include "threshold_lab/errors.hpp"
#include "threshold_lab/quadrature.hpp"

using namespace threshold_lab;

TEST_CASE("gauss-legendre is exact for polynomials of degree 2n-1") {
    const auto rule = gauss_legendre(6, -1.0, 2.0);
    const double v = rule.integrate([](double x) { return std::pow(x, 11) - 3.0 * x * x; });
    const double exact = (std::pow(2.0, 12) - 1.0) / 12.0 - (8.0 + 1.0);
    CHECK(v == doctest::Approx(exact).epsilon(1e-13));
    for (double w : rule.weights) CHECK(w > 0.0);
}

TEST_CASE("semi-infinite grid") {
    const auto rule = semi_infinite_grid(96, 2.0);
    CHECK(rule.semi_infinite());
    CHECK(rule.integrate([](double r) { return std::exp(-r); }) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(rule.integrate([](double r) { return r * r * std::exp(-r * r); }) ==
          doctest::Approx(std::sqrt(M_PI) / 4.0).epsilon(1e-10));
}

TEST_CASE("composite and concatenated rules") {
    const std::vector<double> breaks{0.0, 1.0, 3.0};
    const auto c = composite_gauss_legendre(breaks, 8);
    CHECK(c.size() == 16);
    CHECK(c.integrate([](double x) { return std::abs(x - 1.0); }) == doctest::Approx(0.5 + 2.0).epsilon(1e-13));
    const auto joined = concatenate(gauss_legendre(8, 0.0, 1.0), semi_infinite_grid(64, 1.0, 1.0));
    CHECK(joined.integrate([](double x) { return std::exp(-x); }) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("non-decaying integrands are rejected on semi-infinite rules") {
    CHECK_THROWS_AS(integrate_checked(semi_infinite_grid(64, 1.0), [](double) { return 1.0; }), AccuracyError);
    CHECK(integrate_checked(semi_infinite_grid(64, 1.0), [](double r) { return std::exp(-r); }) ==
          doctest::Approx(1.0));
}

TEST_CASE("self convergence reports the doubling difference") {
    const auto sc = self_convergence([](std::size_t n) { return gauss_legendre(n, 0.0, 1.0); }, 4,
                                     [](double x) { return std::exp(x); });
    CHECK(sc.delta < 1e-9);
    CHECK(sc.fine == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-14));
}
