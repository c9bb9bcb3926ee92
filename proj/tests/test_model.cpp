#include <doctest.h>

#include <cmath>
#include <numbers>

#include "threshold_lab/errors.hpp"
#include "threshold_lab/model.hpp"

using namespace threshold_lab;
using std::numbers::pi;

TEST_CASE("built-in profiles") {
    const auto g = PairPotential::gaussian(2.0);
    CHECK(g(0.0) == doctest::Approx(1.0));
    CHECK(g(2.0) == doctest::Approx(std::exp(-1.0)));
    const auto e = PairPotential::exponential(0.5, 3.0);
    CHECK(e(1.0) == doctest::Approx(3.0 * std::exp(-2.0)));
    const auto s = PairPotential::square_well(1.5);
    CHECK(s(1.49) == 1.0);
    CHECK(s(1.51) == 0.0);
    CHECK(s.jump_radius().value() == 1.5);
    CHECK(PairPotential::gaussian(1.0, 0.0).is_zero());
    CHECK_THROWS_AS(PairPotential::gaussian(-1.0), PreconditionError);
    CHECK_THROWS_AS(PairPotential::square_well(1.0, -2.0), PreconditionError);
}

TEST_CASE("tabulated profile interpolates and vanishes past the table") {
    const auto t = PairPotential::tabulated({0.0, 1.0, 2.0}, {2.0, 1.0, 0.0});
    CHECK(t(0.0) == doctest::Approx(2.0));
    CHECK(t(1.0) == doctest::Approx(1.0));
    CHECK(t(2.5) == 0.0);
    CHECK(t(0.5) <= 2.0);
    CHECK(t(0.5) >= 1.0);
    CHECK_THROWS_AS(PairPotential::tabulated({0.0, 0.0}, {1.0, 1.0}), PreconditionError);
}

TEST_CASE("jacobi constants") {
    const auto f = jacobi_frame(std::array<double, 3>{1.0, 1.0, 1.0}, Pair::p12);
    CHECK(f.mu == doctest::Approx(0.5));
    CHECK(f.M == doctest::Approx(2.0 / 3.0));
    CHECK(f.alpha == doctest::Approx(1.0));
    CHECK(f.gamma == doctest::Approx(std::sqrt(3.0) / 2.0));
    const auto h = jacobi_frame(std::array<double, 3>{1.0, 4.0, 2.0}, Pair::p13);
    CHECK(h.mu == doctest::Approx(2.0 / 3.0));
    CHECK(h.M == doctest::Approx(3.0 * 4.0 / 7.0));
    CHECK(h.alpha == doctest::Approx(1.0 / std::sqrt(2.0 * h.mu)));
}

TEST_CASE("potential moments") {
    CHECK(potential_moment_c(PairPotential::gaussian(1.0), 1.0) == doctest::Approx(std::pow(pi, 1.5)).epsilon(1e-10));
    CHECK(potential_moment_c(PairPotential::square_well(1.0), 1.0) == doctest::Approx(4.0 * pi / 3.0).epsilon(1e-10));
    CHECK(potential_moment_c(PairPotential::exponential(1.0), 1.0) == doctest::Approx(8.0 * pi).epsilon(1e-8));
    // alpha rescales by alpha^-3
    CHECK(potential_moment_c(PairPotential::gaussian(1.0), 2.0) ==
          doctest::Approx(std::pow(pi, 1.5) / 8.0).epsilon(1e-10));
}

TEST_CASE("momentum-space norm equals the L1 norm") {
    for (const auto& v : {PairPotential::gaussian(1.0), PairPotential::exponential(0.7),
                          PairPotential::square_well(1.3)}) {
        CHECK(momentum_space_norm(v) == doctest::Approx(potential_moment_c(v, 1.0)).epsilon(1e-6));
    }
}

TEST_CASE("potential class checks") {
    CHECK(validate_potential(PairPotential::gaussian(1.0)).ok());
    const auto bad = validate_profile([](double r) { return r < 1.0 ? -0.5 : 0.0; },
                                      [](double r) { return r < 1.0 ? 1.0 : 0.0; }, 1.0);
    CHECK_FALSE(bad.ok());
    CHECK_FALSE(bad.nonnegative);
    const auto slow = validate_profile([](double r) { return 1.0 / (1.0 + r * r); },
                                       [](double r) { return 1.0 / (1.0 + r * r); },
                                       std::numeric_limits<double>::infinity());
    CHECK_FALSE(slow.l1_finite);
}

TEST_CASE("particle system") {
    const auto sys = ParticleSystem::uniform({1.0, 1.0, 1.0}, PairPotential::gaussian(1.0), 2.0);
    CHECK(sys.equal_masses());
    CHECK(sys.with_lambda(3.0).lambda() == 3.0);
    const auto d = sys.with_potential(Pair::p23, PairPotential::gaussian(1.0, 0.0));
    CHECK(d.potential(Pair::p23).is_zero());
    CHECK_FALSE(d.potential(Pair::p12).is_zero());
    CHECK(parse_pair("13") == Pair::p13);
    CHECK_THROWS_AS(parse_pair("14"), ConfigError);
}
