#include <doctest.h>

#include <boost/math/special_functions/bessel.hpp>
#include <cmath>
#include <numbers>

#include "threshold_lab/errors.hpp"
#include "threshold_lab/experiments.hpp"
#include "threshold_lab/twobody.hpp"

using namespace threshold_lab;
using std::numbers::pi;

namespace {
const JacobiFrame kUnit = jacobi_frame(std::array<double, 3>{1.0, 1.0, 1.0}, Pair::p12);
}

TEST_CASE("critical couplings against closed forms") {
    CHECK(critical_coupling(PairPotential::square_well(1.0), kUnit) == doctest::Approx(pi * pi / 4.0).epsilon(1e-4));
    const double j01 = boost::math::cyl_bessel_j_zero(0.0, 1);
    CHECK(critical_coupling(PairPotential::exponential(1.0), kUnit) == doctest::Approx(j01 * j01 / 4.0).epsilon(1e-4));
    // shooting value for exp(-r^2), frozen
    CHECK(critical_coupling(PairPotential::gaussian(1.0), kUnit) == doctest::Approx(2.684004650924).epsilon(1e-6));
}

TEST_CASE("critical coupling scales with range and reduced mass") {
    const double base = critical_coupling(PairPotential::gaussian(1.0), kUnit);
    CHECK(critical_coupling(PairPotential::gaussian(2.0), kUnit) == doctest::Approx(base / 4.0).epsilon(1e-6));
    const auto heavy = jacobi_frame(std::array<double, 3>{2.0, 2.0, 1.0}, Pair::p12);
    CHECK(critical_coupling(PairPotential::gaussian(1.0), heavy) == doctest::Approx(base / 2.0).epsilon(1e-6));
}

TEST_CASE("birman-schwinger eigenvalue decreases with z") {
    for (const auto& v : {PairPotential::gaussian(1.0), PairPotential::exponential(1.0),
                          PairPotential::square_well(1.0)}) {
        double prev = bs_max_eigenvalue(v, kUnit, 0.0);
        for (int i = 1; i < 20; ++i) {
            const double mu = bs_max_eigenvalue(v, kUnit, 5.0 * i / 19.0);
            CHECK(mu < prev);
            prev = mu;
        }
    }
}

TEST_CASE("square-well binding energy against the transcendental equation") {
    // k cot k = -kappa with k^2 = lambda - kappa^2 inside a unit well
    const double lambda = 6.0;
    const auto e = twobody_binding_energy(PairPotential::square_well(1.0), kUnit, lambda);
    REQUIRE(e);
    const double kappa = std::sqrt(-*e);
    const double k = std::sqrt(lambda - kappa * kappa);
    CHECK(k / std::tan(k) == doctest::Approx(-kappa).epsilon(1e-5));
}

TEST_CASE("binding energies agree with shooting") {
    const auto v = PairPotential::gaussian(1.0);
    for (double f : {1.2, 2.0, 5.0}) {
        const double lambda = f * 2.684004650924;
        const auto bs = twobody_binding_energy(v, kUnit, lambda);
        const auto sh = oracle_ground_energy(v, kUnit, lambda);
        REQUIRE(bs);
        REQUIRE(sh);
        CHECK(*bs == doctest::Approx(*sh).epsilon(1e-5));
    }
    CHECK_FALSE(twobody_binding_energy(v, kUnit, 2.0));
}

TEST_CASE("bound-state size and tails") {
    const auto v = PairPotential::gaussian(1.0);
    const double lambda = 1.5 * critical_coupling(v, kUnit);
    const auto st = twobody_bound_state(v, kUnit, lambda, {0.0, 1.0, 4.0, 16.0});
    REQUIRE(st);
    CHECK(st->r2 == doctest::Approx(oracle_size(v, kUnit, lambda)).epsilon(1e-4));
    CHECK(st->tail[0].second == doctest::Approx(1.0));
    for (std::size_t i = 1; i < st->tail.size(); ++i) CHECK(st->tail[i].second <= st->tail[i - 1].second);
    CHECK_THROWS_AS(twobody_size(v, kUnit, 1.0), PreconditionError);
}

TEST_CASE("subcriticality margin") {
    const auto sys = ParticleSystem::uniform({1.0, 1.0, 1.0}, PairPotential::gaussian(1.0), 2.0);
    const auto m = subcriticality_margin(sys);
    CHECK(m.satisfied);
    CHECK(m.epsilon == doctest::Approx(2.684004650924 - 2.0).epsilon(1e-6));
    CHECK_FALSE(subcriticality_margin(sys.with_lambda(3.0)).satisfied);
    const auto dec = sys.with_potential(Pair::p13, PairPotential::gaussian(1.0, 0.0));
    CHECK(subcriticality_margin(dec).pairs[1].decoupled);
    CHECK_THROWS_AS(critical_coupling(PairPotential::gaussian(1.0, 0.0), kUnit), DegenerateInputError);
}

TEST_CASE("two-body size diverges like 1/|E|") {
    const auto v = PairPotential::gaussian(1.0);
    const auto sweep = two_body_control_sweep(v, kUnit, 1e-2, 1e-6, 9, {0, 1, 2, 4, 8, 16});
    CHECK(sweep.exponent == doctest::Approx(1.0).epsilon(0.2));
    CHECK(sweep.spreading.verdict == SpreadingVerdict::spreading_consistent);
    for (const auto& r : sweep.records) CHECK(r.lambda > sweep.lambda_star);
}
