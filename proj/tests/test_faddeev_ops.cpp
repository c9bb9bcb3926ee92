#include <doctest.h>

#include <cmath>
#include <numbers>

#include "threshold_lab/faddeev_ops.hpp"
#include "threshold_lab/twobody.hpp"

using namespace threshold_lab;
using std::numbers::pi;

namespace {
const JacobiFrame kUnit = jacobi_frame(std::array<double, 3>{1.0, 1.0, 1.0}, Pair::p12);
}

TEST_CASE("channel multiplier") {
    CHECK(t_multiplier(0.25) == doctest::Approx(-0.5));
    CHECK(t_multiplier(1.0) == doctest::Approx(0.0));
    CHECK(t_multiplier(4.0) == 0.0);
    const ChannelMultiplier b{0.5};
    CHECK(b(0.0) == doctest::Approx(0.5));
    CHECK(b.inverse(9.0) == doctest::Approx(1.0 / 1.5));
    CHECK(b_inverse(0.5, 0.0) == doctest::Approx(2.0));
}

TEST_CASE("bound constants") {
    const auto v = PairPotential::gaussian(1.0);
    const auto c = bound_constants(v, kUnit);
    CHECK(c.c == doctest::Approx(std::pow(pi, 1.5)).epsilon(1e-10));
    CHECK(std::abs(c.c_prime - 2.0 * pi) <= 1e-8);
    CHECK(std::abs(c.c_dprime - 1.0) <= 1e-8);
    CHECK(c.c_tilde * std::pow(c.gamma, 3) == doctest::Approx(c.other_l1).epsilon(1e-6));
    const auto sq = bound_constants(PairPotential::square_well(1.0), PairPotential::exponential(1.0), kUnit);
    CHECK(sq.c == doctest::Approx(4.0 * pi / 3.0).epsilon(1e-10));
    CHECK(sq.c_tilde * std::pow(sq.gamma, 3) == doctest::Approx(8.0 * pi).epsilon(1e-6));
}

TEST_CASE("squared green kernel is the composition of two green kernels") {
    const double kappa = 0.7;
    for (auto [r, s] : {std::pair{0.3, 1.1}, std::pair{2.0, 2.0}, std::pair{4.0, 0.5}}) {
        std::vector<double> breaks{0.0, std::min(r, s)};
        if (s != r) breaks.push_back(std::max(r, s));
        breaks.push_back(std::max(r, s) + 1.0);
        const auto rule = concatenate(composite_gauss_legendre(breaks, 40), semi_infinite_grid(200, 2.0, breaks.back()));
        const double direct = rule.integrate([&](double t) {
            return green_s_wave(kappa, r, t) * green_s_wave(kappa, t, s);
        });
        CHECK(green_squared_s_wave(kappa, r, s) == doctest::Approx(direct).epsilon(1e-10));
        CHECK(green_squared_s_wave(kappa, r, s) == doctest::Approx(green_squared_s_wave(kappa, s, r)));
    }
    CHECK(green_squared_s_wave(kappa, 1e-9, 1.0) >= 0.0);
}

TEST_CASE("fiber norms stay below the analytic bounds") {
    const auto v = PairPotential::gaussian(1.0);
    const auto c = bound_constants(v, kUnit);
    const auto rule = radial_rule(v, kUnit.alpha, 64);
    for (double z : {1.0, 0.1, 1e-3}) {
        for (double p : {1e-3, 0.5, 3.0}) {
            const auto n = a_fiber_norms(v, kUnit, z, p, rule);
            const auto b = fiber_bounds(c, z);
            CHECK(n.k1 <= b.k1);
            CHECK(n.k2 <= b.k2_at_z);
            CHECK(b.k2_at_z <= b.k2);
            CHECK(n.total <= n.k1 + n.k2 + 1e-12);
            CHECK(n.k2 == doctest::Approx(z * n.total / (1.0 + z + t_multiplier(p))));
        }
    }
}

TEST_CASE("cross-channel hilbert-schmidt norm below its bound") {
    const auto v = PairPotential::gaussian(1.0);
    const auto c = bound_constants(v, v, kUnit);
    const double bound = k2_hs_bound(c);
    for (double z : {1e-4, 1e-3, 0.01, 0.1, 0.5, 1.0}) {
        const double hs = k2_hs_norm_squared(c, z);
        CHECK(hs > 0.0);
        CHECK(hs <= bound);
    }
    CHECK(k2_majorization_check(0.01).holds);
}

TEST_CASE("channel contraction") {
    const auto v = PairPotential::gaussian(1.0);
    const double ls = critical_coupling(v, kUnit);
    const auto at0 = channel_contraction_norm(v, kUnit, 0.9 * ls, 0.0);
    CHECK(at0.lambda_mu == doctest::Approx(0.9).epsilon(1e-9));
    REQUIRE(at0.neumann_bound);
    CHECK(*at0.neumann_bound == doctest::Approx(10.0).epsilon(1e-7));
    const auto later = channel_contraction_norm(v, kUnit, 0.9 * ls, 0.5);
    CHECK(*later.neumann_bound < *at0.neumann_bound);
    const auto edge = channel_contraction_norm(v, kUnit, ls, 0.0);
    CHECK_FALSE(edge.contraction);
    CHECK_FALSE(edge.neumann_bound);
}

TEST_CASE("uniformity audit on a small grid") {
    const auto v = PairPotential::square_well(1.0);
    const auto audit = fiber_uniformity_audit(v, kUnit, default_z_grid(4, 1e-3), default_p_grid(4),
                                               radial_rule(v, kUnit.alpha, 64));
    CHECK(audit.points.size() == 16);
    CHECK(audit.all_points_ok);
    CHECK(audit.bounded);
    CHECK(audit.sup_total <= audit.analytic_bound);
}
