#include <doctest.h>

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>

#include "threshold_lab/errors.hpp"
#include "threshold_lab/threebody.hpp"
#include "threshold_lab/twobody.hpp"

using namespace threshold_lab;
using std::numbers::pi;

namespace {

const PairPotential kGauss = PairPotential::gaussian(1.0);
const PairPotential kZero = PairPotential::gaussian(1.0, 0.0);

ParticleSystem only_12(double lambda) { return ParticleSystem({1.0, 1.0, 1.0}, {kGauss, kZero, kZero}, lambda); }

Eigen::Matrix2d diag(double a, double b) { return Eigen::Vector2d(a, b).asDiagonal(); }

}  // namespace

TEST_CASE("single gaussian closed forms") {
    const CGCalculus calc(only_12(1.0), false);
    const double a = 0.8, b = 0.3;
    const auto e = calc.element(diag(a, b), diag(a, b));
    const double S = std::pow(2.0 * pi, 3) / std::pow(4.0 * a * b, 1.5);
    CHECK(e.overlap == doctest::Approx(S).epsilon(1e-13));
    CHECK(e.kinetic / e.overlap == doctest::Approx(1.5 * (a + b)).epsilon(1e-13));
    // <exp(-x^2)> over |psi|^2 = exp(-a x^2 - b y^2)
    CHECK(e.potential / e.overlap == doctest::Approx(std::pow(a / (a + 1.0), 1.5)).epsilon(1e-13));
    const auto m = calc.moment_elements(diag(a, b), diag(a, b));
    CHECK(m(0, 0) / e.overlap == doctest::Approx(1.5 / a));
    CHECK(m(1, 1) / e.overlap == doctest::Approx(1.5 / b));
    CHECK(m(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("kinetic square of a single gaussian") {
    const CGCalculus calc(only_12(1.0), false);
    const double a = 0.6;
    const auto e = calc.element(diag(a, a), diag(a, a));
    // Lap psi = (a^2 q^2 - 6a) psi; with |psi|^2 ~ chi^2_6 / (2a): E[q^2] = 3/a, E[q^4] = 12/a^2
    const double expect = a * a * a * a * 12.0 / (a * a) - 12.0 * a * a * a * 3.0 / a + 36.0 * a * a;
    CHECK(calc.kinetic_squared(diag(a, a), diag(a, a)) / e.overlap == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("permutation images preserve the symmetric form") {
    const CGCalculus calc(ParticleSystem::uniform({1.0, 1.0, 1.0}, kGauss, 1.0), true);
    const auto imgs = calc.images(diag(0.7, 0.7));
    CHECK(imgs.size() == 6);
    // the hyperradius is permutation invariant
    for (const auto& B : imgs) CHECK((B - diag(0.7, 0.7)).norm() < 1e-12);
    CHECK_THROWS_AS(CGCalculus(ParticleSystem::uniform({1.0, 2.0, 1.0}, kGauss, 1.0), true), PreconditionError);
}

TEST_CASE("one-function solve and duplicate functions") {
    const auto sys = only_12(3.0);
    const CGCalculus calc(sys, false);
    CorrelatedGaussianBasis basis;
    basis.symmetric = false;
    basis.A = {diag(1.0, 0.5)};
    const auto m1 = assemble(basis, calc);
    const auto one = solve_ground(m1.hamiltonian(3.0), m1.N);
    const auto e = calc.element(basis.A[0], basis.A[0]);
    CHECK(one.energy == doctest::Approx((e.kinetic - 3.0 * e.potential) / e.overlap).epsilon(1e-13));
    CHECK(one.coefficients.dot(m1.N * one.coefficients) == doctest::Approx(1.0));
    basis.A.push_back(basis.A[0]);
    const auto m2 = assemble(basis, calc);
    const auto two = solve_ground(m2.hamiltonian(3.0), m2.N);
    CHECK(two.rank == 1);
    CHECK(two.energy == doctest::Approx(one.energy).epsilon(1e-10));
}

TEST_CASE("growth lowers the energy monotonically and is reproducible") {
    const auto sys = ParticleSystem::uniform({1.0, 1.0, 1.0}, kGauss, 2.684004650924);
    const auto g = grow_basis(sys, 25, 9);
    REQUIRE(g.energy_trace.size() == g.basis.size());
    for (std::size_t i = 1; i < g.energy_trace.size(); ++i) CHECK(g.energy_trace[i] < g.energy_trace[i - 1]);
    const auto h = grow_basis(sys, 25, 9);
    CHECK(h.energy == g.energy);
    const nlohmann::json j = g.basis;
    const auto back = j.get<CorrelatedGaussianBasis>();
    CHECK(back.A.size() == g.basis.A.size());
    CHECK((back.A.back() - g.basis.A.back()).norm() == 0.0);
}

TEST_CASE("decoupled third particle reproduces the pair energy") {
    const double lambda = 20.0 * 2.684004650924;
    const auto sys = only_12(lambda);
    const double e2 = *twobody_binding_energy(kGauss, jacobi_frame(sys, Pair::p12), lambda);
    const auto g = grow_basis(sys, 150, 3, false);
    CHECK(g.energy >= e2 - 1e-6 * std::abs(e2));  // variational
    CHECK(std::abs(g.energy - e2) / std::abs(e2) < 1e-3);
}

TEST_CASE("tail masses of a single gaussian follow a chi-square law") {
    const auto sys = only_12(0.0);
    const CGCalculus calc(sys, false);
    const double a = 0.5;
    CorrelatedGaussianBasis basis;
    basis.symmetric = false;
    basis.A = {diag(a, a)};
    TailOptions opt;
    opt.points = 1 << 16;
    opt.replicates = 8;
    opt.seed = 4;
    const double S = calc.element(basis.A[0], basis.A[0]).overlap;
    const Eigen::VectorXd c = Eigen::VectorXd::Constant(1, 1.0 / std::sqrt(S));
    const Eigen::Matrix2d moment = diag(1.5 / a, 1.5 / a);
    const auto [tail, rho2] = tail_masses(basis, calc, c, moment, {0.0, 1.0, 2.0, 3.0, 5.0}, opt);
    // |psi|^2 ~ exp(-a rho^2): a rho^2 is Gamma(3, 1)
    for (const auto& t : tail) {
        const double exact = boost::math::gamma_q(3.0, a * t.R * t.R);
        CHECK(std::abs(t.mass - exact) <= 5.0 * t.std_error + 1e-4);
    }
    CHECK(rho2.mass == doctest::Approx(3.0 / a).epsilon(1e-3));
    CHECK(std::abs(rho2.mass - 3.0 / a) <= 5.0 * rho2.std_error + 1e-9);
}

TEST_CASE("closed-form and sampled hyperradius agree") {
    const auto sys = ParticleSystem::uniform({1.0, 1.0, 1.0}, kGauss, 2.4);
    const CGCalculus calc(sys, true);
    TailOptions opt;
    opt.points = 1 << 18;
    opt.replicates = 16;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto g = grow_basis(calc, 30, seed);
        const auto m = assemble(g.basis, calc);
        opt.seed = seed;
        const auto rec = evaluate_record(g.basis, calc, m, 2.4, sys, {0.0, 2.0}, opt);
        CHECK(std::abs(rec.rho2_qmc - rec.rho2) <= 3.0 * rec.rho2_qmc_error);
        CHECK(rec.tail[0].mass == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("three-body threshold lies below the pair threshold") {
    const auto sys = ParticleSystem::uniform({1.0, 1.0, 1.0}, kGauss, 0.0);
    CriticalOptions opt;
    opt.refine_offset = 0.0;
    const auto c20 = critical_coupling_3body(sys, 20, 5, true, opt);
    const auto c40 = critical_coupling_3body(sys, 40, 5, true, opt);
    CHECK(c20.lambda_hi < c20.lambda_star);
    CHECK(c40.lambda_hi <= c20.lambda_hi);  // deeper budget only lowers the estimate
    CHECK(c40.lambda_hi - c40.lambda_lo <= 1e-4 * c40.lambda_star);
    CHECK(min_pair_critical_coupling(sys) == doctest::Approx(2.684004650924).epsilon(1e-6));
}

TEST_CASE("energy-targeted coupling") {
    const auto sys = ParticleSystem::uniform({1.0, 1.0, 1.0}, kGauss, 2.684004650924);
    const CGCalculus calc(sys, true);
    const auto g = grow_basis(calc, 30, 2);
    const auto m = assemble(g.basis, calc);
    const double lam = coupling_for_energy(m, -0.05, 1.0, 2.684004650924);
    CHECK(solve_ground(m.hamiltonian(lam), m.N).energy == doctest::Approx(-0.05).epsilon(1e-7));
    CHECK_THROWS_AS(coupling_for_energy(m, -50.0, 1.0, 2.684004650924), NumericalError);
}

TEST_CASE("spreading verdicts") {
    SweepRecord r;
    r.bound = true;
    r.E3 = -0.1;
    r.rho2 = 10.0;
    r.kinetic_norm = 1.0;
    r.eps_subcritical = 0.5;
    for (double R : {0.0, 4.0, 8.0}) r.tail.push_back({R, R == 0.0 ? 1.0 : 0.2, 0.0});
    const auto same = spreading_diagnostic({r, r, r, r});
    CHECK(same.verdict == SpreadingVerdict::non_spreading_consistent);
    CHECK(same.kinetic_bounded);

    std::vector<SweepRecord> spread;
    for (int n = 0; n < 5; ++n) {
        SweepRecord s = r;
        s.E3 = -std::pow(10.0, -n);
        s.rho2 = std::pow(10.0, n);
        for (auto& t : s.tail) t.mass = t.R == 0.0 ? 1.0 : 1.0 - 0.5 * std::pow(10.0, -n) * t.R / 8.0;
        spread.push_back(s);
    }
    const auto sp = spreading_diagnostic(spread);
    CHECK(sp.verdict == SpreadingVerdict::spreading_consistent);
    CHECK(sp.exponent == doctest::Approx(1.0));
    CHECK_THROWS_AS(spreading_diagnostic({r, r, r}), PreconditionError);
}
