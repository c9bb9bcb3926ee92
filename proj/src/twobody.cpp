#include "threshold_lab/twobody.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "threshold_lab/errors.hpp"

namespace threshold_lab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double max_potential_value(const PairPotential& v) {
    if (v.kind() != PotentialKind::tabulated) return v.amplitude();
    double peak = 0.0;
    for (double x : v.table_v()) peak = std::max(peak, x);
    return peak * v.amplitude();
}

// Outer radius (in the Jacobi variable) past which the potential is negligible.
double interaction_radius(const PairPotential& v, double alpha, double cutoff) {
    return std::min(v.support_radius(), v.effective_radius(cutoff)) / alpha;
}

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solve(const Eigen::MatrixXd& m, bool vectors) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, vectors ? Eigen::ComputeEigenvectors
                                                                 : Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("Birman-Schwinger eigen-solver failed");
    return es;
}

// Integrates f over [from, inf) with panels up to `core` and a mapped tail of scale `tail_scale`.
template <class F>
double integrate_from(double from, double core, double tail_scale, F&& f) {
    double total = 0.0;
    if (from < core) {
        const int panels = 256;
        for (int k = 0; k < panels; ++k) {
            const double a = from + (core - from) * k / panels;
            const double b = from + (core - from) * (k + 1) / panels;
            total += gauss_legendre(8, a, b).integrate(f);
        }
        from = core;
    }
    return total + semi_infinite_grid(256, tail_scale, from).integrate(f);
}

// Gauss-Legendre on [a, b] in sub-panels; used for integrands that are smooth inside.
template <class F>
double split_integral(double a, double b, F&& f) {
    double total = 0.0;
    const int panels = 4;
    for (int k = 0; k < panels; ++k) {
        total += gauss_legendre(24, a + (b - a) * k / panels, a + (b - a) * (k + 1) / panels).integrate(f);
    }
    return total;
}

}  // namespace

double green_s_wave(double z, double r, double r_prime) {
    const double lo = std::min(r, r_prime);
    if (z == 0.0) return lo;
    const double hi = std::max(r, r_prime);
    return std::exp(-z * (hi - lo)) * -std::expm1(-2.0 * z * lo) / (2.0 * z);
}

BSOperator bs_operator(const PairPotential& potential, const JacobiFrame& frame, double z, const QuadratureRule& rule) {
    if (z < 0.0) throw PreconditionError("bs_operator: z must be >= 0");
    BSOperator op;
    op.rule = rule;
    op.z = z;
    const std::size_t n = rule.size();
    op.sqrt_v.resize(n);
    std::vector<double> scale(n);
    for (std::size_t i = 0; i < n; ++i) {
        op.sqrt_v[i] = potential.sqrt_value(frame.alpha * rule.nodes[i]);
        scale[i] = std::sqrt(rule.weights[i]) * op.sqrt_v[i];
    }
    op.matrix.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double value = scale[i] * green_s_wave(z, rule.nodes[i], rule.nodes[j]) * scale[j];
            op.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value;
            op.matrix(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = value;
        }
    }
    // Singularity subtraction: \int k(r_i, r') phi(r') dr' is split as
    // \int k(r_i, r') (phi(r') - phi(r_i)) dr' + phi(r_i) \int k(r_i, r') dr'.
    // The row integral is done exactly (panels split at the kink r' = r_i); the
    // correction is diagonal, so the matrix stays symmetric.
    const double outer = std::min(potential.support_radius(), potential.effective_radius(1e-34)) / frame.alpha;
    const double tail_scale = potential.range() / frame.alpha;
    for (std::size_t i = 0; i < n; ++i) {
        if (op.sqrt_v[i] == 0.0) continue;
        const double ri = rule.nodes[i];
        auto row = [&](double rp) { return green_s_wave(z, ri, rp) * potential.sqrt_value(frame.alpha * rp); };
        double exact = 0.0;
        if (ri > 0.0) exact += split_integral(0.0, std::min(ri, outer), row);
        if (ri < outer) {
            exact += std::isfinite(potential.support_radius()) ? split_integral(ri, outer, row)
                                                                : semi_infinite_grid(96, tail_scale, ri).integrate(row);
        }
        double discrete = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            discrete += rule.weights[j] * green_s_wave(z, ri, rule.nodes[j]) * op.sqrt_v[j];
        }
        op.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += op.sqrt_v[i] * (exact - discrete);
    }
    return op;
}

double bs_max_eigenvalue(const PairPotential& potential, const JacobiFrame& frame, double z,
                         const QuadratureRule& rule) {
    const auto op = bs_operator(potential, frame, z, rule);
    return solve(op.matrix, false).eigenvalues().maxCoeff();
}

double bs_max_eigenvalue(const PairPotential& potential, const JacobiFrame& frame, double z) {
    return bs_max_eigenvalue(potential, frame, z, radial_rule(potential, frame.alpha));
}

std::vector<double> bs_eigenvalues(const PairPotential& potential, const JacobiFrame& frame, double z,
                                   const QuadratureRule& rule) {
    const auto op = bs_operator(potential, frame, z, rule);
    const auto ev = solve(op.matrix, false).eigenvalues();
    std::vector<double> out(ev.data(), ev.data() + ev.size());
    std::sort(out.begin(), out.end(), std::greater<>());
    return out;
}

double critical_coupling(const PairPotential& potential, const JacobiFrame& frame, const QuadratureRule& rule) {
    if (potential.is_zero()) throw DegenerateInputError("critical_coupling: potential is identically zero");
    const double mu0 = bs_max_eigenvalue(potential, frame, 0.0, rule);
    if (!(mu0 > 0.0)) throw DegenerateInputError("critical_coupling: mu(0) = 0");
    return 1.0 / mu0;
}

double critical_coupling(const PairPotential& potential, const JacobiFrame& frame) {
    if (potential.is_zero()) throw DegenerateInputError("critical_coupling: potential is identically zero");
    return critical_coupling(potential, frame, radial_rule(potential, frame.alpha));
}

MarginReport subcriticality_margin(const ParticleSystem& system) {
    MarginReport report;
    report.lambda = system.lambda();
    report.epsilon = kInf;
    for (Pair pair : kAllPairs) {
        auto& entry = report.pairs[static_cast<int>(pair)];
        entry.pair = pair;
        const auto& v = system.potential(pair);
        if (v.is_zero()) {
            entry.decoupled = true;
            entry.lambda_star = kInf;
            entry.epsilon = kInf;
        } else {
            entry.lambda_star = critical_coupling(v, jacobi_frame(system, pair));
            entry.epsilon = entry.lambda_star - system.lambda();
        }
        if (entry.epsilon < report.epsilon) {
            report.epsilon = entry.epsilon;
            report.limiting_pair = pair;
        }
    }
    report.satisfied = report.epsilon > 0.0;
    return report;
}

namespace {

// z* with lambda mu(z*) = 1; nullopt when lambda mu(0) <= 1.
std::optional<double> solve_binding_z(const PairPotential& potential, const JacobiFrame& frame, double lambda,
                                      const QuadratureRule& rule) {
    if (!(lambda > 0.0) || potential.is_zero()) return std::nullopt;
    auto excess = [&](double z) { return lambda * bs_max_eigenvalue(potential, frame, z, rule) - 1.0; };
    if (excess(0.0) <= 0.0) return std::nullopt;
    double lo = 0.0;
    double hi = 1.0;
    int grow = 0;
    while (excess(hi) > 0.0) {
        lo = hi;
        hi *= 2.0;
        if (++grow > 60) throw NumericalError("twobody_binding_energy: failed to bracket z*");
    }
    while (hi - lo > 1e-8 || hi - lo > 1e-7 * lo) {
        const double mid = 0.5 * (lo + hi);
        (excess(mid) > 0.0 ? lo : hi) = mid;
        if (hi - lo < 1e-15 * hi) break;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

std::optional<double> twobody_binding_energy(const PairPotential& potential, const JacobiFrame& frame, double lambda,
                                             const QuadratureRule& rule) {
    const auto z = solve_binding_z(potential, frame, lambda, rule);
    if (!z) return std::nullopt;
    return -(*z) * (*z);
}

std::optional<double> twobody_binding_energy(const PairPotential& potential, const JacobiFrame& frame, double lambda) {
    return twobody_binding_energy(potential, frame, lambda, radial_rule(potential, frame.alpha));
}

std::optional<TwoBodyState> twobody_bound_state(const PairPotential& potential, const JacobiFrame& frame,
                                                double lambda, const std::vector<double>& tail_radii,
                                                const QuadratureRule& rule) {
    const auto z = solve_binding_z(potential, frame, lambda, rule);
    if (!z) return std::nullopt;
    const auto op = bs_operator(potential, frame, *z, rule);
    const auto es = solve(op.matrix, true);
    Eigen::Index top = 0;
    es.eigenvalues().maxCoeff(&top);
    const Eigen::VectorXd v = es.eigenvectors().col(top);

    // u(r) = \int g_z(r, r') V^{1/2}(alpha r') phi(r') dr' with phi(r_j) = v_j / sqrt(w_j).
    std::vector<double> coeff(rule.size());
    for (std::size_t j = 0; j < rule.size(); ++j) {
        coeff[j] = std::sqrt(rule.weights[j]) * op.sqrt_v[j] * v(static_cast<Eigen::Index>(j));
    }
    auto u = [&](double r) {
        double s = 0.0;
        for (std::size_t j = 0; j < coeff.size(); ++j) {
            if (coeff[j] != 0.0) s += coeff[j] * green_s_wave(*z, r, rule.nodes[j]);
        }
        return s;
    };
    const double core = interaction_radius(potential, frame.alpha, 1e-16);
    const double tail_scale = std::max(core, 1.0 / *z);
    const double norm = integrate_from(0.0, core, tail_scale, [&](double r) { const double x = u(r); return x * x; });
    const double second = integrate_from(0.0, core, tail_scale, [&](double r) { const double x = u(r); return r * r * x * x; });

    TwoBodyState state;
    state.lambda = lambda;
    state.z = *z;
    state.energy = -(*z) * (*z);
    state.r2 = second / norm;
    for (double radius : tail_radii) {
        const double beyond = integrate_from(radius, core, tail_scale, [&](double r) { const double x = u(r); return x * x; });
        state.tail.emplace_back(radius, std::clamp(beyond / norm, 0.0, 1.0));
    }
    return state;
}

std::optional<TwoBodyState> twobody_bound_state(const PairPotential& potential, const JacobiFrame& frame,
                                                double lambda, const std::vector<double>& tail_radii) {
    return twobody_bound_state(potential, frame, lambda, tail_radii, radial_rule(potential, frame.alpha));
}

double twobody_size(const PairPotential& potential, const JacobiFrame& frame, double lambda) {
    const auto state = twobody_bound_state(potential, frame, lambda);
    if (!state) throw PreconditionError("twobody_size: no bound state (lambda <= lambda*)");
    return state->r2;
}

namespace {

struct Trajectory {
    ShootingResult result;
    std::vector<double> u;  // samples at r_k = k h
    double h = 0.0;
};

Trajectory integrate_outward(const PairPotential& potential, const JacobiFrame& frame, double lambda, double energy,
                             int steps, bool keep) {
    if (steps < 16) throw PreconditionError("shooting_oracle: too few steps");
    Trajectory t;
    const double r_end = interaction_radius(potential, frame.alpha, 1e-14);
    const double h = r_end / steps;
    t.h = h;
    auto accel = [&](double r, double u) { return -(lambda * potential(frame.alpha * r) + energy) * u; };
    double r = 0.0;
    double u = 0.0;
    double du = 1.0;
    int nodes = 0;
    if (keep) {
        t.u.reserve(static_cast<std::size_t>(steps) + 1);
        t.u.push_back(u);
    }
    for (int k = 0; k < steps; ++k) {
        // Positions come from the step index; a jump at r_end is sampled from below.
        r = r_end * k / steps;
        const double r_mid = r_end * (k + 0.5) / steps;
        const double r_next = (k + 1 == steps) ? std::nextafter(r_end, 0.0) : r_end * (k + 1) / steps;
        const double k1u = du;
        const double k1v = accel(r, u);
        const double k2u = du + 0.5 * h * k1v;
        const double k2v = accel(r_mid, u + 0.5 * h * k1u);
        const double k3u = du + 0.5 * h * k2v;
        const double k3v = accel(r_mid, u + 0.5 * h * k2u);
        const double k4u = du + h * k3v;
        const double k4v = accel(r_next, u + h * k3u);
        const double u_new = u + h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u);
        du += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
        if (k > 0 && ((u > 0.0 && u_new <= 0.0) || (u < 0.0 && u_new >= 0.0))) ++nodes;
        u = u_new;
        if (keep) t.u.push_back(u);
    }
    const double kappa = energy < 0.0 ? std::sqrt(-energy) : 0.0;
    // Past r_end the solution is A e^{kappa r} + B e^{-kappa r} (linear at E = 0);
    // it crosses zero later iff u'/u < -kappa.
    if (u != 0.0 && du / u < -kappa) ++nodes;
    t.result.nodes = nodes;
    t.result.r_end = r_end;
    t.result.u_end = u;
    t.result.du_end = du;
    t.result.mismatch = u != 0.0 ? du / u + kappa : kInf;
    return t;
}

double bisect_coupling(const PairPotential& potential, const JacobiFrame& frame, int steps) {
    double lo = 0.0;
    double hi = 1.0;
    int grow = 0;
    while (integrate_outward(potential, frame, hi, 0.0, steps, false).result.nodes == 0) {
        lo = hi;
        hi *= 2.0;
        if (++grow > 60) throw NumericalError("oracle_critical_coupling: failed to bracket threshold");
    }
    for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (integrate_outward(potential, frame, mid, 0.0, steps, false).result.nodes == 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double bisect_energy(const PairPotential& potential, const JacobiFrame& frame, double lambda, int steps) {
    double lo = -lambda * max_potential_value(potential) * (1.0 + 1e-9) - 1e-300;
    double hi = 0.0;
    for (int it = 0; it < 300 && hi - lo > 1e-15 * std::abs(lo); ++it) {
        const double mid = 0.5 * (lo + hi);
        (integrate_outward(potential, frame, lambda, mid, steps, false).result.nodes == 0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

constexpr int kOracleSteps = 20000;

}  // namespace

ShootingResult shooting_oracle(const PairPotential& potential, const JacobiFrame& frame, double lambda, double energy,
                               int steps) {
    if (lambda < 0.0) throw PreconditionError("shooting_oracle: lambda must be >= 0");
    if (energy > 0.0) throw PreconditionError("shooting_oracle: energy must be <= 0");
    return integrate_outward(potential, frame, lambda, energy, steps, false).result;
}

double oracle_critical_coupling(const PairPotential& potential, const JacobiFrame& frame) {
    if (potential.is_zero()) throw DegenerateInputError("oracle_critical_coupling: potential is identically zero");
    const double coarse = bisect_coupling(potential, frame, kOracleSteps);
    const double fine = bisect_coupling(potential, frame, 2 * kOracleSteps);
    if (std::abs(fine - coarse) > 1e-8 * fine) {
        throw AccuracyError("oracle_critical_coupling: step refinement changed the threshold");
    }
    return fine;
}

std::optional<double> oracle_ground_energy(const PairPotential& potential, const JacobiFrame& frame, double lambda) {
    if (integrate_outward(potential, frame, lambda, 0.0, kOracleSteps, false).result.nodes == 0) return std::nullopt;
    const double coarse = bisect_energy(potential, frame, lambda, kOracleSteps);
    const double fine = bisect_energy(potential, frame, lambda, 2 * kOracleSteps);
    if (std::abs(fine - coarse) > 1e-7 * std::abs(fine)) {
        throw AccuracyError("oracle_ground_energy: step refinement changed the energy");
    }
    return fine;
}

double oracle_size(const PairPotential& potential, const JacobiFrame& frame, double lambda) {
    const auto energy = oracle_ground_energy(potential, frame, lambda);
    if (!energy) throw PreconditionError("oracle_size: no bound state");
    const double kappa = std::sqrt(-*energy);
    const double r_end = interaction_radius(potential, frame.alpha, 1e-14);
    // Outward from 0 and inward from r_end, matched at the classical turning point,
    // so neither leg integrates into the exponentially growing solution.
    double r_match = r_end;
    {
        const int probes = 4096;
        for (int k = 1; k <= probes; ++k) {
            const double r = r_end * k / probes;
            if (lambda * potential(frame.alpha * r) < kappa * kappa) {
                r_match = r;
                break;
            }
        }
    }
    auto accel = [&](double r, double u) { return -(lambda * potential(frame.alpha * r) + *energy) * u; };
    // RK4 from a to b (either direction), with sample spacing (b - a) / steps.
    auto leg = [&](double a, double b, double u, double du, int steps) {
        std::vector<double> samples{u};
        const double h = (b - a) / steps;
        for (int k = 0; k < steps; ++k) {
            const double r = a + (b - a) * k / steps;
            const double rm = a + (b - a) * (k + 0.5) / steps;
            double rn = a + (b - a) * (k + 1) / steps;
            if (k + 1 == steps) rn = std::nextafter(b, a);
            const double k1u = du, k1v = accel(r, u);
            const double k2u = du + 0.5 * h * k1v, k2v = accel(rm, u + 0.5 * h * k1u);
            const double k3u = du + 0.5 * h * k2v, k3v = accel(rm, u + 0.5 * h * k2u);
            const double k4u = du + h * k3v, k4v = accel(rn, u + h * k3u);
            u += h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u);
            du += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
            samples.push_back(u);
        }
        return samples;
    };
    auto simpson = [](const std::vector<double>& u, double a, double b, double power) {
        const std::size_t steps = u.size() - 1;
        const double h = (b - a) / static_cast<double>(steps);
        double norm = 0.0;
        double moment = 0.0;
        for (std::size_t k = 0; k <= steps; ++k) {
            const double w = (k == 0 || k == steps) ? 1.0 : (k % 2 ? 4.0 : 2.0);
            const double r = a + h * static_cast<double>(k);
            norm += w * u[k] * u[k];
            moment += w * std::pow(r, power) * u[k] * u[k];
        }
        return std::pair{norm * std::abs(h) / 3.0, moment * std::abs(h) / 3.0};
    };
    const int steps = 2 * kOracleSteps;
    const int out_steps = std::max(64, static_cast<int>(steps * r_match / r_end) / 2 * 2);
    const auto inner = leg(0.0, r_match, 0.0, 1.0, out_steps);
    auto [norm, second] = simpson(inner, 0.0, r_match, 2.0);
    if (r_match < r_end) {
        const int in_steps = std::max(64, (steps - out_steps) / 2 * 2);
        auto outer = leg(r_end, r_match, 1.0, -kappa, in_steps);
        const double scale = inner.back() / outer.back();
        for (double& x : outer) x *= scale;
        const auto [n2, s2] = simpson(outer, r_end, r_match, 2.0);
        norm += n2;
        second += s2;
        const double u2 = scale * scale;
        norm += u2 / (2.0 * kappa);
        second += u2 * (r_end * r_end / (2.0 * kappa) + r_end / (2.0 * kappa * kappa) + 1.0 / (4.0 * kappa * kappa * kappa));
    } else {
        const double u2 = inner.back() * inner.back();
        norm += u2 / (2.0 * kappa);
        second += u2 * (r_end * r_end / (2.0 * kappa) + r_end / (2.0 * kappa * kappa) + 1.0 / (4.0 * kappa * kappa * kappa));
    }
    return second / norm;
}

}  // namespace threshold_lab
