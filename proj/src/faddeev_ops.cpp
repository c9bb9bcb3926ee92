#include "threshold_lab/faddeev_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "threshold_lab/errors.hpp"
#include "threshold_lab/twobody.hpp"

namespace threshold_lab {

namespace {

constexpr double kPi = std::numbers::pi;

// phi(u) - 1 with phi(u) = (1 + u) e^{-u}; the series avoids cancellation for small u.
double phi_minus_one(double u) {
    if (u > 0.1) return (1.0 + u) * std::exp(-u) - 1.0;
    // sum_{k>=2} (-1)^k (1 - k) u^k / k!
    double term = u;  // u^k / k! at k = 1
    double sum = 0.0;
    for (int k = 2; k < 30; ++k) {
        term *= u / k;
        const double c = (k % 2 == 0 ? 1.0 : -1.0) * (1.0 - k) * term;
        sum += c;
        if (std::abs(c) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
}

}  // namespace

double t_multiplier(double p) {
    if (p < 0.0) throw PreconditionError("t_multiplier: p must be >= 0");
    return p <= 1.0 ? std::sqrt(p) - 1.0 : 0.0;
}

double b_inverse(double z, double p) {
    if (!(z > 0.0)) throw PreconditionError("b_inverse: requires z > 0");
    return ChannelMultiplier{z}.inverse(p);
}

BoundConstants bound_constants(const PairPotential& pair_potential, const PairPotential& other,
                               const JacobiFrame& frame) {
    BoundConstants k;
    k.gamma = frame.gamma;
    k.c = potential_moment_c(pair_potential, frame.alpha);
    k.c_prime = integrate_checked(semi_infinite_grid(96, 0.5),
                                  [](double r) { return 4.0 * kPi * std::exp(-2.0 * r); });
    // The supremum over p in (0, 1] is attained everywhere; probe both sides of p = 1.
    double sup = 0.0;
    for (int k_p = -600; k_p <= 300; ++k_p) {
        const double p = std::pow(10.0, k_p / 100.0);
        const double s = t_multiplier(p) + 1.0;
        sup = std::max(sup, s * s / p);
    }
    k.c_dprime = sup;
    const double g3 = frame.gamma * frame.gamma * frame.gamma;
    // gamma^{-6} \int |f(p/gamma)|^2 d^3p = gamma^{-3} \int |f(q)|^2 d^3q.
    k.c_tilde = momentum_space_norm(other) / g3;
    k.other_l1 = potential_moment_c(other, 1.0);
    return k;
}

BoundConstants bound_constants(const PairPotential& potential, const JacobiFrame& frame) {
    return bound_constants(potential, potential, frame);
}

double green_squared_s_wave(double kappa, double r, double r_prime) {
    if (!(kappa > 0.0)) throw PreconditionError("green_squared_s_wave: kappa must be positive");
    // (H + kappa^2)^{-2} = -d/d(kappa^2) (H + kappa^2)^{-1} applied to the kernel of green_s_wave.
    const double a = std::abs(r - r_prime);
    const double b = r + r_prime;
    const double diff = phi_minus_one(kappa * a) - phi_minus_one(kappa * b);
    return diff / (4.0 * kappa * kappa * kappa);
}

double resolvent_potential_norm(const PairPotential& potential, const JacobiFrame& frame, double kappa,
                                const QuadratureRule& rule) {
    const auto n = static_cast<Eigen::Index>(rule.size());
    std::vector<double> scale(rule.size());
    for (std::size_t i = 0; i < rule.size(); ++i) {
        scale[i] = std::sqrt(rule.weights[i]) * potential.sqrt_value(frame.alpha * rule.nodes[i]);
    }
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const auto ui = static_cast<std::size_t>(i);
            const auto uj = static_cast<std::size_t>(j);
            const double v = scale[ui] * green_squared_s_wave(kappa, rule.nodes[ui], rule.nodes[uj]) * scale[uj];
            m(i, j) = v;
            m(j, i) = v;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("resolvent_potential_norm: eigen-solver failed");
    return std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0));
}

FiberNorms a_fiber_norms(const PairPotential& potential, const JacobiFrame& frame, double z, double p,
                         const QuadratureRule& rule) {
    if (!(z > 0.0 && z <= 1.0)) throw PreconditionError("a_fiber_norm: z must lie in (0, 1]");
    if (p < 0.0) throw PreconditionError("a_fiber_norm: p must be >= 0");
    const double kappa = std::sqrt(p * p + z * z);
    const double base = resolvent_potential_norm(potential, frame, kappa, rule);
    FiberNorms out;
    out.z = z;
    out.p = p;
    out.k1 = (t_multiplier(p) + 1.0) * base;
    out.k2 = z * base;
    out.total = ChannelMultiplier{z}(p) * base;
    return out;
}

double a_fiber_norm(const PairPotential& potential, const JacobiFrame& frame, double z, double p,
                    const QuadratureRule& rule) {
    return a_fiber_norms(potential, frame, z, p, rule).total;
}

FiberBounds fiber_bounds(const BoundConstants& k, double z) {
    FiberBounds b;
    b.k1 = std::sqrt(k.c * k.c_prime * k.c_dprime);
    b.k2 = std::sqrt(k.c * k.c_prime);
    b.k2_at_z = std::sqrt(k.c * k.c_prime * z);
    b.total = b.k1 + b.k2;
    return b;
}

double k2_hs_norm_squared(const BoundConstants& k, double z) {
    if (!(z > 0.0 && z <= 1.0)) throw PreconditionError("k2_hs_norm_squared: z must lie in (0, 1]");
    // p = s^2: \int_0^1 4 pi p^2 [1/(z + sqrt p) - 1/(z + 1)]^2 / sqrt(p^2 + z^2) dp
    //        = \int_0^1 8 pi s^5 [...]^2 / sqrt(s^4 + z^2) ds.
    auto integrand = [z](double s) {
        const double bracket = 1.0 / (z + s) - 1.0 / (z + 1.0);
        const double s2 = s * s;
        return 8.0 * kPi * s2 * s2 * s * bracket * bracket / std::sqrt(s2 * s2 + z * z);
    };
    // Geometric panels resolve the features at s ~ z and s ~ sqrt(z).
    std::vector<double> breaks{0.0};
    const double first = std::min(z, 1.0) * 1e-4;
    const int panels = 60;
    for (int k_p = 0; k_p <= panels; ++k_p) breaks.push_back(first * std::pow(1.0 / first, static_cast<double>(k_p) / panels));
    const double integral = composite_gauss_legendre(breaks, 16).integrate(integrand);
    return k.c * k.c_prime * k.c_tilde * integral / (std::pow(2.0, 7) * std::pow(kPi, 5));
}

double k2_hs_norm_squared(const PairPotential& pair_potential, const PairPotential& other, const JacobiFrame& frame,
                          double z) {
    return k2_hs_norm_squared(bound_constants(pair_potential, other, frame), z);
}

double k2_hs_bound(const BoundConstants& k) {
    return k.c * k.c_prime * k.c_tilde / (std::pow(2.0, 5) * std::pow(kPi, 4));
}

MajorizationCheck k2_majorization_check(double z, int samples) {
    MajorizationCheck check;
    for (int k = 0; k <= samples; ++k) {
        const double p = std::pow(10.0, -10.0 + 10.0 * k / samples);
        const double bracket = 1.0 / (z + std::sqrt(p)) - 1.0 / (z + 1.0);
        check.max_ratio = std::max(check.max_ratio, p * p * bracket * bracket / std::sqrt(p * p + z * z));
    }
    check.holds = check.max_ratio <= 1.0;
    return check;
}

ContractionResult channel_contraction_norm(const PairPotential& potential, const JacobiFrame& frame, double lambda,
                                           double k) {
    if (k < 0.0) throw PreconditionError("channel_contraction_norm: k must be >= 0");
    ContractionResult r;
    r.lambda = lambda;
    r.k = k;
    r.lambda_mu = lambda * bs_max_eigenvalue(potential, frame, k);
    r.contraction = r.lambda_mu < 1.0;
    if (r.contraction) r.neumann_bound = 1.0 / (1.0 - r.lambda_mu);
    return r;
}

std::vector<double> default_z_grid(int count, double smallest) {
    std::vector<double> grid;
    for (int k = 0; k < count; ++k) {
        grid.push_back(count == 1 ? 1.0 : std::pow(smallest, static_cast<double>(k) / (count - 1)));
    }
    return grid;
}

std::vector<double> default_p_grid(int count) {
    std::vector<double> grid;
    for (int k = 0; k < count; ++k) grid.push_back(std::pow(10.0, -3.0 + 4.0 * k / (count - 1)));
    return grid;
}

UniformityAudit fiber_uniformity_audit(const PairPotential& potential, const JacobiFrame& frame,
                                        const std::vector<double>& z_grid, const std::vector<double>& p_grid,
                                        const QuadratureRule& rule) {
    if (z_grid.empty()) throw PreconditionError("fiber_uniformity_audit: empty z grid");
    if (p_grid.empty()) throw PreconditionError("fiber_uniformity_audit: empty p grid");
    UniformityAudit audit;
    audit.z_grid = z_grid;
    audit.p_grid = p_grid;
    audit.constants = bound_constants(potential, frame);
    audit.all_points_ok = true;
    for (double z : z_grid) {
        const auto bounds = fiber_bounds(audit.constants, z);
        for (double p : p_grid) {
            FiberAuditPoint pt;
            pt.norms = a_fiber_norms(potential, frame, z, p, rule);
            pt.bounds = bounds;
            pt.k1_ok = pt.norms.k1 <= bounds.k1;
            pt.k2_ok = pt.norms.k2 <= bounds.k2 && pt.norms.k2 <= bounds.k2_at_z;
            pt.total_ok = pt.norms.total <= bounds.total;
            audit.all_points_ok = audit.all_points_ok && pt.k1_ok && pt.k2_ok && pt.total_ok;
            audit.sup_total = std::max(audit.sup_total, pt.norms.total);
            audit.points.push_back(pt);
        }
    }
    audit.analytic_bound = fiber_bounds(audit.constants, 1.0).total;
    audit.bounded = audit.sup_total <= audit.analytic_bound;
    const std::size_t np = p_grid.size();
    for (std::size_t i = 0; i + 1 < z_grid.size(); ++i) {
        for (std::size_t k = 0; k < np; ++k) {
            audit.continuity_proxy = std::max(audit.continuity_proxy, std::abs(audit.points[i * np + k].norms.total -
                                                                               audit.points[(i + 1) * np + k].norms.total));
        }
    }
    // Refinement check at the corners of the grid with a doubled rule.
    const QuadratureRule fine = rule.semi_infinite() ? radial_rule(potential, frame.alpha, 2 * rule.size())
                                                     : gauss_legendre(2 * rule.size(), rule.lower, rule.upper);
    for (double z : {z_grid.front(), z_grid.back()}) {
        for (double p : {p_grid.front(), p_grid.back()}) {
            const double coarse = a_fiber_norm(potential, frame, z, p, rule);
            const double refined = a_fiber_norm(potential, frame, z, p, fine);
            audit.self_convergence = std::max(audit.self_convergence, std::abs(refined - coarse));
        }
    }
    return audit;
}

void to_json(nlohmann::json& j, const BoundConstants& c) {
    j = nlohmann::json{{"c", c.c},           {"c_prime", c.c_prime}, {"c_dprime", c.c_dprime},
                       {"c_tilde", c.c_tilde}, {"gamma", c.gamma},     {"other_l1", c.other_l1}};
}

void to_json(nlohmann::json& j, const ContractionResult& r) {
    j = nlohmann::json{{"lambda", r.lambda}, {"k", r.k}, {"lambda_mu", r.lambda_mu}, {"contraction", r.contraction}};
    j["neumann_bound"] = r.neumann_bound ? nlohmann::json(*r.neumann_bound) : nlohmann::json(nullptr);
}

void to_json(nlohmann::json& j, const UniformityAudit& a) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& pt : a.points) {
        points.push_back({{"z", pt.norms.z},
                          {"p", pt.norms.p},
                          {"k1", pt.norms.k1},
                          {"k2", pt.norms.k2},
                          {"total", pt.norms.total},
                          {"bound_k1", pt.bounds.k1},
                          {"bound_k2", pt.bounds.k2},
                          {"bound_k2_z", pt.bounds.k2_at_z},
                          {"bound_total", pt.bounds.total},
                          {"pass", pt.k1_ok && pt.k2_ok && pt.total_ok}});
    }
    j = nlohmann::json{{"constants", a.constants},
                       {"sup_total", a.sup_total},
                       {"analytic_bound", a.analytic_bound},
                       {"bounded", a.bounded},
                       {"all_points_pass", a.all_points_ok},
                       {"continuity_proxy", a.continuity_proxy},
                       {"self_convergence_delta", a.self_convergence},
                       {"points", points}};
}

}  // namespace threshold_lab
