#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "threshold_lab/model.hpp"
#include "threshold_lab/quadrature.hpp"

namespace threshold_lab {

/// t(p) = (sqrt(p) - 1) for p <= 1, 0 beyond.
double t_multiplier(double p);

/// Fiber symbol of B(z) = 1 + z + t(|p_y|) after the partial Fourier transform in y.
struct ChannelMultiplier {
    double z = 1.0;

    double operator()(double p) const { return 1.0 + z + t_multiplier(p); }
    double inverse(double p) const { return 1.0 / (*this)(p); }
};

/// 1 / b(z, p); requires z > 0.
double b_inverse(double z, double p);

/// Finite constants entering the channel-operator bounds.
struct BoundConstants {
    double c = 0.0;         // \int V(alpha x) d^3x
    double c_prime = 0.0;   // \int exp(-2|x|) / |x|^2 d^3x
    double c_dprime = 0.0;  // sup_p [t(p) + 1]^2 / p
    double c_tilde = 0.0;   // gamma^{-6} \int |FT[V_other^{1/2}](p / gamma)|^2 d^3p
    double gamma = 0.0;
    double other_l1 = 0.0;  // \int V_other d^3x, the Plancherel partner of c_tilde gamma^3
};

/// Constants for pair potential `pair_potential` in `frame`; c_tilde uses `other` (the
/// cross-channel potential, e.g. V_23 when frame is (12)).
BoundConstants bound_constants(const PairPotential& pair_potential, const PairPotential& other,
                               const JacobiFrame& frame);
BoundConstants bound_constants(const PairPotential& potential, const JacobiFrame& frame);

/// Kernel of (-d^2/dr^2 + kappa^2)^{-2} on the half line with Dirichlet condition at 0.
double green_squared_s_wave(double kappa, double r, double r_prime);

/// || (-Lap + kappa^2)^{-1} V^{1/2}(alpha .) || on L2(R^3). The kernel is positivity
/// preserving, so the s-wave sector carries the norm.
double resolvent_potential_norm(const PairPotential& potential, const JacobiFrame& frame, double kappa,
                                const QuadratureRule& rule);

/// Norms of the fixed-p_y fibers of K1(z) = G V^{1/2} [t(p)+1] and K2(z) = G V^{1/2} z,
/// G = (-Lap_x + p^2 + z^2)^{-1}.
struct FiberNorms {
    double z = 0.0;
    double p = 0.0;
    double k1 = 0.0;
    double k2 = 0.0;
    double total = 0.0;  // fiber norm of K1 + K2
};

FiberNorms a_fiber_norms(const PairPotential& potential, const JacobiFrame& frame, double z, double p,
                         const QuadratureRule& rule);
double a_fiber_norm(const PairPotential& potential, const JacobiFrame& frame, double z, double p,
                    const QuadratureRule& rule);

/// Analytic Cauchy-Schwarz bounds: ||K1|| <= sqrt(c c' c''), ||K2|| <= sqrt(c c' z) <= sqrt(c c').
struct FiberBounds {
    double k1 = 0.0;
    double k2 = 0.0;        // sqrt(c c')
    double k2_at_z = 0.0;   // sqrt(c c' z)
    double total = 0.0;     // k1 + k2
};

FiberBounds fiber_bounds(const BoundConstants& constants, double z);

/// || K2(z) ||_2^2 of the cross-channel operator, reduced to a radial p_y integral.
double k2_hs_norm_squared(const BoundConstants& constants, double z);
double k2_hs_norm_squared(const PairPotential& pair_potential, const PairPotential& other, const JacobiFrame& frame,
                          double z);
/// c c' c_tilde / (2^5 pi^4).
double k2_hs_bound(const BoundConstants& constants);

/// Pointwise check of bracket^2 / sqrt(p^2 + z^2) <= 1 / p^2 on the unit ball.
struct MajorizationCheck {
    double max_ratio = 0.0;  // max of p^2 bracket^2 / sqrt(p^2 + z^2)
    bool holds = false;
};

MajorizationCheck k2_majorization_check(double z, int samples = 4000);

/// lambda mu(k) and, when it is a contraction, the Neumann bound 1 / (1 - lambda mu(k)).
struct ContractionResult {
    double lambda = 0.0;
    double k = 0.0;
    double lambda_mu = 0.0;
    bool contraction = false;
    std::optional<double> neumann_bound;
};

ContractionResult channel_contraction_norm(const PairPotential& potential, const JacobiFrame& frame, double lambda,
                                           double k);

struct FiberAuditPoint {
    FiberNorms norms;
    FiberBounds bounds;
    bool k1_ok = false;
    bool k2_ok = false;
    bool total_ok = false;
};

struct UniformityAudit {
    std::vector<double> z_grid;
    std::vector<double> p_grid;
    std::vector<FiberAuditPoint> points;  // row-major in (z, p)
    BoundConstants constants;
    double sup_total = 0.0;
    double analytic_bound = 0.0;
    bool bounded = false;
    bool all_points_ok = false;
    double continuity_proxy = 0.0;  // max |total(z_i, p) - total(z_{i+1}, p)|
    double self_convergence = 0.0;  // max |N_2n - N_n| at the grid corners
};

/// Geometric grid of `count` points from 1 down to `smallest`.
std::vector<double> default_z_grid(int count = 20, double smallest = 1e-4);
/// `count` log-spaced points in [10^-3, 10].
std::vector<double> default_p_grid(int count = 32);

UniformityAudit fiber_uniformity_audit(const PairPotential& potential, const JacobiFrame& frame,
                                        const std::vector<double>& z_grid, const std::vector<double>& p_grid,
                                        const QuadratureRule& rule);

void to_json(nlohmann::json& j, const BoundConstants& c);
void to_json(nlohmann::json& j, const ContractionResult& r);
void to_json(nlohmann::json& j, const UniformityAudit& a);

}  // namespace threshold_lab
