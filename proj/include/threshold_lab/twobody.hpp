#pragma once

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "threshold_lab/model.hpp"
#include "threshold_lab/quadrature.hpp"

namespace threshold_lab {

/// s-wave free Green's function of -d^2/dr^2 + z^2 with u(0) = 0:
/// (exp(-z|r-r'|) - exp(-z(r+r'))) / (2z), and min(r, r') at z = 0.
double green_s_wave(double z, double r, double r_prime);

/// Symmetrized Nystrom matrix sqrt(w_i) V^{1/2}(alpha r_i) g_z(r_i, r_j) V^{1/2}(alpha r_j) sqrt(w_j)
/// of the s-wave Birman-Schwinger operator at energy -z^2.
struct BSOperator {
    QuadratureRule rule;
    double z = 0.0;
    std::vector<double> sqrt_v;  // V^{1/2}(alpha r_i)
    Eigen::MatrixXd matrix;
};

BSOperator bs_operator(const PairPotential& potential, const JacobiFrame& frame, double z, const QuadratureRule& rule);

/// Largest eigenvalue mu(z) of the discretized operator.
double bs_max_eigenvalue(const PairPotential& potential, const JacobiFrame& frame, double z,
                         const QuadratureRule& rule);
double bs_max_eigenvalue(const PairPotential& potential, const JacobiFrame& frame, double z);

/// All eigenvalues, descending.
std::vector<double> bs_eigenvalues(const PairPotential& potential, const JacobiFrame& frame, double z,
                                   const QuadratureRule& rule);

/// lambda* = 1 / mu(0). Throws DegenerateInputError for V == 0.
double critical_coupling(const PairPotential& potential, const JacobiFrame& frame, const QuadratureRule& rule);
double critical_coupling(const PairPotential& potential, const JacobiFrame& frame);

struct PairMargin {
    Pair pair = Pair::p12;
    bool decoupled = false;  // zero potential: never binds
    double lambda_star = 0.0;
    double epsilon = 0.0;  // lambda_star - lambda (+inf when decoupled)
};

/// Subcriticality check through the s-wave spectral radius: epsilon = min_ij (lambda*_ij - lambda).
struct MarginReport {
    double lambda = 0.0;
    double epsilon = 0.0;
    bool satisfied = false;
    Pair limiting_pair = Pair::p12;
    std::array<PairMargin, 3> pairs{};
};

MarginReport subcriticality_margin(const ParticleSystem& system);

/// Bound state of -Lap_x - lambda V(alpha x) found from lambda mu(z*) = 1.
struct TwoBodyState {
    double lambda = 0.0;
    double z = 0.0;       // k = sqrt(-E2)
    double energy = 0.0;  // -z^2
    double r2 = 0.0;      // <x^2>
    std::vector<std::pair<double, double>> tail;  // (R, fraction of |u|^2 beyond R)
};

/// E2 = -z*^2 or nullopt when lambda <= lambda*.
std::optional<double> twobody_binding_energy(const PairPotential& potential, const JacobiFrame& frame, double lambda,
                                             const QuadratureRule& rule);
std::optional<double> twobody_binding_energy(const PairPotential& potential, const JacobiFrame& frame, double lambda);

/// Energy, <x^2> and tail masses at the radii in `tail_radii`; nullopt when unbound.
std::optional<TwoBodyState> twobody_bound_state(const PairPotential& potential, const JacobiFrame& frame,
                                                double lambda, const std::vector<double>& tail_radii,
                                                const QuadratureRule& rule);
std::optional<TwoBodyState> twobody_bound_state(const PairPotential& potential, const JacobiFrame& frame,
                                                double lambda, const std::vector<double>& tail_radii = {});

/// <x^2> of the ground state; PreconditionError when lambda <= lambda*.
double twobody_size(const PairPotential& potential, const JacobiFrame& frame, double lambda);

/// Outward RK4 integration of -u'' - (lambda V(alpha r) + E) u = 0 from u(0) = 0.
struct ShootingResult {
    int nodes = 0;          // sign changes on [0, r_end] plus one if the exterior solution crosses later
    double mismatch = 0.0;  // u'/u + sqrt(-E) at r_end
    double r_end = 0.0;
    double u_end = 0.0;
    double du_end = 0.0;
};

ShootingResult shooting_oracle(const PairPotential& potential, const JacobiFrame& frame, double lambda,
                               double energy, int steps = 20000);

/// Threshold coupling where the zero-energy solution acquires its first node.
double oracle_critical_coupling(const PairPotential& potential, const JacobiFrame& frame);
/// Ground-state energy by bisection on the node count; nullopt when unbound.
std::optional<double> oracle_ground_energy(const PairPotential& potential, const JacobiFrame& frame, double lambda);
/// <x^2> of the shooting ground state with an analytic exponential tail.
double oracle_size(const PairPotential& potential, const JacobiFrame& frame, double lambda);

}  // namespace threshold_lab
