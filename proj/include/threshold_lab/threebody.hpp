#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "threshold_lab/gaussian_fit.hpp"
#include "threshold_lab/model.hpp"

namespace threshold_lab {

/// Basis functions exp(-q^T (A (x) I_3) q / 2) on the Jacobi pair q = (x, y) of the
/// (12) frame. With `symmetric` set each element stands for the sum over the six
/// particle permutations.
struct CorrelatedGaussianBasis {
    std::vector<Eigen::Matrix2d> A;
    bool symmetric = true;
    std::uint64_t seed = 0;

    std::size_t size() const { return A.size(); }
};

void to_json(nlohmann::json& j, const CorrelatedGaussianBasis& basis);
void from_json(const nlohmann::json& j, CorrelatedGaussianBasis& basis);

/// Closed-form Gaussian calculus for one particle system. The symmetrized
/// brackets are normalized as (1/6) sum_{P, P'} <phi_A P | O | phi_B P'>.
class CGCalculus {
public:
    /// Raises ValidationError when a pair potential cannot be fitted by Gaussians
    /// and PreconditionError when symmetrization is requested for
    /// non-identical particles.
    CGCalculus(const ParticleSystem& system, bool symmetric);

    struct Element {
        double overlap = 0.0;
        double kinetic = 0.0;    // <-Lap_x - Lap_y>
        double potential = 0.0;  // sum_pairs <V_ij>, coupling excluded
    };

    Element element(const Eigen::Matrix2d& A, const Eigen::Matrix2d& B) const;
    /// <Lap phi_A | Lap phi_B>
    double kinetic_squared(const Eigen::Matrix2d& A, const Eigen::Matrix2d& B) const;
    /// Brackets of the second moments [[x.x, x.y], [x.y, y.y]].
    Eigen::Matrix2d moment_elements(const Eigen::Matrix2d& A, const Eigen::Matrix2d& B) const;

    /// Images T_P^T A T_P (one for distinguishable particles, six otherwise).
    std::vector<Eigen::Matrix2d> images(const Eigen::Matrix2d& A) const;

    bool symmetric() const { return symmetric_; }
    double lambda() const { return lambda_; }
    const std::array<GaussianFit, 3>& fits() const { return fits_; }
    /// Length scale used for candidate generation: the largest interacting range.
    double length_scale() const { return length_scale_; }
    /// Coefficient vectors w with r_j - r_i = w_1 x + w_2 y for p12, p13, p23.
    const std::array<Eigen::Vector2d, 3>& pair_vectors() const { return pair_vectors_; }

private:
    bool symmetric_;
    double lambda_;
    double length_scale_ = 1.0;
    std::array<GaussianFit, 3> fits_;
    std::array<Eigen::Vector2d, 3> pair_vectors_;
    std::vector<Eigen::Matrix2d> perms_;  // T_P
};

/// Overlap, kinetic and potential matrices; H(lambda) = T - lambda V.
struct MatrixSet {
    Eigen::MatrixXd N;
    Eigen::MatrixXd T;
    Eigen::MatrixXd V;

    Eigen::MatrixXd hamiltonian(double lambda) const { return T - lambda * V; }
};

MatrixSet assemble(const CorrelatedGaussianBasis& basis, const CGCalculus& calc);

/// (H, N) at the system's coupling.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> matrix_elements(const CorrelatedGaussianBasis& basis,
                                                            const ParticleSystem& system);

inline constexpr double kOverlapCutoff = 1e-12;

struct GroundSolution {
    double energy = 0.0;
    Eigen::VectorXd coefficients;  // <c, N c> = 1
    Eigen::Index rank = 0;         // retained overlap directions
};

/// Lowest eigenpair of H c = E N c after dropping overlap eigenvalues below
/// kOverlapCutoff * max. DegenerateInputError when nothing is retained.
GroundSolution solve_ground(const Eigen::MatrixXd& H, const Eigen::MatrixXd& N);

struct GrowthOptions {
    std::size_t candidates_per_step = 16;
    std::size_t max_failed_steps = 30;  // consecutive steps without an accepted candidate
    double min_scale = 1e-4;            // eigenvalues of A in [min, max] / length_scale^2
    double max_scale = 1e2;
    double accept_threshold = 1e-8;
};

struct GrowthResult {
    CorrelatedGaussianBasis basis;
    std::vector<double> energy_trace;  // E3 after each acceptance
    double energy = 0.0;
};

/// Stochastic variational growth at the system's coupling; deterministic in seed.
GrowthResult grow_basis(const ParticleSystem& system, std::size_t budget, std::uint64_t seed, bool symmetric = true,
                        const GrowthOptions& options = {});
GrowthResult grow_basis(const CGCalculus& calc, std::size_t budget, std::uint64_t seed,
                        const GrowthOptions& options = {});

struct TailOptions {
    std::size_t points = std::size_t{1} << 20;
    std::size_t replicates = 16;
    double inflation = 2.0;  // covariance inflation of the importance Gaussian
    std::uint64_t seed = 0;
};

struct TailPoint {
    double R = 0.0;
    double mass = 0.0;  // T(R)
    double std_error = 0.0;
};

struct SweepRecord {
    double lambda = 0.0;
    bool bound = false;
    double E3 = 0.0;
    double k = 0.0;
    double r2_x = 0.0;
    double r2_y = 0.0;
    double rho2 = 0.0;
    double rho2_qmc = 0.0;
    double rho2_qmc_error = 0.0;
    std::vector<TailPoint> tail;
    double eps_subcritical = 0.0;
    double kinetic_norm = 0.0;
    std::size_t basis_size = 0;
    std::uint64_t seed = 0;
};

/// Default tail radii {0, 1, 2, 4, 8, 16} times the length scale.
std::vector<double> default_tail_radii(double length_scale);

/// Full record for a fixed basis at coupling `lambda`.
SweepRecord evaluate_record(const CorrelatedGaussianBasis& basis, const CGCalculus& calc, const MatrixSet& matrices,
                            double lambda, const ParticleSystem& system, const std::vector<double>& tail_radii,
                            const TailOptions& tail);

/// Grows a basis at the system's coupling and evaluates the record.
SweepRecord ground_energy(const ParticleSystem& system, std::size_t budget, std::uint64_t seed,
                          bool symmetric = true, const GrowthOptions& growth = {}, const TailOptions& tail = {});

/// T(R) for the CG state, estimated by shifted-Sobol importance sampling; the
/// last entry of the returned pair is the QMC estimate of <rho^2>.
std::pair<std::vector<TailPoint>, TailPoint> tail_masses(const CorrelatedGaussianBasis& basis, const CGCalculus& calc,
                                                         const Eigen::VectorXd& coefficients,
                                                         const Eigen::Matrix2d& second_moment,
                                                         const std::vector<double>& radii, const TailOptions& options);

struct CriticalCoupling3 {
    double lambda_lo = 0.0;  // unbound (E3 >= -tol)
    double lambda_hi = 0.0;  // bound (E3 < -tol)
    double lambda_cr = 0.0;  // midpoint
    double tolerance_energy = 0.0;
    double lambda_star = 0.0;
    double reference_lambda = 0.0;  // coupling at which the basis was grown
    std::size_t basis_size = 0;
    bool upper_bound_derived = true;
};

struct CriticalOptions {
    double reference_fraction = 1.0;  // grow the basis at reference_fraction * lambda*
    double width_fraction = 1e-4;     // bracket width relative to lambda*
    double energy_fraction = 1e-6;    // tol_E relative to |E2(2 lambda*)|
    double refine_offset = 0.02;      // second basis grown at lambda_cr + refine_offset * lambda*; 0 disables
};

/// Outcome of the search together with the final basis and its matrices.
struct CriticalSearch {
    CriticalCoupling3 coupling;
    CorrelatedGaussianBasis basis;
    MatrixSet matrices;
    double energy_scale = 0.0;  // |E2(2 lambda*)|
    double first_stage_lambda_cr = 0.0;
};

CriticalSearch critical_search(const ParticleSystem& system, std::size_t budget, std::uint64_t seed,
                               bool symmetric = true, const CriticalOptions& options = {},
                               const GrowthOptions& growth = {});

/// Bisection on E3(lambda) < -tol_E with a basis grown at the reference coupling.
/// `system` fixes masses and potentials; its coupling is ignored.
CriticalCoupling3 critical_coupling_3body(const ParticleSystem& system, std::size_t budget, std::uint64_t seed,
                                          bool symmetric = true, const CriticalOptions& options = {},
                                          const GrowthOptions& growth = {});

/// Same search on a prepared basis and matrices.
CriticalCoupling3 critical_coupling_fixed_basis(const MatrixSet& matrices, double lambda_lo, double lambda_hi,
                                                double tolerance_energy, double width);

/// Coupling in [lambda_lo, lambda_hi] at which the lowest level of the fixed basis
/// equals `energy` (< 0), by bisection to relative width `rel_width`.
double coupling_for_energy(const MatrixSet& matrices, double energy, double lambda_lo, double lambda_hi,
                           double rel_width = 1e-10);

/// Smallest two-body critical coupling over the interacting pairs.
double min_pair_critical_coupling(const ParticleSystem& system);

enum class SpreadingVerdict { non_spreading_consistent, spreading_consistent, inconclusive };

std::string_view to_string(SpreadingVerdict v);

struct SpreadingReport {
    SpreadingVerdict verdict = SpreadingVerdict::inconclusive;
    std::vector<double> radii;
    std::vector<std::vector<double>> tail_sequences;  // [radius][record]
    std::optional<double> R0;                         // radius with sup_n T_n(R0) <= 1/2
    double sup_tail_at_R0 = 0.0;
    double rho2_ratio = 0.0;       // <rho^2> at smallest |E| over its value near 100x that |E|
    double rho2_ratio_energy = 0.0;  // |E| of the comparison record
    double exponent = 0.0;         // slope of log <rho^2> against log(1/|E|)
    double kinetic_max = 0.0;
    double kinetic_median = 0.0;
    bool kinetic_bounded = false;  // max <= 2 median
    bool subcritical_throughout = false;
};

/// Records in any order; they are sorted by decreasing |E| first. Fewer than
/// four bound records raise PreconditionError.
SpreadingReport spreading_diagnostic(std::vector<SweepRecord> records);

void to_json(nlohmann::json& j, const TailPoint& t);
void to_json(nlohmann::json& j, const SweepRecord& r);
void to_json(nlohmann::json& j, const CriticalCoupling3& c);
void to_json(nlohmann::json& j, const SpreadingReport& r);

/// Column names and values for SweepRecord tables; one T(R) column per tail radius.
std::vector<std::string> sweep_csv_fields(const std::vector<double>& tail_radii);
std::vector<std::string> sweep_csv_values(const SweepRecord& r);

}  // namespace threshold_lab
