#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "threshold_lab/quadrature.hpp"

namespace threshold_lab {

enum class PotentialKind { gaussian, exponential, square_well, tabulated };

std::string_view to_string(PotentialKind kind);
PotentialKind parse_potential_kind(std::string_view name);

/// Nonnegative radial pair interaction V(r). Built-in profiles peak at
/// `amplitude` (1 by default) at r = 0; the coupling lambda carries the
/// strength. An amplitude of zero marks a decoupled pair.
///
///   gaussian     exp(-(r/range)^2)
///   exponential  exp(-r/range)
///   square_well  1 for r < range, 0 beyond
///   tabulated    monotone cubic through (r, V) samples, zero past the last sample
///
/// The envelope F equals V for every kind.
class PairPotential {
public:
    static PairPotential gaussian(double range, double amplitude = 1.0);
    static PairPotential exponential(double range, double amplitude = 1.0);
    static PairPotential square_well(double range, double amplitude = 1.0);
    static PairPotential tabulated(std::vector<double> r, std::vector<double> v);

    PairPotential scaled(double factor) const;

    double operator()(double r) const;
    double envelope(double r) const { return (*this)(r); }
    double sqrt_value(double r) const;

    PotentialKind kind() const { return kind_; }
    double range() const { return range_; }
    double amplitude() const { return amplitude_; }
    bool is_zero() const { return amplitude_ == 0.0; }

    /// Radius beyond which V vanishes identically; +inf for gaussian/exponential.
    double support_radius() const;
    /// Radius of a jump discontinuity of V, if any (square well edge, table end).
    std::optional<double> jump_radius() const;
    /// Radius past which V(r) < cutoff * amplitude (the support radius for compact kinds).
    double effective_radius(double cutoff = 1e-17) const;

    const std::vector<double>& table_r() const { return table_r_; }
    const std::vector<double>& table_v() const { return table_v_; }

private:
    PairPotential() = default;

    PotentialKind kind_ = PotentialKind::gaussian;
    double range_ = 1.0;
    double amplitude_ = 1.0;
    std::vector<double> table_r_;
    std::vector<double> table_v_;
    std::vector<double> table_slope_;
};

enum class Pair { p12 = 0, p13 = 1, p23 = 2 };

inline constexpr std::array<Pair, 3> kAllPairs{Pair::p12, Pair::p13, Pair::p23};

std::string_view to_string(Pair pair);
Pair parse_pair(std::string_view name);

/// Particle indices (i, j) of the pair and the spectator l, zero based.
std::array<int, 3> pair_particles(Pair pair);

/// Three particles with masses (hbar = 1), one potential per pair, coupling lambda.
class ParticleSystem {
public:
    ParticleSystem(std::array<double, 3> masses, std::array<PairPotential, 3> potentials, double lambda);

    /// Identical potentials on every pair.
    static ParticleSystem uniform(std::array<double, 3> masses, const PairPotential& potential, double lambda);

    const std::array<double, 3>& masses() const { return masses_; }
    const PairPotential& potential(Pair pair) const { return potentials_[static_cast<int>(pair)]; }
    const std::array<PairPotential, 3>& potentials() const { return potentials_; }
    double lambda() const { return lambda_; }

    ParticleSystem with_lambda(double lambda) const;
    ParticleSystem with_potential(Pair pair, const PairPotential& potential) const;

    bool equal_masses() const;

private:
    std::array<double, 3> masses_;
    std::array<PairPotential, 3> potentials_;
    double lambda_;
};

/// Jacobi data for pair (ij) with spectator l:
///   x = sqrt(2 mu) (r_j - r_i),  y = sqrt(2 M) (r_l - R_ij),
/// so that H0 = -Lap_x - Lap_y and r_j - r_i = alpha x.
struct JacobiFrame {
    Pair pair = Pair::p12;
    double mu = 0.0;     // m_i m_j / (m_i + m_j)
    double M = 0.0;      // (m_i + m_j) m_l / (m_i + m_j + m_l)
    double alpha = 0.0;  // 1 / sqrt(2 mu)
    double beta = 0.0;   // -m_j / (m_i + m_j) / sqrt(2 mu)
    double gamma = 0.0;  // 1 / sqrt(2 M)
};

JacobiFrame jacobi_frame(const std::array<double, 3>& masses, Pair pair);
JacobiFrame jacobi_frame(const ParticleSystem& system, Pair pair);

/// c = \int V(alpha x) d^3x. Raises ValidationError when the integral diverges.
double potential_moment_c(const PairPotential& potential, double alpha);

/// Radial 3D Fourier transform of V^{1/2} with the symmetric (2 pi)^{-3/2} convention.
double sqrt_potential_fourier(const PairPotential& potential, double p);

/// \int |FT[V^{1/2}](p)|^2 d^3p evaluated in momentum space. Equals \int V d^3x.
double momentum_space_norm(const PairPotential& potential);

struct PotentialReport {
    bool nonnegative = true;
    std::optional<double> first_negative_r;
    bool l1_finite = true;
    double l1_norm = 0.0;  // \int V d^3x (last partial sum if divergent)
    bool l2_finite = true;
    double l2_norm_sq = 0.0;  // \int V^2 d^3x
    bool envelope_dominates = true;
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
};

/// Potential class checks: V >= 0 on a sample grid, V in L1 and L2, V <= F.
PotentialReport validate_potential(const PairPotential& potential);

/// Same checks for an arbitrary radial profile with envelope `envelope`.
/// `support` is +inf for profiles without compact support.
PotentialReport validate_profile(const std::function<double(double)>& profile,
                          const std::function<double(double)>& envelope, double support,
                          double length_scale = 1.0);

/// Default Nystrom grid for V(alpha r): Gauss-Legendre on [0, support/alpha] for
/// compact kinds, otherwise the semi-infinite map with scale 3 * range / alpha.
QuadratureRule radial_rule(const PairPotential& potential, double alpha,
                           std::size_t n = kDefaultRadialPoints);

}  // namespace threshold_lab
