#include "threshold_lab/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "threshold_lab/errors.hpp"

namespace threshold_lab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;

// Fritsch-Carlson slopes (the PCHIP choice): zero at local extrema, harmonic
// mean otherwise, so the interpolant never overshoots the data.
std::vector<double> monotone_slopes(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    std::vector<double> h(n - 1), delta(n - 1), d(n, 0.0);
    for (std::size_t k = 0; k + 1 < n; ++k) {
        h[k] = x[k + 1] - x[k];
        delta[k] = (y[k + 1] - y[k]) / h[k];
    }
    if (n == 2) {
        d[0] = d[1] = delta[0];
        return d;
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
        if (delta[k - 1] * delta[k] <= 0.0) continue;
        const double w1 = 2.0 * h[k] + h[k - 1];
        const double w2 = h[k] + 2.0 * h[k - 1];
        d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
    }
    auto end_slope = [](double h0, double h1, double d0, double d1) {
        double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if (s * d0 <= 0.0) return 0.0;
        if (d0 * d1 < 0.0 && std::abs(s) > 3.0 * std::abs(d0)) return 3.0 * d0;
        return s;
    };
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    return d;
}

double hermite(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& d, double r) {
    if (r <= x.front()) return y.front();
    const auto it = std::upper_bound(x.begin(), x.end(), r);
    const std::size_t k = static_cast<std::size_t>(it - x.begin()) - 1;
    const double h = x[k + 1] - x[k];
    const double t = (r - x[k]) / h;
    const double t2 = t * t;
    const double t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y[k] + (t3 - 2 * t2 + t) * h * d[k] + (-2 * t3 + 3 * t2) * y[k + 1] +
           (t3 - t2) * h * d[k + 1];
}

struct RadialIntegral {
    double value = 0.0;
    bool finite = true;
};

// \int_0^inf 4 pi r^2 g(r) dr. Compact profiles use Gauss-Legendre panels between
// `breaks`; otherwise doubling shells [L 2^k, L 2^{k+1}] whose increments decide
// convergence: a final increment ratio >= 1 means the integral diverges.
RadialIntegral radial_volume_integral(const std::function<double(double)>& g, double support,
                                      std::vector<double> breaks, double length_scale) {
    auto shell = [&](double a, double b) {
        return gauss_legendre(32, a, b).integrate([&](double r) { return 4.0 * kPi * r * r * g(r); });
    };
    RadialIntegral out;
    if (std::isfinite(support)) {
        breaks.push_back(0.0);
        breaks.push_back(support);
        std::sort(breaks.begin(), breaks.end());
        breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
        std::erase_if(breaks, [&](double b) { return b < 0.0 || b > support; });
        for (std::size_t k = 0; k + 1 < breaks.size(); ++k) out.value += shell(breaks[k], breaks[k + 1]);
        return out;
    }
    double lo = 0.0;
    double hi = length_scale;
    double previous = 0.0;
    double increment = 0.0;
    // Sub-panels inside the first shell resolve cusps and peaks near the origin.
    for (int k = 0; k < 8; ++k) out.value += shell(hi * k / 8.0, hi * (k + 1) / 8.0);
    previous = out.value;
    int quiet = 0;
    for (int k = 0; k < 80; ++k) {
        lo = hi;
        hi *= 2.0;
        increment = 0.0;
        for (int s = 0; s < 4; ++s) increment += shell(lo + (hi - lo) * s / 4.0, lo + (hi - lo) * (s + 1) / 4.0);
        out.value += increment;
        if (std::abs(increment) <= 1e-17 * std::abs(out.value)) {
            if (++quiet == 2) return out;
        } else {
            quiet = 0;
        }
        if (k == 79) break;
        previous = increment;
    }
    const double ratio = previous != 0.0 ? increment / previous : 0.0;
    if (ratio >= 1.0 - 1e-3) {
        out.finite = false;
        return out;
    }
    out.value += increment * ratio / (1.0 - ratio);
    return out;
}

std::vector<double> potential_breaks(const PairPotential& v) {
    if (v.kind() == PotentialKind::tabulated) return v.table_r();
    if (auto jump = v.jump_radius()) return {*jump};
    return {};
}

}  // namespace

std::string_view to_string(PotentialKind kind) {
    switch (kind) {
        case PotentialKind::gaussian: return "gaussian";
        case PotentialKind::exponential: return "exponential";
        case PotentialKind::square_well: return "square_well";
        case PotentialKind::tabulated: return "tabulated";
    }
    return "unknown";
}

PotentialKind parse_potential_kind(std::string_view name) {
    if (name == "gaussian") return PotentialKind::gaussian;
    if (name == "exponential") return PotentialKind::exponential;
    if (name == "square_well") return PotentialKind::square_well;
    if (name == "tabulated") return PotentialKind::tabulated;
    throw ConfigError("unknown potential kind '" + std::string(name) + "'");
}

PairPotential PairPotential::gaussian(double range, double amplitude) {
    if (!(range > 0.0)) throw PreconditionError("potential range must be positive");
    if (!(amplitude >= 0.0)) throw PreconditionError("potential amplitude must be nonnegative");
    PairPotential v;
    v.kind_ = PotentialKind::gaussian;
    v.range_ = range;
    v.amplitude_ = amplitude;
    return v;
}

PairPotential PairPotential::exponential(double range, double amplitude) {
    auto v = gaussian(range, amplitude);
    v.kind_ = PotentialKind::exponential;
    return v;
}

PairPotential PairPotential::square_well(double range, double amplitude) {
    auto v = gaussian(range, amplitude);
    v.kind_ = PotentialKind::square_well;
    return v;
}

PairPotential PairPotential::tabulated(std::vector<double> r, std::vector<double> v) {
    if (r.size() < 2 || r.size() != v.size()) throw PreconditionError("tabulated potential needs >= 2 (r, V) pairs");
    if (r.front() < 0.0) throw PreconditionError("tabulated potential radii must be >= 0");
    for (std::size_t k = 0; k + 1 < r.size(); ++k) {
        if (!(r[k + 1] > r[k])) throw PreconditionError("tabulated potential radii must be strictly increasing");
    }
    for (double x : v) {
        if (!std::isfinite(x)) throw PreconditionError("tabulated potential values must be finite");
    }
    PairPotential p;
    p.kind_ = PotentialKind::tabulated;
    p.range_ = r.back();
    p.amplitude_ = 1.0;
    p.table_slope_ = monotone_slopes(r, v);
    p.table_r_ = std::move(r);
    p.table_v_ = std::move(v);
    return p;
}

PairPotential PairPotential::scaled(double factor) const {
    if (!(factor >= 0.0)) throw PreconditionError("potential scale factor must be nonnegative");
    PairPotential v = *this;
    v.amplitude_ *= factor;
    return v;
}

double PairPotential::operator()(double r) const {
    if (amplitude_ == 0.0) return 0.0;
    r = std::abs(r);
    switch (kind_) {
        case PotentialKind::gaussian: {
            const double s = r / range_;
            return amplitude_ * std::exp(-s * s);
        }
        case PotentialKind::exponential: return amplitude_ * std::exp(-r / range_);
        case PotentialKind::square_well: return r < range_ ? amplitude_ : 0.0;
        case PotentialKind::tabulated:
            if (r > table_r_.back()) return 0.0;
            return amplitude_ * hermite(table_r_, table_v_, table_slope_, r);
    }
    return 0.0;
}

double PairPotential::sqrt_value(double r) const {
    return std::sqrt(std::max((*this)(r), 0.0));
}

double PairPotential::support_radius() const {
    switch (kind_) {
        case PotentialKind::square_well: return range_;
        case PotentialKind::tabulated: return table_r_.back();
        default: return kInf;
    }
}

std::optional<double> PairPotential::jump_radius() const {
    if (kind_ == PotentialKind::square_well) return range_;
    if (kind_ == PotentialKind::tabulated && table_v_.back() != 0.0) return table_r_.back();
    return std::nullopt;
}

double PairPotential::effective_radius(double cutoff) const {
    switch (kind_) {
        case PotentialKind::gaussian: return range_ * std::sqrt(-std::log(cutoff));
        case PotentialKind::exponential: return range_ * -std::log(cutoff);
        default: return support_radius();
    }
}

std::string_view to_string(Pair pair) {
    switch (pair) {
        case Pair::p12: return "12";
        case Pair::p13: return "13";
        case Pair::p23: return "23";
    }
    return "??";
}

Pair parse_pair(std::string_view name) {
    if (name == "12") return Pair::p12;
    if (name == "13") return Pair::p13;
    if (name == "23") return Pair::p23;
    throw ConfigError("unknown pair '" + std::string(name) + "' (expected 12, 13 or 23)");
}

std::array<int, 3> pair_particles(Pair pair) {
    switch (pair) {
        case Pair::p12: return {0, 1, 2};
        case Pair::p13: return {0, 2, 1};
        case Pair::p23: return {1, 2, 0};
    }
    return {0, 1, 2};
}

ParticleSystem::ParticleSystem(std::array<double, 3> masses, std::array<PairPotential, 3> potentials, double lambda)
    : masses_(masses), potentials_(std::move(potentials)), lambda_(lambda) {
    for (double m : masses_) {
        if (!(m > 0.0) || !std::isfinite(m)) throw PreconditionError("particle masses must be positive and finite");
    }
    // lambda = 0 is admitted as the free-Hamiltonian probe.
    if (!(lambda_ >= 0.0) || !std::isfinite(lambda_)) throw PreconditionError("coupling lambda must be >= 0");
}

ParticleSystem ParticleSystem::uniform(std::array<double, 3> masses, const PairPotential& potential, double lambda) {
    return ParticleSystem(masses, {potential, potential, potential}, lambda);
}

ParticleSystem ParticleSystem::with_lambda(double lambda) const {
    return ParticleSystem(masses_, potentials_, lambda);
}

ParticleSystem ParticleSystem::with_potential(Pair pair, const PairPotential& potential) const {
    auto pots = potentials_;
    pots[static_cast<int>(pair)] = potential;
    return ParticleSystem(masses_, pots, lambda_);
}

bool ParticleSystem::equal_masses() const {
    return masses_[0] == masses_[1] && masses_[1] == masses_[2];
}

JacobiFrame jacobi_frame(const std::array<double, 3>& masses, Pair pair) {
    const auto [i, j, l] = pair_particles(pair);
    const double mi = masses[i];
    const double mj = masses[j];
    const double ml = masses[l];
    JacobiFrame f;
    f.pair = pair;
    f.mu = mi * mj / (mi + mj);
    f.M = (mi + mj) * ml / (mi + mj + ml);
    f.alpha = 1.0 / std::sqrt(2.0 * f.mu);
    f.beta = -mj / (mi + mj) * f.alpha;
    f.gamma = 1.0 / std::sqrt(2.0 * f.M);
    return f;
}

JacobiFrame jacobi_frame(const ParticleSystem& system, Pair pair) {
    return jacobi_frame(system.masses(), pair);
}

double potential_moment_c(const PairPotential& potential, double alpha) {
    if (!(alpha > 0.0)) throw PreconditionError("potential_moment_c: alpha must be positive");
    const auto integral = radial_volume_integral([&](double r) { return potential(r); }, potential.support_radius(),
                                                 potential_breaks(potential), potential.range());
    if (!integral.finite) throw ValidationError("potential class violated: \\int V d^3x diverges");
    return integral.value / (alpha * alpha * alpha);
}

double sqrt_potential_fourier(const PairPotential& potential, double p) {
    if (p < 0.0) throw PreconditionError("sqrt_potential_fourier: momentum must be >= 0");
    const double r_max = std::min(potential.effective_radius(1e-34), potential.support_radius());
    std::vector<double> breaks{0.0};
    for (double b : potential_breaks(potential)) {
        if (b > 0.0 && b < r_max) breaks.push_back(b);
    }
    breaks.push_back(r_max);
    const double width = std::min(0.5 * potential.range(), p > 0.0 ? kPi / p : kInf);
    std::vector<double> panels{0.0};
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        const double a = breaks[k];
        const double b = breaks[k + 1];
        const auto count = static_cast<std::size_t>(std::ceil((b - a) / width));
        for (std::size_t s = 1; s <= count; ++s) panels.push_back(a + (b - a) * static_cast<double>(s) / count);
    }
    const auto rule = composite_gauss_legendre(panels, 16);
    const double integral = rule.integrate([&](double r) {
        const double pr = p * r;
        const double j0 = pr < 1e-8 ? 1.0 - pr * pr / 6.0 : std::sin(pr) / pr;
        return r * r * j0 * potential.sqrt_value(r);
    });
    return 4.0 * kPi * integral / std::pow(2.0 * kPi, 1.5);
}

double momentum_space_norm(const PairPotential& potential) {
    if (potential.is_zero()) return 0.0;
    auto integrand = [&](double p) {
        const double f = sqrt_potential_fourier(potential, p);
        return 4.0 * kPi * p * p * f * f;
    };
    const auto jump = potential.jump_radius();
    const double support = potential.support_radius();
    double total = 0.0;
    if (std::isfinite(support)) {
        // Panels aligned with the oscillation period pi / support; stopping at a
        // whole number of periods makes the asymptotic tail below exact to O(P^-3).
        const double period = kPi / support;
        const int panels = 400;
        for (int k = 0; k < panels; ++k) {
            total += gauss_legendre(16, k * period, (k + 1) * period).integrate(integrand);
        }
        if (jump) {
            const double p_max = panels * period;
            const double j2 = potential(*jump - 1e-12 * *jump);
            total += 4.0 * j2 * (*jump) * (*jump) / p_max;
        }
        return total;
    }
    const double width = 0.5 / potential.range();
    int quiet = 0;
    for (int k = 0; k < 20000; ++k) {
        const double piece = gauss_legendre(16, k * width, (k + 1) * width).integrate(integrand);
        total += piece;
        if (std::abs(piece) <= 1e-15 * total) {
            if (++quiet == 3) break;
        } else {
            quiet = 0;
        }
    }
    return total;
}

PotentialReport validate_profile(const std::function<double(double)>& profile, const std::function<double(double)>& envelope,
                          double support, double length_scale) {
    PotentialReport report;
    const double r_hi = std::isfinite(support) ? support : 50.0 * length_scale;
    const int samples = 20000;
    for (int k = 0; k <= samples; ++k) {
        const double r = r_hi * k / samples;
        const double v = profile(r);
        if (v < 0.0 && report.nonnegative) {
            report.nonnegative = false;
            report.first_negative_r = r;
        }
        if (v > envelope(r) * (1.0 + 1e-12) + 1e-300) report.envelope_dominates = false;
    }
    std::vector<double> breaks;
    const auto l1 = radial_volume_integral(profile, support, breaks, length_scale);
    const auto l2 = radial_volume_integral([&](double r) { const double v = profile(r); return v * v; }, support,
                                           breaks, length_scale);
    report.l1_finite = l1.finite;
    report.l1_norm = l1.value;
    report.l2_finite = l2.finite;
    report.l2_norm_sq = l2.value;
    if (!report.nonnegative) {
        std::ostringstream msg;
        msg << "nonnegativity: V < 0 at r = " << *report.first_negative_r;
        report.violations.push_back(msg.str());
    }
    if (!report.l1_finite) report.violations.emplace_back("L1: \\int V d^3x diverges");
    if (!report.l2_finite) report.violations.emplace_back("L2: \\int V^2 d^3x diverges");
    if (!report.envelope_dominates) report.violations.emplace_back("envelope: V exceeds F");
    return report;
}

PotentialReport validate_potential(const PairPotential& potential) {
    auto report = validate_profile([&](double r) { return potential(r); },
                                   [&](double r) { return potential.envelope(r); }, potential.support_radius(),
                                   potential.range());
    if (potential.kind() == PotentialKind::tabulated && report.nonnegative) {
        // Table nodes themselves are checked too; a dip between coarse samples is
        // excluded by the monotone interpolant.
        for (std::size_t k = 0; k < potential.table_v().size(); ++k) {
            if (potential.table_v()[k] < 0.0) {
                report.nonnegative = false;
                report.first_negative_r = potential.table_r()[k];
                std::ostringstream msg;
                msg << "nonnegativity: V < 0 at r = " << potential.table_r()[k];
                report.violations.push_back(msg.str());
                break;
            }
        }
    }
    return report;
}

QuadratureRule radial_rule(const PairPotential& potential, double alpha, std::size_t n) {
    if (!(alpha > 0.0)) throw PreconditionError("radial_rule: alpha must be positive");
    const double support = potential.support_radius();
    if (std::isfinite(support)) return gauss_legendre(n, 0.0, support / alpha);
    return semi_infinite_grid(n, kDefaultScaleFactor * potential.range() / alpha);
}

}  // namespace threshold_lab
