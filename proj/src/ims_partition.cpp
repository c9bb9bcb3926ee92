#include "threshold_lab/ims_partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <type_traits>

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

#include "threshold_lab/errors.hpp"
#include "threshold_lab/parallel.hpp"
#include "threshold_lab/qmc.hpp"

namespace threshold_lab {

namespace {

using Grad = Eigen::Matrix<double, 6, 1>;
using Dual = Eigen::AutoDiffScalar<Grad>;

double value_of(double x) { return x; }
double value_of(const Dual& x) { return x.value(); }

double gsqrt(double x) { return std::sqrt(x); }
Dual gsqrt(const Dual& x) {
    if (x.value() <= 0.0) return Dual(0.0, Grad::Zero());  // only reached where the smoothstep is flat
    return sqrt(x);
}

double gsmooth(double t) { return smoothstep(t); }
Dual gsmooth(const Dual& t) {
    const double x = t.value();
    if (x <= 0.0) return Dual(0.0, Grad::Zero());
    if (x >= 1.0) return Dual(1.0, Grad::Zero());
    return Dual(smoothstep(x), 30.0 * x * x * (1.0 - x) * (1.0 - x) * t.derivatives());
}

template <class T>
T constant(double c) {
    if constexpr (std::is_same_v<T, double>) {
        return c;
    } else {
        return Dual(c, Grad::Zero());
    }
}

template <class T>
T norm3(const T& a, const T& b, const T& c) {
    return gsqrt(a * a + b * b + c * c);
}

double norm6(const JacobiPoint& q) {
    double s = 0.0;
    for (double v : q) s += v * v;
    return std::sqrt(s);
}

// Indices into distances() of the two pairs containing particle s.
constexpr std::array<std::array<int, 2>, 3> kOthers{{{0, 1}, {0, 2}, {1, 2}}};

// Sup of V over [R, inf). Built-in profiles are nonincreasing; tables are
// monotone cubic between knots, so the knots bound the rest.
double tail_sup(const PairPotential& v, double r) {
    double s = v(r);
    const auto& tr = v.table_r();
    const auto& tv = v.table_v();
    for (std::size_t k = 0; k < tr.size(); ++k) {
        if (tr[k] >= r) s = std::max(s, tv[k]);
    }
    return s;
}

}  // namespace

double smoothstep(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

IMSPartition::IMSPartition(std::array<double, 3> masses, double theta, double delta)
    : masses_(masses), theta_(theta), delta_(delta) {
    if (!(delta > 0.0 && delta < 0.25)) throw PreconditionError("build_partition: delta must lie in (0, 1/4)");
    if (!(theta > 0.0)) throw PreconditionError("build_partition: theta must be positive");
    const auto frame = jacobi_frame(masses, Pair::p12);
    alpha_ = frame.alpha;
    gamma_ = frame.gamma;
    a1_ = masses[1] / (masses[0] + masses[1]);
    a2_ = masses[0] / (masses[0] + masses[1]);
}

template <class T>
std::array<T, 3> IMSPartition::distances_generic(const std::array<T, 6>& q) const {
    // r2 - r1 = alpha x, r3 - r1 = gamma y + a1 alpha x, r3 - r2 = gamma y - a2 alpha x
    std::array<T, 3> r21, r31, r32;
    for (int k = 0; k < 3; ++k) {
        r21[k] = alpha_ * q[k];
        r31[k] = gamma_ * q[3 + k] + (a1_ * alpha_) * q[k];
        r32[k] = gamma_ * q[3 + k] - (a2_ * alpha_) * q[k];
    }
    return {norm3(r21[0], r21[1], r21[2]), norm3(r31[0], r31[1], r31[2]), norm3(r32[0], r32[1], r32[2])};
}

template <class T>
std::array<T, 3> IMSPartition::evaluate_generic(const std::array<T, 6>& q) const {
    const double interior = 1.0 / std::sqrt(3.0);
    T rho2 = constant<T>(0.0);
    for (const auto& c : q) rho2 = rho2 + c * c;
    const T rho = gsqrt(rho2);
    if (value_of(rho) <= 0.5) return {constant<T>(interior), constant<T>(interior), constant<T>(interior)};

    const auto d = distances_generic(q);
    std::array<T, 3> s;
    for (int k = 0; k < 3; ++k) s[k] = gsmooth((d[k] / rho - theta_) * constant<T>(1.0 / delta_));
    std::array<T, 3> w;
    for (int p = 0; p < 3; ++p) w[p] = s[kOthers[p][0]] * s[kOthers[p][1]];
    const T wn = norm3(w[0], w[1], w[2]);
    if (!(value_of(wn) > 0.0)) throw NumericalError("IMSPartition: weights vanish; thresholds do not cover");
    std::array<T, 3> J;
    for (int p = 0; p < 3; ++p) J[p] = w[p] / wn;
    if (value_of(rho) >= 1.0) return J;

    const T b = gsmooth(2.0 * rho - 1.0);
    std::array<T, 3> u;
    for (int p = 0; p < 3; ++p) u[p] = (1.0 - b) * constant<T>(interior) + b * J[p];
    const T un = norm3(u[0], u[1], u[2]);
    for (int p = 0; p < 3; ++p) u[p] = u[p] / un;
    return u;
}

std::array<double, 3> IMSPartition::values(const JacobiPoint& q) const { return evaluate_generic(q); }

IMSPartition::Evaluation IMSPartition::evaluate(const JacobiPoint& q) const {
    std::array<Dual, 6> dq;
    for (int k = 0; k < 6; ++k) dq[k] = Dual(q[k], 6, k);
    const auto r = evaluate_generic(dq);
    Evaluation e;
    for (int s = 0; s < 3; ++s) {
        e.J[s] = r[s].value();
        for (int k = 0; k < 6; ++k) e.grad[s][k] = r[s].derivatives()[k];
    }
    return e;
}

std::array<double, 3> IMSPartition::distances(const JacobiPoint& q) const { return distances_generic(q); }

std::array<double, 3> IMSPartition::weights(const JacobiPoint& q) const {
    const double rho = norm6(q);
    if (!(rho > 0.0)) throw PreconditionError("IMSPartition::weights: q must be nonzero");
    const auto d = distances(q);
    std::array<double, 3> s, w;
    for (int k = 0; k < 3; ++k) s[k] = smoothstep((d[k] / rho - theta_) / delta_);
    for (int p = 0; p < 3; ++p) w[p] = s[kOthers[p][0]] * s[kOthers[p][1]];
    return w;
}

IMSPartition build_partition(const std::array<double, 3>& masses, double delta, double theta,
                             std::size_t mesh_size) {
    IMSPartition partition(masses, theta, delta);
    const auto dirs = sphere_directions(6, mesh_size, 0x1357);
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& v : dirs) {
        JacobiPoint q;
        std::copy(v.begin(), v.end(), q.begin());
        const auto d = partition.distances(q);
        double best = 0.0;
        for (int p = 0; p < 3; ++p) best = std::max(best, std::min(d[kOthers[p][0]], d[kOthers[p][1]]));
        margin = std::min(margin, best);
        const auto w = partition.weights(q);
        if (w[0] * w[0] + w[1] * w[1] + w[2] * w[2] == 0.0) {
            throw ValidationError("build_partition: thresholds do not cover the sphere (theta too large)");
        }
    }
    partition.set_covering_margin(margin);
    return partition;
}

IMSPartition build_partition(const ParticleSystem& system, double delta, double theta, std::size_t mesh_size) {
    return build_partition(system.masses(), delta, theta, mesh_size);
}

std::vector<JacobiPoint> ims_sample_mesh(std::size_t count, double r_min, double r_max, std::uint64_t seed) {
    if (!(r_min > 0.0 && r_max >= r_min)) throw PreconditionError("ims_sample_mesh: need 0 < r_min <= r_max");
    ShiftedSobol gen(7, seed);
    std::vector<double> u(7);
    std::vector<JacobiPoint> out(count);
    const double log_ratio = std::log(r_max / r_min);
    for (auto& q : out) {
        gen.next(u);
        double n2 = 0.0;
        for (int k = 0; k < 6; ++k) {
            q[k] = inverse_normal_cdf(u[k]);
            n2 += q[k] * q[k];
        }
        const double r = r_min * std::exp(u[6] * log_ratio);
        const double scale = r / std::sqrt(n2);
        for (auto& c : q) c *= scale;
    }
    return out;
}

ConeReport verify_support_cone(const IMSPartition& partition, const std::vector<JacobiPoint>& mesh) {
    ConeReport report;
    report.samples = mesh.size();
    report.measured_c = std::numeric_limits<double>::infinity();
    for (const auto& q : mesh) {
        if (!(norm6(q) > 1.0)) throw PreconditionError("verify_support_cone: mesh samples need |q| > 1");
    }
    std::vector<double> local(mesh.size(), std::numeric_limits<double>::infinity());
    std::vector<int> hits(mesh.size(), 0);
    parallel_for(mesh.size(), [&](std::size_t i) {
        const auto& q = mesh[i];
        const double rho = norm6(q);
        const auto J = partition.values(q);
        const auto d = partition.distances(q);
        for (int s = 0; s < 3; ++s) {
            if (J[s] == 0.0) continue;
            ++hits[i];
            local[i] = std::min(local[i], std::min(d[kOthers[s][0]], d[kOthers[s][1]]) / rho);
        }
    });
    for (std::size_t i = 0; i < mesh.size(); ++i) {
        report.support_hits += static_cast<std::size_t>(hits[i]);
        report.measured_c = std::min(report.measured_c, local[i]);
    }
    report.passes = report.support_hits > 0 && report.measured_c > 0.0;
    return report;
}

GradientDecayReport gradient_decay_audit(const IMSPartition& partition, const std::vector<double>& radii,
                                         std::size_t directions, std::uint64_t seed) {
    if (radii.empty()) throw PreconditionError("gradient_decay_audit: no radii");
    for (std::size_t k = 0; k < radii.size(); ++k) {
        if (!(radii[k] > 1.0)) throw PreconditionError("gradient_decay_audit: radii must exceed 1");
        if (k > 0 && !(radii[k] > radii[k - 1])) throw PreconditionError("gradient_decay_audit: radii must increase");
    }
    const auto dirs = sphere_directions(6, directions, seed);
    GradientDecayReport report;
    report.radii = radii;
    for (double r : radii) {
        std::vector<double> g2(dirs.size(), 0.0);
        parallel_for(dirs.size(), [&](std::size_t i) {
            JacobiPoint q;
            for (int k = 0; k < 6; ++k) q[k] = r * dirs[i][k];
            const auto e = partition.evaluate(q);
            for (const auto& g : e.grad) {
                for (double c : g) g2[i] += c * c;
            }
        });
        const double m = *std::max_element(g2.begin(), g2.end());
        report.max_grad_sq.push_back(m);
        report.scaled.push_back(m * r * r);
    }
    report.passes = report.scaled[0] > 0.0;
    for (double s : report.scaled) {
        const double ratio = s / report.scaled[0];
        report.passes = report.passes && ratio >= 0.5 && ratio <= 2.0;
    }
    return report;
}

GradientCheckReport gradient_fd_check(const IMSPartition& partition, std::size_t points, double step,
                                      std::uint64_t seed) {
    const auto mesh = ims_sample_mesh(points, 0.25, 4.0, seed);
    GradientCheckReport report;
    report.points = points;
    report.step = step;
    for (const auto& q : mesh) {
        const auto e = partition.evaluate(q);
        std::array<JacobiPoint, 3> fd{};
        for (int k = 0; k < 6; ++k) {
            auto at = [&](double offset) {
                JacobiPoint p = q;
                p[k] += offset;
                return partition.values(p);
            };
            const auto p2 = at(2.0 * step), p1 = at(step), m1 = at(-step), m2 = at(-2.0 * step);
            for (int s = 0; s < 3; ++s) fd[s][k] = (-p2[s] + 8.0 * p1[s] - 8.0 * m1[s] + m2[s]) / (12.0 * step);
        }
        for (int s = 0; s < 3; ++s) {
            double diff = 0.0, norm = 0.0;
            for (int k = 0; k < 6; ++k) {
                diff += (fd[s][k] - e.grad[s][k]) * (fd[s][k] - e.grad[s][k]);
                norm += e.grad[s][k] * e.grad[s][k];
            }
            report.max_relative_difference =
                std::max(report.max_relative_difference, std::sqrt(diff) / std::max(std::sqrt(norm), 1.0));
        }
    }
    report.passes = report.max_relative_difference <= 1e-6;
    return report;
}

IdentityReport ims_identity_check(const ParticleSystem& system, const IMSPartition& partition,
                                  const std::vector<JacobiPoint>& samples) {
    IdentityReport report;
    report.samples = samples.size();
    // distance index k belongs to pair k (p12, p13, p23); internal pair of s is the one without s
    const std::array<int, 3> internal{2, 1, 0};
    const double c = partition.cone_constant();
    std::vector<double> part_err(samples.size()), regroup_err(samples.size());
    std::vector<int> checks(samples.size(), 0), violations(samples.size(), 0);
    parallel_for(samples.size(), [&](std::size_t n) {
        const auto& q = samples[n];
        const double rho = norm6(q);
        const auto J = partition.values(q);
        const auto d = partition.distances(q);
        std::array<double, 3> v;
        for (int k = 0; k < 3; ++k) v[k] = system.potential(kAllPairs[k])(d[k]);
        const double direct = v[0] + v[1] + v[2];
        double h_part = 0.0, k_part = 0.0;
        for (int s = 0; s < 3; ++s) {
            const double j2 = J[s] * J[s];
            h_part += j2 * v[internal[s]];
            k_part += j2 * (v[kOthers[s][0]] + v[kOthers[s][1]]);
        }
        part_err[n] = std::abs(J[0] * J[0] + J[1] * J[1] + J[2] * J[2] - 1.0);
        const double diff = std::abs(direct - (h_part + k_part));
        regroup_err[n] = diff / std::max(direct, std::numeric_limits<double>::min());
        if (rho > 1.0) {
            for (int s = 0; s < 3; ++s) {
                if (J[s] == 0.0) continue;
                for (int k : kOthers[s]) {
                    ++checks[n];
                    const double bound = tail_sup(system.potential(kAllPairs[k]), c * rho);
                    if (v[k] * J[s] * J[s] > bound * (1.0 + 1e-12)) ++violations[n];
                }
            }
        }
    });
    for (std::size_t n = 0; n < samples.size(); ++n) {
        report.max_partition_error = std::max(report.max_partition_error, part_err[n]);
        report.max_regroup_error = std::max(report.max_regroup_error, regroup_err[n]);
        report.cone_checks += static_cast<std::size_t>(checks[n]);
        report.cone_violations += static_cast<std::size_t>(violations[n]);
    }
    report.passes = report.max_partition_error <= 1e-10 && report.max_regroup_error <= 1e-12 &&
                    report.cone_violations == 0;
    return report;
}

void to_json(nlohmann::json& j, const ConeReport& r) {
    j = nlohmann::json{{"samples", r.samples},
                       {"support_hits", r.support_hits},
                       {"measured_c", r.measured_c},
                       {"pass", r.passes}};
}

void to_json(nlohmann::json& j, const GradientDecayReport& r) {
    j = nlohmann::json{{"radii", r.radii}, {"max_grad_sq", r.max_grad_sq}, {"scaled", r.scaled}, {"pass", r.passes}};
}

void to_json(nlohmann::json& j, const GradientCheckReport& r) {
    j = nlohmann::json{{"points", r.points},
                       {"step", r.step},
                       {"max_relative_difference", r.max_relative_difference},
                       {"pass", r.passes}};
}

void to_json(nlohmann::json& j, const IdentityReport& r) {
    j = nlohmann::json{{"samples", r.samples},
                       {"max_partition_error", r.max_partition_error},
                       {"max_regroup_error", r.max_regroup_error},
                       {"cone_checks", r.cone_checks},
                       {"cone_violations", r.cone_violations},
                       {"pass", r.passes}};
}

std::string gradient_decay_csv(const GradientDecayReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "radius,max_grad_sq\n";
    for (std::size_t k = 0; k < r.radii.size(); ++k) os << r.radii[k] << ',' << r.max_grad_sq[k] << '\n';
    return os.str();
}

}  // namespace threshold_lab
