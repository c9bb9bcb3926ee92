#include "threshold_lab/threebody.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

#include "threshold_lab/errors.hpp"
#include "threshold_lab/parallel.hpp"
#include "threshold_lab/qmc.hpp"
#include "threshold_lab/twobody.hpp"

namespace threshold_lab {

namespace {

constexpr double kTwoPiCubed = 8.0 * std::numbers::pi * std::numbers::pi * std::numbers::pi;

bool same_potential(const PairPotential& a, const PairPotential& b) {
    return a.kind() == b.kind() && a.range() == b.range() && a.amplitude() == b.amplitude() &&
           a.table_r() == b.table_r() && a.table_v() == b.table_v();
}

double length_of(const PairPotential& v) {
    return v.kind() == PotentialKind::tabulated ? v.effective_radius(1e-10) / 3.0 : v.range();
}

void check_positive_definite(const Eigen::Matrix2d& A) {
    if (!(A(0, 0) > 0.0 && A.determinant() > 0.0)) throw PreconditionError("correlated Gaussian: A not positive definite");
}

struct Pairing {
    double overlap;
    Eigen::Matrix2d sigma;  // (A + B)^{-1}
};

Pairing pairing(const Eigen::Matrix2d& A, const Eigen::Matrix2d& B) {
    const Eigen::Matrix2d C = A + B;
    const double det = C.determinant();
    if (!(det > 0.0)) throw NumericalError("correlated Gaussian: singular pair matrix");
    return {kTwoPiCubed / (det * std::sqrt(det)), C.inverse()};
}

Eigen::VectorXd lowest_vector(const Eigen::MatrixXd& m, double& value) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) throw NumericalError("eigen-solver failed");
    value = es.eigenvalues()(0);
    return es.eigenvectors().col(0);
}

// Regularized generalized eigen-decomposition: vectors are N-orthonormal.
struct Spectrum {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
};

Eigen::MatrixXd regularized_map(const Eigen::MatrixXd& N) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(N);
    if (es.info() != Eigen::Success) throw NumericalError("solve_ground: overlap eigen-solver failed");
    const Eigen::VectorXd& n = es.eigenvalues();
    const double cut = kOverlapCutoff * n.maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n.size(); ++i) {
        if (n(i) > cut && n(i) > 0.0) keep.push_back(i);
    }
    if (keep.empty()) throw DegenerateInputError("solve_ground: every overlap direction dropped (degenerate basis)");
    Eigen::MatrixXd X(N.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) {
        X.col(static_cast<Eigen::Index>(k)) = es.eigenvectors().col(keep[k]) / std::sqrt(n(keep[k]));
    }
    return X;
}

Spectrum full_spectrum(const Eigen::MatrixXd& H, const Eigen::MatrixXd& N) {
    const Eigen::MatrixXd X = regularized_map(N);
    const Eigen::MatrixXd Hr = X.transpose() * H * X;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Hr + Hr.transpose()));
    if (es.info() != Eigen::Success) throw NumericalError("solve_ground: eigen-solver failed");
    return {es.eigenvalues(), X * es.eigenvectors()};
}

// Lowest root below values(0) of a - E - sum b_i^2 / (values_i - E).
double bordered_lowest(const Eigen::VectorXd& values, const Eigen::VectorXd& b, double a) {
    if (values.size() == 0) return a;
    auto g = [&](double e) { return a - e - (b.array().square() / (values.array() - e)).sum(); };
    const double top = values(0);
    double hi = top - 1e-14 * std::max(1.0, std::abs(top));
    if (g(hi) >= 0.0) return top;
    double lo = std::min(a, top) - b.norm() - 1e-12 * std::max(1.0, std::abs(top));
    while (g(lo) <= 0.0) lo -= std::max(1.0, std::abs(lo));
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// A = sum_pairs w w^T / b^2 with pair widths b log-uniform.
Eigen::Matrix2d random_candidate(std::mt19937_64& rng, const CGCalculus& calc, const GrowthOptions& opt) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double lmin = std::log(opt.min_scale), lmax = std::log(opt.max_scale);
    const double inv_l2 = 1.0 / (calc.length_scale() * calc.length_scale());
    Eigen::Matrix2d A = Eigen::Matrix2d::Zero();
    for (const auto& w : calc.pair_vectors()) {
        const double a = std::exp(lmin + (lmax - lmin) * unit(rng)) * inv_l2;
        A += a * w * w.transpose();
    }
    A(0, 1) = A(1, 0) = 0.5 * (A(0, 1) + A(1, 0));
    return A;
}

}  // namespace

void to_json(nlohmann::json& j, const CorrelatedGaussianBasis& basis) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& A : basis.A) list.push_back({A(0, 0), A(0, 1), A(1, 1)});
    j = nlohmann::json{{"symmetric", basis.symmetric}, {"seed", basis.seed}, {"A", list}};
}

void from_json(const nlohmann::json& j, CorrelatedGaussianBasis& basis) {
    basis.symmetric = j.at("symmetric").get<bool>();
    basis.seed = j.at("seed").get<std::uint64_t>();
    basis.A.clear();
    for (const auto& e : j.at("A")) {
        Eigen::Matrix2d A;
        A << e.at(0).get<double>(), e.at(1).get<double>(), e.at(1).get<double>(), e.at(2).get<double>();
        check_positive_definite(A);
        basis.A.push_back(A);
    }
}

CGCalculus::CGCalculus(const ParticleSystem& system, bool symmetric) : symmetric_(symmetric), lambda_(system.lambda()) {
    const auto& m = system.masses();
    if (symmetric) {
        if (!system.equal_masses()) throw PreconditionError("symmetrized basis requires equal masses");
        const auto& p = system.potentials();
        if (!same_potential(p[0], p[1]) || !same_potential(p[0], p[2])) {
            throw PreconditionError("symmetrized basis requires identical pair potentials");
        }
    }
    double scale = 0.0;
    for (int k = 0; k < 3; ++k) {
        const auto& v = system.potentials()[static_cast<std::size_t>(k)];
        fits_[static_cast<std::size_t>(k)] = fit_gaussian_sum(v);
        if (!v.is_zero()) scale = std::max(scale, length_of(v));
    }
    length_scale_ = scale > 0.0 ? scale : 1.0;

    const auto frame = jacobi_frame(m, Pair::p12);
    const double m12 = m[0] + m[1];
    pair_vectors_[0] = Eigen::Vector2d(frame.alpha, 0.0);
    pair_vectors_[1] = Eigen::Vector2d(m[1] / m12 * frame.alpha, frame.gamma);
    pair_vectors_[2] = Eigen::Vector2d(-m[0] / m12 * frame.alpha, frame.gamma);

    Eigen::Matrix3d full;
    const double sx = 1.0 / frame.alpha, sy = 1.0 / frame.gamma;
    const double mt = m[0] + m[1] + m[2];
    full << -sx, sx, 0.0, -sy * m[0] / m12, -sy * m[1] / m12, sy, m[0] / mt, m[1] / mt, m[2] / mt;
    const Eigen::Matrix<double, 2, 3> Q = full.topRows<2>();
    const Eigen::Matrix<double, 3, 2> R = full.inverse().leftCols<2>();
    if (!symmetric) {
        perms_.push_back(Eigen::Matrix2d::Identity());
        return;
    }
    std::array<int, 3> idx{0, 1, 2};
    do {
        Eigen::Matrix3d P = Eigen::Matrix3d::Zero();
        for (int i = 0; i < 3; ++i) P(i, idx[static_cast<std::size_t>(i)]) = 1.0;
        perms_.push_back(Q * P * R);
    } while (std::next_permutation(idx.begin(), idx.end()));
}

std::vector<Eigen::Matrix2d> CGCalculus::images(const Eigen::Matrix2d& A) const {
    std::vector<Eigen::Matrix2d> out;
    out.reserve(perms_.size());
    for (const auto& T : perms_) {
        Eigen::Matrix2d B = T.transpose() * A * T;
        B(0, 1) = B(1, 0) = 0.5 * (B(0, 1) + B(1, 0));
        out.push_back(B);
    }
    return out;
}

CGCalculus::Element CGCalculus::element(const Eigen::Matrix2d& A, const Eigen::Matrix2d& B) const {
    Element e;
    for (const auto& Bp : images(B)) {
        const auto p = pairing(A, Bp);
        e.overlap += p.overlap;
        e.kinetic += 3.0 * (A * p.sigma * Bp).trace() * p.overlap;
        double v = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            const double wsw = pair_vectors_[k].dot(p.sigma * pair_vectors_[k]);
            for (const auto& t : fits_[k].terms) {
                const double f = 1.0 + 2.0 * wsw / (t.width * t.width);
                v += t.weight / (f * std::sqrt(f));
            }
        }
        e.potential += v * p.overlap;
    }
    return e;
}

double CGCalculus::kinetic_squared(const Eigen::Matrix2d& A, const Eigen::Matrix2d& B) const {
    double sum = 0.0;
    const Eigen::Matrix2d A2 = A * A;
    for (const auto& Bp : images(B)) {
        const auto p = pairing(A, Bp);
        const Eigen::Matrix2d B2 = Bp * Bp;
        const double ta = (A2 * p.sigma).trace(), tb = (B2 * p.sigma).trace();
        const double cross = (A2 * p.sigma * B2 * p.sigma).trace();
        const double trA = A.trace(), trB = Bp.trace();
        sum += (9.0 * ta * tb + 6.0 * cross - 9.0 * trA * tb - 9.0 * trB * ta + 9.0 * trA * trB) * p.overlap;
    }
    return sum;
}

Eigen::Matrix2d CGCalculus::moment_elements(const Eigen::Matrix2d& A, const Eigen::Matrix2d& B) const {
    Eigen::Matrix2d sum = Eigen::Matrix2d::Zero();
    const auto ia = images(A);
    const auto ib = images(B);
    for (const auto& Ap : ia) {
        for (const auto& Bp : ib) {
            const auto p = pairing(Ap, Bp);
            sum += 3.0 * p.sigma * p.overlap;
        }
    }
    return sum / static_cast<double>(ia.size());
}

MatrixSet assemble(const CorrelatedGaussianBasis& basis, const CGCalculus& calc) {
    const auto n = static_cast<Eigen::Index>(basis.size());
    MatrixSet m{Eigen::MatrixXd(n, n), Eigen::MatrixXd(n, n), Eigen::MatrixXd(n, n)};
    for (const auto& A : basis.A) check_positive_definite(A);
    parallel_for(basis.size(), [&](std::size_t i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const auto e = calc.element(basis.A[i], basis.A[j]);
            const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
            m.N(ii, jj) = e.overlap;
            m.T(ii, jj) = e.kinetic;
            m.V(ii, jj) = e.potential;
        }
    });
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) {
            m.N(j, i) = m.N(i, j);
            m.T(j, i) = m.T(i, j);
            m.V(j, i) = m.V(i, j);
        }
    }
    return m;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> matrix_elements(const CorrelatedGaussianBasis& basis,
                                                            const ParticleSystem& system) {
    const CGCalculus calc(system, basis.symmetric);
    const auto m = assemble(basis, calc);
    return {m.hamiltonian(system.lambda()), m.N};
}

GroundSolution solve_ground(const Eigen::MatrixXd& H, const Eigen::MatrixXd& N) {
    if (H.rows() != H.cols() || N.rows() != N.cols() || H.rows() != N.rows()) {
        throw PreconditionError("solve_ground: matrices must be square and of equal size");
    }
    if (H.rows() == 0) throw DegenerateInputError("solve_ground: empty basis");
    const Eigen::MatrixXd X = regularized_map(N);
    const Eigen::MatrixXd Hr = X.transpose() * H * X;
    GroundSolution g;
    const Eigen::VectorXd v = lowest_vector(0.5 * (Hr + Hr.transpose()), g.energy);
    g.coefficients = X * v;
    g.coefficients /= std::sqrt(g.coefficients.dot(N * g.coefficients));
    g.rank = X.cols();
    return g;
}

GrowthResult grow_basis(const CGCalculus& calc, std::size_t budget, std::uint64_t seed, const GrowthOptions& opt) {
    if (budget < 1) throw PreconditionError("grow_basis: budget must be >= 1");
    if (opt.candidates_per_step < 1) throw PreconditionError("grow_basis: need at least one candidate per step");
    GrowthResult out;
    out.basis.symmetric = calc.symmetric();
    out.basis.seed = seed;
    std::mt19937_64 rng(seed);
    const double lambda = calc.lambda();
    MatrixSet m{Eigen::MatrixXd(0, 0), Eigen::MatrixXd(0, 0), Eigen::MatrixXd(0, 0)};
    Spectrum spec{Eigen::VectorXd(0), Eigen::MatrixXd(0, 0)};
    double energy = std::numeric_limits<double>::infinity();
    std::size_t failed = 0;

    struct Candidate {
        Eigen::Matrix2d A;
        Eigen::VectorXd n, t, v;
        CGCalculus::Element self;
        double energy = std::numeric_limits<double>::infinity();
    };

    while (out.basis.size() < budget && failed < opt.max_failed_steps) {
        std::vector<Candidate> cands(opt.candidates_per_step);
        for (auto& c : cands) c.A = random_candidate(rng, calc, opt);
        const auto size = static_cast<Eigen::Index>(out.basis.size());
        parallel_for(cands.size(), [&](std::size_t ci) {
            auto& c = cands[ci];
            c.n.resize(size);
            c.t.resize(size);
            c.v.resize(size);
            for (Eigen::Index k = 0; k < size; ++k) {
                const auto e = calc.element(out.basis.A[static_cast<std::size_t>(k)], c.A);
                c.n(k) = e.overlap;
                c.t(k) = e.kinetic;
                c.v(k) = e.potential;
            }
            c.self = calc.element(c.A, c.A);
            const double h00 = c.self.kinetic - lambda * c.self.potential;
            const double n00 = c.self.overlap;
            if (size == 0) {
                c.energy = h00 / n00;
                return;
            }
            const Eigen::VectorXd hcol = c.t - lambda * c.v;
            const Eigen::VectorXd ni = spec.vectors.transpose() * c.n;
            const Eigen::VectorXd hi = spec.vectors.transpose() * hcol;
            const double d = n00 - ni.squaredNorm();
            if (!(d > 1e-8 * n00)) return;  // numerically dependent on the basis
            const Eigen::VectorXd b = (hi - spec.values.cwiseProduct(ni)) / std::sqrt(d);
            const double a = (h00 - 2.0 * ni.dot(hi) + ni.cwiseProduct(ni).dot(spec.values)) / d;
            c.energy = bordered_lowest(spec.values, b, a);
        });
        std::size_t best = 0;
        for (std::size_t ci = 1; ci < cands.size(); ++ci) {
            if (cands[ci].energy < cands[best].energy) best = ci;
        }
        const auto& c = cands[best];
        if (!(c.energy < energy - opt.accept_threshold)) {
            ++failed;
            continue;
        }
        const Eigen::Index n = size + 1;
        const MatrixSet previous = m;
        auto extend = [&](Eigen::MatrixXd& M, const Eigen::VectorXd& col, double diag) {
            M.conservativeResize(n, n);
            M.block(0, size, size, 1) = col;
            M.block(size, 0, 1, size) = col.transpose();
            M(size, size) = diag;
        };
        extend(m.N, c.n, c.self.overlap);
        extend(m.T, c.t, c.self.kinetic);
        extend(m.V, c.v, c.self.potential);
        auto trial = full_spectrum(m.hamiltonian(lambda), m.N);
        // overlap truncation can undo the bordered estimate
        if (!(trial.values(0) < energy - opt.accept_threshold)) {
            m = previous;
            ++failed;
            continue;
        }
        failed = 0;
        out.basis.A.push_back(c.A);
        spec = std::move(trial);
        energy = spec.values(0);
        out.energy_trace.push_back(energy);
    }
    out.energy = energy;
    return out;
}

GrowthResult grow_basis(const ParticleSystem& system, std::size_t budget, std::uint64_t seed, bool symmetric,
                        const GrowthOptions& options) {
    return grow_basis(CGCalculus(system, symmetric), budget, seed, options);
}

std::vector<double> default_tail_radii(double length_scale) {
    return {0.0, length_scale, 2.0 * length_scale, 4.0 * length_scale, 8.0 * length_scale, 16.0 * length_scale};
}

std::pair<std::vector<TailPoint>, TailPoint> tail_masses(const CorrelatedGaussianBasis& basis, const CGCalculus& calc,
                                                         const Eigen::VectorXd& coefficients,
                                                         const Eigen::Matrix2d& second_moment,
                                                         const std::vector<double>& radii, const TailOptions& options) {
    if (static_cast<std::size_t>(coefficients.size()) != basis.size()) {
        throw PreconditionError("tail_masses: coefficient count differs from basis size");
    }
    // Expanded Gaussians: psi(q) = sum_t coef_t exp(-(a |x|^2 + 2 b x.y + c |y|^2) / 2).
    std::vector<std::array<double, 4>> terms;
    for (std::size_t k = 0; k < basis.size(); ++k) {
        for (const auto& A : calc.images(basis.A[k])) {
            terms.push_back({coefficients(static_cast<Eigen::Index>(k)), A(0, 0), A(0, 1), A(1, 1)});
        }
    }
    // Defensive mixture: the moment-matched Gaussian plus an isotropic one as
    // broad as the widest basis element, which keeps |psi|^2 / g bounded.
    double a_min = std::numeric_limits<double>::infinity();
    for (const auto& A : basis.A) {
        a_min = std::min(a_min, Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(A, Eigen::EigenvaluesOnly).eigenvalues()(0));
    }
    const Eigen::Matrix2d cov_bulk = options.inflation * second_moment / 3.0;
    const Eigen::Matrix2d cov_wide = Eigen::Matrix2d::Identity() / (2.0 * a_min);
    struct Component {
        Eigen::Matrix2d L;
        Eigen::Matrix2d P;
        double log_norm;
    };
    auto make = [](const Eigen::Matrix2d& cov) {
        const Eigen::LLT<Eigen::Matrix2d> llt(cov);
        if (llt.info() != Eigen::Success) throw NumericalError("tail_masses: covariance not positive definite");
        return Component{llt.matrixL(), cov.inverse(),
                         std::log(0.5) - 3.0 * std::log(2.0 * std::numbers::pi) - 1.5 * std::log(cov.determinant())};
    };
    const std::array<Component, 2> comp{make(cov_bulk), make(cov_wide)};
    std::vector<double> r2(radii.size());
    for (std::size_t k = 0; k < radii.size(); ++k) r2[k] = radii[k] * radii[k];
    const std::size_t outputs = radii.size() + 2;  // weight, weight * 1(rho > R) ..., weight * rho^2

    auto integrand = [&](std::span<const double> u, std::span<double> out) {
        const auto& L = comp[u[6] < 0.5 ? 0 : 1].L;
        std::array<double, 3> x, y;
        for (int c = 0; c < 3; ++c) {
            const double z1 = inverse_normal_cdf(u[static_cast<std::size_t>(c)]);
            const double z2 = inverse_normal_cdf(u[static_cast<std::size_t>(c + 3)]);
            x[static_cast<std::size_t>(c)] = L(0, 0) * z1;
            y[static_cast<std::size_t>(c)] = L(1, 0) * z1 + L(1, 1) * z2;
        }
        double xx = 0.0, xy = 0.0, yy = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            xx += x[c] * x[c];
            xy += x[c] * y[c];
            yy += y[c] * y[c];
        }
        double psi = 0.0;
        for (const auto& t : terms) psi += t[0] * std::exp(-0.5 * (t[1] * xx + 2.0 * t[2] * xy + t[3] * yy));
        std::array<double, 2> lg;
        for (std::size_t i = 0; i < 2; ++i) {
            const auto& P = comp[i].P;
            lg[i] = comp[i].log_norm - 0.5 * (P(0, 0) * xx + 2.0 * P(0, 1) * xy + P(1, 1) * yy);
        }
        const double top = std::max(lg[0], lg[1]);
        const double log_g = top + std::log(std::exp(lg[0] - top) + std::exp(lg[1] - top));
        const double w = psi * psi * std::exp(-log_g);
        const double rho2 = xx + yy;
        out[0] = w;
        for (std::size_t k = 0; k < r2.size(); ++k) out[k + 1] = rho2 > r2[k] ? w : 0.0;
        out[outputs - 1] = w * rho2;
    };
    const auto means = qmc_replicate_means(7, options.points, options.replicates, options.seed, outputs, integrand);
    const auto nr = static_cast<double>(options.replicates);
    auto ratio_stats = [&](std::size_t k) {
        double mean = 0.0;
        std::vector<double> ratios;
        for (const auto& m : means) ratios.push_back(m[k] / m[0]);
        for (double r : ratios) mean += r;
        mean /= nr;
        double var = 0.0;
        for (double r : ratios) var += (r - mean) * (r - mean);
        return std::pair<double, double>{mean, std::sqrt(var / (nr - 1.0) / nr)};
    };
    std::vector<TailPoint> tail;
    for (std::size_t k = 0; k < radii.size(); ++k) {
        const auto [mass, se] = ratio_stats(k + 1);
        tail.push_back({radii[k], radii[k] == 0.0 ? 1.0 : mass, radii[k] == 0.0 ? 0.0 : se});
    }
    const auto [rho2, se] = ratio_stats(outputs - 1);
    return {tail, TailPoint{0.0, rho2, se}};
}

double min_pair_critical_coupling(const ParticleSystem& system) {
    double best = std::numeric_limits<double>::infinity();
    for (Pair p : kAllPairs) {
        const auto& v = system.potential(p);
        if (v.is_zero()) continue;
        best = std::min(best, critical_coupling(v, jacobi_frame(system, p)));
    }
    return best;
}

SweepRecord evaluate_record(const CorrelatedGaussianBasis& basis, const CGCalculus& calc, const MatrixSet& matrices,
                            double lambda, const ParticleSystem& system, const std::vector<double>& tail_radii,
                            const TailOptions& tail) {
    SweepRecord r;
    r.lambda = lambda;
    r.basis_size = basis.size();
    r.seed = basis.seed;
    r.eps_subcritical = subcriticality_margin(system.with_lambda(lambda)).epsilon;
    const auto g = solve_ground(matrices.hamiltonian(lambda), matrices.N);
    r.E3 = g.energy;
    r.bound = g.energy < 0.0;
    if (!r.bound) return r;
    r.k = std::sqrt(-g.energy);

    const std::size_t n = basis.size();
    std::vector<Eigen::Matrix2d> moments(n * n);
    Eigen::MatrixXd K2(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = 0; j <= i; ++j) {
            moments[i * n + j] = calc.moment_elements(basis.A[i], basis.A[j]);
            K2(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                calc.kinetic_squared(basis.A[i], basis.A[j]);
        }
    });
    Eigen::Matrix2d moment = Eigen::Matrix2d::Zero();
    double h0sq = 0.0;
    const Eigen::VectorXd& c = g.coefficients;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double f = (i == j ? 1.0 : 2.0) * c(static_cast<Eigen::Index>(i)) * c(static_cast<Eigen::Index>(j));
            moment += f * moments[i * n + j];
            h0sq += f * K2(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
    }
    r.r2_x = moment(0, 0);
    r.r2_y = moment(1, 1);
    r.rho2 = r.r2_x + r.r2_y;
    r.kinetic_norm = std::sqrt(std::max(h0sq, 0.0));
    if (!tail_radii.empty()) {
        const auto [points, rho2] = tail_masses(basis, calc, c, moment, tail_radii, tail);
        r.tail = points;
        r.rho2_qmc = rho2.mass;
        r.rho2_qmc_error = rho2.std_error;
    }
    return r;
}

SweepRecord ground_energy(const ParticleSystem& system, std::size_t budget, std::uint64_t seed, bool symmetric,
                          const GrowthOptions& growth, const TailOptions& tail) {
    const CGCalculus calc(system, symmetric);
    const auto grown = grow_basis(calc, budget, seed, growth);
    const auto m = assemble(grown.basis, calc);
    return evaluate_record(grown.basis, calc, m, system.lambda(), system, default_tail_radii(calc.length_scale()),
                           tail);
}

CriticalCoupling3 critical_coupling_fixed_basis(const MatrixSet& matrices, double lambda_lo, double lambda_hi,
                                                double tolerance_energy, double width) {
    const Eigen::MatrixXd X = regularized_map(matrices.N);
    const Eigen::MatrixXd Tr = X.transpose() * matrices.T * X;
    const Eigen::MatrixXd Vr = X.transpose() * matrices.V * X;
    auto bound = [&](double lambda) {
        const Eigen::MatrixXd H = Tr - lambda * Vr;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success) throw NumericalError("critical_coupling_3body: eigen-solver failed");
        return es.eigenvalues()(0) < -tolerance_energy;
    };
    if (bound(lambda_lo) || !bound(lambda_hi)) {
        throw NumericalError("critical_coupling_3body: no sign change of E3 + tol in the scan range");
    }
    while (lambda_hi - lambda_lo > width) {
        const double mid = 0.5 * (lambda_lo + lambda_hi);
        (bound(mid) ? lambda_hi : lambda_lo) = mid;
    }
    CriticalCoupling3 c;
    c.lambda_lo = lambda_lo;
    c.lambda_hi = lambda_hi;
    c.lambda_cr = 0.5 * (lambda_lo + lambda_hi);
    c.tolerance_energy = tolerance_energy;
    return c;
}

CriticalSearch critical_search(const ParticleSystem& system, std::size_t budget, std::uint64_t seed, bool symmetric,
                               const CriticalOptions& options, const GrowthOptions& growth) {
    const double lambda_star = min_pair_critical_coupling(system);
    if (!std::isfinite(lambda_star)) throw DegenerateInputError("critical_coupling_3body: every pair is decoupled");
    double e_scale = 0.0;
    for (Pair p : kAllPairs) {
        const auto& v = system.potential(p);
        if (v.is_zero()) continue;
        const auto e2 = twobody_binding_energy(v, jacobi_frame(system, p), 2.0 * lambda_star);
        if (e2) e_scale = std::max(e_scale, std::abs(*e2));
    }
    if (!(e_scale > 0.0)) throw NumericalError("critical_coupling_3body: no two-body energy scale at 2 lambda*");
    const double tol = options.energy_fraction * e_scale;
    const double width = options.width_fraction * lambda_star;

    CriticalSearch out;
    out.energy_scale = e_scale;
    auto stage = [&](double lambda_ref) {
        const CGCalculus calc(system.with_lambda(lambda_ref), symmetric);
        out.basis = grow_basis(calc, budget, seed, growth).basis;
        out.matrices = assemble(out.basis, calc);
        auto c = critical_coupling_fixed_basis(out.matrices, 0.0, lambda_ref, tol, width);
        c.lambda_star = lambda_star;
        c.reference_lambda = lambda_ref;
        c.basis_size = out.basis.size();
        return c;
    };
    out.coupling = stage(options.reference_fraction * lambda_star);
    out.first_stage_lambda_cr = out.coupling.lambda_cr;
    if (options.refine_offset > 0.0) {
        const double ref = out.coupling.lambda_hi + options.refine_offset * lambda_star;
        if (ref < options.reference_fraction * lambda_star) {
            const auto first = out;
            auto refined = stage(ref);
            // keep whichever basis binds at the lower coupling
            if (refined.lambda_cr > first.coupling.lambda_cr) {
                out = first;
            } else {
                out.coupling = refined;
            }
        }
    }
    return out;
}

CriticalCoupling3 critical_coupling_3body(const ParticleSystem& system, std::size_t budget, std::uint64_t seed,
                                          bool symmetric, const CriticalOptions& options,
                                          const GrowthOptions& growth) {
    return critical_search(system, budget, seed, symmetric, options, growth).coupling;
}

double coupling_for_energy(const MatrixSet& matrices, double energy, double lambda_lo, double lambda_hi,
                           double rel_width) {
    if (!(energy < 0.0)) throw PreconditionError("coupling_for_energy: target energy must be negative");
    if (!(lambda_hi > lambda_lo)) throw PreconditionError("coupling_for_energy: empty bracket");
    const Eigen::MatrixXd X = regularized_map(matrices.N);
    const Eigen::MatrixXd Tr = X.transpose() * matrices.T * X;
    const Eigen::MatrixXd Vr = X.transpose() * matrices.V * X;
    auto lowest = [&](double lambda) {
        const Eigen::MatrixXd H = Tr - lambda * Vr;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success) throw NumericalError("coupling_for_energy: eigen-solver failed");
        return es.eigenvalues()(0);
    };
    double lo = lambda_lo, hi = lambda_hi;
    if (lowest(lo) <= energy || lowest(hi) > energy) {
        throw NumericalError("coupling_for_energy: target energy not bracketed");
    }
    while (hi - lo > rel_width * hi) {
        const double mid = 0.5 * (lo + hi);
        (lowest(mid) > energy ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::string_view to_string(SpreadingVerdict v) {
    switch (v) {
        case SpreadingVerdict::non_spreading_consistent: return "non-spreading-consistent";
        case SpreadingVerdict::spreading_consistent: return "spreading-consistent";
        case SpreadingVerdict::inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

SpreadingReport spreading_diagnostic(std::vector<SweepRecord> records) {
    std::erase_if(records, [](const SweepRecord& r) { return !r.bound; });
    if (records.size() < 4) throw PreconditionError("spreading_diagnostic: fewer than 4 bound records");
    std::stable_sort(records.begin(), records.end(),
                     [](const SweepRecord& a, const SweepRecord& b) { return std::abs(a.E3) > std::abs(b.E3); });
    SpreadingReport rep;
    for (const auto& t : records.front().tail) rep.radii.push_back(t.R);
    rep.tail_sequences.assign(rep.radii.size(), {});
    for (const auto& r : records) {
        if (r.tail.size() != rep.radii.size()) throw PreconditionError("spreading_diagnostic: inconsistent tail radii");
        for (std::size_t k = 0; k < r.tail.size(); ++k) rep.tail_sequences[k].push_back(r.tail[k].mass);
    }
    rep.subcritical_throughout = std::all_of(records.begin(), records.end(), [](const SweepRecord& r) { return r.eps_subcritical > 0.0; });

    for (std::size_t k = 0; k < rep.radii.size(); ++k) {
        const double sup = *std::max_element(rep.tail_sequences[k].begin(), rep.tail_sequences[k].end());
        if (sup <= 0.5 && !rep.R0) {
            rep.R0 = rep.radii[k];
            rep.sup_tail_at_R0 = sup;
        }
    }
    bool near_one = !rep.radii.empty();
    for (std::size_t k = 0; k < rep.radii.size(); ++k) near_one = near_one && rep.tail_sequences[k].back() >= 0.9;
    if (rep.R0) {
        rep.verdict = SpreadingVerdict::non_spreading_consistent;
    } else if (near_one) {
        rep.verdict = SpreadingVerdict::spreading_consistent;
    }

    const auto& last = records.back();
    const double target = 100.0 * std::abs(last.E3) * (1.0 - 1e-6);
    const SweepRecord* ref = nullptr;
    for (const auto& r : records) {
        if (std::abs(r.E3) >= target && (!ref || std::abs(r.E3) < std::abs(ref->E3))) ref = &r;
    }
    if (ref) {
        rep.rho2_ratio = last.rho2 / ref->rho2;
        rep.rho2_ratio_energy = std::abs(ref->E3);
    }
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& r : records) {
        const double x = -std::log(std::abs(r.E3)), y = std::log(r.rho2);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const auto n = static_cast<double>(records.size());
    rep.exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);

    std::vector<double> kin;
    for (const auto& r : records) kin.push_back(r.kinetic_norm);
    rep.kinetic_max = *std::max_element(kin.begin(), kin.end());
    std::sort(kin.begin(), kin.end());
    rep.kinetic_median = kin.size() % 2 ? kin[kin.size() / 2] : 0.5 * (kin[kin.size() / 2 - 1] + kin[kin.size() / 2]);
    rep.kinetic_bounded = rep.kinetic_max <= 2.0 * rep.kinetic_median;
    return rep;
}

namespace {

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::string number(double v) {
    if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void to_json(nlohmann::json& j, const TailPoint& t) { j = nlohmann::json{{"R", t.R}, {"T", t.mass}, {"std_error", t.std_error}}; }

void to_json(nlohmann::json& j, const SweepRecord& r) {
    j = nlohmann::json{{"lambda", r.lambda},
                       {"bound", r.bound},
                       {"E3", r.E3},
                       {"k", r.k},
                       {"r2_x", r.r2_x},
                       {"r2_y", r.r2_y},
                       {"rho2", r.rho2},
                       {"rho2_qmc", r.rho2_qmc},
                       {"rho2_qmc_error", r.rho2_qmc_error},
                       {"tail", r.tail},
                       {"eps_subcritical", finite_or_null(r.eps_subcritical)},
                       {"kinetic_norm", r.kinetic_norm},
                       {"basis_size", r.basis_size},
                       {"seed", r.seed}};
}

void to_json(nlohmann::json& j, const CriticalCoupling3& c) {
    j = nlohmann::json{{"lambda_lo", c.lambda_lo},
                       {"lambda_hi", c.lambda_hi},
                       {"lambda_cr", c.lambda_cr},
                       {"bracket_width", c.lambda_hi - c.lambda_lo},
                       {"tolerance_energy", c.tolerance_energy},
                       {"lambda_star", c.lambda_star},
                       {"reference_lambda", c.reference_lambda},
                       {"basis_size", c.basis_size},
                       {"upper_bound_derived", c.upper_bound_derived}};
}

void to_json(nlohmann::json& j, const SpreadingReport& r) {
    j = nlohmann::json{{"verdict", to_string(r.verdict)},
                       {"radii", r.radii},
                       {"tail_sequences", r.tail_sequences},
                       {"R0", r.R0 ? nlohmann::json(*r.R0) : nlohmann::json(nullptr)},
                       {"sup_tail_at_R0", r.sup_tail_at_R0},
                       {"rho2_ratio", r.rho2_ratio},
                       {"rho2_ratio_energy", r.rho2_ratio_energy},
                       {"exponent", r.exponent},
                       {"kinetic_max", r.kinetic_max},
                       {"kinetic_median", r.kinetic_median},
                       {"kinetic_bounded", r.kinetic_bounded},
                       {"subcritical_throughout", r.subcritical_throughout}};
}

std::vector<std::string> sweep_csv_fields(const std::vector<double>& tail_radii) {
    std::vector<std::string> f{"lambda", "bound", "E3", "k", "r2_x", "r2_y", "rho2", "eps_subcritical", "kinetic_norm",
                               "basis_size"};
    for (double R : tail_radii) f.push_back("T(" + number(R) + ")");
    return f;
}

std::vector<std::string> sweep_csv_values(const SweepRecord& r) {
    std::vector<std::string> v{number(r.lambda), r.bound ? "1" : "0", number(r.E3),          number(r.k),
                               number(r.r2_x),   number(r.r2_y),      number(r.rho2),        number(r.eps_subcritical),
                               number(r.kinetic_norm), std::to_string(r.basis_size)};
    for (const auto& t : r.tail) v.push_back(number(t.mass));
    return v;
}

}  // namespace threshold_lab
