#include "threshold_lab/gaussian_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "threshold_lab/errors.hpp"
#include "threshold_lab/quadrature.hpp"

namespace threshold_lab {

double GaussianFit::operator()(double r) const {
    double v = 0.0;
    for (const auto& t : terms) v += t.weight * std::exp(-(r / t.width) * (r / t.width));
    return v;
}

Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int max_iterations) {
    const Eigen::Index n = A.cols();
    if (A.rows() != b.size()) throw PreconditionError("nnls: dimension mismatch");
    if (max_iterations <= 0) max_iterations = static_cast<int>(3 * n + 10);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<bool> passive(static_cast<std::size_t>(n), false);
    const double tol = 10.0 * std::numeric_limits<double>::epsilon() * A.norm() * std::max<Eigen::Index>(A.rows(), n);

    auto solve_passive = [&](Eigen::VectorXd& z) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
        }
        Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) Ap.col(static_cast<Eigen::Index>(k)) = A.col(idx[k]);
        const Eigen::VectorXd zp = Ap.colPivHouseholderQr().solve(b);
        z.setZero(n);
        for (std::size_t k = 0; k < idx.size(); ++k) z(idx[k]) = zp(static_cast<Eigen::Index>(k));
    };

    for (int outer = 0; outer < max_iterations; ++outer) {
        const Eigen::VectorXd w = A.transpose() * (b - A * x);
        Eigen::Index best = -1;
        double wmax = tol;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!passive[static_cast<std::size_t>(j)] && w(j) > wmax) {
                wmax = w(j);
                best = j;
            }
        }
        if (best < 0) return x;
        passive[static_cast<std::size_t>(best)] = true;
        Eigen::VectorXd z;
        for (int inner = 0; inner < max_iterations; ++inner) {
            solve_passive(z);
            bool feasible = true;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) feasible = false;
            }
            if (feasible) break;
            double step = 1.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) step = std::min(step, x(j) / (x(j) - z(j)));
            }
            x += step * (z - x);
            for (Eigen::Index j = 0; j < n; ++j) {
                if (passive[static_cast<std::size_t>(j)] && std::abs(x(j)) <= tol) {
                    passive[static_cast<std::size_t>(j)] = false;
                    x(j) = 0.0;
                }
            }
        }
        x = z;
    }
    throw NumericalError("nnls: iteration limit reached");
}

namespace {

struct FitGrid {
    std::vector<double> r;
    std::vector<double> sqrt_w;  // sqrt(weight * r^2)
};

FitGrid fit_grid(const PairPotential& v) {
    const double outer = 2.0 * v.effective_radius(1e-10);
    std::vector<double> breaks{0.0};
    const auto jump = v.jump_radius();
    const int panels = 64;
    for (int k = 1; k <= panels; ++k) {
        const double b = outer * k / panels;
        if (jump && *jump > breaks.back() && *jump < b) breaks.push_back(*jump);
        breaks.push_back(b);
    }
    const auto rule = composite_gauss_legendre(breaks, 12);
    FitGrid g;
    for (std::size_t i = 0; i < rule.size(); ++i) {
        g.r.push_back(rule.nodes[i]);
        g.sqrt_w.push_back(std::sqrt(rule.weights[i]) * rule.nodes[i]);
    }
    return g;
}

// Residual of the NNLS fit as a function of the log-widths.
struct WidthResidual {
    using Scalar = double;
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

    const FitGrid* grid = nullptr;
    const Eigen::VectorXd* target = nullptr;
    Eigen::Index terms = 0;

    int inputs() const { return static_cast<int>(terms); }
    int values() const { return static_cast<int>(target->size()); }

    Eigen::MatrixXd design(const Eigen::VectorXd& log_width) const {
        const auto m = target->size();
        Eigen::MatrixXd A(m, log_width.size());
        for (Eigen::Index j = 0; j < log_width.size(); ++j) {
            const double w = std::exp(log_width(j));
            for (Eigen::Index i = 0; i < m; ++i) {
                const double t = grid->r[static_cast<std::size_t>(i)] / w;
                A(i, j) = grid->sqrt_w[static_cast<std::size_t>(i)] * std::exp(-t * t);
            }
        }
        return A;
    }

    int operator()(const Eigen::VectorXd& log_width, Eigen::VectorXd& fvec) const {
        const Eigen::MatrixXd A = design(log_width);
        fvec = A * nnls(A, *target) - *target;
        return 0;
    }
};

}  // namespace

GaussianFit fit_gaussian_sum(const PairPotential& potential, std::size_t max_terms, double tolerance) {
    GaussianFit fit;
    if (potential.is_zero()) {
        fit.exact = true;
        return fit;
    }
    if (potential.kind() == PotentialKind::gaussian) {
        fit.terms.push_back({potential.amplitude(), potential.range()});
        fit.exact = true;
        return fit;
    }
    if (max_terms == 0) throw PreconditionError("fit_gaussian_sum: max_terms must be positive");

    const auto grid = fit_grid(potential);
    const double scale = potential.kind() == PotentialKind::tabulated ? potential.effective_radius(1e-10) / 3.0
                                                                      : potential.range();
    std::vector<double> widths;
    const int dictionary = 64;
    for (int k = 0; k < dictionary; ++k) widths.push_back(scale * 1e-2 * std::pow(3e3, static_cast<double>(k) / (dictionary - 1)));

    const auto m = static_cast<Eigen::Index>(grid.r.size());
    Eigen::VectorXd b(m);
    for (Eigen::Index i = 0; i < m; ++i) b(i) = grid.sqrt_w[i] * potential(grid.r[i]);
    auto column = [&](double width) {
        Eigen::VectorXd c(m);
        for (Eigen::Index i = 0; i < m; ++i) c(i) = grid.sqrt_w[i] * std::exp(-(grid.r[i] / width) * (grid.r[i] / width));
        return c;
    };

    std::vector<double> active = widths;
    Eigen::VectorXd x;
    for (;;) {
        Eigen::MatrixXd A(m, static_cast<Eigen::Index>(active.size()));
        for (std::size_t j = 0; j < active.size(); ++j) A.col(static_cast<Eigen::Index>(j)) = column(active[j]);
        x = nnls(A, b);
        std::vector<double> kept;
        std::vector<double> size;
        for (std::size_t j = 0; j < active.size(); ++j) {
            if (x(static_cast<Eigen::Index>(j)) > 0.0) {
                kept.push_back(active[j]);
                size.push_back(x(static_cast<Eigen::Index>(j)) * A.col(static_cast<Eigen::Index>(j)).norm());
            }
        }
        if (kept.size() <= max_terms && kept.size() == active.size()) break;
        if (kept.size() > max_terms) {
            const auto smallest = std::min_element(size.begin(), size.end()) - size.begin();
            kept.erase(kept.begin() + smallest);
        }
        active = kept;
    }
    if (active.size() > 1) {
        WidthResidual functor;
        functor.grid = &grid;
        functor.target = &b;
        functor.terms = static_cast<Eigen::Index>(active.size());
        Eigen::VectorXd logw(functor.terms);
        for (Eigen::Index j = 0; j < functor.terms; ++j) logw(j) = std::log(active[static_cast<std::size_t>(j)]);
        Eigen::VectorXd before;
        functor(logw, before);
        Eigen::NumericalDiff<WidthResidual> numeric(functor);
        Eigen::LevenbergMarquardt<Eigen::NumericalDiff<WidthResidual>> lm(numeric);
        Eigen::VectorXd refined = logw;
        lm.minimize(refined);
        Eigen::VectorXd after;
        functor(refined, after);
        if (refined.allFinite() && after.norm() < before.norm()) logw = refined;
        const Eigen::MatrixXd A = functor.design(logw);
        x = nnls(A, b);
        for (Eigen::Index j = 0; j < functor.terms; ++j) active[static_cast<std::size_t>(j)] = std::exp(logw(j));
    }
    for (std::size_t j = 0; j < active.size(); ++j) {
        if (x(static_cast<Eigen::Index>(j)) > 0.0) fit.terms.push_back({x(static_cast<Eigen::Index>(j)), active[j]});
    }

    double num = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double d = grid.sqrt_w[i] * (potential(grid.r[i]) - fit(grid.r[i]));
        num += d * d;
    }
    fit.relative_residual = std::sqrt(num) / b.norm();
    if (fit.relative_residual > tolerance) {
        throw ValidationError("fit_gaussian_sum: residual " + std::to_string(fit.relative_residual) +
                              " exceeds tolerance for " + std::string(to_string(potential.kind())) + " potential");
    }
    return fit;
}

}  // namespace threshold_lab
