#include "threshold_lab/quadrature.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "threshold_lab/errors.hpp"

namespace threshold_lab {

namespace {

struct ReferenceRule {
    std::vector<double> x;
    std::vector<double> w;
};

// Newton iteration on P_n from the Tricomi initial guess; nodes ascending on [-1, 1].
ReferenceRule compute_reference(std::size_t n) {
    ReferenceRule rule{std::vector<double>(n), std::vector<double>(n)};
    const std::size_t half = (n + 1) / 2;
    for (std::size_t i = 0; i < half; ++i) {
        double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0;
            double p1 = 0.0;
            for (std::size_t j = 1; j <= n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / static_cast<double>(j);
            }
            dp = static_cast<double>(n) * (z * p0 - p1) / (z * z - 1.0);
            const double step = p0 / dp;
            z -= step;
            if (std::abs(step) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        rule.x[i] = -z;
        rule.x[n - 1 - i] = z;
        rule.w[i] = w;
        rule.w[n - 1 - i] = w;
    }
    if (n % 2 == 1) rule.x[n / 2] = 0.0;
    return rule;
}

const ReferenceRule& reference_rule(std::size_t n) {
    static std::mutex mutex;
    static std::map<std::size_t, std::unique_ptr<ReferenceRule>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<ReferenceRule>(compute_reference(n));
    return *slot;
}

}  // namespace

QuadratureRule gauss_legendre(std::size_t n, double a, double b) {
    if (n == 0) throw PreconditionError("gauss_legendre: n must be >= 1");
    if (!(a < b)) throw PreconditionError("gauss_legendre: requires a < b");
    const auto& ref = reference_rule(n);
    QuadratureRule rule;
    rule.lower = a;
    rule.upper = b;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    for (std::size_t i = 0; i < n; ++i) {
        rule.nodes[i] = mid + half * ref.x[i];
        rule.weights[i] = half * ref.w[i];
    }
    return rule;
}

QuadratureRule semi_infinite_grid(std::size_t n, double scale, double origin) {
    if (!(scale > 0.0)) throw PreconditionError("semi_infinite_grid: scale must be positive");
    const auto unit = gauss_legendre(n, 0.0, 1.0);
    QuadratureRule rule;
    rule.lower = origin;
    rule.upper = std::numeric_limits<double>::infinity();
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = unit.nodes[i];
        const double s = 1.0 - t;
        rule.nodes[i] = origin + scale * t / s;
        rule.weights[i] = unit.weights[i] * scale / (s * s);
    }
    return rule;
}

QuadratureRule composite_gauss_legendre(std::span<const double> breaks, std::size_t n_per_panel) {
    if (breaks.size() < 2) throw PreconditionError("composite_gauss_legendre: need at least two breakpoints");
    QuadratureRule rule;
    rule.lower = breaks.front();
    rule.upper = breaks.back();
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        const auto panel = gauss_legendre(n_per_panel, breaks[k], breaks[k + 1]);
        rule.nodes.insert(rule.nodes.end(), panel.nodes.begin(), panel.nodes.end());
        rule.weights.insert(rule.weights.end(), panel.weights.begin(), panel.weights.end());
    }
    return rule;
}

QuadratureRule concatenate(const QuadratureRule& head, const QuadratureRule& tail) {
    if (head.upper != tail.lower) throw PreconditionError("concatenate: rules are not adjacent");
    QuadratureRule rule = head;
    rule.upper = tail.upper;
    rule.nodes.insert(rule.nodes.end(), tail.nodes.begin(), tail.nodes.end());
    rule.weights.insert(rule.weights.end(), tail.weights.begin(), tail.weights.end());
    return rule;
}

double integrate_checked(const QuadratureRule& rule, const std::function<double(double)>& f,
                         double tail_tolerance) {
    double total = 0.0;
    double outermost = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) {
        const double term = rule.weights[i] * f(rule.nodes[i]);
        if (!std::isfinite(term)) throw AccuracyError("integrate_checked: non-finite integrand value");
        total += term;
        if (i + 1 == rule.size()) outermost = term;
    }
    if (rule.semi_infinite() && std::abs(outermost) > tail_tolerance * std::max(std::abs(total), 1e-300)) {
        throw AccuracyError("integrate_checked: integrand does not decay on the semi-infinite domain");
    }
    return total;
}

SelfConvergence self_convergence(const std::function<QuadratureRule(std::size_t)>& make, std::size_t n,
                                 const std::function<double(double)>& f) {
    SelfConvergence result;
    result.coarse = make(n).integrate(f);
    result.fine = make(2 * n).integrate(f);
    result.delta = std::abs(result.fine - result.coarse);
    return result;
}

}  // namespace threshold_lab
