#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace threshold_lab {

/// Nodes and positive weights on [lower, upper]; upper may be +infinity.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
    double lower = 0.0;
    double upper = 0.0;

    std::size_t size() const { return nodes.size(); }
    bool semi_infinite() const { return upper == std::numeric_limits<double>::infinity(); }

    template <class F>
    double integrate(F&& f) const {
        double sum = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) sum += weights[i] * f(nodes[i]);
        return sum;
    }
};

inline constexpr std::size_t kDefaultRadialPoints = 128;
inline constexpr double kDefaultScaleFactor = 3.0;

/// Affinely mapped Gauss-Legendre rule; n >= 1, a < b.
QuadratureRule gauss_legendre(std::size_t n, double a, double b);

/// Rule on [origin, inf) from r = origin + scale * t / (1 - t), t in (0, 1).
QuadratureRule semi_infinite_grid(std::size_t n, double scale, double origin = 0.0);

/// n_per_panel Gauss-Legendre points on every [breaks[k], breaks[k+1]].
QuadratureRule composite_gauss_legendre(std::span<const double> breaks, std::size_t n_per_panel);

/// Nodes of `head` followed by nodes of `tail`; head.upper must equal tail.lower.
QuadratureRule concatenate(const QuadratureRule& head, const QuadratureRule& tail);

/// Integrates f with `rule`. On semi-infinite rules the contribution of the
/// outermost node is compared against the total; an integrand that does not
/// decay (constant probes, slow power laws) raises AccuracyError.
double integrate_checked(const QuadratureRule& rule, const std::function<double(double)>& f,
                         double tail_tolerance = 1e-10);

struct SelfConvergence {
    double coarse = 0.0;
    double fine = 0.0;
    double delta = 0.0;  // |fine - coarse|
};

/// Integrates with make(n) and make(2n) and reports the difference.
SelfConvergence self_convergence(const std::function<QuadratureRule(std::size_t)>& make, std::size_t n,
                                 const std::function<double(double)>& f);

}  // namespace threshold_lab
