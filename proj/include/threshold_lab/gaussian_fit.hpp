#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "threshold_lab/model.hpp"

namespace threshold_lab {

/// weight * exp(-(r / width)^2)
struct GaussianTerm {
    double weight = 0.0;
    double width = 1.0;
};

struct GaussianFit {
    std::vector<GaussianTerm> terms;
    double relative_residual = 0.0;  // L2(r^2 dr) norm of V - fit over that of V
    bool exact = false;              // gaussian kind or zero potential

    double operator()(double r) const;
};

inline constexpr std::size_t kMaxGaussianTerms = 8;
inline constexpr double kGaussianFitTolerance = 1e-3;

/// Nonnegative least squares min |A x - b|, x >= 0 (Lawson-Hanson active set).
Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int max_iterations = 0);

/// Nonnegative Gaussian-sum approximation of V with at most max_terms terms.
/// Gaussian profiles and decoupled pairs pass through exactly. Raises
/// ValidationError when the residual exceeds tolerance.
GaussianFit fit_gaussian_sum(const PairPotential& potential, std::size_t max_terms = kMaxGaussianTerms,
                             double tolerance = kGaussianFitTolerance);

}  // namespace threshold_lab
