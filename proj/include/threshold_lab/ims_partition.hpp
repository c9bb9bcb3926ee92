#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "threshold_lab/model.hpp"

namespace threshold_lab {

/// Point of six-dimensional Jacobi space, (x, y) of the (12) frame.
using JacobiPoint = std::array<double, 6>;

inline constexpr double kDefaultConeThreshold = 0.15;
inline constexpr double kDefaultSmoothingWidth = 0.05;

/// Quintic smoothstep: 0 for t <= 0, 1 for t >= 1, C^2 in between.
double smoothstep(double t);

/// Smooth partition of unity J_1, J_2, J_3 with sum J_s^2 = 1.
///
/// With d_is = |r_i - r_s| / |q| and S the quintic smoothstep,
///   w_s = prod_{i != s} S((d_is - theta) / delta),  J_s = w_s / sqrt(sum_t w_t^2)
/// for |q| >= 1, so J_s(q) != 0 forces |r_i - r_s| > theta |q|. For |q| <= 1/2
/// all J_s equal 1/sqrt(3); in between the two are blended with
/// b = S(2|q| - 1) and renormalized.
class IMSPartition {
public:
    struct Evaluation {
        std::array<double, 3> J{};
        std::array<JacobiPoint, 3> grad{};
    };

    IMSPartition(std::array<double, 3> masses, double theta, double delta);

    std::array<double, 3> values(const JacobiPoint& q) const;
    Evaluation evaluate(const JacobiPoint& q) const;

    /// Physical distances |r_2 - r_1|, |r_3 - r_1|, |r_3 - r_2|.
    std::array<double, 3> distances(const JacobiPoint& q) const;
    /// Unnormalized homogeneous weights w_s (depend on q / |q| only).
    std::array<double, 3> weights(const JacobiPoint& q) const;

    double theta() const { return theta_; }
    double delta() const { return delta_; }
    /// Cone constant guaranteed by the construction: J_s != 0 implies d_is > theta.
    double cone_constant() const { return theta_; }
    const std::array<double, 3>& masses() const { return masses_; }

    /// Smallest over the covering mesh of max_s min_{i != s} d_is; the weights
    /// cover the sphere iff this exceeds theta.
    double covering_margin() const { return covering_margin_; }
    void set_covering_margin(double m) { covering_margin_ = m; }

private:
    template <class T>
    std::array<T, 3> evaluate_generic(const std::array<T, 6>& q) const;
    template <class T>
    std::array<T, 3> distances_generic(const std::array<T, 6>& q) const;

    std::array<double, 3> masses_;
    double theta_;
    double delta_;
    double alpha_;
    double gamma_;
    double a1_;  // m_2 / (m_1 + m_2)
    double a2_;  // m_1 / (m_1 + m_2)
    double covering_margin_ = 0.0;
};

/// Builds the partition and checks covering on a deterministic sphere mesh.
/// Raises PreconditionError for delta outside (0, 1/4) and ValidationError when
/// sum_t w_t^2 vanishes somewhere on the mesh.
IMSPartition build_partition(const ParticleSystem& system, double delta = kDefaultSmoothingWidth,
                             double theta = kDefaultConeThreshold, std::size_t mesh_size = 20000);
IMSPartition build_partition(const std::array<double, 3>& masses, double delta = kDefaultSmoothingWidth,
                             double theta = kDefaultConeThreshold, std::size_t mesh_size = 20000);

/// Quasi-random points with |q| log-uniform in [r_min, r_max].
std::vector<JacobiPoint> ims_sample_mesh(std::size_t count, double r_min, double r_max, std::uint64_t seed);

struct ConeReport {
    std::size_t samples = 0;
    std::size_t support_hits = 0;  // (sample, s) pairs with J_s != 0
    double measured_c = 0.0;       // min over those of min_{i != s} |r_i - r_s| / |q|
    bool passes = false;
};

/// Raises PreconditionError if any sample has |q| <= 1.
ConeReport verify_support_cone(const IMSPartition& partition, const std::vector<JacobiPoint>& mesh);

struct GradientDecayReport {
    std::vector<double> radii;
    std::vector<double> max_grad_sq;  // max over directions of sum_s |grad J_s|^2
    std::vector<double> scaled;       // max_grad_sq * radius^2
    bool passes = false;              // scaled within a factor 2 of scaled[0] at every radius
};

GradientDecayReport gradient_decay_audit(const IMSPartition& partition, const std::vector<double>& radii,
                                         std::size_t directions = 4096, std::uint64_t seed = 7);

struct GradientCheckReport {
    std::size_t points = 0;
    double step = 0.0;
    double max_relative_difference = 0.0;  // |g_fd - g| / max(|g|, 1)
    bool passes = false;                   // <= 1e-6
};

/// Analytic gradients against a fourth-order central difference with the given step.
GradientCheckReport gradient_fd_check(const IMSPartition& partition, std::size_t points = 100, double step = 1e-5,
                                      std::uint64_t seed = 11);

struct IdentityReport {
    std::size_t samples = 0;
    double max_partition_error = 0.0;  // |sum J_s^2 - 1|
    double max_regroup_error = 0.0;    // |V_total - sum_s J_s^2 (V_lm + V_ls + V_ms)| relative to V_total
    std::size_t cone_checks = 0;
    std::size_t cone_violations = 0;   // V_is J_s^2 above sup_{r >= C|q|} V_is(r)
    bool passes = false;
};

IdentityReport ims_identity_check(const ParticleSystem& system, const IMSPartition& partition,
                                  const std::vector<JacobiPoint>& samples);

void to_json(nlohmann::json& j, const ConeReport& r);
void to_json(nlohmann::json& j, const GradientDecayReport& r);
void to_json(nlohmann::json& j, const GradientCheckReport& r);
void to_json(nlohmann::json& j, const IdentityReport& r);

/// Rows "radius,max_grad_sq" with a header line.
std::string gradient_decay_csv(const GradientDecayReport& r);

}  // namespace threshold_lab
