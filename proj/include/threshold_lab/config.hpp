#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "threshold_lab/model.hpp"

namespace threshold_lab {

enum class ExperimentKind { two_critical, two_sweep, ops_audit, ims_audit, three_sweep, absorb };

std::string_view to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view name);

struct PotentialSpec {
    PotentialKind kind = PotentialKind::gaussian;
    double range = 1.0;
    double amplitude = 1.0;
    std::vector<double> table_r;
    std::vector<double> table_v;

    PairPotential build() const;
};

/// Parsed experiment description. Text format: one `key = value` per line, `#`
/// starts a comment, lists are whitespace or comma separated. Per-pair potential
/// keys take a `.p12` / `.p13` / `.p23` suffix and override the unsuffixed default.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::absorb;
    std::array<double, 3> masses{1.0, 1.0, 1.0};
    std::array<PotentialSpec, 3> potentials{};
    std::optional<double> lambda;       // absolute coupling
    double lambda_fraction = 0.9;       // of the smallest pair lambda* when `lambda` is unset
    bool symmetric = true;
    std::uint64_t seed = 1;

    std::size_t grid_points = 128;
    std::size_t bs_z_count = 20;
    double bs_z_max = 5.0;

    std::size_t z_grid_count = 20;
    double z_min = 1e-4;
    std::size_t p_grid_count = 32;
    std::vector<double> hs_z{1.0, 0.5, 0.1, 0.01, 1e-3, 1e-4};
    std::vector<double> k_values{1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0};

    std::size_t ims_samples = 100000;
    double ims_delta = 0.05;
    double ims_theta = 0.15;
    double ims_r_min = 0.1;
    double ims_r_max = 100.0;
    std::vector<double> ims_gradient_radii{2.0, 4.0, 8.0, 16.0};
    std::size_t ims_fd_points = 100;
    double ims_fd_step = 1e-5;

    // two-body control sweep, targets |E2| log-spaced in [two_e_min, two_e_max]
    double two_e_max = 1e-2;
    double two_e_min = 1e-6;
    std::size_t two_points = 9;

    std::size_t budget = 150;
    std::size_t candidates = 16;
    double min_scale = 1e-4;
    double max_scale = 1e2;
    double reference_fraction = 1.0;
    double refine_offset = 0.02;
    double width_fraction = 1e-4;
    double energy_fraction = 1e-6;
    // three-body sweep, targets |E3| = e_max_fraction |E2(2 lambda*)| 10^{-k decades/(points-1)}
    double e_max_fraction = 0.04;
    double decades = 2.0;
    std::size_t sweep_points = 5;
    std::vector<double> sweep_lambdas;  // fractions of lambda*; replaces the energy targets when set
    std::size_t tail_points = std::size_t{1} << 20;
    std::size_t tail_replicates = 16;
    double tail_inflation = 2.0;

    std::string out_dir = ".";
    std::string prefix;  // defaults to the kind name

    ParticleSystem system(double lambda) const;
    std::string output_prefix() const { return prefix.empty() ? std::string(to_string(kind)) : prefix; }
};

/// Raises ConfigError naming the line and key.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

/// Canonical form without seed and output location.
nlohmann::json canonical_json(const ExperimentConfig& config);
/// FNV-1a of the canonical form, 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

}  // namespace threshold_lab
