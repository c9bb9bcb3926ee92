#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "threshold_lab/config.hpp"
#include "threshold_lab/threebody.hpp"
#include "threshold_lab/twobody.hpp"

namespace threshold_lab {

struct RunOptions {
    std::string out_dir;  // overrides the config when non-empty
    bool quiet = false;
};

struct RunResult {
    nlohmann::json report;
    std::vector<std::string> files;
};

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

RunResult run_two_critical(const ExperimentConfig& config, const RunOptions& options = {});
RunResult run_two_sweep(const ExperimentConfig& config, const RunOptions& options = {});
RunResult run_ops_audit(const ExperimentConfig& config, const RunOptions& options = {});
RunResult run_ims_audit(const ExperimentConfig& config, const RunOptions& options = {});
RunResult run_three_sweep(const ExperimentConfig& config, const RunOptions& options = {});
/// Raises HypothesisError when a sweep coupling violates subcriticality.
RunResult run_absorb(const ExperimentConfig& config, const RunOptions& options = {});

/// Two-body sweep toward lambda* with |E2| targets log-spaced in [e_min, e_max];
/// lambda = 1 / mu(sqrt|E2|) places each point exactly.
struct TwoBodySweep {
    double lambda_star = 0.0;
    std::vector<SweepRecord> records;  // E3 holds E2, rho2 holds <x^2>
    double exponent = 0.0;             // slope of log <x^2> against log(1/|E2|)
    SpreadingReport spreading;
};

TwoBodySweep two_body_control_sweep(const PairPotential& potential, const JacobiFrame& frame, double e_max,
                                    double e_min, std::size_t points, const std::vector<double>& tail_radii,
                                    std::size_t grid_points = kDefaultRadialPoints);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Independent stream seed derived from a base seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// RFC-4180 field quoting.
std::string csv_field(const std::string& s);
std::string csv_line(const std::vector<std::string>& fields);

}  // namespace threshold_lab
