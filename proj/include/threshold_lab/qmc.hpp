#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace threshold_lab {

/// Sobol points with a random digital shift (XOR of every coordinate with a
/// per-dimension random word drawn from mt19937_64(seed)). Points lie in (0, 1).
class ShiftedSobol {
public:
    ShiftedSobol(std::size_t dimension, std::uint64_t seed);
    ~ShiftedSobol();
    ShiftedSobol(ShiftedSobol&&) noexcept;
    ShiftedSobol& operator=(ShiftedSobol&&) noexcept;

    std::size_t dimension() const { return shift_.size(); }
    void next(std::span<double> u);

private:
    struct Engine;
    std::unique_ptr<Engine> engine_;
    std::vector<std::uint64_t> shift_;
};

/// Standard normal quantile.
double inverse_normal_cdf(double u);

struct QmcEstimate {
    double mean = 0.0;
    double std_error = 0.0;  // across independent shifts
};

/// Estimates E[f(U)] for U uniform on (0,1)^dimension with `replicates`
/// independently shifted Sobol sequences of points / replicates points each.
/// f writes `outputs` values per point; replicates run in parallel and are
/// reduced in order, so results depend only on the seed.
std::vector<QmcEstimate> qmc_mean(std::size_t dimension, std::size_t points, std::size_t replicates,
                                  std::uint64_t seed, std::size_t outputs,
                                  const std::function<void(std::span<const double>, std::span<double>)>& f);

/// Per-replicate means [replicate][output] behind qmc_mean.
std::vector<std::vector<double>> qmc_replicate_means(
    std::size_t dimension, std::size_t points, std::size_t replicates, std::uint64_t seed, std::size_t outputs,
    const std::function<void(std::span<const double>, std::span<double>)>& f);

/// Unit vectors in R^dimension from normalized Gaussian images of shifted Sobol points.
std::vector<std::vector<double>> sphere_directions(std::size_t dimension, std::size_t count, std::uint64_t seed);

}  // namespace threshold_lab
