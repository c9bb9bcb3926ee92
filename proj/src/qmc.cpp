#include "threshold_lab/qmc.hpp"

#include <cmath>
#include <random>

#include <boost/math/special_functions/erf.hpp>
#include <boost/random/sobol.hpp>

#include "threshold_lab/errors.hpp"
#include "threshold_lab/parallel.hpp"

namespace threshold_lab {

struct ShiftedSobol::Engine {
    explicit Engine(std::size_t d) : sobol(d) {}
    boost::random::sobol sobol;
};

ShiftedSobol::ShiftedSobol(std::size_t dimension, std::uint64_t seed) {
    if (dimension == 0) throw PreconditionError("ShiftedSobol: dimension must be positive");
    engine_ = std::make_unique<Engine>(dimension);
    std::mt19937_64 rng(seed);
    shift_.resize(dimension);
    for (auto& s : shift_) s = rng();
}

ShiftedSobol::~ShiftedSobol() = default;
ShiftedSobol::ShiftedSobol(ShiftedSobol&&) noexcept = default;
ShiftedSobol& ShiftedSobol::operator=(ShiftedSobol&&) noexcept = default;

void ShiftedSobol::next(std::span<double> u) {
    if (u.size() != shift_.size()) throw PreconditionError("ShiftedSobol::next: wrong dimension");
    for (std::size_t d = 0; d < u.size(); ++d) {
        const std::uint64_t v = static_cast<std::uint64_t>(engine_->sobol()) ^ shift_[d];
        u[d] = (static_cast<double>(v >> 11) + 0.5) * 0x1.0p-53;
    }
}

double inverse_normal_cdf(double u) {
    if (!(u > 0.0 && u < 1.0)) throw PreconditionError("inverse_normal_cdf: u must lie in (0, 1)");
    return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
}

std::vector<std::vector<double>> qmc_replicate_means(
    std::size_t dimension, std::size_t points, std::size_t replicates, std::uint64_t seed, std::size_t outputs,
    const std::function<void(std::span<const double>, std::span<double>)>& f) {
    if (replicates < 2) throw PreconditionError("qmc_mean: need at least two replicates");
    if (points < replicates) throw PreconditionError("qmc_mean: fewer points than replicates");
    const std::size_t per = points / replicates;
    std::vector<std::vector<double>> means(replicates, std::vector<double>(outputs, 0.0));
    std::vector<std::uint64_t> seeds(replicates);
    {
        std::mt19937_64 rng(seed);
        for (auto& s : seeds) s = rng();
    }
    parallel_for(replicates, [&](std::size_t r) {
        ShiftedSobol gen(dimension, seeds[r]);
        std::vector<double> u(dimension), value(outputs), sum(outputs, 0.0);
        for (std::size_t i = 0; i < per; ++i) {
            gen.next(u);
            f(u, value);
            for (std::size_t k = 0; k < outputs; ++k) sum[k] += value[k];
        }
        for (std::size_t k = 0; k < outputs; ++k) means[r][k] = sum[k] / static_cast<double>(per);
    });
    return means;
}

std::vector<QmcEstimate> qmc_mean(std::size_t dimension, std::size_t points, std::size_t replicates,
                                  std::uint64_t seed, std::size_t outputs,
                                  const std::function<void(std::span<const double>, std::span<double>)>& f) {
    const auto means = qmc_replicate_means(dimension, points, replicates, seed, outputs, f);
    std::vector<QmcEstimate> out(outputs);
    const auto nr = static_cast<double>(replicates);
    for (std::size_t k = 0; k < outputs; ++k) {
        double m = 0.0;
        for (std::size_t r = 0; r < replicates; ++r) m += means[r][k];
        m /= nr;
        double var = 0.0;
        for (std::size_t r = 0; r < replicates; ++r) var += (means[r][k] - m) * (means[r][k] - m);
        out[k].mean = m;
        out[k].std_error = std::sqrt(var / (nr - 1.0) / nr);
    }
    return out;
}

std::vector<std::vector<double>> sphere_directions(std::size_t dimension, std::size_t count, std::uint64_t seed) {
    ShiftedSobol gen(dimension, seed);
    std::vector<std::vector<double>> out(count, std::vector<double>(dimension));
    std::vector<double> u(dimension);
    for (auto& v : out) {
        gen.next(u);
        double n2 = 0.0;
        for (std::size_t d = 0; d < dimension; ++d) {
            v[d] = inverse_normal_cdf(u[d]);
            n2 += v[d] * v[d];
        }
        const double n = std::sqrt(n2);
        for (auto& x : v) x /= n;
    }
    return out;
}

}  // namespace threshold_lab
