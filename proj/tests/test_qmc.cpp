#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "threshold_lab/parallel.hpp"
#include "threshold_lab/qmc.hpp"

using namespace threshold_lab;

TEST_CASE("shifted sobol points") {
    ShiftedSobol a(7, 3), b(7, 3), c(7, 4);
    std::vector<double> u(7), v(7), w(7);
    bool differs = false;
    for (int i = 0; i < 200; ++i) {
        a.next(u);
        b.next(v);
        c.next(w);
        CHECK(u == v);
        for (int d = 0; d < 7; ++d) {
            CHECK(u[d] > 0.0);
            CHECK(u[d] < 1.0);
            if (u[d] != w[d]) differs = true;
        }
    }
    CHECK(differs);
}

TEST_CASE("normal quantile") {
    CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0));
    CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(inverse_normal_cdf(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-10));
}

TEST_CASE("qmc mean of a product") {
    const auto est = qmc_mean(6, 1 << 14, 8, 11, 2, [](std::span<const double> u, std::span<double> out) {
        double p = 1.0, s = 0.0;
        for (double x : u) {
            p *= 2.0 * x;
            s += x * x;
        }
        out[0] = p;
        out[1] = s;
    });
    CHECK(est[0].mean == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(std::abs(est[0].mean - 1.0) <= 5.0 * est[0].std_error + 1e-12);
    CHECK(est[1].mean == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("results do not depend on the worker count") {
    auto f = [](std::span<const double> u, std::span<double> out) { out[0] = std::exp(-u[0] * u[1]) * u[2]; };
    set_thread_count(1);
    const auto one = qmc_replicate_means(3, 4096, 8, 5, 1, f);
    set_thread_count(4);
    const auto four = qmc_replicate_means(3, 4096, 8, 5, 1, f);
    set_thread_count(0);
    CHECK(one == four);
}

TEST_CASE("parallel_for rethrows") {
    set_thread_count(3);
    CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                        if (i == 7) throw std::runtime_error("boom");
                    }),
                    std::runtime_error);
    std::vector<int> hit(100, 0);
    parallel_for(hit.size(), [&](std::size_t i) { hit[i] += 1; });
    set_thread_count(0);
    for (int h : hit) CHECK(h == 1);
}

TEST_CASE("sphere directions are unit vectors") {
    for (const auto& d : sphere_directions(6, 64, 2)) {
        double n = 0.0;
        for (double x : d) n += x * x;
        CHECK(n == doctest::Approx(1.0));
    }
}
