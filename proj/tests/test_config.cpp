#include <doctest.h>

#include <string>

#include "threshold_lab/config.hpp"
#include "threshold_lab/errors.hpp"

using namespace threshold_lab;

namespace {

std::string error_of(const std::string& text) {
    try {
        (void)parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("parse a full config") {
    const auto c = parse_config(R"(
# comment
kind = ops_audit
masses = 1, 2, 3
potential = exponential
range = 0.5
potential.p23 = square_well
amplitude.13 = 0     # decoupled
lambda = 1.25
hs_z = 1 0.1
symmetric = false
seed = 99
)");
    CHECK(c.kind == ExperimentKind::ops_audit);
    CHECK(c.masses[2] == 3.0);
    CHECK(c.potentials[0].kind == PotentialKind::exponential);
    CHECK(c.potentials[0].range == 0.5);
    CHECK(c.potentials[2].kind == PotentialKind::square_well);
    CHECK(c.potentials[2].range == 0.5);
    CHECK(c.potentials[1].amplitude == 0.0);
    CHECK(c.lambda.value() == 1.25);
    CHECK(c.hs_z.size() == 2);
    CHECK_FALSE(c.symmetric);
    CHECK(c.seed == 99);
    CHECK(c.system(1.0).potential(Pair::p13).is_zero());
    CHECK(c.output_prefix() == "ops_audit");
}

TEST_CASE("diagnostics name line and key") {
    CHECK(error_of("kind = absorb\nbudgett = 3\n").find("line 2: key 'budgett'") != std::string::npos);
    CHECK(error_of("budget = many\n").find("key 'budget'") != std::string::npos);
    CHECK(error_of("seed = 1\nseed = 2\n").find("duplicate") != std::string::npos);
    CHECK(error_of("range = -1\n").find("key 'range'") != std::string::npos);
    CHECK(error_of("kind = nothing\n").find("key 'kind'") != std::string::npos);
    CHECK(error_of("just text\n").find("line 1") != std::string::npos);
    CHECK(error_of("potential.p14 = gaussian\n").find("pair") != std::string::npos);
    CHECK(error_of("masses = 1 1\n").find("three") != std::string::npos);
    CHECK(error_of("potential = tabulated\n").find("table_r") != std::string::npos);
    CHECK_THROWS_AS(load_config("/nonexistent/file.conf"), ConfigError);
}

TEST_CASE("hash ignores seed and output location") {
    auto a = parse_config("kind = absorb\nbudget = 40\n");
    auto b = a;
    b.seed = 12345;
    b.out_dir = "/tmp/elsewhere";
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    b.budget = 41;
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("tabulated potentials") {
    const auto c = parse_config("potential = tabulated\ntable_r = 0 1 2\ntable_v = 1 0.5 0\n");
    CHECK(c.system(1.0).potential(Pair::p12)(1.0) == doctest::Approx(0.5));
}
