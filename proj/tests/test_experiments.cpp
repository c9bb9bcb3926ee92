#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "threshold_lab/config.hpp"
#include "threshold_lab/errors.hpp"
#include "threshold_lab/experiments.hpp"

using namespace threshold_lab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("threshold_lab_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(THRESHOLD_LAB_CLI) + " " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const auto p = dir / "run.conf";
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST_CASE("csv quoting") {
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(csv_line({"x", "1,2"}) == "x,\"1,2\"\r\n");
}

TEST_CASE("log-log slope and seeds") {
    CHECK(loglog_slope({1, 10, 100}, {2, 2 * std::pow(10, 0.7), 2 * std::pow(100, 0.7)}) == doctest::Approx(0.7));
    CHECK_THROWS_AS(loglog_slope({1}, {1}), PreconditionError);
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}

TEST_CASE("two_critical reports a violated margin without failing") {
    const auto dir = scratch("crit");
    const auto cfg = write_config(dir, "kind = two_critical\npotential = square_well\nlambda_fraction = 1.5\n");
    CHECK(run_cli("--config " + cfg.string() + " --out " + dir.string() + " --quiet") == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "two_critical.json"));
    CHECK(j["subcriticality_violated"].get<bool>());
    CHECK(j["pairs"][0]["lambda_star"].get<double>() == doctest::Approx(M_PI * M_PI / 4.0).epsilon(1e-4));
    const auto csv = slurp(dir / "two_critical.csv");
    CHECK(csv.find(j["config_hash"].get<std::string>()) != std::string::npos);
}

TEST_CASE("exit codes") {
    const auto dir = scratch("codes");
    CHECK(run_cli("--config " + write_config(dir, "kind = absorb\nbudgett = 3\n").string()) == 2);
    CHECK(run_cli("--config /nonexistent.conf") == 2);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("--config " +
                  write_config(dir, "kind = absorb\nbudget = 20\nsweep_lambdas = 0.9 1.05\ntwo_points = 4\n"
                                    "tail_points = 4096\n")
                      .string() +
                  " --out " + dir.string() + " --quiet") == 3);
    CHECK(run_cli("--config " + write_config(dir, "kind = three_sweep\nmasses = 1 2 1\n").string() + " --out " +
                  dir.string() + " --quiet") == 2);
}

TEST_CASE("outputs do not depend on the thread count") {
    const auto a = scratch("thr_a"), b = scratch("thr_b");
    const std::string text =
        "kind = three_sweep\nbudget = 20\nsweep_lambdas = 0.9 1.0\ntail_points = 8192\ntail_replicates = 4\n";
    const auto cfg = write_config(a, text);
    CHECK(run_cli("--config " + cfg.string() + " --out " + a.string() + " --threads 1 --quiet") == 0);
    CHECK(run_cli("--config " + cfg.string() + " --out " + b.string() + " --threads 3 --quiet --seed 1") == 0);
    CHECK(slurp(a / "three_sweep.csv") == slurp(b / "three_sweep.csv"));
    CHECK(slurp(a / "three_sweep.json") == slurp(b / "three_sweep.json"));
    CHECK(run_cli("--config " + cfg.string() + " --out " + b.string() + " --quiet --seed 2") == 0);
    CHECK(slurp(a / "three_sweep.csv") != slurp(b / "three_sweep.csv"));
}

TEST_CASE("ims audit through the library") {
    auto cfg = parse_config("kind = ims_audit\nims_samples = 2000\nims_fd_points = 10\n");
    RunOptions opt;
    opt.out_dir = scratch("ims").string();
    opt.quiet = true;
    const auto r = run_experiment(cfg, opt);
    CHECK(r.report["audits_ok"].get<bool>());
    CHECK(r.files.size() == 2);
}
