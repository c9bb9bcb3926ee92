// Acceptance run: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <CLI11.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <json.hpp>

#include "threshold_lab/config.hpp"
#include "threshold_lab/experiments.hpp"
#include "threshold_lab/faddeev_ops.hpp"
#include "threshold_lab/twobody.hpp"

namespace fs = std::filesystem;
using namespace threshold_lab;
using nlohmann::json;

namespace {

const fs::path kConfigs = THRESHOLD_LAB_CONFIG_DIR;
const std::string kCli = THRESHOLD_LAB_CLI;

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RunResult run(const std::string& name, const fs::path& out, double* seconds = nullptr) {
    auto cfg = load_config((kConfigs / name).string());
    RunOptions opt;
    opt.out_dir = out.string();
    opt.quiet = true;
    const auto t0 = std::chrono::steady_clock::now();
    auto r = run_experiment(cfg, opt);
    if (seconds) *seconds = seconds_since(t0);
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict criterion1(const fs::path& out) {
    const double sq_oracle = std::numbers::pi * std::numbers::pi / 4.0;
    const double j01 = boost::math::cyl_bessel_j_zero(0.0, 1);
    const double exp_oracle = j01 * j01 / 4.0;
    Verdict v{true, ""};
    for (auto [name, oracle] : {std::pair{"two_critical_square_well.conf", sq_oracle},
                                std::pair{"two_critical_exponential.conf", exp_oracle}}) {
        double secs = 0.0;
        const auto r = run(name, out, &secs);
        const double ls = r.report["pairs"][0]["lambda_star"].get<double>();
        const double rel = std::abs(ls - oracle) / oracle;
        const bool ok = rel <= 1e-4 && secs < 5.0;
        v.pass = v.pass && ok;
        v.detail += std::string(name) + " lambda* " + fmt(ls) + " vs " + fmt(oracle) + " rel " + fmt(rel) + " in " +
                    fmt(secs) + " s; ";
    }
    return v;
}

Verdict criterion2(const fs::path& out) {
    Verdict v{true, ""};
    for (const char* name : {"two_critical_square_well.conf", "two_critical_exponential.conf",
                             "two_critical_gaussian.conf"}) {
        const auto r = run(name, out);
        for (const auto& p : r.report["pairs"]) {
            const auto& z = p["z_grid"];
            const int violations = p["monotonicity_violations"].get<int>();
            // independent recount of strict decrease
            int recount = 0;
            const auto& mu = p["mu"];
            for (std::size_t i = 1; i < mu.size(); ++i) {
                if (!(mu[i].get<double>() < mu[i - 1].get<double>())) ++recount;
            }
            const bool grid_ok = z.size() == 20 && z.front().get<double>() >= 0.0 && z.back().get<double>() <= 5.0;
            v.pass = v.pass && violations == 0 && recount == 0 && grid_ok;
            v.detail += p["potential"].get<std::string>() + " violations " + std::to_string(recount) + "; ";
        }
    }
    return v;
}

struct OpsChecks {
    Verdict c3, c4;
};

OpsChecks criteria3and4(const fs::path& out) {
    double secs = 0.0;
    const auto r = run("ops_audit.conf", out, &secs);
    OpsChecks o{{secs < 60.0, ""}, {true, ""}};
    std::size_t points = 0;
    double worst1 = 0.0, worst2 = 0.0;
    for (const auto& p : r.report["pairs"]) {
        const auto& audit = p["fiber_audit"];
        for (const auto& pt : audit["points"]) {
            ++points;
            const double z = pt["z"].get<double>(), pp = pt["p"].get<double>();
            const bool in_grid = z > 0.0 && z <= 1.0 && pp >= 1e-3 && pp <= 10.0;
            const double r1 = pt["k1"].get<double>() / pt["bound_k1"].get<double>();
            const double r2 = pt["k2"].get<double>() / pt["bound_k2"].get<double>();
            worst1 = std::max(worst1, r1);
            worst2 = std::max(worst2, r2);
            o.c3.pass = o.c3.pass && in_grid && r1 <= 1.0 && r2 <= 1.0;
        }
        const auto& c = p["constants"];
        const double cc = c["c"].get<double>(), cp = c["c_prime"].get<double>(), ct = c["c_tilde"].get<double>();
        const double bound = cc * cp * ct / (32.0 * std::pow(std::numbers::pi, 4));
        std::set<double> zs;
        for (const auto& h : p["k2_hs"]) {
            zs.insert(h["z"].get<double>());
            o.c4.pass = o.c4.pass && h["hs_norm_squared"].get<double>() <= bound;
        }
        o.c4.pass = o.c4.pass && zs == std::set<double>{1.0, 0.5, 0.1, 0.01, 1e-3, 1e-4};
        const double e1 = std::abs(cp - 2.0 * std::numbers::pi), e2 = std::abs(c["c_dprime"].get<double>() - 1.0);
        const double l1 = c["other_l1"].get<double>();
        const double planch = std::abs(ct * std::pow(c["gamma"].get<double>(), 3) - l1) / l1;
        o.c4.pass = o.c4.pass && e1 <= 1e-8 && e2 <= 1e-8 && planch <= 1e-6;
        o.c4.detail = "c' err " + fmt(e1) + ", c'' err " + fmt(e2) + ", plancherel " + fmt(planch) + ", hs bound " +
                      fmt(bound);
    }
    o.c3.pass = o.c3.pass && points >= 20 * 32;
    o.c3.detail = std::to_string(points) + " points, max K1/bound " + fmt(worst1) + ", max K2/bound " + fmt(worst2) +
                  " in " + fmt(secs) + " s";
    return o;
}

Verdict criterion5(const json& absorb) {
    const auto cfg = load_config((kConfigs / "absorb.conf").string());
    const auto sys = cfg.system(0.0);
    const auto& v = sys.potential(Pair::p12);
    const auto frame = jacobi_frame(sys, Pair::p12);
    const double ls = critical_coupling(v, frame);
    std::vector<double> ks;
    for (const auto& r : absorb["records"]) ks.push_back(r["k"].get<double>());
    std::sort(ks.begin(), ks.end());
    Verdict out{!ks.empty(), ""};
    double prev = std::numeric_limits<double>::infinity(), worst = 0.0;
    for (double k : ks) {
        const auto c = channel_contraction_norm(v, frame, 0.9 * ls, k);
        worst = std::max(worst, c.lambda_mu);
        const bool ok = c.lambda_mu <= 0.9 + 1e-6 && c.lambda_mu < 1.0 && c.neumann_bound &&
                        std::isfinite(*c.neumann_bound) && *c.neumann_bound < prev;
        out.pass = out.pass && ok;
        if (c.neumann_bound) prev = *c.neumann_bound;
    }
    if (ks.empty()) return {false, "no sweep records"};
    out.detail = std::to_string(ks.size()) + " k values in [" + fmt(ks.front()) + ", " + fmt(ks.back()) +
                 "], max lambda*mu " + fmt(worst);
    return out;
}

Verdict criterion6(const fs::path& out) {
    const auto r = run("ims_audit.conf", out).report;
    const auto& id = r["identity"];
    const auto& cone = r["cone"];
    const auto& decay = r["gradient_decay"];
    const auto& fd = r["gradient_check"];
    const double err = id["max_partition_error"].get<double>();
    const double C = cone["measured_c"].get<double>();
    // scaled = max|grad|^2 radius^2 within a factor 2 across radii 2..16
    const auto scaled = decay["scaled"].get<std::vector<double>>();
    const auto radii = decay["radii"].get<std::vector<double>>();
    const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
    const bool decay_ok = radii.front() <= 2.0 && radii.back() >= 16.0 && *hi <= 2.0 * *lo;
    const double fd_err = fd["max_relative_difference"].get<double>();
    Verdict v;
    v.pass = id["samples"].get<std::size_t>() >= 100000 && err <= 1e-10 && C > 0.0 && decay_ok && fd_err <= 1e-6;
    v.detail = "partition err " + fmt(err) + ", C " + fmt(C) + ", scaled spread " + fmt(*hi / *lo) + ", fd " +
               fmt(fd_err);
    return v;
}

Verdict criterion7(const json& a, double secs) {
    const double ls = a["lambda_star"].get<double>();
    const auto& crit = a["critical"];
    const double width = crit["bracket_width"].get<double>();
    const bool part_a = crit["lambda_hi"].get<double>() < ls && width <= 1e-4 * ls && a["subcritical_throughout"].get<bool>();

    std::vector<double> energies, rho2, tails;
    for (const auto& r : a["records"]) {
        energies.push_back(std::abs(r["E3"].get<double>()));
        rho2.push_back(r["rho2"].get<double>());
    }
    const auto& sp = a["spreading"];
    const double e_hi = *std::max_element(energies.begin(), energies.end());
    const double e_lo = *std::min_element(energies.begin(), energies.end());
    const double span = std::log10(e_hi / e_lo);
    const double ratio = sp["rho2_ratio"].get<double>();
    const bool has_R0 = !sp["R0"].is_null();
    const double sup_tail = sp["sup_tail_at_R0"].get<double>();
    const bool part_b = span >= 2.0 - 1e-9 && ratio <= 2.0 && has_R0 && sup_tail <= 0.5 &&
                        a["verdict"].get<std::string>() == "non-spreading-consistent";
    const double kmax = a["kinetic"]["max"].get<double>(), kmed = a["kinetic"]["median"].get<double>();
    const bool part_c = kmax <= 2.0 * kmed;
    Verdict v;
    v.pass = part_a && part_b && part_c && secs <= 1800.0;
    v.detail = std::string("(a) ") + (part_a ? "pass" : "fail") + " lambda_cr/lambda* " +
               fmt(crit["lambda_cr"].get<double>() / ls) + " width/lambda* " + fmt(width / ls) + "; (b) " +
               (part_b ? "pass" : "fail") + " |E3| span " + fmt(span) + " decades, rho2 ratio " + fmt(ratio) +
               ", sup T(R0) " + fmt(sup_tail) + ", verdict " + a["verdict"].get<std::string>() + "; (c) " +
               (part_c ? "pass" : "fail") + " kinetic max/median " + fmt(kmax / kmed) + "; " + fmt(secs) + " s";
    return v;
}

Verdict criterion8(const json& a) {
    const auto& c = a["control"];
    const double e = c["exponent"].get<double>();
    Verdict v;
    v.pass = std::abs(e - 1.0) <= 0.2 && c["verdict"].get<std::string>() == "spreading-consistent";
    v.detail = "exponent " + fmt(e) + ", verdict " + c["verdict"].get<std::string>();
    return v;
}

Verdict criterion9(const fs::path& out) {
    const auto r = run("decoupled_pair.conf", out).report;
    Verdict v{true, ""};
    double worst = 0.0;
    for (const auto& c : r["two_body_comparison"]) {
        if (c["E2"].is_null()) {
            v.pass = false;
            continue;
        }
        const double E3 = c["E3"].get<double>(), E2 = c["E2"].get<double>();
        const double rel = std::abs(E3 - E2) / std::abs(E2);
        worst = std::max(worst, rel);
        v.pass = v.pass && rel <= 1e-3;
        v.detail += "E3 " + fmt(E3) + " vs E2 " + fmt(E2) + "; ";
    }
    v.detail += "max rel " + fmt(worst);
    return v;
}

int run_cli(const fs::path& out, int threads) {
    const std::string cmd = "\"" + kCli + "\" --config \"" + (kConfigs / "absorb.conf").string() + "\" --out \"" +
                            out.string() + "\" --threads " + std::to_string(threads) + " --quiet";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> expect_fail;
    std::string work = (fs::temp_directory_path() / "threshold_lab_acceptance").string();
    app.add_option("--expect-fail", expect_fail, "criteria known to fail");
    app.add_option("--work", work, "scratch directory");
    CLI11_PARSE(app, argc, argv);

    const fs::path root(work);
    fs::remove_all(root);
    fs::create_directories(root);

    std::vector<std::pair<int, Verdict>> results;
    auto guarded = [&](int id, auto&& f) {
        try {
            results.emplace_back(id, f());
        } catch (const std::exception& e) {
            results.emplace_back(id, Verdict{false, std::string("exception: ") + e.what()});
        }
    };

    guarded(1, [&] { return criterion1(root / "c1"); });
    guarded(2, [&] { return criterion2(root / "c2"); });
    OpsChecks ops{{false, "not run"}, {false, "not run"}};
    try {
        ops = criteria3and4(root / "c3");
    } catch (const std::exception& e) {
        ops.c3.detail = ops.c4.detail = std::string("exception: ") + e.what();
    }
    results.emplace_back(3, ops.c3);
    results.emplace_back(4, ops.c4);

    // absorb through the CLI, twice, with different thread counts
    const auto t0 = std::chrono::steady_clock::now();
    const int code1 = run_cli(root / "absorb1", 1);
    const double absorb_secs = seconds_since(t0);
    const int code2 = run_cli(root / "absorb2", 2);
    json absorb;
    const bool absorb_ok = code1 == 0;
    if (absorb_ok) absorb = json::parse(slurp(root / "absorb1" / "absorb.json"));
    const std::string absorb_failure = "absorb exited with " + std::to_string(code1);

    if (absorb_ok) {
        guarded(5, [&] { return criterion5(absorb); });
    } else {
        results.emplace_back(5, Verdict{false, absorb_failure});
    }
    guarded(6, [&] { return criterion6(root / "c6"); });
    if (absorb_ok) {
        guarded(7, [&] { return criterion7(absorb, absorb_secs); });
        guarded(8, [&] { return criterion8(absorb); });
    } else {
        results.emplace_back(7, Verdict{false, absorb_failure});
        results.emplace_back(8, Verdict{false, absorb_failure});
    }
    guarded(9, [&] { return criterion9(root / "c9"); });
    guarded(10, [&] {
        Verdict v;
        const auto a = slurp(root / "absorb1" / "absorb.csv");
        const auto b = slurp(root / "absorb2" / "absorb.csv");
        v.pass = code1 == 0 && code2 == 0 && !a.empty() && a == b;
        v.detail = "exit codes " + std::to_string(code1) + "/" + std::to_string(code2) + ", " +
                   std::to_string(a.size()) + " bytes, threads 1 vs 2 " + (a == b ? "identical" : "differ");
        return v;
    });

    const std::set<int> expected(expect_fail.begin(), expect_fail.end());
    int unexpected = 0;
    for (const auto& [id, v] : results) {
        std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail;
        if (!v.pass && expected.count(id)) std::cout << " [expected failure]";
        if (v.pass && expected.count(id)) std::cout << " [unexpected pass]";
        std::cout << '\n';
        if (v.pass == static_cast<bool>(expected.count(id))) ++unexpected;
    }
    std::cout << (unexpected == 0 ? "acceptance: all outcomes as expected" : "acceptance: unexpected outcomes")
              << '\n';
    return unexpected == 0 ? 0 : 1;
}
