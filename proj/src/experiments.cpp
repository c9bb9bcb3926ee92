#include "threshold_lab/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>

#include "threshold_lab/errors.hpp"
#include "threshold_lab/faddeev_ops.hpp"
#include "threshold_lab/ims_partition.hpp"

namespace threshold_lab {

namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string csv_line(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_field(fields[i]);
    }
    return out + "\r\n";
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw PreconditionError("loglog_slope: need two or more matched points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw PreconditionError("loglog_slope: values must be positive");
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double den = n * sxx - sx * sx;
    if (!(den > 0.0)) throw PreconditionError("loglog_slope: degenerate abscissae");
    return (n * sxy - sx * sy) / den;
}

namespace {

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

struct Output {
    const ExperimentConfig& cfg;
    const RunOptions& opt;
    std::string hash;
    fs::path dir;
    RunResult result;

    Output(const ExperimentConfig& c, const RunOptions& o)
        : cfg(c), opt(o), hash(config_hash(c)), dir(o.out_dir.empty() ? c.out_dir : o.out_dir) {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
        result.report = nlohmann::json{{"config_hash", hash},
                                       {"seed", c.seed},
                                       {"kind", to_string(c.kind)},
                                       {"config", canonical_json(c)}};
    }

    void log(const std::string& s) const {
        if (!opt.quiet) std::cerr << "[" << to_string(cfg.kind) << "] " << s << '\n';
    }

    fs::path path(const std::string& suffix) const { return dir / (cfg.output_prefix() + suffix); }

    void write(const fs::path& p, const std::string& text) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw ConfigError("cannot write '" + p.string() + "'");
        out << text;
        if (!out) throw ConfigError("write failed for '" + p.string() + "'");
        result.files.push_back(p.string());
    }

    void write_json() { write(path(".json"), result.report.dump(2) + "\n"); }

    // rows are prefixed with config_hash and seed
    void write_csv(const std::string& suffix, const std::vector<std::string>& header,
                   const std::vector<std::vector<std::string>>& rows) {
        std::vector<std::string> h{"config_hash", "seed"};
        h.insert(h.end(), header.begin(), header.end());
        std::string text = csv_line(h);
        for (const auto& r : rows) {
            std::vector<std::string> line{hash, std::to_string(cfg.seed)};
            line.insert(line.end(), r.begin(), r.end());
            text += csv_line(line);
        }
        write(path(suffix), text);
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double resolved_lambda(const ExperimentConfig& cfg, double lambda_star) {
    if (cfg.lambda) return *cfg.lambda;
    if (!std::isfinite(lambda_star)) return 0.0;
    return cfg.lambda_fraction * lambda_star;
}

std::vector<Pair> interacting_pairs(const ParticleSystem& sys) {
    std::vector<Pair> out;
    for (Pair p : kAllPairs) {
        if (!sys.potential(p).is_zero()) out.push_back(p);
    }
    if (out.empty()) throw DegenerateInputError("every pair potential is zero");
    return out;
}

nlohmann::json margin_json(const MarginReport& m) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : m.pairs) {
        nlohmann::json j{{"pair", to_string(p.pair)}, {"decoupled", p.decoupled}};
        if (!p.decoupled) {
            j["lambda_star"] = p.lambda_star;
            j["epsilon"] = p.epsilon;
        }
        pairs.push_back(j);
    }
    return {{"lambda", m.lambda},
            {"epsilon", std::isfinite(m.epsilon) ? nlohmann::json(m.epsilon) : nlohmann::json(nullptr)},
            {"satisfied", m.satisfied},
            {"limiting_pair", to_string(m.limiting_pair)},
            {"pairs", pairs}};
}

std::vector<std::vector<std::string>> sweep_rows(const std::string& system, const std::vector<SweepRecord>& records) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : records) {
        std::vector<std::string> row{system};
        const auto v = sweep_csv_values(r);
        row.insert(row.end(), v.begin(), v.end());
        row.push_back(num(r.rho2_qmc));
        row.push_back(num(r.rho2_qmc_error));
        row.push_back(std::to_string(r.seed));
        rows.push_back(row);
    }
    return rows;
}

std::vector<std::string> sweep_header(const std::vector<double>& radii) {
    std::vector<std::string> h{"system"};
    const auto f = sweep_csv_fields(radii);
    h.insert(h.end(), f.begin(), f.end());
    h.push_back("rho2_qmc");
    h.push_back("rho2_qmc_error");
    h.push_back("record_seed");
    return h;
}

nlohmann::json control_json(const TwoBodySweep& s) {
    return {{"lambda_star", s.lambda_star},
            {"exponent", s.exponent},
            {"exponent_ok", std::abs(s.exponent - 1.0) <= 0.2},
            {"verdict", to_string(s.spreading.verdict)},
            {"spreading", s.spreading},
            {"records", s.records}};
}

// |E|, <rho^2>, T(R0) for every record
std::string plot_data(const Output& o, const std::vector<SweepRecord>& records, const SpreadingReport& rep,
                      const std::string& label) {
    std::size_t k0 = rep.radii.empty() ? 0 : rep.radii.size() - 1;
    if (rep.R0) {
        for (std::size_t k = 0; k < rep.radii.size(); ++k) {
            if (rep.radii[k] == *rep.R0) k0 = k;
        }
    }
    std::string text = "# config_hash=" + o.hash + " seed=" + std::to_string(o.cfg.seed) + " system=" + label +
                       " R0=" + (rep.radii.empty() ? std::string("nan") : num(rep.radii[k0])) + "\n";
    text += "# abs_E rho2 T_R0\n";
    auto sorted = records;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const SweepRecord& a, const SweepRecord& b) { return std::abs(a.E3) > std::abs(b.E3); });
    for (const auto& r : sorted) {
        if (!r.bound) continue;
        const double t = k0 < r.tail.size() ? r.tail[k0].mass : std::numeric_limits<double>::quiet_NaN();
        text += num(std::abs(r.E3)) + " " + num(r.rho2) + " " + num(t) + "\n";
    }
    return text;
}

GrowthOptions growth_options(const ExperimentConfig& cfg) {
    GrowthOptions g;
    g.candidates_per_step = cfg.candidates;
    g.min_scale = cfg.min_scale;
    g.max_scale = cfg.max_scale;
    return g;
}

TailOptions tail_options(const ExperimentConfig& cfg, std::uint64_t seed) {
    TailOptions t;
    t.points = cfg.tail_points;
    t.replicates = cfg.tail_replicates;
    t.inflation = cfg.tail_inflation;
    t.seed = seed;
    return t;
}

// Grows a basis at lambda; with `fixed` set, the lower of the two variational
// energies decides which basis the record is built on.
SweepRecord three_body_record(const ExperimentConfig& cfg, const ParticleSystem& base, double lambda, bool symmetric,
                              std::uint64_t stream, const CriticalSearch* fixed = nullptr,
                              std::optional<double> target_energy = std::nullopt, double lambda_max = 0.0) {
    const auto sys = base.with_lambda(lambda);
    const CGCalculus calc(sys, symmetric);
    const std::uint64_t grow_seed = derive_seed(cfg.seed, 2 * stream);
    auto grown = grow_basis(calc, cfg.budget, grow_seed, growth_options(cfg));
    auto m = assemble(grown.basis, calc);
    std::uint64_t basis_seed = grow_seed;
    if (fixed) {
        const double e_grown = solve_ground(m.hamiltonian(lambda), m.N).energy;
        const double e_fixed = solve_ground(fixed->matrices.hamiltonian(lambda), fixed->matrices.N).energy;
        if (e_fixed < e_grown) {
            grown.basis = fixed->basis;
            m = fixed->matrices;
            basis_seed = fixed->basis.seed;
        }
    }
    // place the coupling on the basis actually used
    if (target_energy) {
        try {
            lambda = coupling_for_energy(m, *target_energy, 0.0, lambda_max);
        } catch (const NumericalError&) {
            throw HypothesisError("subcriticality violated: E3 = " + num(*target_energy) + " needs lambda >= lambda* = " +
                                  num(lambda_max));
        }
    }
    auto rec = evaluate_record(grown.basis, calc, m, lambda, base.with_lambda(lambda),
                               default_tail_radii(calc.length_scale()),
                               tail_options(cfg, derive_seed(cfg.seed, 2 * stream + 1)));
    rec.seed = basis_seed;
    return rec;
}

}  // namespace

TwoBodySweep two_body_control_sweep(const PairPotential& potential, const JacobiFrame& frame, double e_max,
                                    double e_min, std::size_t points, const std::vector<double>& tail_radii,
                                    std::size_t grid_points) {
    if (points < 4) throw PreconditionError("two_body_control_sweep: need at least 4 points");
    if (!(e_max > e_min && e_min > 0.0)) throw PreconditionError("two_body_control_sweep: need e_max > e_min > 0");
    const auto rule = radial_rule(potential, frame.alpha, grid_points);
    TwoBodySweep out;
    out.lambda_star = critical_coupling(potential, frame, rule);
    std::vector<double> inv_e, r2;
    for (std::size_t i = 0; i < points; ++i) {
        const double e = e_max * std::pow(e_min / e_max, static_cast<double>(i) / static_cast<double>(points - 1));
        const double lambda = 1.0 / bs_max_eigenvalue(potential, frame, std::sqrt(e), rule);
        const auto st = twobody_bound_state(potential, frame, lambda, tail_radii, rule);
        if (!st) throw NumericalError("two_body_control_sweep: no bound state at lambda = " + num(lambda));
        SweepRecord r;
        r.lambda = lambda;
        r.bound = true;
        r.E3 = st->energy;
        r.k = st->z;
        r.r2_x = st->r2;
        r.rho2 = st->r2;
        r.rho2_qmc = st->r2;
        r.eps_subcritical = out.lambda_star - lambda;
        for (const auto& [R, m] : st->tail) r.tail.push_back({R, m, 0.0});
        out.records.push_back(r);
        inv_e.push_back(1.0 / std::abs(st->energy));
        r2.push_back(st->r2);
    }
    out.exponent = loglog_slope(inv_e, r2);
    out.spreading = spreading_diagnostic(out.records);
    return out;
}

RunResult run_two_critical(const ExperimentConfig& cfg, const RunOptions& opt) {
    Output o(cfg, opt);
    const auto base = cfg.system(0.0);
    const auto pairs = interacting_pairs(base);
    double lambda_star = std::numeric_limits<double>::infinity();
    nlohmann::json per_pair = nlohmann::json::array();
    std::vector<std::vector<std::string>> rows;
    std::size_t monotonicity_violations = 0;
    for (Pair p : pairs) {
        const auto& v = base.potential(p);
        const auto frame = jacobi_frame(base, p);
        const auto rule = radial_rule(v, frame.alpha, cfg.grid_points);
        const auto t0 = std::chrono::steady_clock::now();
        const double ls = critical_coupling(v, frame, rule);
        o.log(std::string(to_string(p)) + ": lambda* = " + num(ls) + " in " + num(seconds_since(t0)) + " s");
        const double mu0 = 1.0 / ls;
        const double oracle = oracle_critical_coupling(v, frame);
        lambda_star = std::min(lambda_star, ls);
        std::vector<double> zs, mus;
        std::size_t violations = 0;
        for (std::size_t i = 0; i < cfg.bs_z_count; ++i) {
            const double z = cfg.bs_z_max * static_cast<double>(i) / static_cast<double>(cfg.bs_z_count - 1);
            zs.push_back(z);
            mus.push_back(bs_max_eigenvalue(v, frame, z, rule));
            if (i > 0 && !(mus[i] < mus[i - 1])) ++violations;
        }
        monotonicity_violations += violations;
        per_pair.push_back({{"pair", to_string(p)},
                            {"potential", to_string(v.kind())},
                            {"lambda_star", ls},
                            {"mu0", mu0},
                            {"oracle_lambda_star", oracle},
                            {"relative_difference", std::abs(ls - oracle) / oracle},
                            {"z_grid", zs},
                            {"mu", mus},
                            {"monotonicity_violations", violations}});
        rows.push_back({std::string(to_string(p)), std::string(to_string(v.kind())), num(ls), num(oracle),
                        num(std::abs(ls - oracle) / oracle), num(mu0), std::to_string(violations)});
    }
    const double lambda = resolved_lambda(cfg, lambda_star);
    const auto margin = subcriticality_margin(base.with_lambda(lambda));
    if (!margin.satisfied) o.log("subcriticality violated at lambda = " + num(lambda));
    o.result.report["pairs"] = per_pair;
    o.result.report["lambda_star"] = lambda_star;
    o.result.report["subcriticality"] = margin_json(margin);
    o.result.report["subcriticality_violated"] = !margin.satisfied;
    o.result.report["monotonicity_violations"] = monotonicity_violations;
    o.write_csv(".csv", {"pair", "potential", "lambda_star", "oracle_lambda_star", "relative_difference", "mu0",
                         "monotonicity_violations"},
                rows);
    o.write_json();
    return o.result;
}

RunResult run_two_sweep(const ExperimentConfig& cfg, const RunOptions& opt) {
    Output o(cfg, opt);
    const auto base = cfg.system(0.0);
    const Pair p = interacting_pairs(base).front();
    const auto& v = base.potential(p);
    const auto frame = jacobi_frame(base, p);
    const auto radii = default_tail_radii(v.range() / frame.alpha);
    const auto sweep = two_body_control_sweep(v, frame, cfg.two_e_max, cfg.two_e_min, cfg.two_points, radii,
                                              cfg.grid_points);
    o.log("exponent " + num(sweep.exponent) + ", verdict " + std::string(to_string(sweep.spreading.verdict)));
    o.result.report["pair"] = to_string(p);
    o.result.report["control"] = control_json(sweep);
    o.write_csv(".csv", sweep_header(radii), sweep_rows("two", sweep.records));
    o.write_json();
    o.write(o.path("_plot.dat"), plot_data(o, sweep.records, sweep.spreading, "two"));
    return o.result;
}

RunResult run_ops_audit(const ExperimentConfig& cfg, const RunOptions& opt) {
    Output o(cfg, opt);
    const auto base = cfg.system(0.0);
    const auto pairs = interacting_pairs(base);
    const auto z_grid = default_z_grid(static_cast<int>(cfg.z_grid_count), cfg.z_min);
    const auto p_grid = default_p_grid(static_cast<int>(cfg.p_grid_count));
    double lambda_star = std::numeric_limits<double>::infinity();
    for (Pair p : pairs) lambda_star = std::min(lambda_star, critical_coupling(base.potential(p), jacobi_frame(base, p)));
    const double lambda = resolved_lambda(cfg, lambda_star);

    bool all_ok = true;
    nlohmann::json per_pair = nlohmann::json::array();
    std::vector<std::vector<std::string>> rows;
    for (Pair p : pairs) {
        const auto& v = base.potential(p);
        const auto frame = jacobi_frame(base, p);
        // cross-channel partner: the next interacting pair, or the pair itself
        const PairPotential* other = &v;
        for (int s = 1; s < 3; ++s) {
            const auto q = static_cast<Pair>((static_cast<int>(p) + s) % 3);
            if (!base.potential(q).is_zero()) {
                other = &base.potential(q);
                break;
            }
        }
        const auto constants = bound_constants(v, *other, frame);
        const auto t0 = std::chrono::steady_clock::now();
        const auto audit =
            fiber_uniformity_audit(v, frame, z_grid, p_grid, radial_rule(v, frame.alpha, cfg.grid_points));
        o.log(std::string(to_string(p)) + ": fiber audit in " + num(seconds_since(t0)) + " s, sup " +
              num(audit.sup_total));

        const double hs_bound = k2_hs_bound(constants);
        nlohmann::json hs = nlohmann::json::array();
        bool hs_ok = true;
        for (double z : cfg.hs_z) {
            const double val = k2_hs_norm_squared(constants, z);
            const bool ok = val <= hs_bound;
            hs_ok = hs_ok && ok;
            hs.push_back({{"z", z}, {"hs_norm_squared", val}, {"bound", hs_bound}, {"ok", ok}});
            rows.push_back({std::string(to_string(p)), "k2_hs", num(z), num(val), num(hs_bound), ok ? "1" : "0"});
        }
        const double cp_err = std::abs(constants.c_prime - 2.0 * std::numbers::pi);
        const double cdp_err = std::abs(constants.c_dprime - 1.0);
        const double planch = std::abs(constants.c_tilde * std::pow(constants.gamma, 3) - constants.other_l1) /
                              constants.other_l1;
        const bool constants_ok = cp_err <= 1e-8 && cdp_err <= 1e-8 && planch <= 1e-6;

        nlohmann::json contraction = nlohmann::json::array();
        bool contraction_ok = true;
        double prev_bound = std::numeric_limits<double>::infinity();
        for (double k : cfg.k_values) {
            const auto c = channel_contraction_norm(v, frame, lambda, k);
            bool ok = c.contraction && c.neumann_bound && std::isfinite(*c.neumann_bound);
            if (ok && *c.neumann_bound > prev_bound) ok = false;  // k_values ascending
            if (c.neumann_bound) prev_bound = *c.neumann_bound;
            contraction_ok = contraction_ok && ok;
            contraction.push_back(c);
            rows.push_back({std::string(to_string(p)), "contraction", num(k), num(c.lambda_mu),
                            c.neumann_bound ? num(*c.neumann_bound) : "inf", ok ? "1" : "0"});
        }
        for (std::size_t i = 0; i < audit.points.size(); ++i) {
            const auto& pt = audit.points[i];
            rows.push_back({std::string(to_string(p)), "fiber_k1", num(pt.norms.z), num(pt.norms.k1),
                            num(pt.bounds.k1), pt.k1_ok ? "1" : "0"});
            rows.push_back({std::string(to_string(p)), "fiber_k2", num(pt.norms.z), num(pt.norms.k2),
                            num(pt.bounds.k2), pt.k2_ok ? "1" : "0"});
        }
        const bool ok = audit.all_points_ok && audit.bounded && hs_ok && constants_ok;
        all_ok = all_ok && ok;
        per_pair.push_back({{"pair", to_string(p)},
                            {"constants", constants},
                            {"c_prime_error", cp_err},
                            {"c_dprime_error", cdp_err},
                            {"plancherel_relative_error", planch},
                            {"constants_ok", constants_ok},
                            {"fiber_audit", audit},
                            {"k2_hs", hs},
                            {"k2_hs_ok", hs_ok},
                            {"contraction", contraction},
                            {"contraction_ok", contraction_ok},
                            {"certificates_ok", ok}});
    }
    o.result.report["lambda"] = lambda;
    o.result.report["lambda_star"] = lambda_star;
    o.result.report["pairs"] = per_pair;
    o.result.report["certificates_ok"] = all_ok;
    o.write_csv(".csv", {"pair", "check", "z_or_k", "value", "bound", "ok"}, rows);
    o.write_json();
    return o.result;
}

RunResult run_ims_audit(const ExperimentConfig& cfg, const RunOptions& opt) {
    Output o(cfg, opt);
    double lambda_star = std::numeric_limits<double>::infinity();
    const auto base = cfg.system(0.0);
    for (Pair p : interacting_pairs(base)) {
        lambda_star = std::min(lambda_star, critical_coupling(base.potential(p), jacobi_frame(base, p)));
    }
    const auto sys = base.with_lambda(resolved_lambda(cfg, lambda_star));
    const auto part = build_partition(sys, cfg.ims_delta, cfg.ims_theta);
    const auto samples = ims_sample_mesh(cfg.ims_samples, cfg.ims_r_min, cfg.ims_r_max, derive_seed(cfg.seed, 0));
    const auto identity = ims_identity_check(sys, part, samples);
    const auto cone_mesh =
        ims_sample_mesh(cfg.ims_samples, std::max(1.5, cfg.ims_r_min), std::max(3.0, cfg.ims_r_max),
                        derive_seed(cfg.seed, 1));
    const auto cone = verify_support_cone(part, cone_mesh);
    const auto decay = gradient_decay_audit(part, cfg.ims_gradient_radii, 4096, derive_seed(cfg.seed, 2));
    const auto fd = gradient_fd_check(part, cfg.ims_fd_points, cfg.ims_fd_step, derive_seed(cfg.seed, 3));
    const bool ok = identity.passes && identity.max_partition_error <= 1e-10 && cone.passes && cone.measured_c > 0.0 &&
                    decay.passes && fd.passes;
    o.log("partition error " + num(identity.max_partition_error) + ", cone C " + num(cone.measured_c) +
          ", fd " + num(fd.max_relative_difference));
    o.result.report["covering_margin"] = part.covering_margin();
    o.result.report["theta"] = part.theta();
    o.result.report["delta"] = part.delta();
    o.result.report["identity"] = identity;
    o.result.report["cone"] = cone;
    o.result.report["gradient_decay"] = decay;
    o.result.report["gradient_check"] = fd;
    o.result.report["audits_ok"] = ok;
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < decay.radii.size(); ++i) {
        rows.push_back({num(decay.radii[i]), num(decay.max_grad_sq[i]), num(decay.scaled[i])});
    }
    o.write_csv(".csv", {"radius", "max_grad_sq", "scaled"}, rows);
    o.write_json();
    return o.result;
}

RunResult run_three_sweep(const ExperimentConfig& cfg, const RunOptions& opt) {
    Output o(cfg, opt);
    const auto base = cfg.system(0.0);
    const double lambda_star = min_pair_critical_coupling(base);
    std::vector<double> lambdas;
    if (!cfg.sweep_lambdas.empty()) {
        for (double f : cfg.sweep_lambdas) lambdas.push_back(f * lambda_star);
    } else {
        lambdas.push_back(resolved_lambda(cfg, lambda_star));
    }
    std::vector<SweepRecord> records;
    nlohmann::json checks = nlohmann::json::array();
    for (std::size_t n = 0; n < lambdas.size(); ++n) {
        const auto t0 = std::chrono::steady_clock::now();
        records.push_back(three_body_record(cfg, base, lambdas[n], cfg.symmetric, n));
        const auto& r = records.back();
        o.log("lambda " + num(r.lambda) + ": E3 " + num(r.E3) + " (" + std::to_string(r.basis_size) + " functions, " +
              num(seconds_since(t0)) + " s)");
        // deepest two-body level at the same coupling
        std::optional<double> e2;
        for (Pair p : interacting_pairs(base)) {
            const auto e = twobody_binding_energy(base.potential(p), jacobi_frame(base, p), lambdas[n]);
            if (e && (!e2 || *e < *e2)) e2 = *e;
        }
        nlohmann::json c{{"lambda", lambdas[n]}, {"E3", r.E3}};
        if (e2) {
            c["E2"] = *e2;
            c["relative_difference"] = std::abs(r.E3 - *e2) / std::abs(*e2);
        } else {
            c["E2"] = nullptr;
        }
        checks.push_back(c);
    }
    const auto radii = records.front().tail.empty() ? std::vector<double>{} : [&] {
        std::vector<double> rr;
        for (const auto& t : records.front().tail) rr.push_back(t.R);
        return rr;
    }();
    o.result.report["lambda_star"] = lambda_star;
    o.result.report["records"] = records;
    o.result.report["two_body_comparison"] = checks;
    o.write_csv(".csv", sweep_header(radii), sweep_rows("three", records));
    o.write_json();
    return o.result;
}

RunResult run_absorb(const ExperimentConfig& cfg, const RunOptions& opt) {
    Output o(cfg, opt);
    const auto base = cfg.system(0.0);
    const auto pairs = interacting_pairs(base);
    if (!base.equal_masses() && cfg.symmetric) {
        throw ConfigError("key 'symmetric': the absorption experiment with symmetrization needs equal masses");
    }
    const double lambda_star = min_pair_critical_coupling(base);

    // two-body control
    const auto& v = base.potential(pairs.front());
    const auto frame = jacobi_frame(base, pairs.front());
    const auto two_radii = default_tail_radii(v.range() / frame.alpha);
    auto t0 = std::chrono::steady_clock::now();
    const auto control = two_body_control_sweep(v, frame, cfg.two_e_max, cfg.two_e_min, cfg.two_points, two_radii,
                                                cfg.grid_points);
    o.log("two-body control: exponent " + num(control.exponent) + " (" + num(seconds_since(t0)) + " s)");

    // three-body threshold
    CriticalOptions copt;
    copt.reference_fraction = cfg.reference_fraction;
    copt.refine_offset = cfg.refine_offset;
    copt.width_fraction = cfg.width_fraction;
    copt.energy_fraction = cfg.energy_fraction;
    t0 = std::chrono::steady_clock::now();
    const auto search =
        critical_search(base, cfg.budget, derive_seed(cfg.seed, 1000), cfg.symmetric, copt, growth_options(cfg));
    const auto& crit = search.coupling;
    o.log("lambda_cr in [" + num(crit.lambda_lo) + ", " + num(crit.lambda_hi) + "], lambda* " + num(lambda_star) +
          " (" + num(seconds_since(t0)) + " s)");

    std::vector<double> lambdas, targets;
    if (!cfg.sweep_lambdas.empty()) {
        for (double f : cfg.sweep_lambdas) lambdas.push_back(f * lambda_star);
    } else {
        for (std::size_t n = 0; n < cfg.sweep_points; ++n) {
            const double e = cfg.e_max_fraction * search.energy_scale *
                             std::pow(10.0, -cfg.decades * static_cast<double>(n) /
                                                static_cast<double>(cfg.sweep_points - 1));
            targets.push_back(e);
            try {
                lambdas.push_back(coupling_for_energy(search.matrices, -e, crit.lambda_lo, lambda_star));
            } catch (const NumericalError&) {
                throw HypothesisError("subcriticality violated: |E3| = " + num(e) + " needs lambda >= lambda* = " +
                                      num(lambda_star));
            }
        }
    }

    std::vector<SweepRecord> records;
    for (std::size_t n = 0; n < lambdas.size(); ++n) {
        t0 = std::chrono::steady_clock::now();
        std::optional<double> target;
        if (!targets.empty()) target = -targets[n];
        records.push_back(three_body_record(cfg, base, lambdas[n], cfg.symmetric, n, &search, target, lambda_star));
        const auto& r = records.back();
        const auto margin = subcriticality_margin(base.with_lambda(r.lambda));
        if (!margin.satisfied) {
            throw HypothesisError("subcriticality violated at lambda = " + num(r.lambda) + " (lambda* = " + num(lambda_star) +
                                  ")");
        }
        o.log("lambda " + num(r.lambda) + ": E3 " + num(r.E3) + ", <rho^2> " + num(r.rho2) + " (" +
              num(seconds_since(t0)) + " s)");
    }
    const auto spreading = spreading_diagnostic(records);
    o.log("verdict " + std::string(to_string(spreading.verdict)) + ", rho2 ratio " + num(spreading.rho2_ratio));

    double eps_min = std::numeric_limits<double>::infinity();
    for (const auto& r : records) eps_min = std::min(eps_min, r.eps_subcritical);

    std::vector<double> radii;
    for (const auto& t : records.front().tail) radii.push_back(t.R);
    o.result.report["lambda_star"] = lambda_star;
    o.result.report["critical"] = crit;
    o.result.report["critical_first_stage"] = search.first_stage_lambda_cr;
    o.result.report["energy_scale"] = search.energy_scale;
    o.result.report["window_nonempty"] = crit.lambda_hi < lambda_star;
    o.result.report["energy_targets"] = targets;
    o.result.report["records"] = records;
    o.result.report["spreading"] = spreading;
    o.result.report["verdict"] = to_string(spreading.verdict);
    o.result.report["eps_subcritical_min"] = eps_min;
    o.result.report["subcritical_throughout"] = eps_min > 0.0;
    o.result.report["kinetic"] = {{"max", spreading.kinetic_max},
                                  {"median", spreading.kinetic_median},
                                  {"bounded", spreading.kinetic_bounded}};
    o.result.report["control"] = control_json(control);

    auto rows = sweep_rows("two", control.records);
    for (auto& r : sweep_rows("three", records)) rows.push_back(std::move(r));
    if (two_radii.size() != radii.size()) throw NumericalError("run_absorb: tail radii differ between systems");
    o.write_csv(".csv", sweep_header(radii), rows);
    o.write_json();
    o.write(o.path("_plot.dat"), plot_data(o, records, spreading, "three"));
    o.write(o.path("_control_plot.dat"), plot_data(o, control.records, control.spreading, "two"));
    return o.result;
}

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt) {
    switch (cfg.kind) {
        case ExperimentKind::two_critical: return run_two_critical(cfg, opt);
        case ExperimentKind::two_sweep: return run_two_sweep(cfg, opt);
        case ExperimentKind::ops_audit: return run_ops_audit(cfg, opt);
        case ExperimentKind::ims_audit: return run_ims_audit(cfg, opt);
        case ExperimentKind::three_sweep: return run_three_sweep(cfg, opt);
        case ExperimentKind::absorb: return run_absorb(cfg, opt);
    }
    throw ConfigError("unknown experiment kind");
}

}  // namespace threshold_lab
