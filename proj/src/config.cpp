#include "threshold_lab/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "threshold_lab/errors.hpp"

namespace threshold_lab {

std::string_view to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::two_critical: return "two_critical";
        case ExperimentKind::two_sweep: return "two_sweep";
        case ExperimentKind::ops_audit: return "ops_audit";
        case ExperimentKind::ims_audit: return "ims_audit";
        case ExperimentKind::three_sweep: return "three_sweep";
        case ExperimentKind::absorb: return "absorb";
    }
    return "absorb";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
    for (auto k : {ExperimentKind::two_critical, ExperimentKind::two_sweep, ExperimentKind::ops_audit,
                   ExperimentKind::ims_audit, ExperimentKind::three_sweep, ExperimentKind::absorb}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown experiment kind '" + std::string(name) + "'");
}

PairPotential PotentialSpec::build() const {
    switch (kind) {
        case PotentialKind::gaussian: return PairPotential::gaussian(range, amplitude);
        case PotentialKind::exponential: return PairPotential::exponential(range, amplitude);
        case PotentialKind::square_well: return PairPotential::square_well(range, amplitude);
        case PotentialKind::tabulated: {
            auto v = table_v;
            for (double& x : v) x *= amplitude;
            return PairPotential::tabulated(table_r, v);
        }
    }
    throw ConfigError("unknown potential kind");
}

ParticleSystem ExperimentConfig::system(double lam) const {
    return ParticleSystem(masses, {potentials[0].build(), potentials[1].build(), potentials[2].build()}, lam);
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

struct Field {
    int line;
    std::string key;
    std::string value;

    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError("line " + std::to_string(line) + ": key '" + key + "': " + what);
    }

    double number() const {
        double x = 0.0;
        const auto* end = value.data() + value.size();
        auto [p, ec] = std::from_chars(value.data(), end, x);
        if (ec != std::errc() || p != end) fail("expected a number, got '" + value + "'");
        return x;
    }

    double positive() const {
        const double x = number();
        if (!(x > 0.0)) fail("must be positive");
        return x;
    }

    std::uint64_t integer() const {
        std::uint64_t x = 0;
        const auto* end = value.data() + value.size();
        auto [p, ec] = std::from_chars(value.data(), end, x);
        if (ec != std::errc() || p != end) fail("expected a nonnegative integer, got '" + value + "'");
        return x;
    }

    std::size_t count(std::size_t min = 1) const {
        const auto n = integer();
        if (n < min) fail("must be at least " + std::to_string(min));
        return static_cast<std::size_t>(n);
    }

    bool boolean() const {
        if (value == "true" || value == "yes" || value == "1") return true;
        if (value == "false" || value == "no" || value == "0") return false;
        fail("expected true or false, got '" + value + "'");
    }

    std::vector<double> list() const {
        std::string s = value;
        for (char& c : s) {
            if (c == ',') c = ' ';
        }
        std::istringstream in(s);
        std::vector<double> out;
        std::string tok;
        while (in >> tok) {
            Field f{line, key, tok};
            out.push_back(f.number());
        }
        if (out.empty()) fail("empty list");
        return out;
    }
};

using Setter = std::function<void(ExperimentConfig&, const Field&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        t["kind"] = [](auto& c, const Field& f) {
            try {
                c.kind = parse_experiment_kind(f.value);
            } catch (const ConfigError& e) {
                f.fail(e.what());
            }
        };
        t["masses"] = [](auto& c, const Field& f) {
            const auto v = f.list();
            if (v.size() != 3) f.fail("expected three masses");
            for (int i = 0; i < 3; ++i) {
                if (!(v[i] > 0.0)) f.fail("masses must be positive");
                c.masses[i] = v[i];
            }
        };
        t["lambda"] = [](auto& c, const Field& f) {
            const double x = f.number();
            if (!(x >= 0.0)) f.fail("must be nonnegative");
            c.lambda = x;
        };
        t["lambda_fraction"] = [](auto& c, const Field& f) {
            const double x = f.number();
            if (!(x >= 0.0)) f.fail("must be nonnegative");
            c.lambda_fraction = x;
        };
        t["symmetric"] = [](auto& c, const Field& f) { c.symmetric = f.boolean(); };
        t["seed"] = [](auto& c, const Field& f) { c.seed = f.integer(); };
        t["grid_points"] = [](auto& c, const Field& f) { c.grid_points = f.count(8); };
        t["bs_z_count"] = [](auto& c, const Field& f) { c.bs_z_count = f.count(2); };
        t["bs_z_max"] = [](auto& c, const Field& f) { c.bs_z_max = f.positive(); };
        t["z_grid_count"] = [](auto& c, const Field& f) { c.z_grid_count = f.count(2); };
        t["z_min"] = [](auto& c, const Field& f) {
            c.z_min = f.positive();
            if (c.z_min >= 1.0) f.fail("must be below 1");
        };
        t["p_grid_count"] = [](auto& c, const Field& f) { c.p_grid_count = f.count(2); };
        t["hs_z"] = [](auto& c, const Field& f) {
            c.hs_z = f.list();
            for (double z : c.hs_z) {
                if (!(z > 0.0)) f.fail("z values must be positive");
            }
        };
        t["k_values"] = [](auto& c, const Field& f) {
            c.k_values = f.list();
            for (double k : c.k_values) {
                if (!(k >= 0.0)) f.fail("k values must be nonnegative");
            }
        };
        t["ims_samples"] = [](auto& c, const Field& f) { c.ims_samples = f.count(1); };
        t["ims_delta"] = [](auto& c, const Field& f) { c.ims_delta = f.positive(); };
        t["ims_theta"] = [](auto& c, const Field& f) { c.ims_theta = f.positive(); };
        t["ims_r_min"] = [](auto& c, const Field& f) { c.ims_r_min = f.positive(); };
        t["ims_r_max"] = [](auto& c, const Field& f) { c.ims_r_max = f.positive(); };
        t["ims_gradient_radii"] = [](auto& c, const Field& f) {
            c.ims_gradient_radii = f.list();
            for (double r : c.ims_gradient_radii) {
                if (!(r > 1.0)) f.fail("radii must exceed 1");
            }
        };
        t["ims_fd_points"] = [](auto& c, const Field& f) { c.ims_fd_points = f.count(1); };
        t["ims_fd_step"] = [](auto& c, const Field& f) { c.ims_fd_step = f.positive(); };
        t["two_e_max"] = [](auto& c, const Field& f) { c.two_e_max = f.positive(); };
        t["two_e_min"] = [](auto& c, const Field& f) { c.two_e_min = f.positive(); };
        t["two_points"] = [](auto& c, const Field& f) { c.two_points = f.count(4); };
        t["budget"] = [](auto& c, const Field& f) { c.budget = f.count(1); };
        t["candidates"] = [](auto& c, const Field& f) { c.candidates = f.count(1); };
        t["min_scale"] = [](auto& c, const Field& f) { c.min_scale = f.positive(); };
        t["max_scale"] = [](auto& c, const Field& f) { c.max_scale = f.positive(); };
        t["reference_fraction"] = [](auto& c, const Field& f) { c.reference_fraction = f.positive(); };
        t["refine_offset"] = [](auto& c, const Field& f) {
            c.refine_offset = f.number();
            if (!(c.refine_offset >= 0.0)) f.fail("must be nonnegative");
        };
        t["width_fraction"] = [](auto& c, const Field& f) { c.width_fraction = f.positive(); };
        t["energy_fraction"] = [](auto& c, const Field& f) { c.energy_fraction = f.positive(); };
        t["e_max_fraction"] = [](auto& c, const Field& f) { c.e_max_fraction = f.positive(); };
        t["decades"] = [](auto& c, const Field& f) { c.decades = f.positive(); };
        t["sweep_points"] = [](auto& c, const Field& f) { c.sweep_points = f.count(4); };
        t["sweep_lambdas"] = [](auto& c, const Field& f) {
            c.sweep_lambdas = f.list();
            for (double x : c.sweep_lambdas) {
                if (!(x > 0.0)) f.fail("coupling fractions must be positive");
            }
        };
        t["tail_points"] = [](auto& c, const Field& f) { c.tail_points = f.count(16); };
        t["tail_replicates"] = [](auto& c, const Field& f) { c.tail_replicates = f.count(2); };
        t["tail_inflation"] = [](auto& c, const Field& f) {
            c.tail_inflation = f.number();
            if (!(c.tail_inflation >= 1.0)) f.fail("must be at least 1");
        };
        t["out_dir"] = [](auto& c, const Field& f) { c.out_dir = f.value; };
        t["prefix"] = [](auto& c, const Field& f) {
            if (f.value.find_first_of("/\\") != std::string::npos) f.fail("must not contain path separators");
            c.prefix = f.value;
        };
        return t;
    }();
    return table;
}

void set_potential(PotentialSpec& p, const std::string& field, const Field& f) {
    if (field == "potential") {
        try {
            p.kind = parse_potential_kind(f.value);
        } catch (const ConfigError& e) {
            f.fail(e.what());
        }
    } else if (field == "range") {
        p.range = f.positive();
    } else if (field == "amplitude") {
        p.amplitude = f.number();
        if (!(p.amplitude >= 0.0)) f.fail("must be nonnegative");
    } else if (field == "table_r") {
        p.table_r = f.list();
    } else if (field == "table_v") {
        p.table_v = f.list();
    }
}

const std::set<std::string> kPotentialFields{"potential", "range", "amplitude", "table_r", "table_v"};

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig cfg;
    std::vector<Field> defaults;
    std::vector<std::pair<int, Field>> per_pair;
    std::set<std::string> seen;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (const auto h = raw.find('#'); h != std::string::npos) raw.erase(h);
        const std::string s = trim(raw);
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line) + ": expected 'key = value', got '" + s + "'");
        }
        Field f{line, trim(std::string_view(s).substr(0, eq)), trim(std::string_view(s).substr(eq + 1))};
        if (f.key.empty()) throw ConfigError("line " + std::to_string(line) + ": missing key");
        if (f.value.empty()) f.fail("missing value");
        if (!seen.insert(f.key).second) f.fail("duplicate key");

        const auto dot = f.key.find('.');
        const std::string base = f.key.substr(0, dot);
        if (kPotentialFields.count(base)) {
            if (dot == std::string::npos) {
                defaults.push_back(f);
            } else {
                int idx = -1;
                try {
                    std::string suffix = f.key.substr(dot + 1);
                    if (!suffix.empty() && suffix.front() == 'p') suffix.erase(0, 1);
                    idx = static_cast<int>(parse_pair(suffix));
                } catch (const Error&) {
                    f.fail("unknown pair suffix (expected p12, p13 or p23)");
                }
                per_pair.emplace_back(idx, f);
            }
            continue;
        }
        const auto it = setters().find(f.key);
        if (it == setters().end()) f.fail("unknown key");
        it->second(cfg, f);
    }
    for (auto& p : cfg.potentials) {
        for (const auto& f : defaults) set_potential(p, f.key, f);
    }
    for (const auto& [idx, f] : per_pair) {
        set_potential(cfg.potentials[static_cast<std::size_t>(idx)], f.key.substr(0, f.key.find('.')), f);
    }
    for (int i = 0; i < 3; ++i) {
        const auto& p = cfg.potentials[static_cast<std::size_t>(i)];
        const std::string name(to_string(static_cast<Pair>(i)));
        if (p.kind == PotentialKind::tabulated) {
            if (p.table_r.size() < 2 || p.table_r.size() != p.table_v.size()) {
                throw ConfigError("key 'table_r." + name + "': tabulated potential needs matching table_r/table_v lists");
            }
        }
        try {
            (void)p.build();
        } catch (const PreconditionError& e) {
            throw ConfigError("potential " + name + ": " + e.what());
        }
    }
    if (cfg.two_e_min >= cfg.two_e_max) throw ConfigError("key 'two_e_min': must be below two_e_max");
    if (cfg.ims_r_min >= cfg.ims_r_max) throw ConfigError("key 'ims_r_min': must be below ims_r_max");
    if (cfg.min_scale >= cfg.max_scale) throw ConfigError("key 'min_scale': must be below max_scale");
    if (cfg.tail_points < cfg.tail_replicates) throw ConfigError("key 'tail_points': fewer points than replicates");
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

nlohmann::json canonical_json(const ExperimentConfig& c) {
    nlohmann::json pots = nlohmann::json::array();
    for (const auto& p : c.potentials) {
        nlohmann::json j{{"kind", to_string(p.kind)}, {"range", p.range}, {"amplitude", p.amplitude}};
        if (p.kind == PotentialKind::tabulated) {
            j["table_r"] = p.table_r;
            j["table_v"] = p.table_v;
        }
        pots.push_back(j);
    }
    nlohmann::json j{{"kind", to_string(c.kind)},
                     {"masses", c.masses},
                     {"potentials", pots},
                     {"lambda_fraction", c.lambda_fraction},
                     {"symmetric", c.symmetric},
                     {"grid_points", c.grid_points},
                     {"bs_z_count", c.bs_z_count},
                     {"bs_z_max", c.bs_z_max},
                     {"z_grid_count", c.z_grid_count},
                     {"z_min", c.z_min},
                     {"p_grid_count", c.p_grid_count},
                     {"hs_z", c.hs_z},
                     {"k_values", c.k_values},
                     {"ims_samples", c.ims_samples},
                     {"ims_delta", c.ims_delta},
                     {"ims_theta", c.ims_theta},
                     {"ims_r_min", c.ims_r_min},
                     {"ims_r_max", c.ims_r_max},
                     {"ims_gradient_radii", c.ims_gradient_radii},
                     {"ims_fd_points", c.ims_fd_points},
                     {"ims_fd_step", c.ims_fd_step},
                     {"two_e_max", c.two_e_max},
                     {"two_e_min", c.two_e_min},
                     {"two_points", c.two_points},
                     {"budget", c.budget},
                     {"candidates", c.candidates},
                     {"min_scale", c.min_scale},
                     {"max_scale", c.max_scale},
                     {"reference_fraction", c.reference_fraction},
                     {"refine_offset", c.refine_offset},
                     {"width_fraction", c.width_fraction},
                     {"energy_fraction", c.energy_fraction},
                     {"e_max_fraction", c.e_max_fraction},
                     {"decades", c.decades},
                     {"sweep_points", c.sweep_points},
                     {"sweep_lambdas", c.sweep_lambdas},
                     {"tail_points", c.tail_points},
                     {"tail_replicates", c.tail_replicates},
                     {"tail_inflation", c.tail_inflation}};
    j["lambda"] = c.lambda ? nlohmann::json(*c.lambda) : nlohmann::json(nullptr);
    return j;
}

std::string config_hash(const ExperimentConfig& config) {
    const std::string text = canonical_json(config).dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace threshold_lab
