#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "threshold_lab/config.hpp"
#include "threshold_lab/errors.hpp"
#include "threshold_lab/experiments.hpp"
#include "threshold_lab/parallel.hpp"

using namespace threshold_lab;

int main(int argc, char** argv) {
    CLI::App app{"threshold_lab: critical couplings, operator audits and three-body threshold sweeps"};
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::optional<unsigned> threads;
    bool quiet = false;
    app.add_option("--config", config_path, "experiment config file")->required();
    app.add_option("--seed", seed, "overrides the config seed");
    app.add_option("--out", out_dir, "output directory (overrides out_dir)");
    app.add_option("--threads", threads, "worker threads; results do not depend on it");
    app.add_flag("--quiet", quiet, "no progress output");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (!threads) {
        if (const char* env = std::getenv("THRESHOLD_LAB_THREADS")) {
            try {
                threads = static_cast<unsigned>(std::stoul(env));
            } catch (const std::exception&) {
                std::cerr << "error: THRESHOLD_LAB_THREADS must be a nonnegative integer\n";
                return 2;
            }
        }
    }
    if (threads) set_thread_count(*threads);

    try {
        auto cfg = load_config(config_path);
        if (seed) cfg.seed = *seed;
        RunOptions opt;
        opt.out_dir = out_dir;
        opt.quiet = quiet;
        const auto result = run_experiment(cfg, opt);
        if (!quiet) {
            for (const auto& f : result.files) std::cerr << "wrote " << f << '\n';
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const PreconditionError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 2;
    } catch (const HypothesisError& e) {
        std::cerr << "hypothesis violated: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 1;
    }
}
