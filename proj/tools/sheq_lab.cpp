// Command-line front end: one subcommand per suite, all inputs from a config file.

#include <chrono>
#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <sheq/harness.hpp>

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> trials;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "experiment config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "master seed (overrides the config)");
    sub->add_option("--out", c.out, "output directory (overrides the config)");
    sub->add_option("--trials", c.trials, "Monte Carlo trials (overrides the config)");
}

int execute(const std::string& suite, const Common& c, const std::function<void(sheq::ExperimentConfig&)>& extra) {
    sheq::ExperimentConfig cfg;
    try {
        cfg = sheq::load_config(c.config);
        cfg.suites = {suite};
        if (c.seed) cfg.solver.seed = *c.seed;
        if (c.out) cfg.out_dir = *c.out;
        if (c.trials) {
            cfg.trials = *c.trials;
            cfg.coupling_trials = *c.trials;
        }
        if (extra) extra(cfg);
        sheq::revalidate(cfg);
    } catch (const sheq::ConfigError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const sheq::RunManifest man = sheq::run(cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << man.text();
    std::cerr << "wall_seconds = " << secs << '\n';
    for (const auto& s : man.suites)
        if (!s.error.empty()) std::cerr << s.name << ": " << s.error << '\n';
    return man.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic heat equation laboratory"};
    app.require_subcommand(1);

    Common cc, cs, cm, ct, cp;
    auto* constants = app.add_subcommand("constants", "evaluate every constant of the bounds");
    add_common(constants, cc);
    auto* simulate = app.add_subcommand("simulate", "simulate trajectories of the mild solution");
    add_common(simulate, cs);
    auto* moments = app.add_subcommand("verify-moments", "Monte Carlo moment checks of the stochastic convolution");
    add_common(moments, cm);
    std::vector<std::string> checks;
    std::optional<double> p, p_small, eps;
    moments->add_option("--check", checks, "pointwise, sup, sup-small-p, factorization (repeatable)");
    moments->add_option("--p", p, "moment order for the sup check");
    moments->add_option("--p-small", p_small, "moment order for the pointwise and small-p checks");
    moments->add_option("--eps", eps, "epsilon of the small-p bound");
    auto* t2 = app.add_subcommand("verify-t2", "transportation inequality check");
    add_common(t2, ct);
    auto* couple = app.add_subcommand("couple", "coupled pairs and the Gronwall bound");
    add_common(couple, cp);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*constants) return execute("constants", cc, {});
        if (*simulate) return execute("simulate", cs, {});
        if (*moments)
            return execute("verify-moments", cm, [&](sheq::ExperimentConfig& cfg) {
                if (!checks.empty()) cfg.moment_checks = checks;
                if (p) cfg.p = *p;
                if (p_small) cfg.p_small = *p_small;
                if (eps) cfg.eps = *eps;
            });
        if (*t2) return execute("verify-t2", ct, {});
        if (*couple) return execute("couple", cp, {});
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 1;
}
