// Command-line runner for the homoglab experiments.

#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "homoglab/config.hpp"
#include "homoglab/error.hpp"
#include "homoglab/grid.hpp"
#include "homoglab/run.hpp"

namespace {

constexpr int kValidation = 2;
constexpr int kNumerical = 3;
constexpr int kPartial = 4;

struct RunFlags {
    std::string config;
    std::string out;
    int workers = 0;
    std::optional<std::uint64_t> seed;
    bool force = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool config_required) {
    auto* c = cmd->add_option("--config", f.config, "experiment configuration file");
    if (config_required) c->required();
    cmd->add_option("--out", f.out, "output directory (default: [experiment] out, else runs/<run id>)");
    cmd->add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", f.seed, "override the master seed");
    cmd->add_flag("--force", f.force, "rerun even if this run id is already recorded");
}

int run_experiment(const std::string& expected, const RunFlags& f) {
    auto config = homoglab::load_config(f.config);
    if (homoglab::kind_name(config.kind) != expected)
        throw homoglab::ValidationError("kind: config is '" + homoglab::kind_name(config.kind) + "' but the '" +
                                        expected + "' subcommand was used");
    homoglab::RunOptions opt;
    opt.force = f.force;
    if (f.workers > 0) opt.workers = f.workers;
    opt.seed = f.seed;
    if (!f.out.empty()) {
        opt.out = f.out;
    } else if (config.out.empty()) {
        if (f.seed) config.seed = *f.seed;
        opt.out = std::filesystem::path("runs") / config.run_id();
    }
    const auto record = homoglab::run(config, opt);
    const std::filesystem::path dir = opt.out.empty() ? std::filesystem::path(config.out) : opt.out;
    std::cerr << "run " << record.id << " (" << record.kind << ") " << record.status << " -> " << dir.string()
              << '\n';
    for (const auto& o : record.outputs) std::cerr << "  " << o << '\n';
    if (!record.failures.empty()) {
        std::cerr << record.failures.size() << " realization(s) failed and were excluded:";
        for (const auto& x : record.failures) std::cerr << ' ' << x.stage << '#' << x.index;
        std::cerr << '\n';
    }
    if (!record.message.empty()) std::cerr << record.message << '\n';
    if (expected == "mu") {
        std::ifstream in(dir / "mu.csv");
        std::cout << in.rdbuf();
    }
    if (expected == "envelope-check" && !record.message.empty()) return kNumerical;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical experiments on subadditive quantities and homogenization of random elliptic operators"};
    app.require_subcommand(1);

    RunFlags env_flags, mu_flags, decay_flags, eff_flags, err_flags;
    std::string grid;
    std::vector<double> region;
    int slopes = 200000;
    std::uint64_t mc_seed = 0;
    auto* env = app.add_subcommand("envelope-check", "convex envelope invariants and Monte Carlo oracle");
    env->add_option("--grid", grid, "grid function file");
    env->add_option("--region", region, "x0 y0 x1 y1")->expected(4);
    env->add_option("--slopes", slopes, "Monte Carlo slope samples")->check(CLI::PositiveNumber);
    env->add_option("--mc-seed", mc_seed, "Monte Carlo seed");
    add_run_flags(env, env_flags, false);

    auto* mu = app.add_subcommand("mu", "mu and mu_* estimates per cube, shift and realization");
    add_run_flags(mu, mu_flags, true);
    auto* decay = app.add_subcommand("mu-decay", "second moments of mu across scales at the balancing constant");
    add_run_flags(decay, decay_flags, true);
    auto* eff = app.add_subcommand("effective", "effective operator by balancing and by the cell problem");
    add_run_flags(eff, eff_flags, true);
    auto* err = app.add_subcommand("error-rate", "homogenization error against eps");
    add_run_flags(err, err_flags, true);

    std::string inject;
    auto* self = app.add_subcommand("selftest", "fast invariant suite");
    self->add_option("--inject", inject, "break a named tolerance to exercise failure reporting");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kValidation;
    }

    try {
        if (*env) {
            if (!env_flags.config.empty()) return run_experiment("envelope-check", env_flags);
            if (grid.empty()) throw homoglab::ValidationError("grid: give --grid <file> or --config <file>");
            const auto u = homoglab::load_grid(grid);
            std::optional<homoglab::Rect> r;
            if (!region.empty()) r = homoglab::Rect{region[0], region[1], region[2], region[3]};
            const auto rep = homoglab::envelope_check(u, r, slopes, mc_seed);
            std::cout << "envelope measure: " << homoglab::format_number(rep.measure) << '\n';
            std::cout << "Monte Carlo estimate: " << homoglab::format_number(rep.mc.value) << " +- "
                      << homoglab::format_number(rep.mc.std_error) << " (" << rep.mc.samples << " slopes)\n";
            for (const auto& c : rep.checks)
                std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
            return rep.pass() ? 0 : kNumerical;
        }
        if (*mu) return run_experiment("mu", mu_flags);
        if (*decay) return run_experiment("mu-decay", decay_flags);
        if (*eff) return run_experiment("effective", eff_flags);
        if (*err) return run_experiment("error-rate", err_flags);
        if (*self) {
            homoglab::SelftestOptions opt;
            opt.inject = inject;
            const auto rep = homoglab::selftest(opt);
            std::cout << rep.to_text();
            return rep.pass() ? 0 : kNumerical;
        }
    } catch (const homoglab::PartialFailure& e) {
        std::cerr << "partial failure: " << e.what() << '\n';
        return kPartial;
    } catch (const homoglab::NonConvergence& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const homoglab::BracketError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const homoglab::StencilError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const homoglab::Error& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kValidation;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kValidation;
    }
    return 0;
}
