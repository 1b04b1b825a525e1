#include "homoglab/run.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "homoglab/error.hpp"
#include "homoglab/examples.hpp"
#include "homoglab/homogenize.hpp"
#include "homoglab/mu.hpp"
#include "homoglab/rng.hpp"
#include "json.hpp"

#ifndef HOMOGLAB_VERSION
#define HOMOGLAB_VERSION "unknown"
#endif

namespace homoglab {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

class DirectoryLock {
public:
    explicit DirectoryLock(fs::path path) : path_(std::move(path)) {
        FILE* f = std::fopen(path_.c_str(), "wx");
        if (!f)
            throw ValidationError("out: " + path_.parent_path().string() + " is locked by another run (" +
                                  path_.filename().string() + " exists)");
        std::fclose(f);
    }
    ~DirectoryLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    fs::path path_;
};

class Csv {
public:
    explicit Csv(const std::vector<std::string>& header) { row_strings(header); }
    template <class... T>
    void row(const T&... cells) {
        std::vector<std::string> v{cell(cells)...};
        row_strings(v);
    }
    const std::string& text() const { return text_; }

private:
    static std::string cell(double x) { return format_number(x); }
    static std::string cell(int x) { return std::to_string(x); }
    static std::string cell(std::size_t x) { return std::to_string(x); }
    static std::string cell(long long x) { return std::to_string(x); }
    static std::string cell(const std::string& x) { return x; }
    static std::string cell(const char* x) { return x; }
    void row_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
    }
    std::string text_;
};

struct Context {
    const ExperimentConfig& config;
    fs::path out;
    RunRecord& record;
    std::shared_ptr<const TileEnsemble> ensemble;
    ExperimentOptions options;

    void write(const std::string& name, const std::string& contents) {
        write_atomic(out / name, contents);
        record.outputs.push_back(name);
    }
    void fail(const std::string& stage, const std::vector<std::uint64_t>& failed) {
        for (auto k : failed) record.failures.push_back({stage, k});
    }
};

PlotSeries positive_series(const std::string& label, const std::vector<double>& x, const std::vector<double>& y) {
    PlotSeries s{label, {}, {}};
    for (std::size_t i = 0; i < x.size(); ++i)
        if (y[i] > 0.0 && std::isfinite(y[i])) {
            s.x.push_back(x[i]);
            s.y.push_back(y[i]);
        }
    return s;
}

Csv balance_csv(const BalanceResult& b) {
    Csv csv({"step", "lo", "hi", "s", "gap"});
    for (std::size_t i = 0; i < b.history.size(); ++i)
        csv.row(i, b.history[i].lo, b.history[i].hi, b.history[i].s, b.history[i].gap);
    return csv;
}

void run_mu(Context& ctx) {
    const auto& c = ctx.config;
    const int max_m = *std::max_element(c.ms.begin(), c.ms.end());
    struct Row {
        int m;
        std::string cube;
        double s;
        MuEstimate mu, mustar;
    };
    std::vector<std::vector<Row>> rows(static_cast<std::size_t>(c.n));
    const auto errors = parallel_for(rows.size(), ctx.options.workers, [&](std::size_t k) {
        const auto r = std::make_shared<const Realization>(experiment_realization(ctx.ensemble, max_m, c.seed, k));
        const OperatorField fa = field_of(r).translate(c.a);
        for (int m : c.ms) {
            std::vector<TriadicCube> cubes{TriadicCube{m, {0, 0}}};
            if (c.mu_all_cubes && m < max_m) cubes = subcubes(TriadicCube{max_m, {0, 0}}, max_m - m);
            for (const auto& cube : cubes)
                for (double s : c.ss) {
                    Row row{m, std::to_string(cube.k[0]) + ":" + std::to_string(cube.k[1]), s,
                            mu_estimate(fa.shift(s), cube, ctx.options.mu),
                            mu_estimate(fa.star().shift(s), cube, ctx.options.mu)};
                    row.mu.u = GridFunction(Box{}, 3);
                    row.mustar.u = GridFunction(Box{}, 3);
                    rows[k].push_back(std::move(row));
                }
        }
    });
    std::vector<std::uint64_t> failed;
    for (std::size_t k = 0; k < rows.size(); ++k)
        if (!errors[k].empty()) failed.push_back(k);
    ctx.fail("mu", failed);
    if (failed.size() * 10 > rows.size())
        throw PartialFailure("mu: " + std::to_string(failed.size()) + " of " + std::to_string(rows.size()) +
                             " realizations failed");

    Csv csv({"cube_m", "cube_k", "s", "value", "cert_resid", "method", "seed", "realization", "quantity"});
    std::map<std::pair<int, double>, std::pair<std::vector<double>, std::vector<double>>> agg;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (!errors[k].empty()) continue;
        for (const auto& r : rows[k]) {
            csv.row(r.m, r.cube, r.s, r.mu.value, r.mu.cert_resid, r.mu.candidate, c.seed, k, "mu");
            csv.row(r.m, r.cube, r.s, r.mustar.value, r.mustar.cert_resid, r.mustar.candidate, c.seed, k, "mu_star");
            auto& a = agg[{r.m, r.s}];
            a.first.push_back(r.mu.value);
            a.second.push_back(r.mustar.value);
        }
    }
    ctx.write("mu.csv", csv.text());

    Csv curve({"m", "s", "N", "mean_mu", "mean_mustar", "m2_mu", "m2_mustar", "se_mu", "se_mustar", "se_m2_mu",
               "se_m2_mustar", "var_mu", "var_mustar"});
    for (const auto& [key, v] : agg) {
        const auto a = SampleStats::of(v.first), b = SampleStats::of(v.second);
        curve.row(key.first, key.second, a.n, a.mean, b.mean, a.m2, b.m2, a.se_mean, b.se_mean, a.se_m2, b.se_m2,
                  a.variance, b.variance);
    }
    ctx.write("curve.csv", curve.text());
}

void run_decay(Context& ctx) {
    const auto& c = ctx.config;
    double s_hat = 0.0;
    std::string s_source;
    if (c.s_hat) {
        s_hat = *c.s_hat;
        s_source = "config";
    } else {
        const int bn = c.balance_n > 0 ? c.balance_n : c.n;
        const auto b = balance_constant(ctx.ensemble, c.a, c.balance_m, bn, c.balance_tol, sub_seed(c.seed, 1),
                                        ctx.options);
        ctx.fail("balance", b.failed);
        s_hat = b.s_hat;
        s_source = "balance";
        ctx.write("balance.csv", balance_csv(b).text());
    }
    const auto d = variance_decay_experiment(ctx.ensemble, c.a, c.ms, c.n, s_hat, c.seed, ctx.options);
    ctx.fail("decay", d.failed);

    Csv curve({"m", "s", "N", "mean_mu", "mean_mustar", "m2_mu", "m2_mustar", "se_mu", "se_mustar", "se_m2_mu",
               "se_m2_mustar", "var_mu", "var_mustar", "mean_sum_sq", "se_sum_sq"});
    Csv samples({"m", "realization", "mu", "mustar"});
    std::vector<double> xs, ys;
    for (const auto& r : d.rows) {
        curve.row(r.m, s_hat, r.mu.n, r.mu.mean, r.mustar.mean, r.mu.m2, r.mustar.m2, r.mu.se_mean, r.mustar.se_mean,
                  r.mu.se_m2, r.mustar.se_m2, r.mu.variance, r.mustar.variance, r.sum_sq.mean, r.sum_sq.se_mean);
        for (std::size_t i = 0; i < r.mu_values.size(); ++i)
            samples.row(r.m, d.realizations[i], r.mu_values[i], r.mustar_values[i]);
        xs.push_back(r.m);
        ys.push_back(r.sum_sq.mean);
    }
    ctx.write("curve.csv", curve.text());
    ctx.write("samples.csv", samples.text());

    Csv fit({"quantity", "m", "value"});
    fit.row("s_hat", "", s_hat);
    fit.row("tau_hat", "", d.tau_hat);
    std::size_t ri = 0;
    for (const auto& r : d.rows)
        if (r.sum_sq.mean > 0.0 && ri < d.fit_residuals.size()) fit.row("residual", r.m, d.fit_residuals[ri++]);
    for (std::size_t i = 0; i < d.monotonicity_z.size(); ++i)
        fit.row("monotonicity_z", d.rows[i + 1].m, d.monotonicity_z[i]);
    ctx.write("fit.csv", fit.text());
    ctx.write("plot.svg", svg_plot("second moments at s = " + format_number(s_hat) + " (" + s_source + ")", "m",
                                   "E[mu^2] + E[mu_*^2]", {positive_series("sum", xs, ys)}, true));
}

void run_effective(Context& ctx) {
    const auto& c = ctx.config;
    const int bn = c.balance_n > 0 ? c.balance_n : c.n;
    const int cn = c.cell_n > 0 ? c.cell_n : c.n;
    const auto b =
        balance_constant(ctx.ensemble, c.a, c.balance_m, bn, c.balance_tol, sub_seed(c.seed, 1), ctx.options);
    ctx.fail("balance", b.failed);
    const auto cell = effective_from_cell(ctx.ensemble, c.a, c.deltas, c.cell_tiles, cn, sub_seed(c.seed, 2),
                                          c.cell_per_unit, ctx.options.workers);
    ctx.fail("cell", cell.failed);

    Csv eff({"estimator", "a11", "a12", "a22", "value", "se", "ci_low", "ci_high", "N", "failures"});
    eff.row("balance", c.a(0, 0), c.a(0, 1), c.a(1, 1), b.s_hat, b.se, b.ci_low, b.ci_high, bn, b.failures);
    eff.row("cell", c.a(0, 0), c.a(0, 1), c.a(1, 1), cell.value, cell.se, cell.ci_low, cell.ci_high, cn,
            cell.failures);
    ctx.write("effective.csv", eff.text());
    ctx.write("balance.csv", balance_csv(b).text());

    Csv sched({"delta", "mean_value"});
    for (std::size_t i = 0; i < cell.deltas.size(); ++i) sched.row(cell.deltas[i], cell.schedule_means[i]);
    sched.row(0.0, cell.value);
    ctx.write("schedule.csv", sched.text());

    const double diff = b.s_hat - cell.value;
    const double joint = 1.96 * std::sqrt(b.se * b.se + cell.se * cell.se);
    Csv fit({"quantity", "value"});
    fit.row("difference", diff);
    fit.row("joint_ci_halfwidth", joint);
    fit.row("agree", std::abs(diff) <= joint ? 1 : 0);
    fit.row("balance_slope", b.slope);
    ctx.write("fit.csv", fit.text());
}

void run_error(Context& ctx) {
    const auto& c = ctx.config;
    std::optional<LocalOperator> effective;
    Csv eff({"source", "a11", "a12", "a22", "c", "se_c"});
    if (c.effective == "cell") {
        const int cn = c.cell_n > 0 ? c.cell_n : c.n;
        const auto lin = effective_linear(ctx.ensemble, c.deltas, c.cell_tiles, std::max(cn, 1), sub_seed(c.seed, 2),
                                          c.cell_per_unit, ctx.options.workers);
        for (const auto& e : lin.basis) ctx.fail("cell", e.failed);
        effective = LocalOperator::linear(lin.op.a, lin.op.c, ctx.ensemble->lambda());
        eff.row("cell", lin.op.a(0, 0), lin.op.a(0, 1), lin.op.a(1, 1), lin.op.c, lin.basis[0].se);
    } else {
        effective = parse_tile(c.effective, c.lambda);
        eff.row(c.effective, "", "", "", effective->at_zero(), 0.0);
    }
    ctx.write("effective.csv", eff.text());

    const auto g = BoundaryData::quadratic(SymMatrix::zero(2), {0.0, 0.0}, c.g, {0.0, 0.0});
    const auto res = error_rate_experiment(ctx.ensemble, c.box, c.f, g, c.eps, c.n, c.seed, *effective,
                                           c.points_per_cell, ctx.options.workers);
    Csv curve({"eps", "grid_n", "N", "median_gap", "mean_gap", "min_gap", "max_gap", "failures"});
    Csv gaps({"eps", "realization", "gap"});
    std::vector<double> xs, ys;
    for (const auto& row : res.rows) {
        double mean = 0.0;
        for (double v : row.gaps) mean += v / static_cast<double>(row.gaps.size());
        const auto [mn, mx] = std::minmax_element(row.gaps.begin(), row.gaps.end());
        curve.row(row.eps, row.n, row.gaps.size(), row.median, mean, *mn, *mx, row.failures);
        std::size_t gi = 0;
        for (std::size_t k = 0; k < static_cast<std::size_t>(c.n); ++k) {
            if (std::find(row.failed.begin(), row.failed.end(), k) != row.failed.end()) continue;
            gaps.row(row.eps, k, row.gaps[gi++]);
        }
        ctx.fail("error-rate eps=" + format_number(row.eps), row.failed);
        xs.push_back(1.0 / row.eps);
        ys.push_back(row.median);
    }
    ctx.write("curve.csv", curve.text());
    ctx.write("gaps.csv", gaps.text());
    Csv fit({"quantity", "eps", "value"});
    fit.row("alpha_hat", "", res.alpha_hat);
    for (std::size_t i = 0; i < res.fit_residuals.size(); ++i)
        fit.row("residual", res.rows[i].eps, res.fit_residuals[i]);
    ctx.write("fit.csv", fit.text());
    ctx.write("plot.svg", svg_plot("median sup-norm gap", "1/eps", "median gap", {positive_series("median", xs, ys)},
                                   true));
}

void run_envelope(Context& ctx) {
    const auto& c = ctx.config;
    Csv csv({"function", "hull", "mc", "mc_se", "z", "pass"});
    int failed = 0;
    for (int k = 0; k < c.n; ++k) {
        const auto u = random_smooth_function(sub_seed(c.seed, static_cast<std::uint64_t>(k)), c.envelope_grid);
        const Rect region = Rect::of(u.box());
        const double hull = subdiff_measure(u, region);
        const auto mc = mc_subdiff_measure(u, region, c.envelope_slopes, default_slope_box(u),
                                           sub_seed(c.seed, 1000000 + static_cast<std::uint64_t>(k)));
        const double z = mc.std_error > 0.0 ? (hull - mc.value) / mc.std_error : 0.0;
        const bool ok = std::abs(z) <= 3.0;
        failed += !ok;
        csv.row(k, hull, mc.value, mc.std_error, z, ok ? 1 : 0);
    }
    ctx.write("envelope.csv", csv.text());
    if (failed) ctx.record.message = std::to_string(failed) + " functions outside 3 sigma";
}

std::string manifest(const ExperimentConfig& c, const RunRecord& r) {
    std::ostringstream os;
    os << "homoglab " << HOMOGLAB_VERSION << '\n';
    os << "run_id = " << r.id << '\n';
    os << "kind = " << r.kind << '\n';
    os << "seed = " << c.seed << '\n';
    os << "\n[canonical]\n" << c.canonical();
    os << "\n[config]\n" << c.source;
    if (!c.source.empty() && c.source.back() != '\n') os << '\n';
    return os.str();
}

bool already_completed(const fs::path& log, const std::string& id) {
    std::ifstream in(log);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            if (j.value("id", "") == id && j.value("status", "") != "failed") return true;
        } catch (const nlohmann::json::exception&) {
            throw FormatError(log.string() + ": malformed record");
        }
    }
    return false;
}

}  // namespace

std::string format_number(double v) {
    if (v == 0.0) return "0";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_atomic(const fs::path& path, const std::string& contents) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
        out << contents;
        out.flush();
        if (!out) throw FormatError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string RunRecord::to_json() const {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["kind"] = kind;
    j["seed"] = seed;
    j["started"] = started;
    j["finished"] = finished;
    j["status"] = status;
    j["message"] = message;
    j["realizations"] = realizations;
    auto& f = j["failures"] = nlohmann::ordered_json::array();
    for (const auto& x : failures) f.push_back({{"stage", x.stage}, {"index", x.index}});
    j["outputs"] = outputs;
    return j.dump();
}

RunRecord run(ExperimentConfig config, const RunOptions& options) {
    if (options.seed) config.seed = *options.seed;
    if (options.workers) {
        if (*options.workers < 1) throw ValidationError("workers: must be at least 1");
        config.workers = *options.workers;
    }
    validate(config);
    const fs::path out = !options.out.empty() ? options.out : fs::path(config.out);
    if (out.empty()) throw ValidationError("out: no output directory (use --out or [experiment] out)");
    fs::create_directories(out);
    const DirectoryLock lock(out / ".lock");

    RunRecord record;
    record.id = config.run_id();
    record.kind = kind_name(config.kind);
    record.seed = config.seed;
    record.started = utc_now();
    record.realizations = static_cast<std::size_t>(config.n);
    const fs::path log = out / "runs.log";
    if (!options.force && already_completed(log, record.id))
        throw ValidationError("run " + record.id + " already recorded in " + log.string() + "; use --force to rerun");

    Context ctx{config, out, record, nullptr, {}};
    if (config.kind != ExperimentKind::EnvelopeCheck)
        ctx.ensemble = std::make_shared<const TileEnsemble>(config.ensemble());
    ctx.options.workers = config.workers;
    ctx.options.mu.per_unit = config.mu_per_unit;
    ctx.options.mu.optimize = config.mu_optimize;
    ctx.options.mu.budget = config.mu_budget;
    ctx.options.mu.cert_tol = config.mu_cert_tol;

    auto append = [&]() {
        record.finished = utc_now();
        std::ofstream logf(log, std::ios::app);
        logf << record.to_json() << '\n';
    };
    try {
        write_atomic(out / "manifest.txt", manifest(config, record));
        record.outputs.push_back("manifest.txt");
        switch (config.kind) {
            case ExperimentKind::Mu: run_mu(ctx); break;
            case ExperimentKind::MuDecay: run_decay(ctx); break;
            case ExperimentKind::Effective: run_effective(ctx); break;
            case ExperimentKind::ErrorRate: run_error(ctx); break;
            case ExperimentKind::EnvelopeCheck: run_envelope(ctx); break;
        }
    } catch (const Error& e) {
        record.status = "failed";
        record.message = e.what();
        append();
        throw;
    }
    record.status = record.failures.empty() ? "ok" : "partial";
    append();
    return record;
}

bool EnvelopeCheckReport::pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
}

EnvelopeCheckReport envelope_check(const GridFunction& u, const std::optional<Rect>& region_opt, int slopes,
                                   std::uint64_t seed) {
    EnvelopeCheckReport rep;
    const Rect region = region_opt ? *region_opt : Rect::of(u.box());
    const auto env = convex_envelope(u);
    rep.measure = subdiff_measure(env, region);
    double scale = 0.0;
    for (double v : u.values()) scale = std::max(scale, std::abs(v));
    const double tol = 1e-12 * (1.0 + scale);
    auto add = [&](const std::string& name, bool ok, const std::string& detail) {
        rep.checks.push_back({name, ok, detail});
    };

    double above = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) above = std::max(above, env.envelope.values()[k] - u.values()[k]);
    add("envelope below u", above <= tol, "max(envelope - u) = " + format_number(above));

    const int n = u.n();
    double corner = 0.0;
    for (int i : {0, n - 1})
        for (int j : {0, n - 1}) corner = std::max(corner, std::abs(env.envelope(i, j) - u(i, j)));
    add("envelope touches corners", corner <= tol, "max corner gap = " + format_number(corner));

    double conv = 0.0;
    for (int j = 1; j + 1 < n; ++j)
        for (int i = 1; i + 1 < n; ++i) {
            const auto& e = env.envelope;
            conv = std::min({conv, e(i - 1, j) - 2 * e(i, j) + e(i + 1, j), e(i, j - 1) - 2 * e(i, j) + e(i, j + 1),
                             e(i - 1, j - 1) - 2 * e(i, j) + e(i + 1, j + 1),
                             e(i - 1, j + 1) - 2 * e(i, j) + e(i + 1, j - 1)});
        }
    add("envelope convex along grid lines", conv >= -tol, "min second difference = " + format_number(conv));

    double atoms = 0.0;
    for (const auto& a : subdiff_atoms(env))
        if (region.contains(a.x, a.y)) atoms += a.volume;
    add("atoms sum to measure", std::abs(atoms - rep.measure) <= 1e-12 * (1.0 + rep.measure),
        "atoms = " + format_number(atoms));

    const SlopeBox box = default_slope_box(u);
    add("measure within slope box", rep.measure >= 0.0 && rep.measure <= box.area() * (1 + 1e-12),
        "box area = " + format_number(box.area()));

    rep.mc = mc_subdiff_measure(u, region, slopes, box, seed);
    const double diff = std::abs(rep.mc.value - rep.measure);
    const double allowed = rep.mc.std_error > 0.0 ? 3.0 * rep.mc.std_error : 1e-12 * (1.0 + rep.measure);
    add("Monte Carlo oracle within 3 sigma", diff <= allowed,
        "mc = " + format_number(rep.mc.value) + " +- " + format_number(rep.mc.std_error));
    return rep;
}

}  // namespace homoglab
