#include "homoglab/homogenize.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "homoglab/error.hpp"
#include "homoglab/rng.hpp"
#include "homoglab/solver.hpp"

namespace homoglab {

namespace {

void require_success(int failures, int total, double min_success, const std::string& what,
                     const std::vector<std::string>& errors = {}) {
    if (total <= 0) throw InvalidInput(what + ": no realizations requested");
    const double ok = static_cast<double>(total - failures) / total;
    if (ok < min_success || failures == total) {
        std::ostringstream os;
        os << what << ": " << failures << " of " << total << " realizations failed";
        for (const auto& e : errors)
            if (!e.empty()) {
                os << " (first error: " << e << ")";
                break;
            }
        throw PartialFailure(os.str());
    }
}

class ScaledTiles final : public TileSource {
public:
    ScaledTiles(std::shared_ptr<const TileSource> inner, double eps) : inner_(std::move(inner)), eps_(eps) {}
    const LocalOperator& at(std::span<const double> x) const override {
        std::vector<double> y(x.begin(), x.end());
        for (double& v : y) v /= eps_;
        return inner_->at(y);
    }
    bool x_independent() const override { return inner_->x_independent(); }
    int dim() const override { return inner_->dim(); }
    double lambda() const override { return inner_->lambda(); }
    void bounds(std::vector<double>& lo, std::vector<double>& hi) const override {
        inner_->bounds(lo, hi);
        for (double& v : lo) v *= eps_;
        for (double& v : hi) v *= eps_;
    }

private:
    std::shared_ptr<const TileSource> inner_;
    double eps_;
};

// Pairs (mu, mu_*) for every realization and level; failed realizations are dropped as a whole.
struct PairTable {
    std::vector<std::uint64_t> ok, failed;
    /// values[level][i] for the i-th successful realization.
    std::vector<std::vector<std::pair<double, double>>> values;
    int failures = 0;
};

using PairFn = std::function<std::pair<double, double>(const OperatorField& fa, const TriadicCube& cube,
                                                       std::size_t level)>;

PairTable collect_pairs(std::shared_ptr<const TileEnsemble> ensemble, const SymMatrix& a, const std::vector<int>& ms,
                        std::size_t levels_per_m, int n_samples, std::uint64_t seed, const ExperimentOptions& opt,
                        const PairFn& fn) {
    if (n_samples < 2) throw InvalidInput("n_samples must be at least 2");
    if (ms.empty()) throw InvalidInput("the list of levels m is empty");
    const int max_m = *std::max_element(ms.begin(), ms.end());
    const std::size_t levels = ms.size() * levels_per_m;
    std::vector<std::vector<std::pair<double, double>>> per(static_cast<std::size_t>(n_samples));
    const auto errors = parallel_for(static_cast<std::size_t>(n_samples), opt.workers, [&](std::size_t k) {
        const auto r = std::make_shared<const Realization>(experiment_realization(ensemble, max_m, seed, k));
        const OperatorField fa = field_of(r).translate(a);
        std::vector<std::pair<double, double>> row;
        row.reserve(levels);
        for (std::size_t im = 0; im < ms.size(); ++im) {
            const TriadicCube cube{ms[im], {0, 0}};
            for (std::size_t l = 0; l < levels_per_m; ++l) row.push_back(fn(fa, cube, l));
        }
        per[k] = std::move(row);
    });
    PairTable t;
    t.values.assign(levels, {});
    for (std::size_t k = 0; k < per.size(); ++k) {
        if (!errors[k].empty()) {
            ++t.failures;
            t.failed.push_back(k);
            continue;
        }
        t.ok.push_back(k);
        for (std::size_t l = 0; l < levels; ++l) t.values[l].push_back(per[k][l]);
    }
    require_success(t.failures, n_samples, opt.min_success, "mu statistics", errors);
    return t;
}

double median_of(std::vector<double> xs) {
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

std::vector<std::string> parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
    std::vector<std::string> errors(count);
    std::vector<std::exception_ptr> fatal(count);
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (const Error& e) {
                errors[i] = e.what();
                if (errors[i].empty()) errors[i] = "error";
            } catch (...) {
                fatal[i] = std::current_exception();
            }
        }
    };
    const int w = std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::size_t>(count, 1))));
    if (w == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < w; ++t) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    for (auto& f : fatal)
        if (f) std::rethrow_exception(f);
    return errors;
}

Realization experiment_realization(std::shared_ptr<const TileEnsemble> ensemble, int max_m, std::uint64_t seed,
                                   std::uint64_t k) {
    if (max_m < 0) throw InvalidInput("experiment levels must be nonnegative");
    const auto side = static_cast<std::int64_t>(std::llround(pow3(max_m)));
    const std::int64_t half = (side + 1) / 2;
    return sample_realization(std::move(ensemble), Window{-half, -half, side + 1, side + 1}, seed, k);
}

SampleStats SampleStats::of(const std::vector<double>& xs) {
    SampleStats s;
    s.n = static_cast<int>(xs.size());
    if (xs.empty()) return s;
    double sum = 0.0, sum2 = 0.0;
    for (double x : xs) {
        sum += x;
        sum2 += x * x;
    }
    s.mean = sum / s.n;
    s.m2 = sum2 / s.n;
    if (s.n > 1) {
        double v = 0.0, v2 = 0.0;
        for (double x : xs) {
            v += (x - s.mean) * (x - s.mean);
            v2 += (x * x - s.m2) * (x * x - s.m2);
        }
        s.variance = v / (s.n - 1);
        s.se_mean = std::sqrt(s.variance / s.n);
        s.se_m2 = std::sqrt(v2 / (s.n - 1) / s.n);
    }
    return s;
}

MomentCurve expected_mu_curve(std::shared_ptr<const TileEnsemble> ensemble, const SymMatrix& a,
                              const std::vector<int>& ms, const std::vector<double>& ss, int n_samples,
                              std::uint64_t seed, const ExperimentOptions& opt) {
    if (ss.empty()) throw InvalidInput("expected_mu_curve: the list of shifts s is empty");
    const auto table = collect_pairs(ensemble, a, ms, ss.size(), n_samples, seed, opt,
                                     [&](const OperatorField& fa, const TriadicCube& cube, std::size_t l) {
                                         const double mu = mu_estimate(fa.shift(ss[l]), cube, opt.mu).value;
                                         const double mus = mu_estimate(fa.star().shift(ss[l]), cube, opt.mu).value;
                                         return std::make_pair(mu, mus);
                                     });
    MomentCurve curve;
    curve.seed = seed;
    curve.a = a;
    for (std::size_t im = 0; im < ms.size(); ++im) {
        for (std::size_t l = 0; l < ss.size(); ++l) {
            MomentPoint p;
            p.m = ms[im];
            p.s = ss[l];
            p.failures = table.failures;
            p.realizations = table.ok;
            for (const auto& [mu, mus] : table.values[im * ss.size() + l]) {
                p.mu.push_back(mu);
                p.mustar.push_back(mus);
            }
            p.mu_stats = SampleStats::of(p.mu);
            p.mustar_stats = SampleStats::of(p.mustar);
            curve.points.push_back(std::move(p));
        }
    }
    return curve;
}

BalanceResult balance_constant(std::shared_ptr<const TileEnsemble> ensemble, const SymMatrix& a, int m, int n_samples,
                               double tol, std::uint64_t seed, const ExperimentOptions& opt) {
    if (!(tol > 0.0)) throw InvalidInput("balance_constant: tol must be positive");
    if (n_samples < 2) throw InvalidInput("balance_constant: n_samples must be at least 2");
    std::vector<OperatorField> fields;
    for (int k = 0; k < n_samples; ++k) {
        const auto r = std::make_shared<const Realization>(experiment_realization(ensemble, m, seed, k));
        fields.push_back(field_of(r).translate(a));
    }
    const TriadicCube cube{m, {0, 0}};
    std::vector<char> dead(static_cast<std::size_t>(n_samples), 0);
    BalanceResult res;
    // Per-realization differences mu(F_A - s) - mu((F_A)_* + s) for the live realizations.
    auto diffs = [&](double s) {
        std::vector<double> d(fields.size(), 0.0);
        const auto errors = parallel_for(fields.size(), opt.workers, [&](std::size_t k) {
            if (dead[k]) return;
            d[k] = mu_estimate(fields[k].shift(-s), cube, opt.mu).value -
                   mu_estimate(fields[k].star().shift(s), cube, opt.mu).value;
        });
        std::vector<double> out;
        for (std::size_t k = 0; k < fields.size(); ++k) {
            if (!errors[k].empty()) dead[k] = 1;
            if (!dead[k]) out.push_back(d[k]);
        }
        res.failures = static_cast<int>(std::count(dead.begin(), dead.end(), 1));
        res.failed.clear();
        for (std::size_t k = 0; k < dead.size(); ++k)
            if (dead[k]) res.failed.push_back(k);
        require_success(res.failures, n_samples, opt.min_success, "balance_constant", errors);
        return out;
    };
    auto gap = [&](double s) { return SampleStats::of(diffs(s)).mean; };

    const double reach = ensemble->k0() + ensemble->dim() * ensemble->lambda() * a.norm();
    double lo = -reach, hi = reach;
    const double g_lo = gap(lo), g_hi = gap(hi);
    res.history.push_back({lo, hi, lo, g_lo});
    res.history.push_back({lo, hi, hi, g_hi});
    if (hi - lo <= tol) {
        res.s_hat = 0.5 * (lo + hi);
        res.lo = lo;
        res.hi = hi;
        res.ci_low = lo;
        res.ci_high = hi;
        return res;
    }
    if (!(g_lo >= 0.0) || !(g_hi <= 0.0) || (g_lo == 0.0 && g_hi == 0.0)) {
        std::ostringstream os;
        os << "balance_constant: no sign change on [" << lo << ", " << hi << "]: g(" << lo << ") = " << g_lo << ", g("
           << hi << ") = " << g_hi;
        throw BracketError(os.str());
    }
    double s_hat = 0.5 * (lo + hi);
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        const double g = gap(mid);
        res.history.push_back({lo, hi, mid, g});
        if (g == 0.0) {
            lo = hi = mid;
            break;
        }
        (g > 0.0 ? lo : hi) = mid;
    }
    s_hat = 0.5 * (lo + hi);
    res.s_hat = s_hat;
    res.lo = lo;
    res.hi = hi;

    const double delta = std::max(4.0 * tol, 0.02 * (1.0 + std::abs(s_hat)));
    const double g_plus = gap(s_hat + delta), g_minus = gap(s_hat - delta);
    res.slope = (g_plus - g_minus) / (2.0 * delta);
    const auto at = SampleStats::of(diffs(s_hat));
    const double bisect_sd = (hi - lo) / std::sqrt(12.0);
    const double se_s = res.slope < 0.0 ? at.se_mean / -res.slope : INFINITY;
    res.se = std::sqrt(se_s * se_s + bisect_sd * bisect_sd);
    res.ci_low = s_hat - 1.96 * res.se;
    res.ci_high = s_hat + 1.96 * res.se;
    return res;
}

CellEstimate effective_from_cell(std::shared_ptr<const TileEnsemble> ensemble, const SymMatrix& a,
                                 const std::vector<double>& deltas, int tiles, int n_samples, std::uint64_t seed,
                                 int per_unit, int workers) {
    if (tiles < 1) throw InvalidInput("effective_from_cell: tiles must be positive");
    if (n_samples < 1) throw InvalidInput("effective_from_cell: n_samples must be positive");
    if (deltas.empty()) throw InvalidInput("effective_from_cell: empty delta schedule");
    for (std::size_t i = 1; i < deltas.size(); ++i)
        if (!(deltas[i] < deltas[i - 1])) throw InvalidInput("effective_from_cell: delta schedule must decrease");
    std::vector<double> value(static_cast<std::size_t>(n_samples));
    std::vector<std::vector<double>> sched(static_cast<std::size_t>(n_samples));
    const auto errors = parallel_for(value.size(), workers, [&](std::size_t k) {
        const auto r = std::make_shared<const Realization>(
            sample_realization(ensemble, Window{0, 0, tiles, tiles}, seed, k));
        const auto cs = solve_cell_schedule(r, a, deltas, per_unit);
        value[k] = -cs.extrapolated;
        for (double v : cs.values) sched[k].push_back(-v);
    });
    CellEstimate est;
    est.deltas = deltas;
    est.schedule_means.assign(deltas.size(), 0.0);
    for (std::size_t k = 0; k < value.size(); ++k) {
        if (!errors[k].empty()) {
            ++est.failures;
            est.failed.push_back(k);
            continue;
        }
        est.samples.push_back(value[k]);
        for (std::size_t i = 0; i < deltas.size(); ++i) est.schedule_means[i] += sched[k][i];
    }
    require_success(est.failures, n_samples, 0.9, "effective_from_cell", errors);
    for (double& v : est.schedule_means) v /= static_cast<double>(est.samples.size());
    const auto st = SampleStats::of(est.samples);
    est.value = st.mean;
    est.se = st.se_mean;
    est.ci_low = est.value - 1.96 * est.se;
    est.ci_high = est.value + 1.96 * est.se;
    return est;
}

EffectiveLinear effective_linear(std::shared_ptr<const TileEnsemble> ensemble, const std::vector<double>& deltas,
                                 int tiles, int n_samples, std::uint64_t seed, int per_unit, int workers) {
    if (ensemble->dim() != 2) throw InvalidInput("effective_linear: two-dimensional ensembles only");
    for (std::size_t t = 0; t < ensemble->size(); ++t)
        if (!std::holds_alternative<LinearOp>(ensemble->tiles()[t].kind()))
            throw InvalidInput("effective_linear: tiles[" + std::to_string(t) + "] is not linear");
    EffectiveLinear out;
    const std::vector<SymMatrix> basis{SymMatrix::zero(2), SymMatrix::from_upper(2, {1.0, 0.0, 0.0}),
                                       SymMatrix::from_upper(2, {0.0, 0.0, 1.0}),
                                       SymMatrix::from_upper(2, {0.0, 1.0, 0.0})};
    for (const auto& b : basis)
        out.basis.push_back(effective_from_cell(ensemble, b, deltas, tiles, n_samples, seed, per_unit, workers));
    const double c = out.basis[0].value;
    out.op.c = c;
    out.op.a = SymMatrix::from_upper(2, {c - out.basis[1].value, 0.5 * (c - out.basis[3].value), c - out.basis[2].value});
    return out;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidInput("fit_line: need at least two points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw InvalidInput("fit_line: abscissae are all equal");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    for (std::size_t i = 0; i < x.size(); ++i) f.residuals.push_back(y[i] - (f.intercept + f.slope * x[i]));
    return f;
}

DecayResult variance_decay_experiment(std::shared_ptr<const TileEnsemble> ensemble, const SymMatrix& a,
                                      const std::vector<int>& ms, int n_samples, double s_hat, std::uint64_t seed,
                                      const ExperimentOptions& opt) {
    const auto table = collect_pairs(ensemble, a, ms, 1, n_samples, seed, opt,
                                     [&](const OperatorField& fa, const TriadicCube& cube, std::size_t) {
                                         const double mu = mu_estimate(fa.shift(-s_hat), cube, opt.mu).value;
                                         const double mus = mu_estimate(fa.star().shift(s_hat), cube, opt.mu).value;
                                         return std::make_pair(mu, mus);
                                     });
    DecayResult res;
    res.s_hat = s_hat;
    res.realizations = table.ok;
    res.failed = table.failed;
    std::vector<std::vector<double>> sums;
    for (std::size_t im = 0; im < ms.size(); ++im) {
        std::vector<double> mu, mus, sum;
        for (const auto& [x, y] : table.values[im]) {
            mu.push_back(x);
            mus.push_back(y);
            sum.push_back(x * x + y * y);
        }
        DecayRow row;
        row.m = ms[im];
        row.mu = SampleStats::of(mu);
        row.mustar = SampleStats::of(mus);
        row.sum_sq = SampleStats::of(sum);
        row.mu_values = mu;
        row.mustar_values = mus;
        res.rows.push_back(row);
        sums.push_back(std::move(sum));
    }
    std::vector<double> xs, ys;
    for (const auto& r : res.rows)
        if (r.sum_sq.mean > 0.0) {
            xs.push_back(r.m);
            ys.push_back(std::log(r.sum_sq.mean));
        }
    if (xs.size() >= 2) {
        const auto fit = fit_line(xs, ys);
        res.tau_hat = std::exp(fit.slope);
        res.fit_residuals = fit.residuals;
    } else {
        res.tau_hat = 0.0;
    }
    for (std::size_t im = 0; im + 1 < ms.size(); ++im) {
        std::vector<double> d;
        for (std::size_t k = 0; k < sums[im].size(); ++k) d.push_back(sums[im + 1][k] - sums[im][k]);
        const auto st = SampleStats::of(d);
        res.monotonicity_z.push_back(st.se_mean > 0.0 ? st.mean / st.se_mean : (st.mean > 0.0 ? INFINITY : 0.0));
    }
    return res;
}

OperatorField scaled_field(std::shared_ptr<const Realization> realization, double eps) {
    if (!(eps > 0.0)) throw InvalidInput("scaled_field: eps must be positive");
    return OperatorField(std::make_shared<const ScaledTiles>(field_of(std::move(realization)).base_ptr(), eps));
}

ErrorRateResult error_rate_experiment(std::shared_ptr<const TileEnsemble> ensemble, const Box& box, double f,
                                      const BoundaryData& g, const std::vector<double>& eps_list, int n_samples,
                                      std::uint64_t seed, const LocalOperator& effective, int points_per_cell,
                                      int workers) {
    if (points_per_cell < 9) throw InvalidInput("error_rate: at least 9 grid points per eps-cell are required");
    if (eps_list.empty()) throw InvalidInput("error_rate: eps_list is empty");
    if (n_samples < 1) throw InvalidInput("error_rate: n_samples must be positive");
    ErrorRateResult res;
    for (std::size_t e = 0; e < eps_list.size(); ++e) {
        const double eps = eps_list[e];
        const double cells = box.side / eps * points_per_cell;
        if (!(eps > 0.0) || std::abs(cells - std::round(cells)) > 1e-6)
            throw InvalidInput("error_rate: box side is not a whole number of grid steps at eps = " +
                               std::to_string(eps));
        const int n = static_cast<int>(std::lround(cells)) + 1;
        const GridFunction rhs(box, n, f);
        const auto homogenized = solve_dirichlet(OperatorField::constant(effective), box, n, g, &rhs).u;
        const std::int64_t x0 = static_cast<std::int64_t>(std::floor(box.x0 / eps)) - 1;
        const std::int64_t y0 = static_cast<std::int64_t>(std::floor(box.y0 / eps)) - 1;
        const std::int64_t span = static_cast<std::int64_t>(std::ceil(box.side / eps)) + 3;
        std::vector<double> gaps(static_cast<std::size_t>(n_samples));
        const auto errors = parallel_for(gaps.size(), workers, [&](std::size_t k) {
            const auto r = std::make_shared<const Realization>(
                sample_realization(ensemble, Window{x0, y0, span, span}, sub_seed(seed, e), k));
            const auto u = solve_dirichlet(scaled_field(r, eps), box, n, g, &rhs).u;
            double gap = 0.0;
            for (std::size_t q = 0; q < u.size(); ++q)
                gap = std::max(gap, std::abs(u.values()[q] - homogenized.values()[q]));
            gaps[k] = gap;
        });
        ErrorRow row;
        row.eps = eps;
        row.n = n;
        for (std::size_t k = 0; k < gaps.size(); ++k) {
            if (errors[k].empty()) {
                row.gaps.push_back(gaps[k]);
            } else {
                ++row.failures;
                row.failed.push_back(k);
            }
        }
        require_success(row.failures, n_samples, 0.9, "error_rate", errors);
        row.median = median_of(row.gaps);
        res.rows.push_back(std::move(row));
    }
    if (res.rows.size() >= 2) {
        std::vector<double> xs, ys;
        for (const auto& r : res.rows) {
            xs.push_back(std::log(r.eps));
            ys.push_back(std::log(std::max(r.median, 1e-300)));
        }
        const auto fit = fit_line(xs, ys);
        res.alpha_hat = fit.slope;
        res.fit_residuals = fit.residuals;
    }
    return res;
}

}  // namespace homoglab
