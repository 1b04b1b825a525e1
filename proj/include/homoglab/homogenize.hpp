#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "homoglab/environment.hpp"
#include "homoglab/mu.hpp"

namespace homoglab {

/// Shared settings of the Monte Carlo experiments.
struct ExperimentOptions {
    MuConfig mu{.n = 0, .per_unit = 9, .optimize = false, .budget = 0, .cert_tol = 1e-8,
                .solve = {}, .extra_candidates = {}, .on_certified = {}};
    int workers = 1;
    /// Fraction of realizations that must succeed.
    double min_success = 0.9;
};

/// Realization k of the experiment seeded by `seed`, covering Q_m(0) for every m <= max_m.
Realization experiment_realization(std::shared_ptr<const TileEnsemble> ensemble, int max_m, std::uint64_t seed,
                                   std::uint64_t k);

/// Statistics of a sample: mean, second moment, and their standard errors.
struct SampleStats {
    int n = 0;
    double mean = 0.0;
    double m2 = 0.0;
    double variance = 0.0;
    double se_mean = 0.0;
    double se_m2 = 0.0;
    static SampleStats of(const std::vector<double>& xs);
};

struct MomentPoint {
    int m = 0;
    double s = 0.0;
    /// mu(Q_m, F_A + s) and mu(Q_m, (F_A)_* + s) per successful realization, in realization order.
    std::vector<double> mu, mustar;
    std::vector<std::uint64_t> realizations;
    int failures = 0;
    SampleStats mu_stats, mustar_stats;
};

struct MomentCurve {
    std::uint64_t seed = 0;
    SymMatrix a;
    std::vector<MomentPoint> points;
};

/// For every (m, s): N realizations (common across m and s), mu and mu_* estimates on Q_m(0).
MomentCurve expected_mu_curve(std::shared_ptr<const TileEnsemble> ensemble, const SymMatrix& a,
                              const std::vector<int>& ms, const std::vector<double>& ss, int n_samples,
                              std::uint64_t seed, const ExperimentOptions& options = {});

struct BalanceStep {
    double lo = 0.0, hi = 0.0, s = 0.0, gap = 0.0;
};

struct BalanceResult {
    double s_hat = 0.0;
    double lo = 0.0, hi = 0.0;
    /// Standard error of s_hat by the delta method, and the 95% interval.
    double se = 0.0;
    double ci_low = 0.0, ci_high = 0.0;
    double slope = 0.0;
    std::vector<BalanceStep> history;
    int failures = 0;
    std::vector<std::uint64_t> failed;
};

/// Bisection for the root of g(s) = mean mu(Q_m, F_A - s) - mean mu(Q_m, (F_A)_* + s) on
/// [-K0 - d Lambda |A|, K0 + d Lambda |A|], common realizations at every s.
BalanceResult balance_constant(std::shared_ptr<const TileEnsemble> ensemble, const SymMatrix& a, int m, int n_samples,
                               double tol, std::uint64_t seed, const ExperimentOptions& options = {});

struct CellEstimate {
    double value = 0.0;
    double se = 0.0;
    double ci_low = 0.0, ci_high = 0.0;
    /// -delta w(0) extrapolated to delta = 0, per successful realization.
    std::vector<double> samples;
    std::vector<double> deltas;
    /// Mean over realizations of -delta w(0) at each delta.
    std::vector<double> schedule_means;
    int failures = 0;
    std::vector<std::uint64_t> failed;
};

/// Approximate cell problem on L x L periodic tiles, N realizations.
CellEstimate effective_from_cell(std::shared_ptr<const TileEnsemble> ensemble, const SymMatrix& a,
                                 const std::vector<double>& deltas, int tiles, int n_samples, std::uint64_t seed,
                                 int per_unit = 3, int workers = 1);

/// Effective operator of an ensemble of linear tiles, F(B) = -tr(abar B) + cbar, from
/// cell estimates at the zero matrix and the three basis matrices.
struct EffectiveLinear {
    LinearOp op;
    /// Cell estimates at 0, E11, E22, E12 + E21.
    std::vector<CellEstimate> basis;
};
EffectiveLinear effective_linear(std::shared_ptr<const TileEnsemble> ensemble, const std::vector<double>& deltas,
                                 int tiles, int n_samples, std::uint64_t seed, int per_unit = 3, int workers = 1);

struct DecayRow {
    int m = 0;
    SampleStats mu, mustar;
    /// Per-realization mu^2 + mu_*^2.
    SampleStats sum_sq;
    std::vector<double> mu_values, mustar_values;
};

struct DecayResult {
    double s_hat = 0.0;
    std::vector<DecayRow> rows;
    double tau_hat = 0.0;
    std::vector<double> fit_residuals;
    /// Increase of the second-moment sum from m to m + 1 in units of the paired SE (positive means increase).
    std::vector<double> monotonicity_z;
    std::vector<std::uint64_t> realizations, failed;
};

/// Second moments of mu(Q_m, F_A - s_hat) and mu(Q_m, (F_A)_* + s_hat) with s_hat frozen;
/// tau_hat from a least-squares fit of log(sum) against m.
DecayResult variance_decay_experiment(std::shared_ptr<const TileEnsemble> ensemble, const SymMatrix& a,
                                      const std::vector<int>& ms, int n_samples, double s_hat, std::uint64_t seed,
                                      const ExperimentOptions& options = {});

/// Slope of the least-squares line through (x_i, y_i), with residuals.
struct LineFit {
    double slope = 0.0, intercept = 0.0;
    std::vector<double> residuals;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct ErrorRow {
    double eps = 0.0;
    int n = 0;
    std::vector<double> gaps;
    double median = 0.0;
    int failures = 0;
    std::vector<std::uint64_t> failed;
};

struct ErrorRateResult {
    std::vector<ErrorRow> rows;
    double alpha_hat = 0.0;
    std::vector<double> fit_residuals;
};

/// Operator field F(B, x / eps) of a realization.
OperatorField scaled_field(std::shared_ptr<const Realization> realization, double eps);

/// sup-norm gaps between the heterogeneous solution of F(D^2 u, x/eps) = f, u = g on the
/// boundary of `box`, and the homogenized solution with `effective`, at `points_per_cell`
/// grid intervals per eps-cell. alpha_hat is the slope of log median gap against log eps.
ErrorRateResult error_rate_experiment(std::shared_ptr<const TileEnsemble> ensemble, const Box& box, double f,
                                      const BoundaryData& g, const std::vector<double>& eps_list, int n_samples,
                                      std::uint64_t seed, const LocalOperator& effective, int points_per_cell = 9,
                                      int workers = 1);

/// Runs fn(i) for i in [0, count) on `workers` threads; returns per-index error messages
/// (empty on success) for failures of the library error hierarchy.
std::vector<std::string> parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace homoglab
