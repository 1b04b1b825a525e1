#include <gtest/gtest.h>

#include <cmath>

#include "homoglab/error.hpp"
#include "homoglab/homogenize.hpp"

using namespace homoglab;

namespace {

std::shared_ptr<const TileEnsemble> checkerboard() {
    return std::make_shared<const TileEnsemble>(TileEnsemble::checkerboard());
}

std::shared_ptr<const TileEnsemble> single(const LocalOperator& op) {
    return std::make_shared<const TileEnsemble>(TileEnsemble::single(op, 4.0, 4.0));
}

ExperimentOptions coarse(int per_unit = 3) {
    ExperimentOptions o;
    o.mu.per_unit = per_unit;
    return o;
}

}  // namespace

TEST(SampleStatsTest, MomentsAndErrors) {
    const auto s = SampleStats::of({1.0, 2.0, 3.0, 4.0});
    EXPECT_EQ(s.n, 4);
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_DOUBLE_EQ(s.m2, 7.5);
    EXPECT_NEAR(s.variance, 5.0 / 3.0, 1e-14);
    EXPECT_NEAR(s.se_mean, std::sqrt(5.0 / 3.0 / 4.0), 1e-14);
    EXPECT_GE(s.m2, s.mean * s.mean);
}

TEST(FitLine, ExactLine) {
    const auto f = fit_line({0, 1, 2, 3}, {1, 3, 5, 7});
    EXPECT_NEAR(f.slope, 2.0, 1e-14);
    EXPECT_NEAR(f.intercept, 1.0, 1e-14);
    for (double r : f.residuals) EXPECT_NEAR(r, 0.0, 1e-14);
    EXPECT_THROW(fit_line({1, 1}, {0, 1}), InvalidInput);
}

TEST(ParallelFor, CollectsLibraryErrorsPerIndex) {
    std::vector<int> hit(6, 0);
    const auto errors = parallel_for(6, 3, [&](std::size_t i) {
        if (i == 4) throw NonConvergence("stuck");
        hit[i] = 1;
    });
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(errors[i].empty(), i != 4);
        EXPECT_EQ(hit[i], i != 4 ? 1 : 0);
    }
    EXPECT_THROW(parallel_for(2, 1, [](std::size_t) { throw std::runtime_error("x"); }), std::runtime_error);
}

TEST(MomentCurveTest, DeterministicEnsembleHasZeroVariance) {
    const auto ens = single(LocalOperator::linear(SymMatrix::diag({1.0, 2.0}), 1.0, 4.0));
    const auto curve = expected_mu_curve(ens, SymMatrix::zero(2), {0, 1}, {-0.5, 0.5}, 3, 11, coarse());
    ASSERT_EQ(curve.points.size(), 4u);
    for (const auto& p : curve.points) {
        EXPECT_EQ(p.mu_stats.n, 3);
        EXPECT_NEAR(p.mu_stats.variance, 0.0, 1e-20);
        EXPECT_NEAR(p.mustar_stats.variance, 0.0, 1e-20);
        EXPECT_GE(p.mu_stats.m2, p.mu_stats.mean * p.mu_stats.mean - 1e-15);
    }
}

TEST(MomentCurveTest, MonotoneInShiftAndScale) {
    const auto curve = expected_mu_curve(checkerboard(), SymMatrix::zero(2), {0, 1}, {0.5, 1.0, 1.5}, 6, 3, coarse());
    for (std::size_t im = 0; im < 2; ++im)
        for (std::size_t l = 0; l + 1 < 3; ++l) {
            const auto& a = curve.points[im * 3 + l].mu_stats;
            const auto& b = curve.points[im * 3 + l + 1].mu_stats;
            EXPECT_LE(a.mean, b.mean + 2 * std::max(a.se_mean, b.se_mean) + 1e-12);
        }
}

TEST(MomentCurveTest, RequiresTwoSamples) {
    EXPECT_THROW(expected_mu_curve(checkerboard(), SymMatrix::zero(2), {0}, {0.0}, 1, 0, coarse()), InvalidInput);
}

TEST(Balance, ConstantTileReturnsItsValue) {
    const auto op = LocalOperator::linear(SymMatrix::diag({1.0, 2.0}), 1.0, 4.0);
    const SymMatrix a = SymMatrix::identity(2);
    const auto res = balance_constant(single(op), a, 0, 2, 1e-4, 5, coarse());
    EXPECT_NEAR(res.s_hat, op(a), 1e-4);
    EXPECT_LE(res.lo, res.s_hat);
    EXPECT_GE(res.hi, res.s_hat);
    EXPECT_GT(res.history.front().gap, 0.0);
    EXPECT_LT(res.history[1].gap, 0.0);
}

TEST(Balance, HomogeneousLinearAtZeroIsZero) {
    const auto res = balance_constant(checkerboard(), SymMatrix::zero(2), 0, 4, 1e-3, 2, coarse());
    EXPECT_NEAR(res.s_hat, 0.0, 1e-3);
}

TEST(Balance, CheckerboardNearHarmonicMean) {
    const auto res = balance_constant(checkerboard(), SymMatrix::identity(2), 1, 8, 1e-3, 9, coarse());
    EXPECT_NEAR(res.s_hat, -3.2, 0.32);
    EXPECT_LT(res.slope, 0.0);
}

TEST(Balance, GapDecreasesInShift) {
    // g(s) = mu(F_A - s) - mu((F_A)_* + s), read off a common-realization curve at +-s.
    const std::vector<double> shifts{2.7, 3.2, 3.7};
    std::vector<double> ss;
    for (double t : shifts) ss.push_back(-t);
    for (double t : shifts) ss.push_back(t);
    const auto curve = expected_mu_curve(checkerboard(), SymMatrix::identity(2), {1}, ss, 12, 21, coarse());
    auto at = [&](double s) -> const MomentPoint& {
        for (const auto& p : curve.points)
            if (p.s == s) return p;
        throw std::logic_error("missing shift");
    };
    std::vector<std::vector<double>> gaps;
    for (double s : {-3.7, -3.2, -2.7}) {
        const auto& mu = at(-s).mu;
        const auto& mustar = at(s).mustar;
        std::vector<double> g(mu.size());
        for (std::size_t k = 0; k < g.size(); ++k) g[k] = mu[k] - mustar[k];
        gaps.push_back(g);
    }
    for (std::size_t i = 0; i + 1 < gaps.size(); ++i) {
        std::vector<double> d(gaps[i].size());
        for (std::size_t k = 0; k < d.size(); ++k) d[k] = gaps[i + 1][k] - gaps[i][k];
        const auto st = SampleStats::of(d);
        EXPECT_LE(st.mean, 2.0 * st.se_mean) << "step " << i;
        EXPECT_LT(st.mean, 0.0) << "step " << i;
    }
}

TEST(Balance, EffectiveMapIsElliptic) {
    const auto ens = checkerboard();
    const std::vector<SymMatrix> mats{SymMatrix::identity(2), SymMatrix::diag({2.0, 0.5}),
                                      SymMatrix::from_upper(2, {1.0, 0.5, 1.0})};
    std::vector<BalanceResult> res;
    for (const auto& a : mats) res.push_back(balance_constant(ens, a, 1, 8, 1e-3, 31, coarse()));
    for (std::size_t i = 0; i < mats.size(); ++i)
        for (std::size_t j = i + 1; j < mats.size(); ++j) {
            const SymMatrix diff = mats[i] - mats[j];
            const double tol = 1.96 * std::hypot(res[i].se, res[j].se);
            const double d = res[i].s_hat - res[j].s_hat;
            EXPECT_GE(d, pucci(PucciSign::Minus, diff, 4.0) - tol) << i << "," << j;
            EXPECT_LE(d, pucci(PucciSign::Plus, diff, 4.0) + tol) << i << "," << j;
        }
}

TEST(Cell, XIndependentOperatorIsExact) {
    const auto op = LocalOperator::bellman(
        {LinearOp{SymMatrix::identity(2), 0.5}, LinearOp{SymMatrix::diag({1.0, 3.0}), -0.5}}, BellmanMode::Max, 4.0);
    const SymMatrix a = SymMatrix::from_upper(2, {1.0, 0.3, -0.5});
    const auto est = effective_from_cell(single(op), a, {0.004, 0.002, 0.001}, 3, 2, 1);
    EXPECT_NEAR(est.value, op(a), 1e-6);
    EXPECT_NEAR(est.se, 0.0, 1e-12);
}

TEST(Cell, CheckerboardNearHarmonicMean) {
    const auto est = effective_from_cell(checkerboard(), SymMatrix::identity(2), {0.004, 0.002, 0.001}, 9, 6, 4);
    EXPECT_NEAR(est.value, -3.2, 0.32);
    EXPECT_EQ(est.samples.size(), 6u);
    EXPECT_EQ(est.schedule_means.size(), 3u);
}

TEST(Cell, BellmanMinBelowFrozenControls) {
    // Two tile types, each a min over two linear controls; freezing control c in every tile
    // gives a linear ensemble whose cell solution is a subsolution of the min-type problem.
    const std::vector<std::vector<LinearOp>> controls{
        {LinearOp{SymMatrix::identity(2), 0.5}, LinearOp{SymMatrix::diag({1.0, 3.0}), -0.5}},
        {LinearOp{SymMatrix::diag({2.0, 1.0}), 0.0}, LinearOp{SymMatrix::identity(2, 3.0), 1.0}}};
    const auto ens = std::make_shared<const TileEnsemble>(TileEnsemble(
        {LocalOperator::bellman(controls[0], BellmanMode::Min, 4.0),
         LocalOperator::bellman(controls[1], BellmanMode::Min, 4.0)},
        {0.5, 0.5}, 4.0, 4.0));
    const SymMatrix a = SymMatrix::identity(2);
    const std::vector<double> deltas{0.004, 0.002, 0.001};
    const auto est = effective_from_cell(ens, a, deltas, 6, 4, 8);
    for (int c = 0; c < 2; ++c) {
        const auto frozen = std::make_shared<const TileEnsemble>(TileEnsemble(
            {LocalOperator::linear(controls[0][c].a, controls[0][c].c, 4.0),
             LocalOperator::linear(controls[1][c].a, controls[1][c].c, 4.0)},
            {0.5, 0.5}, 4.0, 4.0));
        const auto fe = effective_from_cell(frozen, a, deltas, 6, 4, 8);
        for (std::size_t k = 0; k < est.samples.size(); ++k)
            EXPECT_LE(est.samples[k], fe.samples[k] + 1e-6) << "control " << c << " realization " << k;
        EXPECT_LE(est.value, fe.value + 1.96 * (est.se + fe.se));
    }
}

TEST(Cell, RejectsIncreasingSchedule) {
    EXPECT_THROW(effective_from_cell(checkerboard(), SymMatrix::identity(2), {0.001, 0.002}, 3, 2, 0), InvalidInput);
}

TEST(Cell, EffectiveLinearCheckerboard) {
    const auto eff = effective_linear(checkerboard(), {0.004, 0.002, 0.001}, 9, 4, 6);
    EXPECT_NEAR(eff.op.c, 0.0, 1e-9);
    EXPECT_NEAR(eff.op.a(0, 0), 1.6, 0.16);
    EXPECT_NEAR(eff.op.a(1, 1), 1.6, 0.16);
    EXPECT_NEAR(eff.op.a(0, 1), 0.0, 0.1);
}

TEST(Decay, DeterministicEnsembleHasZeroMoments) {
    const auto op = LocalOperator::linear(SymMatrix::identity(2), 1.5, 4.0);
    const auto res = variance_decay_experiment(single(op), SymMatrix::zero(2), {0, 1}, 2, op(SymMatrix::zero(2)), 3,
                                               coarse());
    for (const auto& row : res.rows) {
        EXPECT_NEAR(row.sum_sq.mean, 0.0, 1e-12);
        EXPECT_NEAR(row.mu.variance, 0.0, 1e-20);
    }
}

TEST(Decay, CheckerboardSmallSample) {
    const auto res = variance_decay_experiment(checkerboard(), SymMatrix::identity(2), {0, 1}, 8, -3.2, 2, coarse());
    ASSERT_EQ(res.rows.size(), 2u);
    EXPECT_GT(res.rows[0].sum_sq.mean, 0.0);
    EXPECT_EQ(res.monotonicity_z.size(), 1u);
    EXPECT_LT(res.tau_hat, 1.0);
}

TEST(ErrorRate, DeterministicGapsAtRoundoff) {
    const auto op = LocalOperator::linear(SymMatrix::diag({1.0, 2.0}), 0.0, 4.0);
    const Box box{0.0, 0.0, 1.0};
    const auto res = error_rate_experiment(single(op), box, 1.0, BoundaryData::zero(), {1.0 / 3, 1.0 / 9}, 2, 1, op);
    for (const auto& row : res.rows)
        for (double g : row.gaps) EXPECT_LE(g, 1e-6);
}

TEST(ErrorRate, RejectsUnderResolvedGrid) {
    const auto op = LocalOperator::linear(SymMatrix::identity(2), 0.0, 4.0);
    EXPECT_THROW(error_rate_experiment(single(op), Box{0, 0, 1}, 1.0, BoundaryData::zero(), {1.0 / 3}, 1, 0, op, 5),
                 InvalidInput);
}

TEST(ErrorRate, HarmonicBeatsArithmetic) {
    const Box box{0.0, 0.0, 1.0};
    const auto harmonic = LocalOperator::linear(SymMatrix::identity(2, 1.6), 0.0, 4.0);
    const auto arithmetic = LocalOperator::linear(SymMatrix::identity(2, 2.5), 0.0, 4.0);
    const auto rh = error_rate_experiment(checkerboard(), box, 1.0, BoundaryData::zero(), {1.0 / 27}, 2, 7, harmonic);
    const auto ra = error_rate_experiment(checkerboard(), box, 1.0, BoundaryData::zero(), {1.0 / 27}, 2, 7, arithmetic);
    ASSERT_EQ(rh.rows[0].gaps.size(), 2u);
    ASSERT_EQ(ra.rows[0].gaps.size(), 2u);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_LT(rh.rows[0].gaps[k], ra.rows[0].gaps[k]);
}

TEST(Reproducibility, SameSeedSameNumbers) {
    const auto a = expected_mu_curve(checkerboard(), SymMatrix::zero(2), {0}, {1.0}, 3, 42, coarse());
    auto opts = coarse();
    opts.workers = 2;
    const auto b = expected_mu_curve(checkerboard(), SymMatrix::zero(2), {0}, {1.0}, 3, 42, opts);
    EXPECT_EQ(a.points[0].mu, b.points[0].mu);
    EXPECT_EQ(a.points[0].mustar, b.points[0].mustar);
    const auto c = expected_mu_curve(checkerboard(), SymMatrix::zero(2), {0}, {1.0}, 3, 43, coarse());
    EXPECT_NE(a.points[0].mu, c.points[0].mu);
}
