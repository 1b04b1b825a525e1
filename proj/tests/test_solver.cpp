#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "homoglab/error.hpp"
#include "homoglab/solver.hpp"
#include "homoglab/stencil.hpp"

using namespace homoglab;

namespace {

const Box kUnit{-0.5, -0.5, 1.0};

double max_abs_diff(const GridFunction& u, const std::function<double(double, double)>& f) {
    double m = 0.0;
    for (int j = 0; j < u.n(); ++j)
        for (int i = 0; i < u.n(); ++i) m = std::max(m, std::abs(u(i, j) - f(u.x(i), u.y(j))));
    return m;
}

OperatorField linear_field(const SymMatrix& a, double c, double lambda = 4.0) {
    return OperatorField::constant(LocalOperator::linear(a, c, lambda));
}

std::shared_ptr<const Realization> realization(const TileEnsemble& ens, Window w, std::uint64_t seed) {
    return std::make_shared<const Realization>(
        sample_realization(std::make_shared<const TileEnsemble>(ens), w, seed, 0));
}

}  // namespace

TEST(Stencil, DecomposesAndReconstructs) {
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> ud(1.0, 4.0), uo(-1.0, 1.0);
    for (int k = 0; k < 500; ++k) {
        const double a11 = ud(gen), a22 = ud(gen);
        const double a12 = uo(gen) * std::min(a11, a22);
        const SymMatrix a = SymMatrix::from_upper(2, {a11, a12, a22});
        const auto w = stencil_weights(a);
        ASSERT_TRUE(w);
        SymMatrix back(2);
        for (int v = 0; v < 4; ++v) {
            EXPECT_GE((*w)[v], 0.0);
            const auto& d = kStencilDirections[v];
            back += outer({double(d[0]), double(d[1])}) * (*w)[v];
        }
        EXPECT_LE((back - a).norm(), 1e-12);
    }
    EXPECT_FALSE(stencil_weights(SymMatrix::from_upper(2, {1.0, 1.5, 3.0})));
}

TEST(Dirichlet, HarmonicQuadraticExact) {
    const auto f = linear_field(SymMatrix::identity(2), 0.0);
    const auto res = solve_dirichlet(f, kUnit, 21, BoundaryData::quadratic(SymMatrix::from_upper(2, {0, 1, 0}), {0, 0}, 0));
    EXPECT_LE(max_abs_diff(res.u, [](double x, double y) { return x * y; }), 1e-10);
    EXPECT_LE(res.report.residual, 1e-10);
}

TEST(Dirichlet, PoissonQuadraticExact) {
    const auto f = linear_field(SymMatrix::identity(2), 0.0);
    const GridFunction rhs(kUnit, 33, -2.0);
    const auto res = solve_dirichlet(f, kUnit, 33, BoundaryData::quadratic(SymMatrix::identity(2), {0, 0}, 0), &rhs);
    EXPECT_LE(max_abs_diff(res.u, [](double x, double y) { return 0.5 * (x * x + y * y); }), 1e-10);
}

TEST(Dirichlet, AnisotropicQuadraticExact) {
    const SymMatrix a = SymMatrix::from_upper(2, {2.0, -0.7, 3.0});
    const SymMatrix q = SymMatrix::from_upper(2, {1.0, 0.4, -2.0});
    const auto f = linear_field(a, 0.3);
    // F(D^2 u) = -tr(a q) + 0.3 for u quadratic.
    const GridFunction rhs(kUnit, 25, -a.dot(q) + 0.3);
    const auto res = solve_dirichlet(f, kUnit, 25, BoundaryData::quadratic(q, {0.2, -1.0}, 0.5), &rhs);
    EXPECT_LE(max_abs_diff(res.u,
                           [&](double x, double y) {
                               return 0.5 * (q(0, 0) * x * x + 2 * q(0, 1) * x * y + q(1, 1) * y * y) + 0.2 * x - y +
                                      0.5;
                           }),
              1e-10);
}

TEST(Dirichlet, BellmanHarmonicData) {
    const auto bel = LocalOperator::bellman(
        {LinearOp{SymMatrix::identity(2), 0.0}, LinearOp{SymMatrix::identity(2, 2.0), 0.0}}, BellmanMode::Min, 4.0);
    const auto res = solve_dirichlet(OperatorField::constant(bel), kUnit, 21,
                                     BoundaryData::quadratic(SymMatrix::diag({2.0, -2.0}), {0, 0}, 0));
    EXPECT_LE(max_abs_diff(res.u, [](double x, double y) { return x * x - y * y; }), 1e-10);
}

TEST(Dirichlet, ApplyOperatorExamples) {
    const SymMatrix a = SymMatrix::diag({1.0, 3.0});
    const auto f = linear_field(a, 0.5);
    const SymMatrix q = SymMatrix::from_upper(2, {2.0, 0.5, -1.0});
    const auto u = GridFunction::sample(
        kUnit, 15, [&](double x, double y) { return 0.5 * (q(0, 0) * x * x + 2 * q(0, 1) * x * y + q(1, 1) * y * y); });
    const auto out = apply_operator(f, u);
    for (int j = 1; j < 14; ++j)
        for (int i = 1; i < 14; ++i) EXPECT_NEAR(out(i, j), -a.dot(q) + 0.5, 1e-9);
    const auto aff = GridFunction::sample(kUnit, 15, [](double x, double y) { return 3 * x - y + 1; });
    const auto out2 = apply_operator(f, aff);
    for (int j = 1; j < 14; ++j)
        for (int i = 1; i < 14; ++i) EXPECT_NEAR(out2(i, j), 0.5, 1e-9);
}

TEST(Dirichlet, ResidualOfSolutionWithinTolerance) {
    const auto ens = TileEnsemble::checkerboard_bellman();
    const auto r = realization(ens, Window{-1, -1, 3, 3}, 4);
    const auto field = field_of(r).shift(-1.0);
    const auto res = solve_dirichlet(field, kUnit, 28, BoundaryData::zero());
    const auto out = apply_operator(field, res.u);
    for (int j = 1; j < 27; ++j)
        for (int i = 1; i < 27; ++i) EXPECT_LE(std::abs(out(i, j)), 1e-10);
}

TEST(Dirichlet, StencilErrorNamesNode) {
    const auto f = linear_field(SymMatrix::from_upper(2, {1.0, 1.5, 3.0}), 0.0);
    try {
        solve_dirichlet(f, kUnit, 5, BoundaryData::zero());
        FAIL() << "expected stencil error";
    } catch (const StencilError& e) {
        EXPECT_NE(std::string(e.what()).find("node"), std::string::npos);
    }
}

TEST(Dirichlet, DiscreteComparison) {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    const auto ens = TileEnsemble::checkerboard_bellman();
    for (int trial = 0; trial < 10; ++trial) {
        const auto r = realization(ens, Window{-1, -1, 3, 3}, 100 + trial);
        const auto field = field_of(r);
        DirichletProblem problem(field, kUnit, 19);
        GridFunction g1(kUnit, 19), g2(kUnit, 19), f1(kUnit, 19), f2(kUnit, 19);
        for (std::size_t k = 0; k < g1.size(); ++k) {
            g1.values()[k] = ud(gen);
            g2.values()[k] = g1.values()[k] + 0.5 * (1 + ud(gen));
            f2.values()[k] = ud(gen);
            f1.values()[k] = f2.values()[k] + 0.5 * (1 + ud(gen));
        }
        const auto u1 = problem.solve(BoundaryData::samples(g1), &f1).u;
        const auto u2 = problem.solve(BoundaryData::samples(g2), &f2).u;
        for (std::size_t k = 0; k < u1.size(); ++k) EXPECT_LE(u1.values()[k], u2.values()[k] + 1e-12);
    }
}

TEST(Dirichlet, MaximumPrinciple) {
    std::mt19937_64 gen(6);
    std::uniform_real_distribution<double> ud(-2.0, 3.0);
    const auto ens = TileEnsemble::checkerboard_bellman();
    const auto r = realization(ens, Window{-1, -1, 3, 3}, 8);
    DirichletProblem problem(field_of(r), kUnit, 19);
    GridFunction g(kUnit, 19);
    double lo = 1e9, hi = -1e9;
    for (int j = 0; j < 19; ++j)
        for (int i = 0; i < 19; ++i) {
            g(i, j) = ud(gen);
            if (g.is_boundary(i, j)) {
                lo = std::min(lo, g(i, j));
                hi = std::max(hi, g(i, j));
            }
        }
    const auto u = problem.solve(BoundaryData::samples(g)).u;
    for (double v : u.values()) {
        EXPECT_GE(v, lo - 1e-12);
        EXPECT_LE(v, hi + 1e-12);
    }
}

TEST(Dirichlet, PolicyIterationResidualNonincreasing) {
    const auto ens = TileEnsemble::checkerboard_bellman();
    for (int trial = 0; trial < 5; ++trial) {
        const auto r = realization(ens, Window{-1, -1, 3, 3}, 30 + trial);
        const auto field = field_of(r).star().shift(0.7);
        const auto res = solve_dirichlet(field, kUnit, 28,
                                         BoundaryData::quadratic(SymMatrix::diag({1.0, -3.0}), {0.5, 0}, 0));
        const auto& hist = res.report.residual_history;
        for (std::size_t k = 1; k < hist.size(); ++k) EXPECT_LE(hist[k], hist[k - 1] * (1 + 1e-12) + 1e-14);
        EXPECT_LE(res.report.residual, 1e-10);
    }
}

TEST(Cell, ConstantOperatorIsExact) {
    const auto tile = LocalOperator::bellman(
        {LinearOp{SymMatrix::identity(2), 0.5}, LinearOp{SymMatrix::diag({2.0, 3.0}), -1.0}}, BellmanMode::Max, 4.0);
    const auto ens = TileEnsemble::single(tile, 4.0, 1.0);
    const auto r = realization(ens, Window{0, 0, 3, 3}, 1);
    const SymMatrix a = SymMatrix::from_upper(2, {0.4, 0.1, -0.3});
    const auto cs = solve_cell(r, a, 0.01, 3);
    EXPECT_NEAR(cs.value, -tile(a), 1e-10);
    const auto lin = TileEnsemble::single(LocalOperator::linear(SymMatrix::identity(2), 1.0, 4.0), 4.0, 1.0);
    EXPECT_NEAR(solve_cell(realization(lin, Window{0, 0, 2, 2}, 1), SymMatrix::zero(2), 0.1, 3).value, -1.0, 1e-12);
}

TEST(Cell, ComparisonWithConstants) {
    const auto ens = TileEnsemble::checkerboard_bellman();
    const auto r = realization(ens, Window{0, 0, 4, 4}, 2);
    const SymMatrix a = SymMatrix::diag({1.0, -0.5});
    double sup = 0.0;
    for (const auto& t : ens.tiles()) sup = std::max(sup, std::abs(t(a)));
    for (double d : {1.0, 0.1, 0.01}) EXPECT_LE(std::abs(solve_cell(r, a, d, 3).value), sup + 1e-9);
}

TEST(Cell, ScalarCheckerboardMatchesHarmonicMeanOfNodes) {
    // The discrete torus equation has invariant measure proportional to 1/a at the nodes,
    // so delta w(0) -> -tr(A) / mean(1/a) as delta -> 0.
    const auto ens = TileEnsemble::checkerboard();
    const auto r = realization(ens, Window{0, 0, 6, 6}, 3);
    const int ppu = 3;
    double inv = 0.0;
    const int n = 18;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) inv += r->cell(i / ppu, j / ppu) == 0 ? 1.0 : 0.25;
    const double harmonic = n * n / inv;
    const auto sched = solve_cell_schedule(r, SymMatrix::identity(2), {0.004, 0.002, 0.001}, ppu);
    EXPECT_NEAR(sched.extrapolated, 2.0 * harmonic, 1e-3 * harmonic);
}

TEST(Cell, RichardsonReproducesQuadratics) {
    const std::vector<double> d{0.4, 0.2, 0.1, 0.05};
    std::vector<double> v;
    for (double x : d) v.push_back(1.5 - 2 * x + 3 * x * x);
    EXPECT_NEAR(richardson_to_zero(d, v), 1.5, 1e-12);
}
