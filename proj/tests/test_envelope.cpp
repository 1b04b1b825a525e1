#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "homoglab/examples.hpp"
#include "homoglab/environment.hpp"
#include "homoglab/envelope.hpp"
#include "homoglab/error.hpp"
#include "homoglab/solver.hpp"

using namespace homoglab;

namespace {

const Box kQ0{-0.5, -0.5, 1.0};

// 1-d lower convex hull of (x_i, y_i), sorted by x, evaluated at the x_i.
std::vector<double> lower_hull_1d(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<int> h;
    for (int i = 0; i < static_cast<int>(x.size()); ++i) {
        while (h.size() >= 2) {
            const int a = h[h.size() - 2], b = h.back();
            const double cr = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a]);
            if (cr <= 0)
                h.pop_back();
            else
                break;
        }
        h.push_back(i);
    }
    std::vector<double> out(x.size());
    std::size_t s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        while (s + 1 < h.size() && x[h[s + 1]] < x[i]) ++s;
        if (s + 1 == h.size()) {
            out[i] = y[h[s]];
            continue;
        }
        const int a = h[s], b = h[s + 1];
        const double t = (x[i] - x[a]) / (x[b] - x[a]);
        out[i] = (1 - t) * y[a] + t * y[b];
    }
    return out;
}

GridFunction random_smooth(std::uint64_t seed, int n) { return random_smooth_function(seed, n, kQ0); }

// Discrete solution of -tr(a D^2 u) = -1 for a random two-tile field on `box`,
// hence a supersolution of P+(D^2 u) >= -1 in the continuum sense.
GridFunction supersolution(const Box& box, int n, std::uint64_t seed) {
    const auto ens = std::make_shared<const TileEnsemble>(TileEnsemble::checkerboard());
    const std::int64_t lo = static_cast<std::int64_t>(std::floor(box.x0)) - 1;
    const std::int64_t span = static_cast<std::int64_t>(std::ceil(box.side)) + 3;
    const auto r = std::make_shared<const Realization>(sample_realization(ens, Window{lo, lo, span, span}, seed, 0));
    const GridFunction rhs(box, n, -1.0);
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> ud(-0.3, 0.3);
    const auto g = BoundaryData::quadratic(SymMatrix::from_upper(2, {0.2 + ud(gen), ud(gen), 0.2 + ud(gen)}),
                                           {ud(gen), ud(gen)}, 0.0, {box.center_x(), box.center_y()});
    return solve_dirichlet(field_of(r), box, n, g, &rhs).u;
}

}  // namespace

TEST(Envelope, ConvexFunctionIsItsOwnEnvelope) {
    const auto u = GridFunction::sample(kQ0, 33, [](double x, double y) { return 0.5 * (x * x + y * y); });
    const auto env = convex_envelope(u);
    for (std::size_t k = 0; k < u.size(); ++k) EXPECT_NEAR(env.envelope.values()[k], u.values()[k], 1e-14);
    for (char c : env.contact) EXPECT_TRUE(c);
}

TEST(Envelope, QuadraticMeasureIsUnitArea) {
    const auto u = GridFunction::sample(kQ0, 82, [](double x, double y) { return 0.5 * (x * x + y * y); });
    const double m = subdiff_measure(u, Rect::of(kQ0));
    EXPECT_NEAR(m, 1.0, 0.05);
    EXPECT_NEAR(m, u.interior_area(), 1e-9);
}

TEST(Envelope, UnitDeterminantFamily) {
    for (double r : {1.0, 0.5, 0.25}) {
        const auto u = sharpness_family(r, 82, kQ0);
        EXPECT_NEAR(subdiff_measure(u, Rect::of(kQ0)), 1.0, 0.05) << "r = " << r;
    }
}

TEST(Envelope, AffineHasZeroMeasure) {
    const std::array<double, 2> p{0.7, -1.3};
    const auto u = GridFunction::sample(kQ0, 21, [&](double x, double y) { return p[0] * x + p[1] * y + 0.25; });
    const auto env = convex_envelope(u);
    EXPECT_EQ(subdiff_measure(env, Rect::of(kQ0)), 0.0);
    const auto s = subdiff_at(env, 10, 7);
    ASSERT_FALSE(s.polygon.empty());
    for (const auto& q : s.polygon.vertices) {
        EXPECT_NEAR(q[0], p[0], 1e-12);
        EXPECT_NEAR(q[1], p[1], 1e-12);
    }
    EXPECT_NEAR(mc_subdiff_measure(u, Rect::of(kQ0), 1000, default_slope_box(u), 1).value, 0.0, 1e-20);
}

TEST(Envelope, DoubleWellMatchesLineHulls) {
    const Box box{-1.0, -1.0, 2.0};
    const int n = 41;
    const auto u = GridFunction::sample(box, n, [](double x, double) { return (x * x - 0.25) * (x * x - 0.25); });
    const auto env = convex_envelope(u);
    for (int j = 0; j < n; ++j) {
        std::vector<double> xs(n), ys(n);
        for (int i = 0; i < n; ++i) {
            xs[i] = u.x(i);
            ys[i] = u(i, j);
        }
        const auto oracle = lower_hull_1d(xs, ys);
        for (int i = 0; i < n; ++i) EXPECT_NEAR(env.envelope(i, j), oracle[i], 1e-12) << i << "," << j;
    }
    for (int i = 0; i < n; ++i)
        if (std::abs(u.x(i)) <= 0.5 + 1e-12) EXPECT_NEAR(env.envelope(i, n / 2), 0.0, 1e-12);
}

TEST(Envelope, KinkedExampleEnvelopeAndCertificates) {
    const KinkedEnvelopeExample ex;
    const auto s = sample_example(ex, 257);
    const double h = s.u.h();
    const auto env = convex_envelope(s.u, s.domain);
    double worst = 0.0;
    for (int j = 0; j < s.u.n(); ++j)
        for (int i = 0; i < s.u.n(); ++i)
            if (s.domain.mask[s.u.index(i, j)])
                worst = std::max(worst, std::abs(env.envelope(i, j) - ex.w(s.u.x(i), s.u.y(j))));
    EXPECT_LE(worst, h * h);

    const int c = s.u.n() / 2;  // the node at the origin
    const int e1 = c + static_cast<int>(std::lround(1.0 / h));
    ASSERT_NEAR(s.u.x(e1), 1.0, 1e-12);
    const auto at0 = subdiff_at(env, c, c);
    EXPECT_TRUE(at0.contact);
    EXPECT_TRUE(at0.polygon.contains({0.0, 0.0}, 1e-9));
    EXPECT_LE(at0.certificate_violation, 1e-12);
    const auto at1 = subdiff_at(env, e1, c);
    EXPECT_TRUE(at1.polygon.contains({2.0, 0.0}, 1e-9));
    EXPECT_LE(check_subgradient(env, 1.0, 0.0, env.envelope(e1, c), {2.0, 0.0}), 1e-12);
    EXPECT_LE(check_subgradient(env, 0.0, 0.0, env.envelope(c, c), {0.0, 0.0}), 1e-12);
}

TEST(Envelope, KinkSubdifferentialContainsSegment) {
    const int n = 41;
    const Box box{-1.0, -1.0, 2.0};
    const auto u = GridFunction::sample(box, n, [](double x, double) { return std::abs(x); });
    const auto env = convex_envelope(u);
    const double h = u.h();
    for (int j = 1; j + 1 < n; ++j) {
        const auto s = subdiff_at(env, n / 2, j);
        EXPECT_TRUE(s.contact);
        EXPECT_TRUE(s.polygon.contains({-1.0, 0.0}, h)) << j;
        EXPECT_TRUE(s.polygon.contains({1.0, 0.0}, h)) << j;
        EXPECT_LE(s.certificate_violation, 1e-12);
    }
}

TEST(Envelope, InvariantsOnRandomFunctions) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 gen(seed);
        std::normal_distribution<double> nd;
        std::vector<double> vals(25 * 25);
        for (auto& v : vals) v = nd(gen);
        const GridFunction u(kQ0, 25, vals);
        const auto env = convex_envelope(u);
        const auto& g = env.envelope;
        for (std::size_t k = 0; k < u.size(); ++k) EXPECT_LE(g.values()[k], u.values()[k]);
        // Midpoint convexity along grid lines.
        for (int j = 0; j < 25; ++j)
            for (int i = 1; i + 1 < 25; ++i) {
                EXPECT_LE(2 * g(i, j), g(i - 1, j) + g(i + 1, j) + 1e-12);
                EXPECT_LE(2 * g(j, i), g(j, i - 1) + g(j, i + 1) + 1e-12);
            }
        // Facets support the envelope from below.
        for (const auto& f : env.facets)
            for (int j = 0; j < 25; ++j)
                for (int i = 0; i < 25; ++i)
                    EXPECT_LE(f.gradient[0] * u.x(i) + f.gradient[1] * u.y(j) + f.offset, g(i, j) + 1e-10);
        // Idempotence.
        const auto again = convex_envelope(g);
        for (std::size_t k = 0; k < u.size(); ++k) EXPECT_NEAR(again.envelope.values()[k], g.values()[k], 1e-12);
        for (const auto& a : subdiff_atoms(env)) EXPECT_GE(a.volume, 0.0);
    }
}

TEST(Envelope, CoplanarVerticesCarryNoAtoms) {
    // A pyramid: four planar faces, interior grid nodes on the faces and ridges.
    const auto u = GridFunction::sample(kQ0, 21, [](double x, double y) { return std::max(std::abs(x), std::abs(y)); });
    const auto env = convex_envelope(u);
    double total = 0.0;
    for (const auto& a : subdiff_atoms(env)) {
        if (std::abs(a.x) > 1e-12 || std::abs(a.y) > 1e-12)
            EXPECT_NEAR(a.volume, 0.0, 1e-12) << a.x << "," << a.y;
        total += a.volume;
    }
    EXPECT_NEAR(total, 2.0, 1e-9);
    EXPECT_EQ(env.facets.size(), 4u);
}

TEST(Envelope, MonteCarloAgreesOnSmoothFunctions) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto u = random_smooth(seed, 17);
        const double exact = subdiff_measure(u, Rect::of(kQ0));
        const auto mc = mc_subdiff_measure(u, Rect::of(kQ0), 200000, default_slope_box(u), seed + 100);
        EXPECT_LE(std::abs(mc.value - exact), 3.0 * mc.std_error) << "seed " << seed << " exact " << exact;
    }
}

TEST(Envelope, MonteCarloQuadraticAndBoxCheck) {
    const auto u = GridFunction::sample(kQ0, 41, [](double x, double y) { return 0.5 * (x * x + y * y); });
    const auto mc = mc_subdiff_measure(u, Rect::of(kQ0), 100000, default_slope_box(u), 3);
    EXPECT_NEAR(mc.value, 1.0, 0.05);
    const SlopeBox small{{-0.1, -0.1}, {0.1, 0.1}};
    EXPECT_THROW(mc_subdiff_measure(u, Rect::of(kQ0), 100, small, 3), InvalidInput);
}

TEST(Envelope, ContactBoundForSupersolutions) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto u = supersolution(kQ0, 28, seed);
        const auto env = convex_envelope(u);
        const double h = u.h();
        double contact = 0.0;
        for (int j = 1; j + 1 < u.n(); ++j)
            for (int i = 1; i + 1 < u.n(); ++i) contact += env.contact[u.index(i, j)] ? h * h : 0.0;
        const double m = subdiff_measure(env, Rect::of(kQ0));
        EXPECT_LE(m, 4.0 * contact * 1.1) << "seed " << seed;
    }
}

TEST(Envelope, ParabolicPerturbationDecreasesMeasure) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto u = supersolution(kQ0, 28, seed);
        const double m0 = subdiff_measure(u, Rect::of(kQ0));
        for (double s : {0.25, 0.5, 0.9}) {
            GridFunction us = u;
            for (int j = 0; j < u.n(); ++j)
                for (int i = 0; i < u.n(); ++i) us(i, j) -= 0.5 * s * (u.x(i) * u.x(i) + u.y(j) * u.y(j));
            EXPECT_LE(subdiff_measure(us, Rect::of(kQ0)), m0 + 1e-9) << "seed " << seed << " s " << s;
        }
    }
}

TEST(Envelope, SubadditiveOverChildren) {
    const TriadicCube parent{1, {0, 0}};
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto u = supersolution(parent.box(), 28, seed);
        const double mp = subdiff_measure(u, Rect::of(parent.box())) / u.interior_area();
        double mean = 0.0;
        for (const auto& child : subcubes(parent, 1)) {
            const auto r = restrict_to(u, child);
            mean += subdiff_measure(r, Rect::of(child.box())) / r.interior_area() / 9.0;
        }
        EXPECT_LE(mp, mean * 1.03 + 1e-12) << "seed " << seed;
    }
}
