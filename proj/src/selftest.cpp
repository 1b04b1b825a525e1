#include <chrono>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "homoglab/environment.hpp"
#include "homoglab/error.hpp"
#include "homoglab/examples.hpp"
#include "homoglab/homogenize.hpp"
#include "homoglab/mu.hpp"
#include "homoglab/run.hpp"
#include "homoglab/solver.hpp"

namespace homoglab {

namespace {

class Suite {
public:
    explicit Suite(SelftestReport& r) : r_(r) {}
    template <class F>
    void check(const std::string& module, const std::string& name, F&& body) {
        SelftestCheck c{module, name, false, ""};
        try {
            std::ostringstream detail;
            c.pass = body(detail);
            c.detail = detail.str();
        } catch (const std::exception& e) {
            c.pass = false;
            c.detail = std::string("exception: ") + e.what();
        }
        r_.checks.push_back(std::move(c));
    }

private:
    SelftestReport& r_;
};

}  // namespace

bool SelftestReport::pass() const {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return !checks.empty();
}

std::string SelftestReport::to_text() const {
    std::ostringstream os;
    std::map<std::string, std::pair<int, int>> per;
    for (const auto& c : checks) {
        os << (c.pass ? "PASS " : "FAIL ") << c.module << ": " << c.name;
        if (!c.detail.empty()) os << " (" << c.detail << ")";
        os << '\n';
        auto& p = per[c.module];
        p.first += c.pass;
        ++p.second;
    }
    for (const auto& [module, p] : per) os << module << ": " << p.first << "/" << p.second << " passed\n";
    os << "total: " << (pass() ? "PASS" : "FAIL") << " in " << seconds << " s\n";
    return os.str();
}

SelftestReport selftest(const SelftestOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    SelftestReport report;
    Suite suite(report);
    const Box q0{-0.5, -0.5, 1.0};
    const bool broken_envelope = options.inject == "envelope-tolerance";
    if (!options.inject.empty() && !broken_envelope)
        throw InvalidInput("selftest: unknown injection '" + options.inject + "'");

    suite.check("operators", "Pucci duality and ordering", [](std::ostream& d) {
        std::mt19937_64 gen(1);
        std::normal_distribution<double> nd;
        double worst = 0.0;
        for (int k = 0; k < 200; ++k) {
            const auto a = SymMatrix::from_upper(2, {nd(gen), nd(gen), nd(gen)});
            worst = std::max(worst, std::abs(pucci(PucciSign::Plus, a, 3.0) + pucci(PucciSign::Minus, a * -1.0, 3.0)));
            worst = std::max(worst, pucci(PucciSign::Minus, a, 3.0) - pucci(PucciSign::Plus, a, 3.0));
        }
        d << "worst " << worst;
        return worst <= 1e-12;
    });
    suite.check("operators", "linear tiles between Pucci bounds", [](std::ostream& d) {
        const auto op = LocalOperator::linear(SymMatrix::from_upper(2, {2.0, 0.5, 1.5}), 0.0, 4.0);
        const auto rep = ellipticity_report(op, 500, 3);
        d << "violation " << rep.max_violation;
        return rep.max_violation <= 1e-12;
    });
    suite.check("operators", "star is an involution", [](std::ostream& d) {
        const auto f = OperatorField::constant(LocalOperator::linear(SymMatrix::diag({1.0, 3.0}), 0.7, 4.0))
                           .translate(SymMatrix::identity(2))
                           .shift(0.2);
        const auto ff = f.star().star();
        const std::array<double, 2> x{0.1, 0.2};
        double worst = 0.0;
        std::mt19937_64 gen(2);
        std::normal_distribution<double> nd;
        for (int k = 0; k < 50; ++k) {
            const auto a = SymMatrix::from_upper(2, {nd(gen), nd(gen), nd(gen)});
            worst = std::max(worst, std::abs(f.eval(a, x) - ff.eval(a, x)));
        }
        d << "worst " << worst;
        return worst == 0.0;
    });
    suite.check("environment", "realizations are reproducible", [](std::ostream&) {
        const auto ens = std::make_shared<const TileEnsemble>(TileEnsemble::checkerboard());
        const auto a = sample_realization(ens, Window{-3, -3, 7, 7}, 9, 4);
        const auto b = sample_realization(ens, Window{-3, -3, 7, 7}, 9, 4);
        return a.cells() == b.cells();
    });
    suite.check("solver", "quadratics are solved exactly", [](std::ostream& d) {
        const SymMatrix a = SymMatrix::diag({1.0, 2.0}), b = SymMatrix::from_upper(2, {1.0, 0.2, 0.5});
        const auto op = LocalOperator::linear(a, 0.3, 4.0);
        const Box box{-1.0, -1.0, 2.0};
        const GridFunction rhs(box, 33, op(b));
        const auto g = BoundaryData::quadratic(b, {0.1, -0.2}, 0.5, {0.0, 0.0});
        const auto u = solve_dirichlet(OperatorField::constant(op), box, 33, g, &rhs).u;
        double worst = 0.0;
        for (int j = 0; j < 33; ++j)
            for (int i = 0; i < 33; ++i) {
                const double x = u.x(i), y = u.y(j);
                const double q = 0.5 * (b(0, 0) * x * x + 2 * b(0, 1) * x * y + b(1, 1) * y * y) + 0.1 * x - 0.2 * y + 0.5;
                worst = std::max(worst, std::abs(u(i, j) - q));
            }
        d << "max error " << worst;
        return worst <= 1e-9;
    });
    suite.check("envelope", "w_r family has unit measure", [&](std::ostream& d) {
        bool ok = true;
        for (double r : {1.0, 0.5, 0.25}) {
            const double m = subdiff_measure(sharpness_family(r, 82, q0), Rect::of(q0));
            d << "r=" << r << ": " << m << " ";
            ok = ok && m >= 0.95 && m <= 1.05;
        }
        return ok;
    });
    suite.check("envelope", "Monte Carlo oracle agrees with the hull", [&](std::ostream& d) {
        bool ok = true;
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const auto u = random_smooth_function(seed, 17, q0);
            const double exact = subdiff_measure(u, Rect::of(q0));
            const auto mc = mc_subdiff_measure(u, Rect::of(q0), 50000, default_slope_box(u), seed + 100);
            const double z = (exact - mc.value) / mc.std_error;
            d << "z=" << z << " ";
            ok = ok && std::abs(z) <= 3.0;
        }
        return ok;
    });
    suite.check("envelope", "kinked example envelope within h^2", [&](std::ostream& d) {
        const KinkedEnvelopeExample ex;
        const auto s = sample_example(ex, 129);
        const double h = s.u.h();
        const auto env = convex_envelope(s.u, s.domain);
        double worst = 0.0;
        for (int j = 0; j < s.u.n(); ++j)
            for (int i = 0; i < s.u.n(); ++i)
                if (s.domain.mask[s.u.index(i, j)])
                    worst = std::max(worst, std::abs(env.envelope(i, j) - ex.w(s.u.x(i), s.u.y(j))));
        const double tol = broken_envelope ? -h * h : h * h;
        d << "max gap " << worst << ", tolerance " << tol;
        return worst <= tol;
    });
    suite.check("envelope", "kinked example subgradient certificates", [&](std::ostream& d) {
        const KinkedEnvelopeExample ex;
        const auto s = sample_example(ex, 129);
        const auto env = convex_envelope(s.u, s.domain);
        const int c = s.u.n() / 2;
        const int e1 = c + static_cast<int>(std::lround(1.0 / s.u.h()));
        const double v0 = check_subgradient(env, 0.0, 0.0, env.envelope(c, c), {0.0, 0.0});
        const double v1 = check_subgradient(env, 1.0, 0.0, env.envelope(e1, c), {2.0, 0.0});
        d << "violations " << v0 << ", " << v1;
        return v0 <= 1e-12 && v1 <= 1e-12;
    });
    suite.check("mu", "constant coefficients match the closed form", [&](std::ostream& d) {
        const auto op = LocalOperator::linear(SymMatrix::identity(2), 2.0, 4.0);
        MuConfig cfg;
        cfg.per_unit = 27;
        cfg.optimize = false;
        const double v = mu_estimate(OperatorField::constant(op), TriadicCube{0, {0, 0}}, cfg).value;
        d << "value " << v;
        return std::abs(v - 1.0) <= 0.05 && mu_constant_coeff(op).value == 1.0;
    });
    suite.check("homogenize", "constant tile balances at F(A)", [](std::ostream& d) {
        const auto op = LocalOperator::linear(SymMatrix::diag({1.0, 2.0}), 1.0, 4.0);
        const auto ens = std::make_shared<const TileEnsemble>(TileEnsemble::single(op, 4.0, 4.0));
        ExperimentOptions opt;
        opt.mu.per_unit = 3;
        const auto res = balance_constant(ens, SymMatrix::identity(2), 0, 2, 1e-4, 1, opt);
        d << "s_hat " << res.s_hat;
        return std::abs(res.s_hat - op(SymMatrix::identity(2))) <= 1e-4;
    });

    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace homoglab
