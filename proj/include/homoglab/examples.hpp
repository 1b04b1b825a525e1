#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "homoglab/envelope.hpp"
#include "homoglab/grid.hpp"

namespace homoglab {

/// The two-dimensional example whose envelope w has a slope jump of size 2 one unit
/// from a flat contact point: u, w, and U = [-R, R]^2 union {u >= w}.
struct KinkedEnvelopeExample {
    double R = 2.0;

    double u(double x1, double x2) const {
        const double t = std::max(0.0, std::abs(x2) - R);
        return 0.5 * x1 * x1 - t * t / (2.0 * R);
    }
    double w(double x1, double /*x2*/) const {
        const double t = std::max(0.0, std::abs(x1 - 1.0) - 1.0);
        return 2.0 * std::max(0.0, x1 - 1.0) + 0.5 * t * t;
    }
    bool in_square(double x1, double x2) const { return std::abs(x1) <= R && std::abs(x2) <= R; }
    bool in_domain(double x1, double x2) const { return in_square(x1, x2) || u(x1, x2) >= w(x1, x2); }
};

/// Samples the example on [-2R, 2R]^2 with n nodes per side and returns the grid
/// together with the node mask and the crossings of {u = w} along grid lines.
struct SampledExample {
    GridFunction u;
    EnvelopeDomain domain;
};

inline SampledExample sample_example(const KinkedEnvelopeExample& ex, int n) {
    const Box box{-2 * ex.R, -2 * ex.R, 4 * ex.R};
    SampledExample s{GridFunction::sample(box, n, [&](double x, double y) { return ex.u(x, y); }), {}};
    s.domain.mask.assign(s.u.size(), 0);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) s.domain.mask[s.u.index(i, j)] = ex.in_domain(s.u.x(i), s.u.y(j));

    auto gap = [&](double x, double y) { return ex.u(x, y) - ex.w(x, y); };
    auto add_root = [&](std::function<double(double)> f, double a, double b, bool horizontal, double fixed) {
        double fa = f(a);
        for (int it = 0; it < 200 && b - a > 1e-15 * (1 + std::abs(a)); ++it) {
            const double m = 0.5 * (a + b);
            const double fm = f(m);
            if ((fm >= 0) == (fa >= 0)) {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        const double r = 0.5 * (a + b);
        const double x = horizontal ? r : fixed, y = horizontal ? fixed : r;
        if (ex.in_square(x, y)) return;
        s.domain.extra.push_back({x, y, ex.u(x, y)});
    };
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i + 1 < n; ++i) {
            const double y = s.u.y(j), xa = s.u.x(i), xb = s.u.x(i + 1);
            if ((gap(xa, y) >= 0) != (gap(xb, y) >= 0))
                add_root([&](double x) { return gap(x, y); }, xa, xb, true, y);
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j + 1 < n; ++j) {
            const double x = s.u.x(i), ya = s.u.y(j), yb = s.u.y(j + 1);
            if ((gap(x, ya) >= 0) != (gap(x, yb) >= 0))
                add_root([&](double y) { return gap(x, y); }, ya, yb, false, x);
        }
    }
    return s;
}

/// Convex quadratic plus small random plane waves on `box`, sampled on n x n nodes.
inline GridFunction random_smooth_function(std::uint64_t seed, int n, const Box& box = Box{-0.5, -0.5, 1.0}) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    const double a = 1.0 + ud(gen), b = 1.0 + ud(gen), c = 0.5 * ud(gen);
    double amp[3], fx[3], fy[3], ph[3];
    for (int k = 0; k < 3; ++k) {
        amp[k] = 0.05 * ud(gen);
        fx[k] = 6.0 * ud(gen);
        fy[k] = 6.0 * ud(gen);
        ph[k] = 3.0 * ud(gen);
    }
    return GridFunction::sample(box, n, [&](double x, double y) {
        double v = a * x * x + b * y * y + c * x * y;
        for (int k = 0; k < 3; ++k) v += amp[k] * std::sin(fx[k] * x + fy[k] * y + ph[k]);
        return v;
    });
}

/// w_r(x) = r x1^2 / 2 + x2^2 / (2 r), with det D^2 w_r = 1 for every r > 0.
inline GridFunction sharpness_family(double r, int n, const Box& box = Box{-0.5, -0.5, 1.0}) {
    return GridFunction::sample(box, n, [r](double x, double y) { return 0.5 * r * x * x + 0.5 / r * y * y; });
}

}  // namespace homoglab
