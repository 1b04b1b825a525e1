#include "homoglab/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "homoglab/error.hpp"
#include "lower_hull.hpp"

namespace homoglab {

namespace {

double cross(const std::array<double, 2>& o, const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

bool same_gradient(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    const double scale = 1.0 + std::max(std::hypot(a[0], a[1]), std::hypot(b[0], b[1]));
    return std::abs(a[0] - b[0]) <= 1e-10 * scale && std::abs(a[1] - b[1]) <= 1e-10 * scale;
}

}  // namespace

Polygon Polygon::hull_of(std::vector<std::array<double, 2>> pts) {
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    Polygon out;
    if (pts.size() <= 2) {
        out.vertices = pts;
        return out;
    }
    std::vector<std::array<double, 2>> h(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
        h[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
        h[k++] = pts[i];
    }
    h.resize(k - 1);
    out.vertices = std::move(h);
    return out;
}

double Polygon::area() const {
    if (vertices.size() < 3) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        const auto& a = vertices[i];
        const auto& b = vertices[(i + 1) % vertices.size()];
        s += a[0] * b[1] - a[1] * b[0];
    }
    return 0.5 * std::abs(s);
}

bool Polygon::contains(const std::array<double, 2>& p, double tol) const {
    if (vertices.empty()) return false;
    if (vertices.size() == 1) return std::hypot(p[0] - vertices[0][0], p[1] - vertices[0][1]) <= tol;
    if (vertices.size() == 2) {
        const auto& a = vertices[0];
        const auto& b = vertices[1];
        const double dx = b[0] - a[0], dy = b[1] - a[1];
        const double len2 = dx * dx + dy * dy;
        double t = ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2;
        t = std::clamp(t, 0.0, 1.0);
        return std::hypot(p[0] - a[0] - t * dx, p[1] - a[1] - t * dy) <= tol;
    }
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        const auto& a = vertices[i];
        const auto& b = vertices[(i + 1) % vertices.size()];
        const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
        if (cross(a, b, p) < -tol * len) return false;
    }
    return true;
}

EnvelopeResult convex_envelope(const GridFunction& u, const EnvelopeDomain& domain) {
    const int n = u.n();
    const double h = u.h();
    const Box& box = u.box();
    const std::size_t nodes = u.size();
    if (!domain.mask.empty() && domain.mask.size() != nodes)
        throw InvalidInput("envelope mask has " + std::to_string(domain.mask.size()) + " entries, expected " +
                           std::to_string(nodes));

    // Lift in grid-index coordinates so that nodes are exact integers.
    std::vector<std::array<double, 3>> lifted(nodes + domain.extra.size());
    std::vector<std::array<double, 3>> physical(lifted.size());
    std::vector<int> active;
    active.reserve(lifted.size());
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const std::size_t id = u.index(i, j);
            lifted[id] = {static_cast<double>(i), static_cast<double>(j), u(i, j)};
            physical[id] = {u.x(i), u.y(j), u(i, j)};
            if (domain.mask.empty() || domain.mask[id]) active.push_back(static_cast<int>(id));
        }
    }
    auto snap = [](double t) {
        const double r = std::round(t);
        return std::abs(t - r) <= 1e-9 ? r : t;
    };
    for (std::size_t k = 0; k < domain.extra.size(); ++k) {
        const auto& e = domain.extra[k];
        if (!std::isfinite(e[0]) || !std::isfinite(e[1]) || !std::isfinite(e[2]))
            throw InvalidInput("envelope extra point " + std::to_string(k) + " is not finite");
        const double ti = snap((e[0] - box.x0) / h), tj = snap((e[1] - box.y0) / h);
        if (ti < -1e-9 || tj < -1e-9 || ti > n - 1 + 1e-9 || tj > n - 1 + 1e-9)
            throw InvalidInput("envelope extra point " + std::to_string(k) + " lies outside the grid box");
        const std::size_t id = nodes + k;
        lifted[id] = {ti, tj, e[2]};
        physical[id] = e;
        active.push_back(static_cast<int>(id));
    }

    const detail::LowerHull hull(lifted, active);
    const auto alive = hull.alive();
    std::vector<int> remap(hull.triangles().size(), -1);
    for (std::size_t t = 0; t < alive.size(); ++t) remap[alive[t]] = static_cast<int>(t);

    EnvelopeResult res{u, {}, {}, physical, {}, {}, {}, {}, {}, 0.0};
    res.triangles.resize(alive.size());
    res.vertex_triangles.assign(lifted.size(), {});
    res.on_boundary.assign(lifted.size(), 0);
    for (std::size_t t = 0; t < alive.size(); ++t) {
        const auto& src = hull.triangles()[alive[t]];
        auto& dst = res.triangles[t];
        dst.v = src.v;
        for (int e = 0; e < 3; ++e) dst.nbr[e] = src.nbr[e] < 0 ? -1 : remap[src.nbr[e]];
        const auto& a = lifted[src.v[0]];
        const auto& b = lifted[src.v[1]];
        const auto& c = lifted[src.v[2]];
        const double bx = b[0] - a[0], by = b[1] - a[1], bz = b[2] - a[2];
        const double cx = c[0] - a[0], cy = c[1] - a[1], cz = c[2] - a[2];
        const double nz = bx * cy - by * cx;
        const double nx = by * cz - bz * cy;
        const double ny = bz * cx - bx * cz;
        dst.gradient = {-nx / nz / h, -ny / nz / h};
        const auto& pa = physical[src.v[0]];
        dst.offset = pa[2] - dst.gradient[0] * pa[0] - dst.gradient[1] * pa[1];
        for (int e = 0; e < 3; ++e) {
            res.vertex_triangles[src.v[e]].push_back(static_cast<int>(t));
            if (dst.nbr[e] < 0) {
                res.on_boundary[src.v[(e + 1) % 3]] = 1;
                res.on_boundary[src.v[(e + 2) % 3]] = 1;
            }
        }
    }

    // Merge adjacent coplanar triangles into facets.
    UnionFind uf(res.triangles.size());
    for (std::size_t t = 0; t < res.triangles.size(); ++t)
        for (int nb : res.triangles[t].nbr)
            if (nb >= 0 && same_gradient(res.triangles[t].gradient, res.triangles[nb].gradient))
                uf.unite(static_cast<int>(t), nb);
    std::vector<int> facet_of_root(res.triangles.size(), -1);
    for (std::size_t t = 0; t < res.triangles.size(); ++t) {
        const int r = uf.find(static_cast<int>(t));
        if (facet_of_root[r] < 0) {
            facet_of_root[r] = static_cast<int>(res.facets.size());
            res.facets.push_back({res.triangles[r].gradient, res.triangles[r].offset, {}});
        }
        const int f = facet_of_root[r];
        res.triangles[t].facet = f;
        for (int v : res.triangles[t].v) res.facets[f].vertices.push_back(v);
    }
    res.vertex_facets.assign(lifted.size(), {});
    for (std::size_t f = 0; f < res.facets.size(); ++f) {
        auto& vs = res.facets[f].vertices;
        std::sort(vs.begin(), vs.end());
        vs.erase(std::unique(vs.begin(), vs.end()), vs.end());
        for (int v : vs) res.vertex_facets[v].push_back(static_cast<int>(f));
    }

    // Envelope heights at nodes.
    res.contact_tol = std::max(1e-10, h * h);
    res.node_triangle.assign(nodes, -1);
    res.contact.assign(nodes, 0);
    int hint = -1;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const std::size_t id = u.index(i, j);
            if (!(domain.mask.empty() || domain.mask[id])) continue;
            const int t = hull.locate(i, j, hint);
            if (t < 0) throw std::logic_error("envelope node outside its own hull");
            hint = t;
            const int lt = remap[t];
            res.node_triangle[id] = lt;
            const auto& tri = hull.triangles()[t];
            const double q[2] = {static_cast<double>(i), static_cast<double>(j)};
            double value;
            if (res.is_vertex(static_cast<int>(id))) {
                value = u(i, j);
            } else {
                const auto& a = lifted[tri.v[0]];
                const auto& b = lifted[tri.v[1]];
                const auto& c = lifted[tri.v[2]];
                const double area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
                const double la = ((b[0] - q[0]) * (c[1] - q[1]) - (b[1] - q[1]) * (c[0] - q[0])) / area;
                const double lb = ((c[0] - q[0]) * (a[1] - q[1]) - (c[1] - q[1]) * (a[0] - q[0])) / area;
                const double lc = 1.0 - la - lb;
                value = la * a[2] + lb * b[2] + lc * c[2];
                value = std::min(value, u(i, j));
            }
            res.envelope(i, j) = value;
            res.contact[id] = u(i, j) - value <= res.contact_tol;
        }
    }
    return res;
}

std::vector<SubdiffAtom> subdiff_atoms(const EnvelopeResult& env) {
    std::vector<SubdiffAtom> out;
    for (std::size_t p = 0; p < env.points.size(); ++p) {
        if (!env.is_vertex(static_cast<int>(p)) || env.on_boundary[p]) continue;
        std::vector<std::array<double, 2>> grads;
        for (int f : env.vertex_facets[p]) grads.push_back(env.facets[f].gradient);
        SubdiffAtom atom;
        atom.point = static_cast<int>(p);
        atom.x = env.points[p][0];
        atom.y = env.points[p][1];
        atom.polygon = Polygon::hull_of(std::move(grads));
        atom.volume = atom.polygon.area();
        out.push_back(std::move(atom));
    }
    return out;
}

double subdiff_measure(const EnvelopeResult& env, const Rect& region) {
    double total = 0.0;
    for (const auto& a : subdiff_atoms(env))
        if (region.contains(a.x, a.y)) total += a.volume;
    return total;
}

double subdiff_measure(const GridFunction& u, const Rect& region) {
    return subdiff_measure(convex_envelope(u), region);
}

double check_subgradient(const EnvelopeResult& env, double x, double y, double value, const std::array<double, 2>& p) {
    double worst = 0.0;
    for (std::size_t q = 0; q < env.points.size(); ++q) {
        const bool active = q >= env.envelope.size() ? true : env.node_triangle[q] >= 0;
        if (!active) continue;
        const auto& pt = env.points[q];
        const double plane = value + p[0] * (pt[0] - x) + p[1] * (pt[1] - y);
        worst = std::max(worst, plane - pt[2]);
    }
    return worst;
}

NodeSubdiff subdiff_at(const EnvelopeResult& env, int i, int j) {
    const GridFunction& g = env.envelope;
    NodeSubdiff out;
    const std::size_t id = g.index(i, j);
    if (env.node_triangle[id] < 0) return out;
    out.contact = env.contact[id];
    std::vector<int> tris;
    if (env.is_vertex(static_cast<int>(id))) {
        tris = env.vertex_triangles[id];
    } else {
        const int t = env.node_triangle[id];
        tris.push_back(t);
        const double hh = g.h();
        const double q[2] = {static_cast<double>(i), static_cast<double>(j)};
        const auto& tri = env.triangles[t];
        auto idx = [&](int v) {
            const auto& p = env.points[v];
            return std::array<double, 2>{(p[0] - g.box().x0) / hh, (p[1] - g.box().y0) / hh};
        };
        for (int e = 0; e < 3; ++e) {
            const auto a = idx(tri.v[(e + 1) % 3]);
            const auto b = idx(tri.v[(e + 2) % 3]);
            const double o = detail::orient2d(a.data(), b.data(), q);
            if (o == 0 && tri.nbr[e] >= 0) tris.push_back(tri.nbr[e]);
        }
        // A node at the position of a deduplicated vertex belongs to that vertex's fan.
        for (int v : tri.v) {
            const auto a = idx(v);
            if (std::abs(a[0] - q[0]) <= 1e-9 && std::abs(a[1] - q[1]) <= 1e-9) {
                tris = env.vertex_triangles[v];
                break;
            }
        }
    }
    std::vector<std::array<double, 2>> grads;
    for (int t : tris) grads.push_back(env.facets[env.triangles[t].facet].gradient);
    out.polygon = Polygon::hull_of(std::move(grads));
    for (const auto& p : out.polygon.vertices)
        out.certificate_violation =
            std::max(out.certificate_violation, check_subgradient(env, g.x(i), g.y(j), g(i, j), p));
    return out;
}

SlopeBox default_slope_box(const GridFunction& u) {
    const int n = u.n();
    const double h = u.h();
    SlopeBox box{{0.0, 0.0}, {0.0, 0.0}};
    bool any = false;
    for (int j = 1; j + 1 < n; ++j) {
        for (int i = 1; i + 1 < n; ++i) {
            const double dxm = (u(i, j) - u(i - 1, j)) / h, dxp = (u(i + 1, j) - u(i, j)) / h;
            const double dym = (u(i, j) - u(i, j - 1)) / h, dyp = (u(i, j + 1) - u(i, j)) / h;
            if (dxm > dxp || dym > dyp) continue;
            if (!any) {
                box = {{dxm, dym}, {dxp, dyp}};
                any = true;
            }
            box.lo = {std::min(box.lo[0], dxm), std::min(box.lo[1], dym)};
            box.hi = {std::max(box.hi[0], dxp), std::max(box.hi[1], dyp)};
        }
    }
    return box;
}

McEstimate mc_subdiff_measure(const GridFunction& u, const Rect& region, std::int64_t n_slopes, const SlopeBox& box,
                              std::uint64_t seed) {
    if (n_slopes <= 0) throw InvalidInput("n_slopes must be positive");
    if (!(box.hi[0] >= box.lo[0] && box.hi[1] >= box.lo[1])) throw InvalidInput("slope box is empty");
    const int n = u.n();
    const double h = u.h();
    // Every slope in the subdifferential of a locally convex node inside the region
    // lies between its one-sided difference quotients.
    for (int j = 1; j + 1 < n; ++j) {
        for (int i = 1; i + 1 < n; ++i) {
            if (!region.contains(u.x(i), u.y(j))) continue;
            const double dxm = (u(i, j) - u(i - 1, j)) / h, dxp = (u(i + 1, j) - u(i, j)) / h;
            const double dym = (u(i, j) - u(i, j - 1)) / h, dyp = (u(i, j + 1) - u(i, j)) / h;
            if (dxm > dxp || dym > dyp) continue;
            const double slack = 1e-9 * (1.0 + std::abs(dxm) + std::abs(dxp) + std::abs(dym) + std::abs(dyp));
            if (dxm < box.lo[0] - slack || dxp > box.hi[0] + slack || dym < box.lo[1] - slack ||
                dyp > box.hi[1] + slack)
                throw InvalidInput("slope box too small: node (" + std::to_string(u.x(i)) + ", " +
                                   std::to_string(u.y(j)) + ") has difference quotients outside it");
        }
    }
    std::vector<double> xs(u.size()), ys(u.size());
    std::vector<char> inside(u.size());
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            xs[u.index(i, j)] = u.x(i);
            ys[u.index(i, j)] = u.y(j);
            inside[u.index(i, j)] = region.contains(u.x(i), u.y(j));
        }
    const auto& vals = u.values();
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> px(box.lo[0], box.hi[0]), py(box.lo[1], box.hi[1]);
    std::int64_t hits = 0;
    for (std::int64_t s = 0; s < n_slopes; ++s) {
        const double p0 = px(gen), p1 = py(gen);
        double best = INFINITY;
        std::size_t arg = 0;
        for (std::size_t q = 0; q < vals.size(); ++q) {
            const double v = vals[q] - p0 * xs[q] - p1 * ys[q];
            if (v < best) {
                best = v;
                arg = q;
            }
        }
        hits += inside[arg];
    }
    McEstimate est;
    est.samples = n_slopes;
    est.hits = hits;
    const double f = static_cast<double>(hits) / static_cast<double>(n_slopes);
    est.value = box.area() * f;
    est.std_error = box.area() * std::sqrt(std::max(f * (1.0 - f), 1.0 / static_cast<double>(n_slopes)) /
                                         static_cast<double>(n_slopes));
    return est;
}

}  // namespace homoglab
