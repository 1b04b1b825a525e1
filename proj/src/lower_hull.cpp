#include "lower_hull.hpp"

#include <gmpxx.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace homoglab::detail {

namespace {

constexpr double kCcwBound = 3.3306690738754716e-16;
constexpr double kO3dBound = 7.771561172376103e-16;

int sign_of(const mpq_class& v) { return sgn(v); }

int orient2d_exact(const double* a, const double* b, const double* c) {
    const mpq_class ax(a[0]), ay(a[1]), bx(b[0]), by(b[1]), cx(c[0]), cy(c[1]);
    const mpq_class det = (ax - cx) * (by - cy) - (ay - cy) * (bx - cx);
    return sign_of(det);
}

int below_exact(const double* a, const double* b, const double* c, const double* p) {
    const mpq_class px(p[0]), py(p[1]), pz(p[2]);
    const mpq_class adx = mpq_class(a[0]) - px, ady = mpq_class(a[1]) - py, adz = mpq_class(a[2]) - pz;
    const mpq_class bdx = mpq_class(b[0]) - px, bdy = mpq_class(b[1]) - py, bdz = mpq_class(b[2]) - pz;
    const mpq_class cdx = mpq_class(c[0]) - px, cdy = mpq_class(c[1]) - py, cdz = mpq_class(c[2]) - pz;
    const mpq_class det =
        adx * (bdy * cdz - bdz * cdy) - ady * (bdx * cdz - bdz * cdx) + adz * (bdx * cdy - bdy * cdx);
    return sign_of(det);
}

}  // namespace

int orient2d(const double* a, const double* b, const double* c) {
    const double detleft = (a[0] - c[0]) * (b[1] - c[1]);
    const double detright = (a[1] - c[1]) * (b[0] - c[0]);
    const double det = detleft - detright;
    const double bound = kCcwBound * (std::abs(detleft) + std::abs(detright));
    if (det > bound) return 1;
    if (-det > bound) return -1;
    if (bound == 0.0) return 0;
    return orient2d_exact(a, b, c);
}

int below_plane(const double* a, const double* b, const double* c, const double* p) {
    const double adx = a[0] - p[0], ady = a[1] - p[1], adz = a[2] - p[2];
    const double bdx = b[0] - p[0], bdy = b[1] - p[1], bdz = b[2] - p[2];
    const double cdx = c[0] - p[0], cdy = c[1] - p[1], cdz = c[2] - p[2];
    const double m1 = bdy * cdz, m2 = bdz * cdy;
    const double m3 = bdx * cdz, m4 = bdz * cdx;
    const double m5 = bdx * cdy, m6 = bdy * cdx;
    const double det = adx * (m1 - m2) - ady * (m3 - m4) + adz * (m5 - m6);
    const double perm = std::abs(adx) * (std::abs(m1) + std::abs(m2)) + std::abs(ady) * (std::abs(m3) + std::abs(m4)) +
                        std::abs(adz) * (std::abs(m5) + std::abs(m6));
    const double bound = kO3dBound * perm;
    if (det > bound) return 1;
    if (-det > bound) return -1;
    if (bound == 0.0) return 0;
    return below_exact(a, b, c, p);
}

LowerHull::LowerHull(const std::vector<std::array<double, 3>>& points, const std::vector<int>& active) : pts_(points) {
    // Sort by (x, y); among coincident projections keep the lowest point.
    std::vector<int> ids = active;
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
        const auto& p = pts_[a];
        const auto& q = pts_[b];
        if (p[0] != q[0]) return p[0] < q[0];
        if (p[1] != q[1]) return p[1] < q[1];
        if (p[2] != q[2]) return p[2] < q[2];
        return a < b;
    });
    std::vector<int> uniq;
    for (int id : ids) {
        if (!uniq.empty() && pts_[uniq.back()][0] == pts_[id][0] && pts_[uniq.back()][1] == pts_[id][1]) continue;
        uniq.push_back(id);
    }
    if (uniq.size() < 3) throw std::invalid_argument("lower hull needs at least three distinct points");

    // Andrew's monotone chain, strict turns only.
    std::vector<int> hull(2 * uniq.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < uniq.size(); ++i) {
        while (k >= 2 && orient2d(pts_[hull[k - 2]].data(), pts_[hull[k - 1]].data(), pts_[uniq[i]].data()) <= 0) --k;
        hull[k++] = uniq[i];
    }
    for (std::size_t i = uniq.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && orient2d(pts_[hull[k - 2]].data(), pts_[hull[k - 1]].data(), pts_[uniq[i]].data()) <= 0) --k;
        hull[k++] = uniq[i];
    }
    hull.resize(k - 1);
    if (hull.size() < 3) throw std::invalid_argument("lower hull points are collinear");

    initial_triangulation(hull);
    lawson();

    std::vector<char> on_hull(pts_.size(), 0);
    for (int h : hull) on_hull[h] = 1;
    std::vector<int> rest;
    for (int id : uniq)
        if (!on_hull[id]) rest.push_back(id);
    std::mt19937_64 gen(0x1e57ULL + rest.size());
    std::shuffle(rest.begin(), rest.end(), gen);
    for (int p : rest) insert(p);
}

std::vector<int> LowerHull::alive() const {
    std::vector<int> out;
    for (std::size_t t = 0; t < tris_.size(); ++t)
        if (tris_[t].alive) out.push_back(static_cast<int>(t));
    return out;
}

int LowerHull::new_triangle(int a, int b, int c) {
    Triangle t;
    t.v = {a, b, c};
    tris_.push_back(t);
    return static_cast<int>(tris_.size()) - 1;
}

void LowerHull::link(int t, int edge, int other) {
    tris_[t].nbr[edge] = other;
}

void LowerHull::initial_triangulation(const std::vector<int>& hull) {
    const int k = static_cast<int>(hull.size());
    for (int i = 1; i + 1 < k; ++i) new_triangle(hull[0], hull[i], hull[i + 1]);
    // Fan triangle i-1 = (h0, hi, hi+1): edge opposite h0 is on the hull,
    // opposite hi is shared with the next triangle, opposite hi+1 with the previous one.
    const int m = k - 2;
    for (int t = 0; t < m; ++t) {
        link(t, 0, -1);
        link(t, 1, t + 1 < m ? t + 1 : -1);
        link(t, 2, t > 0 ? t - 1 : -1);
    }
    last_ = 0;
}

bool LowerHull::flip_if_needed(int t, int i) {
    const int u = tris_[t].nbr[i];
    if (u < 0) return false;
    int j = 0;
    while (j < 3 && tris_[u].nbr[j] != t) ++j;
    if (j == 3) throw std::logic_error("lower hull adjacency is inconsistent");
    const int a = tris_[t].v[i], b = tris_[t].v[(i + 1) % 3], c = tris_[t].v[(i + 2) % 3];
    const int d = tris_[u].v[j];
    if (below_plane(pts_[a].data(), pts_[b].data(), pts_[c].data(), pts_[d].data()) <= 0) return false;
    // The quadrilateral a b d c is convex for points in convex position.
    const int nb = tris_[t].nbr[(i + 1) % 3];  // edge (c, a)
    const int nc = tris_[t].nbr[(i + 2) % 3];  // edge (a, b)
    const int mc = tris_[u].nbr[(j + 1) % 3];  // edge (b, d)
    const int mb = tris_[u].nbr[(j + 2) % 3];  // edge (d, c)
    tris_[t].v = {a, b, d};
    tris_[t].nbr = {mc, u, nc};
    tris_[u].v = {a, d, c};
    tris_[u].nbr = {mb, nb, t};
    auto repoint = [&](int tri, int from, int to) {
        if (tri < 0) return;
        for (int e = 0; e < 3; ++e)
            if (tris_[tri].nbr[e] == from) tris_[tri].nbr[e] = to;
    };
    repoint(mc, u, t);
    repoint(nb, t, u);
    return true;
}

void LowerHull::lawson() {
    bool changed = true;
    std::size_t guard = 0;
    while (changed) {
        changed = false;
        for (std::size_t t = 0; t < tris_.size(); ++t)
            for (int i = 0; i < 3; ++i) changed |= flip_if_needed(static_cast<int>(t), i);
        if (++guard > 10 * tris_.size() + 100) throw std::logic_error("lower hull flips did not terminate");
    }
}

int LowerHull::locate(double x, double y, int hint) const {
    const double p[2] = {x, y};
    int t = hint >= 0 && hint < static_cast<int>(tris_.size()) && tris_[hint].alive ? hint : -1;
    if (t < 0) {
        for (std::size_t s = tris_.size(); s-- > 0;)
            if (tris_[s].alive) {
                t = static_cast<int>(s);
                break;
            }
    }
    std::uint64_t state = walk_state_ ^ static_cast<std::uint64_t>(t + 1);
    const std::size_t max_steps = 4 * tris_.size() + 16;
    for (std::size_t step = 0; t >= 0 && step < max_steps; ++step) {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        const int start = static_cast<int>((state >> 33) % 3);
        bool moved = false;
        bool outside = false;
        for (int k = 0; k < 3; ++k) {
            const int i = (start + k) % 3;
            const auto& tri = tris_[t];
            if (orient2d(pts_[tri.v[(i + 1) % 3]].data(), pts_[tri.v[(i + 2) % 3]].data(), p) < 0) {
                if (tri.nbr[i] < 0) {
                    outside = true;
                    break;
                }
                t = tri.nbr[i];
                moved = true;
                break;
            }
        }
        if (outside) break;
        if (!moved) return t;
    }
    for (std::size_t s = 0; s < tris_.size(); ++s) {
        const auto& tri = tris_[s];
        if (!tri.alive) continue;
        if (orient2d(pts_[tri.v[0]].data(), pts_[tri.v[1]].data(), p) >= 0 &&
            orient2d(pts_[tri.v[1]].data(), pts_[tri.v[2]].data(), p) >= 0 &&
            orient2d(pts_[tri.v[2]].data(), pts_[tri.v[0]].data(), p) >= 0)
            return static_cast<int>(s);
    }
    return -1;
}

void LowerHull::insert(int p) {
    const double* P = pts_[p].data();
    const int t0 = locate(P[0], P[1], last_);
    if (t0 < 0) return;
    auto below = [&](int t) {
        const auto& v = tris_[t].v;
        return below_plane(pts_[v[0]].data(), pts_[v[1]].data(), pts_[v[2]].data(), P) > 0;
    };
    if (!below(t0)) return;

    std::vector<int> cavity{t0};
    tris_[t0].alive = false;
    for (std::size_t idx = 0; idx < cavity.size(); ++idx) {
        for (int n : tris_[cavity[idx]].nbr) {
            if (n >= 0 && tris_[n].alive && below(n)) {
                tris_[n].alive = false;
                cavity.push_back(n);
            }
        }
    }

    struct Edge {
        int a, b, outside;
    };
    std::vector<Edge> horizon;
    for (int c : cavity) {
        const auto& tri = tris_[c];
        for (int i = 0; i < 3; ++i) {
            const int n = tri.nbr[i];
            if (n >= 0 && !tris_[n].alive) continue;
            horizon.push_back({tri.v[(i + 1) % 3], tri.v[(i + 2) % 3], n});
        }
    }

    std::vector<std::pair<int, int>> starts, ends;
    std::vector<int> created;
    for (const auto& e : horizon) {
        if (orient2d(pts_[e.a].data(), pts_[e.b].data(), P) == 0) {
            if (e.outside >= 0) throw std::logic_error("lower hull cavity is not star shaped");
            continue;
        }
        const int t = new_triangle(e.a, e.b, p);
        tris_[t].nbr[2] = e.outside;
        if (e.outside >= 0) {
            auto& out = tris_[e.outside];
            for (int j = 0; j < 3; ++j)
                if (out.v[(j + 1) % 3] == e.b && out.v[(j + 2) % 3] == e.a) out.nbr[j] = t;
        }
        starts.emplace_back(e.a, t);
        ends.emplace_back(e.b, t);
        created.push_back(t);
    }
    auto find = [](const std::vector<std::pair<int, int>>& m, int key) {
        for (const auto& [k, v] : m)
            if (k == key) return v;
        return -1;
    };
    for (int t : created) {
        const int a = tris_[t].v[0], b = tris_[t].v[1];
        tris_[t].nbr[0] = find(starts, b);
        tris_[t].nbr[1] = find(ends, a);
    }
    if (!created.empty()) last_ = created.front();
}

}  // namespace homoglab::detail
