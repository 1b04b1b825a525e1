#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "homoglab/grid.hpp"

namespace homoglab {

/// Open axis-aligned rectangle (x0, x1) x (y0, y1).
struct Rect {
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

    static Rect of(const Box& b) { return {b.x0, b.y0, b.x0 + b.side, b.y0 + b.side}; }
    bool contains(double x, double y) const { return x > x0 && x < x1 && y > y0 && y < y1; }
    double area() const { return (x1 - x0) * (y1 - y0); }
};

/// Convex polygon in slope space, counterclockwise, without repeated vertices.
struct Polygon {
    std::vector<std::array<double, 2>> vertices;

    /// Convex hull of arbitrary points.
    static Polygon hull_of(std::vector<std::array<double, 2>> points);
    double area() const;
    bool empty() const { return vertices.empty(); }
    /// Closed membership with an absolute slack.
    bool contains(const std::array<double, 2>& p, double tol = 0.0) const;
};

/// Restricts the lifted point set. `mask` selects grid nodes (empty: all nodes);
/// `extra` adds off-grid samples (x, y, value) of the same function.
struct EnvelopeDomain {
    std::vector<char> mask;
    std::vector<std::array<double, 3>> extra;
};

/// Maximal planar piece of the lower hull.
struct Facet {
    std::array<double, 2> gradient{};
    double offset = 0.0;
    /// Point ids: node index(i, j), or size() + k for extra point k.
    std::vector<int> vertices;
};

struct HullTriangle {
    std::array<int, 3> v{};
    /// Triangle across the edge opposite v[i], or -1 on the hull boundary.
    std::array<int, 3> nbr{-1, -1, -1};
    std::array<double, 2> gradient{};
    double offset = 0.0;
    int facet = -1;
};

struct EnvelopeResult {
    GridFunction envelope;
    std::vector<Facet> facets;
    std::vector<HullTriangle> triangles;
    /// Lifted points (x, y, value) by point id.
    std::vector<std::array<double, 3>> points;
    /// Incident triangles and facets per point id (empty when the point is not a hull vertex).
    std::vector<std::vector<int>> vertex_triangles;
    std::vector<std::vector<int>> vertex_facets;
    /// Point lies on the boundary of the projected hull.
    std::vector<char> on_boundary;
    /// Per node: a triangle whose closed projection contains it (-1 when masked out).
    std::vector<int> node_triangle;
    /// Per node: 1 when u - envelope <= contact_tol.
    std::vector<char> contact;
    double contact_tol = 0.0;

    bool is_vertex(int point) const { return !vertex_triangles[point].empty(); }
};

EnvelopeResult convex_envelope(const GridFunction& u, const EnvelopeDomain& domain = {});

struct SubdiffAtom {
    int point = -1;
    double x = 0.0, y = 0.0;
    Polygon polygon;
    double volume = 0.0;
};

/// One atom per hull vertex off the hull boundary: the hull of its incident facet gradients.
std::vector<SubdiffAtom> subdiff_atoms(const EnvelopeResult& env);

/// Sum of atom volumes at vertices strictly inside `region`.
double subdiff_measure(const EnvelopeResult& env, const Rect& region);
double subdiff_measure(const GridFunction& u, const Rect& region);

struct NodeSubdiff {
    Polygon polygon;
    bool contact = false;
    /// max over returned extreme points p and domain points y of (env(node) + p.(y - node) - u(y))_+.
    double certificate_violation = 0.0;
};

/// Subdifferential of the envelope at node (i, j); empty for masked-out nodes.
NodeSubdiff subdiff_at(const EnvelopeResult& env, int i, int j);

/// Largest amount by which the plane of slope p through (x, value) rises above the domain points.
double check_subgradient(const EnvelopeResult& env, double x, double y, double value, const std::array<double, 2>& p);

struct SlopeBox {
    std::array<double, 2> lo{}, hi{};
    double area() const { return (hi[0] - lo[0]) * (hi[1] - lo[1]); }
    bool contains(const std::array<double, 2>& p) const {
        return p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1];
    }
};

/// Bounding box of the one-sided difference quotients at locally convex interior nodes.
SlopeBox default_slope_box(const GridFunction& u);

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::int64_t samples = 0;
    std::int64_t hits = 0;
};

/// Monte Carlo estimate of the envelope subdifferential measure of `region`: the
/// fraction of slopes p in `box` whose minimizers of u - p.x include a point strictly
/// inside `region`. Throws InvalidInput when the box misses difference quotients of
/// the locally convex part of u.
McEstimate mc_subdiff_measure(const GridFunction& u, const Rect& region, std::int64_t n_slopes, const SlopeBox& box,
                              std::uint64_t seed);

}  // namespace homoglab
