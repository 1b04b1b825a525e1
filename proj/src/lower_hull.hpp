#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace homoglab::detail {

/// Sign of the orientation of (a, b, c) in the plane, exact.
int orient2d(const double* a, const double* b, const double* c);

/// Positive when p lies strictly below the plane through the lifted CCW triangle (a, b, c), exact.
int below_plane(const double* a, const double* b, const double* c, const double* p);

/// Lower convex hull of lifted planar points (x, y, z), as a triangulation of
/// the projected convex hull. Points that are not hull vertices are skipped.
/// Triangles are counterclockwise in (x, y).
class LowerHull {
public:
    struct Triangle {
        std::array<int, 3> v{};
        /// nbr[i] is the triangle across the edge opposite v[i], or -1.
        std::array<int, 3> nbr{-1, -1, -1};
        bool alive = true;
    };

    /// `points` holds (x, y, z); `active` lists the ids that take part.
    LowerHull(const std::vector<std::array<double, 3>>& points, const std::vector<int>& active);

    const std::vector<Triangle>& triangles() const { return tris_; }
    /// Ids of alive triangles.
    std::vector<int> alive() const;
    /// An alive triangle whose closed projection contains (x, y), or -1 outside the hull.
    int locate(double x, double y, int hint = -1) const;

private:
    void initial_triangulation(const std::vector<int>& hull);
    void lawson();
    bool flip_if_needed(int t, int i);
    void insert(int p);
    int new_triangle(int a, int b, int c);
    void link(int t, int edge, int other);

    const std::vector<std::array<double, 3>>& pts_;
    std::vector<Triangle> tris_;
    int last_ = 0;
    std::uint64_t walk_state_ = 0x9e3779b97f4a7c15ULL;
};

}  // namespace homoglab::detail
