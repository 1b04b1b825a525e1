#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace homoglab {

/// Closed square [x0, x0 + side] x [y0, y0 + side].
struct Box {
    double x0 = 0.0, y0 = 0.0, side = 1.0;

    double area() const { return side * side; }
    double center_x() const { return x0 + 0.5 * side; }
    double center_y() const { return y0 + 0.5 * side; }
    bool operator==(const Box&) const = default;
};

/// 3^m k + Q_m with Q_m = (-3^m/2, 3^m/2)^2.
struct TriadicCube {
    int m = 0;
    std::array<std::int64_t, 2> k{0, 0};

    double side() const;
    Box box() const;
    /// Half-open membership [lo, hi) per axis.
    bool contains(std::span<const double> x) const;
    bool operator==(const TriadicCube&) const = default;
};

/// 3^m per axis to the given integer power.
double pow3(int m);

/// The level-m cube containing x: k = floor(3^{-m} x + 1/2).
TriadicCube cube_of(int m, std::span<const double> x);

/// The 3^{2 levels} descendants `levels` generations down, row-major in (k_y, k_x).
std::vector<TriadicCube> subcubes(const TriadicCube& cube, int levels);

/// Values of a scalar function on an n x n uniform grid over a box.
/// Node (i, j) sits at (x0 + i h, y0 + j h), h = side / (n - 1); storage is row-major in j.
class GridFunction {
public:
    GridFunction(Box box, int n, std::vector<double> values);
    GridFunction(Box box, int n, double fill = 0.0);
    static GridFunction sample(Box box, int n, const std::function<double(double, double)>& f);

    const Box& box() const { return box_; }
    int n() const { return n_; }
    double h() const { return box_.side / (n_ - 1); }
    double x(int i) const { return box_.x0 + i * h(); }
    double y(int j) const { return box_.y0 + j * h(); }
    std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * n_ + i; }
    double operator()(int i, int j) const { return values_[index(i, j)]; }
    double& operator()(int i, int j) { return values_[index(i, j)]; }
    bool is_boundary(int i, int j) const { return i == 0 || j == 0 || i == n_ - 1 || j == n_ - 1; }
    std::size_t size() const { return values_.size(); }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }
    /// Number of interior nodes times h^2 (area represented by interior nodes).
    double interior_area() const;

private:
    Box box_;
    int n_;
    std::vector<double> values_;
};

/// Number of grid points per side for a level-m cube at `per_unit` intervals per unit length.
int grid_points(int m, int per_unit);

/// Copies the values on the aligned subgrid covering `child`. Throws InvalidInput
/// when the child is not a union of grid cells of the parent.
GridFunction restrict_to(const GridFunction& u, const Box& child);
GridFunction restrict_to(const GridFunction& u, const TriadicCube& child);

void save_grid(const GridFunction& u, const std::filesystem::path& path);
GridFunction load_grid(const std::filesystem::path& path);

}  // namespace homoglab
