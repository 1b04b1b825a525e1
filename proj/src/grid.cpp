#include "homoglab/grid.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "homoglab/error.hpp"

namespace homoglab {

namespace {

constexpr const char* kGridMagic = "HOMOGLAB-GRID v1";
constexpr double kAlignTol = 1e-9;

std::int64_t ipow3(int e) {
    std::int64_t p = 1;
    for (int i = 0; i < e; ++i) p *= 3;
    return p;
}

int aligned_index(double offset, double h, const char* what) {
    const double r = offset / h;
    const double nearest = std::round(r);
    if (std::abs(r - nearest) > kAlignTol * std::max(1.0, std::abs(r)))
        throw InvalidInput(std::string("restrict: child ") + what + " is not aligned with the parent grid");
    return static_cast<int>(nearest);
}

}  // namespace

double pow3(int m) { return m >= 0 ? static_cast<double>(ipow3(m)) : 1.0 / static_cast<double>(ipow3(-m)); }

double TriadicCube::side() const { return pow3(m); }

Box TriadicCube::box() const {
    const double s = side();
    return Box{s * static_cast<double>(k[0]) - 0.5 * s, s * static_cast<double>(k[1]) - 0.5 * s, s};
}

bool TriadicCube::contains(std::span<const double> x) const {
    const Box b = box();
    return x[0] >= b.x0 && x[0] < b.x0 + b.side && x[1] >= b.y0 && x[1] < b.y0 + b.side;
}

TriadicCube cube_of(int m, std::span<const double> x) {
    if (x.size() != 2) throw InvalidInput("cube_of: points are two-dimensional");
    TriadicCube c;
    c.m = m;
    const double inv = pow3(-m);
    for (int i = 0; i < 2; ++i) c.k[i] = static_cast<std::int64_t>(std::floor(inv * x[i] + 0.5));
    return c;
}

std::vector<TriadicCube> subcubes(const TriadicCube& cube, int levels) {
    if (levels < 1) throw InvalidInput("subcubes: levels must be at least 1");
    const std::int64_t per_axis = ipow3(levels);
    const std::int64_t half = (per_axis - 1) / 2;
    std::vector<TriadicCube> out;
    out.reserve(static_cast<std::size_t>(per_axis * per_axis));
    for (std::int64_t j = -half; j <= half; ++j) {
        for (std::int64_t i = -half; i <= half; ++i) {
            out.push_back(TriadicCube{cube.m - levels, {per_axis * cube.k[0] + i, per_axis * cube.k[1] + j}});
        }
    }
    return out;
}

GridFunction::GridFunction(Box box, int n, std::vector<double> values) : box_(box), n_(n), values_(std::move(values)) {
    if (n_ < 2) throw InvalidInput("GridFunction: need at least 2 points per side");
    if (!(box_.side > 0.0)) throw InvalidInput("GridFunction: box side must be positive");
    if (values_.size() != static_cast<std::size_t>(n_) * n_) throw InvalidInput("GridFunction: value count mismatch");
    for (double v : values_)
        if (!std::isfinite(v)) throw InvalidInput("GridFunction: non-finite value");
}

GridFunction::GridFunction(Box box, int n, double fill)
    : GridFunction(box, n, std::vector<double>(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), fill)) {}

GridFunction GridFunction::sample(Box box, int n, const std::function<double(double, double)>& f) {
    GridFunction g(box, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) g(i, j) = f(g.x(i), g.y(j));
    return g;
}

double GridFunction::interior_area() const {
    const double len = (n_ - 2) * h();
    return len * len;
}

int grid_points(int m, int per_unit) {
    if (per_unit < 1) throw InvalidInput("grid_points: per_unit must be positive");
    if (m < 0) {
        const std::int64_t q = ipow3(-m);
        if (per_unit % q != 0) throw InvalidInput("grid_points: resolution does not resolve the cube");
        return static_cast<int>(per_unit / q) + 1;
    }
    return static_cast<int>(ipow3(m) * per_unit) + 1;
}

GridFunction restrict_to(const GridFunction& u, const Box& child) {
    const double h = u.h();
    const int i0 = aligned_index(child.x0 - u.box().x0, h, "origin");
    const int j0 = aligned_index(child.y0 - u.box().y0, h, "origin");
    const int cells = aligned_index(child.side, h, "side");
    if (cells < 1 || i0 < 0 || j0 < 0 || i0 + cells > u.n() - 1 || j0 + cells > u.n() - 1)
        throw InvalidInput("restrict: child box leaves the parent grid");
    GridFunction out(child, cells + 1);
    for (int j = 0; j <= cells; ++j)
        for (int i = 0; i <= cells; ++i) out(i, j) = u(i0 + i, j0 + j);
    return out;
}

GridFunction restrict_to(const GridFunction& u, const TriadicCube& child) { return restrict_to(u, child.box()); }

void save_grid(const GridFunction& u, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out.precision(17);
    out << kGridMagic << '\n';
    out << 2 << ' ' << u.n() << ' ' << u.box().x0 << ' ' << u.box().y0 << ' ' << u.box().side << '\n';
    for (double v : u.values()) out << v << '\n';
    if (!out) throw FormatError("write failed for " + path.string());
}

GridFunction load_grid(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string magic;
    std::getline(in, magic);
    if (magic != kGridMagic) throw FormatError(path.string() + ": missing '" + std::string(kGridMagic) + "' header");
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    int d = 0, n = 0;
    Box box;
    if (!(hs >> d >> n >> box.x0 >> box.y0 >> box.side)) throw FormatError(path.string() + ": bad header line");
    if (d != 2) throw FormatError(path.string() + ": only d = 2 grids are supported");
    if (n < 2 || !(box.side > 0)) throw FormatError(path.string() + ": invalid grid size");
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(n) * n);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            std::size_t used = 0;
            values.push_back(std::stod(line, &used));
        } catch (const std::exception&) {
            throw FormatError(path.string() + ": bad value '" + line + "'");
        }
    }
    if (values.size() != static_cast<std::size_t>(n) * n)
        throw FormatError(path.string() + ": expected " + std::to_string(n * n) + " values, found " +
                          std::to_string(values.size()));
    return GridFunction(box, n, std::move(values));
}

}  // namespace homoglab
