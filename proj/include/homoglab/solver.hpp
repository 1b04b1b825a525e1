#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "homoglab/environment.hpp"
#include "homoglab/grid.hpp"
#include "homoglab/operators.hpp"

namespace homoglab {

/// Dirichlet data given in closed form and evaluated at boundary nodes.
class BoundaryData {
public:
    enum class Kind { Zero, Affine, Quadratic, Samples };

    static BoundaryData zero();
    /// p . (x - origin) + c.
    static BoundaryData affine(std::array<double, 2> p, double c, std::array<double, 2> origin = {0.0, 0.0});
    /// 1/2 (x - origin)^T A (x - origin) + p . (x - origin) + c.
    static BoundaryData quadratic(SymMatrix a, std::array<double, 2> p, double c,
                                  std::array<double, 2> origin = {0.0, 0.0});
    /// Boundary values copied from a grid function of matching size.
    static BoundaryData samples(GridFunction values);

    Kind kind() const { return kind_; }
    /// Value at boundary node (i, j) of `grid`.
    double at(const GridFunction& grid, int i, int j) const;
    /// Writes boundary nodes of u.
    void fill(GridFunction& u) const;
    std::string describe() const;

private:
    Kind kind_ = Kind::Zero;
    SymMatrix a_;
    std::array<double, 2> p_{0.0, 0.0};
    double c_ = 0.0;
    std::array<double, 2> origin_{0.0, 0.0};
    std::shared_ptr<const GridFunction> samples_;
};

struct SolveOptions {
    double tol = 1e-10;
    int max_iterations = 100;
};

struct SolveReport {
    int iterations = 0;
    double residual = 0.0;
    std::size_t policy_switches = 0;
    double wall_seconds = 0.0;
    /// Residual after each policy evaluation.
    std::vector<double> residual_history;
};

struct SolveResult {
    GridFunction u;
    SolveReport report;
};

/// Monotone discretization of F(D^2 u, x) = f on an n x n grid over a box,
/// with the local control sets of every interior node precomputed.
/// Caches the last factorization and policy, so it is not safe to share across threads.
class DirichletProblem {
public:
    DirichletProblem(const OperatorField& field, Box box, int n);
    ~DirichletProblem();
    DirichletProblem(DirichletProblem&&) noexcept;
    DirichletProblem& operator=(DirichletProblem&&) noexcept;

    /// rhs == nullptr means f = 0.
    SolveResult solve(const BoundaryData& g, const GridFunction* rhs = nullptr, const SolveOptions& options = {});

    /// Nodewise F_h(D_h^2 u, x) at interior nodes; boundary entries are 0.
    GridFunction apply(const GridFunction& u) const;

    /// Gauss-Seidel sweeps raising each interior value to the smallest one with
    /// F_h >= 0 at its node, until no value moves by more than tol. Returns the sweeps used.
    int relax_upward(GridFunction& u, int max_sweeps = 100000, double tol = 1e-13) const;

    const Box& box() const;
    int n() const;
    /// True when every node has a single control (the scheme is linear).
    bool linear() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

SolveResult solve_dirichlet(const OperatorField& field, Box box, int n, const BoundaryData& g,
                            const GridFunction* rhs = nullptr, const SolveOptions& options = {});

GridFunction apply_operator(const OperatorField& field, const GridFunction& u);

/// Smallest value over interior nodes.
double min_interior(const GridFunction& u);

struct CellSolve {
    GridFunction w;
    /// delta * w at the node at the window origin.
    double value = 0.0;
    SolveReport report;
};

/// delta w + F(A + D^2 w, y) = 0 on the torus formed by the realization window,
/// `per_unit` nodes per unit length. `warm_policy` carries the policy between calls.
CellSolve solve_cell(std::shared_ptr<const Realization> realization, const SymMatrix& a, double delta, int per_unit,
                     const SolveOptions& options = {}, std::vector<int>* warm_policy = nullptr);

struct CellSchedule {
    std::vector<double> deltas;
    /// delta w(0) for each delta.
    std::vector<double> values;
    /// Quadratic extrapolation of the last three values to delta = 0.
    double extrapolated = 0.0;
};

/// Solves along a decreasing delta schedule, warm starting each solve from the previous policy.
CellSchedule solve_cell_schedule(std::shared_ptr<const Realization> realization, const SymMatrix& a,
                                 const std::vector<double>& deltas, int per_unit, const SolveOptions& options = {});

/// Value at 0 of the polynomial through the last (up to) three points.
double richardson_to_zero(const std::vector<double>& deltas, const std::vector<double>& values);

}  // namespace homoglab
