#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "homoglab/grid.hpp"
#include "homoglab/operators.hpp"
#include "homoglab/solver.hpp"

namespace homoglab {

/// sup{det A : A >= 0, F(A) >= 0} for an x-independent operator.
struct ConstCoeffMu {
    double value = 0.0;
    SymMatrix maximizer;
    /// No positive definite feasible matrix (value 0).
    bool empty = true;
};

/// Closed form for linear operators, (c/d)^d / det a at A* = (c/d) a^{-1}.
/// Otherwise A = t expm(S) with S traceless: t(S) is the largest feasible scale
/// (bisection), and S is optimized by multi-start pattern search.
ConstCoeffMu mu_constant_coeff(const LocalOperator& op);
ConstCoeffMu mu_constant_coeff(const std::function<double(const SymMatrix&)>& f, int dim, std::uint64_t seed = 0);

struct MuConfig {
    /// Grid points per side; 0 means derive from per_unit.
    int n = 0;
    int per_unit = 27;
    bool optimize = true;
    /// Maximum number of Dirichlet solves spent by the boundary search.
    int budget = 200;
    /// Supersolution certificate: F_h(u) >= -cert_tol at every interior node.
    double cert_tol = 1e-8;
    SolveOptions solve{};
    /// Additional starting boundary data.
    std::vector<BoundaryData> extra_candidates;
    /// Called with every candidate that passes the certificate and its normalized measure.
    std::function<void(const GridFunction&, double)> on_certified;
};

struct MuEstimate {
    /// Envelope measure of the best certified candidate per interior area.
    double value = 0.0;
    std::string candidate;
    /// Dirichlet solves performed.
    int solves = 0;
    int search_iterations = 0;
    /// min over interior nodes of F_h(u) for the returned candidate.
    double cert_resid = 0.0;
    int n = 0;
    GridFunction u{Box{}, 3};
};

MuEstimate mu_estimate(const OperatorField& field, const Box& box, const MuConfig& config = {});
MuEstimate mu_estimate(const OperatorField& field, const TriadicCube& cube, const MuConfig& config = {});

/// mu_estimate of the starred field.
MuEstimate mu_star_estimate(const OperatorField& field, const TriadicCube& cube, const MuConfig& config = {});

/// Random search over discrete supersolutions on a tiny grid (n <= 9): random
/// quadratics plus noise, lifted by upward nodal relaxation. Lower bound on the
/// discrete supremum, normalized as mu_estimate.
double mu_bruteforce_tiny(const OperatorField& field, const TriadicCube& cube, int n, int samples,
                          std::uint64_t seed = 0);

/// Mean of the transformed operator over the distinct tiles met at sample points of the box.
std::function<double(const SymMatrix&)> averaged_operator(const OperatorField& field, const Box& box);

/// ABP-type oscillation bound for a supersolution on a cube of side 3^m:
/// pi^{-1/2} sqrt(2) 3^{2m} value^{1/2}.
double abp_bound(int m, double value);

}  // namespace homoglab
