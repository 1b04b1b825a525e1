#pragma once

#include <array>
#include <optional>

#include "homoglab/sym_matrix.hpp"

namespace homoglab {

/// Lattice directions of the two-dimensional monotone stencil:
/// e1, e2, e1+e2, e1-e2.
inline constexpr std::array<std::array<int, 2>, 4> kStencilDirections{{{1, 0}, {0, 1}, {1, 1}, {1, -1}}};

/// Nonnegative weights w with a = sum_v w_v v v^T over kStencilDirections.
using StencilWeights = std::array<double, 4>;

/// Decomposes a 2x2 coefficient matrix. Returns nullopt unless
/// |a12| <= min(a11, a22), which is exactly when all weights are nonnegative.
std::optional<StencilWeights> stencil_weights(const SymMatrix& a);

}  // namespace homoglab
