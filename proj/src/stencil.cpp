#include "homoglab/stencil.hpp"

#include <algorithm>
#include <cmath>

namespace homoglab {

std::optional<StencilWeights> stencil_weights(const SymMatrix& a) {
    if (a.dim() != 2 || !a.is_finite()) return std::nullopt;
    const double a11 = a(0, 0), a22 = a(1, 1), a12 = a(0, 1);
    const double slack = 1e-12 * std::max({1.0, std::abs(a11), std::abs(a22)});
    const double off = std::abs(a12);
    if (off > std::min(a11, a22) + slack) return std::nullopt;
    StencilWeights w{};
    w[0] = std::max(0.0, a11 - off);
    w[1] = std::max(0.0, a22 - off);
    w[2] = std::max(0.0, a12);
    w[3] = std::max(0.0, -a12);
    return w;
}

}  // namespace homoglab
