#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "homoglab/sym_matrix.hpp"

namespace homoglab {

enum class PucciSign { Plus, Minus };

/// P^+(A) = -tr(A_+) + lambda tr(A_-),  P^-(A) = -lambda tr(A_+) + tr(A_-).
double pucci(PucciSign sign, const SymMatrix& a, double lambda);

enum class BellmanMode { Min, Max };

/// F(A) = -tr(a A) + c.
struct LinearOp {
    SymMatrix a;
    double c = 0.0;
};

/// F(A) = min_i or max_i of linear children.
struct BellmanOp {
    std::vector<LinearOp> children;
    BellmanMode mode = BellmanMode::Min;
};

/// F(A) = P^{sign}_{1,lambda}(A) + c.
struct PucciShiftOp {
    PucciSign sign = PucciSign::Plus;
    double c = 0.0;
};

/// x-independent uniformly elliptic operator with ellipticity constant lambda.
class LocalOperator {
public:
    using Kind = std::variant<LinearOp, BellmanOp, PucciShiftOp>;

    static LocalOperator linear(SymMatrix a, double c, double lambda);
    static LocalOperator bellman(std::vector<LinearOp> children, BellmanMode mode, double lambda);
    static LocalOperator pucci_shift(PucciSign sign, double lambda, double c, int dim = 2);

    double operator()(const SymMatrix& a) const;
    double at_zero() const;

    const Kind& kind() const { return kind_; }
    double lambda() const { return lambda_; }
    int dim() const { return dim_; }
    std::string describe() const;

    /// Linear pieces that make up the operator; empty for Pucci operators.
    std::vector<LinearOp> linear_pieces() const;

private:
    LocalOperator(Kind kind, double lambda, int dim);
    Kind kind_;
    double lambda_;
    int dim_;
};

/// Maps a point to the tile operator governing it.
class TileSource {
public:
    virtual ~TileSource() = default;
    virtual const LocalOperator& at(std::span<const double> x) const = 0;
    virtual bool x_independent() const = 0;
    virtual int dim() const = 0;
    virtual double lambda() const = 0;
    /// Axis-aligned box of valid evaluation points (lo, hi per axis).
    virtual void bounds(std::vector<double>& lo, std::vector<double>& hi) const = 0;
};

/// Piecewise local form of a transformed field at one point: the operator
/// B -> mode_i ( -tr(a_i B) + k_i ). A single control means a linear operator.
struct ControlSet {
    std::vector<LinearOp> controls;
    BellmanMode mode = BellmanMode::Min;

    double operator()(const SymMatrix& b) const;
};

/// Lazily transformed operator field G(B, x) = sign * F0(sign * B + offset, x) + shift.
/// star, translate and shift compose in closed form, so evaluation is a single
/// lookup plus one operator application.
class OperatorField {
public:
    explicit OperatorField(std::shared_ptr<const TileSource> base);
    static OperatorField constant(LocalOperator op);

    double eval(const SymMatrix& a, std::span<const double> x) const;

    OperatorField star() const;
    OperatorField translate(const SymMatrix& a0) const;
    OperatorField shift(double s) const;

    /// Linearized local form at x. Throws StencilError for Pucci tiles under a
    /// nonzero offset, which have no finite control representation.
    ControlSet controls_at(std::span<const double> x) const;

    /// The transformed operator at x, as a standalone x-independent operator.
    std::function<double(const SymMatrix&)> frozen_at(std::span<const double> x) const;

    const TileSource& base() const { return *base_; }
    std::shared_ptr<const TileSource> base_ptr() const { return base_; }
    bool x_independent() const { return base_->x_independent(); }
    int dim() const { return base_->dim(); }
    double lambda() const { return base_->lambda(); }
    int sign() const { return sign_; }
    const SymMatrix& offset() const { return offset_; }
    double shift_value() const { return shift_; }

    /// Same transform chain over a different base.
    OperatorField rebased(std::shared_ptr<const TileSource> base) const;

private:
    std::shared_ptr<const TileSource> base_;
    int sign_ = 1;
    SymMatrix offset_;
    double shift_ = 0.0;
};

struct EllipticityReport {
    double max_violation = 0.0;
    std::size_t samples = 0;
};

/// Samples (A, B, x) and measures the worst violation of
/// P^-(A-B) <= F(A,x) - F(B,x) <= P^+(A-B). Random pairs are complemented by
/// rank-one differences along eigendirections of every linear piece.
EllipticityReport ellipticity_report(const OperatorField& field, std::size_t n_samples, std::uint64_t seed);

/// Same check for a single x-independent operator.
EllipticityReport ellipticity_report(const LocalOperator& op, std::size_t n_samples, std::uint64_t seed);

}  // namespace homoglab
