#include "homoglab/operators.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "homoglab/error.hpp"
#include "homoglab/rng.hpp"

namespace homoglab {

namespace {

// Relative rounding allowance when comparing operator differences with Pucci bounds.
constexpr double kRoundoff = 1e-12;

double eval_linear(const LinearOp& op, const SymMatrix& a) { return -op.a.dot(a) + op.c; }

class ConstantTiles final : public TileSource {
public:
    explicit ConstantTiles(LocalOperator op) : op_(std::move(op)) {}
    const LocalOperator& at(std::span<const double>) const override { return op_; }
    bool x_independent() const override { return true; }
    int dim() const override { return op_.dim(); }
    double lambda() const override { return op_.lambda(); }
    void bounds(std::vector<double>& lo, std::vector<double>& hi) const override {
        lo.assign(static_cast<std::size_t>(op_.dim()), -1.0);
        hi.assign(static_cast<std::size_t>(op_.dim()), 1.0);
    }

private:
    LocalOperator op_;
};

SymMatrix random_sym(int d, std::mt19937_64& gen, double scale) {
    std::normal_distribution<double> normal(0.0, scale);
    SymMatrix m(d);
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) m.set(i, j, normal(gen));
    return m;
}

double violation(double diff, const SymMatrix& delta, double lambda) {
    const double lo = pucci(PucciSign::Minus, delta, lambda);
    const double hi = pucci(PucciSign::Plus, delta, lambda);
    const double allowance = kRoundoff * (1.0 + std::abs(diff) + std::abs(lo) + std::abs(hi));
    const double raw = std::max({lo - diff, diff - hi, 0.0});
    return raw > allowance ? raw : 0.0;
}

template <typename Eval>
EllipticityReport sample_ellipticity(int d, double lambda, std::size_t n_samples, std::uint64_t seed,
                                     const Eval& f_at, const std::vector<LinearOp>& pieces) {
    std::mt19937_64 gen(mix64(seed));
    EllipticityReport report;
    auto check = [&](const SymMatrix& a, const SymMatrix& b) {
        const double diff = f_at(a) - f_at(b);
        report.max_violation = std::max(report.max_violation, violation(diff, a - b, lambda));
        ++report.samples;
    };
    for (std::size_t k = 0; k < n_samples; ++k) {
        const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-2.0, 2.0)(gen));
        const SymMatrix b = random_sym(d, gen, scale);
        check(random_sym(d, gen, scale), b);
        for (const auto& piece : pieces) {
            const auto e = eigen(piece.a);
            for (int j = 0; j < d; ++j) {
                const SymMatrix r = outer(e.vector(j)) * scale;
                check(b + r, b);
                check(b - r, b);
            }
        }
    }
    return report;
}

}  // namespace

double pucci(PucciSign sign, const SymMatrix& a, double lambda) {
    if (!a.is_finite() || !std::isfinite(lambda)) throw InvalidInput("pucci: non-finite input");
    if (!(lambda > 1.0)) throw InvalidInput("pucci: ellipticity must exceed 1");
    const auto e = eigen(a);
    double tr_plus = 0.0, tr_minus = 0.0;
    for (double v : e.values) (v > 0 ? tr_plus : tr_minus) += std::abs(v);
    return sign == PucciSign::Plus ? -tr_plus + lambda * tr_minus : -lambda * tr_plus + tr_minus;
}

LocalOperator::LocalOperator(Kind kind, double lambda, int dim) : kind_(std::move(kind)), lambda_(lambda), dim_(dim) {
    if (!(lambda > 1.0) || !std::isfinite(lambda)) throw InvalidInput("LocalOperator: ellipticity must exceed 1");
}

LocalOperator LocalOperator::linear(SymMatrix a, double c, double lambda) {
    if (!a.is_finite() || !std::isfinite(c)) throw InvalidInput("LocalOperator: non-finite coefficients");
    const int d = a.dim();
    return LocalOperator(LinearOp{std::move(a), c}, lambda, d);
}

LocalOperator LocalOperator::bellman(std::vector<LinearOp> children, BellmanMode mode, double lambda) {
    if (children.empty()) throw InvalidInput("LocalOperator: Bellman operator needs at least one child");
    const int d = children.front().a.dim();
    for (const auto& ch : children) {
        if (ch.a.dim() != d) throw InvalidInput("LocalOperator: Bellman children differ in dimension");
        if (!ch.a.is_finite() || !std::isfinite(ch.c)) throw InvalidInput("LocalOperator: non-finite coefficients");
    }
    return LocalOperator(BellmanOp{std::move(children), mode}, lambda, d);
}

LocalOperator LocalOperator::pucci_shift(PucciSign sign, double lambda, double c, int dim) {
    if (!std::isfinite(c)) throw InvalidInput("LocalOperator: non-finite constant");
    return LocalOperator(PucciShiftOp{sign, c}, lambda, dim);
}

double LocalOperator::operator()(const SymMatrix& a) const {
    if (!a.is_finite()) throw InvalidInput("LocalOperator: non-finite argument");
    return std::visit(
        [&](const auto& k) -> double {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, LinearOp>) {
                return eval_linear(k, a);
            } else if constexpr (std::is_same_v<T, BellmanOp>) {
                double best = eval_linear(k.children.front(), a);
                for (std::size_t i = 1; i < k.children.size(); ++i) {
                    const double v = eval_linear(k.children[i], a);
                    best = k.mode == BellmanMode::Min ? std::min(best, v) : std::max(best, v);
                }
                return best;
            } else {
                return pucci(k.sign, a, lambda_) + k.c;
            }
        },
        kind_);
}

double LocalOperator::at_zero() const { return (*this)(SymMatrix::zero(dim_)); }

std::vector<LinearOp> LocalOperator::linear_pieces() const {
    if (const auto* lin = std::get_if<LinearOp>(&kind_)) return {*lin};
    if (const auto* bel = std::get_if<BellmanOp>(&kind_)) return bel->children;
    return {};
}

std::string LocalOperator::describe() const {
    std::ostringstream os;
    os.precision(17);
    std::visit(
        [&](const auto& k) {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, LinearOp>) {
                os << "linear(a=" << k.a.to_string() << ", c=" << k.c << ")";
            } else if constexpr (std::is_same_v<T, BellmanOp>) {
                os << "bellman-" << (k.mode == BellmanMode::Min ? "min" : "max") << "{";
                for (std::size_t i = 0; i < k.children.size(); ++i)
                    os << (i ? ", " : "") << "linear(a=" << k.children[i].a.to_string() << ", c=" << k.children[i].c
                       << ")";
                os << "}";
            } else {
                os << "pucci" << (k.sign == PucciSign::Plus ? "+" : "-") << "(c=" << k.c << ")";
            }
        },
        kind_);
    os << " lambda=" << lambda_;
    return os.str();
}

double ControlSet::operator()(const SymMatrix& b) const {
    double best = eval_linear(controls.front(), b);
    for (std::size_t i = 1; i < controls.size(); ++i) {
        const double v = eval_linear(controls[i], b);
        best = mode == BellmanMode::Min ? std::min(best, v) : std::max(best, v);
    }
    return best;
}

OperatorField::OperatorField(std::shared_ptr<const TileSource> base)
    : base_(std::move(base)), offset_(SymMatrix::zero(base_ ? base_->dim() : 2)) {
    if (!base_) throw InvalidInput("OperatorField: null tile source");
}

OperatorField OperatorField::constant(LocalOperator op) {
    return OperatorField(std::make_shared<ConstantTiles>(std::move(op)));
}

double OperatorField::eval(const SymMatrix& a, std::span<const double> x) const {
    const LocalOperator& op = base_->at(x);
    const SymMatrix arg = sign_ == 1 ? a + offset_ : offset_ - a;
    return sign_ * op(arg) + shift_;
}

OperatorField OperatorField::star() const {
    OperatorField f = *this;
    f.sign_ = -sign_;
    f.shift_ = -shift_;
    return f;
}

OperatorField OperatorField::translate(const SymMatrix& a0) const {
    OperatorField f = *this;
    f.offset_ = sign_ == 1 ? offset_ + a0 : offset_ - a0;
    return f;
}

OperatorField OperatorField::shift(double s) const {
    OperatorField f = *this;
    f.shift_ = shift_ + s;
    return f;
}

OperatorField OperatorField::rebased(std::shared_ptr<const TileSource> base) const {
    OperatorField f = *this;
    if (!base) throw InvalidInput("OperatorField: null tile source");
    f.base_ = std::move(base);
    return f;
}

ControlSet OperatorField::controls_at(std::span<const double> x) const {
    const LocalOperator& op = base_->at(x);
    const auto pieces = op.linear_pieces();
    if (pieces.empty())
        throw StencilError("operator " + op.describe() + " has no finite-control monotone discretization");
    ControlSet cs;
    BellmanMode mode = BellmanMode::Min;
    if (const auto* bel = std::get_if<BellmanOp>(&op.kind())) mode = bel->mode;
    if (sign_ == -1) mode = mode == BellmanMode::Min ? BellmanMode::Max : BellmanMode::Min;
    cs.mode = mode;
    cs.controls.reserve(pieces.size());
    for (const auto& p : pieces) cs.controls.push_back({p.a, sign_ * (p.c - p.a.dot(offset_)) + shift_});
    return cs;
}

std::function<double(const SymMatrix&)> OperatorField::frozen_at(std::span<const double> x) const {
    const LocalOperator op = base_->at(x);
    return [op, sign = sign_, offset = offset_, shift = shift_](const SymMatrix& a) {
        const SymMatrix arg = sign == 1 ? a + offset : offset - a;
        return sign * op(arg) + shift;
    };
}

EllipticityReport ellipticity_report(const OperatorField& field, std::size_t n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw InvalidInput("ellipticity_report: n_samples must be at least 1");
    std::vector<double> lo, hi;
    field.base().bounds(lo, hi);
    std::mt19937_64 gen(mix64(seed ^ 0x0e11ULL));
    EllipticityReport total;
    for (std::size_t k = 0; k < n_samples; ++k) {
        std::vector<double> x(lo.size());
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::uniform_real_distribution<double>(lo[i], hi[i])(gen);
        const auto pieces = field.base().at(x).linear_pieces();
        const auto f = [&](const SymMatrix& a) { return field.eval(a, x); };
        const auto r = sample_ellipticity(field.dim(), field.lambda(), 1, gen(), f, pieces);
        total.max_violation = std::max(total.max_violation, r.max_violation);
        total.samples += r.samples;
    }
    return total;
}

EllipticityReport ellipticity_report(const LocalOperator& op, std::size_t n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw InvalidInput("ellipticity_report: n_samples must be at least 1");
    return sample_ellipticity(op.dim(), op.lambda(), n_samples, seed, op, op.linear_pieces());
}

}  // namespace homoglab
