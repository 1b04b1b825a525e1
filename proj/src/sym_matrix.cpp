#include "homoglab/sym_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "homoglab/error.hpp"

namespace homoglab {

namespace {

constexpr double kJacobiTol = 1e-12;
constexpr int kJacobiMaxSweeps = 100;

std::vector<double> full(const SymMatrix& a) {
    const int d = a.dim();
    std::vector<double> m(static_cast<std::size_t>(d * d));
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) m[i * d + j] = a(i, j);
    }
    return m;
}

EigenDecomposition eigen2(const SymMatrix& a) {
    const double p = a(0, 0), q = a(0, 1), r = a(1, 1);
    const double mean = 0.5 * (p + r);
    const double radius = std::hypot(0.5 * (p - r), q);
    const double theta = 0.5 * std::atan2(2.0 * q, p - r);
    const double c = std::cos(theta), s = std::sin(theta);
    EigenDecomposition e;
    e.dim = 2;
    e.values = {mean - radius, mean + radius};
    // Column 1 is (c, s) for the larger eigenvalue; column 0 is orthogonal.
    e.vectors = {-s, c, c, s};
    return e;
}

EigenDecomposition jacobi(const SymMatrix& a) {
    const int d = a.dim();
    std::vector<double> m = full(a);
    std::vector<double> v(static_cast<std::size_t>(d * d), 0.0);
    for (int i = 0; i < d; ++i) v[i * d + i] = 1.0;

    double frob = 0.0;
    for (double x : m) frob += x * x;
    const double scale = std::max(1.0, std::sqrt(frob));
    for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j) off = std::max(off, std::abs(m[i * d + j]));
        if (off <= kJacobiTol * scale) break;
        for (int p = 0; p < d; ++p) {
            for (int q = p + 1; q < d; ++q) {
                const double apq = m[p * d + q];
                if (apq == 0.0) continue;
                const double tau = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
                const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (int k = 0; k < d; ++k) {
                    const double mkp = m[k * d + p], mkq = m[k * d + q];
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + q] = s * mkp + c * mkq;
                }
                for (int k = 0; k < d; ++k) {
                    const double mpk = m[p * d + k], mqk = m[q * d + k];
                    m[p * d + k] = c * mpk - s * mqk;
                    m[q * d + k] = s * mpk + c * mqk;
                }
                for (int k = 0; k < d; ++k) {
                    const double vkp = v[k * d + p], vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<int> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) { return m[x * d + x] < m[y * d + y]; });
    EigenDecomposition e;
    e.dim = d;
    e.values.resize(static_cast<std::size_t>(d));
    e.vectors.resize(static_cast<std::size_t>(d * d));
    for (int k = 0; k < d; ++k) {
        e.values[k] = m[order[k] * d + order[k]];
        for (int i = 0; i < d; ++i) e.vectors[i * d + k] = v[i * d + order[k]];
    }
    return e;
}

}  // namespace

SymMatrix::SymMatrix(int dim) : dim_(dim) {
    if (dim < 1) throw InvalidInput("SymMatrix: dimension must be positive");
    upper_.assign(static_cast<std::size_t>(dim * (dim + 1) / 2), 0.0);
}

std::size_t SymMatrix::index(int dim, int i, int j) {
    if (i > j) std::swap(i, j);
    // Offset of row i in the packed upper triangle.
    return static_cast<std::size_t>(i * dim - i * (i - 1) / 2 + (j - i));
}

SymMatrix SymMatrix::from_upper(int dim, std::initializer_list<double> upper) {
    return from_upper(dim, std::vector<double>(upper));
}

SymMatrix SymMatrix::from_upper(int dim, const std::vector<double>& upper) {
    SymMatrix m(dim);
    if (upper.size() != m.upper_.size())
        throw InvalidInput("SymMatrix: expected " + std::to_string(m.upper_.size()) +
                           " upper-triangle entries, got " + std::to_string(upper.size()));
    m.upper_ = upper;
    return m;
}

SymMatrix SymMatrix::identity(int dim, double scale) {
    SymMatrix m(dim);
    for (int i = 0; i < dim; ++i) m.set(i, i, scale);
    return m;
}

SymMatrix SymMatrix::diag(std::initializer_list<double> values) {
    SymMatrix m(static_cast<int>(values.size()));
    int i = 0;
    for (double v : values) m.set(i, i, v), ++i;
    return m;
}

double SymMatrix::operator()(int i, int j) const { return upper_[index(dim_, i, j)]; }

void SymMatrix::set(int i, int j, double value) { upper_[index(dim_, i, j)] = value; }

double SymMatrix::trace() const {
    double t = 0.0;
    for (int i = 0; i < dim_; ++i) t += (*this)(i, i);
    return t;
}

double SymMatrix::dot(const SymMatrix& other) const {
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) {
        s += (*this)(i, i) * other(i, i);
        for (int j = i + 1; j < dim_; ++j) s += 2.0 * (*this)(i, j) * other(i, j);
    }
    return s;
}

double SymMatrix::det() const {
    if (dim_ == 1) return upper_[0];
    if (dim_ == 2) return upper_[0] * upper_[2] - upper_[1] * upper_[1];
    const auto e = eigen(*this);
    double p = 1.0;
    for (double v : e.values) p *= v;
    return p;
}

double SymMatrix::norm() const {
    if (dim_ == 2) {
        const double mean = 0.5 * (upper_[0] + upper_[2]);
        const double radius = std::hypot(0.5 * (upper_[0] - upper_[2]), upper_[1]);
        return std::abs(mean) + radius;
    }
    if (dim_ == 1) return std::abs(upper_[0]);
    const auto e = eigen(*this);
    return std::max(std::abs(e.values.front()), std::abs(e.values.back()));
}

bool SymMatrix::is_finite() const {
    return std::all_of(upper_.begin(), upper_.end(), [](double v) { return std::isfinite(v); });
}

SymMatrix SymMatrix::operator+(const SymMatrix& o) const {
    SymMatrix r = *this;
    r += o;
    return r;
}

SymMatrix& SymMatrix::operator+=(const SymMatrix& o) {
    if (o.dim_ != dim_) throw InvalidInput("SymMatrix: dimension mismatch");
    for (std::size_t k = 0; k < upper_.size(); ++k) upper_[k] += o.upper_[k];
    return *this;
}

SymMatrix SymMatrix::operator-(const SymMatrix& o) const { return *this + (-o); }

SymMatrix SymMatrix::operator-() const { return *this * -1.0; }

SymMatrix SymMatrix::operator*(double s) const {
    SymMatrix r = *this;
    for (double& v : r.upper_) v *= s;
    return r;
}

std::string SymMatrix::to_string() const {
    std::ostringstream os;
    os.precision(17);
    os << '[';
    for (int i = 0; i < dim_; ++i) {
        if (i) os << "; ";
        for (int j = 0; j < dim_; ++j) os << (j ? " " : "") << (*this)(i, j);
    }
    os << ']';
    return os.str();
}

EigenDecomposition eigen(const SymMatrix& a) {
    if (!a.is_finite()) throw InvalidInput("eigen: non-finite matrix entries");
    if (a.dim() == 1) return EigenDecomposition{{a(0, 0)}, {1.0}, 1};
    if (a.dim() == 2) return eigen2(a);
    return jacobi(a);
}

SymMatrix EigenDecomposition::reconstruct(const std::vector<double>& new_values) const {
    SymMatrix r(dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = i; j < dim; ++j) {
            double s = 0.0;
            for (int k = 0; k < dim; ++k) s += vectors[i * dim + k] * new_values[k] * vectors[j * dim + k];
            r.set(i, j, s);
        }
    }
    return r;
}

std::vector<double> EigenDecomposition::vector(int k) const {
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) v[i] = vectors[i * dim + k];
    return v;
}

SignedParts signed_parts(const SymMatrix& a) {
    const auto e = eigen(a);
    std::vector<double> pos(e.values.size()), neg(e.values.size());
    for (std::size_t k = 0; k < e.values.size(); ++k) {
        pos[k] = std::max(e.values[k], 0.0);
        neg[k] = std::max(-e.values[k], 0.0);
    }
    return {e.reconstruct(pos), e.reconstruct(neg)};
}

SymMatrix inverse(const SymMatrix& a) {
    const auto e = eigen(a);
    std::vector<double> inv(e.values.size());
    for (std::size_t k = 0; k < e.values.size(); ++k) {
        if (e.values[k] <= 0.0) throw InvalidInput("inverse: matrix is not positive definite");
        inv[k] = 1.0 / e.values[k];
    }
    return e.reconstruct(inv);
}

SymMatrix expm(const SymMatrix& s) {
    const auto e = eigen(s);
    std::vector<double> ex(e.values.size());
    for (std::size_t k = 0; k < e.values.size(); ++k) ex[k] = std::exp(e.values[k]);
    return e.reconstruct(ex);
}

SymMatrix outer(const std::vector<double>& v) {
    SymMatrix r(static_cast<int>(v.size()));
    for (int i = 0; i < r.dim(); ++i)
        for (int j = i; j < r.dim(); ++j) r.set(i, j, v[i] * v[j]);
    return r;
}

}  // namespace homoglab
