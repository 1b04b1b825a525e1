#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace homoglab {

/// Real symmetric d x d matrix, stored as its upper triangle (row-major).
class SymMatrix {
public:
    SymMatrix() : SymMatrix(2) {}
    explicit SymMatrix(int dim);

    /// Build from upper-triangle entries: a11, a12, ..., a1d, a22, ..., add.
    static SymMatrix from_upper(int dim, std::initializer_list<double> upper);
    static SymMatrix from_upper(int dim, const std::vector<double>& upper);
    static SymMatrix identity(int dim, double scale = 1.0);
    static SymMatrix diag(std::initializer_list<double> values);
    static SymMatrix zero(int dim) { return SymMatrix(dim); }

    int dim() const { return dim_; }
    double operator()(int i, int j) const;
    void set(int i, int j, double value);
    const std::vector<double>& upper() const { return upper_; }

    double trace() const;
    /// Frobenius inner product tr(this * other).
    double dot(const SymMatrix& other) const;
    double det() const;
    /// Largest absolute eigenvalue, |A| in operator norm.
    double norm() const;
    bool is_finite() const;

    SymMatrix operator+(const SymMatrix& o) const;
    SymMatrix operator-(const SymMatrix& o) const;
    SymMatrix operator-() const;
    SymMatrix operator*(double s) const;
    SymMatrix& operator+=(const SymMatrix& o);
    bool operator==(const SymMatrix& o) const = default;

    std::string to_string() const;

private:
    static std::size_t index(int dim, int i, int j);
    int dim_;
    std::vector<double> upper_;
};

inline SymMatrix operator*(double s, const SymMatrix& a) { return a * s; }

/// Eigen-decomposition A = V diag(values) V^T, values ascending, vectors as
/// columns of `vectors` (row-major d x d).
struct EigenDecomposition {
    std::vector<double> values;
    std::vector<double> vectors;
    int dim = 0;

    SymMatrix reconstruct(const std::vector<double>& new_values) const;
    std::vector<double> vector(int k) const;
};

/// Closed form in d = 2; cyclic Jacobi with off-diagonal tolerance 1e-12 otherwise.
EigenDecomposition eigen(const SymMatrix& a);

/// A = A_+ - A_-, A_+ A_- = 0, both positive semidefinite.
struct SignedParts {
    SymMatrix plus;
    SymMatrix minus;
};
SignedParts signed_parts(const SymMatrix& a);

/// Inverse of a positive definite matrix (via its eigen-decomposition).
SymMatrix inverse(const SymMatrix& a);

/// exp(S) for symmetric S.
SymMatrix expm(const SymMatrix& s);

/// v v^T.
SymMatrix outer(const std::vector<double>& v);

}  // namespace homoglab
