#pragma once

// Dense linear algebra for the SUR library plus the operators acting on
// (response x subject) stacked matrices.
//
// Stacked index convention: the row/column of response i (0-based) and
// subject n (0-based) in an Np x Np matrix is i * N + n. Every consumer of
// StackedMatrix relies on this layout.

#include <Eigen/Dense>

#include <optional>

namespace sur {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Relative pivot floor used when deciding positive definiteness.
inline constexpr double kPivotFloor = 1e-12;

/// Relative tolerance on |a_ij - a_ji| accepted as symmetric.
inline constexpr double kSymmetryTol = 1e-12;

/// Cholesky factorization that fails when any squared pivot falls below
/// kPivotFloor times the largest diagonal entry.
std::optional<Eigen::LLT<Matrix>> checked_cholesky(const Matrix& a);

/// Symmetric positive definite matrix. Construction validates symmetry and
/// runs the checked Cholesky; the stored entries are exactly symmetric.
class SpdMatrix {
public:
    /// Throws Error{NotPositiveDefinite} on failure.
    explicit SpdMatrix(Matrix m);

    static SpdMatrix identity(Index p);

    Index dim() const noexcept { return m_.rows(); }
    const Matrix& matrix() const noexcept { return m_; }
    double operator()(Index i, Index j) const { return m_(i, j); }

    friend bool operator==(const SpdMatrix& a, const SpdMatrix& b) { return a.m_ == b.m_; }

private:
    Matrix m_;
};

/// c * s for c > 0.
SpdMatrix scaled(const SpdMatrix& s, double c);

/// Np x Np matrix indexed by (response, subject) pairs.
class StackedMatrix {
public:
    StackedMatrix(Index responses, Index subjects, Matrix m);

    Index responses() const noexcept { return p_; }
    Index subjects() const noexcept { return n_; }
    const Matrix& matrix() const noexcept { return m_; }

    Index index(Index response, Index subject) const noexcept { return response * n_ + subject; }
    double operator()(Index i, Index n, Index j, Index m) const { return m_(index(i, n), index(j, m)); }

    StackedMatrix transpose() const { return {p_, n_, m_.transpose()}; }

private:
    Index p_;
    Index n_;
    Matrix m_;
};

/// Column-wise stacking: result[i * N + n] = m(n, i).
Vector vec(const Matrix& m);

/// Inverse of vec for an N x p matrix.
Matrix unvec(const Vector& v, Index rows, Index cols);

/// a (p x p) Kronecker the N x N identity.
StackedMatrix kron_with_identity(const Matrix& a, Index subjects);

/// (Tr_S a)_{ij} = sum_n a_{(i,n),(j,n)}; a p x p matrix.
Matrix partial_trace_subjects(const StackedMatrix& a);

/// (Tr_R a)_{nm} = sum_i a_{(i,n),(i,m)}; an N x N matrix.
Matrix partial_trace_responses(const StackedMatrix& a);

/// (a^{T_S})_{(i,n),(j,m)} = a_{(i,m),(j,n)}.
StackedMatrix partial_transpose_subjects(const StackedMatrix& a);

struct LogdetInverse {
    double logdet;
    SpdMatrix inverse;
};

/// ln Det s and s^{-1} from one Cholesky factorization.
LogdetInverse chol_logdet_inverse(const SpdMatrix& s);

/// ln Det s only.
double logdet(const SpdMatrix& s);

/// Symmetric square root s^{1/2} and inverse square root s^{-1/2}, via the
/// eigendecomposition.
Matrix spd_sqrt(const SpdMatrix& s);
Matrix spd_inverse_sqrt(const SpdMatrix& s);

} // namespace sur
