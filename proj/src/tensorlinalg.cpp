#include "sur/tensorlinalg.hpp"

#include "sur/errors.hpp"

#include <cmath>

namespace sur {

std::optional<Eigen::LLT<Matrix>> checked_cholesky(const Matrix& a)
{
    if (a.rows() == 0 || a.rows() != a.cols() || !a.allFinite()) {
        return std::nullopt;
    }
    const double max_diag = a.diagonal().maxCoeff();
    if (!(max_diag > 0.0)) {
        return std::nullopt;
    }
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) {
        return std::nullopt;
    }
    const double floor = kPivotFloor * max_diag;
    const auto diag = llt.matrixLLT().diagonal();
    for (Index i = 0; i < diag.size(); ++i) {
        if (!(diag(i) * diag(i) > floor)) {
            return std::nullopt;
        }
    }
    return llt;
}

SpdMatrix::SpdMatrix(Matrix m)
{
    if (m.rows() < 1 || m.rows() != m.cols()) {
        throw Error(Errc::NotPositiveDefinite, "matrix is not square");
    }
    if (!m.allFinite()) {
        throw Error(Errc::NotPositiveDefinite, "matrix has non-finite entries");
    }
    const double scale = m.cwiseAbs().maxCoeff();
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > kSymmetryTol * scale) {
        throw Error(Errc::NotPositiveDefinite, "matrix is not symmetric");
    }
    m_ = 0.5 * (m + m.transpose());
    if (!checked_cholesky(m_)) {
        throw Error(Errc::NotPositiveDefinite, "Cholesky factorization failed");
    }
}

SpdMatrix SpdMatrix::identity(Index p) { return SpdMatrix(Matrix::Identity(p, p)); }

SpdMatrix scaled(const SpdMatrix& s, double c)
{
    if (!(c > 0.0)) {
        throw Error(Errc::NotPositiveDefinite, "scale factor must be positive");
    }
    return SpdMatrix(c * s.matrix());
}

StackedMatrix::StackedMatrix(Index responses, Index subjects, Matrix m)
    : p_(responses), n_(subjects), m_(std::move(m))
{
    if (p_ < 1 || n_ < 1 || m_.rows() != p_ * n_ || m_.cols() != p_ * n_) {
        throw Error(Errc::InvalidInput, "stacked matrix must be Np x Np");
    }
}

Vector vec(const Matrix& m)
{
    // Eigen's default storage is column-major, which is exactly vec's layout.
    return Eigen::Map<const Vector>(m.data(), m.size());
}

Matrix unvec(const Vector& v, Index rows, Index cols)
{
    if (v.size() != rows * cols) {
        throw Error(Errc::InvalidInput, "vector length does not match rows * cols");
    }
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

StackedMatrix kron_with_identity(const Matrix& a, Index subjects)
{
    const Index p = a.rows();
    if (a.cols() != p) {
        throw Error(Errc::InvalidInput, "kron_with_identity needs a square matrix");
    }
    Matrix out = Matrix::Zero(p * subjects, p * subjects);
    for (Index i = 0; i < p; ++i) {
        for (Index j = 0; j < p; ++j) {
            out.block(i * subjects, j * subjects, subjects, subjects).diagonal().setConstant(a(i, j));
        }
    }
    return {p, subjects, std::move(out)};
}

Matrix partial_trace_subjects(const StackedMatrix& a)
{
    const Index p = a.responses();
    const Index n = a.subjects();
    Matrix out(p, p);
    for (Index i = 0; i < p; ++i) {
        for (Index j = 0; j < p; ++j) {
            out(i, j) = a.matrix().block(i * n, j * n, n, n).trace();
        }
    }
    return out;
}

Matrix partial_trace_responses(const StackedMatrix& a)
{
    const Index p = a.responses();
    const Index n = a.subjects();
    Matrix out = Matrix::Zero(n, n);
    for (Index i = 0; i < p; ++i) {
        out += a.matrix().block(i * n, i * n, n, n);
    }
    return out;
}

StackedMatrix partial_transpose_subjects(const StackedMatrix& a)
{
    const Index p = a.responses();
    const Index n = a.subjects();
    Matrix out(p * n, p * n);
    for (Index i = 0; i < p; ++i) {
        for (Index j = 0; j < p; ++j) {
            out.block(i * n, j * n, n, n) = a.matrix().block(i * n, j * n, n, n).transpose();
        }
    }
    return {p, n, std::move(out)};
}

LogdetInverse chol_logdet_inverse(const SpdMatrix& s)
{
    auto llt = checked_cholesky(s.matrix());
    if (!llt) {
        throw Error(Errc::NotPositiveDefinite, "Cholesky factorization failed");
    }
    const double ld = 2.0 * llt->matrixLLT().diagonal().array().log().sum();
    Matrix inv = llt->solve(Matrix::Identity(s.dim(), s.dim()));
    return {ld, SpdMatrix(0.5 * (inv + inv.transpose()))};
}

double logdet(const SpdMatrix& s)
{
    auto llt = checked_cholesky(s.matrix());
    if (!llt) {
        throw Error(Errc::NotPositiveDefinite, "Cholesky factorization failed");
    }
    return 2.0 * llt->matrixLLT().diagonal().array().log().sum();
}

namespace {

Matrix spd_power(const SpdMatrix& s, double power)
{
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s.matrix());
    const Vector scaled = eig.eigenvalues().array().pow(power);
    return eig.eigenvectors() * scaled.asDiagonal() * eig.eigenvectors().transpose();
}

} // namespace

Matrix spd_sqrt(const SpdMatrix& s) { return spd_power(s, 0.5); }

Matrix spd_inverse_sqrt(const SpdMatrix& s) { return spd_power(s, -0.5); }

} // namespace sur
