#pragma once

// Seemingly unrelated regressions: Y = Z B + U with rows of U ~ N_p(0, Sigma)
// and column j of B free only on the covariate set J_j.

#include "sur/random.hpp"
#include "sur/tensorlinalg.hpp"

#include <vector>

namespace sur {

/// Per-response covariate index sets. Indices are 0-based here; files and the
/// CLI use 1-based indices (see from_one_based / one_based).
class ModelSpec {
public:
    /// Sorts each set; throws InvalidInput for an empty spec, an empty set,
    /// a negative index or a duplicate index.
    explicit ModelSpec(std::vector<std::vector<Index>> index_sets);

    static ModelSpec from_one_based(const std::vector<std::vector<Index>>& index_sets);

    Index responses() const noexcept { return static_cast<Index>(sets_.size()); }
    const std::vector<Index>& set(Index response) const { return sets_.at(static_cast<std::size_t>(response)); }
    const std::vector<std::vector<Index>>& index_sets() const noexcept { return sets_; }
    std::vector<std::vector<Index>> one_based() const;

    /// K, the number of free regression coefficients.
    Index free_coefficients() const noexcept { return k_; }
    Index max_set_size() const noexcept;
    /// Offset of response i's block in the stacked coefficient vector.
    Index offset(Index response) const { return offsets_.at(static_cast<std::size_t>(response)); }
    bool shares_one_set() const noexcept;

    /// Throws IndexOutOfRange if any index is >= covariates.
    void check_covariates(Index covariates) const;

    friend bool operator==(const ModelSpec& a, const ModelSpec& b) { return a.sets_ == b.sets_; }

private:
    std::vector<std::vector<Index>> sets_;
    std::vector<Index> offsets_;
    Index k_ = 0;
};

/// Responses Y (N x p) and covariates Z (N x M), with the cross products the
/// fitter reuses on every iteration.
class Dataset {
public:
    /// Throws InvalidInput on mismatched rows, non-finite entries or a Z^T Z
    /// that is not positive definite.
    Dataset(Matrix y, Matrix z);

    Index subjects() const noexcept { return y_.rows(); }
    Index responses() const noexcept { return y_.cols(); }
    Index covariates() const noexcept { return z_.cols(); }
    const Matrix& y() const noexcept { return y_; }
    const Matrix& z() const noexcept { return z_; }
    const Matrix& ztz() const noexcept { return ztz_; }
    const Matrix& zty() const noexcept { return zty_; }

private:
    Matrix y_;
    Matrix z_;
    Matrix ztz_;
    Matrix zty_;
};

struct FitResult {
    Matrix b_hat;
    SpdMatrix sigma_hat;
    double loglik = 0.0;
    int cm_iterations = 0;
    int restarts_used = 0;
    int jumps = 0;
    /// Restarts whose CM run raised a numerical error or did not converge.
    int failed_restarts = 0;
    bool converged = false;
    /// loglik after each CM sweep; filled only when requested.
    std::vector<double> loglik_trace;
};

struct CmOptions {
    double delta = 1e-7;
    int max_iter = 10000;
    bool record_trace = false;
};

struct RestartPolicy {
    /// Stop after this many consecutive restarts that leave the incumbent unchanged.
    int stable_restarts = 10;
    /// A replacement also needs |Det new - Det incumbent| > jump_factor * delta * Det incumbent.
    double jump_factor = 10.0;
    /// Hard cap on random restarts.
    int max_restarts = 1000;
};

struct GlsResult {
    Vector coefficients; ///< length K, stacked response by response
    Matrix b;            ///< M x p, zero outside the free entries
};

/// Np x K block-diagonal design; block i holds the columns of Z in J_i.
Matrix build_stacked_design(const ModelSpec& spec, const Matrix& z);

/// Scatter a stacked coefficient vector into an M x p matrix.
Matrix embed_coefficients(const ModelSpec& spec, const Vector& coefficients, Index covariates);

/// -1/2 [Np ln 2pi + N ln Det sigma + Tr (Y - ZB)^T (Y - ZB) sigma^{-1}]
double log_likelihood(const Dataset& data, const Matrix& b, const SpdMatrix& sigma);

/// Generalized least squares for fixed sigma. Assembles the K x K normal
/// equations from blocks of Z^T Z weighted by sigma^{-1}; the Np x Np weight
/// matrix is never formed.
GlsResult gls_step(const Dataset& data, const ModelSpec& spec, const SpdMatrix& sigma);

/// Same estimator through the explicit stacked design and sigma^{-1} (x) I_N.
/// Reference path for tests.
GlsResult gls_step_dense(const Dataset& data, const ModelSpec& spec, const SpdMatrix& sigma);

/// N^{-1} (Y - ZB)^T (Y - ZB). Throws DegenerateResiduals when the result is
/// not positive definite or a residual column is negligible next to its
/// response.
SpdMatrix residual_covariance(const Dataset& data, const Matrix& b);

/// Per-equation least squares on each J_j.
Matrix ols_fit(const Dataset& data, const ModelSpec& spec);

/// Throws InsufficientSamples unless N >= p + max |J_j| + 1, and
/// IndexOutOfRange / InvalidInput when the spec does not fit the data.
void check_fit_preconditions(const Dataset& data, const ModelSpec& spec);

/// Alternates gls_step and residual_covariance from sigma_init until
/// |Det S_{n+1} - Det S_n| <= delta Det S_n or max_iter sweeps.
FitResult cm_fit(const Dataset& data, const ModelSpec& spec, const SpdMatrix& sigma_init,
                 const CmOptions& options = {});

/// cm_fit from the identity, then random restarts from W / p with
/// W ~ Wishart_p(I, p). A restart replaces the incumbent only when it raises
/// the log-likelihood and moves Det Sigma by more than jump_factor * delta.
FitResult ml_fit_multistart(const Dataset& data, const ModelSpec& spec, Rng& rng,
                            const CmOptions& options = {}, const RestartPolicy& policy = {});

} // namespace sur
