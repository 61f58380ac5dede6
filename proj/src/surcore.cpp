#include "sur/surcore.hpp"

#include "sur/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>

namespace sur {

namespace {

// A residual column whose mean square is below this fraction of its
// response's mean square counts as an exact fit.
constexpr double kResidualFloor = 1e-20;

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Matrix columns_of(const Matrix& z, const std::vector<Index>& cols)
{
    Matrix out(z.rows(), static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
        out.col(static_cast<Index>(c)) = z.col(cols[c]);
    }
    return out;
}

Vector solve_normal_equations(const Matrix& a, const Vector& rhs)
{
    auto llt = checked_cholesky(a);
    if (!llt) {
        throw Error(Errc::SingularNormalEquations, "normal equations are numerically singular");
    }
    return llt->solve(rhs);
}

} // namespace

// ModelSpec ------------------------------------------------------------------

ModelSpec::ModelSpec(std::vector<std::vector<Index>> index_sets) : sets_(std::move(index_sets))
{
    if (sets_.empty()) {
        throw Error(Errc::InvalidInput, "model spec needs at least one response");
    }
    offsets_.reserve(sets_.size());
    for (std::size_t j = 0; j < sets_.size(); ++j) {
        auto& set = sets_[j];
        if (set.empty()) {
            throw Error(Errc::InvalidInput,
                        "index set of response " + std::to_string(j + 1) + " is empty; every J_j must be nonempty");
        }
        std::sort(set.begin(), set.end());
        if (set.front() < 0) {
            throw Error(Errc::IndexOutOfRange, "negative covariate index in response " + std::to_string(j + 1));
        }
        if (std::adjacent_find(set.begin(), set.end()) != set.end()) {
            throw Error(Errc::InvalidInput, "duplicate covariate index in response " + std::to_string(j + 1));
        }
        offsets_.push_back(k_);
        k_ += static_cast<Index>(set.size());
    }
}

ModelSpec ModelSpec::from_one_based(const std::vector<std::vector<Index>>& index_sets)
{
    auto sets = index_sets;
    for (std::size_t j = 0; j < sets.size(); ++j) {
        for (auto& idx : sets[j]) {
            if (idx < 1) {
                throw Error(Errc::IndexOutOfRange,
                            "covariate indices are 1-based; got " + std::to_string(idx) + " in response " +
                                std::to_string(j + 1));
            }
            --idx;
        }
    }
    return ModelSpec(std::move(sets));
}

std::vector<std::vector<Index>> ModelSpec::one_based() const
{
    auto sets = sets_;
    for (auto& set : sets) {
        for (auto& idx : set) {
            ++idx;
        }
    }
    return sets;
}

Index ModelSpec::max_set_size() const noexcept
{
    std::size_t best = 0;
    for (const auto& set : sets_) {
        best = std::max(best, set.size());
    }
    return static_cast<Index>(best);
}

bool ModelSpec::shares_one_set() const noexcept
{
    return std::all_of(sets_.begin(), sets_.end(), [&](const auto& s) { return s == sets_.front(); });
}

void ModelSpec::check_covariates(Index covariates) const
{
    for (std::size_t j = 0; j < sets_.size(); ++j) {
        if (sets_[j].back() >= covariates) {
            throw Error(Errc::IndexOutOfRange, "response " + std::to_string(j + 1) + " references covariate " +
                                                   std::to_string(sets_[j].back() + 1) + " but Z has only " +
                                                   std::to_string(covariates) + " columns");
        }
    }
}

// Dataset --------------------------------------------------------------------

Dataset::Dataset(Matrix y, Matrix z) : y_(std::move(y)), z_(std::move(z))
{
    if (y_.rows() < 1 || y_.cols() < 1 || z_.cols() < 1) {
        throw Error(Errc::InvalidInput, "Y and Z must be non-empty");
    }
    if (y_.rows() != z_.rows()) {
        throw Error(Errc::InvalidInput, "Y has " + std::to_string(y_.rows()) + " rows but Z has " +
                                            std::to_string(z_.rows()));
    }
    if (!y_.allFinite() || !z_.allFinite()) {
        throw Error(Errc::InvalidInput, "Y and Z must have finite entries");
    }
    ztz_ = z_.transpose() * z_;
    zty_ = z_.transpose() * y_;
    if (!checked_cholesky(ztz_)) {
        throw Error(Errc::InvalidInput, "Z^T Z is not positive definite");
    }
}

// Fitting --------------------------------------------------------------------

Matrix build_stacked_design(const ModelSpec& spec, const Matrix& z)
{
    spec.check_covariates(z.cols());
    const Index n = z.rows();
    Matrix x = Matrix::Zero(n * spec.responses(), spec.free_coefficients());
    for (Index i = 0; i < spec.responses(); ++i) {
        const auto& set = spec.set(i);
        for (std::size_t c = 0; c < set.size(); ++c) {
            x.block(i * n, spec.offset(i) + static_cast<Index>(c), n, 1) = z.col(set[c]);
        }
    }
    return x;
}

Matrix embed_coefficients(const ModelSpec& spec, const Vector& coefficients, Index covariates)
{
    Matrix b = Matrix::Zero(covariates, spec.responses());
    for (Index j = 0; j < spec.responses(); ++j) {
        const auto& set = spec.set(j);
        for (std::size_t c = 0; c < set.size(); ++c) {
            b(set[c], j) = coefficients(spec.offset(j) + static_cast<Index>(c));
        }
    }
    return b;
}

double log_likelihood(const Dataset& data, const Matrix& b, const SpdMatrix& sigma)
{
    const Index n = data.subjects();
    const Index p = data.responses();
    if (sigma.dim() != p || b.rows() != data.covariates() || b.cols() != p) {
        throw Error(Errc::InvalidInput, "log_likelihood: dimension mismatch");
    }
    const auto [ld, inv] = chol_logdet_inverse(sigma);
    const Matrix resid = data.y() - data.z() * b;
    const double quad = (resid.transpose() * resid).cwiseProduct(inv.matrix()).sum();
    return -0.5 * (static_cast<double>(n * p) * kLog2Pi + static_cast<double>(n) * ld + quad);
}

GlsResult gls_step(const Dataset& data, const ModelSpec& spec, const SpdMatrix& sigma)
{
    const Index p = spec.responses();
    if (sigma.dim() != p || data.responses() != p) {
        throw Error(Errc::InvalidInput, "gls_step: sigma, spec and Y disagree on p");
    }
    spec.check_covariates(data.covariates());
    const Matrix w = chol_logdet_inverse(sigma).inverse.matrix();
    const Index k = spec.free_coefficients();
    const Matrix& g = data.ztz();
    const Matrix& zy = data.zty();

    Matrix a(k, k);
    Vector rhs = Vector::Zero(k);
    for (Index i = 0; i < p; ++i) {
        const auto& si = spec.set(i);
        const Index oi = spec.offset(i);
        for (std::size_t r = 0; r < si.size(); ++r) {
            const Index row = oi + static_cast<Index>(r);
            for (Index j = 0; j < p; ++j) {
                const auto& sj = spec.set(j);
                const Index oj = spec.offset(j);
                for (std::size_t c = 0; c < sj.size(); ++c) {
                    a(row, oj + static_cast<Index>(c)) = w(i, j) * g(si[r], sj[c]);
                }
                rhs(row) += w(i, j) * zy(si[r], j);
            }
        }
    }
    Vector beta = solve_normal_equations(a, rhs);
    Matrix b = embed_coefficients(spec, beta, data.covariates());
    return {std::move(beta), std::move(b)};
}

GlsResult gls_step_dense(const Dataset& data, const ModelSpec& spec, const SpdMatrix& sigma)
{
    const Matrix x = build_stacked_design(spec, data.z());
    const StackedMatrix weight = kron_with_identity(chol_logdet_inverse(sigma).inverse.matrix(), data.subjects());
    const Matrix xtw = x.transpose() * weight.matrix();
    Vector beta = solve_normal_equations(xtw * x, xtw * vec(data.y()));
    Matrix b = embed_coefficients(spec, beta, data.covariates());
    return {std::move(beta), std::move(b)};
}

SpdMatrix residual_covariance(const Dataset& data, const Matrix& b)
{
    const Matrix resid = data.y() - data.z() * b;
    const double n = static_cast<double>(data.subjects());
    Matrix s = (resid.transpose() * resid) / n;
    s = 0.5 * (s + s.transpose());
    for (Index j = 0; j < s.rows(); ++j) {
        const double scale = data.y().col(j).squaredNorm() / n;
        if (!(s(j, j) > kResidualFloor * scale)) {
            throw Error(Errc::DegenerateResiduals,
                        "residuals of response " + std::to_string(j + 1) + " vanish (exact fit)");
        }
    }
    try {
        return SpdMatrix(std::move(s));
    } catch (const Error&) {
        throw Error(Errc::DegenerateResiduals, "residual covariance is not positive definite");
    }
}

Matrix ols_fit(const Dataset& data, const ModelSpec& spec)
{
    spec.check_covariates(data.covariates());
    if (spec.responses() != data.responses()) {
        throw Error(Errc::InvalidInput, "ols_fit: spec and Y disagree on p");
    }
    Matrix b = Matrix::Zero(data.covariates(), spec.responses());
    for (Index j = 0; j < spec.responses(); ++j) {
        const auto& set = spec.set(j);
        const Matrix zj = columns_of(data.z(), set);
        Eigen::ColPivHouseholderQR<Matrix> qr(zj);
        if (qr.rank() < zj.cols()) {
            throw Error(Errc::SingularNormalEquations, "covariates of response " + std::to_string(j + 1) +
                                                           " are collinear");
        }
        const Vector coef = qr.solve(data.y().col(j));
        for (std::size_t c = 0; c < set.size(); ++c) {
            b(set[c], j) = coef(static_cast<Index>(c));
        }
    }
    return b;
}

void check_fit_preconditions(const Dataset& data, const ModelSpec& spec)
{
    if (spec.responses() != data.responses()) {
        throw Error(Errc::InvalidInput, "spec has " + std::to_string(spec.responses()) + " index sets but Y has " +
                                            std::to_string(data.responses()) + " columns");
    }
    spec.check_covariates(data.covariates());
    const Index needed = spec.responses() + spec.max_set_size() + 1;
    if (data.subjects() < needed) {
        throw Error(Errc::InsufficientSamples, "N = " + std::to_string(data.subjects()) +
                                                   " but the model needs N >= p + max|J_j| + 1 = " +
                                                   std::to_string(needed));
    }
}

FitResult cm_fit(const Dataset& data, const ModelSpec& spec, const SpdMatrix& sigma_init, const CmOptions& options)
{
    check_fit_preconditions(data, spec);
    if (sigma_init.dim() != spec.responses()) {
        throw Error(Errc::InvalidInput, "initial covariance has the wrong dimension");
    }
    if (!(options.delta > 0.0) || options.max_iter < 1) {
        throw Error(Errc::InvalidInput, "delta must be positive and max_iter at least 1");
    }
    const double np = static_cast<double>(data.subjects() * data.responses());
    const double n = static_cast<double>(data.subjects());

    SpdMatrix sigma = sigma_init;
    double ld = logdet(sigma);
    Matrix b;
    double loglik = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace;

    while (iterations < options.max_iter) {
        ++iterations;
        GlsResult step = gls_step(data, spec, sigma);
        SpdMatrix next = residual_covariance(data, step.b);
        const double ld_next = logdet(next);
        // Tr (Y - ZB)^T (Y - ZB) Sigma^{-1} = Np when Sigma is the residual covariance of B
        loglik = -0.5 * (np * kLog2Pi + n * ld_next + np);
        if (options.record_trace) {
            trace.push_back(loglik);
        }
        // |Det S_{n+1} - Det S_n| <= delta Det S_n, written on the log scale
        const bool done = std::abs(std::expm1(ld_next - ld)) <= options.delta;
        sigma = std::move(next);
        ld = ld_next;
        b = std::move(step.b);
        if (done) {
            converged = true;
            break;
        }
    }

    return FitResult{
        .b_hat = std::move(b),
        .sigma_hat = std::move(sigma),
        .loglik = loglik,
        .cm_iterations = iterations,
        .restarts_used = 0,
        .jumps = 0,
        .failed_restarts = 0,
        .converged = converged,
        .loglik_trace = std::move(trace),
    };
}

FitResult ml_fit_multistart(const Dataset& data, const ModelSpec& spec, Rng& rng, const CmOptions& options,
                            const RestartPolicy& policy)
{
    const Index p = spec.responses();
    FitResult best = cm_fit(data, spec, SpdMatrix::identity(p), options);
    double best_ld = logdet(best.sigma_hat);
    const SpdMatrix unit = SpdMatrix::identity(p);

    int unchanged = 0;
    int restarts = 0;
    int jumps = 0;
    int failed = 0;
    while (unchanged < policy.stable_restarts && restarts < policy.max_restarts) {
        ++restarts;
        std::optional<FitResult> attempt;
        try {
            const SpdMatrix w = wishart_bartlett(rng, unit, static_cast<double>(p));
            attempt = cm_fit(data, spec, scaled(w, 1.0 / static_cast<double>(p)), options);
        } catch (const Error& e) {
            if (!is_numerical(e.code())) {
                throw;
            }
            ++failed;
            ++unchanged;
            continue;
        }
        FitResult& candidate = *attempt;
        if (!candidate.converged) {
            ++failed;
            ++unchanged;
            continue;
        }
        const double cand_ld = logdet(candidate.sigma_hat);
        const bool higher = candidate.loglik > best.loglik;
        const bool moved = std::abs(std::expm1(cand_ld - best_ld)) > policy.jump_factor * options.delta;
        if (higher && moved) {
            best = std::move(candidate);
            best_ld = cand_ld;
            ++jumps;
            unchanged = 0;
        } else {
            ++unchanged;
        }
    }
    best.restarts_used = restarts;
    best.jumps = jumps;
    best.failed_restarts = failed;
    return best;
}

} // namespace sur
