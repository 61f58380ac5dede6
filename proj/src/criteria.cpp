#include "sur/criteria.hpp"

#include "sur/errors.hpp"

#include <cmath>
#include <numbers>

namespace sur {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double fit_term(const FitResult& fit, const ModelSpec& spec, Index n)
{
    const Index p = spec.responses();
    if (fit.sigma_hat.dim() != p) {
        throw Error(Errc::InvalidInput, "fitted covariance does not match the spec");
    }
    const double nn = static_cast<double>(n);
    return nn * logdet(fit.sigma_hat) + nn * static_cast<double>(p) * (kLog2Pi + 1.0);
}

double parameter_count(const ModelSpec& spec)
{
    const double p = static_cast<double>(spec.responses());
    return static_cast<double>(spec.free_coefficients()) + p * (p + 1.0) / 2.0;
}

// {X^T W X}^{-1} X^T with W = sigma0^{-1} (x) I, shared by both projectors.
struct ProjectorParts {
    Matrix x;
    Matrix gram_inv_xt;
};

ProjectorParts projector_parts(const ModelSpec& spec, const Matrix& z, const SpdMatrix& sigma0)
{
    if (sigma0.dim() != spec.responses()) {
        throw Error(Errc::InvalidInput, "Sigma0 does not match the number of responses");
    }
    Matrix x = build_stacked_design(spec, z);
    const StackedMatrix w = kron_with_identity(chol_logdet_inverse(sigma0).inverse.matrix(), z.rows());
    const Matrix gram = x.transpose() * w.matrix() * x;
    auto llt = checked_cholesky(0.5 * (gram + gram.transpose()));
    if (!llt) {
        throw Error(Errc::SingularNormalEquations, "X^T (Sigma0^{-1} (x) I) X is singular");
    }
    Matrix gram_inv_xt = llt->solve(x.transpose());
    return {std::move(x), std::move(gram_inv_xt)};
}

} // namespace

std::string_view to_string(Criterion c) noexcept
{
    switch (c) {
    case Criterion::AIC: return "AIC";
    case Criterion::AICc: return "AICc";
    case Criterion::BIC: return "BIC";
    }
    return "?";
}

std::optional<Criterion> parse_criterion(std::string_view name) noexcept
{
    for (auto c : kAllCriteria) {
        if (to_string(c) == name) {
            return c;
        }
    }
    return std::nullopt;
}

double CriterionSet::value(Criterion c) const noexcept
{
    switch (c) {
    case Criterion::AIC: return aic;
    case Criterion::AICc: return aicc;
    case Criterion::BIC: return bic;
    }
    return aic;
}

ModelSpec TrueModel::support() const
{
    std::vector<std::vector<Index>> sets(static_cast<std::size_t>(b0.cols()));
    for (Index j = 0; j < b0.cols(); ++j) {
        for (Index i = 0; i < b0.rows(); ++i) {
            if (b0(i, j) != 0.0) {
                sets[static_cast<std::size_t>(j)].push_back(i);
            }
        }
    }
    return ModelSpec(std::move(sets));
}

double aic(const FitResult& fit, const ModelSpec& spec, Index n)
{
    const double p = static_cast<double>(spec.responses());
    return fit_term(fit, spec, n) + 2.0 * static_cast<double>(spec.free_coefficients()) + p * (p + 1.0);
}

double bic(const FitResult& fit, const ModelSpec& spec, Index n)
{
    return fit_term(fit, spec, n) + std::log(static_cast<double>(n)) * parameter_count(spec);
}

double beta_star(Index k, Index p)
{
    const double kk = static_cast<double>(k);
    const double pp = static_cast<double>(p);
    return 3.0 * kk * (pp + 1.0) + 2.0 * kk * kk / pp + pp * (pp + 1.0) * (pp + 1.0);
}

double aicc(const FitResult& fit, const ModelSpec& spec, Index n)
{
    return aic(fit, spec, n) + beta_star(spec.free_coefficients(), spec.responses()) / static_cast<double>(n);
}

CriterionSet evaluate_criteria(const FitResult& fit, const ModelSpec& spec, Index n)
{
    CriterionSet out;
    out.k = spec.free_coefficients();
    out.p = spec.responses();
    out.n = n;
    out.beta_star = beta_star(out.k, out.p);
    out.aic = aic(fit, spec, n);
    out.aicc = out.aic + out.beta_star / static_cast<double>(n);
    out.bic = bic(fit, spec, n);
    return out;
}

StackedMatrix projector_p0(const ModelSpec& spec, const Matrix& z, const SpdMatrix& sigma0)
{
    const auto parts = projector_parts(spec, z, sigma0);
    const StackedMatrix w = kron_with_identity(chol_logdet_inverse(sigma0).inverse.matrix(), z.rows());
    return {spec.responses(), z.rows(), parts.x * parts.gram_inv_xt * w.matrix()};
}

StackedMatrix orthogonalized_projector(const ModelSpec& spec, const Matrix& z, const SpdMatrix& sigma0)
{
    const auto parts = projector_parts(spec, z, sigma0);
    const StackedMatrix root = kron_with_identity(spd_inverse_sqrt(sigma0), z.rows());
    Matrix a = root.matrix() * parts.x * parts.gram_inv_xt * root.matrix();
    return {spec.responses(), z.rows(), std::move(a)};
}

BetaTraces beta_traces(const StackedMatrix& projector)
{
    BetaTraces t;
    const Matrix ts = partial_trace_subjects(projector);
    t.trace_subjects_sq = (ts * ts).trace();
    // Tr A B = sum_{ab} A_ab B_ba
    const StackedMatrix pt = partial_transpose_subjects(projector);
    t.trace_partial_t = projector.matrix().cwiseProduct(pt.matrix().transpose()).sum();
    const Matrix tr = partial_trace_responses(projector);
    const Matrix tr_t = partial_trace_responses(projector.transpose());
    t.trace_responses_sq = (tr * tr_t).trace();
    return t;
}

double beta_from_traces(const BetaTraces& t, Index k, Index p)
{
    const double kk = static_cast<double>(k);
    const double pp = static_cast<double>(p);
    return 6.0 * kk * (pp + 1.0) + 2.0 * t.trace_subjects_sq - 3.0 * t.trace_partial_t -
           3.0 * t.trace_responses_sq + pp * (pp + 1.0) * (pp + 1.0);
}

double beta_coefficient(const ModelSpec& spec, const Matrix& z, const SpdMatrix& sigma0)
{
    const StackedMatrix p0 = projector_p0(spec, z, sigma0);
    return beta_from_traces(beta_traces(p0), spec.free_coefficients(), spec.responses());
}

double kl_information(const TrueModel& truth, const Matrix& z, const Matrix& b, const SpdMatrix& sigma)
{
    const Index n = z.rows();
    const Index p = sigma.dim();
    if (truth.sigma0.dim() != p || b.cols() != p || truth.b0.cols() != p || b.rows() != z.cols() ||
        truth.b0.rows() != z.cols()) {
        throw Error(Errc::InvalidInput, "kl_information: dimension mismatch");
    }
    const auto [ld, inv] = chol_logdet_inverse(sigma);
    const Matrix shift = z * (truth.b0 - b);
    const double nn = static_cast<double>(n);
    return nn * static_cast<double>(p) * kLog2Pi + nn * ld +
           (shift.transpose() * shift).cwiseProduct(inv.matrix()).sum() +
           nn * (truth.sigma0.matrix() * inv.matrix()).trace();
}

} // namespace sur
