#pragma once

#include "sur/surcore.hpp"
#include "sur/tensorlinalg.hpp"

#include <array>
#include <optional>
#include <string_view>

namespace sur {

enum class Criterion { AIC, AICc, BIC };

inline constexpr std::array<Criterion, 3> kAllCriteria{Criterion::AIC, Criterion::AICc, Criterion::BIC};

std::string_view to_string(Criterion c) noexcept;
std::optional<Criterion> parse_criterion(std::string_view name) noexcept;

struct CriterionSet {
    double aic = 0.0;
    double aicc = 0.0;
    double bic = 0.0;
    Index k = 0;
    Index p = 0;
    Index n = 0;
    double beta_star = 0.0;

    double value(Criterion c) const noexcept;
};

/// Data-generating model Y = Z B0 + E with rows of E ~ N_p(0, Sigma0). The
/// covariates are shared with the candidate models.
struct TrueModel {
    Matrix b0;
    SpdMatrix sigma0;

    /// Index sets given by the nonzero pattern of B0. Throws InvalidInput when
    /// a column of B0 is entirely zero.
    ModelSpec support() const;
};

/// N ln Det S + Np (ln 2 pi + 1) + 2K + p(p+1)
double aic(const FitResult& fit, const ModelSpec& spec, Index n);

/// N ln Det S + Np (ln 2 pi + 1) + ln N {K + p(p+1)/2}
double bic(const FitResult& fit, const ModelSpec& spec, Index n);

/// 3K(p+1) + 2K^2/p + p(p+1)^2, the Sigma0-free lower bound of beta.
double beta_star(Index k, Index p);

/// aic + beta_star / N
double aicc(const FitResult& fit, const ModelSpec& spec, Index n);

CriterionSet evaluate_criteria(const FitResult& fit, const ModelSpec& spec, Index n);

/// Oblique projector X {X^T (S0^{-1} (x) I) X}^{-1} X^T (S0^{-1} (x) I).
StackedMatrix projector_p0(const ModelSpec& spec, const Matrix& z, const SpdMatrix& sigma0);

/// (S0^{-1/2} (x) I) X {X^T (S0^{-1} (x) I) X}^{-1} X^T (S0^{-1/2} (x) I), the
/// orthogonal projector similar to P0.
StackedMatrix orthogonalized_projector(const ModelSpec& spec, const Matrix& z, const SpdMatrix& sigma0);

/// The three projector-dependent traces entering beta.
struct BetaTraces {
    double trace_subjects_sq = 0.0;  ///< Tr (Tr_S P)^2
    double trace_partial_t = 0.0;    ///< Tr P P^{T_S}
    double trace_responses_sq = 0.0; ///< Tr (Tr_R P)(Tr_R P^T)
};

BetaTraces beta_traces(const StackedMatrix& projector);

/// 6K(p+1) + 2 Tr(Tr_S P)^2 - 3 Tr P P^{T_S} - 3 Tr(Tr_R P)(Tr_R P^T) + p(p+1)^2
double beta_from_traces(const BetaTraces& t, Index k, Index p);

/// beta(Sigma0): N times the leading -1/N bias of AIC under correct or over
/// specification, evaluated from the dense P0.
double beta_coefficient(const ModelSpec& spec, const Matrix& z, const SpdMatrix& sigma0);

/// Kullback-Leibler information Delta(B, Sigma) = E0{-2 L(B, Sigma)}:
///   Np ln 2pi + N ln Det S + Tr (Z B0 - Z B)^T (Z B0 - Z B) S^{-1} + N Tr S0 S^{-1}
double kl_information(const TrueModel& truth, const Matrix& z, const Matrix& b, const SpdMatrix& sigma);

} // namespace sur
