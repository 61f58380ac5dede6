#pragma once

// Monte Carlo model-selection experiments for SUR models.
//
// Reproducibility: the covariate matrix comes from a stream derived from the
// master seed alone; replicate r of cell (N, rho) draws its sample from
// derive_seed(master, {N, rho, r}) and every candidate fit of that replicate
// restarts from derive_seed(replicate, {i, j}). Results therefore do not
// depend on the number of threads.

#include "sur/criteria.hpp"
#include "sur/random.hpp"
#include "sur/surcore.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <vector>

namespace sur {

/// Seed of replicate r in cell (n, rho).
std::uint64_t replicate_seed(std::uint64_t master, Index n, double rho, int r);

struct Candidate;

/// Seed of the restart stream for one candidate fit within a replicate.
std::uint64_t candidate_seed(std::uint64_t replicate, const Candidate& c);

/// (1 - rho) I_p + rho J_p. Throws NotPositiveDefinite when rho is outside
/// (-1/(p-1), 1).
SpdMatrix equicorrelation_sigma(double rho, Index p);

/// n_max x m matrix of N(0, 1) covariates. Smaller designs use its leading rows.
Matrix gen_covariates(Rng& rng, Index n_max, Index m);

/// Y = Z B0 + E with rows of E drawn as L e, L the Cholesky factor of Sigma0.
Dataset gen_sample(Rng& rng, const Matrix& z, const TrueModel& truth);

/// A candidate with its (i, j) label in the selection grid.
struct Candidate {
    ModelSpec spec;
    int i = 1;
    int j = 1;
};

/// J_1 = {1..i}, J_2 = {6..5+j} for i, j in 1..5 (1-based), ordered by (i, j).
std::vector<Candidate> default_candidate_grid();

/// J_01 = {1, 2}, J_02 = {6, 7} (1-based).
ModelSpec default_truth_spec();

/// B0 with `coefficient` on the spec's free entries and Sigma0 equicorrelated.
TrueModel make_truth(const ModelSpec& spec, Index covariates, double coefficient, double rho);

struct SimConfig {
    std::vector<Index> n_values{15};
    std::vector<double> rho_values{0.5};
    int replications = 1000;
    std::uint64_t master_seed = 1;
    Index covariates = 10;
    std::vector<Candidate> candidates = default_candidate_grid();
    ModelSpec truth_spec = default_truth_spec();
    double truth_coefficient = 1.0;
    CmOptions cm{};
    RestartPolicy restarts{};
    std::vector<Criterion> criteria{kAllCriteria.begin(), kAllCriteria.end()};

    /// Throws InvalidInput with a description of the first problem found.
    void validate() const;
};

/// Leading n rows of the experiment's single covariate draw, which has
/// max(N_values) rows. Designs for different N are therefore nested.
Matrix experiment_covariates(const SimConfig& config, Index n);

struct RunControl {
    int threads = 1;
    /// Checked between replicates; when set, the run stops early and the
    /// tables describe only the completed replicates.
    const std::atomic<bool>* cancel = nullptr;
};

struct CriterionTally {
    Criterion criterion = Criterion::AIC;
    std::vector<int> counts;  ///< per candidate, aligned with SelectionTable::candidates
    int correct = 0;          ///< f: count at the true model's cell
    int near_ties = 0;        ///< nu: replicates whose top-two gap < 200 N delta
    double mean_gap = 0.0;    ///< mean top-two gap over counted replicates
};

struct SelectionTable {
    Index n = 0;
    double rho = 0.0;
    int replications = 0; ///< requested
    int completed = 0;    ///< replicates actually run
    int excluded = 0;     ///< completed replicates dropped because a candidate fit failed
    int true_index = -1;  ///< candidate index of the true model, -1 if absent
    std::vector<Candidate> candidates;
    std::vector<CriterionTally> tallies;
    std::vector<int> jumps;               ///< summed accepted jumps per candidate
    std::vector<int> additional_restarts; ///< restarts beyond the stable count, summed
    std::vector<int> multimodal_samples;  ///< replicates with at least one jump

    const CriterionTally& tally(Criterion c) const;
};

/// Near-tie threshold 200 N delta.
double near_tie_threshold(Index n, double delta) noexcept;

/// Index of the smallest value; exact ties go to smaller K, then to the
/// earlier candidate.
std::size_t select_best(const std::vector<double>& values, const std::vector<Index>& k);

/// Gap between the second smallest and smallest value (infinity for one value).
double top_two_gap(const std::vector<double>& values);

/// One SelectionTable per (N, rho) in config order, N outermost.
std::vector<SelectionTable> run_selection_experiment(const SimConfig& config, const RunControl& control = {});

struct BiasPoint {
    int i = 0;
    double mean_kl = 0.0, se_kl = 0.0;
    double mean_aic = 0.0, se_aic = 0.0;
    double mean_aicc = 0.0, se_aicc = 0.0;
};

struct BiasCurve {
    Index n = 0;
    double rho = 0.0;
    int j_fixed = 2;
    int completed = 0;
    int excluded = 0;
    std::vector<BiasPoint> points;
};

/// Expected KL, AIC and AICc of candidates (i, j_fixed), i = 1..5, over the
/// same replicates as run_selection_experiment.
BiasCurve estimate_bias_curve(const SimConfig& config, Index n, double rho, int j_fixed = 2,
                              const RunControl& control = {});

struct BiasExpansionReport {
    double estimate = 0.0;      ///< mean of Delta - AIC
    double standard_error = 0.0;
    double predicted = 0.0;     ///< beta(Sigma0) / N
    double z_score = 0.0;
    double aicc_residual = 0.0; ///< mean of Delta - AICc
    double aicc_standard_error = 0.0;
    double beta = 0.0;
    int completed = 0;
    int excluded = 0;
};

/// Monte Carlo estimate of E0[Delta - AIC] for one correctly specified or
/// overspecified candidate, compared with beta(Sigma0) / N.
BiasExpansionReport verify_bias_expansion(const ModelSpec& candidate, const TrueModel& truth, const Matrix& z,
                                          int replications, std::uint64_t seed, const CmOptions& cm = {},
                                          const RestartPolicy& restarts = {}, const RunControl& control = {});

/// Runs body(r) for r in [0, count) on up to `threads` threads; stops handing
/// out work once cancel is set. Returns the number of indices processed,
/// which are always 0..returned-1.
int parallel_for(int count, int threads, const std::atomic<bool>* cancel, const std::function<void(int)>& body);

} // namespace sur
