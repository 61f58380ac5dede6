#include "sur/simlab.hpp"

#include "sur/errors.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>

namespace sur {

namespace {

// Stream tag for the covariate draw ("covariat").
constexpr std::uint64_t kCovariateTag = 0x636f76617269617aULL;

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

MeanSe mean_and_se(const std::vector<double>& xs)
{
    MeanSe out;
    if (xs.empty()) {
        return out;
    }
    const double count = static_cast<double>(xs.size());
    for (double x : xs) {
        out.mean += x;
    }
    out.mean /= count;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) {
            ss += (x - out.mean) * (x - out.mean);
        }
        out.se = std::sqrt(ss / (count - 1.0)) / std::sqrt(count);
    }
    return out;
}

struct ReplicateOutcome {
    bool failed = false;
    std::vector<CriterionSet> criteria; // per candidate
    std::vector<int> jumps;
    std::vector<int> restarts;
};

ReplicateOutcome run_replicate(const SimConfig& config, const Matrix& z, const TrueModel& truth, Index n,
                               double rho, int r)
{
    ReplicateOutcome out;
    const std::uint64_t seed = replicate_seed(config.master_seed, n, rho, r);
    Rng sample_rng(seed);
    const Dataset data = gen_sample(sample_rng, z, truth);
    out.criteria.reserve(config.candidates.size());
    for (const auto& cand : config.candidates) {
        Rng fit_rng(candidate_seed(seed, cand));
        try {
            const FitResult fit = ml_fit_multistart(data, cand.spec, fit_rng, config.cm, config.restarts);
            out.criteria.push_back(evaluate_criteria(fit, cand.spec, n));
            out.jumps.push_back(fit.jumps);
            out.restarts.push_back(fit.restarts_used);
        } catch (const Error& e) {
            if (!is_numerical(e.code())) {
                throw;
            }
            out.failed = true;
            return out;
        }
    }
    return out;
}

SelectionTable aggregate(const SimConfig& config, Index n, double rho, const std::vector<ReplicateOutcome>& outcomes,
                         int completed)
{
    const std::size_t nc = config.candidates.size();
    SelectionTable table;
    table.n = n;
    table.rho = rho;
    table.replications = config.replications;
    table.completed = completed;
    table.candidates = config.candidates;
    table.jumps.assign(nc, 0);
    table.additional_restarts.assign(nc, 0);
    table.multimodal_samples.assign(nc, 0);
    for (std::size_t c = 0; c < nc; ++c) {
        if (config.candidates[c].spec == config.truth_spec) {
            table.true_index = static_cast<int>(c);
            break;
        }
    }
    for (auto crit : config.criteria) {
        CriterionTally t;
        t.criterion = crit;
        t.counts.assign(nc, 0);
        table.tallies.push_back(std::move(t));
    }

    std::vector<Index> ks;
    for (const auto& cand : config.candidates) {
        ks.push_back(cand.spec.free_coefficients());
    }
    const double tie = near_tie_threshold(n, config.cm.delta);
    std::vector<double> gap_sums(table.tallies.size(), 0.0);
    std::vector<double> values(nc);

    for (int r = 0; r < completed; ++r) {
        const auto& o = outcomes[static_cast<std::size_t>(r)];
        if (o.failed) {
            ++table.excluded;
            continue;
        }
        for (std::size_t c = 0; c < nc; ++c) {
            table.jumps[c] += o.jumps[c];
            table.additional_restarts[c] += std::max(0, o.restarts[c] - config.restarts.stable_restarts);
            table.multimodal_samples[c] += o.jumps[c] > 0 ? 1 : 0;
        }
        for (std::size_t t = 0; t < table.tallies.size(); ++t) {
            auto& tally = table.tallies[t];
            for (std::size_t c = 0; c < nc; ++c) {
                values[c] = o.criteria[c].value(tally.criterion);
            }
            ++tally.counts[select_best(values, ks)];
            const double gap = top_two_gap(values);
            if (gap < tie) {
                ++tally.near_ties;
            }
            if (std::isfinite(gap)) {
                gap_sums[t] += gap;
            }
        }
    }
    const int counted = completed - table.excluded;
    for (std::size_t t = 0; t < table.tallies.size(); ++t) {
        auto& tally = table.tallies[t];
        tally.correct = table.true_index >= 0 ? tally.counts[static_cast<std::size_t>(table.true_index)] : 0;
        tally.mean_gap = counted > 0 ? gap_sums[t] / counted : 0.0;
    }
    return table;
}

} // namespace

std::uint64_t replicate_seed(std::uint64_t master, Index n, double rho, int r)
{
    return derive_seed(master, {static_cast<std::uint64_t>(n), key_of(rho), static_cast<std::uint64_t>(r)});
}

std::uint64_t candidate_seed(std::uint64_t replicate, const Candidate& c)
{
    return derive_seed(replicate, {static_cast<std::uint64_t>(c.i), static_cast<std::uint64_t>(c.j)});
}

SpdMatrix equicorrelation_sigma(double rho, Index p)
{
    if (!(std::abs(rho) < 1.0)) {
        throw Error(Errc::NotPositiveDefinite, "equicorrelation needs |rho| < 1");
    }
    Matrix s = Matrix::Constant(p, p, rho);
    s.diagonal().setOnes();
    return SpdMatrix(std::move(s));
}

Matrix gen_covariates(Rng& rng, Index n_max, Index m) { return standard_normal_matrix(rng, n_max, m); }

Matrix experiment_covariates(const SimConfig& config, Index n)
{
    Index n_max = n;
    for (Index v : config.n_values) {
        n_max = std::max(n_max, v);
    }
    Rng rng(derive_seed(config.master_seed, {kCovariateTag}));
    return gen_covariates(rng, n_max, config.covariates).topRows(n);
}

Dataset gen_sample(Rng& rng, const Matrix& z, const TrueModel& truth)
{
    const Index p = truth.sigma0.dim();
    if (truth.b0.rows() != z.cols() || truth.b0.cols() != p) {
        throw Error(Errc::InvalidInput, "true coefficients do not match the covariates");
    }
    const Matrix l = Eigen::LLT<Matrix>(truth.sigma0.matrix()).matrixL();
    const Matrix e = standard_normal_matrix(rng, z.rows(), p) * l.transpose();
    return Dataset(z * truth.b0 + e, z);
}

std::vector<Candidate> default_candidate_grid()
{
    std::vector<Candidate> grid;
    for (int i = 1; i <= 5; ++i) {
        for (int j = 1; j <= 5; ++j) {
            std::vector<Index> first;
            std::vector<Index> second;
            for (int k = 0; k < i; ++k) {
                first.push_back(k);
            }
            for (int k = 0; k < j; ++k) {
                second.push_back(5 + k);
            }
            grid.push_back({ModelSpec({first, second}), i, j});
        }
    }
    return grid;
}

ModelSpec default_truth_spec() { return ModelSpec({{0, 1}, {5, 6}}); }

TrueModel make_truth(const ModelSpec& spec, Index covariates, double coefficient, double rho)
{
    spec.check_covariates(covariates);
    if (coefficient == 0.0) {
        throw Error(Errc::InvalidInput, "true coefficients must be nonzero");
    }
    Matrix b0 = Matrix::Zero(covariates, spec.responses());
    for (Index j = 0; j < spec.responses(); ++j) {
        for (Index idx : spec.set(j)) {
            b0(idx, j) = coefficient;
        }
    }
    return {std::move(b0), equicorrelation_sigma(rho, spec.responses())};
}

void SimConfig::validate() const
{
    auto fail = [](const std::string& msg) { throw Error(Errc::InvalidInput, msg); };
    if (n_values.empty()) {
        fail("N_values must not be empty");
    }
    if (rho_values.empty()) {
        fail("rho_values must not be empty");
    }
    if (replications < 1) {
        fail("replications must be at least 1");
    }
    if (candidates.empty()) {
        fail("candidate grid must not be empty");
    }
    if (criteria.empty()) {
        fail("at least one criterion is required");
    }
    if (!(cm.delta > 0.0)) {
        fail("delta must be positive");
    }
    if (restarts.stable_restarts < 0 || restarts.max_restarts < 0) {
        fail("restart counts must be non-negative");
    }
    const Index p = truth_spec.responses();
    truth_spec.check_covariates(covariates);
    for (double rho : rho_values) {
        if (!(std::abs(rho) < 1.0)) {
            fail("rho values must satisfy |rho| < 1");
        }
        if (p > 2 && !(rho > -1.0 / static_cast<double>(p - 1))) {
            fail("rho must exceed -1/(p-1) for a positive definite Sigma0");
        }
    }
    for (const auto& c : candidates) {
        if (c.spec.responses() != p) {
            fail("every candidate must have as many index sets as the true model");
        }
        c.spec.check_covariates(covariates);
    }
    for (Index n : n_values) {
        if (n < covariates) {
            fail("N = " + std::to_string(n) + " is smaller than the number of covariates");
        }
        for (const auto& c : candidates) {
            if (n < p + c.spec.max_set_size() + 1) {
                fail("N = " + std::to_string(n) + " is too small for candidate (" + std::to_string(c.i) + ", " +
                     std::to_string(c.j) + ")");
            }
        }
    }
}

const CriterionTally& SelectionTable::tally(Criterion c) const
{
    for (const auto& t : tallies) {
        if (t.criterion == c) {
            return t;
        }
    }
    throw Error(Errc::InvalidInput, "criterion " + std::string(to_string(c)) + " was not recorded");
}

double near_tie_threshold(Index n, double delta) noexcept { return 200.0 * static_cast<double>(n) * delta; }

std::size_t select_best(const std::vector<double>& values, const std::vector<Index>& k)
{
    std::size_t best = 0;
    for (std::size_t c = 1; c < values.size(); ++c) {
        if (values[c] < values[best] || (values[c] == values[best] && k[c] < k[best])) {
            best = c;
        }
    }
    return best;
}

double top_two_gap(const std::vector<double>& values)
{
    if (values.size() < 2) {
        return std::numeric_limits<double>::infinity();
    }
    double lo = std::numeric_limits<double>::infinity();
    double second = std::numeric_limits<double>::infinity();
    for (double v : values) {
        if (v < lo) {
            second = lo;
            lo = v;
        } else if (v < second) {
            second = v;
        }
    }
    return second - lo;
}

int parallel_for(int count, int threads, const std::atomic<bool>* cancel, const std::function<void(int)>& body)
{
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            if (cancel && cancel->load()) {
                return;
            }
            {
                std::lock_guard lock(error_mutex);
                if (error) {
                    return;
                }
            }
            const int r = next.fetch_add(1);
            if (r >= count) {
                return;
            }
            try {
                body(r);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
            }
        }
    };
    const int workers = std::clamp(threads, 1, std::max(1, count));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < workers; ++t) {
            pool.emplace_back(worker);
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
    return std::min(next.load(), count);
}

std::vector<SelectionTable> run_selection_experiment(const SimConfig& config, const RunControl& control)
{
    config.validate();
    std::vector<SelectionTable> tables;
    for (Index n : config.n_values) {
        const Matrix z = experiment_covariates(config, n);
        for (double rho : config.rho_values) {
            if (control.cancel && control.cancel->load()) {
                return tables;
            }
            const TrueModel truth = make_truth(config.truth_spec, config.covariates, config.truth_coefficient, rho);
            std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(config.replications));
            const int done = parallel_for(config.replications, control.threads, control.cancel, [&](int r) {
                outcomes[static_cast<std::size_t>(r)] = run_replicate(config, z, truth, n, rho, r);
            });
            tables.push_back(aggregate(config, n, rho, outcomes, done));
        }
    }
    return tables;
}

BiasCurve estimate_bias_curve(const SimConfig& config, Index n, double rho, int j_fixed, const RunControl& control)
{
    config.validate();
    std::vector<Candidate> curve;
    for (const auto& c : config.candidates) {
        if (c.j == j_fixed) {
            curve.push_back(c);
        }
    }
    std::sort(curve.begin(), curve.end(), [](const Candidate& a, const Candidate& b) { return a.i < b.i; });
    if (curve.empty()) {
        throw Error(Errc::InvalidInput, "no candidates with j = " + std::to_string(j_fixed));
    }
    const Matrix z = experiment_covariates(config, n);
    const TrueModel truth = make_truth(config.truth_spec, config.covariates, config.truth_coefficient, rho);

    struct Row {
        bool failed = false;
        std::vector<double> kl, aic, aicc;
    };
    std::vector<Row> rows(static_cast<std::size_t>(config.replications));
    const int done = parallel_for(config.replications, control.threads, control.cancel, [&](int r) {
        Row& row = rows[static_cast<std::size_t>(r)];
        const std::uint64_t seed = replicate_seed(config.master_seed, n, rho, r);
        Rng sample_rng(seed);
        const Dataset data = gen_sample(sample_rng, z, truth);
        for (const auto& cand : curve) {
            Rng fit_rng(candidate_seed(seed, cand));
            try {
                const FitResult fit = ml_fit_multistart(data, cand.spec, fit_rng, config.cm, config.restarts);
                const CriterionSet cs = evaluate_criteria(fit, cand.spec, n);
                row.kl.push_back(kl_information(truth, z, fit.b_hat, fit.sigma_hat));
                row.aic.push_back(cs.aic);
                row.aicc.push_back(cs.aicc);
            } catch (const Error& e) {
                if (!is_numerical(e.code())) {
                    throw;
                }
                row.failed = true;
                return;
            }
        }
    });

    BiasCurve out;
    out.n = n;
    out.rho = rho;
    out.j_fixed = j_fixed;
    out.completed = done;
    for (std::size_t c = 0; c < curve.size(); ++c) {
        std::vector<double> kl, aic_values, aicc_values;
        for (int r = 0; r < done; ++r) {
            const Row& row = rows[static_cast<std::size_t>(r)];
            if (row.failed) {
                continue;
            }
            kl.push_back(row.kl[c]);
            aic_values.push_back(row.aic[c]);
            aicc_values.push_back(row.aicc[c]);
        }
        const auto k = mean_and_se(kl);
        const auto a = mean_and_se(aic_values);
        const auto ac = mean_and_se(aicc_values);
        out.points.push_back({curve[c].i, k.mean, k.se, a.mean, a.se, ac.mean, ac.se});
    }
    for (int r = 0; r < done; ++r) {
        out.excluded += rows[static_cast<std::size_t>(r)].failed ? 1 : 0;
    }
    return out;
}

BiasExpansionReport verify_bias_expansion(const ModelSpec& candidate, const TrueModel& truth, const Matrix& z,
                                          int replications, std::uint64_t seed, const CmOptions& cm,
                                          const RestartPolicy& restarts, const RunControl& control)
{
    if (replications < 2) {
        throw Error(Errc::InvalidInput, "bias check needs at least two replicates");
    }
    const ModelSpec support = truth.support();
    candidate.check_covariates(z.cols());
    if (candidate.responses() != support.responses()) {
        throw Error(Errc::InvalidInput, "candidate and truth disagree on p");
    }
    for (Index j = 0; j < support.responses(); ++j) {
        const auto& have = candidate.set(j);
        const auto& need = support.set(j);
        if (!std::includes(have.begin(), have.end(), need.begin(), need.end())) {
            throw Error(Errc::InvalidInput, "candidate must contain the true index sets");
        }
    }
    const Index n = z.rows();
    BiasExpansionReport report;
    report.beta = beta_coefficient(candidate, z, truth.sigma0);
    report.predicted = report.beta / static_cast<double>(n);

    struct Row {
        bool failed = false;
        double d_aic = 0.0;
        double d_aicc = 0.0;
    };
    std::vector<Row> rows(static_cast<std::size_t>(replications));
    const int done = parallel_for(replications, control.threads, control.cancel, [&](int r) {
        Row& row = rows[static_cast<std::size_t>(r)];
        const std::uint64_t rs = derive_seed(seed, {static_cast<std::uint64_t>(r)});
        Rng sample_rng(rs);
        const Dataset data = gen_sample(sample_rng, z, truth);
        Rng fit_rng(derive_seed(rs, {1}));
        try {
            const FitResult fit = ml_fit_multistart(data, candidate, fit_rng, cm, restarts);
            const CriterionSet cs = evaluate_criteria(fit, candidate, n);
            const double kl = kl_information(truth, z, fit.b_hat, fit.sigma_hat);
            row.d_aic = kl - cs.aic;
            row.d_aicc = kl - cs.aicc;
        } catch (const Error& e) {
            if (!is_numerical(e.code())) {
                throw;
            }
            row.failed = true;
        }
    });

    std::vector<double> d_aic, d_aicc;
    for (int r = 0; r < done; ++r) {
        const Row& row = rows[static_cast<std::size_t>(r)];
        if (row.failed) {
            ++report.excluded;
            continue;
        }
        d_aic.push_back(row.d_aic);
        d_aicc.push_back(row.d_aicc);
    }
    report.completed = done;
    const auto a = mean_and_se(d_aic);
    const auto ac = mean_and_se(d_aicc);
    report.estimate = a.mean;
    report.standard_error = a.se;
    report.aicc_residual = ac.mean;
    report.aicc_standard_error = ac.se;
    report.z_score = a.se > 0.0 ? (a.mean - report.predicted) / a.se : 0.0;
    return report;
}

} // namespace sur
