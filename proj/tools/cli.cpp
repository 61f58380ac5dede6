#include "cli.hpp"

#include "io.hpp"

#include "sur/criteria.hpp"
#include "sur/errors.hpp"
#include "sur/simlab.hpp"
#include "sur/surcore.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

namespace sur::cli {

namespace {

struct Options {
    double delta = 1e-7;
    std::uint64_t seed = 1;
    int restarts_stable = 10;
    int threads = 1;
    std::string criteria = "AIC,AICc,BIC";
    std::string out_dir;
};

/// What `simulate` and `generate` run: the experiment plus which outputs to produce.
struct SimPlan {
    SimConfig config;
    bool selection = true;
    std::optional<int> bias_curve_j;
};

std::vector<Criterion> parse_criteria(const std::string& list)
{
    std::vector<Criterion> out;
    std::stringstream ss(list);
    std::string name;
    while (std::getline(ss, name, ',')) {
        const auto c = parse_criterion(name);
        if (!c) {
            throw InputError("unknown criterion '" + name + "' (expected AIC, AICc or BIC)");
        }
        if (std::find(out.begin(), out.end(), *c) == out.end()) {
            out.push_back(*c);
        }
    }
    if (out.empty()) {
        throw InputError("--criteria needs at least one criterion");
    }
    return out;
}

CmOptions cm_options(const Options& o)
{
    if (!(o.delta > 0.0)) {
        throw InputError("--delta must be positive");
    }
    return {.delta = o.delta};
}

RestartPolicy restart_policy(const Options& o)
{
    if (o.restarts_stable < 0) {
        throw InputError("--restarts-stable must be non-negative");
    }
    return {.stable_restarts = o.restarts_stable};
}

json options_json(const Options& o)
{
    return {{"delta", o.delta}, {"seed", o.seed}, {"restarts_stable", o.restarts_stable}, {"threads", o.threads}};
}

fs::path prepare_out_dir(const std::string& dir)
{
    const fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec || !fs::is_directory(p)) {
        throw InputError(dir + ": cannot create output directory");
    }
    return p;
}

Dataset load_dataset(const std::string& y_path, const std::string& z_path)
{
    Matrix y = read_csv_matrix(y_path);
    Matrix z = read_csv_matrix(z_path);
    try {
        return Dataset(std::move(y), std::move(z));
    } catch (const Error& e) {
        throw InputError(y_path + ", " + z_path + ": " + e.what());
    }
}

void check_candidate(const Dataset& data, const ModelSpec& spec, const std::string& where)
{
    try {
        spec.check_covariates(data.covariates());
        check_fit_preconditions(data, spec);
    } catch (const Error& e) {
        if (is_numerical(e.code())) {
            throw;
        }
        throw InputError(where + ": " + e.what());
    }
}

json criteria_json(const CriterionSet& cs)
{
    return {{"AIC", cs.aic}, {"AICc", cs.aicc}, {"BIC", cs.bic}, {"beta_star", cs.beta_star}};
}

json diagnostics_json(const FitResult& fit)
{
    return {{"cm_iterations", fit.cm_iterations}, {"restarts_used", fit.restarts_used}, {"jumps", fit.jumps},
            {"failed_restarts", fit.failed_restarts}, {"converged", fit.converged}};
}

// -- presets and config files ------------------------------------------------

SimPlan preset(const std::string& name)
{
    SimPlan plan;
    if (name == "paper-table1") {
        plan.config.n_values = {15};
        plan.config.rho_values = {0.5};
    } else if (name == "paper-table2") {
        plan.config.n_values = {15, 20, 50};
        plan.config.rho_values = {0.2, 0.5, 0.8};
    } else if (name == "paper-fig1") {
        plan.config.n_values = {15};
        plan.config.rho_values = {0.5};
        plan.selection = false;
        plan.bias_curve_j = 2;
    } else {
        throw InputError("unknown preset '" + name + "' (expected paper-table1, paper-table2 or paper-fig1)");
    }
    return plan;
}

SimPlan plan_from_json(const json& j, const std::string& where)
{
    if (!j.is_object()) {
        throw InputError(where + ": a simulation config is a JSON object");
    }
    static const std::vector<std::string> known{"N_values",   "rho_values", "replications",    "seed",
                                                "covariates", "truth",      "truth_coefficient", "candidates",
                                                "criteria",   "delta",      "max_iter",          "restarts_stable",
                                                "max_restarts", "selection", "bias_curve_j"};
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw InputError(where + ": unknown key \"" + key + "\"");
        }
    }
    SimPlan plan;
    SimConfig& c = plan.config;
    try {
        if (j.contains("N_values")) {
            c.n_values = j.at("N_values").get<std::vector<Index>>();
        }
        if (j.contains("rho_values")) {
            c.rho_values = j.at("rho_values").get<std::vector<double>>();
        }
        c.replications = j.value("replications", c.replications);
        c.master_seed = j.value("seed", c.master_seed);
        c.covariates = j.value("covariates", c.covariates);
        if (j.contains("truth")) {
            c.truth_spec = spec_from_json(j.at("truth"), where + ": truth");
        }
        c.truth_coefficient = j.value("truth_coefficient", c.truth_coefficient);
        if (j.contains("candidates")) {
            c.candidates = grid_from_json(j.at("candidates"), where + ": candidates");
        }
        if (j.contains("criteria")) {
            c.criteria.clear();
            for (const auto& name : j.at("criteria")) {
                const auto crit = parse_criterion(name.get<std::string>());
                if (!crit) {
                    throw InputError(where + ": unknown criterion " + name.dump());
                }
                c.criteria.push_back(*crit);
            }
        }
        c.cm.delta = j.value("delta", c.cm.delta);
        c.cm.max_iter = j.value("max_iter", c.cm.max_iter);
        c.restarts.stable_restarts = j.value("restarts_stable", c.restarts.stable_restarts);
        c.restarts.max_restarts = j.value("max_restarts", c.restarts.max_restarts);
        plan.selection = j.value("selection", true);
        if (j.contains("bias_curve_j") && !j.at("bias_curve_j").is_null()) {
            plan.bias_curve_j = j.at("bias_curve_j").get<int>();
        }
    } catch (const json::exception& e) {
        throw InputError(where + ": " + e.what());
    }
    return plan;
}

json plan_to_json(const SimPlan& plan)
{
    const SimConfig& c = plan.config;
    json criteria = json::array();
    for (auto crit : c.criteria) {
        criteria.push_back(std::string(to_string(crit)));
    }
    return {
        {"N_values", c.n_values},
        {"rho_values", c.rho_values},
        {"replications", c.replications},
        {"seed", c.master_seed},
        {"covariates", c.covariates},
        {"truth", spec_to_json(c.truth_spec)},
        {"truth_coefficient", c.truth_coefficient},
        {"candidates", grid_to_json(c.candidates)},
        {"criteria", criteria},
        {"delta", c.cm.delta},
        {"max_iter", c.cm.max_iter},
        {"restarts_stable", c.restarts.stable_restarts},
        {"max_restarts", c.restarts.max_restarts},
        {"selection", plan.selection},
        {"bias_curve_j", plan.bias_curve_j ? json(*plan.bias_curve_j) : json(nullptr)},
    };
}

void validate_plan(const SimPlan& plan)
{
    try {
        plan.config.validate();
    } catch (const Error& e) {
        throw InputError(std::string("simulation config: ") + e.what());
    }
    if (!plan.selection && !plan.bias_curve_j) {
        throw InputError("simulation config: nothing to do (selection is off and no bias curve requested)");
    }
}

// -- commands -----------------------------------------------------------------

struct Invocation {
    std::vector<std::string> argv;
    std::ostream& out;
    std::ostream& err;
    const std::atomic<bool>* cancel;
};

int cmd_fit(const Invocation& inv, const Options& o, const std::string& y_path, const std::string& z_path,
            const std::string& spec_path)
{
    const Dataset data = load_dataset(y_path, z_path);
    const ModelSpec spec = spec_from_json(read_json(spec_path), spec_path);
    check_candidate(data, spec, spec_path);

    Rng rng(o.seed);
    const FitResult fit = ml_fit_multistart(data, spec, rng, cm_options(o), restart_policy(o));
    const CriterionSet cs = evaluate_criteria(fit, spec, data.subjects());
    const json result = {
        {"command", "fit"},
        {"spec", spec_to_json(spec)},
        {"N", data.subjects()},
        {"p", data.responses()},
        {"M", data.covariates()},
        {"K", spec.free_coefficients()},
        {"B_hat", matrix_to_json(fit.b_hat)},
        {"Sigma_hat", matrix_to_json(fit.sigma_hat.matrix())},
        {"loglik", fit.loglik},
        {"criteria", criteria_json(cs)},
        {"diagnostics", diagnostics_json(fit)},
    };
    inv.out << result.dump(2) << '\n';
    if (!fit.converged) {
        inv.err << "warning: the CM iteration hit its iteration cap before converging\n";
    }

    if (!o.out_dir.empty()) {
        const fs::path dir = prepare_out_dir(o.out_dir);
        Manifest manifest("fit", inv.argv);
        manifest.set_seed(o.seed);
        manifest.set_config(options_json(o));
        for (const auto& path : {y_path, z_path, spec_path}) {
            manifest.add_input(path);
        }
        write_json(dir / "fit.json", result);
        manifest.add_output(dir / "fit.json");
        manifest.write(dir);
    }
    return kExitOk;
}

int cmd_select(const Invocation& inv, const Options& o, const std::string& y_path, const std::string& z_path,
               const std::string& grid_path)
{
    const Dataset data = load_dataset(y_path, z_path);
    const std::vector<Candidate> grid = grid_from_json(read_json(grid_path), grid_path);
    const std::vector<Criterion> criteria = parse_criteria(o.criteria);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        check_candidate(data, grid[k].spec, grid_path + ": candidate " + std::to_string(k + 1));
    }
    const CmOptions cm = cm_options(o);
    const RestartPolicy restarts = restart_policy(o);
    const Index n = data.subjects();

    std::vector<std::optional<FitResult>> fits(grid.size());
    std::vector<std::string> failures(grid.size());
    parallel_for(static_cast<int>(grid.size()), o.threads, nullptr, [&](int k) {
        const auto& cand = grid[static_cast<std::size_t>(k)];
        Rng rng(candidate_seed(o.seed, cand));
        try {
            fits[static_cast<std::size_t>(k)] = ml_fit_multistart(data, cand.spec, rng, cm, restarts);
        } catch (const Error& e) {
            if (!is_numerical(e.code())) {
                throw;
            }
            failures[static_cast<std::size_t>(k)] = e.what();
        }
    });

    std::vector<std::size_t> ok;
    std::vector<CriterionSet> sets(grid.size());
    json rows = json::array();
    for (std::size_t k = 0; k < grid.size(); ++k) {
        json row = {{"candidate", k + 1}, {"i", grid[k].i}, {"j", grid[k].j}, {"sets", spec_to_json(grid[k].spec)},
                    {"K", grid[k].spec.free_coefficients()}};
        if (fits[k]) {
            ok.push_back(k);
            sets[k] = evaluate_criteria(*fits[k], grid[k].spec, n);
            row["status"] = "ok";
            row["loglik"] = fits[k]->loglik;
            row["criteria"] = criteria_json(sets[k]);
            row["diagnostics"] = diagnostics_json(*fits[k]);
        } else {
            row["status"] = "failed";
            row["error"] = failures[k];
            inv.err << "warning: candidate " << k + 1 << " excluded: " << failures[k] << '\n';
        }
        rows.push_back(std::move(row));
    }

    json selection = json::object();
    if (!ok.empty()) {
        std::vector<Index> ks;
        for (auto k : ok) {
            ks.push_back(grid[k].spec.free_coefficients());
        }
        const double tie = near_tie_threshold(n, cm.delta);
        for (auto crit : criteria) {
            std::vector<double> values;
            for (auto k : ok) {
                values.push_back(sets[k].value(crit));
            }
            const std::size_t best = ok[select_best(values, ks)];
            const double gap = top_two_gap(values);
            selection[std::string(to_string(crit))] = {
                {"candidate", best + 1},
                {"i", grid[best].i},
                {"j", grid[best].j},
                {"value", sets[best].value(crit)},
                {"gap", std::isfinite(gap) ? json(gap) : json(nullptr)},
                {"exact_tie", gap == 0.0},
                {"near_tie", gap < tie},
            };
        }
    }
    const json result = {{"command", "select"},
                         {"N", n},
                         {"near_tie_threshold", near_tie_threshold(n, cm.delta)},
                         {"candidates", rows},
                         {"selected", selection},
                         {"failed_candidates", grid.size() - ok.size()}};
    inv.out << result.dump(2) << '\n';

    if (!o.out_dir.empty()) {
        const fs::path dir = prepare_out_dir(o.out_dir);
        Manifest manifest("select", inv.argv);
        manifest.set_seed(o.seed);
        json cfg = options_json(o);
        cfg["criteria"] = o.criteria;
        manifest.set_config(cfg);
        for (const auto& path : {y_path, z_path, grid_path}) {
            manifest.add_input(path);
        }
        {
            std::ofstream csv(dir / "candidates.csv");
            csv << "candidate,i,j,K,status,loglik,AIC,AICc,BIC,jumps,restarts_used\n";
            for (std::size_t k = 0; k < grid.size(); ++k) {
                csv << k + 1 << ',' << grid[k].i << ',' << grid[k].j << ',' << grid[k].spec.free_coefficients();
                if (fits[k]) {
                    csv << ",ok," << format_real(fits[k]->loglik) << ',' << format_real(sets[k].aic) << ','
                        << format_real(sets[k].aicc) << ',' << format_real(sets[k].bic) << ',' << fits[k]->jumps
                        << ',' << fits[k]->restarts_used << '\n';
                } else {
                    csv << ",failed,,,,,,\n";
                }
            }
        }
        manifest.add_output(dir / "candidates.csv");
        write_json(dir / "selection.json", result);
        manifest.add_output(dir / "selection.json");
        manifest.write(dir);
    }
    if (ok.empty()) {
        inv.err << "error: every candidate fit failed\n";
        return kExitNumerical;
    }
    return ok.size() == grid.size() ? kExitOk : kExitNumerical;
}

int cmd_beta(const Invocation& inv, const Options& o, const std::string& spec_path, const std::string& z_path,
             Index n, Index m, const std::string& sigma_path, std::optional<double> rho)
{
    const ModelSpec spec = spec_from_json(read_json(spec_path), spec_path);
    const Index p = spec.responses();
    Matrix z;
    if (!z_path.empty()) {
        z = read_csv_matrix(z_path);
    } else {
        if (n < 1) {
            throw InputError("beta: give --z or --n");
        }
        SimConfig c;
        c.master_seed = o.seed;
        c.n_values = {n};
        c.covariates = m > 0 ? m : 0;
        for (Index j = 0; j < p; ++j) {
            c.covariates = std::max(c.covariates, spec.set(j).back() + 1);
        }
        z = experiment_covariates(c, n);
    }
    try {
        spec.check_covariates(z.cols());
    } catch (const Error& e) {
        throw InputError(spec_path + ": " + e.what());
    }
    if (z.rows() < spec.max_set_size()) {
        throw InputError("beta: Z has fewer rows than the largest index set");
    }

    std::optional<SpdMatrix> sigma0;
    if (!sigma_path.empty()) {
        try {
            sigma0.emplace(read_csv_matrix(sigma_path));
        } catch (const Error& e) {
            throw InputError(sigma_path + ": " + e.what());
        }
    } else if (rho) {
        if (!(std::abs(*rho) < 1.0) || (p > 2 && !(*rho > -1.0 / static_cast<double>(p - 1)))) {
            throw InputError("beta: --rho does not give a positive definite equicorrelation matrix");
        }
        sigma0.emplace(equicorrelation_sigma(*rho, p));
    } else {
        throw InputError("beta: give --sigma0 or --rho");
    }
    if (sigma0->dim() != p) {
        throw InputError(fmt::format("beta: Sigma0 is {}x{} but the spec has {} responses", sigma0->dim(),
                                     sigma0->dim(), p));
    }

    const double beta = beta_coefficient(spec, z, *sigma0);
    const double bstar = beta_star(spec.free_coefficients(), p);
    const json result = {{"command", "beta"},
                         {"spec", spec_to_json(spec)},
                         {"N", z.rows()},
                         {"p", p},
                         {"K", spec.free_coefficients()},
                         {"beta", beta},
                         {"beta_star", bstar},
                         {"gap", beta - bstar}};
    inv.out << result.dump(2) << '\n';

    if (!o.out_dir.empty()) {
        const fs::path dir = prepare_out_dir(o.out_dir);
        Manifest manifest("beta", inv.argv);
        manifest.set_seed(o.seed);
        json cfg = options_json(o);
        cfg["rho"] = rho ? json(*rho) : json(nullptr);
        cfg["N"] = z.rows();
        manifest.set_config(cfg);
        manifest.add_input(spec_path);
        for (const auto& path : {z_path, sigma_path}) {
            if (!path.empty()) {
                manifest.add_input(path);
            }
        }
        write_json(dir / "beta.json", result);
        manifest.add_output(dir / "beta.json");
        manifest.write(dir);
    }
    return kExitOk;
}

SimPlan resolve_plan(const std::string& preset_name, const std::string& config_path, const Options& o,
                     const CLI::App& sub, int replications)
{
    if (preset_name.empty() == config_path.empty()) {
        throw InputError("give exactly one of --preset and --config");
    }
    SimPlan plan = preset_name.empty() ? plan_from_json(read_json(config_path), config_path) : preset(preset_name);
    SimConfig& c = plan.config;
    auto given = [&sub](const std::string& name) {
        const CLI::Option* opt = sub.get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
    };
    if (given("--seed")) {
        c.master_seed = o.seed;
    }
    if (given("--delta")) {
        c.cm.delta = o.delta;
    }
    if (given("--restarts-stable")) {
        c.restarts.stable_restarts = o.restarts_stable;
    }
    if (given("--criteria")) {
        c.criteria = parse_criteria(o.criteria);
    }
    if (given("--replications")) {
        c.replications = replications;
    }
    validate_plan(plan);
    return plan;
}

int cmd_simulate(const Invocation& inv, const Options& o, const SimPlan& plan, const std::string& config_path)
{
    if (o.out_dir.empty()) {
        throw InputError("simulate: --out is required");
    }
    if (o.threads < 1) {
        throw InputError("--threads must be at least 1");
    }
    const fs::path dir = prepare_out_dir(o.out_dir);
    const SimConfig& c = plan.config;
    const RunControl control{.threads = o.threads, .cancel = inv.cancel};
    Manifest manifest("simulate", inv.argv);
    manifest.set_seed(c.master_seed);
    manifest.set_config(plan_to_json(plan));
    manifest.set_extra("threads", o.threads);
    if (!config_path.empty()) {
        manifest.add_input(config_path);
    }

    json summary = {{"command", "simulate"}, {"seed", c.master_seed}, {"config", plan_to_json(plan)}};
    json cells = json::array();
    if (plan.selection) {
        const auto tables = run_selection_experiment(c, control);
        std::ofstream sel(dir / "selection.csv");
        std::ofstream jumps(dir / "jumps.csv");
        sel << "N,rho,criterion,i,j,count\n";
        jumps << "N,rho,i,j,jumps,additional_restarts,multimodal_samples\n";
        for (const auto& t : tables) {
            const std::string rho = format_real(t.rho);
            json crit = json::object();
            for (const auto& tally : t.tallies) {
                const std::string name(to_string(tally.criterion));
                for (std::size_t k = 0; k < t.candidates.size(); ++k) {
                    sel << t.n << ',' << rho << ',' << name << ',' << t.candidates[k].i << ',' << t.candidates[k].j
                        << ',' << tally.counts[k] << '\n';
                }
                crit[name] = {{"f", t.true_index >= 0 ? json(tally.correct) : json(nullptr)},
                              {"nu", tally.near_ties},
                              {"mean_gap", tally.mean_gap}};
            }
            int total_jumps = 0;
            int total_additional = 0;
            for (std::size_t k = 0; k < t.candidates.size(); ++k) {
                jumps << t.n << ',' << rho << ',' << t.candidates[k].i << ',' << t.candidates[k].j << ','
                      << t.jumps[k] << ',' << t.additional_restarts[k] << ',' << t.multimodal_samples[k] << '\n';
                total_jumps += t.jumps[k];
                total_additional += t.additional_restarts[k];
            }
            json truth = nullptr;
            if (t.true_index >= 0) {
                const auto& tc = t.candidates[static_cast<std::size_t>(t.true_index)];
                truth = {{"i", tc.i}, {"j", tc.j}};
            }
            cells.push_back({{"N", t.n},
                             {"rho", t.rho},
                             {"replications", t.replications},
                             {"completed", t.completed},
                             {"excluded", t.excluded},
                             {"true_model", truth},
                             {"criteria", crit},
                             {"jumps", total_jumps},
                             {"additional_restarts", total_additional}});
            if (t.excluded > 0) {
                inv.err << fmt::format("warning: N={} rho={}: {} replicates excluded after failed fits\n", t.n,
                                       rho, t.excluded);
            }
        }
        manifest.add_output(dir / "selection.csv");
        manifest.add_output(dir / "jumps.csv");
    }
    summary["cells"] = cells;

    json curves = json::array();
    if (plan.bias_curve_j) {
        for (Index n : c.n_values) {
            for (double rho : c.rho_values) {
                if (inv.cancel && inv.cancel->load()) {
                    break;
                }
                const BiasCurve curve = estimate_bias_curve(c, n, rho, *plan.bias_curve_j, control);
                const std::string name = fmt::format("bias_curve_N{}_rho{}.csv", n, format_real(rho));
                std::ofstream csv(dir / name);
                csv << "i,mean_kl,se_kl,mean_aic,se_aic,mean_aicc,se_aicc\n";
                for (const auto& pt : curve.points) {
                    csv << pt.i << ',' << format_real(pt.mean_kl) << ',' << format_real(pt.se_kl) << ','
                        << format_real(pt.mean_aic) << ',' << format_real(pt.se_aic) << ','
                        << format_real(pt.mean_aicc) << ',' << format_real(pt.se_aicc) << '\n';
                }
                manifest.add_output(dir / name);
                curves.push_back({{"file", name},
                                  {"N", n},
                                  {"rho", rho},
                                  {"j", curve.j_fixed},
                                  {"completed", curve.completed},
                                  {"excluded", curve.excluded}});
            }
        }
    }
    summary["bias_curves"] = curves;

    const bool interrupted = inv.cancel && inv.cancel->load();
    summary["interrupted"] = interrupted;
    write_json(dir / "summary.json", summary);
    manifest.add_output(dir / "summary.json");
    manifest.set_extra("interrupted", interrupted);
    manifest.write(dir);
    if (interrupted) {
        inv.err << "warning: interrupted; " << dir.string() << " holds partial results\n";
        return kExitInterrupted;
    }
    return kExitOk;
}

int cmd_generate(const Invocation& inv, const Options& o, const SimPlan& plan, const std::string& config_path,
                 Index n, std::optional<double> rho_opt, int replicate)
{
    if (o.out_dir.empty()) {
        throw InputError("generate: --out is required");
    }
    const SimConfig& c = plan.config;
    if (n == 0) {
        n = c.n_values.front();
    }
    if (std::find(c.n_values.begin(), c.n_values.end(), n) == c.n_values.end()) {
        throw InputError(fmt::format("generate: N = {} is not one of the config's N_values", n));
    }
    const double rho = rho_opt.value_or(c.rho_values.front());
    if (std::find(c.rho_values.begin(), c.rho_values.end(), rho) == c.rho_values.end()) {
        throw InputError("generate: rho is not one of the config's rho_values");
    }
    if (replicate < 0) {
        throw InputError("generate: --replicate must be non-negative");
    }
    const fs::path dir = prepare_out_dir(o.out_dir);
    const Matrix z = experiment_covariates(c, n);
    const TrueModel truth = make_truth(c.truth_spec, c.covariates, c.truth_coefficient, rho);
    const std::uint64_t seed = replicate_seed(c.master_seed, n, rho, replicate);
    Rng rng(seed);
    const Dataset data = gen_sample(rng, z, truth);

    write_csv_matrix(dir / "y.csv", data.y());
    write_csv_matrix(dir / "z.csv", data.z());
    write_json(dir / "truth.json", spec_to_json(c.truth_spec));
    write_json(dir / "grid.json", grid_to_json(c.candidates));

    Manifest manifest("generate", inv.argv);
    manifest.set_seed(c.master_seed);
    manifest.set_config(plan_to_json(plan));
    if (!config_path.empty()) {
        manifest.add_input(config_path);
    }
    for (const char* name : {"y.csv", "z.csv", "truth.json", "grid.json"}) {
        manifest.add_output(dir / name);
    }
    // select --seed <replicate_seed> reproduces the simulation's fits of this sample
    const json info = {{"N", n}, {"rho", rho}, {"replicate", replicate}, {"replicate_seed", seed}};
    manifest.set_extra("sample", info);
    manifest.write(dir);
    inv.out << info.dump(2) << '\n';
    return kExitOk;
}

void add_fit_options(CLI::App& sub, Options& o)
{
    sub.add_option("--delta", o.delta, "CM convergence tolerance on Det Sigma")->capture_default_str();
    sub.add_option("--seed", o.seed, "random seed")->capture_default_str();
    sub.add_option("--restarts-stable", o.restarts_stable, "unchanged random restarts before stopping")
        ->capture_default_str();
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::atomic<bool>* cancel)
{
    CLI::App app{"Seemingly unrelated regressions: ML fitting, information criteria and selection experiments",
                 "sur"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(SUR_VERSION));

    Options o;
    std::string y_path, z_path, spec_path, grid_path, sigma_path, preset_name, config_path;
    Index n = 0;
    Index m = 0;
    int replicate = 0;
    int replications = 0;
    std::optional<double> rho;

    auto* fit = app.add_subcommand("fit", "fit one model by maximum likelihood");
    fit->add_option("--y", y_path, "responses, N x p headerless CSV")->required();
    fit->add_option("--z", z_path, "covariates, N x M headerless CSV")->required();
    fit->add_option("--spec", spec_path, "JSON index sets, 1-based")->required();
    add_fit_options(*fit, o);
    fit->add_option("--out", o.out_dir, "directory for fit.json and manifest.json");

    auto* select = app.add_subcommand("select", "fit a candidate grid and pick the best model per criterion");
    select->add_option("--y", y_path, "responses, N x p headerless CSV")->required();
    select->add_option("--z", z_path, "covariates, N x M headerless CSV")->required();
    select->add_option("--grid", grid_path, "JSON list of candidate specs")->required();
    add_fit_options(*select, o);
    select->add_option("--criteria", o.criteria, "comma-separated subset of AIC,AICc,BIC")->capture_default_str();
    select->add_option("--threads", o.threads, "worker threads")->capture_default_str();
    select->add_option("--out", o.out_dir, "directory for candidates.csv, selection.json and manifest.json");

    auto* beta = app.add_subcommand("beta", "bias coefficient beta(Sigma0) and its lower bound beta*");
    beta->add_option("--spec", spec_path, "JSON index sets, 1-based")->required();
    auto* z_opt = beta->add_option("--z", z_path, "covariates, N x M headerless CSV");
    beta->add_option("--n", n, "draw N x M standard normal covariates instead of reading --z")->excludes(z_opt);
    beta->add_option("--m", m, "number of drawn covariates (default: largest index in the spec)")->excludes(z_opt);
    auto* s_opt = beta->add_option("--sigma0", sigma_path, "Sigma0 as a p x p headerless CSV");
    beta->add_option("--rho", rho, "equicorrelation Sigma0 = (1 - rho) I + rho J")->excludes(s_opt);
    beta->add_option("--seed", o.seed, "seed for drawn covariates")->capture_default_str();
    beta->add_option("--out", o.out_dir, "directory for beta.json and manifest.json");

    auto* simulate = app.add_subcommand("simulate", "run a Monte Carlo selection experiment");
    simulate->add_option("--preset", preset_name, "paper-table1, paper-table2 or paper-fig1");
    simulate->add_option("--config", config_path, "JSON simulation config");
    simulate->add_option("--replications", replications, "override the number of replicates");
    add_fit_options(*simulate, o);
    simulate->add_option("--criteria", o.criteria, "comma-separated subset of AIC,AICc,BIC");
    simulate->add_option("--threads", o.threads, "worker threads")->capture_default_str();
    simulate->add_option("--out", o.out_dir, "output directory")->required();

    auto* generate = app.add_subcommand("generate", "write one simulated sample as CSV");
    generate->add_option("--preset", preset_name, "paper-table1, paper-table2 or paper-fig1");
    generate->add_option("--config", config_path, "JSON simulation config");
    generate->add_option("--seed", o.seed, "master seed")->capture_default_str();
    generate->add_option("--n", n, "sample size (default: first of N_values)");
    generate->add_option("--rho", rho, "correlation (default: first of rho_values)");
    generate->add_option("--replicate", replicate, "replicate index")->capture_default_str();
    generate->add_option("--out", o.out_dir, "output directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInput;
    }

    const Invocation inv{args, out, err, cancel};
    try {
        if (*fit) {
            return cmd_fit(inv, o, y_path, z_path, spec_path);
        }
        if (*select) {
            return cmd_select(inv, o, y_path, z_path, grid_path);
        }
        if (*beta) {
            return cmd_beta(inv, o, spec_path, z_path, n, m, sigma_path, rho);
        }
        if (*simulate) {
            return cmd_simulate(inv, o, resolve_plan(preset_name, config_path, o, *simulate, replications),
                                config_path);
        }
        if (*generate) {
            return cmd_generate(inv, o, resolve_plan(preset_name, config_path, o, *generate, 0), config_path, n,
                                rho, replicate);
        }
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return is_numerical(e.code()) ? kExitNumerical : kExitInput;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    err << "internal error: no command ran\n";
    return kExitInternal;
}

} // namespace sur::cli
