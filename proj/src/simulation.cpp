#include "psw/simulation.hpp"

#include "psw/csv.hpp"
#include "psw/errors.hpp"
#include "psw/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

namespace psw {

namespace {

constexpr Level kLevels[3] = {Level::One, Level::Zero, Level::Contrast};
constexpr std::uint64_t kDataTag = 0;
constexpr std::uint64_t kBootstrapTag = 1;

std::string subgroup_name(int r) { return "s" + std::to_string(r + 1); }
std::string covariate_name(int j) { return "x" + std::to_string(j + 1); }

double sorted_sum(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

nlohmann::json number_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

nlohmann::json rows_of(const Eigen::MatrixXd& m) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(to_vector(m.row(r).transpose()));
    return out;
}

} // namespace

// -------------------------------------------------------------------------
// Configuration
// -------------------------------------------------------------------------

Eigen::VectorXd ScenarioConfig::covariate_means() const {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(num_covariates);
    for (int j = num_covariates / 2; j < num_covariates; ++j) mu(j) = binary_success;
    return mu;
}

ScenarioConfig make_scenario(const ScenarioSpec& spec) {
    if (spec.scenario < 1 || spec.scenario > 4) {
        throw InvalidInput("scenario must be 1, 2, 3 or 4, got " + std::to_string(spec.scenario));
    }
    ScenarioConfig c;
    c.scenario = spec.scenario;
    c.n = spec.n;
    c.nsim = spec.nsim;
    c.seed = spec.seed;
    c.alpha = spec.alpha;
    c.num_subgroups = spec.scenario == 4 ? 6 : 1;
    c.active_subgroups = spec.scenario == 4 ? spec.m : 1;
    if (c.active_subgroups < 0 || c.active_subgroups > c.num_subgroups) {
        throw InvalidInput("active subgroups M must lie in [0, " + std::to_string(c.num_subgroups) + "]");
    }
    c.heterogeneous = spec.scenario == 2 || (spec.scenario == 4 && spec.heterogeneous);
    c.misspecified = spec.scenario == 3 || (spec.scenario == 4 && spec.misspecified);

    const int J = c.num_covariates;
    const int R = c.num_subgroups;
    c.beta0 = 0.0;
    c.beta1 = Eigen::VectorXd::Constant(J, std::sqrt(c.sigma_y / J));
    c.beta2 = Eigen::VectorXd::Zero(R);
    c.beta3 = spec.beta3;
    c.beta4 = Eigen::MatrixXd::Zero(R, J);
    c.beta5 = Eigen::VectorXd::Zero(R);
    c.beta6 = Eigen::VectorXd::Zero(J);
    c.beta7 = Eigen::MatrixXd::Zero(R, J);
    c.beta8 = Eigen::VectorXd::Zero(J - 1);
    for (int r = 0; r < c.active_subgroups; ++r) {
        c.beta2(r) = 0.5;
        c.beta4.row(r).setConstant(0.25);
        c.beta5(r) = spec.beta5;
        if (c.heterogeneous) c.beta7.row(r).setConstant(0.25);
    }
    if (c.heterogeneous) c.beta6.setConstant(0.5);
    if (c.misspecified) c.beta8.setConstant(std::sqrt(c.sigma_y / (J - 1)));
    validate(c);
    return c;
}

void validate(const ScenarioConfig& c) {
    const int J = c.num_covariates;
    const int R = c.num_subgroups;
    if (c.n < 4) throw InvalidInput("n must be at least 4");
    if (J < 2 || J % 2 != 0) throw InvalidInput("number of covariates must be even and at least 2");
    if (R < 1) throw InvalidInput("at least one subgroup is required");
    if (c.nsim < 1) throw InvalidInput("nsim must be positive");
    auto rate = [](double p, const char* what) {
        if (!(p > 0.0 && p < 1.0)) throw InvalidInput(std::string(what) + " must lie in (0, 1)");
    };
    rate(c.prevalence, "subgroup prevalence");
    rate(c.binary_success, "binary covariate probability");
    rate(c.randomization, "randomization probability");
    rate(c.alpha, "alpha");
    if (!(c.sigma_y > 0.0)) throw InvalidInput("sigma_y must be positive");
    auto dims = [](Eigen::Index rows, Eigen::Index cols, Eigen::Index want_rows, Eigen::Index want_cols,
                   const char* what) {
        if (rows != want_rows || cols != want_cols) {
            throw InvalidInput(std::string(what) + " has shape " + std::to_string(rows) + "x" +
                               std::to_string(cols) + ", expected " + std::to_string(want_rows) + "x" +
                               std::to_string(want_cols));
        }
    };
    dims(c.beta1.size(), 1, J, 1, "beta1");
    dims(c.beta2.size(), 1, R, 1, "beta2");
    dims(c.beta4.rows(), c.beta4.cols(), R, J, "beta4");
    dims(c.beta5.size(), 1, R, 1, "beta5");
    dims(c.beta6.size(), 1, J, 1, "beta6");
    dims(c.beta7.rows(), c.beta7.cols(), R, J, "beta7");
    dims(c.beta8.size(), 1, J - 1, 1, "beta8");
}

nlohmann::json to_json(const ScenarioConfig& c) {
    return {{"scenario", c.scenario},
            {"n", c.n},
            {"num_covariates", c.num_covariates},
            {"num_subgroups", c.num_subgroups},
            {"active_subgroups", c.active_subgroups},
            {"prevalence", c.prevalence},
            {"binary_success", c.binary_success},
            {"randomization", c.randomization},
            {"sigma_y", c.sigma_y},
            {"heterogeneous", c.heterogeneous},
            {"misspecified", c.misspecified},
            {"beta0", c.beta0},
            {"beta1", to_vector(c.beta1)},
            {"beta2", to_vector(c.beta2)},
            {"beta3", c.beta3},
            {"beta4", rows_of(c.beta4)},
            {"beta5", to_vector(c.beta5)},
            {"beta6", to_vector(c.beta6)},
            {"beta7", rows_of(c.beta7)},
            {"beta8", to_vector(c.beta8)},
            {"nsim", c.nsim},
            {"seed", c.seed},
            {"alpha", c.alpha}};
}

// -------------------------------------------------------------------------
// Data generation
// -------------------------------------------------------------------------

double SubgroupTruth::value(Level level) const {
    switch (level) {
    case Level::One: return level1;
    case Level::Zero: return level0;
    case Level::Contrast: return contrast();
    }
    return 0.0;
}

std::vector<SubgroupTruth> true_effects(const ScenarioConfig& c) {
    const Eigen::VectorXd mu = c.covariate_means();
    const double base = c.beta3 + c.beta6.dot(mu);
    std::vector<SubgroupTruth> out;
    for (int r = 0; r < c.num_subgroups; ++r) {
        auto at = [&](double level) {
            double tau = base;
            for (int q = 0; q < c.num_subgroups; ++q) {
                const double p = q == r ? level : c.prevalence;
                tau += p * (c.beta5(q) + c.beta7.row(q).dot(mu));
            }
            return tau;
        };
        out.push_back({subgroup_name(r), at(1.0), at(0.0)});
    }
    return out;
}

double outcome_mean(const ScenarioConfig& c, const Eigen::VectorXd& x, const Eigen::VectorXd& s, double z) {
    double m = c.beta0 + c.beta1.dot(x) + c.beta2.dot(s) + c.beta3 * z + z * c.beta5.dot(s) +
               z * c.beta6.dot(x);
    for (int r = 0; r < c.num_subgroups; ++r) {
        if (s(r) == 0.0) continue;
        m += s(r) * (c.beta4.row(r).dot(x) + z * c.beta7.row(r).dot(x));
    }
    for (int j = 0; j + 1 < c.num_covariates; ++j) m += c.beta8(j) * x(j) * x(j + 1);
    return m;
}

GeneratedTrial generate(const ScenarioConfig& c, std::uint64_t replicate) {
    validate(c);
    const int J = c.num_covariates;
    const int R = c.num_subgroups;
    auto rng = make_stream(c.seed, replicate, kDataTag);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution sub(c.prevalence), bin(c.binary_success), treat(c.randomization);

    DatasetParts parts;
    parts.outcome.resize(c.n);
    parts.treatment.resize(c.n);
    parts.covariates.resize(c.n, J);
    parts.subgroups.resize(c.n, R);
    for (int j = 0; j < J; ++j) parts.covariate_names.push_back(covariate_name(j));
    for (int r = 0; r < R; ++r) parts.subgroup_names.push_back(subgroup_name(r));
    parts.known_propensity = c.randomization;

    Eigen::VectorXd x(J), s(R);
    for (Eigen::Index i = 0; i < c.n; ++i) {
        for (int r = 0; r < R; ++r) s(r) = sub(rng) ? 1.0 : 0.0;
        for (int j = 0; j < J / 2; ++j) x(j) = normal(rng);
        for (int j = J / 2; j < J; ++j) x(j) = bin(rng) ? 1.0 : 0.0;
        const double z = treat(rng) ? 1.0 : 0.0;
        const double eps = c.sigma_y * normal(rng);
        parts.outcome(i) = outcome_mean(c, x, s, z) + eps;
        parts.treatment(i) = z;
        parts.covariates.row(i) = x.transpose();
        parts.subgroups.row(i) = s.transpose();
    }
    return {TrialDataset(std::move(parts)), true_effects(c)};
}

// -------------------------------------------------------------------------
// Replicates
// -------------------------------------------------------------------------

ReplicateRecord run_replicate(const ScenarioConfig& c, const SimulationOptions& options,
                              std::uint64_t replicate) {
    const auto trial = generate(c, replicate);
    const auto& data = trial.data;
    const auto& subgroups = data.subgroup_names();
    const std::size_t R = subgroups.size();
    const std::size_t M = options.methods.size();

    ReplicateRecord rec;
    rec.cells.resize(M * R * 3);
    rec.errors.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        const auto& method = options.methods[m];
        try {
            std::vector<double> est(R * 3), se(R * 3);
            if (options.variance == VarianceMethod::Sandwich) {
                const auto cov = sandwich_effects(data, method, subgroups);
                for (std::size_t r = 0; r < R; ++r) {
                    for (int k = 0; k < 3; ++k) {
                        est[r * 3 + k] = cov[r].effects.value(kLevels[k]);
                        se[r * 3 + k] = cov[r].se(kLevels[k]);
                    }
                }
            } else {
                const auto effects = estimate_effects(data, method, subgroups);
                std::vector<EstimandSpec> targets;
                for (const auto& s : subgroups) {
                    for (Level l : kLevels) targets.push_back({s, l});
                }
                BootstrapOptions bo;
                bo.replicates = options.bootstrap_replicates;
                bo.seed = make_stream(c.seed, replicate, kBootstrapTag + m)();
                bo.threads = 1;
                const auto boot = bootstrap(data, method, targets, bo);
                for (std::size_t r = 0; r < R; ++r) {
                    for (int k = 0; k < 3; ++k) {
                        est[r * 3 + k] = effects[r].value(kLevels[k]);
                        se[r * 3 + k] = boot.se[r * 3 + static_cast<std::size_t>(k)];
                    }
                }
            }
            for (std::size_t r = 0; r < R; ++r) {
                for (int k = 0; k < 3; ++k) {
                    const std::size_t i = r * 3 + static_cast<std::size_t>(k);
                    const auto w = wald(est[i], se[i], c.alpha);
                    const double truth = trial.truths[r].value(kLevels[k]);
                    auto& cell = rec.cells[(m * R + r) * 3 + static_cast<std::size_t>(k)];
                    cell.ok = std::isfinite(est[i]) && std::isfinite(se[i]);
                    cell.estimate = est[i];
                    cell.se = se[i];
                    cell.reject = w.reject;
                    cell.covered = w.lower <= truth && truth <= w.upper;
                }
            }
        } catch (const EstimationError& e) {
            rec.errors[m] = e.what();
        } catch (const InvalidInput& e) {
            rec.errors[m] = e.what();
        }
    }
    return rec;
}

// -------------------------------------------------------------------------
// Aggregation
// -------------------------------------------------------------------------

double fwer(const std::vector<std::vector<bool>>& rejections, const std::vector<bool>& is_null) {
    if (rejections.empty()) throw InvalidInput("fwer needs at least one replicate");
    std::size_t hits = 0;
    for (const auto& row : rejections) {
        if (row.size() != is_null.size()) throw InvalidInput("fwer: rejection row length differs from null mask");
        bool any = false;
        for (std::size_t t = 0; t < row.size(); ++t) any = any || (is_null[t] && row[t]);
        hits += any ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(rejections.size());
}

const MetricRow& SimulationReport::find(const std::string& method, Approach approach,
                                        const std::string& subgroup, Level level) const {
    for (const auto& r : rows) {
        if (r.method == method && r.approach == approach && r.subgroup == subgroup && r.level == level) return r;
    }
    throw InvalidInput("no metrics for " + method + "/" + to_string(approach) + " " + subgroup + ":" +
                       to_string(level));
}

const FwerRow& SimulationReport::find_fwer(const std::string& method, Approach approach) const {
    for (const auto& r : fwer) {
        if (r.method == method && r.approach == approach) return r;
    }
    throw InvalidInput("no FWER for " + method + "/" + to_string(approach));
}

SimulationReport aggregate(const ScenarioConfig& c, const SimulationOptions& options,
                           const std::vector<ReplicateRecord>& records) {
    const auto truths = true_effects(c);
    const std::size_t R = truths.size();
    const std::size_t M = options.methods.size();

    SimulationReport report;
    report.config = c;
    report.variance = options.variance == VarianceMethod::Sandwich
                          ? "sandwich"
                          : "bootstrap(" + std::to_string(options.bootstrap_replicates) + ")";
    for (const auto& m : options.methods) report.methods.push_back(m.name() + "/" + to_string(m.approach));

    std::vector<std::string> examples;
    for (std::size_t m = 0; m < M; ++m) {
        std::vector<std::string> errs;
        for (const auto& rec : records) {
            if (!rec.errors[m].empty()) errs.push_back(rec.errors[m]);
        }
        if (!errs.empty()) {
            std::sort(errs.begin(), errs.end());
            examples.push_back(report.methods[m] + ": " + errs.front());
        }
    }
    report.failure_examples = examples;

    // Empirical variance of UNADJ per (subgroup, estimand), for relative efficiency.
    auto unadj_index = std::find_if(options.methods.begin(), options.methods.end(),
                                    [](const MethodSpec& m) { return m.kind == MethodKind::Unadjusted; });

    std::vector<MetricRow> rows(M * R * 3);
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t r = 0; r < R; ++r) {
            for (int k = 0; k < 3; ++k) {
                const std::size_t idx = (m * R + r) * 3 + static_cast<std::size_t>(k);
                auto& row = rows[idx];
                row.method = options.methods[m].name();
                row.approach = options.methods[m].approach;
                row.subgroup = truths[r].subgroup;
                row.level = kLevels[k];
                row.truth = truths[r].value(kLevels[k]);

                std::vector<double> est, se;
                int reject = 0, covered = 0;
                for (const auto& rec : records) {
                    const auto& cell = rec.cells[idx];
                    if (!cell.ok) {
                        ++row.failures;
                        continue;
                    }
                    est.push_back(cell.estimate);
                    se.push_back(cell.se);
                    reject += cell.reject ? 1 : 0;
                    covered += cell.covered ? 1 : 0;
                }
                row.replicates = static_cast<int>(est.size());
                const double nan = std::numeric_limits<double>::quiet_NaN();
                if (est.empty()) {
                    row.mean_estimate = row.empirical_sd = row.mean_se = row.bias = nan;
                    row.rejection_rate = row.coverage = row.relative_efficiency = nan;
                    continue;
                }
                const double n = static_cast<double>(est.size());
                row.mean_estimate = sorted_sum(est) / n;
                std::vector<double> dev2(est.size());
                for (std::size_t i = 0; i < est.size(); ++i) {
                    dev2[i] = (est[i] - row.mean_estimate) * (est[i] - row.mean_estimate);
                }
                row.empirical_sd = est.size() > 1 ? std::sqrt(sorted_sum(dev2) / (n - 1.0)) : nan;
                row.mean_se = sorted_sum(se) / n;
                row.bias = row.mean_estimate - row.truth;
                row.rejection_rate = reject / n;
                row.coverage = covered / n;
            }
        }
    }
    for (std::size_t idx = 0; idx < rows.size(); ++idx) {
        auto& row = rows[idx];
        if (unadj_index == options.methods.end()) {
            row.relative_efficiency = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        const auto u = static_cast<std::size_t>(unadj_index - options.methods.begin());
        const auto& base = rows[u * R * 3 + idx % (R * 3)];
        row.relative_efficiency = (base.empirical_sd * base.empirical_sd) / (row.empirical_sd * row.empirical_sd);
    }
    report.rows = std::move(rows);

    // FWER over the HTE tests whose true contrast is zero.
    std::vector<bool> is_null(R);
    int null_tests = 0;
    for (std::size_t r = 0; r < R; ++r) {
        is_null[r] = std::abs(truths[r].contrast()) < 1e-12;
        null_tests += is_null[r] ? 1 : 0;
    }
    for (std::size_t m = 0; m < M; ++m) {
        FwerRow f;
        f.method = options.methods[m].name();
        f.approach = options.methods[m].approach;
        f.tests = null_tests;
        std::vector<std::vector<bool>> rej;
        for (const auto& rec : records) {
            std::vector<bool> row(R);
            bool ok = true;
            for (std::size_t r = 0; r < R; ++r) {
                const auto& cell = rec.cells[(m * R + r) * 3 + 2];
                ok = ok && cell.ok;
                row[r] = cell.reject;
            }
            if (ok) rej.push_back(std::move(row));
        }
        f.replicates = static_cast<int>(rej.size());
        f.fwer = rej.empty() || null_tests == 0 ? std::numeric_limits<double>::quiet_NaN() : fwer(rej, is_null);
        report.fwer.push_back(std::move(f));
    }
    return report;
}

SimulationReport run_scenario(const ScenarioConfig& c, const SimulationOptions& options) {
    validate(c);
    if (options.methods.empty()) throw InvalidInput("no methods to simulate");
    std::vector<ReplicateRecord> records(static_cast<std::size_t>(c.nsim));
    parallel_for(records.size(), options.threads,
                 [&](std::size_t i) { records[i] = run_replicate(c, options, i); });
    auto report = aggregate(c, options, records);
    for (std::size_t m = 0; m < options.methods.size(); ++m) {
        const bool all_failed = std::all_of(records.begin(), records.end(),
                                            [&](const ReplicateRecord& r) { return !r.errors[m].empty(); });
        if (all_failed) {
            throw EstimationError("every replicate failed for " + report.methods[m] + ": " +
                                  records.front().errors[m]);
        }
    }
    return report;
}

nlohmann::json to_json(const SimulationReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"method", r.method},
                        {"approach", to_string(r.approach)},
                        {"subgroup", r.subgroup},
                        {"estimand", to_string(r.level)},
                        {"truth", r.truth},
                        {"replicates", r.replicates},
                        {"failures", r.failures},
                        {"mean_estimate", number_or_null(r.mean_estimate)},
                        {"empirical_sd", number_or_null(r.empirical_sd)},
                        {"mean_se", number_or_null(r.mean_se)},
                        {"bias", number_or_null(r.bias)},
                        {"relative_efficiency", number_or_null(r.relative_efficiency)},
                        {"rejection_rate", number_or_null(r.rejection_rate)},
                        {"coverage", number_or_null(r.coverage)}});
    }
    nlohmann::json fw = nlohmann::json::array();
    for (const auto& f : report.fwer) {
        fw.push_back({{"method", f.method},
                      {"approach", to_string(f.approach)},
                      {"replicates", f.replicates},
                      {"null_tests", f.tests},
                      {"fwer", number_or_null(f.fwer)}});
    }
    return {{"config", to_json(report.config)},
            {"variance", report.variance},
            {"methods", report.methods},
            {"metrics", rows},
            {"fwer", fw},
            {"failure_examples", report.failure_examples}};
}

void write_report_csv(std::ostream& out, const SimulationReport& report) {
    out << "method,approach,subgroup,estimand,truth,replicates,failures,mean_estimate,empirical_sd,"
           "mean_se,bias,relative_efficiency,rejection_rate,coverage\n";
    for (const auto& r : report.rows) {
        out << csv_field(r.method) << ',' << to_string(r.approach) << ',' << csv_field(r.subgroup) << ','
            << to_string(r.level) << ',' << format_double(r.truth) << ',' << r.replicates << ','
            << r.failures << ',' << format_double(r.mean_estimate) << ',' << format_double(r.empirical_sd)
            << ',' << format_double(r.mean_se) << ',' << format_double(r.bias) << ','
            << format_double(r.relative_efficiency) << ',' << format_double(r.rejection_rate) << ','
            << format_double(r.coverage) << '\n';
    }
}

} // namespace psw
