#include "psw/analysis.hpp"

#include "psw/csv.hpp"
#include "psw/errors.hpp"
#include "psw/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <ostream>

namespace psw {

namespace {

constexpr Level kLevels[3] = {Level::One, Level::Zero, Level::Contrast};

std::vector<ResultRow> failed_rows(const std::string& subgroup, const MethodSpec& method,
                                   const std::string& why) {
    std::vector<ResultRow> rows;
    for (Level l : kLevels) {
        ResultRow r;
        r.estimand = {subgroup, l};
        r.method = method;
        r.estimate = r.se = r.ci_lower = r.ci_upper = r.p_value = std::nan("");
        r.status = "failed: " + why;
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<ResultRow> subgroup_rows(const TrialDataset& data, const AnalysisOptions& options,
                                     const MethodSpec& method, const std::string& subgroup,
                                     std::uint64_t stream_seed) {
    std::vector<ResultRow> rows;
    auto add = [&](Level l, double est, double se, const std::string& how, int failures,
                   const std::pair<double, double>* percentile) {
        auto e = make_subgroup_estimate({subgroup, l}, method, est, se, options.alpha, how);
        ResultRow r;
        r.estimand = e.estimand;
        r.method = method;
        r.estimate = e.estimate;
        r.se = e.se;
        r.ci_lower = percentile ? percentile->first : e.ci_lower;
        r.ci_upper = percentile ? percentile->second : e.ci_upper;
        r.p_value = e.p_value;
        r.variance_method = how;
        r.bootstrap_failures = failures;
        rows.push_back(std::move(r));
    };

    if (options.variance == VarianceMethod::Sandwich) {
        const auto cov = sandwich_effects(data, method, {subgroup}).front();
        const double hte_var = cov.covariance(0, 0) + cov.covariance(1, 1) - 2.0 * cov.covariance(0, 1);
        add(Level::One, cov.effects.level1, cov.se(Level::One), "sandwich", 0, nullptr);
        add(Level::Zero, cov.effects.level0, cov.se(Level::Zero), "sandwich", 0, nullptr);
        add(Level::Contrast, cov.effects.contrast(), std::sqrt(std::max(0.0, hte_var)), "sandwich", 0, nullptr);
        return rows;
    }

    const auto effects = estimate_effects(data, method, {subgroup}).front();
    std::vector<EstimandSpec> targets;
    for (Level l : kLevels) targets.push_back({subgroup, l});
    BootstrapOptions bo;
    bo.replicates = options.bootstrap_replicates;
    bo.seed = stream_seed;
    bo.threads = options.threads;
    const auto boot = bootstrap(data, method, targets, bo);
    const std::string how = "bootstrap(" + std::to_string(options.bootstrap_replicates) + ")";
    std::vector<std::pair<double, double>> pct;
    if (options.ci == CiKind::Percentile) pct = boot.percentile_ci(options.alpha);
    for (std::size_t k = 0; k < 3; ++k) {
        add(kLevels[k], effects.value(kLevels[k]), boot.se[k], how, boot.failures,
            pct.empty() ? nullptr : &pct[k]);
    }
    return rows;
}

} // namespace

std::vector<ResultRow> analyze_dataset(const TrialDataset& data, const AnalysisOptions& options,
                                       std::uint64_t dataset_index) {
    if (options.methods.empty()) throw InvalidInput("no methods configured");
    const auto subgroups = options.subgroups.empty() ? data.subgroup_names() : options.subgroups;
    if (subgroups.empty()) throw InvalidInput("no subgroups configured and the dataset has none");
    for (const auto& s : subgroups) data.subgroup_index(s);

    const std::size_t n_sub = subgroups.size();
    std::vector<std::vector<ResultRow>> blocks(options.methods.size() * n_sub);
    for (std::size_t m = 0; m < options.methods.size(); ++m) {
        for (std::size_t r = 0; r < n_sub; ++r) {
            const auto& method = options.methods[m];
            const auto seed = make_stream(options.seed, dataset_index, (m << 20) | r)();
            try {
                blocks[m * n_sub + r] = subgroup_rows(data, options, method, subgroups[r], seed);
            } catch (const EstimationError& e) {
                blocks[m * n_sub + r] = failed_rows(subgroups[r], method, e.what());
            }
        }
    }
    std::vector<ResultRow> rows;
    for (auto& b : blocks) std::move(b.begin(), b.end(), std::back_inserter(rows));
    return rows;
}

AnalysisReport analyze(const std::vector<TrialDataset>& datasets, const AnalysisOptions& options) {
    if (datasets.empty()) throw InvalidInput("at least one dataset is required");
    AnalysisReport report;
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        report.per_dataset.push_back(analyze_dataset(datasets[d], options, d));
    }
    if (datasets.size() == 1) {
        report.rows = report.per_dataset.front();
        return report;
    }
    report.pooled = true;
    const auto& first = report.per_dataset.front();
    for (std::size_t i = 0; i < first.size(); ++i) {
        std::vector<double> est, var;
        std::string failure;
        for (std::size_t d = 0; d < report.per_dataset.size(); ++d) {
            const auto& row = report.per_dataset[d][i];
            if (!row.ok()) {
                failure = "dataset " + std::to_string(d + 1) + " " + row.status;
                break;
            }
            est.push_back(row.estimate);
            var.push_back(row.se * row.se);
        }
        if (!failure.empty()) {
            auto failed = failed_rows(first[i].estimand.subgroup, first[i].method, failure);
            auto row = failed[static_cast<std::size_t>(first[i].estimand.level)];
            report.rows.push_back(row);
            report.warnings.push_back(label(first[i].estimand) + " " + first[i].method.name() +
                                      ": not pooled, " + failure);
            continue;
        }
        const auto pooled = pool_rubin(est, var);
        const auto e = make_subgroup_estimate(first[i].estimand, first[i].method, pooled.estimate,
                                              pooled.se(), options.alpha, "rubin");
        ResultRow r;
        r.estimand = e.estimand;
        r.method = e.method;
        r.estimate = e.estimate;
        r.se = e.se;
        r.ci_lower = e.ci_lower;
        r.ci_upper = e.ci_upper;
        r.p_value = e.p_value;
        r.variance_method = "rubin(m=" + std::to_string(datasets.size()) + ")";
        report.rows.push_back(std::move(r));
    }
    return report;
}

namespace {

nlohmann::json num(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

nlohmann::json rows_json(const std::vector<ResultRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
        out.push_back({{"estimand", label(r.estimand)},
                       {"subgroup", r.estimand.subgroup},
                       {"level", to_string(r.estimand.level)},
                       {"method", r.method.name()},
                       {"approach", to_string(r.method.approach)},
                       {"estimate", num(r.estimate)},
                       {"se", num(r.se)},
                       {"ci_lo", num(r.ci_lower)},
                       {"ci_hi", num(r.ci_upper)},
                       {"p", num(r.p_value)},
                       {"variance", r.variance_method},
                       {"bootstrap_failures", r.bootstrap_failures},
                       {"status", r.status}});
    }
    return out;
}

} // namespace

nlohmann::json to_json(const AnalysisReport& report) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& rows : report.per_dataset) per.push_back(rows_json(rows));
    return {{"pooled", report.pooled},
            {"results", rows_json(report.rows)},
            {"per_dataset", per},
            {"warnings", report.warnings}};
}

void write_forest_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
    out << "estimand,method,estimate,se,ci_lo,ci_hi,p,status\n";
    for (const auto& r : rows) {
        out << csv_field(label(r.estimand)) << ',' << csv_field(r.method.name()) << ','
            << format_double(r.estimate) << ',' << format_double(r.se) << ',' << format_double(r.ci_lower)
            << ',' << format_double(r.ci_upper) << ',' << format_double(r.p_value) << ','
            << csv_field(r.status) << '\n';
    }
}

std::vector<BalanceTable> balance_report(const TrialDataset& data, const BalanceOptions& options) {
    const auto subgroups = options.subgroups.empty() ? data.subgroup_names() : options.subgroups;
    for (const auto& s : subgroups) data.subgroup_index(s);
    std::vector<BalanceTable> tables;
    tables.push_back(connect_s(data, BalanceWeights{}, subgroups, options.levels, options.denominator));
    for (const auto& method : options.methods) {
        if (method.kind == MethodKind::Unadjusted) continue;
        try {
            const auto w = balance_weights(data, method, subgroups);
            tables.push_back(connect_s(data, w, subgroups, options.levels, options.denominator));
        } catch (const EstimationError& e) {
            BalanceTable t;
            t.scheme = method.name();
            t.covariates = data.covariate_names();
            for (const auto& s : subgroups) {
                for (int level : options.levels) {
                    BalanceRow row;
                    row.cohort = Cohort{s, level};
                    row.label = row.cohort.label();
                    row.n = static_cast<Eigen::Index>(row.cohort.selector(data).sum());
                    row.flagged = true;
                    row.note = e.what();
                    t.rows.push_back(std::move(row));
                }
            }
            BalanceRow overall;
            overall.cohort = Cohort::overall();
            overall.label = "Overall";
            overall.n = data.size();
            overall.flagged = true;
            overall.note = e.what();
            t.rows.push_back(std::move(overall));
            t.warnings.push_back(method.name() + ": " + e.what());
            tables.push_back(std::move(t));
        }
    }
    return tables;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open '" + path + "'");
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 14];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

std::string version() { return "0.1.0"; }

} // namespace psw
