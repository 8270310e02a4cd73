#pragma once

#include "psw/balance.hpp"
#include "psw/data.hpp"
#include "psw/estimators.hpp"
#include "psw/inference.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace psw {

struct AnalysisOptions {
    std::vector<MethodSpec> methods;          // approach carried by each MethodSpec
    std::vector<std::string> subgroups;       // empty = every dataset subgroup
    VarianceMethod variance = VarianceMethod::Bootstrap;
    int bootstrap_replicates = 1000;
    CiKind ci = CiKind::Normal;
    double alpha = 0.05;
    std::uint64_t seed = 1;
    int threads = 1;
};

/// One forest-plot row. `status` is "ok" or "failed: <reason>".
struct ResultRow {
    EstimandSpec estimand;
    MethodSpec method;
    double estimate = 0.0;
    double se = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    double p_value = 1.0;
    std::string variance_method;
    std::string status = "ok";
    int bootstrap_failures = 0;

    bool ok() const { return status == "ok"; }
};

struct AnalysisReport {
    /// Rows per dataset, each ordered method x subgroup x (1, 0, hte).
    std::vector<std::vector<ResultRow>> per_dataset;
    /// Rubin-pooled rows when there are several datasets, else a copy of per_dataset[0].
    std::vector<ResultRow> rows;
    bool pooled = false;
    std::vector<std::string> warnings;
};

/// Estimates every subgroup's level-1, level-0 and HTE effects for each
/// method on one dataset. Failures are recorded on the affected rows.
std::vector<ResultRow> analyze_dataset(const TrialDataset& data, const AnalysisOptions& options,
                                       std::uint64_t dataset_index = 0);

/// analyze_dataset per dataset, then Rubin pooling across datasets (normal
/// reference intervals from the pooled total variance).
AnalysisReport analyze(const std::vector<TrialDataset>& datasets, const AnalysisOptions& options);

nlohmann::json to_json(const AnalysisReport& report);

/// Columns: estimand,method,estimate,se,ci_lo,ci_hi,p,status.
void write_forest_csv(std::ostream& out, const std::vector<ResultRow>& rows);

struct BalanceOptions {
    std::vector<MethodSpec> methods;          // weighting methods; UNADJ entries are skipped
    std::vector<std::string> subgroups;       // empty = every dataset subgroup
    std::vector<int> levels = {1};
    SmdDenominator denominator = SmdDenominator::UnweightedPooled;
};

/// Unweighted table followed by one table per weighting method. A method
/// whose weights cannot be fitted gives a table with every row flagged.
std::vector<BalanceTable> balance_report(const TrialDataset& data, const BalanceOptions& options);

/// 64-bit FNV-1a of a file's bytes, hex encoded; used in run manifests.
std::string file_digest(const std::string& path);

std::string version();

} // namespace psw
