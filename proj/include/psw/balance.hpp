#pragma once

#include "psw/data.hpp"
#include "psw/estimators.hpp"
#include "psw/propensity.hpp"

#include <json.hpp>

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace psw {

/// Units with S_r = level, or every unit when `subgroup` is empty.
struct Cohort {
    std::string subgroup;
    int level = 1;

    static Cohort overall() { return Cohort{"", 1}; }
    bool is_overall() const { return subgroup.empty(); }
    std::string label() const;
    Eigen::VectorXd selector(const TrialDataset& data) const;
};

enum class SmdDenominator {
    UnweightedPooled,  // sqrt((s1^2 + s0^2) / 2) from unweighted arm variances
    WeightedPooled,    // same formula with weighted arm variances
};

/// Absolute (weighted) standardized mean difference of `covariate` between
/// arms within the cohort. Zero pooled SD gives +inf for a nonzero mean
/// difference and 0 otherwise. Throws EstimationError on an empty arm.
double smd(const TrialDataset& data, const WeightVector* weights, const Cohort& cohort,
           const Eigen::VectorXd& covariate, SmdDenominator denominator = SmdDenominator::UnweightedPooled);

double smd(const TrialDataset& data, const WeightVector* weights, const Cohort& cohort,
           std::string_view covariate, SmdDenominator denominator = SmdDenominator::UnweightedPooled);

/// |Hajek-weighted treated mean - control mean| of `column` within the cohort
/// under overlap weights from `fit`. Vanishes at the logistic MLE when the
/// column and its cohort interaction are in the propensity model.
double exact_balance_residual(const TrialDataset& data, const PropensityFit& fit,
                              const Cohort& cohort, const Eigen::VectorXd& column);

double exact_balance_residual(const TrialDataset& data, const PropensityFit& fit,
                              const Cohort& cohort, std::string_view covariate);

// -------------------------------------------------------------------------
// Connect-S table
// -------------------------------------------------------------------------

struct BalanceRow {
    Cohort cohort;
    std::string label;
    Eigen::Index n = 0;
    bool flagged = false;    // cells could not be computed (e.g. empty arm)
    std::string note;
    std::vector<double> smd; // one per covariate; empty when flagged
};

struct BalanceTable {
    std::string scheme;     // "unweighted", "IPW-Main", "OW-Full", ...
    std::vector<std::string> covariates;
    std::vector<BalanceRow> rows;
    std::vector<std::string> warnings;

    const BalanceRow& row(const std::string& label) const;
    double max_smd() const;
};

/// "<0.1", "0.1-0.2" or ">0.2".
std::string severity(double smd);

/// Weights feeding a Connect-S table. An empty `scheme` or "unweighted" means
/// raw means; otherwise every requested subgroup needs an entry in `per_subgroup`.
struct BalanceWeights {
    std::string scheme = "unweighted";
    std::map<std::string, WeightVector> per_subgroup;
    std::optional<WeightVector> overall;

    bool weighted() const { return !(scheme.empty() || scheme == "unweighted"); }
};

/// One-at-a-time weights for each subgroup plus an overall fit on X alone.
BalanceWeights balance_weights(const TrialDataset& data, const MethodSpec& method,
                               const std::vector<std::string>& subgroups);

/// Subgroup x covariate grid of absolute SMDs plus an "Overall" row. Rows are
/// emitted for each subgroup at each of `levels`.
BalanceTable connect_s(const TrialDataset& data, const BalanceWeights& weights,
                       const std::vector<std::string>& subgroups,
                       const std::vector<int>& levels = {1},
                       SmdDenominator denominator = SmdDenominator::UnweightedPooled);

/// Long format: subgroup,level,covariate,scheme,smd,n,severity.
void write_balance_csv(std::ostream& out, const std::vector<BalanceTable>& tables);
nlohmann::json balance_json(const BalanceTable& table);

} // namespace psw
