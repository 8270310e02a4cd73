#pragma once

#include "psw/data.hpp"
#include "psw/estimators.hpp"
#include "psw/inference.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace psw {

// -------------------------------------------------------------------------
// Scenario configuration
// -------------------------------------------------------------------------

/// Outcome model
///   E[Y|Z,S,X] = b0 + b1'X + b2'S + b3 Z + sum_r S_r b4_r'X + Z b5'S
///              + Z b6'X + Z sum_r S_r b7_r'X + b8'X_int,
/// X_int = (X1 X2, ..., X_{J-1} X_J), with Gaussian noise sd sigma_y.
/// X holds J/2 standard normal columns followed by J/2 Bernoulli columns.
struct ScenarioConfig {
    int scenario = 1;
    Eigen::Index n = 1000;
    int num_covariates = 8;        // J
    int num_subgroups = 1;         // R
    int active_subgroups = 1;      // M: subgroups with nonzero b2, b4, b5 (and b7)
    double prevalence = 0.25;      // P(S_r = 1)
    double binary_success = 0.3;   // P(binary X = 1)
    double randomization = 0.5;    // P(Z = 1)
    double sigma_y = 1.0;
    bool heterogeneous = false;    // b6, b7 nonzero
    bool misspecified = false;     // b8 nonzero

    double beta0 = 0.0;
    Eigen::VectorXd beta1;         // J
    Eigen::VectorXd beta2;         // R
    double beta3 = 0.0;
    Eigen::MatrixXd beta4;         // R x J
    Eigen::VectorXd beta5;         // R
    Eigen::VectorXd beta6;         // J
    Eigen::MatrixXd beta7;         // R x J
    Eigen::VectorXd beta8;         // J - 1

    int nsim = 1000;
    std::uint64_t seed = 1;
    double alpha = 0.05;

    /// E[X]: zeros for the continuous half, binary_success for the binary half.
    Eigen::VectorXd covariate_means() const;
};

struct ScenarioSpec {
    int scenario = 1;
    Eigen::Index n = 1000;
    int nsim = 1000;
    std::uint64_t seed = 1;
    double alpha = 0.05;
    double beta3 = -1.0;
    double beta5 = 0.5;
    int m = 1;                       // Scenario 4 only
    bool heterogeneous = false;      // Scenario 4 variants
    bool misspecified = false;       // Scenario 4 variants
};

/// Fills every coefficient for Scenarios 1-4. Nuisance coefficients use these
/// defaults: b0 = 0, b1 = sqrt(sigma_y / J) 1_J, b2_r = 0.5 and
/// b4_r = 0.25 1_J for active subgroups. Scenario 2 adds b6 = 0.5 1_J and
/// b7_r = 0.25 1_J; Scenario 3 adds b8 = sqrt(sigma_y / (J - 1)) 1_{J-1}.
ScenarioConfig make_scenario(const ScenarioSpec& spec);

/// Throws InvalidInput on inconsistent dimensions or out-of-range rates.
void validate(const ScenarioConfig& config);

nlohmann::json to_json(const ScenarioConfig& config);

// -------------------------------------------------------------------------
// Data generation
// -------------------------------------------------------------------------

struct SubgroupTruth {
    std::string subgroup;
    double level1 = 0.0;
    double level0 = 0.0;

    double contrast() const { return level1 - level0; }
    double value(Level level) const;
};

/// Closed-form subgroup ATEs: the X_int terms carry no treatment interaction
/// and other subgroups enter through their prevalence.
std::vector<SubgroupTruth> true_effects(const ScenarioConfig& config);

/// Mean outcome for one unit (x: J values, s: R values).
double outcome_mean(const ScenarioConfig& config, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& s, double z);

struct GeneratedTrial {
    TrialDataset data;
    std::vector<SubgroupTruth> truths;
};

/// One simulated trial drawn from make_stream(config.seed, replicate).
GeneratedTrial generate(const ScenarioConfig& config, std::uint64_t replicate);

// -------------------------------------------------------------------------
// Running a scenario
// -------------------------------------------------------------------------

struct SimulationOptions {
    std::vector<MethodSpec> methods = standard_methods();
    VarianceMethod variance = VarianceMethod::Sandwich;
    int bootstrap_replicates = 200;
    int threads = 1;
};

/// Outcome of one method on one estimand in one replicate.
struct ReplicateCell {
    bool ok = false;
    double estimate = 0.0;
    double se = 0.0;
    bool reject = false;
    bool covered = false;
};

/// Cells indexed [method][subgroup][estimand], estimand order 1, 0, hte.
struct ReplicateRecord {
    std::vector<ReplicateCell> cells;
    std::vector<std::string> errors;   // one per method, empty when it succeeded
};

struct MetricRow {
    std::string method;
    Approach approach = Approach::OneAtATime;
    std::string subgroup;
    Level level = Level::One;
    double truth = 0.0;
    int replicates = 0;          // successful replicates
    int failures = 0;
    double mean_estimate = 0.0;
    double empirical_sd = 0.0;
    double mean_se = 0.0;
    double bias = 0.0;
    double relative_efficiency = 0.0;   // Var(UNADJ) / Var(method); NaN without UNADJ
    double rejection_rate = 0.0;
    double coverage = 0.0;
};

struct FwerRow {
    std::string method;
    Approach approach = Approach::OneAtATime;
    int replicates = 0;
    int tests = 0;               // true-null HTE tests per replicate
    double fwer = 0.0;
};

struct SimulationReport {
    ScenarioConfig config;
    std::vector<std::string> methods;   // "<name>/<approach>"
    std::string variance;
    std::vector<MetricRow> rows;
    std::vector<FwerRow> fwer;
    std::vector<std::string> failure_examples;

    const MetricRow& find(const std::string& method, Approach approach, const std::string& subgroup,
                          Level level) const;
    const FwerRow& find_fwer(const std::string& method, Approach approach) const;
};

/// Runs every estimation step for one replicate.
ReplicateRecord run_replicate(const ScenarioConfig& config, const SimulationOptions& options,
                              std::uint64_t replicate);

/// Combines replicate records into metrics. Sums run over sorted values, so
/// the result does not depend on the order of `records`.
SimulationReport aggregate(const ScenarioConfig& config, const SimulationOptions& options,
                           const std::vector<ReplicateRecord>& records);

/// Generates config.nsim replicates, estimates with every method and
/// aggregates. Deterministic for a given (config, options) and thread count.
SimulationReport run_scenario(const ScenarioConfig& config, const SimulationOptions& options);

/// Fraction of replicates with at least one rejection among true-null tests.
/// rejections: one row per replicate, one column per test.
double fwer(const std::vector<std::vector<bool>>& rejections, const std::vector<bool>& is_null);

nlohmann::json to_json(const SimulationReport& report);

/// Long format: method,approach,subgroup,estimand,truth,replicates,failures,
/// mean_estimate,empirical_sd,mean_se,bias,relative_efficiency,rejection_rate,coverage
void write_report_csv(std::ostream& out, const SimulationReport& report);

} // namespace psw
