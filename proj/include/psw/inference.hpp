#pragma once

#include "psw/data.hpp"
#include "psw/estimators.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace psw {

// -------------------------------------------------------------------------
// Normal-reference Wald inference
// -------------------------------------------------------------------------

double normal_cdf(double x);
double normal_quantile(double p);

struct WaldResult {
    double lower = 0.0;
    double upper = 0.0;
    double p_value = 1.0;
    bool reject = false;
};

/// Two-sided test of estimate = 0 with CI estimate -/+ z_{1-alpha/2} se.
/// se = 0 gives p = 1 for a zero estimate and p = 0 otherwise.
WaldResult wald(double estimate, double se, double alpha);

enum class VarianceMethod { Sandwich, Bootstrap };

struct SubgroupEstimate {
    EstimandSpec estimand;
    MethodSpec method;
    double estimate = 0.0;
    double se = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    double p_value = 1.0;
    std::string variance_method;   // "sandwich", "bootstrap(B)", "rubin"
};

SubgroupEstimate make_subgroup_estimate(const EstimandSpec& estimand, const MethodSpec& method,
                                        double estimate, double se, double alpha,
                                        std::string variance_method);

// -------------------------------------------------------------------------
// Sandwich
// -------------------------------------------------------------------------

/// Effects for one subgroup plus the joint covariance of (level-1, level-0).
struct EffectsCovariance {
    SubgroupEffects effects;
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();

    double variance(Level level) const;
    double se(Level level) const;
};

/// Stacked estimating-equation sandwich. Weighting methods stack the logistic
/// score (when the propensity is fitted) with the four weighted arm means;
/// ANCOVA-S stacks the OLS normal equations with the two level averages of the
/// predicted individual effects. UNADJ and known-propensity weights have no
/// propensity block. Fitted models get an HC1-style factor per subgroup level,
/// n_L / (n_L - q_L), with q_L the leverage mass of the fitted model on the
/// level's rows (doubled for propensity models: one implied regression per arm).
std::vector<EffectsCovariance> sandwich_effects(const TrialDataset& data, const MethodSpec& method,
                                                const std::vector<std::string>& subgroups);

double sandwich_se(const TrialDataset& data, const MethodSpec& method, const EstimandSpec& target);

// -------------------------------------------------------------------------
// Bootstrap
// -------------------------------------------------------------------------

enum class CiKind { Normal, Percentile };

struct BootstrapOptions {
    int replicates = 1000;
    std::uint64_t seed = 1;
    int threads = 1;
    /// Fraction of failed replicates above which the bootstrap fails.
    double max_failure_rate = 0.05;
};

struct BootstrapResult {
    std::vector<EstimandSpec> targets;
    /// One row per successful replicate (in replicate order), one column per target.
    Eigen::MatrixXd estimates;
    std::vector<double> se;
    int requested = 0;
    int failures = 0;

    /// Empirical alpha/2 and 1-alpha/2 quantiles of each target's replicates.
    std::vector<std::pair<double, double>> percentile_ci(double alpha) const;
};

/// Nonparametric bootstrap: resample N rows with replacement and re-run the
/// whole pipeline (design, propensity fit, weights, estimate) per replicate.
/// Replicate b draws from make_stream(seed, b), so results do not depend on
/// the thread count. Failed replicates are dropped and counted.
BootstrapResult bootstrap(const TrialDataset& data, const MethodSpec& method,
                          const std::vector<EstimandSpec>& targets, const BootstrapOptions& options);

struct BootstrapSe {
    double se = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    int failures = 0;
};

BootstrapSe bootstrap_se(const TrialDataset& data, const MethodSpec& method,
                         const EstimandSpec& target, int replicates, std::uint64_t seed,
                         double alpha = 0.05, CiKind ci = CiKind::Normal, int threads = 1);

// -------------------------------------------------------------------------
// Rubin's rules
// -------------------------------------------------------------------------

struct PooledEstimate {
    std::vector<double> estimates;
    std::vector<double> variances;
    double estimate = 0.0;
    double within = 0.0;    // mean within-imputation variance
    double between = 0.0;   // sample variance of the estimates (divisor m - 1)
    double total = 0.0;     // within + (1 + 1/m) between

    double se() const;
};

PooledEstimate pool_rubin(const std::vector<double>& estimates, const std::vector<double>& variances);

} // namespace psw
