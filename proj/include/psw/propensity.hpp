#pragma once

#include "psw/data.hpp"
#include "psw/design.hpp"
#include "psw/errors.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace psw {

struct IrlsOptions {
    /// Convergence when max_j |score_j| / max(1, max_i |x_ij|) <= tolerance.
    double tolerance = 1e-8;
    int max_iterations = 100;
    int max_halvings = 20;
};

struct PropensityFit {
    Eigen::VectorXd coefficients;   // aligned with the design columns
    Eigen::VectorXd fitted;         // inverse-logit of the linear predictor
    bool converged = false;
    int iterations = 0;
    double max_score = 0.0;         // unscaled max_j |sum_i x_ij (z_i - e_i)|
    double deviance = 0.0;
    bool ridge = false;
    std::vector<IterationRecord> trace;
    std::vector<std::string> warnings;
};

/// Logistic maximum likelihood by iteratively reweighted least squares with
/// step-halving. Rank-deficient designs are solved with a 1e-8 ridge on the
/// non-intercept columns (recorded as a warning). Throws ConvergenceError when
/// the tolerance is not met or the fit separates the arms.
PropensityFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& treatment,
                           const IrlsOptions& options = {});

inline PropensityFit fit_logistic(const DesignMatrix& dm, const Eigen::VectorXd& treatment,
                                  const IrlsOptions& options = {}) {
    auto fit = fit_logistic(dm.values, treatment, options);
    fit.warnings.insert(fit.warnings.begin(), dm.warnings.begin(), dm.warnings.end());
    return fit;
}

enum class WeightScheme { IPW, OW };

std::string to_string(WeightScheme scheme);

/// Per-unit arm weights: w1 applies to treated units, w0 to controls.
struct WeightVector {
    Eigen::VectorXd w1;
    Eigen::VectorXd w0;
    WeightScheme scheme = WeightScheme::OW;
};

/// IPW: (1/e, 1/(1-e)). OW: (1-e, e). No trimming.
WeightVector make_weights(const Eigen::VectorXd& propensity, WeightScheme scheme);

inline WeightVector make_weights(const PropensityFit& fit, WeightScheme scheme) {
    return make_weights(fit.fitted, scheme);
}

/// Weights from the design randomization probability, constant across units.
WeightVector known_propensity_weights(const TrialDataset& data, WeightScheme scheme);

} // namespace psw
