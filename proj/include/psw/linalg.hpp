#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace psw {

/// Ridge added to the non-intercept diagonal when a system is rank deficient.
inline constexpr double kRidgeLambda = 1e-8;

struct OlsFit {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd residuals;
    double residual_variance = 0.0;
    /// ||X'(y - Xb)|| / (||X'X|| ||b|| + ||X'y||)
    double normal_equation_residual = 0.0;
    bool ridge = false;
    std::vector<std::string> warnings;
};

/// Least squares through column-pivoted Householder QR. A rank-deficient X
/// falls back to (X'X + lambda*D) b = X'y, D = diag(0, 1, ..., 1).
OlsFit fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

/// Solves (H + lambda*D) x = rhs with D = diag(0, 1, ..., 1); used when H is
/// singular. Throws EstimationError if the regularized system still fails.
Eigen::VectorXd ridge_solve(const Eigen::MatrixXd& h, const Eigen::VectorXd& rhs);

/// M-estimation sandwich A^{-1} B A^{-T} / N, where `jacobian` is the mean
/// derivative of the estimating functions (A) and row i of `psi` holds the
/// estimating functions of unit i (B = psi'psi / N).
Eigen::MatrixXd sandwich_covariance(const Eigen::MatrixXd& jacobian, const Eigen::MatrixXd& psi);

} // namespace psw
