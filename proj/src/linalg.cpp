#include "psw/linalg.hpp"

#include "psw/errors.hpp"

namespace psw {

Eigen::VectorXd ridge_solve(const Eigen::MatrixXd& h, const Eigen::VectorXd& rhs) {
    Eigen::MatrixXd reg = h;
    reg.diagonal().tail(reg.rows() - 1).array() += kRidgeLambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(reg);
    if (ldlt.info() != Eigen::Success) {
        throw EstimationError("ridge-regularized system could not be factorized");
    }
    Eigen::VectorXd x = ldlt.solve(rhs);
    if (!x.allFinite()) throw EstimationError("ridge-regularized solve produced non-finite values");
    return x;
}

OlsFit fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    if (x.rows() != y.size()) throw InvalidInput("fit_ols: X and y row counts differ");
    OlsFit fit;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() == x.cols()) {
        fit.coefficients = qr.solve(y);
    } else {
        fit.ridge = true;
        fit.warnings.push_back("rank-deficient outcome design (rank " + std::to_string(qr.rank()) +
                               " of " + std::to_string(x.cols()) + "); ridge fallback applied");
        fit.coefficients = ridge_solve(x.transpose() * x, x.transpose() * y);
    }
    if (!fit.coefficients.allFinite()) throw EstimationError("OLS produced non-finite coefficients");

    fit.residuals = y - x * fit.coefficients;
    const auto dof = x.rows() - x.cols();
    fit.residual_variance = dof > 0 ? fit.residuals.squaredNorm() / static_cast<double>(dof) : 0.0;

    const Eigen::MatrixXd xtx = x.transpose() * x;
    const Eigen::VectorXd xty = x.transpose() * y;
    const double scale = xtx.norm() * fit.coefficients.norm() + xty.norm();
    fit.normal_equation_residual =
        scale > 0 ? (x.transpose() * fit.residuals).norm() / scale : 0.0;
    return fit;
}

Eigen::MatrixXd sandwich_covariance(const Eigen::MatrixXd& jacobian, const Eigen::MatrixXd& psi) {
    const double n = static_cast<double>(psi.rows());
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jacobian);
    if (!lu.isInvertible()) {
        throw EstimationError("singular Jacobian in sandwich variance; use bootstrap instead");
    }
    // Rows of `influence` are A^{-1} psi_i, so V = influence' influence / N^2.
    const Eigen::MatrixXd influence = lu.solve(psi.transpose()).transpose();
    return influence.transpose() * influence / (n * n);
}

} // namespace psw
