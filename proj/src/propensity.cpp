#include "psw/propensity.hpp"

#include "psw/linalg.hpp"

#include <cmath>
#include <sstream>

namespace psw {

namespace {

double expit(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double deviance(const Eigen::VectorXd& eta, const Eigen::VectorXd& z) {
    // -2 loglik = 2 sum [softplus(eta) - z eta]
    double d = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) d += softplus(eta(i)) - z(i) * eta(i);
    return 2.0 * d;
}

Eigen::VectorXd fitted_from(const Eigen::VectorXd& eta) {
    return eta.unaryExpr([](double v) { return expit(v); });
}

} // namespace

PropensityFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& z,
                           const IrlsOptions& options) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (z.size() != n) throw InvalidInput("fit_logistic: treatment length differs from design rows");
    if (p < 1) throw InvalidInput("fit_logistic: design has no columns");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (z(i) != 0.0 && z(i) != 1.0) throw InvalidInput("fit_logistic: non-binary treatment");
    }

    PropensityFit fit;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    fit.ridge = qr.rank() < p;
    if (fit.ridge) {
        fit.warnings.push_back("rank-deficient propensity design (rank " +
                               std::to_string(qr.rank()) + " of " + std::to_string(p) +
                               "); ridge fallback applied");
    }

    Eigen::VectorXd col_scale(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        col_scale(j) = std::max(1.0, x.col(j).cwiseAbs().maxCoeff());
    }

    // Start from the intercept-only MLE when column 0 is the intercept.
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    const double zbar = z.mean();
    if ((x.col(0).array() == 1.0).all() && zbar > 0.0 && zbar < 1.0) {
        beta(0) = std::log(zbar / (1.0 - zbar));
    }

    Eigen::VectorXd eta = x * beta;
    double dev = deviance(eta, z);
    int it = 0;
    for (;; ++it) {
        const Eigen::VectorXd e = fitted_from(eta);
        const Eigen::VectorXd score = x.transpose() * (z - e);
        const double scaled = (score.cwiseAbs().array() / col_scale.array()).maxCoeff();
        fit.trace.push_back({it, dev, score.cwiseAbs().maxCoeff(), 0});
        if (scaled <= options.tolerance) {
            fit.converged = true;
            break;
        }
        if (it >= options.max_iterations) break;

        const Eigen::VectorXd w = (e.array() * (1.0 - e.array())).matrix();
        const Eigen::MatrixXd h = x.transpose() * w.asDiagonal() * x;
        Eigen::VectorXd step;
        if (fit.ridge) {
            step = ridge_solve(h, score);
        } else {
            Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
            step = ldlt.solve(score);
            if (ldlt.info() != Eigen::Success || !step.allFinite()) step = ridge_solve(h, score);
        }

        // Near the optimum the deviance change drops below rounding, so allow
        // a roundoff-sized increase rather than stalling.
        const double slack = 1e-10 * (1.0 + std::abs(dev));
        double factor = 1.0;
        int halvings = 0;
        Eigen::VectorXd beta_new = beta + step;
        Eigen::VectorXd eta_new = x * beta_new;
        double dev_new = deviance(eta_new, z);
        while (!(dev_new <= dev + slack) && halvings < options.max_halvings) {
            factor *= 0.5;
            ++halvings;
            beta_new = beta + factor * step;
            eta_new = x * beta_new;
            dev_new = deviance(eta_new, z);
        }
        fit.trace.back().halvings = halvings;
        if (!(dev_new <= dev + slack)) {
            // No descent direction left at working precision; judge the current point.
            const double stall = (score.cwiseAbs().array() / col_scale.array()).maxCoeff();
            fit.converged = stall <= options.tolerance;
            break;
        }
        beta = std::move(beta_new);
        eta = std::move(eta_new);
        dev = dev_new;
    }

    fit.coefficients = beta;
    fit.fitted = fitted_from(eta);
    fit.iterations = it;
    fit.deviance = dev;
    fit.max_score = (x.transpose() * (z - fit.fitted)).cwiseAbs().maxCoeff();

    if (!fit.converged) {
        std::ostringstream msg;
        msg << "logistic IRLS did not converge after " << it << " iterations (max |score| = "
            << fit.max_score << ")";
        throw ConvergenceError(msg.str(), fit.trace);
    }
    const double lo = fit.fitted.minCoeff();
    const double hi = fit.fitted.maxCoeff();
    if (lo < 1e-10 || hi > 1.0 - 1e-10) {
        throw ConvergenceError("logistic fit separates the arms (fitted propensity at 0 or 1)",
                               fit.trace);
    }
    return fit;
}

std::string to_string(WeightScheme scheme) { return scheme == WeightScheme::IPW ? "IPW" : "OW"; }

WeightVector make_weights(const Eigen::VectorXd& e, WeightScheme scheme) {
    WeightVector w;
    w.scheme = scheme;
    if (!((e.array() >= 0.0).all() && (e.array() <= 1.0).all())) {
        throw InvalidInput("propensity scores must lie in [0, 1]");
    }
    if (scheme == WeightScheme::OW) {
        w.w1 = (1.0 - e.array()).matrix();
        w.w0 = e;
    } else {
        if ((e.array() == 0.0).any() || (e.array() == 1.0).any()) {
            throw EstimationError("degenerate propensity: IPW weight undefined at e = 0 or 1");
        }
        w.w1 = e.array().inverse().matrix();
        w.w0 = (1.0 - e.array()).inverse().matrix();
    }
    return w;
}

WeightVector known_propensity_weights(const TrialDataset& data, WeightScheme scheme) {
    if (!data.known_propensity()) {
        throw InvalidInput("dataset has no known randomization probability");
    }
    const double p = *data.known_propensity();
    if (!(p > 0.0 && p < 1.0)) throw InvalidInput("known propensity must lie in (0, 1)");
    return make_weights(Eigen::VectorXd::Constant(data.size(), p), scheme);
}

} // namespace psw
