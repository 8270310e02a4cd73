#include "psw/inference.hpp"

#include "psw/errors.hpp"
#include "psw/linalg.hpp"
#include "psw/parallel.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace psw {

// -------------------------------------------------------------------------
// Wald
// -------------------------------------------------------------------------

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidInput("normal_quantile: p must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

WaldResult wald(double estimate, double se, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must lie in (0, 1)");
    if (!(se >= 0.0) || !std::isfinite(se)) throw InvalidInput("standard error must be finite and >= 0");
    const double z = normal_quantile(1.0 - alpha / 2.0);
    WaldResult w;
    w.lower = estimate - z * se;
    w.upper = estimate + z * se;
    if (se == 0.0) {
        w.p_value = estimate == 0.0 ? 1.0 : 0.0;
    } else {
        w.p_value = std::erfc(std::abs(estimate / se) / std::sqrt(2.0));
    }
    w.reject = w.p_value < alpha;
    return w;
}

SubgroupEstimate make_subgroup_estimate(const EstimandSpec& estimand, const MethodSpec& method,
                                        double estimate, double se, double alpha,
                                        std::string variance_method) {
    const auto w = wald(estimate, se, alpha);
    SubgroupEstimate out;
    out.estimand = estimand;
    out.method = method;
    out.estimate = estimate;
    out.se = se;
    out.ci_lower = w.lower;
    out.ci_upper = w.upper;
    out.p_value = w.p_value;
    out.variance_method = std::move(variance_method);
    return out;
}

// -------------------------------------------------------------------------
// Sandwich
// -------------------------------------------------------------------------

double EffectsCovariance::variance(Level level) const {
    switch (level) {
    case Level::One: return covariance(0, 0);
    case Level::Zero: return covariance(1, 1);
    case Level::Contrast: return covariance(0, 0) + covariance(1, 1) - 2.0 * covariance(0, 1);
    }
    return 0.0;
}

double EffectsCovariance::se(Level level) const { return std::sqrt(std::max(0.0, variance(level))); }

namespace {

// Diagonal of W^1/2 X (X'WX)^-1 X' W^1/2; w empty means unit weights.
Eigen::VectorXd hat_values(const Eigen::MatrixXd& x, const Eigen::VectorXd& w) {
    const Eigen::VectorXd wt = w.size() ? w : Eigen::VectorXd::Ones(x.rows());
    const Eigen::LDLT<Eigen::MatrixXd> xtx(x.transpose() * wt.asDiagonal() * x);
    const Eigen::MatrixXd g = xtx.solve(x.transpose());
    return (x.array() * g.transpose().array()).rowwise().sum().matrix().cwiseProduct(wt);
}

// HC1-style correction applied per subgroup level: the 2x2 covariance of
// (level 1, level 0) is scaled by D^1/2 C D^1/2 with D_L = n_L / (n_L - q_L),
// where q_L = scale * (leverage mass of the fitted model on level L's rows).
Eigen::Matrix2d level_corrected(const Eigen::Matrix2d& c, const TrialDataset& data,
                                const std::string& subgroup, const Eigen::VectorXd& h, double scale) {
    if (h.size() == 0) return c;
    Eigen::Vector2d root;
    for (int k = 0; k < 2; ++k) {
        const Eigen::VectorXd sel = data.level_selector(subgroup, k == 0 ? 1 : 0);
        const double n = sel.sum();
        const double q = scale * sel.dot(h);
        if (!(n - q > 0.0)) throw EstimationError("too few units in subgroup '" + subgroup +
                                                   "' for the sandwich degrees-of-freedom correction");
        root(k) = std::sqrt(n / (n - q));
    }
    return root.asDiagonal() * c * root.asDiagonal();
}

SubgroupEffects effects_from_weights(const TrialDataset& data, const WeightVector& w,
                                     const std::string& subgroup) {
    SubgroupEffects fx;
    fx.subgroup = subgroup;
    fx.level1 = hajek(data, w, subgroup, 1);
    fx.level0 = hajek(data, w, subgroup, 0);
    fx.counts1 = subgroup_counts(data, subgroup, 1);
    fx.counts0 = subgroup_counts(data, subgroup, 0);
    return fx;
}

EffectsCovariance weighting_sandwich(const TrialDataset& data, const WeightingFit& fit,
                                     const std::string& subgroup) {
    EffectsCovariance out;
    out.effects = effects_from_weights(data, fit.weights, subgroup);

    const Eigen::Index n = data.size();
    const double nd = static_cast<double>(n);
    const bool fitted = fit.propensity.has_value();
    const Eigen::Index p = fitted ? fit.design->cols() : 0;
    const Eigen::Index k = p + 4;
    const Eigen::VectorXd y = data.outcome().array() - data.outcome()(0);
    const auto& z = data.treatment();

    Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(n, k);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);

    // d(w1)/d(eta) and d(w0)/d(eta) per unit.
    Eigen::VectorXd dw1, dw0;
    if (fitted) {
        const auto& x = fit.design->values;
        const auto& e = fit.propensity->fitted;
        const Eigen::ArrayXd v = e.array() * (1.0 - e.array());
        psi.leftCols(p) = x.array().colwise() * (z - e).array();
        a.topLeftCorner(p, p) = -(x.transpose() * v.matrix().asDiagonal() * x) / nd;
        if (fit.weights.scheme == WeightScheme::OW) {
            dw1 = -v.matrix();
            dw0 = v.matrix();
        } else {
            dw1 = (-(1.0 - e.array()) / e.array()).matrix();
            dw0 = (e.array() / (1.0 - e.array())).matrix();
        }
    }

    // Parameter order: mu(level 1, treated), mu(1, control), mu(0, treated), mu(0, control).
    for (int m = 0; m < 4; ++m) {
        const int level = m < 2 ? 1 : 0;
        const bool treated_arm = m % 2 == 0;
        const Eigen::VectorXd sel = data.level_selector(subgroup, level);
        const Eigen::VectorXd& w = treated_arm ? fit.weights.w1 : fit.weights.w0;
        double num = 0.0, den = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double c = sel(i) * (treated_arm ? z(i) : 1.0 - z(i));
            num += c * w(i) * y(i);
            den += c * w(i);
        }
        if (!(den > 0.0)) throw EstimationError("zero weight sum in a subgroup arm");
        const double mu = num / den;
        const Eigen::Index col = p + m;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double c = sel(i) * (treated_arm ? z(i) : 1.0 - z(i));
            if (c == 0.0) continue;
            const double resid = y(i) - mu;
            psi(i, col) = w(i) * resid;
            a(col, col) -= w(i) / nd;
            if (fitted) {
                const double dw = treated_arm ? dw1(i) : dw0(i);
                a.row(col).head(p) += (resid * dw / nd) * fit.design->values.row(i);
            }
        }
    }

    const Eigen::MatrixXd v = sandwich_covariance(a, psi);
    Eigen::Matrix<double, 2, 4> contrast;
    contrast << 1, -1, 0, 0,
                0, 0, 1, -1;
    const Eigen::VectorXd h = fitted ? hat_values(fit.design->values,
                                                  (fit.propensity->fitted.array() *
                                                   (1.0 - fit.propensity->fitted.array())).matrix())
                                     : Eigen::VectorXd();
    out.covariance = level_corrected(contrast * v.bottomRightCorner(4, 4) * contrast.transpose(), data, subgroup, h, 2.0);
    return out;
}

EffectsCovariance ancova_sandwich(const TrialDataset& data, const AncovaFit& fit,
                                  const std::string& subgroup) {
    EffectsCovariance out;
    out.effects.subgroup = subgroup;
    out.effects.counts1 = subgroup_counts(data, subgroup, 1);
    out.effects.counts0 = subgroup_counts(data, subgroup, 0);
    out.effects.level1 = ancova_level_effect(data, fit, subgroup, 1);
    out.effects.level0 = ancova_level_effect(data, fit, subgroup, 0);
    if (fit.ols.ridge) {
        throw EstimationError("ANCOVA-S design is rank deficient; sandwich undefined, use bootstrap");
    }

    const auto& x = fit.design.values;
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    const double nd = static_cast<double>(n);
    Eigen::MatrixXd psi(n, p + 2);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p + 2, p + 2);
    psi.leftCols(p) = x.array().colwise() * fit.ols.residuals.array();
    a.topLeftCorner(p, p) = -(x.transpose() * x) / nd;
    for (int k = 0; k < 2; ++k) {
        const Eigen::VectorXd sel = data.level_selector(subgroup, k == 0 ? 1 : 0);
        const double tau = k == 0 ? out.effects.level1 : out.effects.level0;
        psi.col(p + k) = (sel.array() * (fit.unit_effects.array() - tau)).matrix();
        a.row(p + k).head(p) = (sel.transpose() * fit.contrast_rows) / nd;
        a(p + k, p + k) = -sel.sum() / nd;
    }
    out.covariance = level_corrected(sandwich_covariance(a, psi).bottomRightCorner(2, 2), data, subgroup,
                                     hat_values(x, Eigen::VectorXd()), 1.0);
    return out;
}

std::vector<std::string> unique_subgroups(const std::vector<EstimandSpec>& targets) {
    std::vector<std::string> out;
    for (const auto& t : targets) {
        if (std::find(out.begin(), out.end(), t.subgroup) == out.end()) out.push_back(t.subgroup);
    }
    return out;
}

} // namespace

std::vector<EffectsCovariance> sandwich_effects(const TrialDataset& data, const MethodSpec& method,
                                                const std::vector<std::string>& subgroups) {
    std::vector<EffectsCovariance> out;
    out.reserve(subgroups.size());
    if (method.kind == MethodKind::Ancova) {
        if (method.approach == Approach::Joint) {
            const auto fit = fit_ancova(data, data.subgroup_names());
            for (const auto& s : subgroups) out.push_back(ancova_sandwich(data, fit, s));
        } else {
            for (const auto& s : subgroups) out.push_back(ancova_sandwich(data, fit_ancova(data, {s}), s));
        }
        return out;
    }
    const bool shared = method.approach == Approach::Joint || method.kind == MethodKind::Unadjusted ||
                        method.model == PsModel::Known;
    if (shared) {
        const auto fit = fit_weighting(data, method, data.subgroup_names());
        for (const auto& s : subgroups) out.push_back(weighting_sandwich(data, fit, s));
    } else {
        for (const auto& s : subgroups) {
            out.push_back(weighting_sandwich(data, fit_weighting(data, method, {s}), s));
        }
    }
    return out;
}

double sandwich_se(const TrialDataset& data, const MethodSpec& method, const EstimandSpec& target) {
    return sandwich_effects(data, method, {target.subgroup}).front().se(target.level);
}

// -------------------------------------------------------------------------
// Bootstrap
// -------------------------------------------------------------------------

std::vector<std::pair<double, double>> BootstrapResult::percentile_ci(double alpha) const {
    std::vector<std::pair<double, double>> out;
    for (Eigen::Index t = 0; t < estimates.cols(); ++t) {
        std::vector<double> v(estimates.col(t).data(), estimates.col(t).data() + estimates.rows());
        std::sort(v.begin(), v.end());
        auto quantile = [&](double q) {
            // Linear interpolation between order statistics (type 7).
            const double h = (static_cast<double>(v.size()) - 1.0) * q;
            const auto lo = static_cast<std::size_t>(std::floor(h));
            const auto hi = std::min(lo + 1, v.size() - 1);
            return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
        };
        out.emplace_back(quantile(alpha / 2.0), quantile(1.0 - alpha / 2.0));
    }
    return out;
}

BootstrapResult bootstrap(const TrialDataset& data, const MethodSpec& method,
                          const std::vector<EstimandSpec>& targets, const BootstrapOptions& options) {
    if (options.replicates < 2) throw InvalidInput("bootstrap needs at least 2 replicates");
    if (targets.empty()) throw InvalidInput("bootstrap needs at least one target");
    const auto subgroups = unique_subgroups(targets);
    for (const auto& s : subgroups) data.subgroup_index(s);

    const auto b_count = static_cast<std::size_t>(options.replicates);
    const Eigen::Index n = data.size();
    const auto t_count = static_cast<Eigen::Index>(targets.size());
    Eigen::MatrixXd values(static_cast<Eigen::Index>(b_count), t_count);
    std::vector<char> ok(b_count, 0);

    parallel_for(b_count, options.threads, [&](std::size_t b) {
        auto rng = make_stream(options.seed, b);
        std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
        std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
        for (auto& r : rows) r = pick(rng);
        try {
            const auto sample = data.resample(rows);
            const auto effects = estimate_effects(sample, method, subgroups);
            for (Eigen::Index t = 0; t < t_count; ++t) {
                const auto& target = targets[static_cast<std::size_t>(t)];
                const auto it = std::find_if(effects.begin(), effects.end(),
                                             [&](const auto& fx) { return fx.subgroup == target.subgroup; });
                values(static_cast<Eigen::Index>(b), t) = it->value(target.level);
            }
            ok[b] = 1;
        } catch (const EstimationError&) {
        } catch (const InvalidInput&) {
        }
    });

    BootstrapResult out;
    out.targets = targets;
    out.requested = options.replicates;
    const auto good = static_cast<Eigen::Index>(std::count(ok.begin(), ok.end(), 1));
    out.failures = options.replicates - static_cast<int>(good);
    if (static_cast<double>(out.failures) > options.max_failure_rate * options.replicates || good < 2) {
        throw EstimationError("bootstrap: " + std::to_string(out.failures) + " of " +
                              std::to_string(options.replicates) + " replicates failed for " +
                              method.name());
    }
    out.estimates.resize(good, t_count);
    Eigen::Index row = 0;
    for (std::size_t b = 0; b < b_count; ++b) {
        if (ok[b]) out.estimates.row(row++) = values.row(static_cast<Eigen::Index>(b));
    }
    for (Eigen::Index t = 0; t < t_count; ++t) {
        const auto col = out.estimates.col(t);
        const double mean = col.mean();
        const double ss = (col.array() - mean).square().sum();
        out.se.push_back(std::sqrt(ss / static_cast<double>(good - 1)));
    }
    return out;
}

BootstrapSe bootstrap_se(const TrialDataset& data, const MethodSpec& method,
                         const EstimandSpec& target, int replicates, std::uint64_t seed,
                         double alpha, CiKind ci, int threads) {
    BootstrapOptions opts;
    opts.replicates = replicates;
    opts.seed = seed;
    opts.threads = threads;
    const auto result = bootstrap(data, method, {target}, opts);
    const double point = estimate(data, method, {target}).values.front().estimate;

    BootstrapSe out;
    out.se = result.se.front();
    out.failures = result.failures;
    if (ci == CiKind::Percentile) {
        const auto [lo, hi] = result.percentile_ci(alpha).front();
        out.ci_lower = lo;
        out.ci_upper = hi;
    } else {
        const auto w = wald(point, out.se, alpha);
        out.ci_lower = w.lower;
        out.ci_upper = w.upper;
    }
    return out;
}

// -------------------------------------------------------------------------
// Rubin's rules
// -------------------------------------------------------------------------

double PooledEstimate::se() const { return std::sqrt(total); }

PooledEstimate pool_rubin(const std::vector<double>& estimates, const std::vector<double>& variances) {
    if (estimates.size() != variances.size()) {
        throw InvalidInput("pool_rubin: " + std::to_string(estimates.size()) + " estimates but " +
                           std::to_string(variances.size()) + " variances");
    }
    const auto m = estimates.size();
    if (m < 2) throw InvalidInput("pool_rubin needs at least 2 imputations");
    for (double v : variances) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput("pool_rubin: variances must be finite and >= 0");
    }
    PooledEstimate out;
    out.estimates = estimates;
    out.variances = variances;
    // Sums run over sorted copies so the result is bitwise independent of order.
    auto sorted_est = estimates;
    auto sorted_var = variances;
    std::sort(sorted_est.begin(), sorted_est.end());
    std::sort(sorted_var.begin(), sorted_var.end());
    const double md = static_cast<double>(m);
    out.estimate = std::accumulate(sorted_est.begin(), sorted_est.end(), 0.0) / md;
    out.within = std::accumulate(sorted_var.begin(), sorted_var.end(), 0.0) / md;
    double ss = 0.0;
    for (double e : sorted_est) ss += (e - out.estimate) * (e - out.estimate);
    out.between = ss / (md - 1.0);
    out.total = out.within + (1.0 + 1.0 / md) * out.between;
    return out;
}

} // namespace psw
