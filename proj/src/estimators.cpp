#include "psw/estimators.hpp"

#include "psw/errors.hpp"

#include <algorithm>

namespace psw {

// -------------------------------------------------------------------------
// Method labels
// -------------------------------------------------------------------------

std::string to_string(Approach approach) {
    return approach == Approach::Joint ? "joint" : "one-at-a-time";
}

Approach parse_approach(std::string_view text) {
    if (text == "one-at-a-time" || text == "oat") return Approach::OneAtATime;
    if (text == "joint") return Approach::Joint;
    throw InvalidInput("unknown approach '" + std::string(text) + "'");
}

std::string MethodSpec::name() const {
    auto suffix = [&] {
        switch (model) {
        case PsModel::Main: return std::string("-Main");
        case PsModel::Full: return std::string("-Full");
        case PsModel::Known: return std::string("-Known");
        case PsModel::None: break;
        }
        return std::string();
    };
    switch (kind) {
    case MethodKind::Unadjusted: return "UNADJ";
    case MethodKind::IPW: return "IPW" + suffix();
    case MethodKind::OW: return "OW" + suffix();
    case MethodKind::Ancova: return "ANCOVA-S";
    }
    return "unknown";
}

MethodSpec MethodSpec::parse(std::string_view name, Approach approach) {
    MethodSpec m;
    m.approach = approach;
    if (name == "UNADJ") return m;
    if (name == "ANCOVA-S") {
        m.kind = MethodKind::Ancova;
        return m;
    }
    const auto dash = name.find('-');
    if (dash != std::string_view::npos) {
        const auto head = name.substr(0, dash);
        const auto tail = name.substr(dash + 1);
        if (head == "IPW" || head == "OW") {
            m.kind = head == "IPW" ? MethodKind::IPW : MethodKind::OW;
            if (tail == "Main") m.model = PsModel::Main;
            else if (tail == "Full") m.model = PsModel::Full;
            else if (tail == "Known") m.model = PsModel::Known;
            else throw InvalidInput("unknown propensity model in method '" + std::string(name) + "'");
            return m;
        }
    }
    throw InvalidInput("unknown method '" + std::string(name) +
                       "' (expected UNADJ, IPW-Main, IPW-Full, OW-Main, OW-Full, ANCOVA-S)");
}

std::vector<MethodSpec> standard_methods(Approach approach) {
    std::vector<MethodSpec> out;
    for (auto name : {"UNADJ", "IPW-Main", "IPW-Full", "OW-Main", "OW-Full", "ANCOVA-S"}) {
        out.push_back(MethodSpec::parse(name, approach));
    }
    return out;
}

double PointEstimates::at(const EstimandSpec& estimand) const {
    for (const auto& v : values) {
        if (v.estimand == estimand) return v.estimate;
    }
    throw InvalidInput("no estimate for " + label(estimand));
}

double SubgroupEffects::value(Level level) const {
    switch (level) {
    case Level::One: return level1;
    case Level::Zero: return level0;
    case Level::Contrast: return contrast();
    }
    return 0.0;
}

// -------------------------------------------------------------------------
// Basic estimators
// -------------------------------------------------------------------------

namespace {

void require_arms(const ArmCounts& c, std::string_view subgroup, int level) {
    if (c.treated == 0 || c.control == 0) {
        throw EstimationError("subgroup arm empty: " + std::string(subgroup) + "=" +
                              std::to_string(level) + " has " + std::to_string(c.treated) +
                              " treated and " + std::to_string(c.control) + " control units");
    }
}

/// Weighted arm means are accumulated relative to y(0); constant outcomes
/// then give exactly zero.
double weighted_difference(const TrialDataset& data, const Eigen::VectorXd& w1,
                           const Eigen::VectorXd& w0, const Eigen::VectorXd& sel) {
    const auto& y = data.outcome();
    const auto& z = data.treatment();
    const double shift = y(0);
    double num1 = 0.0, den1 = 0.0, num0 = 0.0, den0 = 0.0;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (sel(i) == 0.0) continue;
        const double dy = y(i) - shift;
        if (z(i) == 1.0) {
            num1 += w1(i) * dy;
            den1 += w1(i);
        } else {
            num0 += w0(i) * dy;
            den0 += w0(i);
        }
    }
    if (!(den1 > 0.0) || !(den0 > 0.0)) {
        throw EstimationError("zero weight sum in a subgroup arm");
    }
    return num1 / den1 - num0 / den0;
}

SubgroupEffects weighted_effects(const TrialDataset& data, const WeightVector& w,
                                 const std::string& subgroup) {
    SubgroupEffects fx;
    fx.subgroup = subgroup;
    fx.counts1 = subgroup_counts(data, subgroup, 1);
    fx.counts0 = subgroup_counts(data, subgroup, 0);
    require_arms(fx.counts1, subgroup, 1);
    require_arms(fx.counts0, subgroup, 0);
    fx.level1 = weighted_difference(data, w.w1, w.w0, data.level_selector(subgroup, 1));
    fx.level0 = weighted_difference(data, w.w1, w.w0, data.level_selector(subgroup, 0));
    return fx;
}

} // namespace

double unadjusted(const TrialDataset& data, std::string_view subgroup, int level) {
    require_arms(subgroup_counts(data, subgroup, level), subgroup, level);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(data.size());
    return weighted_difference(data, ones, ones, data.level_selector(subgroup, level));
}

double hajek(const TrialDataset& data, const WeightVector& weights, std::string_view subgroup,
             int level) {
    if (weights.w1.size() != data.size() || weights.w0.size() != data.size()) {
        throw InvalidInput("weight vector length differs from dataset size");
    }
    if ((weights.w1.array() < 0.0).any() || (weights.w0.array() < 0.0).any()) {
        throw InvalidInput("weights must be nonnegative");
    }
    require_arms(subgroup_counts(data, subgroup, level), subgroup, level);
    return weighted_difference(data, weights.w1, weights.w0, data.level_selector(subgroup, level));
}

// -------------------------------------------------------------------------
// Fits
// -------------------------------------------------------------------------

WeightingFit fit_weighting(const TrialDataset& data, const MethodSpec& method,
                           const std::vector<std::string>& subgroup_set) {
    WeightingFit fit;
    fit.method = method;
    if (method.kind == MethodKind::Unadjusted) {
        fit.weights.w1 = Eigen::VectorXd::Ones(data.size());
        fit.weights.w0 = Eigen::VectorXd::Ones(data.size());
        return fit;
    }
    if (!method.is_weighting()) throw InvalidInput("fit_weighting: " + method.name() + " is not a weighting method");

    const auto scheme = method.kind == MethodKind::IPW ? WeightScheme::IPW : WeightScheme::OW;
    switch (method.model) {
    case PsModel::Known:
        fit.weights = known_propensity_weights(data, scheme);
        return fit;
    case PsModel::Main:
    case PsModel::Full: {
        const auto form = method.model == PsModel::Main ? PsForm::MainEffect : PsForm::FullInteraction;
        fit.design = ps_design(data, subgroup_set, form);
        fit.propensity = fit_logistic(*fit.design, data.treatment());
        fit.weights = make_weights(*fit.propensity, scheme);
        return fit;
    }
    case PsModel::None: break;
    }
    throw InvalidInput("weighting method " + method.name() + " needs a propensity model");
}

AncovaFit fit_ancova(const TrialDataset& data, const std::vector<std::string>& subgroup_set) {
    AncovaFit fit;
    fit.design = ancova_design(data, subgroup_set);
    if (data.size() < fit.design.cols()) {
        throw EstimationError("insufficient data for ANCOVA-S: " + std::to_string(data.size()) +
                              " rows for " + std::to_string(fit.design.cols()) + " coefficients");
    }
    const Eigen::VectorXd y = data.outcome().array() - data.outcome()(0);
    fit.ols = fit_ols(fit.design.values, y);
    auto [treated, control] = counterfactual_pair(fit.design);
    fit.contrast_rows = treated.values - control.values;
    fit.unit_effects = fit.contrast_rows * fit.ols.coefficients;
    return fit;
}

double ancova_level_effect(const TrialDataset& data, const AncovaFit& fit,
                           std::string_view subgroup, int level) {
    require_arms(subgroup_counts(data, subgroup, level), subgroup, level);
    const Eigen::VectorXd sel = data.level_selector(subgroup, level);
    return sel.dot(fit.unit_effects) / sel.sum();
}

// -------------------------------------------------------------------------
// Dispatch
// -------------------------------------------------------------------------

namespace {

SubgroupEffects ancova_effects(const TrialDataset& data, const AncovaFit& fit,
                               const std::string& subgroup) {
    SubgroupEffects fx;
    fx.subgroup = subgroup;
    fx.counts1 = subgroup_counts(data, subgroup, 1);
    fx.counts0 = subgroup_counts(data, subgroup, 0);
    fx.level1 = ancova_level_effect(data, fit, subgroup, 1);
    fx.level0 = ancova_level_effect(data, fit, subgroup, 0);
    return fx;
}

std::vector<std::string> unique_subgroups(const std::vector<EstimandSpec>& targets) {
    std::vector<std::string> out;
    for (const auto& t : targets) {
        if (std::find(out.begin(), out.end(), t.subgroup) == out.end()) out.push_back(t.subgroup);
    }
    return out;
}

PointEstimates collect(const std::vector<SubgroupEffects>& effects, const MethodSpec& method,
                       const std::vector<EstimandSpec>& targets) {
    PointEstimates out;
    for (const auto& t : targets) {
        auto it = std::find_if(effects.begin(), effects.end(),
                               [&](const auto& fx) { return fx.subgroup == t.subgroup; });
        PointEstimate pe;
        pe.estimand = t;
        pe.method = method;
        pe.estimate = it->value(t.level);
        pe.counts = t.level == Level::Zero ? it->counts0 : it->counts1;
        out.values.push_back(pe);
    }
    return out;
}

} // namespace

std::vector<std::string> model_subgroups(const TrialDataset& data, Approach approach,
                                         const std::string& subgroup) {
    if (approach == Approach::Joint) return data.subgroup_names();
    data.subgroup_index(subgroup);
    return {subgroup};
}

PointEstimates ancova_s(const TrialDataset& data, const std::vector<std::string>& subgroup_set,
                        const std::vector<EstimandSpec>& targets) {
    for (const auto& t : targets) {
        if (std::find(subgroup_set.begin(), subgroup_set.end(), t.subgroup) == subgroup_set.end()) {
            throw InvalidInput("target subgroup '" + t.subgroup + "' is not in the ANCOVA-S model");
        }
    }
    const auto fit = fit_ancova(data, subgroup_set);
    std::vector<SubgroupEffects> effects;
    for (const auto& name : unique_subgroups(targets)) effects.push_back(ancova_effects(data, fit, name));
    auto out = collect(effects, MethodSpec{MethodKind::Ancova}, targets);
    out.warnings = fit.design.warnings;
    out.warnings.insert(out.warnings.end(), fit.ols.warnings.begin(), fit.ols.warnings.end());
    return out;
}

std::vector<SubgroupEffects> estimate_effects(const TrialDataset& data, const MethodSpec& method,
                                              const std::vector<std::string>& subgroups) {
    std::vector<SubgroupEffects> out;
    out.reserve(subgroups.size());

    if (method.kind == MethodKind::Ancova) {
        if (method.approach == Approach::Joint) {
            const auto fit = fit_ancova(data, data.subgroup_names());
            for (const auto& s : subgroups) out.push_back(ancova_effects(data, fit, s));
        } else {
            for (const auto& s : subgroups) out.push_back(ancova_effects(data, fit_ancova(data, {s}), s));
        }
        return out;
    }

    // UNADJ and known-propensity weights do not depend on the subgroup set.
    const bool shared = method.approach == Approach::Joint || method.kind == MethodKind::Unadjusted ||
                        method.model == PsModel::Known;
    if (shared) {
        const auto fit = fit_weighting(data, method, data.subgroup_names());
        for (const auto& s : subgroups) out.push_back(weighted_effects(data, fit.weights, s));
    } else {
        for (const auto& s : subgroups) {
            out.push_back(weighted_effects(data, fit_weighting(data, method, {s}).weights, s));
        }
    }
    return out;
}

PointEstimates estimate(const TrialDataset& data, const MethodSpec& method,
                        const std::vector<EstimandSpec>& targets) {
    const auto effects = estimate_effects(data, method, unique_subgroups(targets));
    return collect(effects, method, targets);
}

} // namespace psw
