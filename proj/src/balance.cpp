#include "psw/balance.hpp"

#include "psw/csv.hpp"
#include "psw/errors.hpp"

#include <cmath>
#include <limits>
#include <ostream>

namespace psw {

std::string Cohort::label() const {
    return is_overall() ? std::string("Overall") : subgroup + "=" + std::to_string(level);
}

Eigen::VectorXd Cohort::selector(const TrialDataset& data) const {
    if (is_overall()) return Eigen::VectorXd::Ones(data.size());
    return data.level_selector(subgroup, level);
}

namespace {

struct ArmMoments {
    double n = 0.0;
    double wsum = 0.0;
    double wmean = 0.0;
    double mean = 0.0;
    double var = 0.0;   // unweighted, divisor n - 1
    double wvar = 0.0;  // weighted, divisor sum(w)
};

ArmMoments moments(const Eigen::VectorXd& x, const Eigen::VectorXd& sel, const Eigen::VectorXd& z,
                   double arm, const Eigen::VectorXd* w) {
    ArmMoments m;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (sel(i) == 0.0 || z(i) != arm) continue;
        const double wi = w ? (*w)(i) : 1.0;
        m.n += 1.0;
        m.mean += x(i);
        m.wsum += wi;
        m.wmean += wi * x(i);
    }
    if (m.n == 0.0) return m;
    m.mean /= m.n;
    if (!(m.wsum > 0.0)) throw EstimationError("zero weight sum in an arm for SMD");
    m.wmean /= m.wsum;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (sel(i) == 0.0 || z(i) != arm) continue;
        const double wi = w ? (*w)(i) : 1.0;
        m.var += (x(i) - m.mean) * (x(i) - m.mean);
        m.wvar += wi * (x(i) - m.wmean) * (x(i) - m.wmean);
    }
    m.var = m.n > 1.0 ? m.var / (m.n - 1.0) : 0.0;
    m.wvar /= m.wsum;
    return m;
}

} // namespace

double smd(const TrialDataset& data, const WeightVector* weights, const Cohort& cohort,
           const Eigen::VectorXd& covariate, SmdDenominator denominator) {
    if (covariate.size() != data.size()) throw InvalidInput("covariate length differs from dataset size");
    const Eigen::VectorXd sel = cohort.selector(data);
    const auto& z = data.treatment();
    const auto t = moments(covariate, sel, z, 1.0, weights ? &weights->w1 : nullptr);
    const auto c = moments(covariate, sel, z, 0.0, weights ? &weights->w0 : nullptr);
    if (t.n == 0.0 || c.n == 0.0) {
        throw EstimationError("empty arm in " + cohort.label() + " for SMD");
    }
    const double diff = std::abs(t.wmean - c.wmean);
    const double pooled = denominator == SmdDenominator::UnweightedPooled
                              ? std::sqrt((t.var + c.var) / 2.0)
                              : std::sqrt((t.wvar + c.wvar) / 2.0);
    if (pooled == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return diff / pooled;
}

double smd(const TrialDataset& data, const WeightVector* weights, const Cohort& cohort,
           std::string_view covariate, SmdDenominator denominator) {
    return smd(data, weights, cohort, Eigen::VectorXd(data.covariates().col(data.covariate_index(covariate))),
               denominator);
}

double exact_balance_residual(const TrialDataset& data, const PropensityFit& fit,
                              const Cohort& cohort, const Eigen::VectorXd& column) {
    const auto w = make_weights(fit, WeightScheme::OW);
    const Eigen::VectorXd sel = cohort.selector(data);
    const auto t = moments(column, sel, data.treatment(), 1.0, &w.w1);
    const auto c = moments(column, sel, data.treatment(), 0.0, &w.w0);
    if (t.n == 0.0 || c.n == 0.0) throw EstimationError("empty arm in " + cohort.label());
    return std::abs(t.wmean - c.wmean);
}

double exact_balance_residual(const TrialDataset& data, const PropensityFit& fit,
                              const Cohort& cohort, std::string_view covariate) {
    return exact_balance_residual(data, fit, cohort,
                                  Eigen::VectorXd(data.covariates().col(data.covariate_index(covariate))));
}

// -------------------------------------------------------------------------
// Connect-S
// -------------------------------------------------------------------------

const BalanceRow& BalanceTable::row(const std::string& label) const {
    for (const auto& r : rows) {
        if (r.label == label) return r;
    }
    throw InvalidInput("balance table has no row '" + label + "'");
}

double BalanceTable::max_smd() const {
    double worst = 0.0;
    for (const auto& r : rows) {
        for (double v : r.smd) worst = std::max(worst, v);
    }
    return worst;
}

std::string severity(double value) {
    if (value < 0.1) return "<0.1";
    if (value <= 0.2) return "0.1-0.2";
    return ">0.2";
}

BalanceWeights balance_weights(const TrialDataset& data, const MethodSpec& method,
                               const std::vector<std::string>& subgroups) {
    BalanceWeights out;
    if (method.kind == MethodKind::Unadjusted) return out;
    if (!method.is_weighting()) throw InvalidInput("balance needs a weighting method, got " + method.name());
    out.scheme = method.name();
    for (const auto& s : subgroups) {
        out.per_subgroup.emplace(s, fit_weighting(data, method, model_subgroups(data, method.approach, s)).weights);
    }
    const std::vector<std::string> overall_set =
        method.approach == Approach::Joint ? data.subgroup_names() : std::vector<std::string>{};
    out.overall = fit_weighting(data, method, overall_set).weights;
    return out;
}

BalanceTable connect_s(const TrialDataset& data, const BalanceWeights& weights,
                       const std::vector<std::string>& subgroups, const std::vector<int>& levels,
                       SmdDenominator denominator) {
    BalanceTable table;
    table.scheme = weights.weighted() ? weights.scheme : "unweighted";
    table.covariates = data.covariate_names();

    auto fill = [&](const Cohort& cohort, const WeightVector* w) {
        BalanceRow row;
        row.cohort = cohort;
        row.label = cohort.label();
        row.n = static_cast<Eigen::Index>(cohort.selector(data).sum());
        try {
            for (Eigen::Index j = 0; j < data.num_covariates(); ++j) {
                const double v = smd(data, w, cohort, Eigen::VectorXd(data.covariates().col(j)), denominator);
                if (std::isinf(v)) {
                    table.warnings.push_back(row.label + " / " + table.covariates[j] +
                                             ": zero pooled SD with nonzero mean difference");
                }
                row.smd.push_back(v);
            }
        } catch (const EstimationError& e) {
            row.flagged = true;
            row.note = e.what();
            row.smd.clear();
            table.warnings.push_back(row.label + ": " + e.what());
        }
        table.rows.push_back(std::move(row));
    };

    for (const auto& s : subgroups) {
        data.subgroup_index(s);
        const WeightVector* w = nullptr;
        if (weights.weighted()) {
            auto it = weights.per_subgroup.find(s);
            if (it == weights.per_subgroup.end()) {
                throw InvalidInput("no " + weights.scheme + " weights for subgroup '" + s + "'");
            }
            w = &it->second;
        }
        for (int level : levels) fill(Cohort{s, level}, w);
    }
    const WeightVector* overall = nullptr;
    if (weights.weighted()) {
        if (!weights.overall) throw InvalidInput("no overall weights for the Overall row");
        overall = &*weights.overall;
    }
    fill(Cohort::overall(), overall);
    return table;
}

void write_balance_csv(std::ostream& out, const std::vector<BalanceTable>& tables) {
    out << "subgroup,level,covariate,scheme,smd,n,severity\n";
    for (const auto& t : tables) {
        for (const auto& r : t.rows) {
            const std::string subgroup = r.cohort.is_overall() ? "Overall" : r.cohort.subgroup;
            const std::string level = r.cohort.is_overall() ? "" : std::to_string(r.cohort.level);
            for (std::size_t j = 0; j < t.covariates.size(); ++j) {
                out << csv_field(subgroup) << ',' << level << ',' << csv_field(t.covariates[j]) << ','
                    << csv_field(t.scheme) << ',';
                if (r.flagged) {
                    out << "nan," << r.n << ",flagged\n";
                } else {
                    out << format_double(r.smd[j]) << ',' << r.n << ',' << severity(r.smd[j]) << '\n';
                }
            }
        }
    }
}

nlohmann::json balance_json(const BalanceTable& table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows) {
        nlohmann::json cells = nlohmann::json::array();
        for (double v : r.smd) {
            if (std::isinf(v)) cells.push_back("inf");
            else cells.push_back(v);
        }
        nlohmann::json row = {{"label", r.label},
                              {"subgroup", r.cohort.is_overall() ? "Overall" : r.cohort.subgroup},
                              {"n", r.n},
                              {"flagged", r.flagged},
                              {"smd", cells}};
        if (!r.cohort.is_overall()) row["level"] = r.cohort.level;
        if (r.flagged) row["note"] = r.note;
        rows.push_back(std::move(row));
    }
    return {{"scheme", table.scheme},
            {"covariates", table.covariates},
            {"rows", rows},
            {"warnings", table.warnings}};
}

} // namespace psw
