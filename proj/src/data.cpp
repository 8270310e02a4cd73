#include "psw/data.hpp"

#include "psw/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace psw {

std::string to_string(RelationKind kind) {
    switch (kind) {
    case RelationKind::DisjointFromX: return "disjoint";
    case RelationKind::SubsetOfX: return "subset-of-x";
    case RelationKind::FunctionOfX: return "function-of-x";
    }
    return "unknown";
}

std::string to_string(Level level) {
    switch (level) {
    case Level::One: return "1";
    case Level::Zero: return "0";
    case Level::Contrast: return "hte";
    }
    return "unknown";
}

Level parse_level(std::string_view text) {
    if (text == "1") return Level::One;
    if (text == "0") return Level::Zero;
    if (text == "hte" || text == "contrast") return Level::Contrast;
    throw InvalidInput("unknown estimand level '" + std::string(text) + "'");
}

std::string label(const EstimandSpec& estimand) {
    return estimand.subgroup + ":" + to_string(estimand.level);
}

// -------------------------------------------------------------------------
// Table
// -------------------------------------------------------------------------

const std::vector<double>& Table::column(std::string_view name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
        throw InvalidInput("column '" + std::string(name) + "' not found in table");
    }
    return columns[static_cast<std::size_t>(it - names.begin())];
}

void Table::add(std::string name, std::vector<double> values) {
    if (!columns.empty() && values.size() != rows()) {
        throw InvalidInput("column '" + name + "' has " + std::to_string(values.size()) +
                           " rows, table has " + std::to_string(rows()));
    }
    names.push_back(std::move(name));
    columns.push_back(std::move(values));
}

// -------------------------------------------------------------------------
// TrialDataset
// -------------------------------------------------------------------------

namespace {

bool is_binary(double v) { return v == 0.0 || v == 1.0; }

template <class Names>
Eigen::Index find_name(const Names& names, std::string_view name) {
    auto it = std::find(names.begin(), names.end(), name);
    return it == names.end() ? Eigen::Index{-1} : static_cast<Eigen::Index>(it - names.begin());
}

} // namespace

TrialDataset::TrialDataset(DatasetParts parts)
    : outcome_(std::move(parts.outcome)),
      treatment_(std::move(parts.treatment)),
      covariates_(std::move(parts.covariates)),
      subgroups_(std::move(parts.subgroups)),
      covariate_names_(std::move(parts.covariate_names)),
      subgroup_names_(std::move(parts.subgroup_names)),
      function_of_x_(std::move(parts.function_of_x)),
      known_propensity_(parts.known_propensity),
      outcome_name_(std::move(parts.outcome_name)),
      treatment_name_(std::move(parts.treatment_name)) {
    // An N x 0 matrix may arrive as 0 x 0.
    if (covariates_.size() == 0) covariates_.resize(outcome_.size(), 0);
    if (subgroups_.size() == 0) subgroups_.resize(outcome_.size(), 0);
    validate();
    detect_relations();
}

TrialDataset::TrialDataset(Unchecked, DatasetParts parts, std::vector<SubgroupRelation> relations)
    : outcome_(std::move(parts.outcome)),
      treatment_(std::move(parts.treatment)),
      covariates_(std::move(parts.covariates)),
      subgroups_(std::move(parts.subgroups)),
      covariate_names_(std::move(parts.covariate_names)),
      subgroup_names_(std::move(parts.subgroup_names)),
      function_of_x_(std::move(parts.function_of_x)),
      relations_(std::move(relations)),
      known_propensity_(parts.known_propensity),
      outcome_name_(std::move(parts.outcome_name)),
      treatment_name_(std::move(parts.treatment_name)) {}

void TrialDataset::validate() const {
    const Eigen::Index n = outcome_.size();
    if (n < 1) throw InvalidInput("dataset has no rows");
    if (treatment_.size() != n || covariates_.rows() != n || subgroups_.rows() != n) {
        throw InvalidInput("outcome, treatment, covariates and subgroups must share N rows");
    }
    if (static_cast<Eigen::Index>(covariate_names_.size()) != covariates_.cols()) {
        throw InvalidInput("covariate name count does not match covariate columns");
    }
    if (static_cast<Eigen::Index>(subgroup_names_.size()) != subgroups_.cols()) {
        throw InvalidInput("subgroup name count does not match subgroup columns");
    }

    if (outcome_name_ == treatment_name_) {
        throw InvalidInput("outcome and treatment must be different columns");
    }
    std::set<std::string> seen{outcome_name_, treatment_name_};
    for (const auto* names : {&covariate_names_, &subgroup_names_}) {
        for (const auto& name : *names) {
            if (name.empty()) throw InvalidInput("empty column name");
            if (!seen.insert(name).second) {
                throw InvalidInput("duplicate column name '" + name + "'");
            }
        }
    }

    if (!outcome_.allFinite()) {
        throw InvalidInput("non-finite outcome value in column '" + outcome_name_ + "'");
    }
    for (Eigen::Index j = 0; j < covariates_.cols(); ++j) {
        if (!covariates_.col(j).allFinite()) {
            throw InvalidInput("non-finite value in covariate '" + covariate_names_[j] + "'");
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!is_binary(treatment_(i))) {
            throw InvalidInput("non-binary treatment value at row " + std::to_string(i));
        }
    }
    for (Eigen::Index r = 0; r < subgroups_.cols(); ++r) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!is_binary(subgroups_(i, r))) {
                throw InvalidInput("non-binary value in subgroup '" + subgroup_names_[r] +
                                   "' at row " + std::to_string(i));
            }
        }
    }

    const double treated = treatment_.sum();
    if (treated == 0.0 || treated == static_cast<double>(n)) {
        throw InvalidInput("empty treatment arm: all units share one treatment value");
    }
    if (known_propensity_ && !(*known_propensity_ > 0.0 && *known_propensity_ < 1.0)) {
        throw InvalidInput("known propensity must lie in (0, 1)");
    }
    for (const auto& name : function_of_x_) {
        if (find_name(subgroup_names_, name) < 0) {
            throw InvalidInput("function-of-x declaration names unknown subgroup '" + name + "'");
        }
    }
}

void TrialDataset::detect_relations() {
    relations_.assign(subgroup_names_.size(), SubgroupRelation{});
    for (Eigen::Index r = 0; r < subgroups_.cols(); ++r) {
        auto& rel = relations_[r];
        for (Eigen::Index j = 0; j < covariates_.cols(); ++j) {
            if ((covariates_.col(j).array() == subgroups_.col(r).array()).all()) {
                rel.kind = RelationKind::SubsetOfX;
                rel.covariate = covariate_names_[j];
                rel.covariate_index = j;
                break;
            }
        }
        if (rel.kind == RelationKind::DisjointFromX &&
            find_name(function_of_x_, subgroup_names_[r]) >= 0) {
            rel.kind = RelationKind::FunctionOfX;
        }
    }
}

Eigen::Index TrialDataset::subgroup_index(std::string_view name) const {
    const auto idx = find_name(subgroup_names_, name);
    if (idx < 0) throw InvalidInput("unknown subgroup '" + std::string(name) + "'");
    return idx;
}

Eigen::Index TrialDataset::covariate_index(std::string_view name) const {
    const auto idx = find_name(covariate_names_, name);
    if (idx < 0) throw InvalidInput("unknown covariate '" + std::string(name) + "'");
    return idx;
}

const SubgroupRelation& TrialDataset::relation(std::string_view subgroup) const {
    return relations_[static_cast<std::size_t>(subgroup_index(subgroup))];
}

Eigen::VectorXd TrialDataset::level_selector(std::string_view subgroup, int level) const {
    const auto col = subgroups_.col(subgroup_index(subgroup));
    if (level == 1) return col;
    if (level == 0) return Eigen::VectorXd::Ones(size()) - col;
    throw InvalidInput("subgroup level must be 0 or 1");
}

DatasetParts TrialDataset::parts() const {
    DatasetParts p;
    p.outcome = outcome_;
    p.treatment = treatment_;
    p.covariates = covariates_;
    p.covariate_names = covariate_names_;
    p.subgroups = subgroups_;
    p.subgroup_names = subgroup_names_;
    p.known_propensity = known_propensity_;
    p.function_of_x = function_of_x_;
    p.outcome_name = outcome_name_;
    p.treatment_name = treatment_name_;
    return p;
}

TrialDataset TrialDataset::resample(std::span<const Eigen::Index> rows) const {
    const auto m = static_cast<Eigen::Index>(rows.size());
    if (m < 1) throw InvalidInput("resample needs at least one row");
    DatasetParts p;
    p.outcome.resize(m);
    p.treatment.resize(m);
    p.covariates.resize(m, covariates_.cols());
    p.subgroups.resize(m, subgroups_.cols());
    for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index i = rows[static_cast<std::size_t>(k)];
        if (i < 0 || i >= size()) throw InvalidInput("resample row index out of range");
        p.outcome(k) = outcome_(i);
        p.treatment(k) = treatment_(i);
        p.covariates.row(k) = covariates_.row(i);
        p.subgroups.row(k) = subgroups_.row(i);
    }
    const double treated = p.treatment.sum();
    if (treated == 0.0 || treated == static_cast<double>(m)) {
        throw EstimationError("empty treatment arm in resampled data");
    }
    p.covariate_names = covariate_names_;
    p.subgroup_names = subgroup_names_;
    p.known_propensity = known_propensity_;
    p.function_of_x = function_of_x_;
    p.outcome_name = outcome_name_;
    p.treatment_name = treatment_name_;
    return TrialDataset(Unchecked{}, std::move(p), relations_);
}

TrialDataset TrialDataset::with_outcome(Eigen::VectorXd outcome) const {
    auto p = parts();
    p.outcome = std::move(outcome);
    return TrialDataset(std::move(p));
}

TrialDataset TrialDataset::with_treatment(Eigen::VectorXd treatment) const {
    auto p = parts();
    p.treatment = std::move(treatment);
    return TrialDataset(std::move(p));
}

TrialDataset TrialDataset::with_covariates(Eigen::MatrixXd covariates,
                                           std::vector<std::string> names) const {
    auto p = parts();
    p.covariates = std::move(covariates);
    p.covariate_names = std::move(names);
    return TrialDataset(std::move(p));
}

bool TrialDataset::operator==(const TrialDataset& other) const {
    return outcome_ == other.outcome_ && treatment_ == other.treatment_ &&
           covariates_ == other.covariates_ && subgroups_ == other.subgroups_ &&
           covariate_names_ == other.covariate_names_ &&
           subgroup_names_ == other.subgroup_names_ && relations_ == other.relations_ &&
           known_propensity_ == other.known_propensity_ &&
           function_of_x_ == other.function_of_x_ && outcome_name_ == other.outcome_name_ &&
           treatment_name_ == other.treatment_name_;
}

// -------------------------------------------------------------------------
// Free functions
// -------------------------------------------------------------------------

TrialDataset validate_dataset(const Table& table, const ColumnRoles& roles) {
    if (roles.outcome.empty() || roles.treatment.empty()) {
        throw InvalidInput("outcome and treatment columns must be named");
    }
    const auto n = static_cast<Eigen::Index>(table.rows());
    auto as_vector = [&](std::string_view name) {
        const auto& col = table.column(name);
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(col.data(), n));
    };

    DatasetParts p;
    p.outcome_name = roles.outcome;
    p.treatment_name = roles.treatment;
    p.outcome = as_vector(roles.outcome);
    p.treatment = as_vector(roles.treatment);
    p.covariates.resize(n, static_cast<Eigen::Index>(roles.covariates.size()));
    for (std::size_t j = 0; j < roles.covariates.size(); ++j) {
        p.covariates.col(static_cast<Eigen::Index>(j)) = as_vector(roles.covariates[j]);
    }
    p.subgroups.resize(n, static_cast<Eigen::Index>(roles.subgroups.size()));
    for (std::size_t r = 0; r < roles.subgroups.size(); ++r) {
        p.subgroups.col(static_cast<Eigen::Index>(r)) = as_vector(roles.subgroups[r]);
    }
    p.covariate_names = roles.covariates;
    p.subgroup_names = roles.subgroups;
    p.function_of_x = roles.function_of_x;
    p.known_propensity = roles.known_propensity;
    return TrialDataset(std::move(p));
}

Table to_table(const TrialDataset& data) {
    Table t;
    auto add_col = [&](const std::string& name, const auto& col) {
        t.add(name, std::vector<double>(col.data(), col.data() + col.size()));
    };
    add_col(data.outcome_name(), data.outcome());
    add_col(data.treatment_name(), data.treatment());
    for (Eigen::Index j = 0; j < data.num_covariates(); ++j) {
        Eigen::VectorXd col = data.covariates().col(j);
        add_col(data.covariate_names()[j], col);
    }
    for (Eigen::Index r = 0; r < data.num_subgroups(); ++r) {
        Eigen::VectorXd col = data.subgroups().col(r);
        add_col(data.subgroup_names()[r], col);
    }
    return t;
}

ColumnRoles roles_of(const TrialDataset& data) {
    ColumnRoles roles;
    roles.outcome = data.outcome_name();
    roles.treatment = data.treatment_name();
    roles.covariates = data.covariate_names();
    roles.subgroups = data.subgroup_names();
    roles.function_of_x = data.declared_function_of_x();
    roles.known_propensity = data.known_propensity();
    return roles;
}

ArmCounts subgroup_counts(const TrialDataset& data, std::string_view subgroup, int level) {
    const Eigen::VectorXd sel = data.level_selector(subgroup, level);
    ArmCounts c;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (sel(i) == 0.0) continue;
        if (data.treatment()(i) == 1.0) ++c.treated; else ++c.control;
    }
    return c;
}

} // namespace psw
