#pragma once

#include "psw/data.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace psw {

enum class ColumnKind { Intercept, XMain, SMain, ZMain, XS, ZS, XZ, XSZ, XX };

std::string to_string(ColumnKind kind);

struct DesignColumn {
    std::string name;
    ColumnKind kind = ColumnKind::Intercept;
    /// Main-effect columns (indices into the same matrix) whose elementwise
    /// product is this column. Empty for the intercept and main effects.
    std::vector<Eigen::Index> parents;
};

/// Regressor matrix with provenance for every column.
///
/// Column order is fixed: intercept, X, S, Z, X*S, Z*S, X*Z, X*S*Z. Blocks a
/// model does not use are absent. A subgroup that coincides with a covariate
/// (subset-of-X) has no column of its own; `subgroup_columns` then points at the
/// covariate, and neither Z*S nor the covariate's own X*S product is emitted.
struct DesignMatrix {
    Eigen::MatrixXd values;
    std::vector<DesignColumn> columns;
    std::vector<std::string> subgroups;
    std::vector<Eigen::Index> subgroup_columns;
    std::optional<Eigen::Index> treatment_column;
    std::vector<std::string> warnings;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
    Eigen::Index index_of(std::string_view name) const;
    std::vector<std::string> names() const;
};

enum class PsForm { MainEffect, FullInteraction };

std::string to_string(PsForm form);

/// Propensity regressors: (1, X, S) or (1, X, S, X*S).
DesignMatrix ps_design(const TrialDataset& data, const std::vector<std::string>& subgroup_set,
                       PsForm form);

/// ANCOVA-S regressors: (1, X, S, Z, X*S, Z*S, X*Z, X*S*Z).
DesignMatrix ancova_design(const TrialDataset& data,
                           const std::vector<std::string>& subgroup_set);

/// Copies of an ANCOVA design with Z forced to 1 and to 0; every column that
/// has Z as a parent is recomputed, the rest are left untouched.
std::pair<DesignMatrix, DesignMatrix> counterfactual_pair(const DesignMatrix& dm);

/// max_i |c_i - prod(parents)_i| over every interaction column.
double max_interaction_error(const DesignMatrix& dm);

} // namespace psw
