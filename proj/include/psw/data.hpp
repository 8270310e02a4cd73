#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace psw {

// -------------------------------------------------------------------------
// Subgroup relations and estimand labels
// -------------------------------------------------------------------------

enum class RelationKind { DisjointFromX, SubsetOfX, FunctionOfX };

/// How a subgroup indicator relates to the adjustment covariates. This decides
/// which subgroup interactions enter the design matrices.
struct SubgroupRelation {
    RelationKind kind = RelationKind::DisjointFromX;
    std::string covariate;              // matching covariate, SubsetOfX only
    Eigen::Index covariate_index = -1;  // index into the covariate matrix

    bool operator==(const SubgroupRelation&) const = default;
};

std::string to_string(RelationKind kind);

enum class Level { One, Zero, Contrast };

std::string to_string(Level level);
Level parse_level(std::string_view text);

/// Subgroup ATE at S_r = 1, at S_r = 0, or their difference (the HTE contrast).
struct EstimandSpec {
    std::string subgroup;
    Level level = Level::One;

    bool operator==(const EstimandSpec&) const = default;
};

/// "<subgroup>:1", "<subgroup>:0" or "<subgroup>:hte".
std::string label(const EstimandSpec& estimand);

// -------------------------------------------------------------------------
// Raw input
// -------------------------------------------------------------------------

/// Named numeric columns as read from a CSV file. Missing or unparseable cells
/// are NaN and are rejected by validate_dataset if the column is used.
struct Table {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
    const std::vector<double>& column(std::string_view name) const;
    void add(std::string name, std::vector<double> values);
};

struct ColumnRoles {
    std::string outcome;
    std::string treatment;
    std::vector<std::string> covariates;
    std::vector<std::string> subgroups;
    /// Subgroups declared as functions of X (cannot be auto-detected).
    std::vector<std::string> function_of_x;
    std::optional<double> known_propensity;
};

/// Columns handed to the TrialDataset constructor. Everything is checked there.
struct DatasetParts {
    Eigen::VectorXd outcome;
    Eigen::VectorXd treatment;
    Eigen::MatrixXd covariates;   // N x J
    std::vector<std::string> covariate_names;
    Eigen::MatrixXd subgroups;    // N x R
    std::vector<std::string> subgroup_names;
    std::optional<double> known_propensity;
    std::vector<std::string> function_of_x;
    std::string outcome_name = "y";
    std::string treatment_name = "z";
};

// -------------------------------------------------------------------------
// TrialDataset
// -------------------------------------------------------------------------

/// Validated trial data. Immutable once built; every accessor is const.
class TrialDataset {
public:
    /// Validates the parts and detects subgroup relations; throws InvalidInput.
    explicit TrialDataset(DatasetParts parts);

    Eigen::Index size() const { return outcome_.size(); }
    Eigen::Index num_covariates() const { return covariates_.cols(); }
    Eigen::Index num_subgroups() const { return subgroups_.cols(); }

    const Eigen::VectorXd& outcome() const { return outcome_; }
    const Eigen::VectorXd& treatment() const { return treatment_; }
    const Eigen::MatrixXd& covariates() const { return covariates_; }
    const Eigen::MatrixXd& subgroups() const { return subgroups_; }
    const std::vector<std::string>& covariate_names() const { return covariate_names_; }
    const std::vector<std::string>& subgroup_names() const { return subgroup_names_; }
    const std::vector<SubgroupRelation>& relations() const { return relations_; }
    const std::optional<double>& known_propensity() const { return known_propensity_; }
    const std::string& outcome_name() const { return outcome_name_; }
    const std::string& treatment_name() const { return treatment_name_; }
    const std::vector<std::string>& declared_function_of_x() const { return function_of_x_; }

    Eigen::Index subgroup_index(std::string_view name) const;
    Eigen::Index covariate_index(std::string_view name) const;
    const SubgroupRelation& relation(std::string_view subgroup) const;

    /// 0/1 indicator of S_r == level.
    Eigen::VectorXd level_selector(std::string_view subgroup, int level) const;

    /// Rows drawn by index (with repetition allowed). Relations are inherited,
    /// not re-detected, so the design dimension stays fixed under resampling.
    TrialDataset resample(std::span<const Eigen::Index> rows) const;

    TrialDataset with_outcome(Eigen::VectorXd outcome) const;
    TrialDataset with_treatment(Eigen::VectorXd treatment) const;
    TrialDataset with_covariates(Eigen::MatrixXd covariates,
                                 std::vector<std::string> names) const;

    DatasetParts parts() const;

    bool operator==(const TrialDataset& other) const;

private:
    struct Unchecked {};
    TrialDataset(Unchecked, DatasetParts parts, std::vector<SubgroupRelation> relations);

    void validate() const;
    void detect_relations();

    Eigen::VectorXd outcome_;
    Eigen::VectorXd treatment_;
    Eigen::MatrixXd covariates_;
    Eigen::MatrixXd subgroups_;
    std::vector<std::string> covariate_names_;
    std::vector<std::string> subgroup_names_;
    std::vector<std::string> function_of_x_;
    std::vector<SubgroupRelation> relations_;
    std::optional<double> known_propensity_;
    std::string outcome_name_;
    std::string treatment_name_;
};

/// Pulls the named roles out of a raw table and validates them.
TrialDataset validate_dataset(const Table& table, const ColumnRoles& roles);

/// Inverse of validate_dataset: the table and roles that rebuild `data`.
Table to_table(const TrialDataset& data);
ColumnRoles roles_of(const TrialDataset& data);

struct ArmCounts {
    Eigen::Index treated = 0;
    Eigen::Index control = 0;

    bool operator==(const ArmCounts&) const = default;
};

ArmCounts subgroup_counts(const TrialDataset& data, std::string_view subgroup, int level);

} // namespace psw
