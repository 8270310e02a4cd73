#include "psw/design.hpp"

#include "psw/errors.hpp"

#include <algorithm>
#include <set>

namespace psw {

std::string to_string(ColumnKind kind) {
    switch (kind) {
    case ColumnKind::Intercept: return "intercept";
    case ColumnKind::XMain: return "x";
    case ColumnKind::SMain: return "s";
    case ColumnKind::ZMain: return "z";
    case ColumnKind::XS: return "x:s";
    case ColumnKind::ZS: return "z:s";
    case ColumnKind::XZ: return "x:z";
    case ColumnKind::XSZ: return "x:s:z";
    case ColumnKind::XX: return "x:x";
    }
    return "unknown";
}

std::string to_string(PsForm form) {
    return form == PsForm::MainEffect ? "main" : "full";
}

Eigen::Index DesignMatrix::index_of(std::string_view name) const {
    for (std::size_t k = 0; k < columns.size(); ++k) {
        if (columns[k].name == name) return static_cast<Eigen::Index>(k);
    }
    throw InvalidInput("design has no column '" + std::string(name) + "'");
}

std::vector<std::string> DesignMatrix::names() const {
    std::vector<std::string> out;
    out.reserve(columns.size());
    for (const auto& c : columns) out.push_back(c.name);
    return out;
}

namespace {

/// Accumulates columns, then materializes the matrix once.
class DesignBuilder {
public:
    explicit DesignBuilder(Eigen::Index n) : n_(n) {}

    Eigen::Index add(std::string name, ColumnKind kind, Eigen::VectorXd values,
                     std::vector<Eigen::Index> parents = {}) {
        if (!names_.insert(name).second) {
            throw InvalidInput("duplicate design column '" + name + "'");
        }
        cols_.push_back(std::move(values));
        info_.push_back(DesignColumn{std::move(name), kind, std::move(parents)});
        return static_cast<Eigen::Index>(cols_.size()) - 1;
    }

    Eigen::Index add_product(std::string name, ColumnKind kind, std::vector<Eigen::Index> parents) {
        Eigen::VectorXd v = Eigen::VectorXd::Ones(n_);
        for (auto p : parents) v.array() *= cols_[static_cast<std::size_t>(p)].array();
        return add(std::move(name), kind, std::move(v), std::move(parents));
    }

    DesignMatrix finish() {
        DesignMatrix dm;
        dm.values.resize(n_, static_cast<Eigen::Index>(cols_.size()));
        for (std::size_t k = 0; k < cols_.size(); ++k) {
            dm.values.col(static_cast<Eigen::Index>(k)) = cols_[k];
        }
        dm.columns = std::move(info_);
        for (Eigen::Index k = 1; k < dm.cols(); ++k) {
            if (dm.values.col(k).maxCoeff() == dm.values.col(k).minCoeff()) {
                dm.warnings.push_back("column '" + dm.columns[k].name +
                                      "' is constant; design is rank deficient");
            }
        }
        return dm;
    }

private:
    Eigen::Index n_;
    std::vector<Eigen::VectorXd> cols_;
    std::vector<DesignColumn> info_;
    std::set<std::string> names_;
};

struct SubgroupTerm {
    std::string name;
    Eigen::Index column = -1;          // main-effect column for S_r
    Eigen::Index matching_x = -1;      // covariate index when subset-of-X
};

/// Adds intercept, X and S main effects. Returns the X column indices and one
/// term per requested subgroup.
std::pair<std::vector<Eigen::Index>, std::vector<SubgroupTerm>>
add_main_effects(DesignBuilder& b, const TrialDataset& data,
                 const std::vector<std::string>& subgroup_set) {
    const Eigen::Index n = data.size();
    b.add("(Intercept)", ColumnKind::Intercept, Eigen::VectorXd::Ones(n));

    std::vector<Eigen::Index> x_cols;
    for (Eigen::Index j = 0; j < data.num_covariates(); ++j) {
        x_cols.push_back(b.add(data.covariate_names()[j], ColumnKind::XMain,
                               data.covariates().col(j)));
    }

    std::set<std::string> unique;
    std::vector<SubgroupTerm> terms;
    for (const auto& name : subgroup_set) {
        if (!unique.insert(name).second) {
            throw InvalidInput("subgroup '" + name + "' listed twice");
        }
        const Eigen::Index r = data.subgroup_index(name);
        const auto& rel = data.relations()[static_cast<std::size_t>(r)];
        SubgroupTerm t{name};
        if (rel.kind == RelationKind::SubsetOfX) {
            t.matching_x = rel.covariate_index;
            t.column = x_cols[static_cast<std::size_t>(rel.covariate_index)];
        } else {
            t.column = b.add(name, ColumnKind::SMain, data.subgroups().col(r));
        }
        terms.push_back(std::move(t));
    }
    return {std::move(x_cols), std::move(terms)};
}

void add_xs_block(DesignBuilder& b, const TrialDataset& data,
                  const std::vector<Eigen::Index>& x_cols, const std::vector<SubgroupTerm>& terms) {
    for (const auto& t : terms) {
        for (std::size_t j = 0; j < x_cols.size(); ++j) {
            if (static_cast<Eigen::Index>(j) == t.matching_x) continue;
            b.add_product(data.covariate_names()[j] + ":" + t.name, ColumnKind::XS,
                          {x_cols[j], t.column});
        }
    }
}

void record_subgroups(DesignMatrix& dm, const std::vector<SubgroupTerm>& terms) {
    for (const auto& t : terms) {
        dm.subgroups.push_back(t.name);
        dm.subgroup_columns.push_back(t.column);
    }
}

} // namespace

DesignMatrix ps_design(const TrialDataset& data, const std::vector<std::string>& subgroup_set,
                       PsForm form) {
    DesignBuilder b(data.size());
    auto [x_cols, terms] = add_main_effects(b, data, subgroup_set);
    if (form == PsForm::FullInteraction) add_xs_block(b, data, x_cols, terms);
    auto dm = b.finish();
    record_subgroups(dm, terms);
    return dm;
}

DesignMatrix ancova_design(const TrialDataset& data,
                           const std::vector<std::string>& subgroup_set) {
    DesignBuilder b(data.size());
    auto [x_cols, terms] = add_main_effects(b, data, subgroup_set);
    const auto& z_name = data.treatment_name();
    const Eigen::Index z = b.add(z_name, ColumnKind::ZMain, data.treatment());

    add_xs_block(b, data, x_cols, terms);
    for (const auto& t : terms) {
        // Z*S duplicates X_c*Z when S is the covariate X_c.
        if (t.matching_x >= 0) continue;
        b.add_product(z_name + ":" + t.name, ColumnKind::ZS, {z, t.column});
    }
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
        b.add_product(data.covariate_names()[j] + ":" + z_name, ColumnKind::XZ, {x_cols[j], z});
    }
    for (const auto& t : terms) {
        for (std::size_t j = 0; j < x_cols.size(); ++j) {
            if (static_cast<Eigen::Index>(j) == t.matching_x) continue;
            b.add_product(data.covariate_names()[j] + ":" + t.name + ":" + z_name,
                          ColumnKind::XSZ, {x_cols[j], t.column, z});
        }
    }

    auto dm = b.finish();
    record_subgroups(dm, terms);
    dm.treatment_column = z;
    return dm;
}

std::pair<DesignMatrix, DesignMatrix> counterfactual_pair(const DesignMatrix& dm) {
    if (!dm.treatment_column) {
        throw InvalidInput("counterfactual_pair needs a design with a treatment column");
    }
    const Eigen::Index z = *dm.treatment_column;
    auto make = [&](double value) {
        DesignMatrix out = dm;
        out.values.col(z).setConstant(value);
        for (Eigen::Index k = 0; k < out.cols(); ++k) {
            const auto& parents = out.columns[static_cast<std::size_t>(k)].parents;
            if (std::find(parents.begin(), parents.end(), z) == parents.end()) continue;
            Eigen::VectorXd v = Eigen::VectorXd::Ones(out.rows());
            for (auto p : parents) v.array() *= out.values.col(p).array();
            out.values.col(k) = v;
        }
        return out;
    };
    return {make(1.0), make(0.0)};
}

double max_interaction_error(const DesignMatrix& dm) {
    double worst = 0.0;
    for (Eigen::Index k = 0; k < dm.cols(); ++k) {
        const auto& parents = dm.columns[static_cast<std::size_t>(k)].parents;
        if (parents.empty()) continue;
        Eigen::VectorXd v = Eigen::VectorXd::Ones(dm.rows());
        for (auto p : parents) v.array() *= dm.values.col(p).array();
        worst = std::max(worst, (dm.values.col(k) - v).cwiseAbs().maxCoeff());
    }
    return worst;
}

} // namespace psw
