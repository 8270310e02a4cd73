#pragma once

#include "psw/data.hpp"
#include "psw/design.hpp"
#include "psw/linalg.hpp"
#include "psw/propensity.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace psw {

// -------------------------------------------------------------------------
// Method labels
// -------------------------------------------------------------------------

enum class MethodKind { Unadjusted, IPW, OW, Ancova };
/// Source of the propensity score for the weighting methods. Known uses the
/// design randomization probability instead of a fitted model.
enum class PsModel { None, Main, Full, Known };
enum class Approach { OneAtATime, Joint };

std::string to_string(Approach approach);
Approach parse_approach(std::string_view text);

struct MethodSpec {
    MethodKind kind = MethodKind::Unadjusted;
    PsModel model = PsModel::None;
    Approach approach = Approach::OneAtATime;

    /// "UNADJ", "IPW-Main", "IPW-Full", "IPW-Known", "OW-Main", "OW-Full",
    /// "OW-Known" or "ANCOVA-S". The approach is not part of the name.
    std::string name() const;
    bool is_weighting() const { return kind == MethodKind::IPW || kind == MethodKind::OW; }

    static MethodSpec parse(std::string_view name, Approach approach = Approach::OneAtATime);

    bool operator==(const MethodSpec&) const = default;
};

/// The six estimators compared throughout: UNADJ, IPW-Main, IPW-Full,
/// OW-Main, OW-Full, ANCOVA-S.
std::vector<MethodSpec> standard_methods(Approach approach = Approach::OneAtATime);

// -------------------------------------------------------------------------
// Results
// -------------------------------------------------------------------------

struct PointEstimate {
    EstimandSpec estimand;
    MethodSpec method;
    double estimate = 0.0;
    /// Arm counts at the requested level (level 1 counts for the contrast).
    ArmCounts counts;
};

struct PointEstimates {
    std::vector<PointEstimate> values;
    std::vector<std::string> warnings;

    double at(const EstimandSpec& estimand) const;
};

/// Both subgroup ATEs of one subgroup, computed from the same fit.
struct SubgroupEffects {
    std::string subgroup;
    double level1 = 0.0;
    double level0 = 0.0;
    ArmCounts counts1;
    ArmCounts counts0;

    double contrast() const { return level1 - level0; }
    double value(Level level) const;
};

// -------------------------------------------------------------------------
// Basic estimators
// -------------------------------------------------------------------------

/// mean(Y | Z=1, S_r=level) - mean(Y | Z=0, S_r=level).
double unadjusted(const TrialDataset& data, std::string_view subgroup, int level);

/// Hajek weighted difference in means within S_r = level.
double hajek(const TrialDataset& data, const WeightVector& weights, std::string_view subgroup,
             int level);

// -------------------------------------------------------------------------
// Fits shared by point estimation and sandwich variance
// -------------------------------------------------------------------------

struct WeightingFit {
    MethodSpec method;
    std::optional<DesignMatrix> design;        // absent for UNADJ and known propensity
    std::optional<PropensityFit> propensity;
    WeightVector weights;                      // all ones for UNADJ
};

/// Weights for a weighting method (or unit weights for UNADJ). `subgroup_set`
/// selects the subgroups entering the propensity model.
WeightingFit fit_weighting(const TrialDataset& data, const MethodSpec& method,
                           const std::vector<std::string>& subgroup_set);

struct AncovaFit {
    DesignMatrix design;
    OlsFit ols;
    /// Row i of design(Z=1) minus design(Z=0); times the coefficients gives
    /// the predicted individual effect.
    Eigen::MatrixXd contrast_rows;
    Eigen::VectorXd unit_effects;
};

AncovaFit fit_ancova(const TrialDataset& data, const std::vector<std::string>& subgroup_set);

/// Mean predicted effect over units with S_r = level.
double ancova_level_effect(const TrialDataset& data, const AncovaFit& fit,
                           std::string_view subgroup, int level);

// -------------------------------------------------------------------------
// Dispatch
// -------------------------------------------------------------------------

/// ANCOVA-S estimates for each target from one OLS fit over `subgroup_set`.
PointEstimates ancova_s(const TrialDataset& data, const std::vector<std::string>& subgroup_set,
                        const std::vector<EstimandSpec>& targets);

/// Level-1 and level-0 effects for each subgroup: one fit per subgroup in the
/// one-at-a-time approach, a single fit over all dataset subgroups in the joint one.
std::vector<SubgroupEffects> estimate_effects(const TrialDataset& data, const MethodSpec& method,
                                              const std::vector<std::string>& subgroups);

PointEstimates estimate(const TrialDataset& data, const MethodSpec& method,
                        const std::vector<EstimandSpec>& targets);

/// The subgroups whose models are fitted together for `subgroup` under `approach`.
std::vector<std::string> model_subgroups(const TrialDataset& data, Approach approach,
                                         const std::string& subgroup);

} // namespace psw
