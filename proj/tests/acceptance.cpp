// Acceptance gate: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when everything passes).

#include "support.hpp"

#include "psw/analysis.hpp"
#include "psw/balance.hpp"
#include "psw/design.hpp"
#include "psw/errors.hpp"
#include "psw/estimators.hpp"
#include "psw/inference.hpp"
#include "psw/parallel.hpp"
#include "psw/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace psw;
using testing::vec;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

int threads() { return default_threads(); }

SimulationReport simulate(int scenario, Eigen::Index n, std::uint64_t seed, double beta3, double beta5,
                          const std::vector<std::string>& methods, std::vector<Approach> approaches = {Approach::OneAtATime}) {
    ScenarioSpec spec;
    spec.scenario = scenario;
    spec.n = n;
    spec.nsim = 2000;
    spec.seed = seed;
    spec.beta3 = beta3;
    spec.beta5 = beta5;
    SimulationOptions o;
    o.methods.clear();
    for (auto a : approaches) {
        for (const auto& m : methods) o.methods.push_back(MethodSpec::parse(m, a));
    }
    o.threads = threads();
    return run_scenario(make_scenario(spec), o);
}

const std::vector<std::string> kAll{"UNADJ", "IPW-Main", "IPW-Full", "OW-Main", "OW-Full", "ANCOVA-S"};
const Level kLevels[3] = {Level::One, Level::Zero, Level::Contrast};

// Shared Scenario-1 alternative run (criteria 3, 5, 7).
const SimulationReport& scenario1_alt() {
    static const SimulationReport r = simulate(1, 1000, 1001, -1.0, 0.5, kAll);
    return r;
}

// ---------------------------------------------------------------------------

Outcome c1_exact_balance() {
    const auto cfg = testing::scenario(1, 250, 1, 2001);
    double worst = 0.0;
    int checked = 0;
    for (std::uint64_t b = 0; b < 100; ++b) {
        const auto d = generate(cfg, b).data;
        const auto dm = ps_design(d, {"s1"}, PsForm::FullInteraction);
        const auto fit = fit_logistic(dm, d.treatment());
        for (const auto& cohort : {Cohort{"s1", 1}, Cohort{"s1", 0}, Cohort::overall()}) {
            for (Eigen::Index k = 1; k < dm.cols(); ++k) {
                worst = std::max(worst, exact_balance_residual(d, fit, cohort, Eigen::VectorXd(dm.values.col(k))));
                ++checked;
            }
        }
    }
    return {worst <= 1e-8, std::to_string(checked) + " cells, max |diff| " + fmt("%.3g", worst) + " (<= 1e-8)"};
}

Outcome c2_scenario2_truths() {
    const auto r = simulate(2, 1000, 1002, -1.0, 0.5, {"UNADJ", "IPW-Full", "OW-Full", "ANCOVA-S"});
    double worst = 0.0;
    std::string where;
    for (const auto& m : {"UNADJ", "IPW-Full", "OW-Full", "ANCOVA-S"}) {
        for (auto [level, truth] : {std::pair{Level::Zero, -0.4}, std::pair{Level::One, 0.4}}) {
            const double dev = std::abs(r.find(m, Approach::OneAtATime, "s1", level).mean_estimate - truth);
            if (dev > worst) {
                worst = dev;
                where = std::string(m) + " level " + to_string(level);
            }
        }
    }
    return {worst <= 0.05, "max |mean - truth| " + fmt("%.4f", worst) + " at " + where + " (<= 0.05)"};
}

Outcome c3_unbiased() {
    const auto& r = scenario1_alt();
    double ate = 0.0, hte = 0.0;
    for (const auto& m : kAll) {
        ate = std::max(ate, std::abs(r.find(m, Approach::OneAtATime, "s1", Level::Zero).mean_estimate + 1.0));
        ate = std::max(ate, std::abs(r.find(m, Approach::OneAtATime, "s1", Level::One).mean_estimate + 0.5));
        hte = std::max(hte, std::abs(r.find(m, Approach::OneAtATime, "s1", Level::Contrast).mean_estimate - 0.5));
    }
    return {ate <= 0.04 && hte <= 0.05,
            "max ATE deviation " + fmt("%.4f", ate) + " (<= 0.04), max HTE deviation " + fmt("%.4f", hte) + " (<= 0.05)"};
}

Outcome c4_type_one() {
    const auto r = simulate(1, 1000, 1004, 0.0, 0.0, kAll);
    double lo = 1.0, hi = 0.0;
    for (const auto& row : r.rows) {
        lo = std::min(lo, row.rejection_rate);
        hi = std::max(hi, row.rejection_rate);
    }
    return {lo >= 0.035 && hi <= 0.065,
            "rejection rates in [" + fmt("%.4f", lo) + ", " + fmt("%.4f", hi) + "] (within [0.035, 0.065])"};
}

Outcome c5_coverage() {
    const auto& r = scenario1_alt();
    double lo = 1.0, hi = 0.0;
    for (const auto& row : r.rows) {
        lo = std::min(lo, row.coverage);
        hi = std::max(hi, row.coverage);
    }
    return {lo >= 0.935 && hi <= 0.965,
            "coverage in [" + fmt("%.4f", lo) + ", " + fmt("%.4f", hi) + "] (within [0.935, 0.965])"};
}

Outcome c6_efficiency() {
    const std::vector<std::string> m{"UNADJ", "IPW-Full", "OW-Full", "ANCOVA-S"};
    const auto r500 = simulate(1, 500, 1006, -1.0, 0.5, m);
    const auto r250 = simulate(1, 250, 1106, -1.0, 0.5, m);
    auto re = [](const SimulationReport& r, const char* name) {
        return r.find(name, Approach::OneAtATime, "s1", Level::One).relative_efficiency;
    };
    const double ow = re(r500, "OW-Full"), an = re(r500, "ANCOVA-S");
    const double ow250 = re(r250, "OW-Full"), ipw250 = re(r250, "IPW-Full");
    const bool pass = ow >= 1.05 && an >= 1.05 && ow250 >= ipw250 - 0.02;
    return {pass, "N=500 RE(OW-Full) " + fmt("%.3f", ow) + ", RE(ANCOVA-S) " + fmt("%.3f", an) +
                      " (>= 1.05); N=250 RE(OW-Full) " + fmt("%.3f", ow250) + " vs RE(IPW-Full) " +
                      fmt("%.3f", ipw250) + " (>= IPW - 0.02)"};
}

Outcome c7_equivalence() {
    const auto& r = scenario1_alt();
    std::vector<double> v;
    for (const char* m : {"OW-Full", "IPW-Full", "ANCOVA-S"}) {
        const double sd = r.find(m, Approach::OneAtATime, "s1", Level::One).empirical_sd;
        v.push_back(sd * sd);
    }
    const double spread = *std::max_element(v.begin(), v.end()) / *std::min_element(v.begin(), v.end()) - 1.0;
    return {spread <= 0.07, "variances OW " + fmt("%.5f", v[0]) + ", IPW " + fmt("%.5f", v[1]) + ", ANCOVA " +
                                fmt("%.5f", v[2]) + "; max/min - 1 = " + fmt("%.4f", spread) + " (<= 0.07)"};
}

Outcome c8_degeneracy() {
    double weight_gap = 0.0, ancova_gap = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto parts = testing::random_data(300, 3, 2, 500 + seed).parts();
        parts.known_propensity = 0.5;
        const TrialDataset d(parts);
        const auto u = estimate_effects(d, MethodSpec::parse("UNADJ"), d.subgroup_names());
        const auto i = estimate_effects(d, MethodSpec::parse("IPW-Known"), d.subgroup_names());
        const auto o = estimate_effects(d, MethodSpec::parse("OW-Known"), d.subgroup_names());
        for (std::size_t k = 0; k < u.size(); ++k) {
            for (Level l : {Level::One, Level::Zero}) {
                const double scale = std::max(1.0, std::abs(u[k].value(l)));
                weight_gap = std::max(weight_gap, std::abs(i[k].value(l) - u[k].value(l)) / scale);
                weight_gap = std::max(weight_gap, std::abs(o[k].value(l) - u[k].value(l)) / scale);
            }
        }
        auto bare = parts;
        bare.covariates.resize(parts.outcome.size(), 0);
        bare.covariate_names.clear();
        const TrialDataset d0(bare);
        for (const auto& s : d0.subgroup_names()) {
            const auto a = ancova_s(d0, {s}, {{s, Level::One}, {s, Level::Zero}});
            ancova_gap = std::max(ancova_gap, std::abs(a.at({s, Level::One}) - unadjusted(d0, s, 1)));
            ancova_gap = std::max(ancova_gap, std::abs(a.at({s, Level::Zero}) - unadjusted(d0, s, 0)));
        }
    }
    const double eps = 4 * std::numeric_limits<double>::epsilon();
    return {weight_gap <= eps && ancova_gap <= 1e-10,
            "constant-propensity IPW/OW vs UNADJ " + fmt("%.3g", weight_gap) + " (<= 4 eps), ANCOVA-S J=0 vs UNADJ " +
                fmt("%.3g", ancova_gap) + " (<= 1e-10)"};
}

Outcome c9_small_oracles() {
    // Hajek on (Y, Z, e) = (5,1,.8), (3,1,.4), (2,0,.8), (1,0,.4), evaluated term by term.
    const double y[4] = {5, 3, 2, 1}, z[4] = {1, 1, 0, 0}, e[4] = {0.8, 0.4, 0.8, 0.4};
    auto brute = [&](bool ipw) {
        double nt = 0, dt = 0, nc = 0, dc = 0;
        for (int i = 0; i < 4; ++i) {
            const double w1 = ipw ? 1 / e[i] : 1 - e[i];
            const double w0 = ipw ? 1 / (1 - e[i]) : e[i];
            if (z[i] == 1) {
                nt += y[i] * w1;
                dt += w1;
            } else {
                nc += y[i] * w0;
                dc += w0;
            }
        }
        return nt / dt - nc / dc;
    };
    const auto d = testing::make_data(vec({5, 3, 2, 1}), vec({1, 1, 0, 0}), {}, Eigen::MatrixXd::Ones(4, 1));
    const Eigen::VectorXd ev = vec({0.8, 0.4, 0.8, 0.4});
    double gap = std::abs(hajek(d, make_weights(ev, WeightScheme::OW), "s1", 1) - brute(false));
    gap = std::max(gap, std::abs(hajek(d, make_weights(ev, WeightScheme::IPW), "s1", 1) - brute(true)));

    // ANCOVA-S without covariates: treated {2,4}, control {1,3} at s=1 -> cell mean difference.
    const auto d2 = testing::make_data(vec({2, 4, 1, 3, 7, 5}), vec({1, 1, 0, 0, 1, 0}), {},
                                       Eigen::MatrixXd(vec({1, 1, 1, 1, 0, 0})));
    const double cell = (2.0 + 4.0) / 2 - (1.0 + 3.0) / 2;
    gap = std::max(gap, std::abs(ancova_s(d2, {"s1"}, {{"s1", Level::One}}).at({"s1", Level::One}) - cell));

    // Saturated logistic fit: strata (x=0: 3/1), (x=1: 1/3).
    Eigen::MatrixXd dm(8, 2);
    dm.col(0).setOnes();
    dm.col(1) = vec({0, 0, 0, 0, 1, 1, 1, 1});
    const auto fit = fit_logistic(dm, vec({1, 1, 1, 0, 1, 0, 0, 0}));
    const double logit_gap = std::max({std::abs(fit.coefficients(0) - std::log(3.0)),
                                       std::abs(fit.coefficients(1) + 2 * std::log(3.0)),
                                       std::abs(fit.fitted(0) - 0.75), std::abs(fit.fitted(4) - 0.25)});
    return {gap <= 1e-12 && logit_gap <= 1e-8,
            "estimator gap " + fmt("%.3g", gap) + " (<= 1e-12), logistic gap " + fmt("%.3g", logit_gap) + " (<= 1e-8)"};
}

Outcome c10_variance_cross_check() {
    const auto d = generate(testing::scenario(1, 1000, 1, 1010), 0).data;
    const EstimandSpec t{"s1", Level::One};
    const auto ow = MethodSpec::parse("OW-Full");
    const double sw = sandwich_se(d, ow, t);
    const double bs = bootstrap_se(d, ow, t, 1000, 1010, 0.05, CiKind::Normal, threads()).se;
    const double ow_gap = std::abs(sw / bs - 1.0);

    // Closed-form two-sample SE with n - 1 variances.
    double sum[2] = {0, 0}, n[2] = {0, 0}, ss[2] = {0, 0};
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (d.subgroups()(i, 0) != 1) continue;
        const int a = d.treatment()(i) == 1;
        sum[a] += d.outcome()(i);
        n[a] += 1;
    }
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (d.subgroups()(i, 0) != 1) continue;
        const int a = d.treatment()(i) == 1;
        ss[a] += std::pow(d.outcome()(i) - sum[a] / n[a], 2);
    }
    const double closed = std::sqrt(ss[1] / (n[1] - 1) / n[1] + ss[0] / (n[0] - 1) / n[0]);
    const auto un = MethodSpec::parse("UNADJ");
    const double usw = sandwich_se(d, un, t);
    const double ubs = bootstrap_se(d, un, t, 1000, 1011, 0.05, CiKind::Normal, threads()).se;
    const double un_gap = std::max(std::abs(usw / closed - 1.0), std::abs(ubs / closed - 1.0));
    return {ow_gap <= 0.10 && un_gap <= 0.05,
            "OW-Full sandwich " + fmt("%.5f", sw) + " vs bootstrap " + fmt("%.5f", bs) + " (rel " +
                fmt("%.4f", ow_gap) + " <= 0.10); UNADJ vs closed form max rel " + fmt("%.4f", un_gap) + " (<= 0.05)"};
}

Outcome c11_rubin() {
    const auto p = pool_rubin({1, 3}, {0.5, 0.5});
    bool pass = p.estimate == 2.0 && p.total == 3.5;
    std::mt19937_64 rng(1111);
    std::normal_distribution<double> nd;
    std::vector<double> est(10), var(10);
    for (int i = 0; i < 10; ++i) {
        est[i] = nd(rng);
        var[i] = std::abs(nd(rng));
    }
    const auto ref = pool_rubin(est, var);
    std::vector<std::size_t> idx(10);
    std::iota(idx.begin(), idx.end(), 0);
    for (int k = 0; k < 200; ++k) {
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<double> e2, v2;
        for (auto i : idx) {
            e2.push_back(est[i]);
            v2.push_back(var[i]);
        }
        const auto q = pool_rubin(e2, v2);
        pass = pass && q.estimate == ref.estimate && q.total == ref.total && q.within == ref.within &&
               q.between == ref.between;
    }
    return {pass, "pool({1,3},{0.5,0.5}) = (" + fmt("%g", p.estimate) + ", T=" + fmt("%g", p.total) +
                      "); 200 permutations bitwise identical"};
}

Outcome c12_fwer() {
    const auto r = simulate(4, 1000, 1012, 0.0, 0.0, kAll, {Approach::OneAtATime, Approach::Joint});
    double min_fwer = 1.0, lo = 1.0, hi = 0.0;
    for (const auto& f : r.fwer) min_fwer = std::min(min_fwer, f.fwer);
    for (const auto& row : r.rows) {
        lo = std::min(lo, row.rejection_rate);
        hi = std::max(hi, row.rejection_rate);
    }
    return {min_fwer > 0.10 && lo >= 0.035 && hi <= 0.065,
            "min FWER " + fmt("%.4f", min_fwer) + " (> 0.10); single-test rejection in [" + fmt("%.4f", lo) + ", " +
                fmt("%.4f", hi) + "] (within [0.035, 0.065])"};
}

Outcome c13_determinism() {
    ScenarioSpec spec;
    spec.scenario = 4;
    spec.n = 400;
    spec.nsim = 16;
    spec.seed = 1013;
    const auto cfg = make_scenario(spec);
    SimulationOptions o;
    for (const auto& m : standard_methods(Approach::Joint)) o.methods.push_back(m);
    o.methods.push_back(MethodSpec::parse("OW-Full"));

    const auto d = generate(testing::scenario(1, 400, 1, 1013), 0).data;
    AnalysisOptions a;
    a.methods = standard_methods();
    a.bootstrap_replicates = 100;
    a.seed = 1013;

    std::string sim_ref, an_ref;
    bool same = true;
    for (int t : {1, 4, 8}) {
        o.threads = t;
        a.threads = t;
        const auto s = to_json(run_scenario(cfg, o)).dump();
        std::ostringstream csv;
        const auto rep = analyze({d}, a);
        write_forest_csv(csv, rep.rows);
        const auto an = to_json(rep).dump() + csv.str();
        if (t == 1) {
            sim_ref = s;
            an_ref = an;
        }
        same = same && s == sim_ref && an == an_ref;
    }
    return {same, "simulate and analyze outputs byte-identical at 1, 4 and 8 threads"};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"C1 exact balance (OW-Full, 100 datasets)", c1_exact_balance},
        {"C2 Scenario-2 truths", c2_scenario2_truths},
        {"C3 Scenario-1 unbiasedness", c3_unbiased},
        {"C4 nominal type-I error", c4_type_one},
        {"C5 nominal coverage", c5_coverage},
        {"C6 efficiency ordering", c6_efficiency},
        {"C7 asymptotic equivalence", c7_equivalence},
        {"C8 degeneracy identities", c8_degeneracy},
        {"C9 small-instance oracles", c9_small_oracles},
        {"C10 variance cross-validation", c10_variance_cross_check},
        {"C11 Rubin pooling", c11_rubin},
        {"C12 Scenario-4 FWER", c12_fwer},
        {"C13 determinism across threads", c13_determinism},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = fn();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %s: %s [%.1fs]\n", out.pass ? "PASS" : "FAIL", name.c_str(), out.detail.c_str(), secs);
        std::fflush(stdout);
        failed += out.pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed;
}
