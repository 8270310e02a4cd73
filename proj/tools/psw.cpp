// psw: subgroup treatment effects, balance diagnostics and simulation runs.
//
//   psw analyze  --data d1.csv [d2.csv ...] --subgroups s1 s2 --methods UNADJ OW-Full
//   psw balance  --data d.csv --subgroups s1 --methods IPW-Main OW-Full
//   psw simulate --scenario 1 --n 500 --nsim 2000 --seed 7
//
// Options may also come from a TOML file (--config run.toml) with one
// [analyze]/[balance]/[simulate] section; command-line flags win.

#include "psw/analysis.hpp"
#include "psw/balance.hpp"
#include "psw/csv.hpp"
#include "psw/errors.hpp"
#include "psw/parallel.hpp"
#include "psw/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

namespace {

using nlohmann::json;

enum ExitCode { kOk = 0, kFailure = 1, kBadInput = 2, kEstimation = 3 };

struct Roles {
    std::string outcome = "y";
    std::string treatment = "z";
    std::vector<std::string> covariates;
    std::vector<std::string> subgroups;
    std::vector<std::string> function_of_x;
    std::optional<double> known_propensity;
};

struct AnalyzeArgs {
    std::vector<std::string> data;
    Roles roles;
    std::vector<std::string> methods{"UNADJ", "IPW-Main", "IPW-Full", "OW-Main", "OW-Full", "ANCOVA-S"};
    std::string approach = "one-at-a-time";
    std::string variance = "bootstrap";
    int replicates = 1000;
    std::string ci = "normal";
    double alpha = 0.05;
    std::string out = "psw_analyze";
};

struct BalanceArgs {
    std::string data;
    Roles roles;
    std::vector<std::string> methods{"IPW-Main", "IPW-Full", "OW-Main", "OW-Full"};
    std::string approach = "one-at-a-time";
    std::vector<int> levels{1};
    std::string denominator = "unweighted";
    std::string out = "psw_balance";
};

struct SimulateArgs {
    psw::ScenarioSpec spec;
    std::vector<std::string> methods{"UNADJ", "IPW-Main", "IPW-Full", "OW-Main", "OW-Full", "ANCOVA-S"};
    std::string approach = "one-at-a-time";
    std::string variance = "sandwich";
    int replicates = 200;
    std::string out = "psw_simulate";
};

void add_roles(CLI::App* cmd, Roles& roles) {
    cmd->add_option("--outcome", roles.outcome, "Outcome column")->capture_default_str();
    cmd->add_option("--treatment", roles.treatment, "Binary treatment column")->capture_default_str();
    cmd->add_option("--covariates", roles.covariates,
                    "Adjustment covariates (default: every column that is not outcome, treatment or subgroup)");
    cmd->add_option("--subgroups", roles.subgroups, "Binary subgroup columns")->required();
    cmd->add_option("--function-of-x", roles.function_of_x, "Subgroups that are functions of the covariates");
    cmd->add_option("--known-propensity", roles.known_propensity, "Randomization probability for *-Known methods");
}

psw::TrialDataset load(const std::string& path, const Roles& r) {
    const auto table = psw::read_csv(std::filesystem::path(path));
    psw::ColumnRoles roles;
    roles.outcome = r.outcome;
    roles.treatment = r.treatment;
    roles.subgroups = r.subgroups;
    roles.function_of_x = r.function_of_x;
    roles.known_propensity = r.known_propensity;
    roles.covariates = r.covariates;
    if (roles.covariates.empty()) {
        const std::set<std::string> taken(r.subgroups.begin(), r.subgroups.end());
        for (const auto& name : table.names) {
            if (name != r.outcome && name != r.treatment && !taken.count(name)) roles.covariates.push_back(name);
        }
    }
    return psw::validate_dataset(table, roles);
}

std::vector<psw::MethodSpec> parse_methods(const std::vector<std::string>& names,
                                           const std::vector<psw::Approach>& approaches) {
    if (names.empty()) throw psw::InvalidInput("--methods must name at least one method");
    std::vector<psw::MethodSpec> out;
    for (auto a : approaches) {
        for (const auto& n : names) out.push_back(psw::MethodSpec::parse(n, a));
    }
    return out;
}

std::vector<psw::Approach> parse_approaches(const std::string& text) {
    if (text == "both") return {psw::Approach::OneAtATime, psw::Approach::Joint};
    return {psw::parse_approach(text)};
}

psw::VarianceMethod parse_variance(const std::string& text) {
    if (text == "sandwich") return psw::VarianceMethod::Sandwich;
    if (text == "bootstrap") return psw::VarianceMethod::Bootstrap;
    throw psw::InvalidInput("unknown variance method '" + text + "' (expected sandwich or bootstrap)");
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw psw::InvalidInput("cannot write '" + path + "'");
    out << content;
}

json roles_json(const Roles& r) {
    json j = {{"outcome", r.outcome},
              {"treatment", r.treatment},
              {"covariates", r.covariates},
              {"subgroups", r.subgroups},
              {"function_of_x", r.function_of_x}};
    j["known_propensity"] = r.known_propensity ? json(*r.known_propensity) : json(nullptr);
    return j;
}

json inputs_json(const std::vector<std::string>& paths) {
    json out = json::array();
    for (const auto& p : paths) out.push_back({{"path", p}, {"fnv1a64", psw::file_digest(p)}});
    return out;
}

// Thread count is deliberately absent: outputs do not depend on it.
void write_manifest(const std::string& out, const std::string& command, std::uint64_t seed, json options,
                    json inputs, const std::vector<std::string>& outputs) {
    json m = {{"tool", "psw"},
              {"version", psw::version()},
              {"command", command},
              {"seed", seed},
              {"options", std::move(options)},
              {"inputs", std::move(inputs)},
              {"outputs", outputs}};
    write_file(out + ".manifest.json", m.dump(2) + "\n");
}

int run_analyze(const AnalyzeArgs& a, std::uint64_t seed, int threads) {
    std::vector<psw::TrialDataset> datasets;
    for (const auto& p : a.data) datasets.push_back(load(p, a.roles));

    psw::AnalysisOptions opt;
    opt.methods = parse_methods(a.methods, {psw::parse_approach(a.approach)});
    opt.subgroups = a.roles.subgroups;
    opt.variance = parse_variance(a.variance);
    opt.bootstrap_replicates = a.replicates;
    if (a.ci != "normal" && a.ci != "percentile") throw psw::InvalidInput("--ci must be normal or percentile");
    opt.ci = a.ci == "percentile" ? psw::CiKind::Percentile : psw::CiKind::Normal;
    opt.alpha = a.alpha;
    opt.seed = seed;
    opt.threads = threads;

    const auto report = psw::analyze(datasets, opt);
    write_file(a.out + ".json", psw::to_json(report).dump(2) + "\n");
    std::ostringstream csv;
    psw::write_forest_csv(csv, report.rows);
    write_file(a.out + ".csv", csv.str());
    write_manifest(a.out, "analyze", seed,
                   {{"roles", roles_json(a.roles)},
                    {"methods", a.methods},
                    {"approach", a.approach},
                    {"variance", a.variance},
                    {"replicates", a.replicates},
                    {"ci", a.ci},
                    {"alpha", a.alpha}},
                   inputs_json(a.data), {a.out + ".json", a.out + ".csv"});

    for (const auto& r : report.rows) {
        std::cout << std::left << std::setw(12) << psw::label(r.estimand) << std::setw(10) << r.method.name()
                  << std::right << std::setw(11) << psw::format_double(r.estimate) << "  se "
                  << psw::format_double(r.se) << "  p " << psw::format_double(r.p_value);
        if (!r.ok()) std::cout << "  " << r.status;
        std::cout << '\n';
    }
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
    return kOk;
}

int run_balance(const BalanceArgs& a, std::uint64_t seed) {
    const auto data = load(a.data, a.roles);
    psw::BalanceOptions opt;
    opt.methods = parse_methods(a.methods, {psw::parse_approach(a.approach)});
    opt.subgroups = a.roles.subgroups;
    opt.levels = a.levels;
    for (int l : a.levels) {
        if (l != 0 && l != 1) throw psw::InvalidInput("--levels takes 0 and/or 1");
    }
    if (a.denominator == "weighted") opt.denominator = psw::SmdDenominator::WeightedPooled;
    else if (a.denominator != "unweighted") throw psw::InvalidInput("--denominator must be unweighted or weighted");

    const auto tables = psw::balance_report(data, opt);
    json j = json::array();
    for (const auto& t : tables) j.push_back(psw::balance_json(t));
    write_file(a.out + ".json", j.dump(2) + "\n");
    std::ostringstream csv;
    psw::write_balance_csv(csv, tables);
    write_file(a.out + ".csv", csv.str());
    write_manifest(a.out, "balance", seed,
                   {{"roles", roles_json(a.roles)},
                    {"methods", a.methods},
                    {"approach", a.approach},
                    {"levels", a.levels},
                    {"denominator", a.denominator}},
                   inputs_json({a.data}), {a.out + ".json", a.out + ".csv"});

    for (const auto& t : tables) {
        std::cout << t.scheme << ": max |SMD| " << psw::format_double(t.max_smd()) << '\n';
        for (const auto& w : t.warnings) std::cerr << "warning: " << w << '\n';
    }
    return kOk;
}

int run_simulate(SimulateArgs a, std::uint64_t seed, int threads) {
    a.spec.seed = seed;
    const auto config = psw::make_scenario(a.spec);
    psw::SimulationOptions opt;
    opt.methods = parse_methods(a.methods, parse_approaches(a.approach));
    opt.variance = parse_variance(a.variance);
    opt.bootstrap_replicates = a.replicates;
    opt.threads = threads;

    const auto report = psw::run_scenario(config, opt);
    write_file(a.out + ".json", psw::to_json(report).dump(2) + "\n");
    std::ostringstream csv;
    psw::write_report_csv(csv, report);
    write_file(a.out + ".csv", csv.str());
    write_manifest(a.out, "simulate", seed,
                   {{"scenario", psw::to_json(config)},
                    {"methods", a.methods},
                    {"approach", a.approach},
                    {"variance", a.variance},
                    {"replicates", a.replicates}},
                   json::array(), {a.out + ".json", a.out + ".csv"});

    std::printf("%-10s %-14s %-4s %-4s %8s %8s %8s %8s %7s %7s\n", "method", "approach", "sub", "est",
                "truth", "mean", "emp.sd", "mean.se", "reject", "cover");
    for (const auto& r : report.rows) {
        std::printf("%-10s %-14s %-4s %-4s %8.4f %8.4f %8.4f %8.4f %7.4f %7.4f\n", r.method.c_str(),
                    psw::to_string(r.approach).c_str(), r.subgroup.c_str(), psw::to_string(r.level).c_str(),
                    r.truth, r.mean_estimate, r.empirical_sd, r.mean_se, r.rejection_rate, r.coverage);
    }
    for (const auto& f : report.fwer) {
        if (f.tests > 0) {
            std::printf("FWER %-10s %-14s %.4f (%d null tests)\n", f.method.c_str(),
                        psw::to_string(f.approach).c_str(), f.fwer, f.tests);
        }
    }
    for (const auto& e : report.failure_examples) std::fprintf(stderr, "failures: %s\n", e.c_str());
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Subgroup treatment effects with covariate adjustment and propensity-score weighting"};
    app.set_config("--config", "", "TOML file with [analyze], [balance] or [simulate] sections");
    app.set_version_flag("--version", psw::version());
    app.require_subcommand(1);

    std::uint64_t seed = 1;
    int threads = psw::default_threads();

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "Estimate subgroup ATEs and HTEs on one or more datasets");
    analyze->add_option("--data", an.data, "CSV dataset(s); several imputations are pooled")->required();
    add_roles(analyze, an.roles);
    analyze->add_option("--methods", an.methods, "Estimators")->capture_default_str();
    analyze->add_option("--approach", an.approach, "one-at-a-time or joint")->capture_default_str();
    analyze->add_option("--variance", an.variance, "bootstrap or sandwich")->capture_default_str();
    analyze->add_option("-B,--replicates", an.replicates, "Bootstrap replicates")->capture_default_str()
        ->check(CLI::Range(2, 1000000));
    analyze->add_option("--ci", an.ci, "normal or percentile (bootstrap only)")->capture_default_str();
    analyze->add_option("--alpha", an.alpha, "Test level")->capture_default_str()->check(CLI::Range(1e-6, 0.5));
    analyze->add_option("--out", an.out, "Output prefix")->capture_default_str();

    BalanceArgs ba;
    auto* balance = app.add_subcommand("balance", "Connect-S covariate balance tables");
    balance->add_option("--data", ba.data, "CSV dataset")->required();
    add_roles(balance, ba.roles);
    balance->add_option("--methods", ba.methods, "Weighting schemes")->capture_default_str();
    balance->add_option("--approach", ba.approach, "one-at-a-time or joint")->capture_default_str();
    balance->add_option("--levels", ba.levels, "Subgroup levels to tabulate")->capture_default_str();
    balance->add_option("--denominator", ba.denominator, "SMD pooled SD: unweighted or weighted")
        ->capture_default_str();
    balance->add_option("--out", ba.out, "Output prefix")->capture_default_str();

    SimulateArgs si;
    auto* simulate = app.add_subcommand("simulate", "Monte Carlo study for Scenarios 1-4");
    simulate->add_option("--scenario", si.spec.scenario, "1, 2, 3 or 4")->capture_default_str()
        ->check(CLI::Range(1, 4));
    simulate->add_option("--n", si.spec.n, "Trial size")->capture_default_str()->check(CLI::PositiveNumber);
    simulate->add_option("--nsim", si.spec.nsim, "Replicates")->capture_default_str()->check(CLI::Range(2, 100000000));
    simulate->add_option("--alpha", si.spec.alpha, "Test level")->capture_default_str();
    simulate->add_option("--beta3", si.spec.beta3, "Main treatment effect")->capture_default_str();
    simulate->add_option("--beta5", si.spec.beta5, "Treatment x subgroup effect (active subgroups)")
        ->capture_default_str();
    simulate->add_option("--m", si.spec.m, "Scenario 4: number of active subgroups")->capture_default_str();
    simulate->add_flag("--heterogeneous", si.spec.heterogeneous, "Scenario 4: add treatment x covariate terms");
    simulate->add_flag("--misspecified", si.spec.misspecified, "Scenario 4: add covariate product terms");
    simulate->add_option("--methods", si.methods, "Estimators")->capture_default_str();
    simulate->add_option("--approach", si.approach, "one-at-a-time, joint or both")->capture_default_str();
    simulate->add_option("--variance", si.variance, "sandwich or bootstrap")->capture_default_str();
    simulate->add_option("-B,--replicates", si.replicates, "Bootstrap replicates per trial")->capture_default_str();
    simulate->add_option("--out", si.out, "Output prefix")->capture_default_str();

    for (auto* cmd : {analyze, balance, simulate}) {
        cmd->add_option("--seed", seed, "Seed for every random draw")->capture_default_str();
        cmd->add_option("--threads", threads, "Worker threads")->envname("PSW_THREADS")->check(CLI::PositiveNumber);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kBadInput;
    }

    try {
        if (analyze->parsed()) return run_analyze(an, seed, threads);
        if (balance->parsed()) return run_balance(ba, seed);
        if (simulate->parsed()) return run_simulate(si, seed, threads);
    } catch (const psw::InvalidInput& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const psw::EstimationError& e) {
        std::cerr << "estimation failed: " << e.what() << '\n';
        return kEstimation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kFailure;
}
