#include "support.hpp"

#include "psw/analysis.hpp"
#include "psw/csv.hpp"
#include "psw/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace psw;
namespace fs = std::filesystem;

namespace {

// HF-ACTION-shaped synthetic trial: 4 covariates strongly tied to the outcome, one subgroup.
TrialDataset prognostic_trial(Eigen::Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::bernoulli_distribution half(0.5), sub(0.4);
    Eigen::VectorXd y(n), z(n);
    Eigen::MatrixXd x(n, 4), s(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double baseline = nd(rng);
        x(i, 0) = baseline + 0.3 * nd(rng);
        x(i, 1) = nd(rng);
        x(i, 2) = half(rng);
        x(i, 3) = nd(rng);
        s(i, 0) = sub(rng);
        z(i) = half(rng);
        y(i) = 3.0 * baseline + 0.5 * x(i, 1) + 0.2 * z(i) + 0.3 * z(i) * s(i, 0) + 0.5 * nd(rng);
    }
    return testing::make_data(y, z, x, s);
}

AnalysisOptions options(std::vector<std::string> methods, VarianceMethod v, int b = 200) {
    AnalysisOptions o;
    for (const auto& m : methods) o.methods.push_back(MethodSpec::parse(m));
    o.variance = v;
    o.bootstrap_replicates = b;
    o.seed = 9;
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST_CASE("one dataset, two methods, one subgroup gives six rows") {
    const auto d = testing::random_data(200, 2, 1, 3);
    const auto r = analyze({d}, options({"UNADJ", "OW-Full"}, VarianceMethod::Sandwich));
    CHECK(r.rows.size() == 6);
    CHECK_FALSE(r.pooled);
    for (const auto& row : r.rows) CHECK(row.ok());
    std::ostringstream csv;
    write_forest_csv(csv, r.rows);
    CHECK(csv.str().rfind("estimand,method,estimate,se,ci_lo,ci_hi,p,status\n", 0) == 0);
}

TEST_CASE("several datasets are pooled by Rubin's rule") {
    std::vector<TrialDataset> sets;
    for (std::uint64_t k = 0; k < 10; ++k) sets.push_back(testing::random_data(200, 2, 1, 100 + k));
    const auto r = analyze(sets, options({"OW-Full"}, VarianceMethod::Sandwich));
    REQUIRE(r.pooled);
    REQUIRE(r.per_dataset.size() == 10);
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        std::vector<double> est, var;
        for (const auto& rows : r.per_dataset) {
            est.push_back(rows[i].estimate);
            var.push_back(rows[i].se * rows[i].se);
        }
        double mean = 0, w = 0, b = 0;
        for (int k = 0; k < 10; ++k) {
            mean += est[k] / 10;
            w += var[k] / 10;
        }
        for (int k = 0; k < 10; ++k) b += (est[k] - mean) * (est[k] - mean) / 9;
        CHECK(r.rows[i].estimate == doctest::Approx(mean).epsilon(1e-12));
        CHECK(r.rows[i].se * r.rows[i].se == doctest::Approx(w + 1.1 * b).epsilon(1e-10));
    }
}

TEST_CASE("covariate adjustment shrinks the bootstrap SE on prognostic data") {
    const auto d = prognostic_trial(600, 5);
    const auto r = analyze({d}, options({"UNADJ", "OW-Full", "ANCOVA-S"}, VarianceMethod::Bootstrap, 1000));
    auto se = [&](const std::string& m) {
        for (const auto& row : r.rows) {
            if (row.method.name() == m && row.estimand.level == Level::One) return row.se;
        }
        return std::nan("");
    };
    CHECK(se("OW-Full") < se("UNADJ"));
    CHECK(se("ANCOVA-S") < se("UNADJ"));
}

TEST_CASE("constant outcome gives zero estimates and zero SEs") {
    auto d = testing::random_data(150, 2, 1, 7);
    d = d.with_outcome(Eigen::VectorXd::Constant(d.size(), 4.2));
    for (auto v : {VarianceMethod::Sandwich, VarianceMethod::Bootstrap}) {
        const auto r = analyze({d}, options({"UNADJ", "IPW-Main", "IPW-Full", "OW-Main", "OW-Full", "ANCOVA-S"}, v, 50));
        for (const auto& row : r.rows) {
            INFO(row.method.name(), " ", label(row.estimand));
            CHECK(row.ok());
            CHECK(row.estimate == 0.0);
            CHECK(row.se == 0.0);
        }
    }
}

TEST_CASE("estimation failures are recorded per row") {
    Eigen::VectorXd y(40), z(40);
    Eigen::MatrixXd s(40, 2);
    for (Eigen::Index i = 0; i < 40; ++i) {
        z(i) = static_cast<double>(i % 2);
        y(i) = static_cast<double>(i % 5);
        s(i, 0) = static_cast<double>((i / 2) % 2);
        s(i, 1) = z(i);  // level 1 has no controls
    }
    const auto d = testing::make_data(y, z, {}, s);
    const auto r = analyze({d}, options({"UNADJ"}, VarianceMethod::Sandwich));
    REQUIRE(r.rows.size() == 6);
    for (const auto& row : r.rows) {
        if (row.estimand.subgroup == "s1") CHECK(row.ok());
        else CHECK(row.status.find("failed") == 0);
    }
}

TEST_CASE("balance report: unweighted first, then each scheme") {
    const auto d = testing::random_data(150, 3, 2, 44);
    BalanceOptions o;
    o.methods = {MethodSpec::parse("UNADJ"), MethodSpec::parse("IPW-Main"), MethodSpec::parse("OW-Full")};
    const auto tables = balance_report(d, o);
    REQUIRE(tables.size() == 3);
    CHECK(tables[0].scheme == "unweighted");
    CHECK(tables[2].scheme == "OW-Full");
    CHECK(tables[2].max_smd() <= 1e-8);
    CHECK(tables[0].rows.size() == 3);
}

#ifdef PSW_CLI
namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(PSW_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("command line: outputs are byte-identical across thread counts") {
    const fs::path dir = fs::temp_directory_path() / "psw_cli_test";
    fs::create_directories(dir);
    const auto data = prognostic_trial(200, 3);
    {
        std::ofstream f(dir / "trial.csv");
        write_csv(f, to_table(data));
    }
    const std::string csv = (dir / "trial.csv").string();
    std::string ref_sim, ref_an;
    for (int threads : {1, 4, 8}) {
        const auto t = std::to_string(threads);
        const auto sim = (dir / ("sim" + t)).string();
        const auto an = (dir / ("an" + t)).string();
        REQUIRE(run("simulate --scenario 1 --n 200 --nsim 4 --seed 7 --threads " + t + " --out " + sim) == 0);
        REQUIRE(run("analyze --data " + csv + " --subgroups s1 --methods UNADJ OW-Full -B 60 --seed 7 --threads " +
                    t + " --out " + an) == 0);
        const auto s = slurp(sim + ".json") + slurp(sim + ".csv");
        const auto a = slurp(an + ".json") + slurp(an + ".csv");
        if (threads == 1) {
            ref_sim = s;
            ref_an = a;
            CHECK(slurp(sim + ".manifest.json").find("\"seed\": 7") != std::string::npos);
        }
        CHECK(s == ref_sim);
        CHECK(a == ref_an);
    }
}

TEST_CASE("command line: config file, precedence and exit codes") {
    const fs::path dir = fs::temp_directory_path() / "psw_cli_test";
    fs::create_directories(dir);
    {
        std::ofstream f(dir / "run.toml");
        f << "[simulate]\nscenario = 4\nn = 300\nnsim = 2\nm = 4\napproach = \"both\"\nmethods = [\"UNADJ\", \"OW-Full\"]\n";
    }
    const auto out = (dir / "cfg").string();
    REQUIRE(run("--config " + (dir / "run.toml").string() + " simulate --n 250 --out " + out) == 0);
    const auto report = slurp(out + ".json");
    CHECK(report.find("\"n\": 250") != std::string::npos);
    CHECK(report.find("\"scenario\": 4") != std::string::npos);
    CHECK(report.find("\"joint\"") != std::string::npos);
    CHECK(report.find("\"one-at-a-time\"") != std::string::npos);

    CHECK(run("simulate --scenario 9") != 0);
    CHECK(run("analyze --data /nonexistent.csv --subgroups s1") != 0);
    CHECK(run("bogus") != 0);
}
#endif
