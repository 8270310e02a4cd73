#include "support.hpp"

#include "psw/balance.hpp"
#include "psw/design.hpp"
#include "psw/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace psw;
using testing::vec;

TEST_CASE("SMD basics") {
    const auto same = testing::make_data(vec({1, 2, 3, 4}), vec({1, 0, 1, 0}), Eigen::MatrixXd(vec({1, 1, 2, 2})),
                                         Eigen::MatrixXd::Ones(4, 1));
    CHECK(smd(same, nullptr, Cohort{"s1", 1}, "x1") == 0.0);

    const auto split = testing::make_data(vec({1, 2, 3, 4}), vec({1, 1, 0, 0}), Eigen::MatrixXd(vec({1, 1, 0, 0})),
                                          Eigen::MatrixXd::Ones(4, 1));
    CHECK(std::isinf(smd(split, nullptr, Cohort{"s1", 1}, "x1")));
    CHECK_THROWS_AS(smd(split, nullptr, Cohort{"s1", 0}, "x1"), EstimationError);

    const auto split_const = testing::make_data(vec({1, 2, 3, 4}), vec({1, 1, 0, 0}),
                                                Eigen::MatrixXd(vec({5, 5, 5, 5})), Eigen::MatrixXd::Ones(4, 1));
    CHECK(smd(split_const, nullptr, Cohort{"s1", 1}, "x1") == 0.0);
}

TEST_CASE("SMD hand evaluation, affine invariance and constant weights") {
    const auto d = testing::random_data(200, 2, 1, 6);
    const Eigen::VectorXd x = d.covariates().col(0);
    const auto sel = d.level_selector("s1", 1);

    double m[2] = {0, 0}, n[2] = {0, 0}, ss[2] = {0, 0};
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (!sel(i)) continue;
        const int a = d.treatment()(i) == 1;
        m[a] += x(i);
        n[a] += 1;
    }
    m[0] /= n[0];
    m[1] /= n[1];
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (!sel(i)) continue;
        const int a = d.treatment()(i) == 1;
        ss[a] += (x(i) - m[a]) * (x(i) - m[a]);
    }
    const double oracle = std::abs(m[1] - m[0]) / std::sqrt((ss[1] / (n[1] - 1) + ss[0] / (n[0] - 1)) / 2);
    const Cohort c{"s1", 1};
    CHECK(smd(d, nullptr, c, x) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(smd(d, nullptr, c, Eigen::VectorXd((3.0 * x.array() - 7.0).matrix())) ==
          doctest::Approx(oracle).epsilon(1e-10));

    const Eigen::VectorXd half = Eigen::VectorXd::Constant(d.size(), 0.5);
    const auto w = make_weights(half, WeightScheme::OW);
    CHECK(smd(d, &w, c, x) == doctest::Approx(smd(d, nullptr, c, x)).epsilon(1e-14));
}

TEST_CASE("OW-Full balances every in-model covariate exactly") {
    const auto d = generate(testing::scenario(1, 250, 1, 99), 0).data;
    const auto dm = ps_design(d, {"s1"}, PsForm::FullInteraction);
    const auto fit = fit_logistic(dm, d.treatment());
    for (const auto& cohort : {Cohort{"s1", 1}, Cohort{"s1", 0}, Cohort::overall()}) {
        for (Eigen::Index k = 1; k < dm.cols(); ++k) {
            CHECK(exact_balance_residual(d, fit, cohort, Eigen::VectorXd(dm.values.col(k))) <= 1e-8);
        }
    }
}

TEST_CASE("a covariate left out of the propensity model stays imbalanced") {
    const auto d = testing::random_data(200, 3, 1, 13);
    Eigen::MatrixXd dm(d.size(), 3);
    dm << Eigen::VectorXd::Ones(d.size()), d.covariates().col(0), d.subgroups().col(0);
    const auto fit = fit_logistic(dm, d.treatment());
    CHECK(exact_balance_residual(d, fit, Cohort{"s1", 1}, "x3") > 0.01);
    CHECK(exact_balance_residual(d, fit, Cohort::overall(), "x1") <= 1e-8);
}

TEST_CASE("unweighted small trials show chance imbalance") {
    const auto cfg = testing::scenario(1, 250, 1, 123);
    int imbalanced = 0;
    const int seeds = 100;
    for (int b = 0; b < seeds; ++b) {
        const auto d = generate(cfg, static_cast<std::uint64_t>(b)).data;
        imbalanced += connect_s(d, BalanceWeights{}, {"s1"}).max_smd() > 0.1;
    }
    CHECK(imbalanced >= 90);
}

TEST_CASE("Connect-S shapes, severity and exports") {
    const auto d = testing::make_data(vec({1, 2, 3, 4, 5, 6}), vec({1, 0, 1, 0, 1, 0}),
                                      Eigen::MatrixXd(vec({0.1, 0.4, 0.3, 0.2, 0.9, 0.5})),
                                      Eigen::MatrixXd(vec({1, 1, 0, 0, 1, 1})));
    const auto t = connect_s(d, BalanceWeights{}, {"s1"});
    CHECK(t.rows.size() == 2);
    CHECK(t.rows[0].label == "s1=1");
    CHECK(t.rows[1].label == "Overall");
    CHECK(t.rows[0].smd.size() == 1);
    CHECK(t.rows[0].n == 4);
    CHECK(severity(0.05) == "<0.1");
    CHECK(severity(0.15) == "0.1-0.2");
    CHECK(severity(0.25) == ">0.2");

    std::ostringstream csv;
    write_balance_csv(csv, {t});
    CHECK(csv.str().rfind("subgroup,level,covariate,scheme,smd,n,severity\n", 0) == 0);
    const auto j = balance_json(t);
    CHECK(j["rows"].size() == 2);
}

TEST_CASE("empty subgroup level is flagged and the table still builds") {
    const auto d = testing::make_data(vec({1, 2, 3, 4}), vec({1, 0, 1, 0}), Eigen::MatrixXd(vec({0.1, 0.4, 0.3, 0.2})),
                                      Eigen::MatrixXd(vec({1, 0, 0, 0})));
    const auto t = connect_s(d, BalanceWeights{}, {"s1"}, {1, 0});
    CHECK(t.row("s1=1").flagged);
    CHECK_FALSE(t.row("s1=0").flagged);
    CHECK_FALSE(t.row("Overall").flagged);
    CHECK_FALSE(t.warnings.empty());
}

TEST_CASE("weighted tables differ from unweighted ones and OW-Full is balanced") {
    const auto d = testing::random_data(120, 3, 1, 31);
    const auto raw = connect_s(d, BalanceWeights{}, {"s1"}, {1, 0});
    const auto ipw = connect_s(d, balance_weights(d, MethodSpec::parse("IPW-Main"), {"s1"}), {"s1"}, {1, 0});
    const auto ow = connect_s(d, balance_weights(d, MethodSpec::parse("OW-Full"), {"s1"}), {"s1"}, {1, 0});
    CHECK(ipw.scheme == "IPW-Main");
    CHECK(raw.row("s1=1").smd != ipw.row("s1=1").smd);
    CHECK(ow.max_smd() <= 1e-8);
    CHECK_THROWS_AS(balance_weights(d, MethodSpec::parse("ANCOVA-S"), {"s1"}), InvalidInput);
}
