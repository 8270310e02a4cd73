#pragma once

#include "psw/data.hpp"
#include "psw/simulation.hpp"

#include <Eigen/Dense>

#include <initializer_list>
#include <random>
#include <string>
#include <vector>

namespace testing {

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

/// Dataset with covariates x1..xJ and subgroups s1..sR (names overridable).
inline psw::TrialDataset make_data(Eigen::VectorXd y, Eigen::VectorXd z, Eigen::MatrixXd x,
                                   Eigen::MatrixXd s, std::vector<std::string> xnames = {},
                                   std::vector<std::string> snames = {}) {
    psw::DatasetParts p;
    p.outcome = std::move(y);
    p.treatment = std::move(z);
    if (x.rows() == 0) x.resize(p.outcome.size(), 0);
    p.covariates = std::move(x);
    p.subgroups = std::move(s);
    if (xnames.empty()) {
        for (Eigen::Index j = 0; j < p.covariates.cols(); ++j) xnames.push_back("x" + std::to_string(j + 1));
    }
    if (snames.empty()) {
        for (Eigen::Index r = 0; r < p.subgroups.cols(); ++r) snames.push_back("s" + std::to_string(r + 1));
    }
    p.covariate_names = std::move(xnames);
    p.subgroup_names = std::move(snames);
    return psw::TrialDataset(std::move(p));
}

inline psw::ScenarioConfig scenario(int id, Eigen::Index n, int nsim, std::uint64_t seed,
                                    double beta3 = -1.0, double beta5 = 0.5) {
    psw::ScenarioSpec spec;
    spec.scenario = id;
    spec.n = n;
    spec.nsim = nsim;
    spec.seed = seed;
    spec.beta3 = beta3;
    spec.beta5 = beta5;
    return psw::make_scenario(spec);
}

/// Seeded random dataset: J normal covariates, R Bernoulli(0.3) subgroups,
/// Bernoulli(0.5) treatment, outcome linear in X with noise.
inline psw::TrialDataset random_data(Eigen::Index n, int j, int r, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::bernoulli_distribution bz(0.5), bs(0.3);
    Eigen::VectorXd y(n), z(n);
    Eigen::MatrixXd x(n, j), s(n, r);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int k = 0; k < j; ++k) x(i, k) = nd(rng);
        for (int k = 0; k < r; ++k) s(i, k) = bs(rng) ? 1.0 : 0.0;
        z(i) = bz(rng) ? 1.0 : 0.0;
        y(i) = 1.0 + x.row(i).sum() * 0.5 + 0.8 * z(i) + 0.5 * s.row(i).sum() + nd(rng);
    }
    return make_data(y, z, x, s);
}

} // namespace testing
