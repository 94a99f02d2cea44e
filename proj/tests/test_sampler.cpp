#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "labelbias/errors.hpp"
#include "labelbias/rng.hpp"
#include "labelbias/sampler.hpp"

using namespace labelbias;
using mcmc::Chains;
using mcmc::ParamSpec;
using mcmc::SamplerConfig;
using mcmc::TargetDensity;

namespace {

TargetDensity standard_normal_2d() {
    TargetDensity t;
    t.logdensity = [](const Eigen::VectorXd& x) { return -0.5 * x.squaredNorm(); };
    t.params = {ParamSpec::unbounded("x0"), ParamSpec::unbounded("x1")};
    return t;
}

SamplerConfig quick_config(std::uint64_t seed, int chains = 4, int warmup = 1000,
                           int draws = 5000) {
    SamplerConfig c;
    c.chains = chains;
    c.warmup = warmup;
    c.draws = draws;
    c.seed = seed;
    c.initial_step_scale = 0.5;
    c.adapt_window = 50;
    return c;
}

// Chains filled directly, for the diagnostic edge cases.
Chains synthetic_chains(const std::vector<Eigen::MatrixXd>& draws) {
    Chains c;
    c.draws = draws;
    for (Eigen::Index k = 0; k < draws[0].cols(); ++k) {
        c.param_names.push_back("p" + std::to_string(k));
    }
    c.accept_rate.assign(draws.size(), 0.3);
    return c;
}

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("2-D standard normal: moments, rhat, ess") {
    const Chains chains = mcmc::sample_posterior(standard_normal_2d(), Eigen::Vector2d(0, 0),
                                                 quick_config(117));
    for (Eigen::Index p = 0; p < 2; ++p) {
        CHECK(std::abs(chains.mean(p)) < 0.02);
        CHECK(std::abs(chains.sd(p) * chains.sd(p) - 1.0) < 0.05);
    }
    // cross-covariance close to zero
    const Eigen::VectorXd a = chains.flattened(0), b = chains.flattened(1);
    const double cov = ((a.array() - a.mean()) * (b.array() - b.mean())).mean();
    CHECK(std::abs(cov) < 0.05);

    const Eigen::VectorXd r = mcmc::rhat(chains);
    const Eigen::VectorXd e = mcmc::ess(chains);
    CHECK(r.maxCoeff() < 1.01);
    CHECK(e.minCoeff() > 400.0);
    for (const double ar : chains.accept_rate) {
        CHECK(ar > 0.0);
        CHECK(ar < 1.0);
    }
}

TEST_CASE("conjugate normal-mean model matches the closed form") {
    // y_i ~ normal(mu, sigma) with sigma known, mu ~ normal(mu0, tau0)
    const double sigma = 2.0, mu0 = 0.0, tau0 = 3.0;
    RngStream rng(77);
    const int n = 50;
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = rng.normal(1.3, sigma);

    const double prec = n / (sigma * sigma) + 1.0 / (tau0 * tau0);
    const double post_mean = (y.sum() / (sigma * sigma) + mu0 / (tau0 * tau0)) / prec;
    const double post_sd = std::sqrt(1.0 / prec);

    TargetDensity t;
    t.logdensity = [&](const Eigen::VectorXd& v) {
        const double mu = v[0];
        double lp = -0.5 * (mu - mu0) * (mu - mu0) / (tau0 * tau0);
        lp += -0.5 * (y.array() - mu).square().sum() / (sigma * sigma);
        return lp;
    };
    t.params = {ParamSpec::unbounded("mu")};

    const Chains chains = mcmc::sample_posterior(t, Eigen::VectorXd::Zero(1), quick_config(5));
    CHECK(std::abs(chains.mean(0) - post_mean) < 0.01);
    CHECK(chains.sd(0) == doctest::Approx(post_sd).epsilon(0.1));
}

TEST_CASE("bit-identical reruns under a fixed seed") {
    const auto c1 = mcmc::sample_posterior(standard_normal_2d(), Eigen::Vector2d(0, 0),
                                           quick_config(42, 2, 200, 300));
    const auto c2 = mcmc::sample_posterior(standard_normal_2d(), Eigen::Vector2d(0, 0),
                                           quick_config(42, 2, 200, 300));
    REQUIRE(c1.num_chains() == c2.num_chains());
    for (int c = 0; c < c1.num_chains(); ++c) CHECK(c1.draws[c] == c2.draws[c]);
    const auto c3 = mcmc::sample_posterior(standard_normal_2d(), Eigen::Vector2d(0, 0),
                                           quick_config(43, 2, 200, 300));
    CHECK(c1.draws[0] != c3.draws[0]);
}

TEST_CASE("constrained parameters never leave their support") {
    // x ~ half-normal(1), rho ~ uniform-ish on (-1, 1) via a flat density
    TargetDensity t;
    t.logdensity = [](const Eigen::VectorXd& v) { return -0.5 * v[0] * v[0]; };
    t.params = {ParamSpec::positive("scale"), ParamSpec::interval("rho", -1.0, 1.0)};
    Eigen::VectorXd init(2);
    init << 0.7, 0.0;
    const Chains chains = mcmc::sample_posterior(t, init, quick_config(9, 2, 500, 2000));

    long violations = 0;
    for (const auto& m : chains.draws) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            if (!(m(i, 0) > 0.0)) ++violations;
            if (!(m(i, 1) > -1.0 && m(i, 1) < 1.0)) ++violations;
        }
    }
    CHECK(violations == 0);

    // the log-Jacobian makes the half-normal mean come out right
    CHECK(std::abs(chains.mean(0) - std::sqrt(2.0 / std::numbers::pi)) < 0.03);
}

TEST_CASE("non-finite density at init") {
    TargetDensity t;
    t.logdensity = [](const Eigen::VectorXd& v) {
        return v[0] > 1.0 ? -0.5 * v[0] * v[0] : -std::numeric_limits<double>::infinity();
    };
    t.params = {ParamSpec::unbounded("x")};
    CHECK_THROWS_AS(mcmc::sample_posterior(t, Eigen::VectorXd::Zero(1), quick_config(1, 2, 100, 100)),
                    NonFiniteDensityAtInit);

    TargetDensity pos;
    pos.logdensity = [](const Eigen::VectorXd& v) { return -v[0]; };
    pos.params = {ParamSpec::positive("x")};
    Eigen::VectorXd bad(1);
    bad << -2.0;
    CHECK_THROWS_AS(mcmc::sample_posterior(pos, bad, quick_config(1, 2, 100, 100)),
                    NonFiniteDensityAtInit);
}

TEST_CASE("degenerate target rejects every proposal") {
    // finite only on a measure-zero point: every move is rejected
    TargetDensity t;
    t.logdensity = [](const Eigen::VectorXd& v) {
        return v[0] == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
    };
    t.params = {ParamSpec::unbounded("x")};
    CHECK_THROWS_AS(mcmc::sample_posterior(t, Eigen::VectorXd::Zero(1), quick_config(3, 2, 100, 200)),
                    AllProposalsRejected);
}

TEST_CASE("config validation") {
    const auto target = standard_normal_2d();
    SamplerConfig c = quick_config(1);
    c.chains = 1;
    CHECK_THROWS_AS(mcmc::sample_posterior(target, Eigen::Vector2d(0, 0), c),
                    std::invalid_argument);
    c = quick_config(1);
    c.draws = 50;
    CHECK_THROWS_AS(mcmc::sample_posterior(target, Eigen::Vector2d(0, 0), c),
                    std::invalid_argument);
    c = quick_config(1);
    c.warmup = 10;  // < adapt_window
    CHECK_THROWS_AS(mcmc::sample_posterior(target, Eigen::Vector2d(0, 0), c),
                    std::invalid_argument);
}

TEST_CASE("rhat conventions") {
    // identical constant chains: 1 by convention
    const Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(200, 1, 3.14);
    const Chains same = synthetic_chains({constant, constant});
    CHECK(mcmc::rhat(same)[0] == doctest::Approx(1.0));

    // one chain offset by +10: far above any convergence threshold
    RngStream rng(15);
    Eigen::MatrixXd a(200, 1), b(200, 1);
    for (Eigen::Index i = 0; i < 200; ++i) {
        a(i, 0) = rng.normal();
        b(i, 0) = rng.normal() + 10.0;
    }
    const Chains offset = synthetic_chains({a, b});
    CHECK(mcmc::rhat(offset)[0] > 1.5);

    CHECK_THROWS_AS(mcmc::rhat(synthetic_chains({a})), std::invalid_argument);
}

TEST_CASE("ess conventions") {
    RngStream rng(25);
    // i.i.d. draws: ESS within 10% of the total
    Eigen::MatrixXd a(2000, 1), b(2000, 1);
    for (Eigen::Index i = 0; i < 2000; ++i) {
        a(i, 0) = rng.normal();
        b(i, 0) = rng.normal();
    }
    const Chains iid = synthetic_chains({a, b});
    const double total = 4000.0;
    CHECK(mcmc::ess(iid)[0] == doctest::Approx(total).epsilon(0.10));

    // constant chains carry roughly one point of information in total
    const Eigen::MatrixXd c = Eigen::MatrixXd::Constant(500, 1, 1.0);
    const Chains constant = synthetic_chains({c, c});
    CHECK(mcmc::ess(constant)[0] >= 0.5);
    CHECK(mcmc::ess(constant)[0] <= 2.0);

    // alternating +-1: antithetic, so the estimate is capped at the total
    Eigen::MatrixXd alt(500, 1);
    for (Eigen::Index i = 0; i < 500; ++i) alt(i, 0) = i % 2 == 0 ? 1.0 : -1.0;
    const Chains anti = synthetic_chains({alt, alt});
    CHECK(mcmc::ess(anti)[0] == doctest::Approx(1000.0));
}

TEST_CASE("chains export: one row per draw, columns are parameters") {
    const Chains chains = mcmc::sample_posterior(standard_normal_2d(), Eigen::Vector2d(0, 0),
                                                 quick_config(77, 2, 200, 150));
    const auto path = std::filesystem::temp_directory_path() / "lb_chains.csv";
    mcmc::write_chains_csv(chains, path, {"version=0.1.0 seed=77 config_hash=0"});
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "# version=0.1.0 seed=77 config_hash=0");
    std::getline(in, line);
    CHECK(line == "chain,iteration,x0,x1");
    long rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == chains.total_draws());
}

TEST_CASE("diagnose flags convergence") {
    const Chains good = mcmc::sample_posterior(standard_normal_2d(), Eigen::Vector2d(0, 0),
                                               quick_config(31, 4, 500, 1000));
    const mcmc::PosteriorSamples s = mcmc::diagnose(good);
    CHECK(s.converged);
    CHECK(s.max_rhat < 1.05);
    CHECK(s.ess.minCoeff() > 100.0);

    RngStream rng(16);
    Eigen::MatrixXd a(200, 1), b(200, 1);
    for (Eigen::Index i = 0; i < 200; ++i) {
        a(i, 0) = rng.normal();
        b(i, 0) = rng.normal() + 10.0;
    }
    const mcmc::PosteriorSamples bad = mcmc::diagnose(synthetic_chains({a, b}));
    CHECK(!bad.converged);
}

}  // TEST_SUITE
