#include <doctest.h>

#include <cmath>

#include "labelbias/errors.hpp"
#include "labelbias/regress.hpp"
#include "labelbias/rng.hpp"
#include "labelbias/threshold.hpp"
#include "oracles.hpp"

using namespace labelbias;
using threshold::CovariateSpec;
using threshold::SlackQuadrature;
using threshold::ThresholdData;
using threshold::ThresholdDataset;
using threshold::ThresholdSpec;

namespace {

ThresholdSpec demo_spec(double tau0 = 0.21, double tau1 = 0.38, double e_scale = 0.1) {
    ThresholdSpec s;
    s.base_alpha = -1.8;
    s.tau_by_group = {{0, tau0}, {1, tau1}};
    s.e_scale = e_scale;
    return s;
}

mcmc::PosteriorSamples point_samples(const Eigen::VectorXd& beta) {
    mcmc::PosteriorSamples s;
    Eigen::MatrixXd draw(1, beta.size());
    draw.row(0) = beta.transpose();
    s.chains.draws = {draw, draw};
    for (Eigen::Index k = 0; k < beta.size(); ++k) {
        s.chains.param_names.push_back("beta_" + std::to_string(k));
    }
    s.chains.accept_rate = {0.3, 0.3};
    return s;
}

mcmc::SamplerConfig fit_config(std::uint64_t seed, int chains = 2, int warmup = 400,
                               int draws = 900) {
    mcmc::SamplerConfig c;
    c.chains = chains;
    c.warmup = warmup;
    c.draws = draws;
    c.seed = seed;
    c.initial_step_scale = 0.05;
    c.adapt_window = 50;
    return c;
}

}  // namespace

TEST_SUITE("threshold") {

TEST_CASE("solve_base_rate: symmetry, reference value, round trip") {
    CHECK(threshold::solve_base_rate(0.5) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(threshold::solve_base_rate(0.14) == doctest::Approx(-1.8153).epsilon(1e-3 / 1.8153));
    CHECK(std::abs(threshold::solve_base_rate(0.14) - (-1.8153)) < 1e-3);
    RngStream rng(19);
    for (int rep = 0; rep < 20; ++rep) {
        const double r = 0.02 + 0.96 * rng.uniform();
        const double alpha = threshold::solve_base_rate(r);
        CHECK(oracles::sigmoid(alpha) == doctest::Approx(r).epsilon(1e-12));
    }
    CHECK_THROWS_AS(threshold::solve_base_rate(0.0), std::invalid_argument);
    CHECK_THROWS_AS(threshold::solve_base_rate(1.0), std::invalid_argument);
}

TEST_CASE("solve_threshold: zero share, reference magnitudes, inverse identity") {
    CHECK(threshold::solve_threshold(-1.8, 0.0) == 0.0);
    const double tau_ins = threshold::solve_threshold(-1.8, 0.16);
    const double tau_unins = threshold::solve_threshold(-1.8, 0.29);
    CHECK(std::abs(tau_ins - 0.21) < 0.01);
    CHECK(std::abs(tau_unins - 0.38) < 0.01);
    RngStream rng(23);
    for (int rep = 0; rep < 10; ++rep) {
        const double share = 0.5 * rng.uniform();
        const double tau = threshold::solve_threshold(-1.8, share);
        CHECK(threshold::undiagnosed_share(-1.8, tau) == doctest::Approx(share).epsilon(1e-9));
    }
}

TEST_CASE("quadrature: captures the half-normal mass and matches Monte Carlo") {
    const SlackQuadrature quad(0.1);
    CHECK(quad.mass() == doctest::Approx(1.0).epsilon(1e-7));
    for (const double s : {-2.3, -0.4, 0.0, 0.9, 2.7}) {
        const double mc = oracles::halfnormal_sigmoid_mc(s, 0.1, 10000000, 57);
        CHECK(std::abs(quad.sigmoid_expectation(s) - mc) < 1e-4);
    }
}

TEST_CASE("quadrature: monotone under nonnegative threshold and slack") {
    const SlackQuadrature quad(0.1);
    for (const double s : {-2.0, -0.5, 0.3, 1.7}) {
        for (const double tau : {0.0, 0.2, 0.5, 1.0}) {
            CHECK(quad.sigmoid_expectation(s - tau) <= oracles::sigmoid(s) + 1e-12);
        }
    }
}

TEST_CASE("loglik: degenerate slack reduces to ordinary logistic regression") {
    RngStream rng(29);
    const Eigen::Index n = 400;
    ThresholdData d;
    d.X.resize(n, 2);
    d.y.resize(n);
    d.group.resize(n);
    Eigen::VectorXd y_real(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d.X(i, 0) = 1.0;
        d.X(i, 1) = rng.normal();
        d.group[i] = 0;
        d.y[i] = rng.bernoulli(oracles::sigmoid(-1.0 + 0.8 * d.X(i, 1))) ? 1 : 0;
        y_real[i] = d.y[i];
    }
    ThresholdSpec spec;
    spec.base_alpha = -1.0;
    spec.tau_by_group = {{0, 0.0}};
    spec.e_scale = 1e-9;
    Eigen::VectorXd beta(2);
    beta << -1.0, 0.8;
    const double a = threshold::threshold_loglik(beta, d, spec);
    const double b = regress::logistic_loglik(d.X, y_real, beta);
    CHECK(std::abs(a - b) < 1e-6);
}

TEST_CASE("loglik: unknown group raises") {
    ThresholdData d;
    d.X = Eigen::MatrixXd::Ones(3, 1);
    d.y = Eigen::VectorXi::Zero(3);
    d.group = Eigen::VectorXi::Constant(3, 2);  // not in the spec
    Eigen::VectorXd beta(1);
    beta << 0.0;
    CHECK_THROWS_AS(threshold::threshold_loglik(beta, d, demo_spec()), UnknownGroup);
}

TEST_CASE("dgp: zero thresholds without slack make the proxy exact") {
    const Eigen::VectorXd coefs = (Eigen::VectorXd(3) << -1.0, 0.5, 0.2).finished();
    const ThresholdDataset d = threshold::simulate_threshold_dgp(
        coefs, demo_spec(0.0, 0.0), 5000, 43, CovariateSpec{1, 0.3}, /*include_slack=*/false);
    CHECK((d.y.array() == d.u3.array()).all());
}

TEST_CASE("dgp: intercept-only prevalence matches the base rate") {
    CovariateSpec cov;
    cov.n_normal = 0;
    cov.group_prob = 0.3;
    const double alpha = threshold::solve_base_rate(0.14);
    const Eigen::VectorXd coefs = (Eigen::VectorXd(2) << alpha, 0.0).finished();
    const ThresholdDataset d =
        threshold::simulate_threshold_dgp(coefs, demo_spec(), 1000000, 47, cov);
    const double rate = d.u3.cast<double>().mean();
    CHECK(std::abs(rate - 0.14) < 0.002);
}

TEST_CASE("dgp: undiagnosed share among the insured (slack ignored)") {
    CovariateSpec cov;
    cov.n_normal = 0;
    cov.group_prob = 0.3;
    const double alpha = -1.8;
    const Eigen::VectorXd coefs = (Eigen::VectorXd(2) << alpha, 0.0).finished();
    const ThresholdDataset d = threshold::simulate_threshold_dgp(
        coefs, demo_spec(0.21, 0.38), 1000000, 53, cov, /*include_slack=*/false);
    long n_ins = 0, y_ins = 0, u_ins = 0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        if (d.group[i] == 0) {
            ++n_ins;
            y_ins += d.y[i];
            u_ins += d.u3[i];
        }
    }
    const double share =
        1.0 - static_cast<double>(y_ins) / static_cast<double>(u_ins);
    CHECK(std::abs(share - 0.167) < 0.005);
}

TEST_CASE("dgp: no false positives, ever") {
    const Eigen::VectorXd coefs = (Eigen::VectorXd(3) << -1.5, 1.0, 0.4).finished();
    const ThresholdDataset d =
        threshold::simulate_threshold_dgp(coefs, demo_spec(), 20000, 59, CovariateSpec{1, 0.4});
    CHECK((d.y.array() <= d.u3.array()).all());
    CHECK((d.u3.array() == (d.u1.array() >= 0.0).cast<int>()).all());
}

TEST_CASE("dgp: bit-identical under the same seed, negative tau rejected") {
    const Eigen::VectorXd coefs = (Eigen::VectorXd(3) << -1.5, 1.0, 0.4).finished();
    const auto a = threshold::simulate_threshold_dgp(coefs, demo_spec(), 1000, 61,
                                                     CovariateSpec{1, 0.4});
    const auto b = threshold::simulate_threshold_dgp(coefs, demo_spec(), 1000, 61,
                                                     CovariateSpec{1, 0.4});
    CHECK(a.X == b.X);
    CHECK(a.u1 == b.u1);
    CHECK(a.y == b.y);
    CHECK_THROWS_AS(threshold::simulate_threshold_dgp(coefs, demo_spec(-0.1, 0.38), 1000, 61,
                                                      CovariateSpec{1, 0.4}),
                    std::invalid_argument);
}

TEST_CASE("predict_risk: observed diagnosis forces p_true = 1") {
    const Eigen::VectorXd beta = (Eigen::VectorXd(2) << -1.8, 1.0).finished();
    const auto samples = point_samples(beta);
    ThresholdSpec spec;
    spec.base_alpha = -1.8;
    spec.tau_by_group = {{0, 0.3}};
    spec.e_scale = 0.1;
    const Eigen::VectorXd x = (Eigen::VectorXd(2) << 1.0, 0.4).finished();
    const auto pred = threshold::predict_risk(samples, x, 0, 1, spec);
    CHECK(pred.p_true == 1.0);
    CHECK(pred.p_marginal == doctest::Approx(oracles::sigmoid(-1.8 + 0.4)).epsilon(1e-9));
}

TEST_CASE("predict_risk: perfect proxy makes a negative certain") {
    const Eigen::VectorXd beta = (Eigen::VectorXd(2) << -1.0, 0.7).finished();
    const auto samples = point_samples(beta);
    ThresholdSpec spec;
    spec.base_alpha = -1.0;
    spec.tau_by_group = {{0, 0.0}};
    spec.e_scale = 1e-9;
    const Eigen::VectorXd x = (Eigen::VectorXd(2) << 1.0, -0.3).finished();
    const auto pred = threshold::predict_risk(samples, x, 0, 0, spec);
    CHECK(pred.p_true < 1e-6);
}

TEST_CASE("predict_risk: matches Monte Carlo over (u1, e)") {
    RngStream rng(67);
    for (int rep = 0; rep < 4; ++rep) {
        const double xb = rng.normal(-1.0, 0.8);
        const double tau = 0.5 * rng.uniform();
        const Eigen::VectorXd beta = (Eigen::VectorXd(1) << xb).finished();
        const auto samples = point_samples(beta);
        ThresholdSpec spec;
        spec.base_alpha = xb;
        spec.tau_by_group = {{0, tau}};
        spec.e_scale = 0.1;
        const Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
        const auto pred = threshold::predict_risk(samples, x, 0, 0, spec);
        const double mc = oracles::p_true_given_negative_mc(xb, tau, 0.1, 10000000, 71 + rep);
        CHECK(std::abs(pred.p_true - mc) < 0.002);
    }
}

TEST_CASE("predict_risk: law of total probability reconstructs the marginal") {
    const SlackQuadrature quad(0.1);
    const Eigen::VectorXd beta = (Eigen::VectorXd(1) << -0.9).finished();
    const auto samples = point_samples(beta);
    for (const double tau : {0.0, 0.21, 0.38, 0.8}) {
        ThresholdSpec spec;
        spec.base_alpha = -0.9;
        spec.tau_by_group = {{0, tau}};
        spec.e_scale = 0.1;
        const Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
        const double p_diag = quad.sigmoid_expectation(-0.9 - tau);
        const auto pred_neg = threshold::predict_risk(samples, x, 0, 0, spec);
        const double reconstructed = p_diag + (1.0 - p_diag) * pred_neg.p_true;
        CHECK(std::abs(reconstructed - oracles::sigmoid(-0.9)) < 1e-6);
    }
}

TEST_CASE("predict_risk: hidden-positive probability grows with the threshold") {
    const Eigen::VectorXd beta = (Eigen::VectorXd(1) << -1.2).finished();
    const auto samples = point_samples(beta);
    const Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
    double last = -1.0;
    for (const double tau : {0.0, 0.1, 0.2, 0.4, 0.8, 1.5}) {
        ThresholdSpec spec;
        spec.base_alpha = -1.2;
        spec.tau_by_group = {{0, tau}};
        spec.e_scale = 0.1;
        const auto pred = threshold::predict_risk(samples, x, 0, 0, spec);
        CHECK(pred.p_true >= last - 1e-12);
        last = pred.p_true;
    }
}

TEST_CASE("predict_risk: unknown group raises") {
    const Eigen::VectorXd beta = (Eigen::VectorXd(1) << 0.0).finished();
    const auto samples = point_samples(beta);
    CHECK_THROWS_AS(
        threshold::predict_risk(samples, Eigen::VectorXd::Ones(1), 9, 0, demo_spec()),
        UnknownGroup);
}

TEST_CASE("fit: self-consistent on its own DGP at n=1e5") {
    const Eigen::VectorXd coefs = (Eigen::VectorXd(3) << -1.95, 1.0, 0.3).finished();
    const ThresholdSpec spec = demo_spec(0.2, 0.39);
    const ThresholdDataset d =
        threshold::simulate_threshold_dgp(coefs, spec, 100000, 73, CovariateSpec{1, 0.3});
    const auto samples =
        threshold::fit_threshold(ThresholdData::from_dataset(d), spec, fit_config(79));
    CHECK(samples.converged);
    for (Eigen::Index k = 0; k < 3; ++k) {
        CHECK(std::abs(samples.chains.mean(k) - coefs[k]) < 0.05);
    }
}

TEST_CASE("fit: zero thresholds collapse to logistic regression") {
    const Eigen::VectorXd coefs = (Eigen::VectorXd(3) << -1.2, 0.8, 0.3).finished();
    ThresholdSpec spec = demo_spec(0.0, 0.0, 1e-9);
    const ThresholdDataset d = threshold::simulate_threshold_dgp(
        coefs, spec, 20000, 83, CovariateSpec{1, 0.3}, /*include_slack=*/false);
    const auto samples =
        threshold::fit_threshold(ThresholdData::from_dataset(d), spec, fit_config(89));
    Eigen::VectorXd y_real = d.y.cast<double>();
    const auto mle = regress::logistic_fit(d.X, y_real);
    for (Eigen::Index k = 0; k < 3; ++k) {
        CHECK(std::abs(samples.chains.mean(k) - mle.coeffs[k]) < 0.05);
    }
}

TEST_CASE("fit: data with a group missing from the spec raises") {
    const Eigen::VectorXd coefs = (Eigen::VectorXd(3) << -1.2, 0.8, 0.3).finished();
    const ThresholdDataset d =
        threshold::simulate_threshold_dgp(coefs, demo_spec(), 500, 91, CovariateSpec{1, 0.5});
    ThresholdSpec missing;
    missing.base_alpha = -1.8;
    missing.tau_by_group = {{0, 0.21}};  // group 1 absent
    missing.e_scale = 0.1;
    CHECK_THROWS_AS(
        threshold::fit_threshold(ThresholdData::from_dataset(d), missing, fit_config(93)),
        UnknownGroup);
}

TEST_CASE("calibration identity: simulated shares reproduce the targets at n=1e6") {
    const double alpha = threshold::solve_base_rate(0.14);
    ThresholdSpec spec;
    spec.base_alpha = alpha;
    spec.e_scale = 0.1;
    spec.tau_by_group = {{0, threshold::solve_threshold(alpha, 0.16)},
                         {1, threshold::solve_threshold(alpha, 0.29)}};

    CovariateSpec cov;
    cov.n_normal = 0;
    cov.group_prob = 0.5;
    const Eigen::VectorXd coefs = (Eigen::VectorXd(2) << alpha, 0.0).finished();
    const ThresholdDataset d = threshold::simulate_threshold_dgp(coefs, spec, 1000000, 97, cov,
                                                                 /*include_slack=*/false);
    std::map<int, std::pair<long, long>> counts;  // group -> (y sum, u3 sum)
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        counts[d.group[i]].first += d.y[i];
        counts[d.group[i]].second += d.u3[i];
    }
    const double share0 =
        1.0 - static_cast<double>(counts[0].first) / static_cast<double>(counts[0].second);
    const double share1 =
        1.0 - static_cast<double>(counts[1].first) / static_cast<double>(counts[1].second);
    CHECK(std::abs(share0 - 0.16) < 0.005);
    CHECK(std::abs(share1 - 0.29) < 0.005);

    // the slack raises both shares; reported as a sensitivity, not a target
    for (const auto& [g, tau] : spec.tau_by_group) {
        CHECK(threshold::undiagnosed_share(alpha, tau, 0.1) >
              threshold::undiagnosed_share(alpha, tau, 0.0));
        (void)g;
    }
}

}  // TEST_SUITE
