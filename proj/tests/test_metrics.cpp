#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "labelbias/errors.hpp"
#include "labelbias/metrics.hpp"
#include "labelbias/regress.hpp"
#include "labelbias/rng.hpp"
#include "labelbias/sem.hpp"

using namespace labelbias;

TEST_SUITE("metrics") {

TEST_CASE("rmse: basics and a naive two-pass oracle") {
    Eigen::VectorXd a(4);
    a << 1, 2, 3, 4;
    CHECK(metrics::rmse(a, a) == 0.0);
    CHECK(metrics::rmse(a, a.array() + 1.0) == doctest::Approx(1.0).epsilon(1e-14));

    RngStream rng(1);
    Eigen::VectorXd t(100), p(100);
    for (int i = 0; i < 100; ++i) {
        t[i] = rng.normal();
        p[i] = rng.normal();
    }
    double acc = 0.0;
    for (int i = 0; i < 100; ++i) acc += (t[i] - p[i]) * (t[i] - p[i]);
    CHECK(metrics::rmse(t, p) == doctest::Approx(std::sqrt(acc / 100.0)).epsilon(1e-12));

    Eigen::VectorXd shorter(3);
    CHECK_THROWS_AS(metrics::rmse(a, shorter), LengthMismatch);
}

TEST_CASE("error covariate correlation: degenerate and exact cases") {
    Eigen::VectorXd t(5), x(5);
    t << 1, 2, 3, 4, 5;
    x << 0.4, -1.0, 2.0, 0.1, -0.6;
    CHECK_THROWS_AS(metrics::error_covariate_correlation(t, t, x), ZeroVariance);
    // error equals x exactly
    const Eigen::VectorXd pred = t - x;
    CHECK(metrics::error_covariate_correlation(t, pred, x) ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("error covariate correlation: proxy-trained complex regression is biased at beta=0") {
    const auto p = simdata::standardize_sem(0.0, 0.4, 0.4, 0.5);
    const auto d = simdata::simulate_sem(p, 10000, 7);
    Eigen::MatrixXd Xc(d.n(), 3);
    Xc.col(0).setOnes();
    Xc.col(1) = d.y0;
    Xc.col(2) = d.x;
    const auto fit = regress::ols_fit(Xc, d.y1);
    const Eigen::VectorXd pred = Xc * fit.coeffs;
    CHECK(std::abs(metrics::error_covariate_correlation(d.u1, pred, d.x)) > 0.05);
}

TEST_CASE("log score: clipping and constants") {
    Eigen::VectorXd y(4), q(4);
    y << 1, 0, 1, 0;
    q << 1, 0, 1, 0;  // exact, clipped at 1e-12
    CHECK(metrics::log_score(y, q) == doctest::Approx(0.0).epsilon(1e-11));
    q.setConstant(0.5);
    CHECK(metrics::log_score(y, q) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    q.setConstant(0.0);  // confidently wrong on the positives, clipped not -inf
    CHECK(std::isfinite(metrics::log_score(y, q)));

    RngStream rng(3);
    Eigen::VectorXd yr(50), qr(50);
    for (int i = 0; i < 50; ++i) {
        yr[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
        qr[i] = rng.uniform();
    }
    double acc = 0.0;
    for (int i = 0; i < 50; ++i) acc += std::log(yr[i] == 1.0 ? qr[i] : 1.0 - qr[i]);
    CHECK(metrics::log_score(yr, qr) == doctest::Approx(acc / 50.0).epsilon(1e-12));
}

TEST_CASE("brier score: perfect and uniform predictions, algebraic identity") {
    Eigen::VectorXd y(4), q(4);
    y << 1, 0, 1, 0;
    q << 1, 0, 1, 0;
    CHECK(metrics::brier_score(y, q) == doctest::Approx(0.0).epsilon(1e-14));
    q.setConstant(0.5);
    CHECK(metrics::brier_score(y, q) == doctest::Approx(-0.5).epsilon(1e-14));

    // binary case: brier = -2 * mean((q - y)^2)
    RngStream rng(5);
    Eigen::VectorXd yr(80), qr(80);
    for (int i = 0; i < 80; ++i) {
        yr[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
        qr[i] = rng.uniform();
    }
    const double identity = -2.0 * (qr - yr).squaredNorm() / 80.0;
    CHECK(metrics::brier_score(yr, qr) == doctest::Approx(identity).epsilon(1e-12));
}

TEST_CASE("confusion metrics: perfect, one-sided, and a brute-force oracle") {
    Eigen::VectorXd y(4), q(4);
    y << 1, 0, 1, 0;
    q << 0.9, 0.1, 0.8, 0.2;
    const auto perfect = metrics::confusion_metrics(y, q, 0.5);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.ppv.value() == 1.0);
    CHECK(perfect.npv.value() == 1.0);

    q.setConstant(0.1);  // everything classified negative
    const auto onesided = metrics::confusion_metrics(y, q, 0.5);
    CHECK(!onesided.ppv.has_value());
    CHECK(onesided.npv.value() == doctest::Approx(0.5));

    RngStream rng(9);
    Eigen::VectorXd yr(200), qr(200);
    for (int i = 0; i < 200; ++i) {
        yr[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
        qr[i] = rng.uniform();
    }
    const double thr = 0.35;
    long tp = 0, fp = 0, tn = 0, fn = 0;
    for (int i = 0; i < 200; ++i) {
        const bool pos = qr[i] >= thr;
        if (pos && yr[i] == 1.0) ++tp;
        if (pos && yr[i] == 0.0) ++fp;
        if (!pos && yr[i] == 0.0) ++tn;
        if (!pos && yr[i] == 1.0) ++fn;
    }
    const auto cm = metrics::confusion_metrics(yr, qr, thr);
    CHECK(cm.accuracy == doctest::Approx((tp + tn) / 200.0));
    CHECK(cm.ppv.value() == doctest::Approx(double(tp) / double(tp + fp)));
    CHECK(cm.npv.value() == doctest::Approx(double(tn) / double(tn + fn)));
}

TEST_CASE("calibration curve: well-calibrated synthetic data at n=1e6") {
    RngStream rng(11);
    const Eigen::Index n = 1000000;
    Eigen::VectorXd y(n), q(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        q[i] = rng.uniform();
        y[i] = rng.bernoulli(q[i]) ? 1.0 : 0.0;
    }
    const auto curve = metrics::calibration_curve(y, q, 10);
    CHECK(curve.total_count() == n);
    CHECK(curve.bins.size() == 10);
    double worst = 0.0;
    for (const auto& b : curve.bins) {
        worst = std::max(worst, std::abs(b.observed_rate - b.mean_predicted));
    }
    CHECK(worst < 0.01);
    for (std::size_t b = 1; b < curve.bins.size(); ++b) {
        CHECK(curve.bins[b].mean_predicted >= curve.bins[b - 1].mean_predicted);
    }
}

TEST_CASE("calibration curve: constant predictions collapse to one bin") {
    Eigen::VectorXd y(100), q = Eigen::VectorXd::Constant(100, 0.3);
    RngStream rng(13);
    for (int i = 0; i < 100; ++i) y[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    const auto curve = metrics::calibration_curve(y, q, 5);
    CHECK(curve.bins.size() == 1);
    CHECK(curve.bins[0].count == 100);
}

TEST_CASE("propriety: expected log and Brier scores peak at the true rate") {
    RngStream rng(17);
    const Eigen::Index n = 1000000;
    const double p = 0.3;
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = rng.bernoulli(p) ? 1.0 : 0.0;

    double best_log = -1e9, best_brier = -1e9;
    double arg_log = 0.0, arg_brier = 0.0;
    for (int k = 1; k <= 9; ++k) {
        const double q = k / 10.0;
        const Eigen::VectorXd qv = Eigen::VectorXd::Constant(n, q);
        const double ls = metrics::log_score(y, qv);
        const double bs = metrics::brier_score(y, qv);
        if (ls > best_log) {
            best_log = ls;
            arg_log = q;
        }
        if (bs > best_brier) {
            best_brier = bs;
            arg_brier = q;
        }
    }
    CHECK(arg_log == doctest::Approx(p));
    CHECK(arg_brier == doctest::Approx(p));
}

TEST_CASE("permutation invariance") {
    RngStream rng(19);
    const int n = 500;
    Eigen::VectorXd y(n), q(n), x(n);
    for (int i = 0; i < n; ++i) {
        y[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
        q[i] = rng.uniform();
        x[i] = rng.normal();
    }
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937(23));
    Eigen::VectorXd yp(n), qp(n), xp(n);
    for (int i = 0; i < n; ++i) {
        yp[i] = y[perm[i]];
        qp[i] = q[perm[i]];
        xp[i] = x[perm[i]];
    }
    CHECK(metrics::log_score(y, q) == doctest::Approx(metrics::log_score(yp, qp)).epsilon(1e-12));
    CHECK(metrics::brier_score(y, q) ==
          doctest::Approx(metrics::brier_score(yp, qp)).epsilon(1e-12));
    CHECK(metrics::rmse(y, q) == doctest::Approx(metrics::rmse(yp, qp)).epsilon(1e-12));
    CHECK(metrics::error_covariate_correlation(y, q, x) ==
          doctest::Approx(metrics::error_covariate_correlation(yp, qp, xp)).epsilon(1e-10));
    const auto cm = metrics::confusion_metrics(y, q, 0.5);
    const auto cmp = metrics::confusion_metrics(yp, qp, 0.5);
    CHECK(cm.accuracy == cmp.accuracy);
}

TEST_CASE("evaluate_binary bundles the report") {
    Eigen::VectorXd y(4), q(4);
    y << 1, 0, 0, 1;
    q << 0.8, 0.2, 0.4, 0.6;
    const auto r = metrics::evaluate_binary(y, q, 0.5);
    CHECK(r.n == 4);
    CHECK(r.accuracy == 1.0);
    CHECK(r.log_score <= 0.0);
    CHECK(r.mse == doctest::Approx((0.04 + 0.04 + 0.16 + 0.16) / 4.0));
    CHECK(r.decision_threshold == 0.5);
}

}  // TEST_SUITE
