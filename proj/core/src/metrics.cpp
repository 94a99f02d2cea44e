#include "labelbias/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "labelbias/errors.hpp"

namespace labelbias::metrics {

namespace {

void check_lengths(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* what) {
    if (a.size() != b.size() || a.size() < 1) {
        throw LengthMismatch(std::string(what) + ": lengths " + std::to_string(a.size()) +
                             " and " + std::to_string(b.size()));
    }
}

void check_binary(const Eigen::VectorXd& y, const char* what) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y[i] != 0.0 && y[i] != 1.0) {
            throw std::invalid_argument(std::string(what) + ": y must be binary 0/1");
        }
    }
}

}  // namespace

double rmse(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred) {
    check_lengths(truth, pred, "rmse");
    return std::sqrt((truth - pred).squaredNorm() / static_cast<double>(truth.size()));
}

double error_covariate_correlation(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred,
                                   const Eigen::VectorXd& x) {
    check_lengths(truth, pred, "error_covariate_correlation");
    check_lengths(truth, x, "error_covariate_correlation");
    const Eigen::VectorXd err = truth - pred;
    const double me = err.mean();
    const double mx = x.mean();
    const double ve = (err.array() - me).square().sum();
    const double vx = (x.array() - mx).square().sum();
    if (ve <= 0.0 || vx <= 0.0) {
        throw ZeroVariance("error_covariate_correlation: constant error or covariate");
    }
    const double cov = ((err.array() - me) * (x.array() - mx)).sum();
    return cov / std::sqrt(ve * vx);
}

double log_score(const Eigen::VectorXd& y, const Eigen::VectorXd& q) {
    check_lengths(y, q, "log_score");
    check_binary(y, "log_score");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double qy = y[i] == 1.0 ? q[i] : 1.0 - q[i];
        acc += std::log(std::clamp(qy, 1e-12, 1.0));
    }
    return acc / static_cast<double>(y.size());
}

double brier_score(const Eigen::VectorXd& y, const Eigen::VectorXd& q) {
    check_lengths(y, q, "brier_score");
    check_binary(y, "brier_score");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double qy = y[i] == 1.0 ? q[i] : 1.0 - q[i];
        acc += 2.0 * qy - q[i] * q[i] - (1.0 - q[i]) * (1.0 - q[i]) - 1.0;
    }
    return acc / static_cast<double>(y.size());
}

ConfusionMetrics confusion_metrics(const Eigen::VectorXd& y, const Eigen::VectorXd& q,
                                   double threshold) {
    check_lengths(y, q, "confusion_metrics");
    check_binary(y, "confusion_metrics");
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw std::invalid_argument("confusion_metrics: threshold must be in (0,1)");
    }
    long tp = 0, tn = 0, fp = 0, fn = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const bool pos = q[i] >= threshold;
        const bool truth = y[i] == 1.0;
        if (pos && truth) ++tp;
        else if (pos && !truth) ++fp;
        else if (!pos && truth) ++fn;
        else ++tn;
    }
    ConfusionMetrics out;
    out.accuracy = static_cast<double>(tp + tn) / static_cast<double>(y.size());
    if (tp + fp > 0) out.ppv = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tn + fn > 0) out.npv = static_cast<double>(tn) / static_cast<double>(tn + fn);
    return out;
}

long CalibrationCurve::total_count() const {
    long acc = 0;
    for (const auto& b : bins) acc += b.count;
    return acc;
}

CalibrationCurve calibration_curve(const Eigen::VectorXd& y, const Eigen::VectorXd& q,
                                   int n_bins) {
    check_lengths(y, q, "calibration_curve");
    check_binary(y, "calibration_curve");
    if (n_bins < 2) throw std::invalid_argument("calibration_curve: n_bins must be >= 2");

    const auto n = y.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return q[a] < q[b]; });

    CalibrationCurve curve;
    curve.requested_bins = n_bins;
    const Eigen::Index base = n / n_bins, extra = n % n_bins;
    Eigen::Index at = 0;
    for (int b = 0; b < n_bins && at < n; ++b) {
        Eigen::Index len = base + (b < extra ? 1 : 0);
        if (len == 0) continue;
        // merge into the previous bin if the boundary value ties with it
        const bool merge = !curve.bins.empty() && at > 0 && q[order[at]] == q[order[at - 1]];
        double sum_q = 0.0, sum_y = 0.0;
        for (Eigen::Index i = 0; i < len; ++i) {
            sum_q += q[order[at + i]];
            sum_y += y[order[at + i]];
        }
        if (merge) {
            auto& prev = curve.bins.back();
            const double total = static_cast<double>(prev.count + len);
            prev.mean_predicted = (prev.mean_predicted * prev.count + sum_q) / total;
            prev.observed_rate = (prev.observed_rate * prev.count + sum_y) / total;
            prev.count += len;
        } else {
            curve.bins.push_back({sum_q / static_cast<double>(len),
                                  sum_y / static_cast<double>(len), static_cast<long>(len)});
        }
        at += len;
    }
    return curve;
}

MetricsReport evaluate_binary(const Eigen::VectorXd& y, const Eigen::VectorXd& q,
                              double decision_threshold) {
    MetricsReport r;
    r.log_score = log_score(y, q);
    r.brier_score = brier_score(y, q);
    r.mse = (y - q).squaredNorm() / static_cast<double>(y.size());
    const ConfusionMetrics cm = confusion_metrics(y, q, decision_threshold);
    r.accuracy = cm.accuracy;
    r.ppv = cm.ppv;
    r.npv = cm.npv;
    r.decision_threshold = decision_threshold;
    r.n = static_cast<long>(y.size());
    return r;
}

}  // namespace labelbias::metrics
