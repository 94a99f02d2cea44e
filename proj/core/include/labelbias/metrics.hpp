#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

namespace labelbias::metrics {

/// Root mean squared error. Throws LengthMismatch.
double rmse(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred);

/// Pearson correlation between the prediction error (truth - pred) and a
/// covariate. Throws ZeroVariance when either side is constant.
double error_covariate_correlation(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred,
                                   const Eigen::VectorXd& x);

/// Mean log probability assigned to the realized class, probabilities
/// clipped at 1e-12. Larger is better.
double log_score(const Eigen::VectorXd& y, const Eigen::VectorXd& q);

/// Mean of 2*q(y) - q^2 - (1-q)^2 - 1, where q(y) is the probability
/// assigned to the realized class. Larger is better; 0 is perfect.
double brier_score(const Eigen::VectorXd& y, const Eigen::VectorXd& q);

struct ConfusionMetrics {
    double accuracy = 0.0;
    std::optional<double> ppv;  // absent when nothing is classified positive
    std::optional<double> npv;  // absent when nothing is classified negative
};

/// Classify q >= threshold as positive; rates with empty denominators are
/// reported absent rather than 0.
ConfusionMetrics confusion_metrics(const Eigen::VectorXd& y, const Eigen::VectorXd& q,
                                   double threshold);

struct CalibrationBin {
    double mean_predicted = 0.0;
    double observed_rate = 0.0;
    long count = 0;
};

struct CalibrationCurve {
    std::vector<CalibrationBin> bins;  // ordered by predicted risk
    int requested_bins = 0;
    std::string binning_rule = "quantile";

    long total_count() const;
};

/// Equal-count (quantile) bins over q; adjacent bins whose boundary values
/// tie are merged, so constant predictions collapse to a single bin.
CalibrationCurve calibration_curve(const Eigen::VectorXd& y, const Eigen::VectorXd& q,
                                   int n_bins);

/// Summary table row for one model's probabilistic predictions.
struct MetricsReport {
    double log_score = 0.0;
    double brier_score = 0.0;
    double mse = 0.0;  // mean squared difference between q and the 0/1 label
    double accuracy = 0.0;
    std::optional<double> ppv;
    std::optional<double> npv;
    double decision_threshold = 0.5;
    long n = 0;
};

MetricsReport evaluate_binary(const Eigen::VectorXd& y, const Eigen::VectorXd& q,
                              double decision_threshold = 0.5);

}  // namespace labelbias::metrics
