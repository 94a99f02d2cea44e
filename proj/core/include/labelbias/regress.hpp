#pragma once

#include <Eigen/Core>

namespace labelbias::regress {

/// Least-squares fit. xtx holds the empirical second-moment matrix X'X/n,
/// which the bias formulas below consume.
struct LinearFit {
    Eigen::VectorXd coeffs;      // intercept first when X carries one
    Eigen::MatrixXd xtx;         // X'X / n
    double residual_variance = 0.0;
};

/// OLS via Householder QR. Throws RankDeficient when X'X is singular
/// (multicollinear covariates).
LinearFit ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

/// Coefficients of the measurement-error regression: e = y - u regressed on
/// the augmented matrix [X u]. alpha is the covariate block, gamma the
/// loading on the outcome.
struct MeasurementCoeffs {
    Eigen::VectorXd alpha;
    double gamma = 0.0;
};

MeasurementCoeffs measurement_regression(const Eigen::MatrixXd& X,
                                         const Eigen::VectorXd& u,
                                         const Eigen::VectorXd& y);

/// Expected proxy-regression solution (1 + gamma) * beta + alpha, where beta
/// is the regression of the true outcome on X.
Eigen::VectorXd proxy_solution(const Eigen::VectorXd& beta, const MeasurementCoeffs& mc);

/// Covariance row-vector between prediction error u - X*w_proxy and the
/// columns of X: -(gamma*beta + alpha)' * (X'X/n).
Eigen::RowVectorXd prediction_error_covariance(const Eigen::VectorXd& beta,
                                               const MeasurementCoeffs& mc,
                                               const Eigen::MatrixXd& xtx);

/// Lower bound on MSE(u, X*w_proxy):
/// mse_true + (gamma*beta + alpha)' * (X'X/n) * (gamma*beta + alpha).
double mse_lower_bound(double mse_true, const Eigen::VectorXd& beta,
                       const MeasurementCoeffs& mc, const Eigen::MatrixXd& xtx);

struct LogisticFit {
    Eigen::VectorXd coeffs;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0.0;  // max-norm of the per-observation mean gradient
};

/// Newton-Raphson logistic MLE with step halving. Does not throw on
/// non-convergence; inspect the converged flag.
LogisticFit try_logistic_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             int max_iter = 100);

/// As try_logistic_fit, but throws NotConverged (with the final gradient
/// norm attached) when the iteration cap is hit, e.g. under separation.
LogisticFit logistic_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         int max_iter = 100);

/// Log-likelihood of a logistic model, used by the fitter and its tests.
double logistic_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w);

/// Analytic gradient of logistic_loglik with respect to w.
Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& w);

}  // namespace labelbias::regress
