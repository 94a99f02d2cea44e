#include "labelbias/regress.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <cmath>
#include <stdexcept>
#include <string>

#include "labelbias/errors.hpp"

namespace labelbias::regress {

namespace {

// log(1 + exp(t)) without overflow
double log1pexp(double t) {
    if (t > 35.0) return t;
    if (t < -35.0) return std::exp(t);
    return std::log1p(std::exp(t));
}

Eigen::VectorXd qr_solve_full_rank(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                   const char* what) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() < A.cols()) {
        throw RankDeficient(std::string(what) + ": design matrix is rank deficient (rank " +
                            std::to_string(qr.rank()) + " of " + std::to_string(A.cols()) + ")");
    }
    return qr.solve(b);
}

}  // namespace

LinearFit ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.rows() != y.size()) throw std::invalid_argument("ols_fit: X/y row mismatch");
    if (X.rows() <= X.cols()) throw std::invalid_argument("ols_fit: need n > m");

    LinearFit fit;
    fit.coeffs = qr_solve_full_rank(X, y, "ols_fit");
    fit.xtx = (X.transpose() * X) / static_cast<double>(X.rows());
    const Eigen::VectorXd resid = y - X * fit.coeffs;
    fit.residual_variance = resid.squaredNorm() / static_cast<double>(X.rows());
    return fit;
}

MeasurementCoeffs measurement_regression(const Eigen::MatrixXd& X,
                                         const Eigen::VectorXd& u,
                                         const Eigen::VectorXd& y) {
    if (X.rows() != u.size() || X.rows() != y.size()) {
        throw std::invalid_argument("measurement_regression: row mismatch");
    }
    Eigen::MatrixXd M(X.rows(), X.cols() + 1);
    M.leftCols(X.cols()) = X;
    M.col(X.cols()) = u;
    const Eigen::VectorXd e = y - u;
    const Eigen::VectorXd w = qr_solve_full_rank(M, e, "measurement_regression");

    MeasurementCoeffs mc;
    mc.alpha = w.head(X.cols());
    mc.gamma = w[X.cols()];
    return mc;
}

Eigen::VectorXd proxy_solution(const Eigen::VectorXd& beta, const MeasurementCoeffs& mc) {
    if (beta.size() != mc.alpha.size()) {
        throw std::invalid_argument("proxy_solution: dimension mismatch");
    }
    return (1.0 + mc.gamma) * beta + mc.alpha;
}

Eigen::RowVectorXd prediction_error_covariance(const Eigen::VectorXd& beta,
                                               const MeasurementCoeffs& mc,
                                               const Eigen::MatrixXd& xtx) {
    if (beta.size() != mc.alpha.size() || xtx.rows() != beta.size() || xtx.cols() != beta.size()) {
        throw std::invalid_argument("prediction_error_covariance: dimension mismatch");
    }
    const Eigen::VectorXd bias = mc.gamma * beta + mc.alpha;
    return -(bias.transpose() * xtx);
}

double mse_lower_bound(double mse_true, const Eigen::VectorXd& beta,
                       const MeasurementCoeffs& mc, const Eigen::MatrixXd& xtx) {
    if (mse_true < 0.0) throw std::invalid_argument("mse_lower_bound: mse_true < 0");
    const Eigen::VectorXd bias = mc.gamma * beta + mc.alpha;
    return mse_true + bias.dot(xtx * bias);
}

double logistic_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w) {
    const Eigen::VectorXd t = X * w;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        // y*t - log(1 + exp(t))
        ll += y[i] * t[i] - log1pexp(t[i]);
    }
    return ll;
}

Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& w) {
    const Eigen::VectorXd t = X * w;
    Eigen::VectorXd p(t.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-t[i]));
    return X.transpose() * (y - p);
}

LogisticFit try_logistic_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int max_iter) {
    const auto n = X.rows();
    if (n != y.size()) throw std::invalid_argument("logistic_fit: X/y row mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (y[i] != 0.0 && y[i] != 1.0) {
            throw std::invalid_argument("logistic_fit: y must be binary 0/1");
        }
    }

    LogisticFit fit;
    fit.coeffs = Eigen::VectorXd::Zero(X.cols());
    double ll = logistic_loglik(X, y, fit.coeffs);
    const double tol = 1e-8;

    for (int iter = 0; iter < max_iter; ++iter) {
        fit.iterations = iter + 1;
        const Eigen::VectorXd t = X * fit.coeffs;
        Eigen::VectorXd p(n), wdiag(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            p[i] = 1.0 / (1.0 + std::exp(-t[i]));
            wdiag[i] = std::max(p[i] * (1.0 - p[i]), 1e-12);
        }
        const Eigen::VectorXd grad = X.transpose() * (y - p);
        fit.gradient_norm = grad.lpNorm<Eigen::Infinity>() / static_cast<double>(n);

        const Eigen::MatrixXd H = X.transpose() * wdiag.asDiagonal() * X;
        Eigen::VectorXd step = H.ldlt().solve(grad);
        if (!step.allFinite()) break;

        // Under separation the gradient vanishes while the iterate diverges
        // (and in doubles eventually stalls with p pinned at 0/1), so the
        // Newton step and the linear predictor are part of the criterion.
        if (fit.gradient_norm < tol && step.lpNorm<Eigen::Infinity>() < 1e-6 &&
            t.cwiseAbs().maxCoeff() <= 30.0) {
            fit.converged = true;
            return fit;
        }

        // halve the step until the log-likelihood does not decrease
        double scale = 1.0;
        bool accepted = false;
        for (int h = 0; h < 20; ++h) {
            const Eigen::VectorXd cand = fit.coeffs + scale * step;
            const double cand_ll = logistic_loglik(X, y, cand);
            if (cand_ll >= ll - 1e-12) {
                fit.coeffs = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if (!accepted) break;
    }

    const Eigen::VectorXd grad = logistic_gradient(X, y, fit.coeffs);
    fit.gradient_norm = grad.lpNorm<Eigen::Infinity>() / static_cast<double>(n);
    fit.converged =
        fit.gradient_norm < tol && (X * fit.coeffs).cwiseAbs().maxCoeff() <= 30.0;
    return fit;
}

LogisticFit logistic_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int max_iter) {
    LogisticFit fit = try_logistic_fit(X, y, max_iter);
    if (!fit.converged) {
        throw NotConverged("logistic_fit: no convergence after " +
                               std::to_string(fit.iterations) +
                               " iterations, gradient norm " + std::to_string(fit.gradient_norm),
                           fit.gradient_norm);
    }
    return fit;
}

}  // namespace labelbias::regress
