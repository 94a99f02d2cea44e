#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace labelbias::simdata {

/// Coefficients of the two-period structural equation model together with
/// the noise scales implied by standardizing every variable to unit variance.
///
/// The data-generating process is
///   x ~ normal(0, sigma_x)
///   (u0, u1) | x ~ MVN((beta*x, beta*x), [[sigma_u^2, delta], [delta, sigma_u^2]])
///   y_t | x, u_t ~ normal(alpha*x + gamma*u_t, sigma_y)
/// with delta parameterized through the temporal correlation eta as
/// delta = eta * sigma_u^2.
struct SemParams {
    double beta = 0.0;   // covariate -> latent outcome
    double alpha = 0.0;  // covariate -> proxy (leakage)
    double gamma = 1.0;  // latent outcome -> proxy
    double eta = 0.0;    // temporal correlation of the latents, |eta| < 1

    double sigma_x = 1.0;
    double sigma_u = 1.0;
    double sigma_y = 0.0;
    double delta = 0.0;

    /// Population variance of u_t implied by the coefficients (1 when standardized).
    double implied_var_u() const {
        return beta * beta * sigma_x * sigma_x + sigma_u * sigma_u;
    }
    /// Population variance of y_t implied by the coefficients (1 when standardized).
    double implied_var_y() const {
        return alpha * alpha * sigma_x * sigma_x + gamma * gamma * implied_var_u() +
               2.0 * alpha * gamma * beta * sigma_x * sigma_x + sigma_y * sigma_y;
    }
    /// Population covariance of (u0, u1): beta^2 + delta under standardization.
    double implied_cov_u0u1() const {
        return beta * beta * sigma_x * sigma_x + delta;
    }
};

/// Chooses sigma_u, sigma_y, delta so that x, u_t and y_t all have unit
/// population variance. Throws InfeasibleStandardization when the variance
/// budget is exceeded (sigma_u^2 <= 0 or sigma_y^2 < 0).
SemParams standardize_sem(double beta, double alpha, double gamma, double eta);

/// Simulated SEM draws, one row per individual.
struct SemDataset {
    Eigen::VectorXd x, u0, u1, y0, y1;
    std::uint64_t seed = 0;

    Eigen::Index n() const { return x.size(); }
};

/// Draws n i.i.d. rows from the SEM. Deterministic given (params, n, seed).
SemDataset simulate_sem(const SemParams& params, Eigen::Index n, std::uint64_t seed);

}  // namespace labelbias::simdata
