#include "labelbias/sem.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "labelbias/errors.hpp"
#include "labelbias/rng.hpp"

namespace labelbias::simdata {

SemParams standardize_sem(double beta, double alpha, double gamma, double eta) {
    if (std::abs(eta) >= 1.0) {
        throw InfeasibleStandardization("standardize_sem: |eta| must be < 1, got " +
                                        std::to_string(eta));
    }
    const double var_u = 1.0 - beta * beta;
    if (var_u <= 0.0) {
        throw InfeasibleStandardization("standardize_sem: sigma_u^2 = 1 - beta^2 = " +
                                        std::to_string(var_u) + " is not positive");
    }
    // Var(y) = alpha^2 + gamma^2 + 2*alpha*gamma*beta + sigma_y^2 = 1.
    double var_y = 1.0 - alpha * alpha - gamma * gamma - 2.0 * alpha * gamma * beta;
    if (var_y < -1e-12) {
        throw InfeasibleStandardization(
            "standardize_sem: sigma_y^2 = " + std::to_string(var_y) +
            " is negative; alpha^2 + gamma^2 + 2*alpha*gamma*beta exceeds 1");
    }
    var_y = std::max(var_y, 0.0);

    SemParams p;
    p.beta = beta;
    p.alpha = alpha;
    p.gamma = gamma;
    p.eta = eta;
    p.sigma_x = 1.0;
    p.sigma_u = std::sqrt(var_u);
    p.sigma_y = std::sqrt(var_y);
    p.delta = eta * var_u;
    return p;
}

SemDataset simulate_sem(const SemParams& params, Eigen::Index n, std::uint64_t seed) {
    if (n < 2) {
        throw std::invalid_argument("simulate_sem: n must be >= 2");
    }
    SemDataset d;
    d.seed = seed;
    d.x.resize(n);
    d.u0.resize(n);
    d.u1.resize(n);
    d.y0.resize(n);
    d.y1.resize(n);

    RngStream rng(seed, /*stream_id=*/0);
    // u1 | u0 has mean beta*x + eta*(u0 - beta*x) and sd sigma_u*sqrt(1 - eta^2),
    // which reproduces the bivariate latent covariance [[s^2, delta], [delta, s^2]].
    const double cond_sd = params.sigma_u * std::sqrt(1.0 - params.eta * params.eta);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = params.sigma_x * rng.normal();
        const double mu_u = params.beta * x;
        const double u0 = mu_u + params.sigma_u * rng.normal();
        const double u1 = mu_u + params.eta * (u0 - mu_u) + cond_sd * rng.normal();
        const double y0 = params.alpha * x + params.gamma * u0 + params.sigma_y * rng.normal();
        const double y1 = params.alpha * x + params.gamma * u1 + params.sigma_y * rng.normal();
        d.x[i] = x;
        d.u0[i] = u0;
        d.u1[i] = u1;
        d.y0[i] = y0;
        d.y1[i] = y1;
    }
    return d;
}

}  // namespace labelbias::simdata
