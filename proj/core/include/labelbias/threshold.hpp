#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "labelbias/sampler.hpp"

namespace labelbias::threshold {

/// Group-dependent diagnosis thresholds for the latent-severity model
///   u1 | beta ~ logistic(X*beta, 1)
///   y = 1  iff  u1 >= tau(group) + e,   e ~ half-normal(e_scale)
///   u3 = 1 iff  u1 >= 0.
/// tau >= 0 encodes "diagnosis requires severity above the disease cutoff",
/// which makes false positives impossible (u3 >= y row-wise).
struct ThresholdSpec {
    double base_alpha = 0.0;            // logit-scale intercept matching total prevalence
    std::map<int, double> tau_by_group; // tau >= 0 per group label
    double e_scale = 0.1;               // half-normal slack scale, > 0

    double tau(int group) const;  // throws UnknownGroup
    void validate() const;
};

/// logit(total_rate): the intercept alpha with P(logistic(alpha,1) >= 0) = total_rate.
double solve_base_rate(double total_rate);

/// The threshold tau >= 0 solving 1 - sigma(alpha - tau)/sigma(alpha) = share,
/// by monotone bisection to 1e-10.
double solve_threshold(double alpha, double undiagnosed_share);

/// Undiagnosed share implied by (alpha, tau): 1 - sigma(alpha-tau)/sigma(alpha)
/// when e_scale == 0, otherwise with the slack marginalized by quadrature.
double undiagnosed_share(double alpha, double tau, double e_scale = 0.0);

/// 64-node Gauss-Legendre rule on e in [0, 6*e_scale] with half-normal
/// density weights, used to marginalize the diagnosis slack.
class SlackQuadrature {
public:
    static constexpr int kNodes = 64;

    explicit SlackQuadrature(double e_scale);

    /// E_e[sigma(s - e)] for a linear predictor s (threshold already subtracted).
    double sigmoid_expectation(double s) const;
    /// Total quadrature mass, = P(e <= 6*e_scale) up to rule error.
    double mass() const { return mass_; }
    double e_scale() const { return e_scale_; }
    const std::array<double, kNodes>& nodes() const { return nodes_; }
    const std::array<double, kNodes>& weights() const { return weights_; }

private:
    double e_scale_;
    double mass_;
    std::array<double, kNodes> nodes_;
    std::array<double, kNodes> weights_;
    std::array<double, kNodes> exp_nodes_;  // exp(node), hoisted out of the row loop
};

/// Synthetic covariates for the threshold DGP: an intercept, n_normal
/// standard-normal columns, then a binary group column drawn with
/// P(group = 1) = group_prob.
struct CovariateSpec {
    int n_normal = 1;
    double group_prob = 0.3;

    Eigen::Index design_cols() const { return 2 + n_normal; }
    std::vector<std::string> column_names() const;
};

struct ThresholdDataset {
    Eigen::MatrixXd X;  // intercept first, group last
    std::vector<std::string> column_names;
    Eigen::VectorXi group;
    Eigen::VectorXd u1;  // latent severity
    Eigen::VectorXi u3;  // true outcome, u3 = 1 iff u1 >= 0
    Eigen::VectorXi y;   // proxy, y <= u3 row-wise
    std::uint64_t seed = 0;

    Eigen::Index n() const { return X.rows(); }
};

/// Draws from the threshold DGP. include_slack = false forces e = 0, the
/// convention under which the share calibration is exact.
/// Deterministic given (coefs, spec, n, seed, covariates).
ThresholdDataset simulate_threshold_dgp(const Eigen::VectorXd& coefs, const ThresholdSpec& spec,
                                        Eigen::Index n, std::uint64_t seed,
                                        const CovariateSpec& covariates,
                                        bool include_slack = true);

/// Observed slice the model consumes: design matrix, binary proxy, group labels.
struct ThresholdData {
    Eigen::MatrixXd X;
    Eigen::VectorXi y;
    Eigen::VectorXi group;
    std::vector<std::string> column_names;

    static ThresholdData from_dataset(const ThresholdDataset& d);
};

/// Bernoulli log-likelihood with P(y=1|x) = E_e[sigma(x*beta - tau(group) - e)]
/// computed by fixed quadrature. Throws UnknownGroup.
double threshold_loglik(const Eigen::VectorXd& beta, const ThresholdData& data,
                        const ThresholdSpec& spec);

/// Samples beta given the fixed spec, with independent normal(0, prior_sd)
/// priors per coefficient. Success requires max split-Rhat < 1.05.
mcmc::PosteriorSamples fit_threshold(const ThresholdData& data, const ThresholdSpec& spec,
                                     const mcmc::SamplerConfig& sconf, double prior_sd = 2.5,
                                     bool require_convergence = true);

struct RiskPrediction {
    double p_true = 0.0;      // P(u3 = 1 | x, y) averaged over draws
    double p_marginal = 0.0;  // P(u3 = 1 | x) averaged over draws
    double sd = 0.0;          // spread of p_true across draws
};

/// True-risk prediction for one observation. With y = 1 the no-false-positive
/// assumption forces p_true = 1; with y = 0 the conditional mass ratio
/// P(0 <= u1 < tau + e | x) / P(u1 < tau + e | x) is marginalized over e by
/// quadrature; with y unobserved p_true = p_marginal.
RiskPrediction predict_risk(const mcmc::PosteriorSamples& samples, const Eigen::VectorXd& x,
                            int group, std::optional<int> y_observed,
                            const ThresholdSpec& spec);

struct RiskPredictionBatch {
    Eigen::VectorXd p_true;
    Eigen::VectorXd p_marginal;
    Eigen::VectorXd sd;
};

/// Vectorized predict_risk over rows. Posterior draws are thinned to at most
/// max_draws evenly spaced per chain to keep large batches affordable.
RiskPredictionBatch predict_risk_batch(const mcmc::PosteriorSamples& samples,
                                       const Eigen::MatrixXd& X, const Eigen::VectorXi& group,
                                       const Eigen::VectorXi* y_observed,
                                       const ThresholdSpec& spec, Eigen::Index max_draws = 200);

}  // namespace labelbias::threshold
