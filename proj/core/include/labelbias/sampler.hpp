#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace labelbias::mcmc {

/// How a parameter is mapped to the unconstrained sampling space.
enum class TransformKind {
    Identity,  // unconstrained
    Positive,  // x > 0, sampled as log x
    Interval,  // lower < x < upper, sampled on the logit scale
};

struct ParamSpec {
    std::string name;
    TransformKind kind = TransformKind::Identity;
    double lower = 0.0;
    double upper = 0.0;

    static ParamSpec unbounded(std::string name) {
        return {std::move(name), TransformKind::Identity, 0.0, 0.0};
    }
    static ParamSpec positive(std::string name) {
        return {std::move(name), TransformKind::Positive, 0.0, 0.0};
    }
    static ParamSpec interval(std::string name, double lower, double upper) {
        return {std::move(name), TransformKind::Interval, lower, upper};
    }

    double to_unconstrained(double x) const;
    double to_constrained(double z) const;
    double log_jacobian(double z) const;
    bool in_support(double x) const;
};

/// Target distribution: a log-density over the constrained parameter vector
/// plus the parameter transforms. The sampler works on the unconstrained
/// scale with the log-Jacobian added, so constrained parameters never leave
/// their support. The log-density must be safe for concurrent evaluation.
struct TargetDensity {
    std::function<double(const Eigen::VectorXd&)> logdensity;
    std::vector<ParamSpec> params;
};

struct SamplerConfig {
    int chains = 4;
    int warmup = 1000;
    int draws = 1000;
    std::uint64_t seed = 0;
    double initial_step_scale = 0.5;
    int adapt_window = 50;
};

/// Post-warmup draws on the constrained scale, one matrix per chain
/// (draws x params), merged in chain order.
struct Chains {
    std::vector<Eigen::MatrixXd> draws;
    std::vector<double> accept_rate;
    std::vector<std::string> param_names;
    std::uint64_t seed = 0;

    int num_chains() const { return static_cast<int>(draws.size()); }
    Eigen::Index num_draws() const { return draws.empty() ? 0 : draws[0].rows(); }
    Eigen::Index num_params() const { return draws.empty() ? 0 : draws[0].cols(); }
    Eigen::Index total_draws() const { return num_draws() * num_chains(); }

    /// All chains stacked, one column per draw of the given parameter.
    Eigen::VectorXd flattened(Eigen::Index param) const;
    double mean(Eigen::Index param) const;
    double sd(Eigen::Index param) const;
    Eigen::Index param_index(const std::string& name) const;
};

/// Adaptive random-walk Metropolis. The proposal covariance and scale are
/// adapted during warmup only (Robbins-Monro toward 0.3 acceptance); the
/// post-warmup kernel is fixed, so detailed balance holds for the retained
/// draws. Deterministic given config.seed, including under concurrent chain
/// execution. init is given on the constrained scale.
///
/// Throws NonFiniteDensityAtInit or AllProposalsRejected.
Chains sample_posterior(const TargetDensity& target, const Eigen::VectorXd& init,
                        const SamplerConfig& config);

/// Split-Rhat per parameter. Constant identical chains report 1 by convention.
Eigen::VectorXd rhat(const Chains& chains);

/// Autocorrelation-based effective sample size per parameter, summed over
/// chains, truncated at the first non-positive autocorrelation pair and
/// capped at the total number of draws.
Eigen::VectorXd ess(const Chains& chains);

/// Draws plus convergence diagnostics; the standard return type of the
/// model-fitting routines.
struct PosteriorSamples {
    Chains chains;
    Eigen::VectorXd rhat;
    Eigen::VectorXd ess;
    double max_rhat = 0.0;
    bool converged = false;  // max_rhat below threshold

    double mean(const std::string& name) const { return chains.mean(chains.param_index(name)); }
    double sd(const std::string& name) const { return chains.sd(chains.param_index(name)); }
};

/// Attaches diagnostics to sampled chains; converged iff max Rhat < threshold.
PosteriorSamples diagnose(Chains chains, double rhat_threshold = 1.05);

/// One row per draw: chain, iteration, then one column per parameter.
void write_chains_csv(const Chains& chains, const std::filesystem::path& path,
                      const std::vector<std::string>& header_comments = {});

}  // namespace labelbias::mcmc
