#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>

#include "labelbias/sampler.hpp"
#include "labelbias/sem.hpp"

namespace labelbias::leakage {

/// Parameter point of the Gaussian leakage model
///   y_t | u_t ~ normal(x*alpha + gamma*u_t, sigma_y)
///   u0      ~ normal(x*beta, sigma_u)
///   u1 | u0 ~ normal(x*beta + eta*(u0 - x*beta), sigma_u*sqrt(1 - eta^2)).
/// sigma_u is treated as known and is never sampled.
struct LeakageParams {
    double alpha = 0.0;
    double gamma = 1.0;
    double beta = 0.0;
    double eta = 0.0;      // |eta| < 1
    double sigma_y = 1.0;  // > 0
    double sigma_u = 1.0;  // > 0, fixed
};

/// Leakage parameter point matching a SEM configuration (same symbols).
LeakageParams params_from_sem(const simdata::SemParams& sem);

struct NormalPrior {
    double center = 0.0;
    double scale = 1.0;
};

/// Prior block for the leakage model. beta and gamma are not identifiable
/// from (x, y0, y1) alone and take strong priors (sd 0.1 around the assumed
/// truth); alpha, eta and sigma_y are identifiable and take weak ones.
/// A strong prior with scale 0 is a point mass: the parameter is pinned.
struct LeakagePriors {
    NormalPrior alpha{0.0, 1.0};
    NormalPrior gamma{0.0, 0.1};
    NormalPrior beta{0.0, 0.1};
    NormalPrior eta{0.0, 0.2};
    double sigma_y_scale = 1.0;  // half-normal scale
    double sigma_u = 1.0;        // known constant, carried with the priors

    static LeakagePriors reference(double beta_true, double gamma_true, double sigma_u);
    static LeakagePriors reference(const LeakageParams& truth);
};

enum class MisspecTarget { Beta, Gamma };

/// Multiplicative prior misspecification: the strong-prior center of the
/// chosen parameter becomes m * its true value; widths are unchanged.
LeakagePriors misspecify_priors(const LeakageParams& true_params, double m, MisspecTarget which);

/// Sufficient statistics of (x, y0, y1): the marginal likelihood depends on
/// the data only through these, so one MCMC evaluation is O(1).
struct LeakageSuffStats {
    double sxx = 0.0, sxy0 = 0.0, sxy1 = 0.0;
    double sy0y0 = 0.0, sy1y1 = 0.0, sy0y1 = 0.0;
    long n = 0;

    static LeakageSuffStats from(const simdata::SemDataset& data);
};

/// Log marginal likelihood of (y0, y1) given x with the latents integrated
/// out analytically: per row, (y0, y1) | x is bivariate normal with mean
/// x*(alpha + gamma*beta)*(1,1) and covariance
/// gamma^2*sigma_u^2*[[1, eta], [eta, 1]] + sigma_y^2*I.
/// Row-wise summation; throws NonPositiveDefiniteCovariance for invalid
/// parameter points.
double marginal_loglik(const LeakageParams& params, const simdata::SemDataset& data,
                       bool use_covariate = true);

/// Same value computed from sufficient statistics.
double marginal_loglik(const LeakageParams& params, const LeakageSuffStats& stats,
                       bool use_covariate = true);

/// Posterior over the leakage parameters plus the fixed model facts needed
/// for prediction.
struct LeakagePosterior {
    mcmc::PosteriorSamples samples;
    double sigma_u = 1.0;
    bool use_covariate = true;
    LeakagePriors priors;
};

/// Samples (alpha, gamma, beta, eta, sigma_y) given the prior block.
/// With use_covariate = false, alpha and beta drop out of the model and the
/// chains cover (gamma, eta, sigma_y) only. Success requires max split-Rhat
/// below 1.05; set require_convergence = false to get the draws regardless
/// (diagnostics stay attached).
LeakagePosterior fit_leakage(const simdata::SemDataset& data, const LeakagePriors& priors,
                             const mcmc::SamplerConfig& sconf, bool use_covariate = true,
                             bool require_convergence = true);

/// Filtering predicts u1 from (x, y0) only; smoothing additionally
/// conditions on y1.
enum class PredictionMode { Filtering, Smoothing };

/// Parses "filtering" / "smoothing"; throws UnknownMode otherwise.
PredictionMode mode_from_string(const std::string& mode);

struct LatentPrediction {
    double mean = 0.0;
    double sd = 0.0;
};

/// Posterior-mean prediction of the latent u1 for one observation: the
/// Gaussian conditional mean per draw, averaged over draws; the sd combines
/// within-draw conditional variance and across-draw spread.
LatentPrediction predict_latent(const LeakagePosterior& posterior, double x, double y0,
                                PredictionMode mode, std::optional<double> y1 = std::nullopt);

/// String-mode convenience; throws UnknownMode for anything else.
LatentPrediction predict_latent(const LeakagePosterior& posterior, double x, double y0,
                                const std::string& mode,
                                std::optional<double> y1 = std::nullopt);

/// Vectorized variant used by the experiment sweeps. y1 may be null unless
/// mode is Smoothing. sd_out may be null when only means are needed.
void predict_latent_batch(const LeakagePosterior& posterior, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& y0, const Eigen::VectorXd* y1,
                          PredictionMode mode, Eigen::VectorXd& mean_out,
                          Eigen::VectorXd* sd_out = nullptr);

}  // namespace labelbias::leakage
