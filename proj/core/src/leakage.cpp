#include "labelbias/leakage.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "labelbias/errors.hpp"

namespace labelbias::leakage {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct BivariateTerms {
    double c;     // common mean coefficient alpha + gamma*beta (0 without covariate)
    double v;     // Var(y_t | x)
    double cov;   // Cov(y0, y1 | x)
    double det;   // v^2 - cov^2
};

BivariateTerms bivariate_terms(const LeakageParams& p, bool use_covariate) {
    BivariateTerms t;
    const double g2su2 = p.gamma * p.gamma * p.sigma_u * p.sigma_u;
    t.c = use_covariate ? p.alpha + p.gamma * p.beta : 0.0;
    t.v = g2su2 + p.sigma_y * p.sigma_y;
    t.cov = g2su2 * p.eta;
    t.det = t.v * t.v - t.cov * t.cov;
    if (!(t.v > 0.0) || !(t.det > 0.0)) {
        throw NonPositiveDefiniteCovariance(
            "marginal_loglik: implied proxy covariance is not positive definite (V = " +
            std::to_string(t.v) + ", det = " + std::to_string(t.det) + ")");
    }
    return t;
}

// Per-draw weights of the Gaussian conditional mean of u1, so that
// E[u1 | data] = wx*x + wy0*y0 + wy1*y1, plus the conditional variance.
struct PredictWeights {
    double wx = 0.0, wy0 = 0.0, wy1 = 0.0, cond_var = 0.0;
};

PredictWeights conditional_weights(const LeakageParams& p, bool use_covariate,
                                   PredictionMode mode) {
    const double su2 = p.sigma_u * p.sigma_u;
    const double delta = p.eta * su2;
    const double c = use_covariate ? p.alpha + p.gamma * p.beta : 0.0;
    const double beta = use_covariate ? p.beta : 0.0;
    const double v = p.gamma * p.gamma * su2 + p.sigma_y * p.sigma_y;

    PredictWeights w;
    if (mode == PredictionMode::Filtering) {
        // u1 and y0 given x: Cov(u1, y0) = gamma*delta
        const double k = p.gamma * delta / v;
        w.wy0 = k;
        w.wx = beta - k * c;
        w.cond_var = su2 - p.gamma * delta * k;
    } else {
        // u1 and (y0, y1) given x: Cov = (gamma*delta, gamma*su2)
        const double cyy = p.gamma * p.gamma * delta;
        const double det = v * v - cyy * cyy;
        const double b0 = (v * p.gamma * delta - cyy * p.gamma * su2) / det;
        const double b1 = (v * p.gamma * su2 - cyy * p.gamma * delta) / det;
        w.wy0 = b0;
        w.wy1 = b1;
        w.wx = beta - (b0 + b1) * c;
        w.cond_var = su2 - (p.gamma * delta * b0 + p.gamma * su2 * b1);
    }
    w.cond_var = std::max(w.cond_var, 0.0);
    return w;
}

double normal_logpdf(double v, double center, double scale) {
    const double z = (v - center) / scale;
    return -0.5 * z * z - std::log(scale) - 0.5 * kLog2Pi;
}

// The marginal likelihood identifies only the mean slope c = alpha +
// gamma*beta, the proxy variance v = gamma^2 sigma_u^2 + sigma_y^2 and the
// proxy correlation rho = cov/v. The sampler therefore works in
// (c, v, rho, gamma, beta): the tightly identified directions become
// axis-aligned, the curved trade-offs between gamma, eta and sigma_y move
// into smooth prior factors, and the chains are mapped back to the model
// parameterization afterwards.
enum class Coord { C, V, Rho, Gamma, Beta };

struct SampledCoord {
    Coord coord;
    mcmc::ParamSpec spec;
};

struct ModelPoint {
    LeakageParams params;
    double log_jacobian = 0.0;
    bool in_support = false;
};

// Map a sampled point back to model parameters; fixed values fill the
// coordinates that are pinned or absent.
ModelPoint decode_point(const Eigen::VectorXd& v, const std::vector<SampledCoord>& layout,
                        const LeakagePriors& priors, bool use_covariate) {
    double c = 0.0, var = 0.0, rho = 0.0;
    ModelPoint out;
    out.params.sigma_u = priors.sigma_u;
    out.params.gamma = priors.gamma.center;
    out.params.beta = use_covariate ? priors.beta.center : 0.0;
    bool have_c = false;
    for (std::size_t k = 0; k < layout.size(); ++k) {
        const double x = v[static_cast<Eigen::Index>(k)];
        switch (layout[k].coord) {
            case Coord::C: c = x; have_c = true; break;
            case Coord::V: var = x; break;
            case Coord::Rho: rho = x; break;
            case Coord::Gamma: out.params.gamma = x; break;
            case Coord::Beta: out.params.beta = x; break;
        }
    }
    LeakageParams& p = out.params;
    const double g2su2 = p.gamma * p.gamma * p.sigma_u * p.sigma_u;
    const double sigy2 = var - g2su2;
    if (sigy2 <= 0.0 || g2su2 <= 0.0) return out;
    p.sigma_y = std::sqrt(sigy2);
    p.eta = rho * var / g2su2;
    if (std::abs(p.eta) >= 1.0) return out;
    p.alpha = have_c ? c - p.gamma * p.beta : 0.0;
    // |d(alpha, eta, sigma_y) / d(c, v, rho)| at fixed (gamma, beta)
    out.log_jacobian = std::log(var) - std::log(g2su2) - std::log(2.0 * p.sigma_y);
    out.in_support = true;
    return out;
}

}  // namespace

LeakageParams params_from_sem(const simdata::SemParams& sem) {
    LeakageParams p;
    p.alpha = sem.alpha;
    p.gamma = sem.gamma;
    p.beta = sem.beta;
    p.eta = sem.eta;
    p.sigma_y = sem.sigma_y;
    p.sigma_u = sem.sigma_u;
    return p;
}

LeakagePriors LeakagePriors::reference(double beta_true, double gamma_true, double sigma_u) {
    LeakagePriors pr;
    pr.alpha = {0.0, 1.0};
    pr.eta = {0.0, 0.2};
    pr.sigma_y_scale = 1.0;
    pr.beta = {beta_true, 0.1};
    pr.gamma = {gamma_true, 0.1};
    pr.sigma_u = sigma_u;
    return pr;
}

LeakagePriors LeakagePriors::reference(const LeakageParams& truth) {
    return reference(truth.beta, truth.gamma, truth.sigma_u);
}

LeakagePriors misspecify_priors(const LeakageParams& true_params, double m, MisspecTarget which) {
    if (!(m > 0.0)) throw std::invalid_argument("misspecify_priors: m must be > 0");
    LeakagePriors pr = LeakagePriors::reference(true_params);
    if (which == MisspecTarget::Beta) {
        pr.beta.center = m * true_params.beta;
    } else {
        pr.gamma.center = m * true_params.gamma;
    }
    return pr;
}

LeakageSuffStats LeakageSuffStats::from(const simdata::SemDataset& data) {
    LeakageSuffStats s;
    s.n = static_cast<long>(data.n());
    s.sxx = data.x.squaredNorm();
    s.sxy0 = data.x.dot(data.y0);
    s.sxy1 = data.x.dot(data.y1);
    s.sy0y0 = data.y0.squaredNorm();
    s.sy1y1 = data.y1.squaredNorm();
    s.sy0y1 = data.y0.dot(data.y1);
    return s;
}

double marginal_loglik(const LeakageParams& params, const simdata::SemDataset& data,
                       bool use_covariate) {
    const BivariateTerms t = bivariate_terms(params, use_covariate);
    const auto n = data.n();
    double quad = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = t.c * data.x[i];
        const double r0 = data.y0[i] - m;
        const double r1 = data.y1[i] - m;
        quad += t.v * (r0 * r0 + r1 * r1) - 2.0 * t.cov * r0 * r1;
    }
    return -static_cast<double>(n) * kLog2Pi - 0.5 * static_cast<double>(n) * std::log(t.det) -
           0.5 * quad / t.det;
}

double marginal_loglik(const LeakageParams& params, const LeakageSuffStats& s,
                       bool use_covariate) {
    const BivariateTerms t = bivariate_terms(params, use_covariate);
    const double c = t.c;
    const double sum_sq =
        s.sy0y0 + s.sy1y1 - 2.0 * c * (s.sxy0 + s.sxy1) + 2.0 * c * c * s.sxx;
    const double sum_cross = s.sy0y1 - c * (s.sxy0 + s.sxy1) + c * c * s.sxx;
    const double quad = t.v * sum_sq - 2.0 * t.cov * sum_cross;
    const auto n = static_cast<double>(s.n);
    return -n * kLog2Pi - 0.5 * n * std::log(t.det) - 0.5 * quad / t.det;
}

LeakagePosterior fit_leakage(const simdata::SemDataset& data, const LeakagePriors& priors,
                             const mcmc::SamplerConfig& sconf, bool use_covariate,
                             bool require_convergence) {
    if (data.n() < 2) throw std::invalid_argument("fit_leakage: need at least 2 rows");
    if (priors.sigma_u <= 0.0) throw std::invalid_argument("fit_leakage: sigma_u must be > 0");
    if (priors.alpha.scale <= 0.0 || priors.eta.scale <= 0.0 || priors.sigma_y_scale <= 0.0) {
        throw std::invalid_argument("fit_leakage: weak priors need positive scales");
    }
    if (priors.beta.scale < 0.0 || priors.gamma.scale < 0.0) {
        throw std::invalid_argument("fit_leakage: negative prior scale");
    }

    // A strong prior with zero width pins its parameter instead of sampling it.
    std::vector<SampledCoord> layout;
    if (use_covariate) {
        layout.push_back({Coord::C, mcmc::ParamSpec::unbounded("slope")});
    }
    layout.push_back({Coord::V, mcmc::ParamSpec::positive("proxy_var")});
    layout.push_back({Coord::Rho, mcmc::ParamSpec::interval("proxy_corr", -1.0, 1.0)});
    if (priors.gamma.scale > 0.0) {
        layout.push_back({Coord::Gamma, mcmc::ParamSpec::unbounded("gamma")});
    }
    if (use_covariate && priors.beta.scale > 0.0) {
        layout.push_back({Coord::Beta, mcmc::ParamSpec::unbounded("beta")});
    }

    const LeakageSuffStats stats = LeakageSuffStats::from(data);

    mcmc::TargetDensity target;
    for (const auto& sc : layout) target.params.push_back(sc.spec);
    target.logdensity = [layout, priors, stats, use_covariate](const Eigen::VectorXd& v) {
        const ModelPoint point = decode_point(v, layout, priors, use_covariate);
        if (!point.in_support) return -std::numeric_limits<double>::infinity();
        const LeakageParams& p = point.params;
        double lp = marginal_loglik(p, stats, use_covariate) + point.log_jacobian;
        if (use_covariate) {
            lp += normal_logpdf(p.alpha, priors.alpha.center, priors.alpha.scale);
            if (priors.beta.scale > 0.0) {
                lp += normal_logpdf(p.beta, priors.beta.center, priors.beta.scale);
            }
        }
        if (priors.gamma.scale > 0.0) {
            lp += normal_logpdf(p.gamma, priors.gamma.center, priors.gamma.scale);
        }
        lp += normal_logpdf(p.eta, priors.eta.center, priors.eta.scale);
        lp += std::numbers::ln2 + normal_logpdf(p.sigma_y, 0.0, priors.sigma_y_scale);
        return lp;
    };

    // start (slope, variance, correlation) at their moment estimates so the
    // chains begin inside the region the likelihood identifies; gamma and
    // beta start at their prior centers
    const double gamma0 = priors.gamma.center;
    const double beta0 = use_covariate ? priors.beta.center : 0.0;
    const double g2su20 = std::max(gamma0 * gamma0 * priors.sigma_u * priors.sigma_u, 1e-6);
    const double nd = static_cast<double>(stats.n);
    const double c_hat =
        use_covariate && stats.sxx > 0.0 ? (stats.sxy0 + stats.sxy1) / (2.0 * stats.sxx) : 0.0;
    double v_hat = (stats.sy0y0 + stats.sy1y1 - 2.0 * c_hat * (stats.sxy0 + stats.sxy1) +
                    2.0 * c_hat * c_hat * stats.sxx) /
                   (2.0 * nd);
    v_hat = std::max(v_hat, g2su20 * 1.02 + 1e-8);  // keep sigma_y^2 > 0 at init
    const double cov_hat =
        (stats.sy0y1 - c_hat * (stats.sxy0 + stats.sxy1) + c_hat * c_hat * stats.sxx) / nd;
    // keep |eta| well inside (-1, 1) at init
    const double rho_cap = 0.95 * g2su20 / v_hat;
    const double rho_hat = std::clamp(cov_hat / v_hat, -rho_cap, rho_cap);

    Eigen::VectorXd init(static_cast<Eigen::Index>(layout.size()));
    for (std::size_t k = 0; k < layout.size(); ++k) {
        double v = 0.0;
        switch (layout[k].coord) {
            case Coord::C: v = c_hat; break;
            case Coord::V: v = v_hat; break;
            case Coord::Rho: v = rho_hat; break;
            case Coord::Gamma: v = gamma0; break;
            case Coord::Beta: v = beta0; break;
        }
        init[static_cast<Eigen::Index>(k)] = v;
    }

    mcmc::Chains raw = mcmc::sample_posterior(target, init, sconf);

    // report the chains in the model parameterization
    mcmc::Chains chains;
    chains.seed = raw.seed;
    chains.accept_rate = raw.accept_rate;
    if (use_covariate) chains.param_names = {"alpha", "gamma", "beta", "eta", "sigma_y"};
    else chains.param_names = {"gamma", "eta", "sigma_y"};
    for (const auto& m : raw.draws) {
        Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(chains.param_names.size()));
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const ModelPoint point =
                decode_point(m.row(i).transpose(), layout, priors, use_covariate);
            const LeakageParams& p = point.params;
            if (use_covariate) out.row(i) << p.alpha, p.gamma, p.beta, p.eta, p.sigma_y;
            else out.row(i) << p.gamma, p.eta, p.sigma_y;
        }
        chains.draws.push_back(std::move(out));
    }

    LeakagePosterior post;
    post.samples = mcmc::diagnose(std::move(chains));
    post.sigma_u = priors.sigma_u;
    post.use_covariate = use_covariate;
    post.priors = priors;
    if (require_convergence && !post.samples.converged) {
        throw NotConverged("fit_leakage: max split-Rhat " +
                               std::to_string(post.samples.max_rhat) + " >= 1.05",
                           post.samples.max_rhat);
    }
    return post;
}

PredictionMode mode_from_string(const std::string& mode) {
    if (mode == "filtering") return PredictionMode::Filtering;
    if (mode == "smoothing") return PredictionMode::Smoothing;
    throw UnknownMode("unknown prediction mode '" + mode + "'; expected filtering or smoothing");
}

namespace {

// Moments of the per-draw prediction weights, accumulated over all chains.
struct WeightMoments {
    double mx = 0, my0 = 0, my1 = 0, mv = 0;
    double sxx = 0, sy0y0 = 0, sy1y1 = 0, sxy0 = 0, sxy1 = 0, sy0y1 = 0;
    long n = 0;

    void add(const PredictWeights& w) {
        ++n;
        mx += w.wx;
        my0 += w.wy0;
        my1 += w.wy1;
        mv += w.cond_var;
        sxx += w.wx * w.wx;
        sy0y0 += w.wy0 * w.wy0;
        sy1y1 += w.wy1 * w.wy1;
        sxy0 += w.wx * w.wy0;
        sxy1 += w.wx * w.wy1;
        sy0y1 += w.wy0 * w.wy1;
    }

    void finalize() {
        const double d = static_cast<double>(n);
        mx /= d; my0 /= d; my1 /= d; mv /= d;
        sxx = sxx / d - mx * mx;
        sy0y0 = sy0y0 / d - my0 * my0;
        sy1y1 = sy1y1 / d - my1 * my1;
        sxy0 = sxy0 / d - mx * my0;
        sxy1 = sxy1 / d - mx * my1;
        sy0y1 = sy0y1 / d - my0 * my1;
    }

    double mean_at(double x, double y0, double y1) const {
        return mx * x + my0 * y0 + my1 * y1;
    }

    // Law of total variance: mean conditional variance plus the variance of
    // the per-draw conditional means.
    double var_at(double x, double y0, double y1) const {
        const double between = sxx * x * x + sy0y0 * y0 * y0 + sy1y1 * y1 * y1 +
                               2.0 * (sxy0 * x * y0 + sxy1 * x * y1 + sy0y1 * y0 * y1);
        return mv + std::max(between, 0.0);
    }
};

WeightMoments weight_moments(const LeakagePosterior& posterior, PredictionMode mode) {
    const auto& chains = posterior.samples.chains;
    LeakageParams p;
    p.sigma_u = posterior.sigma_u;
    const auto find = [&](const char* name) -> Eigen::Index {
        for (std::size_t k = 0; k < chains.param_names.size(); ++k) {
            if (chains.param_names[k] == name) return static_cast<Eigen::Index>(k);
        }
        return -1;
    };
    const Eigen::Index ia = find("alpha"), ig = find("gamma"), ib = find("beta"),
                       ie = find("eta"), is = find("sigma_y");

    WeightMoments mom;
    for (const auto& m : chains.draws) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            p.alpha = ia >= 0 ? m(i, ia) : (posterior.use_covariate ? posterior.priors.alpha.center : 0.0);
            p.gamma = ig >= 0 ? m(i, ig) : posterior.priors.gamma.center;
            p.beta = ib >= 0 ? m(i, ib) : (posterior.use_covariate ? posterior.priors.beta.center : 0.0);
            p.eta = ie >= 0 ? m(i, ie) : posterior.priors.eta.center;
            p.sigma_y = is >= 0 ? m(i, is) : 0.5 * posterior.priors.sigma_y_scale;
            mom.add(conditional_weights(p, posterior.use_covariate, mode));
        }
    }
    mom.finalize();
    return mom;
}

}  // namespace

LatentPrediction predict_latent(const LeakagePosterior& posterior, double x, double y0,
                                PredictionMode mode, std::optional<double> y1) {
    if (mode == PredictionMode::Smoothing && !y1.has_value()) {
        throw std::invalid_argument("predict_latent: smoothing requires y1");
    }
    const WeightMoments mom = weight_moments(posterior, mode);
    const double y1v = y1.value_or(0.0);
    LatentPrediction out;
    out.mean = mom.mean_at(x, y0, y1v);
    out.sd = std::sqrt(mom.var_at(x, y0, y1v));
    return out;
}

LatentPrediction predict_latent(const LeakagePosterior& posterior, double x, double y0,
                                const std::string& mode, std::optional<double> y1) {
    return predict_latent(posterior, x, y0, mode_from_string(mode), y1);
}

void predict_latent_batch(const LeakagePosterior& posterior, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& y0, const Eigen::VectorXd* y1,
                          PredictionMode mode, Eigen::VectorXd& mean_out,
                          Eigen::VectorXd* sd_out) {
    if (mode == PredictionMode::Smoothing && y1 == nullptr) {
        throw std::invalid_argument("predict_latent_batch: smoothing requires y1");
    }
    if (x.size() != y0.size() || (y1 != nullptr && y1->size() != x.size())) {
        throw std::invalid_argument("predict_latent_batch: length mismatch");
    }
    const WeightMoments mom = weight_moments(posterior, mode);
    const auto n = x.size();
    mean_out.resize(n);
    if (sd_out != nullptr) sd_out->resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double y1v = y1 != nullptr ? (*y1)[i] : 0.0;
        mean_out[i] = mom.mean_at(x[i], y0[i], y1v);
        if (sd_out != nullptr) (*sd_out)[i] = std::sqrt(mom.var_at(x[i], y0[i], y1v));
    }
}

}  // namespace labelbias::leakage
