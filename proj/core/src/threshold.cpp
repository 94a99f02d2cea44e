#include "labelbias/threshold.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "labelbias/errors.hpp"
#include "labelbias/regress.hpp"
#include "labelbias/rng.hpp"

namespace labelbias::threshold {

namespace {

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-std::clamp(t, -35.0, 35.0))); }

double clip_prob(double p) { return std::clamp(p, 1e-15, 1.0 - 1e-15); }

// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
// Legendre recurrence.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
}

double half_normal_pdf(double e, double scale) {
    const double z = e / scale;
    return std::sqrt(2.0 / std::numbers::pi) / scale * std::exp(-0.5 * z * z);
}

// Thin chain draws to at most max_draws rows, evenly spaced.
Eigen::MatrixXd thin_draws(const mcmc::Chains& chains, Eigen::Index max_draws) {
    const Eigen::Index total = chains.total_draws();
    const Eigen::Index stride = std::max<Eigen::Index>(1, (total + max_draws - 1) / max_draws);
    const Eigen::Index kept = (total + stride - 1) / stride;
    Eigen::MatrixXd out(kept, chains.num_params());
    Eigen::Index at = 0, row = 0;
    for (const auto& m : chains.draws) {
        for (Eigen::Index i = 0; i < m.rows(); ++i, ++at) {
            if (at % stride == 0) out.row(row++) = m.row(i);
        }
    }
    return out.topRows(row);
}

}  // namespace

double ThresholdSpec::tau(int group) const {
    const auto it = tau_by_group.find(group);
    if (it == tau_by_group.end()) {
        throw UnknownGroup("group " + std::to_string(group) + " not present in threshold spec");
    }
    return it->second;
}

void ThresholdSpec::validate() const {
    if (!(e_scale > 0.0)) {
        throw std::invalid_argument("ThresholdSpec: e_scale must be > 0");
    }
    for (const auto& [g, tau] : tau_by_group) {
        if (tau < 0.0) {
            throw std::invalid_argument("ThresholdSpec: tau for group " + std::to_string(g) +
                                        " is negative; thresholds are >= 0 by convention");
        }
    }
}

double solve_base_rate(double total_rate) {
    if (!(total_rate > 0.0 && total_rate < 1.0)) {
        throw std::invalid_argument("solve_base_rate: rate must be in (0,1)");
    }
    return std::log(total_rate / (1.0 - total_rate));
}

double solve_threshold(double alpha, double share) {
    if (!(share >= 0.0 && share < 1.0)) {
        throw std::invalid_argument("solve_threshold: share must be in [0,1)");
    }
    if (share == 0.0) return 0.0;
    const double p_total = sigmoid(alpha);
    const auto implied_share = [&](double tau) { return 1.0 - sigmoid(alpha - tau) / p_total; };

    double lo = 0.0, hi = 1.0;
    while (implied_share(hi) < share) {
        hi *= 2.0;
        if (hi > 1e6) throw std::invalid_argument("solve_threshold: share unreachable");
    }
    // share is monotone increasing in tau
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        (implied_share(mid) < share ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double undiagnosed_share(double alpha, double tau, double e_scale) {
    const double p_total = sigmoid(alpha);
    if (e_scale <= 0.0) return 1.0 - sigmoid(alpha - tau) / p_total;
    const SlackQuadrature quad(e_scale);
    return 1.0 - quad.sigmoid_expectation(alpha - tau) / p_total;
}

SlackQuadrature::SlackQuadrature(double e_scale) : e_scale_(e_scale) {
    if (!(e_scale > 0.0)) throw std::invalid_argument("SlackQuadrature: e_scale must be > 0");
    std::vector<double> gx, gw;
    gauss_legendre(kNodes, gx, gw);
    const double half_len = 3.0 * e_scale;  // interval [0, 6*e_scale]
    mass_ = 0.0;
    for (int k = 0; k < kNodes; ++k) {
        const double e = half_len * (gx[k] + 1.0);
        nodes_[k] = e;
        weights_[k] = gw[k] * half_len * half_normal_pdf(e, e_scale);
        exp_nodes_[k] = std::exp(e);
        mass_ += weights_[k];
    }
}

double SlackQuadrature::sigmoid_expectation(double s) const {
    const double q = std::exp(-std::clamp(s, -35.0, 35.0));
    double acc = 0.0;
    for (int k = 0; k < kNodes; ++k) {
        acc += weights_[k] / (1.0 + exp_nodes_[k] * q);
    }
    return acc;
}

std::vector<std::string> CovariateSpec::column_names() const {
    std::vector<std::string> names{"intercept"};
    for (int j = 1; j <= n_normal; ++j) names.push_back("z" + std::to_string(j));
    names.push_back("group");
    return names;
}

ThresholdDataset simulate_threshold_dgp(const Eigen::VectorXd& coefs, const ThresholdSpec& spec,
                                        Eigen::Index n, std::uint64_t seed,
                                        const CovariateSpec& covariates, bool include_slack) {
    if (n < 2) throw std::invalid_argument("simulate_threshold_dgp: n must be >= 2");
    if (coefs.size() != covariates.design_cols()) {
        throw std::invalid_argument("simulate_threshold_dgp: coefs must have " +
                                    std::to_string(covariates.design_cols()) + " entries");
    }
    spec.validate();

    ThresholdDataset d;
    d.seed = seed;
    d.column_names = covariates.column_names();
    d.X.resize(n, covariates.design_cols());
    d.group.resize(n);
    d.u1.resize(n);
    d.u3.resize(n);
    d.y.resize(n);

    RngStream rng(seed, /*stream_id=*/1);
    for (Eigen::Index i = 0; i < n; ++i) {
        d.X(i, 0) = 1.0;
        for (int j = 0; j < covariates.n_normal; ++j) d.X(i, 1 + j) = rng.normal();
        const int g = rng.bernoulli(covariates.group_prob) ? 1 : 0;
        d.group[i] = g;
        d.X(i, covariates.design_cols() - 1) = g;

        const double xb = d.X.row(i).dot(coefs);
        const double u1 = rng.logistic(xb, 1.0);
        const double e = include_slack ? rng.half_normal(spec.e_scale) : 0.0;
        d.u1[i] = u1;
        d.u3[i] = u1 >= 0.0 ? 1 : 0;
        d.y[i] = u1 >= spec.tau(g) + e ? 1 : 0;
    }
    return d;
}

ThresholdData ThresholdData::from_dataset(const ThresholdDataset& d) {
    return {d.X, d.y, d.group, d.column_names};
}

double threshold_loglik(const Eigen::VectorXd& beta, const ThresholdData& data,
                        const ThresholdSpec& spec) {
    if (beta.size() != data.X.cols()) {
        throw std::invalid_argument("threshold_loglik: beta has wrong dimension");
    }
    const SlackQuadrature quad(spec.e_scale);
    const Eigen::VectorXd t = data.X * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double p = clip_prob(quad.sigmoid_expectation(t[i] - spec.tau(data.group[i])));
        ll += data.y[i] != 0 ? std::log(p) : std::log1p(-p);
    }
    return ll;
}

mcmc::PosteriorSamples fit_threshold(const ThresholdData& data, const ThresholdSpec& spec,
                                     const mcmc::SamplerConfig& sconf, double prior_sd,
                                     bool require_convergence) {
    if (data.X.rows() < 2) throw std::invalid_argument("fit_threshold: need at least 2 rows");
    if (data.X.rows() != data.y.size() || data.X.rows() != data.group.size()) {
        throw std::invalid_argument("fit_threshold: row mismatch");
    }
    spec.validate();
    for (Eigen::Index i = 0; i < data.group.size(); ++i) spec.tau(data.group[i]);

    const Eigen::Index dim = data.X.cols();
    const SlackQuadrature quad(spec.e_scale);
    // per-row thresholds resolved once
    Eigen::VectorXd tau_row(data.X.rows());
    for (Eigen::Index i = 0; i < data.X.rows(); ++i) tau_row[i] = spec.tau(data.group[i]);
    Eigen::VectorXd y_real(data.y.size());
    for (Eigen::Index i = 0; i < data.y.size(); ++i) y_real[i] = data.y[i];

    mcmc::TargetDensity target;
    for (Eigen::Index k = 0; k < dim; ++k) {
        const std::string base = data.column_names.size() == static_cast<std::size_t>(dim)
                                     ? data.column_names[static_cast<std::size_t>(k)]
                                     : std::to_string(k);
        target.params.push_back(mcmc::ParamSpec::unbounded("beta_" + base));
    }
    target.logdensity = [&data, &quad, tau_row, prior_sd](const Eigen::VectorXd& beta) {
        const Eigen::VectorXd t = data.X * beta;
        double lp = 0.0;
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            const double p = clip_prob(quad.sigmoid_expectation(t[i] - tau_row[i]));
            lp += data.y[i] != 0 ? std::log(p) : std::log1p(-p);
        }
        lp += -0.5 * beta.squaredNorm() / (prior_sd * prior_sd);
        return lp;
    };

    // start near the plain logistic solution when it exists
    Eigen::VectorXd init = Eigen::VectorXd::Zero(dim);
    const regress::LogisticFit warm = regress::try_logistic_fit(data.X, y_real, 50);
    if (warm.coeffs.allFinite()) init = warm.coeffs;

    mcmc::PosteriorSamples samples = mcmc::diagnose(mcmc::sample_posterior(target, init, sconf));
    if (require_convergence && !samples.converged) {
        throw NotConverged("fit_threshold: max split-Rhat " + std::to_string(samples.max_rhat) +
                               " >= 1.05",
                           samples.max_rhat);
    }
    return samples;
}

namespace {

// p_true for one (linear predictor, tau) pair with y = 0 observed:
// P(0 <= u1 < tau + e | x) / P(u1 < tau + e | x), both marginalized over e.
double p_true_given_negative(double xb, double tau, const SlackQuadrature& quad) {
    const double p_marg = sigmoid(xb);
    const double p_diag = quad.sigmoid_expectation(xb - tau);  // P(y=1|x)
    const double num = p_marg * quad.mass() - p_diag;          // P(u3=1, y=0|x)
    const double den = quad.mass() - p_diag;                   // P(y=0|x)
    if (den <= 1e-300) return 1.0;
    return std::clamp(num / den, 0.0, 1.0);
}

}  // namespace

RiskPrediction predict_risk(const mcmc::PosteriorSamples& samples, const Eigen::VectorXd& x,
                            int group, std::optional<int> y_observed, const ThresholdSpec& spec) {
    const double tau = spec.tau(group);
    const SlackQuadrature quad(spec.e_scale);
    const auto& chains = samples.chains;
    if (x.size() != chains.num_params()) {
        throw std::invalid_argument("predict_risk: x has wrong dimension");
    }

    double sum_true = 0.0, sum_sq_true = 0.0, sum_marg = 0.0;
    long count = 0;
    for (const auto& m : chains.draws) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const double xb = m.row(i).dot(x);
            const double p_marg = sigmoid(xb);
            double p_true = p_marg;
            if (y_observed.has_value()) {
                p_true = *y_observed != 0 ? 1.0 : p_true_given_negative(xb, tau, quad);
            }
            sum_true += p_true;
            sum_sq_true += p_true * p_true;
            sum_marg += p_marg;
            ++count;
        }
    }
    RiskPrediction out;
    const double n = static_cast<double>(count);
    out.p_true = sum_true / n;
    out.p_marginal = sum_marg / n;
    out.sd = std::sqrt(std::max(sum_sq_true / n - out.p_true * out.p_true, 0.0));
    return out;
}

RiskPredictionBatch predict_risk_batch(const mcmc::PosteriorSamples& samples,
                                       const Eigen::MatrixXd& X, const Eigen::VectorXi& group,
                                       const Eigen::VectorXi* y_observed,
                                       const ThresholdSpec& spec, Eigen::Index max_draws) {
    const auto n = X.rows();
    if (group.size() != n || (y_observed != nullptr && y_observed->size() != n)) {
        throw std::invalid_argument("predict_risk_batch: row mismatch");
    }
    Eigen::VectorXd tau_row(n);
    for (Eigen::Index i = 0; i < n; ++i) tau_row[i] = spec.tau(group[i]);
    const SlackQuadrature quad(spec.e_scale);

    const Eigen::MatrixXd draws = thin_draws(samples.chains, max_draws);
    const Eigen::Index ndraw = draws.rows();
    // one linear-predictor pass per draw
    RiskPredictionBatch out;
    out.p_true = Eigen::VectorXd::Zero(n);
    out.p_marginal = Eigen::VectorXd::Zero(n);
    out.sd = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(n);

    for (Eigen::Index d = 0; d < ndraw; ++d) {
        const Eigen::VectorXd t = X * draws.row(d).transpose();
        for (Eigen::Index i = 0; i < n; ++i) {
            const double p_marg = sigmoid(t[i]);
            double p_true = p_marg;
            if (y_observed != nullptr) {
                p_true = (*y_observed)[i] != 0 ? 1.0
                                               : p_true_given_negative(t[i], tau_row[i], quad);
            }
            out.p_true[i] += p_true;
            out.p_marginal[i] += p_marg;
            sum_sq[i] += p_true * p_true;
        }
    }
    const double nd = static_cast<double>(ndraw);
    out.p_true /= nd;
    out.p_marginal /= nd;
    for (Eigen::Index i = 0; i < n; ++i) {
        out.sd[i] = std::sqrt(std::max(sum_sq[i] / nd - out.p_true[i] * out.p_true[i], 0.0));
    }
    return out;
}

}  // namespace labelbias::threshold
