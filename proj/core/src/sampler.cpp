#include "labelbias/sampler.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <stdexcept>

#include "labelbias/dataset.hpp"
#include "labelbias/errors.hpp"
#include "labelbias/rng.hpp"

namespace labelbias::mcmc {

namespace {

double log1pexp(double t) {
    if (t > 35.0) return t;
    if (t < -35.0) return std::exp(t);
    return std::log1p(std::exp(t));
}

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Running mean and covariance (Welford) of the unconstrained chain state.
class RunningCov {
public:
    explicit RunningCov(Eigen::Index dim)
        : count_(0), mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::MatrixXd::Zero(dim, dim)) {}

    void add(const Eigen::VectorXd& x) {
        ++count_;
        const Eigen::VectorXd d = x - mean_;
        mean_ += d / static_cast<double>(count_);
        m2_ += d * (x - mean_).transpose();
    }

    long count() const { return count_; }

    Eigen::MatrixXd cov() const {
        if (count_ < 2) return Eigen::MatrixXd::Identity(mean_.size(), mean_.size());
        return m2_ / static_cast<double>(count_ - 1);
    }

private:
    long count_;
    Eigen::VectorXd mean_;
    Eigen::MatrixXd m2_;
};

struct ChainResult {
    Eigen::MatrixXd draws;  // constrained
    double accept_rate = 0.0;
};

ChainResult run_chain(const TargetDensity& target, const Eigen::VectorXd& z_init,
                      const SamplerConfig& config, int chain_id) {
    const Eigen::Index dim = z_init.size();
    RngStream rng(config.seed, 1000 + static_cast<std::uint64_t>(chain_id));

    const auto logpost = [&](const Eigen::VectorXd& z) -> double {
        Eigen::VectorXd x(dim);
        double jac = 0.0;
        for (Eigen::Index k = 0; k < dim; ++k) {
            x[k] = target.params[k].to_constrained(z[k]);
            jac += target.params[k].log_jacobian(z[k]);
        }
        const double ld = target.logdensity(x);
        if (std::isnan(ld)) return kNegInf;
        return ld + jac;
    };

    // Jitter the start point per chain; fall back to the shared init if the
    // jittered density is not finite.
    Eigen::VectorXd z = z_init;
    for (Eigen::Index k = 0; k < dim; ++k) z[k] += 0.1 * rng.normal();
    double lp = logpost(z);
    if (!std::isfinite(lp)) {
        z = z_init;
        lp = logpost(z);
    }

    Eigen::MatrixXd prop_chol = Eigen::MatrixXd::Identity(dim, dim);
    double log_scale = std::log(config.initial_step_scale);
    RunningCov running(dim);

    // covariance windows restart twice early in warmup, so late estimates
    // reflect the region the chain actually settles into
    const long restart_a = config.warmup / 4;
    const long restart_b = config.warmup / 2;

    Eigen::MatrixXd draws(config.draws, dim);
    long accepted_post = 0;
    long rm_clock = 0;  // Robbins-Monro time, reset whenever the proposal shape changes
    Eigen::VectorXd xi(dim), z_prop(dim);

    const long total = static_cast<long>(config.warmup) + config.draws;
    for (long iter = 0; iter < total; ++iter) {
        const bool in_warmup = iter < config.warmup;
        for (Eigen::Index k = 0; k < dim; ++k) xi[k] = rng.normal();
        z_prop = z + std::exp(log_scale) * (prop_chol * xi);
        const double lp_prop = logpost(z_prop);
        const double accept_prob = std::min(1.0, std::exp(lp_prop - lp));
        if (rng.uniform() < accept_prob) {
            z = z_prop;
            lp = lp_prop;
            if (!in_warmup) ++accepted_post;
        }

        if (in_warmup) {
            running.add(z);
            // Robbins-Monro scaling toward 0.3 acceptance
            ++rm_clock;
            log_scale += (accept_prob - 0.3) / std::pow(9.0 + static_cast<double>(rm_clock), 0.6);
            if ((iter + 1) % config.adapt_window == 0 && running.count() > 2 * dim + 2) {
                Eigen::MatrixXd cov = running.cov();
                cov.diagonal().array() += 1e-8;
                const Eigen::LLT<Eigen::MatrixXd> llt(cov);
                if (llt.info() == Eigen::Success) {
                    prop_chol = llt.matrixL();
                    rm_clock = 0;
                }
            }
            if (iter + 1 == restart_a || iter + 1 == restart_b) running = RunningCov(dim);
        } else {
            const long row = iter - config.warmup;
            for (Eigen::Index k = 0; k < dim; ++k) {
                draws(row, k) = target.params[k].to_constrained(z[k]);
            }
        }
    }

    if (accepted_post == 0) {
        throw AllProposalsRejected("sample_posterior: chain " + std::to_string(chain_id) +
                                   " accepted no proposal after warmup (step scale " +
                                   std::to_string(std::exp(log_scale)) + ")");
    }
    return {std::move(draws), static_cast<double>(accepted_post) / config.draws};
}

}  // namespace

double ParamSpec::to_unconstrained(double x) const {
    switch (kind) {
        case TransformKind::Identity:
            return x;
        case TransformKind::Positive:
            return std::log(x);
        case TransformKind::Interval: {
            const double u = (x - lower) / (upper - lower);
            return std::log(u / (1.0 - u));
        }
    }
    return x;
}

double ParamSpec::to_constrained(double z) const {
    switch (kind) {
        case TransformKind::Identity:
            return z;
        case TransformKind::Positive:
            return std::exp(z);
        case TransformKind::Interval: {
            const double s = 1.0 / (1.0 + std::exp(-z));
            return lower + (upper - lower) * s;
        }
    }
    return z;
}

double ParamSpec::log_jacobian(double z) const {
    switch (kind) {
        case TransformKind::Identity:
            return 0.0;
        case TransformKind::Positive:
            return z;
        case TransformKind::Interval:
            return std::log(upper - lower) - log1pexp(-z) - log1pexp(z);
    }
    return 0.0;
}

bool ParamSpec::in_support(double x) const {
    switch (kind) {
        case TransformKind::Identity:
            return std::isfinite(x);
        case TransformKind::Positive:
            return x > 0.0 && std::isfinite(x);
        case TransformKind::Interval:
            return x > lower && x < upper;
    }
    return true;
}

Eigen::VectorXd Chains::flattened(Eigen::Index param) const {
    Eigen::VectorXd out(total_draws());
    Eigen::Index at = 0;
    for (const auto& m : draws) {
        out.segment(at, m.rows()) = m.col(param);
        at += m.rows();
    }
    return out;
}

double Chains::mean(Eigen::Index param) const { return flattened(param).mean(); }

double Chains::sd(Eigen::Index param) const {
    const Eigen::VectorXd v = flattened(param);
    const double m = v.mean();
    return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

Eigen::Index Chains::param_index(const std::string& name) const {
    for (std::size_t k = 0; k < param_names.size(); ++k) {
        if (param_names[k] == name) return static_cast<Eigen::Index>(k);
    }
    throw std::invalid_argument("Chains: unknown parameter '" + name + "'");
}

Chains sample_posterior(const TargetDensity& target, const Eigen::VectorXd& init,
                        const SamplerConfig& config) {
    const Eigen::Index dim = init.size();
    if (dim == 0 || target.params.size() != static_cast<std::size_t>(dim)) {
        throw std::invalid_argument("sample_posterior: init/params size mismatch");
    }
    if (config.chains < 2) throw std::invalid_argument("sample_posterior: chains must be >= 2");
    if (config.draws < 100) throw std::invalid_argument("sample_posterior: draws must be >= 100");
    if (config.warmup < config.adapt_window) {
        throw std::invalid_argument("sample_posterior: warmup must be >= adapt_window");
    }
    if (config.initial_step_scale <= 0.0 || config.adapt_window <= 0) {
        throw std::invalid_argument("sample_posterior: bad step scale or adapt window");
    }

    Eigen::VectorXd z_init(dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
        if (!target.params[k].in_support(init[k])) {
            throw NonFiniteDensityAtInit("sample_posterior: init for parameter '" +
                                         target.params[k].name + "' (" + std::to_string(init[k]) +
                                         ") is outside its support");
        }
        z_init[k] = target.params[k].to_unconstrained(init[k]);
    }
    {
        const double ld = target.logdensity(init);
        if (!std::isfinite(ld)) {
            throw NonFiniteDensityAtInit("sample_posterior: log-density at init is " +
                                         std::to_string(ld));
        }
    }

    // Chains are independent; run them concurrently and merge by index.
    std::vector<std::future<ChainResult>> futures;
    futures.reserve(config.chains);
    for (int c = 0; c < config.chains; ++c) {
        futures.push_back(std::async(std::launch::async,
                                     [&, c]() { return run_chain(target, z_init, config, c); }));
    }

    Chains out;
    out.seed = config.seed;
    for (const auto& p : target.params) out.param_names.push_back(p.name);
    out.draws.reserve(config.chains);
    for (auto& f : futures) {
        ChainResult r = f.get();
        out.draws.push_back(std::move(r.draws));
        out.accept_rate.push_back(r.accept_rate);
    }
    return out;
}

Eigen::VectorXd rhat(const Chains& chains) {
    if (chains.num_chains() < 2) throw std::invalid_argument("rhat: need >= 2 chains");
    if (chains.num_draws() < 100) throw std::invalid_argument("rhat: need >= 100 draws");

    const Eigen::Index half = chains.num_draws() / 2;
    const Eigen::Index nparam = chains.num_params();
    Eigen::VectorXd out(nparam);

    for (Eigen::Index p = 0; p < nparam; ++p) {
        std::vector<Eigen::VectorXd> seqs;
        for (const auto& m : chains.draws) {
            seqs.push_back(m.col(p).head(half));
            seqs.push_back(m.col(p).tail(half));
        }
        const double L = static_cast<double>(half);
        const auto mcount = static_cast<double>(seqs.size());
        Eigen::VectorXd means(seqs.size()), vars(seqs.size());
        for (std::size_t j = 0; j < seqs.size(); ++j) {
            means[static_cast<Eigen::Index>(j)] = seqs[j].mean();
            vars[static_cast<Eigen::Index>(j)] =
                (seqs[j].array() - seqs[j].mean()).square().sum() / (L - 1.0);
        }
        const double w = vars.mean();
        const double grand = means.mean();
        const double b = L * (means.array() - grand).square().sum() / (mcount - 1.0);
        if (w <= 0.0) {
            out[p] = b <= 1e-300 ? 1.0 : std::numeric_limits<double>::infinity();
            continue;
        }
        const double var_plus = (L - 1.0) / L * w + b / L;
        out[p] = std::sqrt(var_plus / w);
    }
    return out;
}

Eigen::VectorXd ess(const Chains& chains) {
    if (chains.num_chains() < 2) throw std::invalid_argument("ess: need >= 2 chains");
    if (chains.num_draws() < 100) throw std::invalid_argument("ess: need >= 100 draws");

    const Eigen::Index nparam = chains.num_params();
    const auto n = chains.num_draws();
    Eigen::VectorXd out(nparam);

    for (Eigen::Index p = 0; p < nparam; ++p) {
        double total = 0.0;
        for (const auto& m : chains.draws) {
            const Eigen::VectorXd v = m.col(p);
            const double mean = v.mean();
            const Eigen::VectorXd d = v.array() - mean;
            const double c0 = d.squaredNorm() / static_cast<double>(n);
            double tau;
            if (c0 < 1e-300) {
                tau = 2.0 * static_cast<double>(n) - 1.0;  // constant chain: one point of information
            } else {
                const auto rho = [&](Eigen::Index t) {
                    double acc = 0.0;
                    for (Eigen::Index i = 0; i + t < n; ++i) acc += d[i] * d[i + t];
                    return acc / static_cast<double>(n) / c0;
                };
                // Geyer initial positive sequence over autocorrelation pairs
                tau = -1.0;
                for (Eigen::Index t = 0; t + 1 < n; t += 2) {
                    const double pair = rho(t) + rho(t + 1);
                    if (pair <= 0.0) break;
                    tau += 2.0 * pair;
                }
            }
            total += tau > 0.0 ? static_cast<double>(n) / tau : static_cast<double>(n);
        }
        out[p] = std::min(total, static_cast<double>(chains.total_draws()));
    }
    return out;
}

PosteriorSamples diagnose(Chains chains, double rhat_threshold) {
    PosteriorSamples s;
    s.rhat = rhat(chains);
    s.ess = ess(chains);
    s.max_rhat = s.rhat.maxCoeff();
    s.converged = std::isfinite(s.max_rhat) && s.max_rhat < rhat_threshold;
    s.chains = std::move(chains);
    return s;
}

void write_chains_csv(const Chains& chains, const std::filesystem::path& path,
                      const std::vector<std::string>& header_comments) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_chains_csv: cannot open " + path.string());
    for (const auto& c : header_comments) out << "# " << c << '\n';
    out << "chain,iteration";
    for (const auto& name : chains.param_names) out << ',' << name;
    out << '\n';
    for (int c = 0; c < chains.num_chains(); ++c) {
        const auto& m = chains.draws[c];
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            out << c << ',' << i;
            for (Eigen::Index k = 0; k < m.cols(); ++k) {
                out << ',' << simdata::format_double(m(i, k));
            }
            out << '\n';
        }
    }
}

}  // namespace labelbias::mcmc
