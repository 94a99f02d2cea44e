#include <benchmark/benchmark.h>

#include "labelbias/leakage.hpp"
#include "labelbias/regress.hpp"
#include "labelbias/rng.hpp"
#include "labelbias/sampler.hpp"
#include "labelbias/sem.hpp"
#include "labelbias/threshold.hpp"

using namespace labelbias;

namespace {

simdata::SemDataset sem_data(Eigen::Index n) {
    const auto params = simdata::standardize_sem(0.2, 0.4, 0.4, 0.5);
    return simdata::simulate_sem(params, n, 7);
}

leakage::LeakageParams sem_point() {
    leakage::LeakageParams p;
    p.alpha = 0.4;
    p.gamma = 0.4;
    p.beta = 0.2;
    p.eta = 0.5;
    p.sigma_y = 0.78;
    p.sigma_u = 0.98;
    return p;
}

}  // namespace

static void BM_SimulateSem(benchmark::State& state) {
    const auto params = simdata::standardize_sem(0.2, 0.4, 0.4, 0.5);
    for (auto _ : state) {
        auto d = simdata::simulate_sem(params, state.range(0), 7);
        benchmark::DoNotOptimize(d.y1.sum());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimulateSem)->Arg(10000)->Arg(100000);

static void BM_MarginalLoglikRowwise(benchmark::State& state) {
    const auto d = sem_data(state.range(0));
    const auto p = sem_point();
    for (auto _ : state) {
        benchmark::DoNotOptimize(leakage::marginal_loglik(p, d));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MarginalLoglikRowwise)->Arg(10000)->Arg(100000);

static void BM_MarginalLoglikSuffStats(benchmark::State& state) {
    const auto d = sem_data(state.range(0));
    const auto stats = leakage::LeakageSuffStats::from(d);
    const auto p = sem_point();
    for (auto _ : state) {
        benchmark::DoNotOptimize(leakage::marginal_loglik(p, stats));
    }
}
BENCHMARK(BM_MarginalLoglikSuffStats)->Arg(10000)->Arg(100000);

static void BM_FitLeakage(benchmark::State& state) {
    const auto d = sem_data(10000);
    const auto priors = leakage::LeakagePriors::reference(0.2, 0.4, 0.98);
    mcmc::SamplerConfig c;
    c.chains = 4;
    c.warmup = 2000;
    c.draws = 4000;
    c.seed = 3;
    for (auto _ : state) {
        auto post = leakage::fit_leakage(d, priors, c, true, false);
        benchmark::DoNotOptimize(post.samples.max_rhat);
    }
}
BENCHMARK(BM_FitLeakage)->Unit(benchmark::kMillisecond);

static void BM_ThresholdLoglik(benchmark::State& state) {
    const auto cal_alpha = threshold::solve_base_rate(0.14);
    threshold::ThresholdSpec spec;
    spec.base_alpha = cal_alpha;
    spec.e_scale = 0.1;
    spec.tau_by_group = {{0, threshold::solve_threshold(cal_alpha, 0.16)},
                         {1, threshold::solve_threshold(cal_alpha, 0.29)}};
    const Eigen::VectorXd coefs = (Eigen::VectorXd(3) << -2.6, 1.2, 0.3).finished();
    const auto d = threshold::simulate_threshold_dgp(coefs, spec, state.range(0), 11,
                                                     threshold::CovariateSpec{1, 0.3});
    const auto data = threshold::ThresholdData::from_dataset(d);
    for (auto _ : state) {
        benchmark::DoNotOptimize(threshold::threshold_loglik(coefs, data, spec));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ThresholdLoglik)->Arg(10000)->Arg(100000);

static void BM_OlsFit(benchmark::State& state) {
    const auto d = sem_data(state.range(0));
    Eigen::MatrixXd X(d.n(), 3);
    X.col(0).setOnes();
    X.col(1) = d.y0;
    X.col(2) = d.x;
    for (auto _ : state) {
        auto fit = regress::ols_fit(X, d.y1);
        benchmark::DoNotOptimize(fit.coeffs);
    }
}
BENCHMARK(BM_OlsFit)->Arg(10000)->Arg(100000);

static void BM_LogisticFit(benchmark::State& state) {
    RngStream rng(5);
    const Eigen::Index n = state.range(0);
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = rng.normal();
        X(i, 2) = rng.bernoulli(0.3);
        const double p = 1.0 / (1.0 + std::exp(-(-2.0 + X(i, 1))));
        y[i] = rng.bernoulli(p) ? 1.0 : 0.0;
    }
    for (auto _ : state) {
        auto fit = regress::logistic_fit(X, y);
        benchmark::DoNotOptimize(fit.coeffs);
    }
}
BENCHMARK(BM_LogisticFit)->Arg(100000)->Unit(benchmark::kMillisecond);

static void BM_PredictRiskBatch(benchmark::State& state) {
    const auto cal_alpha = threshold::solve_base_rate(0.14);
    threshold::ThresholdSpec spec;
    spec.base_alpha = cal_alpha;
    spec.e_scale = 0.1;
    spec.tau_by_group = {{0, 0.2}, {1, 0.39}};
    const Eigen::VectorXd coefs = (Eigen::VectorXd(3) << -2.6, 1.2, 0.3).finished();
    const auto d = threshold::simulate_threshold_dgp(coefs, spec, state.range(0), 13,
                                                     threshold::CovariateSpec{1, 0.3});
    mcmc::PosteriorSamples samples;
    Eigen::MatrixXd draw(200, 3);
    RngStream rng(17);
    for (Eigen::Index i = 0; i < draw.rows(); ++i) {
        draw.row(i) = coefs.transpose();
        for (Eigen::Index k = 0; k < 3; ++k) draw(i, k) += 0.01 * rng.normal();
    }
    samples.chains.draws = {draw, draw};
    samples.chains.param_names = {"b0", "b1", "b2"};
    samples.chains.accept_rate = {0.3, 0.3};
    for (auto _ : state) {
        auto batch = threshold::predict_risk_batch(samples, d.X, d.group, &d.y, spec);
        benchmark::DoNotOptimize(batch.p_true.sum());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PredictRiskBatch)->Arg(10000)->Unit(benchmark::kMillisecond);

static void BM_SamplePosterior2D(benchmark::State& state) {
    mcmc::TargetDensity t;
    t.logdensity = [](const Eigen::VectorXd& x) { return -0.5 * x.squaredNorm(); };
    t.params = {mcmc::ParamSpec::unbounded("x0"), mcmc::ParamSpec::unbounded("x1")};
    mcmc::SamplerConfig c;
    c.chains = 2;
    c.warmup = 500;
    c.draws = 1000;
    c.seed = 23;
    for (auto _ : state) {
        auto chains = mcmc::sample_posterior(t, Eigen::Vector2d(0, 0), c);
        benchmark::DoNotOptimize(chains.draws[0](0, 0));
    }
}
BENCHMARK(BM_SamplePosterior2D)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
