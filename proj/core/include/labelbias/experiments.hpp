#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "labelbias/dataset.hpp"
#include "labelbias/leakage.hpp"
#include "labelbias/metrics.hpp"
#include "labelbias/threshold.hpp"

namespace labelbias::experiments {

/// Sampler settings as they appear in experiment configs; combined with a
/// derived seed into an mcmc::SamplerConfig per fit.
struct SamplerSettings {
    int chains = 4;
    int warmup = 2000;
    int draws = 4000;
    int adapt_window = 50;
    double initial_step_scale = 0.4;

    mcmc::SamplerConfig with_seed(std::uint64_t seed) const;
};

// ---------------------------------------------------------------------------
// verify-props

struct VerifyPropsConfig {
    std::vector<double> betas{0.1, 0.3, 0.5};
    std::vector<double> gammas{0.2, 0.4, 0.6};
    double alpha = 0.4;
    double eta = 0.5;
    long n = 1000000;
    /// Adds a non-standardized point with y = u + independent noise, where
    /// the measurement regression vanishes and the MSE bound is tight.
    bool include_independent_noise_point = true;
};

struct PropsRow {
    std::string label;
    double beta = 0.0, gamma = 0.0, alpha = 0.0;
    bool skipped = false;
    std::string skip_reason;

    // identity checks: empirical fit vs formula on the same sample
    double solution_delta = 0.0, solution_tol = 0.0;
    double covariance_delta = 0.0, covariance_tol = 0.0;
    double bound_gap = 0.0, bound_tol = 0.0;  // mse_proxy - bound, >= -tol
    double bound_quad = 0.0;                  // quadratic bias term of the bound
    double mse_proxy = 0.0, mse_true = 0.0;

    // population cross-checks: empirical fit vs analytic SEM values
    double solution_pop_delta = 0.0;
    double covariance_pop_delta = 0.0;

    bool pass = false;
};

struct PropsReport {
    std::vector<PropsRow> rows;
    bool all_pass = false;
};

PropsReport run_verify_props(const VerifyPropsConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// beta-sweep

struct BetaSweepConfig {
    std::vector<double> betas{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
    double alpha = 0.4;
    double gamma = 0.4;
    double eta = 0.5;
    long n = 10000;
    int num_seeds = 3;
    SamplerSettings sampler;
    leakage::PredictionMode mode = leakage::PredictionMode::Filtering;
};

struct SweepRow {
    double beta = 0.0;
    int seed_index = 0;
    std::string model;  // simple, complex, oracle, leakage, leakage_nox
    double rmse = 0.0;
    double err_x_corr = 0.0;
    double max_rhat = 0.0;  // NaN for non-MCMC models
};

struct BetaSweepResult {
    std::vector<SweepRow> rows;
};

BetaSweepResult run_beta_sweep(const BetaSweepConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// misspec-sweep

struct MisspecConfig {
    std::vector<double> ms{0.5, 0.75, 1.0, 1.25, 1.5};
    double beta = 0.2;
    double gamma = 0.4;
    double alpha = 0.4;
    // kept near the scale of the weak eta prior, so prior shrinkage of the
    // correctly specified fit does not mask the misspecification signal
    double eta = 0.2;
    long n = 10000;
    int num_seeds = 1;
    SamplerSettings sampler;
    // joint latent inference conditions on both observed proxies, and the
    // y1 weight is what a wrong gamma distorts, so the sweep defaults to
    // smoothing predictions
    leakage::PredictionMode mode = leakage::PredictionMode::Smoothing;
};

struct MisspecRow {
    std::string which;  // "beta" or "gamma"
    double m = 0.0;
    int seed_index = 0;
    double rmse = 0.0;
    double err_x_corr = 0.0;
    double max_rhat = 0.0;
};

struct MisspecResult {
    std::vector<MisspecRow> rows;
};

MisspecResult run_misspec_sweep(const MisspecConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// diabetes

struct DiabetesConfig {
    long n = 100000;
    std::vector<double> coefs{-2.6, 1.2, 0.3};  // intercept, z1, group
    int n_normal = 1;
    double uninsured_prob = 0.3;
    double total_rate = 0.14;
    double share_insured = 0.16;
    double share_uninsured = 0.29;
    double e_scale = 0.1;
    double decision_threshold = 0.5;
    int calibration_bins = 10;
    SamplerSettings sampler{2, 500, 1200, 50, 0.05};
};

struct ModelMetrics {
    std::string model;
    metrics::MetricsReport report;
};

struct CalibrationRow {
    std::string model;
    int group = 0;
    int bin = 0;
    double mean_predicted = 0.0;
    double observed_rate = 0.0;
    long count = 0;
};

struct DiabetesResult {
    std::vector<ModelMetrics> table;  // simple, complex, measurement[, oracle]
    std::vector<CalibrationRow> calibration;
    std::string target;  // "truth" or "proxy": what the metrics score against

    // per-row measurement-model predictions
    Eigen::VectorXi group;
    Eigen::VectorXi y;
    Eigen::VectorXd p_true;
    Eigen::VectorXd p_marginal;
    Eigen::VectorXd sd;

    threshold::ThresholdSpec spec;
    double max_rhat = 0.0;
};

/// Synthetic pipeline: simulates the threshold DGP under the calibrated spec
/// (or spec_override when given, e.g. from a calibrate run) and fits all
/// four models against the known truth column.
DiabetesResult run_diabetes_synthetic(
    const DiabetesConfig& config, std::uint64_t seed,
    const std::optional<threshold::ThresholdSpec>& spec_override = std::nullopt);

/// Real-data path: covariates/proxy/group per the schema; the oracle column
/// appears only when a truth column is declared. Metrics score against truth
/// when present, otherwise against the proxy (recorded in result.target).
DiabetesResult run_diabetes_dataset(const simdata::Dataset& data,
                                    const threshold::ThresholdSpec& spec,
                                    const DiabetesConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateResult {
    threshold::ThresholdSpec spec;
    std::map<int, double> share_no_slack;    // implied share with e disabled
    std::map<int, double> share_with_slack;  // sensitivity: share with e marginalized
};

CalibrateResult run_calibrate(double total_rate, const std::map<int, double>& shares_by_group,
                              double e_scale = 0.1);

// ---------------------------------------------------------------------------
// config file and CSV emission

/// All experiment settings, overridable from one JSON config file. Unset
/// fields keep their defaults; the resolved config is echoed into the output
/// directory by the CLI.
struct ExperimentConfig {
    VerifyPropsConfig verify_props;
    BetaSweepConfig beta_sweep;
    MisspecConfig misspec;
    DiabetesConfig diabetes;

    static ExperimentConfig from_json_string(const std::string& text);
    static ExperimentConfig load(const std::filesystem::path& path);
    std::string to_json_string() const;
    /// FNV-1a hash of the canonical JSON dump, hex-encoded.
    std::string hash() const;
};

threshold::ThresholdSpec spec_from_json_string(const std::string& text);
threshold::ThresholdSpec spec_from_json_file(const std::filesystem::path& path);
std::string spec_to_json_string(const threshold::ThresholdSpec& spec);

/// First line of every emitted CSV: "# version=... seed=... config_hash=...".
std::string meta_comment(std::uint64_t seed, const std::string& config_hash);

void write_props_csv(const PropsReport& report, const std::filesystem::path& path,
                     const std::string& meta);
void write_sweep_csv(const BetaSweepResult& result, const std::filesystem::path& path,
                     const std::string& meta);
void write_misspec_csv(const MisspecResult& result, const std::filesystem::path& path,
                       const std::string& meta);
/// Summary table: one row per metric, one column per model.
void write_metrics_table_csv(const std::vector<ModelMetrics>& table,
                             const std::filesystem::path& path, const std::string& meta);
void write_calibration_csv(const std::vector<CalibrationRow>& rows,
                           const std::filesystem::path& path, const std::string& meta);
/// Per-row predictions: row_id, group, y, p_true, p_marginal, sd.
void write_predictions_csv(const DiabetesResult& result, const std::filesystem::path& path,
                           const std::string& meta);

}  // namespace labelbias::experiments
