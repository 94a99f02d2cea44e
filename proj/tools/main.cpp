// Experiment driver: bias-formula verification, the two simulation sweeps,
// the diabetes pipeline, and threshold calibration, each emitting CSV/JSON
// artifacts that are bit-reproducible from (config, seed).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "labelbias/dataset.hpp"
#include "labelbias/errors.hpp"
#include "labelbias/experiments.hpp"
#include "labelbias/version.hpp"

namespace fs = std::filesystem;
using namespace labelbias;
using namespace labelbias::experiments;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file (defaults when omitted)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", args.seed, "master seed; every run is a pure function of it");
    cmd->add_option("--out", args.out_dir, "output directory");
}

// Loads the config, applies it, and echoes the resolved version into out/.
ExperimentConfig prepare(const CommonArgs& args) {
    ExperimentConfig config;
    if (!args.config_path.empty()) config = ExperimentConfig::load(args.config_path);
    fs::create_directories(args.out_dir);
    std::ofstream echo(fs::path(args.out_dir) / "config.json");
    echo << config.to_json_string() << '\n';
    return config;
}

int run_verify(const CommonArgs& args) {
    const ExperimentConfig config = prepare(args);
    const std::string meta = meta_comment(args.seed, config.hash());
    const PropsReport report = run_verify_props(config.verify_props, args.seed);
    const fs::path out = fs::path(args.out_dir) / "verify_props.csv";
    write_props_csv(report, out, meta);
    int shown = 0;
    for (const auto& row : report.rows) {
        if (row.skipped) {
            std::printf("SKIP %-24s %s\n", row.label.c_str(), row.skip_reason.c_str());
        } else {
            std::printf("%s %-24s solution %.3e  covariance %.3e  bound gap %+.3e\n",
                        row.pass ? "ok  " : "FAIL", row.label.c_str(), row.solution_delta,
                        row.covariance_delta, row.bound_gap);
        }
        ++shown;
    }
    std::printf("%d grid points -> %s (%s)\n", shown, report.all_pass ? "all pass" : "FAILURES",
                out.c_str());
    return report.all_pass ? 0 : 2;
}

int run_sweep(const CommonArgs& args, const std::string& mode) {
    ExperimentConfig config = prepare(args);
    if (!mode.empty()) config.beta_sweep.mode = leakage::mode_from_string(mode);
    const std::string meta = meta_comment(args.seed, config.hash());
    const BetaSweepResult result = run_beta_sweep(config.beta_sweep, args.seed);
    const fs::path out = fs::path(args.out_dir) / "beta_sweep.csv";
    write_sweep_csv(result, out, meta);
    std::printf("%zu rows over %zu beta values x %d seeds -> %s\n", result.rows.size(),
                config.beta_sweep.betas.size(), config.beta_sweep.num_seeds, out.c_str());
    return 0;
}

int run_misspec(const CommonArgs& args, const std::string& mode) {
    ExperimentConfig config = prepare(args);
    if (!mode.empty()) config.misspec.mode = leakage::mode_from_string(mode);
    const std::string meta = meta_comment(args.seed, config.hash());
    const MisspecResult result = run_misspec_sweep(config.misspec, args.seed);
    const fs::path out = fs::path(args.out_dir) / "misspec_sweep.csv";
    write_misspec_csv(result, out, meta);
    std::printf("%zu rows over m grid of %zu -> %s\n", result.rows.size(),
                config.misspec.ms.size(), out.c_str());
    return 0;
}

int run_diabetes(const CommonArgs& args, bool synthetic, const std::string& data_path,
                 const std::string& schema_path, const std::string& spec_path,
                 double threshold_flag) {
    ExperimentConfig config = prepare(args);
    if (threshold_flag > 0.0) config.diabetes.decision_threshold = threshold_flag;
    const std::string meta = meta_comment(args.seed, config.hash());

    DiabetesResult result;
    if (synthetic || data_path.empty()) {
        std::optional<threshold::ThresholdSpec> spec_override;
        if (!spec_path.empty()) spec_override = spec_from_json_file(spec_path);
        result = run_diabetes_synthetic(config.diabetes, args.seed, spec_override);
    } else {
        if (schema_path.empty()) {
            throw std::invalid_argument("--data requires --schema");
        }
        const simdata::CsvSchema schema = simdata::CsvSchema::from_json_file(schema_path);
        const simdata::Dataset data = simdata::load_csv(data_path, schema);
        threshold::ThresholdSpec spec;
        if (!spec_path.empty()) {
            spec = spec_from_json_file(spec_path);
        } else {
            spec = run_calibrate(config.diabetes.total_rate,
                                 {{0, config.diabetes.share_insured},
                                  {1, config.diabetes.share_uninsured}},
                                 config.diabetes.e_scale)
                       .spec;
        }
        result = run_diabetes_dataset(data, spec, config.diabetes, args.seed);
    }

    const fs::path dir(args.out_dir);
    write_metrics_table_csv(result.table, dir / "diabetes_metrics.csv", meta);
    write_calibration_csv(result.calibration, dir / "diabetes_calibration.csv", meta);
    write_predictions_csv(result, dir / "diabetes_predictions.csv", meta);
    std::ofstream spec_out(dir / "threshold_spec.json");
    spec_out << spec_to_json_string(result.spec) << '\n';

    std::printf("models (scored against %s):\n", result.target.c_str());
    for (const auto& m : result.table) {
        std::printf("  %-12s log %.4f  brier %.4f  mse %.5f  acc %.4f\n", m.model.c_str(),
                    m.report.log_score, m.report.brier_score, m.report.mse, m.report.accuracy);
    }
    std::printf("max split-Rhat %.4f -> %s\n", result.max_rhat, dir.c_str());
    return 0;
}

int run_calibrate_cmd(const CommonArgs& args, double total_rate,
                      const std::vector<std::string>& share_args, double e_scale) {
    fs::create_directories(args.out_dir);
    std::map<int, double> shares;
    for (const auto& s : share_args) {
        const auto at = s.find('=');
        if (at == std::string::npos) {
            throw std::invalid_argument("--share expects group=value, got '" + s + "'");
        }
        shares[std::stoi(s.substr(0, at))] = std::stod(s.substr(at + 1));
    }
    if (shares.empty()) {
        shares = {{0, 0.16}, {1, 0.29}};
    }
    const CalibrateResult cal = run_calibrate(total_rate, shares, e_scale);
    std::printf("base_alpha = %.6f  (total rate %.4f)\n", cal.spec.base_alpha, total_rate);
    for (const auto& [g, tau] : cal.spec.tau_by_group) {
        std::printf("group %d: tau = %.6f  share(no slack) = %.6f  share(with slack) = %.6f\n",
                    g, tau, cal.share_no_slack.at(g), cal.share_with_slack.at(g));
    }
    const fs::path out = fs::path(args.out_dir) / "threshold_spec.json";
    std::ofstream spec_out(out);
    spec_out << spec_to_json_string(cal.spec) << '\n';
    std::printf("-> %s\n", out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"label-bias measurement models: simulation experiments and diagnostics"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    CommonArgs verify_args, sweep_args, misspec_args, diabetes_args, calibrate_args;
    std::string sweep_mode, misspec_mode;
    bool synthetic = false;
    std::string data_path, schema_path, spec_path;
    double threshold_flag = 0.0;
    double total_rate = 0.14, e_scale = 0.1;
    std::vector<std::string> share_args;

    CLI::App* verify = app.add_subcommand(
        "verify-props", "empirical checks of the proxy-regression bias formulas");
    add_common(verify, verify_args);

    CLI::App* sweep = app.add_subcommand(
        "beta-sweep", "RMSE and error-covariate correlation across the latent effect grid");
    add_common(sweep, sweep_args);
    sweep->add_option("--mode", sweep_mode, "prediction mode: filtering or smoothing");

    CLI::App* misspec = app.add_subcommand(
        "misspec-sweep", "sensitivity of the leakage model to misspecified prior centers");
    add_common(misspec, misspec_args);
    misspec->add_option("--mode", misspec_mode, "prediction mode: filtering or smoothing");

    CLI::App* diabetes = app.add_subcommand(
        "diabetes", "diagnosis-vs-disease pipeline: logistic baselines and threshold model");
    add_common(diabetes, diabetes_args);
    diabetes->add_flag("--synthetic", synthetic, "simulate the data (default without --data)");
    diabetes->add_option("--data", data_path, "CSV with covariates, proxy, group")
        ->check(CLI::ExistingFile);
    diabetes->add_option("--schema", schema_path, "JSON sidecar mapping columns to roles")
        ->check(CLI::ExistingFile);
    diabetes->add_option("--spec", spec_path, "threshold spec JSON (from calibrate)")
        ->check(CLI::ExistingFile);
    diabetes->add_option("--threshold", threshold_flag,
                         "decision threshold for accuracy/PPV/NPV");

    CLI::App* calibrate = app.add_subcommand(
        "calibrate", "thresholds from a total rate and per-group undiagnosed shares");
    add_common(calibrate, calibrate_args);
    calibrate->add_option("--total-rate", total_rate, "overall prevalence in (0,1)");
    calibrate->add_option("--share", share_args,
                          "group=undiagnosed share, repeatable (default 0=0.16 1=0.29)");
    calibrate->add_option("--e-scale", e_scale, "half-normal slack scale");

    CLI11_PARSE(app, argc, argv);

    try {
        if (verify->parsed()) return run_verify(verify_args);
        if (sweep->parsed()) return run_sweep(sweep_args, sweep_mode);
        if (misspec->parsed()) return run_misspec(misspec_args, misspec_mode);
        if (diabetes->parsed()) {
            return run_diabetes(diabetes_args, synthetic, data_path, schema_path, spec_path,
                                threshold_flag);
        }
        if (calibrate->parsed()) {
            return run_calibrate_cmd(calibrate_args, total_rate, share_args, e_scale);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
