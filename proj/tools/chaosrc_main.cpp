// Command-line harness: data generation, invariant computation, constrained
// training, constrained-vs-unconstrained comparisons and model evaluation.
// See README.md for the config file grammar.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "chaosrc/experiment.hpp"
#include "chaosrc/persist.hpp"
#include "chaosrc/version.hpp"

namespace fs = std::filesystem;
using namespace chaosrc;

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<long long> seed;
    std::optional<std::string> out;
    int threads = 1;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_config = true) {
    auto* c = cmd->add_option("--config", opts.config_path, "experiment config file");
    if (needs_config) c->required();
    cmd->add_option("--seed", opts.seed, "override master_seed from the config");
    cmd->add_option("--out", opts.out, "override output_dir from the config");
    cmd->add_option("--threads", opts.threads, "worker pool size for parallel stages")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--quiet", opts.quiet, "suppress progress output");
}

ExperimentConfig load_config(const CommonOpts& opts) {
    ExperimentConfig cfg = ExperimentConfig::from_file(opts.config_path);
    if (opts.seed) {
        if (*opts.seed < 0) throw ConfigError("--seed must be non-negative");
        cfg.master_seed = static_cast<std::uint64_t>(*opts.seed);
        cfg.integration.seed = derive_seed(cfg.master_seed, "data");
    }
    if (opts.out) cfg.output_dir = *opts.out;
    return cfg;
}

void write_failure_marker(const fs::path& dir, const std::string& message) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!ec) write_file(dir / "FAILED", message + "\n");
}

int cmd_generate(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_config(opts);
    Rng rng(derive_seed(cfg.master_seed, "data"));
    const Eigen::VectorXd u0 = random_initial_condition(cfg.system, rng);
    const TimeSeries series = generate_trajectory(cfg.system, u0, cfg.integration);
    fs::create_directories(cfg.output_dir);
    const fs::path out = fs::path(cfg.output_dir) / "trajectory.csv";
    write_time_series_csv(out, series, cfg.config_hash);
    if (!opts.quiet)
        std::cerr << "wrote " << series.steps() << " steps (dt=" << series.dt << ") to " << out
                  << "\n";
    return 0;
}

int cmd_invariants(const CommonOpts& opts, const std::string& series_path) {
    const ExperimentConfig cfg = load_config(opts);
    fs::create_directories(cfg.output_dir);

    if (series_path.empty()) {
        // Tangent-linear route: full spectrum of the configured system.
        Rng rng(derive_seed(cfg.master_seed, "truth-le"));
        const Eigen::VectorXd u0 = random_initial_condition(cfg.system, rng);
        const LyapunovSpectrum sp =
            lyapunov_spectrum_ode(cfg.system, u0, cfg.truth_le, cfg.integration.dt);
        const fs::path out = fs::path(cfg.output_dir) / "spectrum.csv";
        write_spectrum_csv(out, sp, cfg.config_hash);
        std::cout << "lambda1 = " << format_double(sp.exponents[0]) << "\n";
        std::cout << "sum = " << format_double(sp.exponents.sum()) << "\n";
        std::cout << "ky_dimension = " << format_double(kaplan_yorke_dimension(sp)) << "\n";
        if (!opts.quiet) std::cerr << "wrote " << out << "\n";
        return 0;
    }

    // Data route: Rosenstein estimate of the largest exponent.
    const TimeSeries series = read_time_series_csv(series_path);
    RosensteinConfig rc = cfg.rosenstein;
    if (rc.embed_dim == 0) rc.embed_dim = static_cast<int>(series.dim());
    if (rc.delay == 0) rc.delay = std::max(1, autocorrelation_zero_crossing(series) / 2);
    if (rc.theiler == 0) rc.theiler = rc.delay * rc.embed_dim;
    const double lle = largest_le_from_data(series, rc.embed_dim, rc.delay, rc.theiler,
                                            rc.fit_begin, rc.fit_end);
    std::cout << "largest_le_estimate = " << format_double(lle) << "\n";
    std::cout << "embed_dim = " << rc.embed_dim << "\n";
    std::cout << "delay = " << rc.delay << "\n";
    std::cout << "theiler = " << rc.theiler << "\n";
    return 0;
}

int cmd_train(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_config(opts);
    try {
        const ExperimentReport report = run_experiment(cfg, opts.threads, opts.quiet);
        persist_experiment(report, cfg.output_dir);
        std::cout << "best_loss = " << format_double(report.outcome.best_loss) << "\n";
        std::cout << "mean_vpt = " << format_double(report.outcome.vpt.mean) << "\n";
        std::cout << "rc_lambda1 = " << format_double(report.outcome.invariant_diff.rc_lambda1)
                  << "\n";
        std::cout << "truth_lambda1 = " << format_double(report.pipeline.truth_lambda1) << "\n";
        if (!opts.quiet) std::cerr << "report written to " << cfg.output_dir << "\n";
        return 0;
    } catch (const std::exception& e) {
        write_failure_marker(cfg.output_dir, e.what());
        throw;
    }
}

int cmd_compare(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_config(opts);
    try {
        const std::vector<VariantSpec> variants = parse_variants(cfg.compare_variants, cfg.k_les);
        const ComparisonResult result =
            run_comparison(cfg, variants, cfg.compare_n_inits, opts.threads, opts.quiet);
        persist_comparison(result, cfg, cfg.output_dir);
        for (const VariantSummary& s : result.summaries)
            std::cout << s.variant << ": mean_vpt = " << format_double(s.mean_of_mean_vpts)
                      << " LT, lambda1_rel_error = " << format_double(s.mean_lambda1_rel_error)
                      << "\n";
        if (!opts.quiet) std::cerr << "comparison written to " << cfg.output_dir << "\n";
        return 0;
    } catch (const std::exception& e) {
        write_failure_marker(cfg.output_dir, e.what());
        throw;
    }
}

int cmd_evaluate(const CommonOpts& opts, const std::string& model_dir,
                 const std::string& series_path) {
    const ExperimentConfig cfg = load_config(opts);
    const TrainedModel model = load_model(model_dir);
    const TimeSeries series = read_time_series_csv(series_path);
    if (series.dim() != model.reservoir.input_dim())
        throw std::invalid_argument("evaluate: series dimension does not match the model");

    // The given record doubles as the climate reference; scoring happens in
    // the model's normalized coordinates (the normalized RMSE is invariant
    // under that rescaling).
    const TimeSeries normalized = model.normalizer.apply(series);
    const ClimateStats stats = climate_stats(normalized);
    const VptReport report = vpt_distribution(
        model.reservoir, model.readout, normalized, cfg.evaluation.n_ics, cfg.evaluation.sync_len,
        cfg.evaluation.horizon, cfg.evaluation.epsilon, model.lambda1, stats, opts.threads);

    fs::create_directories(cfg.output_dir);
    const fs::path out = fs::path(cfg.output_dir) / "vpt.csv";
    write_file(out, vpt_csv(report, cfg.config_hash));
    std::cout << "mean_vpt = " << format_double(report.mean) << "\n";
    std::cout << "median_vpt = " << format_double(report.median) << "\n";
    if (!opts.quiet) std::cerr << "wrote " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reservoir-computing forecasters for chaotic systems, trained with "
                 "dynamical-invariant constraints"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonOpts generate_opts, invariants_opts, train_opts, compare_opts, evaluate_opts;
    std::string series_path, model_dir;

    auto* generate = app.add_subcommand("generate", "integrate a trajectory and write it as CSV");
    add_common(generate, generate_opts);

    auto* invariants = app.add_subcommand(
        "invariants", "Lyapunov spectrum / dimension from a system spec, or largest LE from data");
    add_common(invariants, invariants_opts);
    invariants->add_option("--series", series_path, "time-series CSV (data route)");

    auto* train = app.add_subcommand("train", "run the full constrained training experiment");
    add_common(train, train_opts);

    auto* compare = app.add_subcommand("compare",
                                       "repeat the experiment across invariant variants and seeds");
    add_common(compare, compare_opts);

    auto* evaluate = app.add_subcommand("evaluate", "VPT of a saved model on a saved series");
    add_common(evaluate, evaluate_opts);
    evaluate->add_option("--model", model_dir, "model directory written by train")->required();
    evaluate->add_option("--series", series_path, "time-series CSV to evaluate on")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) return cmd_generate(generate_opts);
        if (invariants->parsed()) return cmd_invariants(invariants_opts, series_path);
        if (train->parsed()) return cmd_train(train_opts);
        if (compare->parsed()) return cmd_compare(compare_opts);
        if (evaluate->parsed()) return cmd_evaluate(evaluate_opts, model_dir, series_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
