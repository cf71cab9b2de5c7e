#pragma once

#include <filesystem>
#include <sstream>
#include <string>

#include "chaosrc/experiment.hpp"
#include "chaosrc/io.hpp"

namespace chaosrc {

/// Search history in the canonical column layout; beta is reported as its
/// base-10 exponent.
inline std::string history_csv(const CmaEsResult& result, const SearchSpace& space,
                               std::uint64_t config_hash = 0) {
    const int i_rho_a = space.index_of("rho_A");
    const int i_rho_sr = space.index_of("rho_SR");
    const int i_sigma = space.index_of("sigma");
    const int i_sigma_b = space.index_of("sigma_b");
    const int i_leak = space.index_of("leak_rate");
    const int i_beta = space.index_of("beta");

    std::ostringstream out;
    out << metadata_header(config_hash);
    out << "generation,candidate_index,loss,rho_A,rho_SR,sigma,sigma_b,leak_rate,log10_beta\n";
    for (const CmaEsRecord& r : result.history) {
        out << r.generation << ',' << r.candidate_index << ',' << format_double(r.loss) << ','
            << format_double(r.point[i_rho_a]) << ',' << format_double(r.point[i_rho_sr]) << ','
            << format_double(r.point[i_sigma]) << ',' << format_double(r.point[i_sigma_b]) << ','
            << format_double(r.point[i_leak]) << ',' << format_double(std::log10(r.point[i_beta]))
            << "\n";
    }
    return out.str();
}

/// `ic_index,vpt_lyapunov_times,censored` plus a summary comment line,
/// ready for external histogram plotting.
inline std::string vpt_csv(const VptReport& report, std::uint64_t config_hash = 0) {
    std::ostringstream out;
    out << metadata_header(config_hash);
    out << "ic_index,vpt_lyapunov_times,censored\n";
    long n_censored = 0;
    for (std::size_t i = 0; i < report.vpt_values.size(); ++i) {
        out << i << ',' << format_double(report.vpt_values[i]) << ',' << (report.censored[i] ? 1 : 0)
            << "\n";
        if (report.censored[i]) ++n_censored;
    }
    out << "# summary mean=" << format_double(report.mean) << " median=" << format_double(report.median)
        << " epsilon=" << format_double(report.epsilon) << " lambda1=" << format_double(report.lambda1)
        << " n=" << report.vpt_values.size() << " n_censored=" << n_censored << "\n";
    return out.str();
}

inline std::string params_text(const ReservoirParams& p) {
    std::ostringstream o;
    o << "reservoir.size = " << p.size << "\n";
    o << "reservoir.rho_a = " << format_double(p.rho_A) << "\n";
    o << "reservoir.rho_sr = " << format_double(p.rho_SR) << "\n";
    o << "reservoir.sigma = " << format_double(p.sigma) << "\n";
    o << "reservoir.sigma_b = " << format_double(p.sigma_b) << "\n";
    o << "reservoir.leak_rate = " << format_double(p.leak_rate) << "\n";
    o << "reservoir.beta = " << format_double(p.beta) << "\n";
    return o.str();
}

inline std::string vector_csv_field(const Eigen::VectorXd& v) {
    std::ostringstream o;
    for (long i = 0; i < v.size(); ++i) {
        if (i) o << ',';
        o << format_double(v[i]);
    }
    return o.str();
}

inline Eigen::VectorXd parse_vector_field(const std::string& text, const std::string& ctx) {
    std::vector<double> vals;
    std::istringstream in(text);
    std::string token;
    while (std::getline(in, token, ',')) vals.push_back(parse_double(token, ctx));
    return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<long>(vals.size()));
}

/// A model directory holds model.txt (hyperparameters, seed, normalization)
/// plus w_out.csv. The reservoir itself is rebuilt from (params, seed) on
/// load; construction is seed-deterministic so this round-trips exactly.
inline void save_model(const std::filesystem::path& dir, const TrainedModel& model,
                       std::uint64_t config_hash = 0) {
    std::filesystem::create_directories(dir);
    std::ostringstream o;
    o << metadata_header(config_hash);
    o << params_text(model.reservoir.params);
    o << "reservoir.seed = " << model.reservoir.seed << "\n";
    o << "input_dim = " << model.reservoir.input_dim() << "\n";
    o << "dt = " << format_double(model.dt) << "\n";
    o << "lambda1 = " << format_double(model.lambda1) << "\n";
    o << "normalizer.mean = " << vector_csv_field(model.normalizer.mean) << "\n";
    o << "normalizer.scale = " << vector_csv_field(model.normalizer.scale) << "\n";
    write_file(dir / "model.txt", o.str());
    write_matrix_csv(dir / "w_out.csv", model.readout.W_out, config_hash);
}

inline ReservoirParams params_from_kv(KeyValueFile& kv) {
    ReservoirParams p;
    p.size = static_cast<int>(kv.require_int("reservoir.size"));
    p.rho_A = kv.require_real("reservoir.rho_a");
    p.rho_SR = kv.require_real("reservoir.rho_sr");
    p.sigma = kv.require_real("reservoir.sigma");
    p.sigma_b = kv.require_real("reservoir.sigma_b");
    p.leak_rate = kv.require_real("reservoir.leak_rate");
    p.beta = kv.require_real("reservoir.beta");
    return p;
}

inline TrainedModel load_model(const std::filesystem::path& dir) {
    KeyValueFile kv = KeyValueFile::from_file(dir / "model.txt");
    const ReservoirParams params = params_from_kv(kv);
    const std::uint64_t seed = static_cast<std::uint64_t>(kv.require_int("reservoir.seed"));
    const int input_dim = static_cast<int>(kv.require_int("input_dim"));

    TrainedModel model;
    model.dt = kv.require_real("dt");
    model.lambda1 = kv.require_real("lambda1");
    model.normalizer.mean = parse_vector_field(kv.require_string("normalizer.mean"), "normalizer.mean");
    model.normalizer.scale = parse_vector_field(kv.require_string("normalizer.scale"), "normalizer.scale");
    kv.finish();

    model.reservoir = build_reservoir(params, input_dim, seed);
    model.readout.W_out = read_matrix_csv(dir / "w_out.csv");
    if (model.readout.W_out.rows() != input_dim || model.readout.W_out.cols() != params.size)
        throw std::runtime_error("load_model: w_out.csv shape does not match model.txt");
    return model;
}

/// Deterministic result file: every number here is a pure function of
/// (config bytes, master_seed). Wall-clock timings go to a separate file.
inline std::string report_text(const ExperimentReport& report) {
    const SearchOutcome& oc = report.outcome;
    std::ostringstream o;
    o << metadata_header(report.config.config_hash);
    o << "invariants_provided = " << to_string(report.config.invariants_provided) << "\n";
    o << "rc_init = " << report.config.rc_init << "\n";
    o << "best_loss = " << format_double(oc.best_loss) << "\n";
    o << "evaluations = " << oc.search.evaluations << "\n";
    o << params_text(oc.best_params);
    o << "loss.t_i = " << report.pipeline.loss.t_i << "\n";
    o << "loss.t_f = " << report.pipeline.loss.t_f << "\n";
    o << "truth.lambda1 = " << format_double(report.pipeline.truth_lambda1) << "\n";
    o << "truth.ky_dimension = " << format_double(report.pipeline.truth_ky) << "\n";
    o << "rc.spectrum_valid = " << (oc.rc_spectrum_valid ? 1 : 0) << "\n";
    o << "rc.lambda1 = " << format_double(oc.invariant_diff.rc_lambda1) << "\n";
    o << "rc.ky_dimension = " << format_double(oc.invariant_diff.rc_dimension) << "\n";
    o << "invariant.lambda1_rel_error = " << format_double(oc.invariant_diff.lambda1_rel_error) << "\n";
    o << "invariant.ky_abs_error = " << format_double(oc.invariant_diff.ky_abs_error) << "\n";
    o << "vpt.n = " << oc.vpt.vpt_values.size() << "\n";
    o << "vpt.mean = " << format_double(oc.vpt.mean) << "\n";
    o << "vpt.median = " << format_double(oc.vpt.median) << "\n";
    long n_censored = 0;
    for (bool c : oc.vpt.censored) n_censored += c ? 1 : 0;
    o << "vpt.n_censored = " << n_censored << "\n";
    o << "forecast.bounded = " << (oc.forecast_bounded ? 1 : 0) << "\n";
    o << "forecast.max_abs = " << format_double(oc.forecast_max_abs) << "\n";
    o << "forecast.sigma = " << vector_csv_field(oc.forecast_sigma) << "\n";
    o << "climate.sigma = " << vector_csv_field(report.pipeline.climate_physical.sigma) << "\n";
    return o.str();
}

inline std::string timings_text(const std::vector<std::pair<std::string, double>>& timings) {
    std::ostringstream o;
    o << "# wall-clock timings, seconds (not part of the deterministic report)\n";
    for (const auto& [name, seconds] : timings) o << name << " = " << format_double(seconds) << "\n";
    return o.str();
}

inline void persist_experiment(const ExperimentReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::uint64_t hash = report.config.config_hash;
    write_file(dir / "config_echo.txt", report.config.config_text);
    write_file(dir / "report.txt", report_text(report));
    write_spectrum_csv(dir / "truth_spectrum.csv", report.pipeline.truth_spectrum, hash);
    if (report.outcome.rc_spectrum_valid)
        write_spectrum_csv(dir / "rc_spectrum.csv", report.outcome.rc_spectrum, hash);
    write_file(dir / "history.csv", history_csv(report.outcome.search, report.config.search, hash));
    write_file(dir / "vpt.csv", vpt_csv(report.outcome.vpt, hash));
    save_model(dir / "model", report.outcome.model, hash);
    write_file(dir / "timings.txt", timings_text(report.timings));
}

inline std::string comparison_csv(const ComparisonResult& result, std::uint64_t config_hash = 0) {
    std::ostringstream out;
    out << metadata_header(config_hash);
    out << "# truth_lambda1=" << format_double(result.truth_lambda1)
        << " truth_ky=" << format_double(result.truth_ky) << "\n";
    out << "variant,rc_init,best_loss,mean_vpt,median_vpt,rc_lambda1,lambda1_rel_error,"
           "ky_abs_error,bounded,max_sigma_rel_error\n";
    for (const ComparisonRow& r : result.rows) {
        out << r.variant << ',' << r.rc_init << ',' << format_double(r.best_loss) << ','
            << format_double(r.mean_vpt) << ',' << format_double(r.median_vpt) << ','
            << format_double(r.rc_lambda1) << ',' << format_double(r.lambda1_rel_error) << ','
            << format_double(r.ky_abs_error) << ',' << (r.forecast_bounded ? 1 : 0) << ','
            << format_double(r.max_sigma_rel_error) << "\n";
    }
    // Summary rows (rc_init = -1): VPT columns hold the average of per-init
    // means; pooled-distribution statistics follow as comments.
    for (const VariantSummary& s : result.summaries) {
        out << s.variant << ",-1," << format_double(s.mean_best_loss) << ','
            << format_double(s.mean_of_mean_vpts) << ',' << format_double(s.median_of_mean_vpts)
            << ",," << format_double(s.mean_lambda1_rel_error) << ",,"
            << format_double(s.bounded_fraction) << ",\n";
    }
    for (const VariantSummary& s : result.summaries) {
        out << "# pooled variant=" << s.variant << " mean=" << format_double(s.pooled_mean_vpt)
            << " median=" << format_double(s.pooled_median_vpt) << "\n";
    }
    return out.str();
}

inline void persist_comparison(const ComparisonResult& result, const ExperimentConfig& base,
                               const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_file(dir / "config_echo.txt", base.config_text);
    write_file(dir / "comparison.csv", comparison_csv(result, base.config_hash));
    write_spectrum_csv(dir / "truth_spectrum.csv", result.truth_spectrum, base.config_hash);
}

}  // namespace chaosrc
