#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "chaosrc/cmaes.hpp"
#include "chaosrc/dynamics.hpp"
#include "chaosrc/evaluation.hpp"
#include "chaosrc/io.hpp"
#include "chaosrc/lyapunov.hpp"
#include "chaosrc/parallel.hpp"
#include "chaosrc/random.hpp"
#include "chaosrc/reservoir.hpp"
#include "chaosrc/training.hpp"

namespace chaosrc {

/// Per-component zero-mean / unit-variance transform fitted on the training
/// split and stored with the model; the reservoir always sees normalized
/// inputs. Lyapunov exponents are unchanged by this diagonal affine map.
struct Normalizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static Normalizer fit(const TimeSeries& series) {
        if (series.steps() < 2) throw std::invalid_argument("Normalizer::fit: series too short");
        Normalizer n;
        n.mean = series.data.colwise().mean();
        n.scale = ((series.data.rowwise() - n.mean.transpose()).array().square().colwise().mean())
                      .sqrt()
                      .matrix();
        for (long j = 0; j < n.scale.size(); ++j)
            if (!(n.scale[j] > 0.0))
                throw DegenerateDataError("Normalizer::fit: component " + std::to_string(j + 1) +
                                          " is constant");
        return n;
    }

    TimeSeries apply(const TimeSeries& s) const {
        TimeSeries out{s.dt, {}};
        out.data = (s.data.rowwise() - mean.transpose()).array().rowwise() /
                   scale.transpose().array();
        return out;
    }

    TimeSeries invert(const TimeSeries& s) const {
        TimeSeries out{s.dt, {}};
        out.data =
            (s.data.array().rowwise() * scale.transpose().array()).matrix().rowwise() +
            mean.transpose();
        return out;
    }
};

struct TrainedModel {
    Reservoir reservoir;
    ReadoutMatrix readout;
    Normalizer normalizer;
    double dt = 0.0;
    double lambda1 = 0.0;  // truth leading exponent, kept for VPT scaling
};

enum class InvariantChoice { None, KLes, FractalDimension, Both };

inline std::string to_string(InvariantChoice c) {
    switch (c) {
        case InvariantChoice::None: return "none";
        case InvariantChoice::KLes: return "k_les";
        case InvariantChoice::FractalDimension: return "fractal_dimension";
        case InvariantChoice::Both: return "both";
    }
    return "none";
}

inline InvariantChoice parse_invariant_choice(const std::string& s, const std::string& ctx) {
    if (s == "none") return InvariantChoice::None;
    if (s == "k_les") return InvariantChoice::KLes;
    if (s == "fractal_dimension") return InvariantChoice::FractalDimension;
    if (s == "both") return InvariantChoice::Both;
    throw ConfigError(ctx + ": expected one of none|k_les|fractal_dimension|both, got '" + s + "'");
}

struct EvaluationConfig {
    long n_ics = 200;
    double epsilon = 0.3;
    long horizon = 1000;
    long sync_len = 200;
};

struct RosensteinConfig {
    int embed_dim = 0;  // 0 = data dimension
    int delay = 0;      // 0 = half the first autocorrelation zero crossing
    int theiler = 0;    // 0 = delay * embed_dim
    long fit_begin = 0;
    long fit_end = 40;
};

/// Everything a run needs, parsed from a flat `key = value` file. Unknown
/// keys and out-of-range values are hard errors.
struct ExperimentConfig {
    SystemSpec system;
    IntegrationConfig integration;  // full data record
    double train_frac = 0.5;
    double val_frac = 0.25;
    int reservoir_size = 400;
    long washout = 200;
    SearchSpace search = default_reservoir_search_space();
    LossConfig loss;  // t_f == 0 resolves to ~5 Lyapunov times at run time
    InvariantChoice invariants_provided = InvariantChoice::None;
    int k_les = 1;
    LeConfig truth_le;
    CmaEsConfig cma;
    EvaluationConfig evaluation;
    RosensteinConfig rosenstein;
    std::uint64_t master_seed = 1;
    std::string output_dir = "out";
    int rc_init = 0;

    // `compare` subcommand settings
    std::string compare_variants = "none,k_les";
    int compare_n_inits = 1;

    std::string config_text;  // raw bytes, the hashing and echo source
    std::uint64_t config_hash = 0;

    static ExperimentConfig from_kv(KeyValueFile kv);
    static ExperimentConfig from_text(const std::string& text, const std::string& origin = "<string>") {
        return from_kv(KeyValueFile::from_text(text, origin));
    }
    static ExperimentConfig from_file(const std::filesystem::path& path) {
        return from_kv(KeyValueFile::from_file(path));
    }

    std::string to_text() const;
};

namespace detail {

inline double require_range(double v, double lo, double hi, const std::string& ctx) {
    if (!(v >= lo && v <= hi))
        throw ConfigError(ctx + ": value " + format_double(v) + " outside [" + format_double(lo) +
                          ", " + format_double(hi) + "]");
    return v;
}

inline long long require_min(long long v, long long lo, const std::string& ctx) {
    if (v < lo) throw ConfigError(ctx + ": value " + std::to_string(v) + " must be >= " + std::to_string(lo));
    return v;
}

inline AxisScale parse_scale(const std::string& s, const std::string& ctx) {
    if (s == "linear") return AxisScale::Linear;
    if (s == "log10") return AxisScale::Log10;
    throw ConfigError(ctx + ": expected linear|log10, got '" + s + "'");
}

inline void read_axis(KeyValueFile& kv, SearchSpace& space, const std::string& key_base,
                      const std::string& axis_name) {
    SearchAxis& ax = space.axes[space.index_of(axis_name)];
    ax.lower = kv.get_real(key_base + ".min", ax.lower);
    ax.upper = kv.get_real(key_base + ".max", ax.upper);
    if (kv.has(key_base + ".scale"))
        ax.scale = parse_scale(kv.require_string(key_base + ".scale"), kv.at(key_base + ".scale"));
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_kv(KeyValueFile kv) {
    ExperimentConfig cfg;
    cfg.config_text = kv.raw_text();
    cfg.config_hash = fnv1a64(cfg.config_text);

    const std::string kind = kv.require_string("system.kind");
    if (kind == "lorenz96") {
        cfg.system.kind = SystemKind::Lorenz96;
        cfg.system.dimension = static_cast<int>(detail::require_min(kv.require_int("system.dimension"), 4,
                                                                    kv.at("system.dimension")));
        cfg.system.forcing = kv.get_real("system.forcing", 8.0);
    } else if (kind == "lorenz63") {
        cfg.system.kind = SystemKind::Lorenz63;
        const long long d = kv.get_int("system.dimension", 3);
        if (d != 3) throw ConfigError(kv.at("system.dimension") + ": Lorenz 63 is three-dimensional");
        cfg.system.dimension = 3;
        cfg.system.sigma = kv.get_real("system.sigma", 10.0);
        cfg.system.rho = kv.get_real("system.rho", 28.0);
        cfg.system.b = kv.get_real("system.b", 8.0 / 3.0);
    } else {
        throw ConfigError(kv.at("system.kind") + ": expected lorenz96|lorenz63, got '" + kind + "'");
    }

    cfg.integration.dt = kv.require_real("integration.dt");
    if (!(cfg.integration.dt > 0.0)) throw ConfigError(kv.at("integration.dt") + ": dt must be positive");
    cfg.integration.n_steps = detail::require_min(kv.require_int("integration.n_steps"), 0,
                                                  kv.at("integration.n_steps"));
    cfg.integration.n_transient =
        detail::require_min(kv.get_int("integration.n_transient", 2000), 0, kv.at("integration.n_transient"));

    cfg.train_frac = detail::require_range(kv.get_real("data.train_frac", 0.5), 1e-9, 1.0,
                                           kv.at("data.train_frac"));
    cfg.val_frac = detail::require_range(kv.get_real("data.val_frac", 0.25), 1e-9, 1.0,
                                         kv.at("data.val_frac"));

    cfg.reservoir_size = static_cast<int>(detail::require_min(kv.get_int("reservoir.size", 400), 10,
                                                              kv.at("reservoir.size")));
    cfg.washout = detail::require_min(kv.get_int("reservoir.washout", 200), 1, kv.at("reservoir.washout"));

    detail::read_axis(kv, cfg.search, "search.rho_a", "rho_A");
    detail::read_axis(kv, cfg.search, "search.rho_sr", "rho_SR");
    detail::read_axis(kv, cfg.search, "search.sigma", "sigma");
    detail::read_axis(kv, cfg.search, "search.sigma_b", "sigma_b");
    detail::read_axis(kv, cfg.search, "search.leak_rate", "leak_rate");
    detail::read_axis(kv, cfg.search, "search.beta", "beta");
    cfg.search.validate();

    cfg.loss.epsilon1 = kv.get_real("loss.epsilon1", 1.0);
    cfg.loss.epsilon2 = kv.get_real("loss.epsilon2", -1.0);  // -1: resolve to 1/(M span D)
    cfg.loss.t_i = kv.get_int("loss.t_i", 0);
    cfg.loss.t_f = kv.get_int("loss.t_f", 0);
    cfg.loss.m_forecasts = static_cast<int>(detail::require_min(kv.get_int("loss.m_forecasts", 7), 1,
                                                                kv.at("loss.m_forecasts")));
    cfg.loss.rc_le_steps = detail::require_min(kv.get_int("loss.rc_le_steps", 5000), 1,
                                               kv.at("loss.rc_le_steps"));
    cfg.loss.rc_le_transient = detail::require_min(kv.get_int("loss.rc_le_transient", 500), 0,
                                                   kv.at("loss.rc_le_transient"));

    cfg.invariants_provided = parse_invariant_choice(kv.get_string("invariants.provided", "none"),
                                                     kv.at("invariants.provided"));
    cfg.k_les = static_cast<int>(detail::require_min(kv.get_int("invariants.k", 1), 1,
                                                     kv.at("invariants.k")));
    if (cfg.k_les > cfg.system.dimension)
        throw ConfigError(kv.at("invariants.k") + ": k exceeds the system dimension");

    cfg.truth_le.n_steps = detail::require_min(kv.get_int("invariants.le_steps", 100000), 1000,
                                               kv.at("invariants.le_steps"));
    cfg.truth_le.n_transient = detail::require_min(kv.get_int("invariants.le_transient", 2000), 0,
                                                   kv.at("invariants.le_transient"));
    cfg.truth_le.qr_interval = 10;
    cfg.truth_le.n_exponents = 0;  // full spectrum

    const long long pop = kv.get_int("cma.population", 0);
    if (pop != 0 && pop < 4) throw ConfigError(kv.at("cma.population") + ": population must be >= 4 (or 0 for auto)");
    cfg.cma.population_size = static_cast<int>(pop);
    cfg.cma.max_generations = static_cast<int>(detail::require_min(kv.get_int("cma.max_generations", 100), 1,
                                                                   kv.at("cma.max_generations")));
    cfg.cma.initial_step_size = kv.get_real("cma.initial_step_size", 0.3);
    if (!(cfg.cma.initial_step_size > 0.0))
        throw ConfigError(kv.at("cma.initial_step_size") + ": step size must be positive");
    if (kv.has("cma.target_loss")) cfg.cma.target_loss = kv.require_real("cma.target_loss");

    cfg.evaluation.n_ics = detail::require_min(kv.get_int("evaluation.n_ics", 200), 1,
                                               kv.at("evaluation.n_ics"));
    cfg.evaluation.epsilon = kv.get_real("evaluation.epsilon", 0.3);
    if (!(cfg.evaluation.epsilon > 0.0))
        throw ConfigError(kv.at("evaluation.epsilon") + ": epsilon must be positive");
    cfg.evaluation.horizon = detail::require_min(kv.get_int("evaluation.horizon", 1000), 1,
                                                 kv.at("evaluation.horizon"));
    cfg.evaluation.sync_len = detail::require_min(kv.get_int("evaluation.sync_len", 200), 2,
                                                  kv.at("evaluation.sync_len"));

    cfg.rosenstein.embed_dim = static_cast<int>(detail::require_min(kv.get_int("rosenstein.embed_dim", 0), 0,
                                                                    kv.at("rosenstein.embed_dim")));
    cfg.rosenstein.delay = static_cast<int>(detail::require_min(kv.get_int("rosenstein.delay", 0), 0,
                                                                kv.at("rosenstein.delay")));
    cfg.rosenstein.theiler = static_cast<int>(detail::require_min(kv.get_int("rosenstein.theiler", 0), 0,
                                                                  kv.at("rosenstein.theiler")));
    cfg.rosenstein.fit_begin = detail::require_min(kv.get_int("rosenstein.fit_begin", 0), 0,
                                                   kv.at("rosenstein.fit_begin"));
    cfg.rosenstein.fit_end = detail::require_min(kv.get_int("rosenstein.fit_end", 40), 1,
                                                 kv.at("rosenstein.fit_end"));

    const long long seed = kv.require_int("master_seed");
    if (seed < 0) throw ConfigError(kv.at("master_seed") + ": must be non-negative");
    cfg.master_seed = static_cast<std::uint64_t>(seed);
    cfg.integration.seed = derive_seed(cfg.master_seed, "data");

    cfg.output_dir = kv.get_string("output_dir", "out");
    cfg.rc_init = static_cast<int>(detail::require_min(kv.get_int("rc_init", 0), 0, kv.at("rc_init")));

    cfg.compare_variants = kv.get_string("compare.variants", "none,k_les");
    cfg.compare_n_inits = static_cast<int>(detail::require_min(kv.get_int("compare.n_rc_inits", 1), 1,
                                                               kv.at("compare.n_rc_inits")));

    kv.finish();
    return cfg;
}

inline std::string ExperimentConfig::to_text() const {
    std::ostringstream o;
    o << "system.kind = " << (system.kind == SystemKind::Lorenz96 ? "lorenz96" : "lorenz63") << "\n";
    o << "system.dimension = " << system.dimension << "\n";
    if (system.kind == SystemKind::Lorenz96) {
        o << "system.forcing = " << format_double(system.forcing) << "\n";
    } else {
        o << "system.sigma = " << format_double(system.sigma) << "\n";
        o << "system.rho = " << format_double(system.rho) << "\n";
        o << "system.b = " << format_double(system.b) << "\n";
    }
    o << "integration.dt = " << format_double(integration.dt) << "\n";
    o << "integration.n_steps = " << integration.n_steps << "\n";
    o << "integration.n_transient = " << integration.n_transient << "\n";
    o << "data.train_frac = " << format_double(train_frac) << "\n";
    o << "data.val_frac = " << format_double(val_frac) << "\n";
    o << "reservoir.size = " << reservoir_size << "\n";
    o << "reservoir.washout = " << washout << "\n";
    for (const auto& ax : search.axes) {
        std::string key = ax.name;
        for (char& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        o << "search." << key << ".min = " << format_double(ax.lower) << "\n";
        o << "search." << key << ".max = " << format_double(ax.upper) << "\n";
        o << "search." << key << ".scale = " << (ax.scale == AxisScale::Log10 ? "log10" : "linear")
          << "\n";
    }
    o << "loss.epsilon1 = " << format_double(loss.epsilon1) << "\n";
    o << "loss.epsilon2 = " << format_double(loss.epsilon2) << "\n";
    o << "loss.t_i = " << loss.t_i << "\n";
    o << "loss.t_f = " << loss.t_f << "\n";
    o << "loss.m_forecasts = " << loss.m_forecasts << "\n";
    o << "loss.rc_le_steps = " << loss.rc_le_steps << "\n";
    o << "loss.rc_le_transient = " << loss.rc_le_transient << "\n";
    o << "invariants.provided = " << to_string(invariants_provided) << "\n";
    o << "invariants.k = " << k_les << "\n";
    o << "invariants.le_steps = " << truth_le.n_steps << "\n";
    o << "invariants.le_transient = " << truth_le.n_transient << "\n";
    o << "cma.population = " << cma.population_size << "\n";
    o << "cma.max_generations = " << cma.max_generations << "\n";
    o << "cma.initial_step_size = " << format_double(cma.initial_step_size) << "\n";
    if (cma.target_loss) o << "cma.target_loss = " << format_double(*cma.target_loss) << "\n";
    o << "evaluation.n_ics = " << evaluation.n_ics << "\n";
    o << "evaluation.epsilon = " << format_double(evaluation.epsilon) << "\n";
    o << "evaluation.horizon = " << evaluation.horizon << "\n";
    o << "evaluation.sync_len = " << evaluation.sync_len << "\n";
    o << "rosenstein.embed_dim = " << rosenstein.embed_dim << "\n";
    o << "rosenstein.delay = " << rosenstein.delay << "\n";
    o << "rosenstein.theiler = " << rosenstein.theiler << "\n";
    o << "rosenstein.fit_begin = " << rosenstein.fit_begin << "\n";
    o << "rosenstein.fit_end = " << rosenstein.fit_end << "\n";
    o << "master_seed = " << master_seed << "\n";
    o << "output_dir = " << output_dir << "\n";
    o << "rc_init = " << rc_init << "\n";
    o << "compare.variants = " << compare_variants << "\n";
    o << "compare.n_rc_inits = " << compare_n_inits << "\n";
    return o.str();
}

/// Stage wrapper: failures are rethrown with the pipeline stage in front so
/// the CLI can report where a run died.
template <class F>
auto run_stage(const std::string& name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const std::exception& e) {
        throw std::runtime_error("[" + name + "] " + e.what());
    }
}

/// Deterministic shared context: ground-truth data, splits, normalization,
/// climate and truth invariants. Identical for every variant and RC
/// initialization of a comparison, so paired runs see paired data.
struct PipelineData {
    TimeSeries train;       // normalized
    TimeSeries validation;  // normalized
    TimeSeries test;        // normalized
    Normalizer normalizer;
    ClimateStats climate_physical;
    ClimateStats climate_normalized;
    LyapunovSpectrum truth_spectrum;
    double truth_lambda1 = 0.0;
    double truth_ky = 0.0;
    LossConfig loss;  // t_f resolved
    std::vector<ValidationWindow> windows;
};

inline InvariantTargets make_targets(InvariantChoice choice, int k,
                                     const LyapunovSpectrum& truth_spectrum) {
    InvariantTargets t;
    if (choice == InvariantChoice::KLes || choice == InvariantChoice::Both)
        t.leading_les = truth_spectrum.exponents.head(k);
    if (choice == InvariantChoice::FractalDimension || choice == InvariantChoice::Both)
        t.fractal_dimension = kaplan_yorke_dimension(truth_spectrum);
    return t;
}

inline PipelineData prepare_pipeline(const ExperimentConfig& cfg) {
    PipelineData pd;

    const TimeSeries raw = run_stage("data", [&] {
        Rng rng(derive_seed(cfg.master_seed, "data"));
        const Eigen::VectorXd u0 = random_initial_condition(cfg.system, rng);
        IntegrationConfig ic = cfg.integration;
        ic.seed = derive_seed(cfg.master_seed, "data");
        return generate_trajectory(cfg.system, u0, ic);
    });

    const DataSplit split =
        run_stage("split", [&] { return split_data(raw, cfg.train_frac, cfg.val_frac); });

    run_stage("invariants", [&] {
        Rng rng(derive_seed(cfg.master_seed, "truth-le"));
        const Eigen::VectorXd u0 = random_initial_condition(cfg.system, rng);
        pd.truth_spectrum = lyapunov_spectrum_ode(cfg.system, u0, cfg.truth_le, cfg.integration.dt);
        pd.truth_lambda1 = pd.truth_spectrum.exponents[0];
        pd.truth_ky = kaplan_yorke_dimension(pd.truth_spectrum);
        return 0;
    });

    run_stage("climate", [&] {
        Rng rng(derive_seed(cfg.master_seed, "climate"));
        const Eigen::VectorXd u0 = random_initial_condition(cfg.system, rng);
        IntegrationConfig ic;
        ic.dt = cfg.integration.dt;
        ic.n_steps = 100000;
        ic.n_transient = std::max<long>(cfg.integration.n_transient, 2000);
        const TimeSeries reference = generate_trajectory(cfg.system, u0, ic);
        pd.climate_physical = climate_stats(reference);
        pd.normalizer = Normalizer::fit(split.train);
        pd.climate_normalized = climate_stats(pd.normalizer.apply(reference));
        pd.train = pd.normalizer.apply(split.train);
        pd.validation = pd.normalizer.apply(split.validation);
        pd.test = pd.normalizer.apply(split.test);
        return 0;
    });

    run_stage("loss-setup", [&] {
        pd.loss = cfg.loss;
        if (pd.loss.t_f == 0) {
            // default forecast scoring window: five Lyapunov times
            if (!(pd.truth_lambda1 > 0.0))
                throw std::invalid_argument(
                    "system has no positive exponent; set loss.t_f explicitly");
            pd.loss.t_f =
                pd.loss.t_i + std::max<long>(2, std::lround(5.0 / (pd.truth_lambda1 * cfg.integration.dt)));
        }
        if (pd.loss.epsilon2 < 0.0) {
            // scale the raw forecast sum down to a per-step per-component
            // mean, so the invariant and forecast terms are both O(1) and
            // epsilon1 acts as a genuine relative weight
            pd.loss.epsilon2 = 1.0 / (static_cast<double>(pd.loss.m_forecasts) *
                                      static_cast<double>(pd.loss.span()) *
                                      static_cast<double>(cfg.system.dimension));
        }
        pd.loss.validate();
        pd.windows = make_validation_windows(pd.validation, pd.loss.m_forecasts,
                                             cfg.evaluation.sync_len, pd.loss.span());
        return 0;
    });

    return pd;
}

/// Results of one search + retrain + evaluation pass.
struct SearchOutcome {
    ReservoirParams best_params;
    double best_loss = 0.0;
    CmaEsResult search;
    TrainedModel model;
    LyapunovSpectrum rc_spectrum;
    bool rc_spectrum_valid = false;
    InvariantDiff invariant_diff;
    VptReport vpt;
    bool forecast_bounded = false;
    double forecast_max_abs = 0.0;
    Eigen::VectorXd forecast_sigma;  // physical units, long free-run climate
};

namespace detail {

inline constexpr long kReportLeSteps = 30000;
inline constexpr long kReportLeTransient = 1000;
inline constexpr long kAttractorCheckSteps = 10000;

}  // namespace detail

/// One full search for a given variant and RC initialization index. All
/// randomness is derived from (master_seed, rc_init_index), so variant A and
/// variant B at the same index are paired runs.
inline SearchOutcome run_search(const ExperimentConfig& cfg, const PipelineData& pd,
                                const InvariantTargets& targets, int rc_init_index, int n_threads,
                                bool quiet) {
    SearchOutcome out;
    const std::uint64_t rc_seed = derive_seed(cfg.master_seed, "rc-init",
                                              static_cast<std::uint64_t>(rc_init_index));

    run_stage("search", [&] {
        CmaEsConfig cma_cfg = cfg.cma;
        cma_cfg.seed = derive_seed(cfg.master_seed, "cma", static_cast<std::uint64_t>(rc_init_index));
        auto objective = [&](const Eigen::VectorXd& point) {
            const ReservoirParams params = params_from_point(cfg.search, point, cfg.reservoir_size);
            return evaluate_candidate(params, pd.train, pd.windows, targets, pd.loss, rc_seed,
                                      cfg.washout);
        };
        out.search = cma_es_minimize(objective, cfg.search, cma_cfg, n_threads);
        out.best_loss = out.search.best_loss;
        out.best_params = params_from_point(cfg.search, out.search.best_point, cfg.reservoir_size);
        return 0;
    });

    const StateCollection collected = run_stage("retrain", [&] {
        out.model.reservoir = build_reservoir(out.best_params, static_cast<int>(pd.train.dim()), rc_seed);
        StateCollection c = collect_states(out.model.reservoir, pd.train, cfg.washout);
        out.model.readout = train_readout(c.states, c.targets, out.best_params.beta);
        out.model.normalizer = pd.normalizer;
        out.model.dt = pd.train.dt;
        out.model.lambda1 = pd.truth_lambda1;
        return c;
    });

    run_stage("rc-invariants", [&] {
        const int d = static_cast<int>(pd.train.dim());
        try {
            out.rc_spectrum =
                rc_lyapunov_spectrum(out.model.reservoir, out.model.readout, collected.final_state, d,
                                     detail::kReportLeSteps, detail::kReportLeTransient, pd.train.dt);
            out.rc_spectrum_valid = true;
        } catch (const DivergenceError&) {
            try {  // unstable model: settle for a short-run estimate
                out.rc_spectrum = rc_lyapunov_spectrum(out.model.reservoir, out.model.readout,
                                                       collected.final_state, d, 2000, 0, pd.train.dt);
                out.rc_spectrum_valid = true;
            } catch (const DivergenceError&) {
                out.rc_spectrum_valid = false;
            }
        }
        if (out.rc_spectrum_valid) {
            out.invariant_diff = compare_invariants(out.rc_spectrum, pd.truth_spectrum);
        } else {
            out.invariant_diff.truth_lambda1 = pd.truth_lambda1;
            out.invariant_diff.truth_dimension = pd.truth_ky;
            out.invariant_diff.rc_lambda1 = std::numeric_limits<double>::quiet_NaN();
            out.invariant_diff.rc_dimension = std::numeric_limits<double>::quiet_NaN();
            out.invariant_diff.lambda1_rel_error = std::numeric_limits<double>::infinity();
            out.invariant_diff.ky_abs_error = std::numeric_limits<double>::infinity();
        }
        return 0;
    });

    run_stage("evaluate", [&] {
        out.vpt = vpt_distribution(out.model.reservoir, out.model.readout, pd.test,
                                   cfg.evaluation.n_ics, cfg.evaluation.sync_len,
                                   cfg.evaluation.horizon, cfg.evaluation.epsilon, pd.truth_lambda1,
                                   pd.climate_normalized, n_threads);
        return 0;
    });

    run_stage("attractor-check", [&] {
        const TimeSeries free_run = detail::forecast_until_divergence(
            out.model.reservoir, out.model.readout, collected.final_state,
            detail::kAttractorCheckSteps, pd.train.dt);
        if (free_run.steps() < detail::kAttractorCheckSteps) {
            out.forecast_bounded = false;
            out.forecast_max_abs = std::numeric_limits<double>::infinity();
            out.forecast_sigma = Eigen::VectorXd::Zero(pd.train.dim());
            return 0;
        }
        const TimeSeries physical = pd.normalizer.invert(free_run);
        out.forecast_max_abs = physical.data.cwiseAbs().maxCoeff();
        out.forecast_bounded = out.forecast_max_abs < 20.0;
        const Eigen::RowVectorXd mean = physical.data.colwise().mean();
        out.forecast_sigma =
            ((physical.data.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
        return 0;
    });

    if (!quiet) {
        std::ostringstream msg;
        msg << "  [init " << rc_init_index << "] best loss " << format_double(out.best_loss)
            << ", mean VPT " << format_double(out.vpt.mean) << " LT, rc lambda1 "
            << format_double(out.invariant_diff.rc_lambda1) << "\n";
        std::cerr << msg.str();
    }
    return out;
}

struct ExperimentReport {
    ExperimentConfig config;
    PipelineData pipeline;  // truth invariants etc. (train/val/test retained)
    SearchOutcome outcome;
    std::vector<std::pair<std::string, double>> timings;  // seconds; not in the deterministic file
};

/// Full pipeline: generate -> split -> truth invariants -> targets ->
/// CMA-ES -> retrain -> evaluate. Deterministic in (config bytes,
/// master_seed); wall-clock timings are the only exception and are kept out
/// of the deterministic report file.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, int n_threads = 1,
                                       bool quiet = false) {
    using clock = std::chrono::steady_clock;
    ExperimentReport report;
    report.config = cfg;

    const auto t0 = clock::now();
    report.pipeline = prepare_pipeline(cfg);
    const auto t1 = clock::now();
    const InvariantTargets targets =
        make_targets(cfg.invariants_provided, cfg.k_les, report.pipeline.truth_spectrum);
    report.outcome = run_search(cfg, report.pipeline, targets, cfg.rc_init, n_threads, quiet);
    const auto t2 = clock::now();

    report.timings.emplace_back("prepare_seconds",
                                std::chrono::duration<double>(t1 - t0).count());
    report.timings.emplace_back("search_and_evaluate_seconds",
                                std::chrono::duration<double>(t2 - t1).count());
    return report;
}

struct ComparisonRow {
    std::string variant;
    int rc_init = 0;
    double best_loss = 0.0;
    double mean_vpt = 0.0;
    double median_vpt = 0.0;
    double rc_lambda1 = 0.0;
    double lambda1_rel_error = 0.0;
    double ky_abs_error = 0.0;
    bool forecast_bounded = false;
    double max_sigma_rel_error = 0.0;
    Eigen::VectorXd forecast_sigma;
};

struct VariantSummary {
    std::string variant;
    double mean_of_mean_vpts = 0.0;    // average of per-init means
    double median_of_mean_vpts = 0.0;
    double pooled_mean_vpt = 0.0;      // all ICs of all inits pooled
    double pooled_median_vpt = 0.0;
    double mean_lambda1_rel_error = 0.0;
    double mean_best_loss = 0.0;
    double bounded_fraction = 0.0;
};

struct ComparisonResult {
    std::vector<ComparisonRow> rows;          // |variants| * n_inits
    std::vector<VariantSummary> summaries;    // one per variant
    double truth_lambda1 = 0.0;
    double truth_ky = 0.0;
    Eigen::VectorXd climate_sigma;            // physical truth climate
    LyapunovSpectrum truth_spectrum;
};

struct VariantSpec {
    InvariantChoice choice = InvariantChoice::None;
    int k = 1;
    std::string label() const {
        if (choice == InvariantChoice::KLes || choice == InvariantChoice::Both)
            return to_string(choice) + ":" + std::to_string(k);
        return to_string(choice);
    }
};

/// "none,k_les:1,fractal_dimension" -> variant list.
inline std::vector<VariantSpec> parse_variants(const std::string& text, int default_k) {
    std::vector<VariantSpec> out;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) {
        std::string name = token;
        int k = default_k;
        const std::size_t colon = token.find(':');
        if (colon != std::string::npos) {
            name = token.substr(0, colon);
            k = static_cast<int>(parse_int(token.substr(colon + 1), "compare.variants"));
            if (k < 1) throw ConfigError("compare.variants: k must be >= 1 in '" + token + "'");
        }
        std::string stripped;
        for (char c : name)
            if (c != ' ' && c != '\t') stripped += c;
        out.push_back({parse_invariant_choice(stripped, "compare.variants"), k});
    }
    if (out.empty()) throw ConfigError("compare.variants: no variants given");
    return out;
}

/// Repeat every variant across n_rc_inits derived seeds; data, truth
/// invariants and the per-init seeds are shared across variants so the runs
/// are paired. Runs execute in parallel; rows are reduced in (variant, init)
/// order regardless of completion order.
inline ComparisonResult run_comparison(const ExperimentConfig& base,
                                       const std::vector<VariantSpec>& variants, int n_rc_inits,
                                       int n_threads = 1, bool quiet = false) {
    if (n_rc_inits < 1) throw std::invalid_argument("run_comparison: n_rc_inits must be >= 1");
    if (variants.empty()) throw std::invalid_argument("run_comparison: no variants");

    const PipelineData pd = prepare_pipeline(base);
    std::vector<InvariantTargets> targets;
    targets.reserve(variants.size());
    for (const auto& v : variants) {
        if (v.k > pd.truth_spectrum.exponents.size())
            throw std::invalid_argument("run_comparison: variant k exceeds available exponents");
        targets.push_back(make_targets(v.choice, v.k, pd.truth_spectrum));
    }

    const long n_runs = static_cast<long>(variants.size()) * n_rc_inits;
    std::vector<SearchOutcome> outcomes(n_runs);
    parallel_for(n_runs, n_threads, [&](long run) {
        const int vi = static_cast<int>(run / n_rc_inits);
        const int init = static_cast<int>(run % n_rc_inits);
        if (!quiet) {
            std::ostringstream msg;
            msg << "run " << (run + 1) << "/" << n_runs << ": variant " << variants[vi].label()
                << ", init " << init << "\n";
            std::cerr << msg.str();
        }
        outcomes[run] = run_search(base, pd, targets[vi], init, 1, quiet);
    });

    ComparisonResult result;
    result.truth_lambda1 = pd.truth_lambda1;
    result.truth_ky = pd.truth_ky;
    result.climate_sigma = pd.climate_physical.sigma;
    result.truth_spectrum = pd.truth_spectrum;

    for (long run = 0; run < n_runs; ++run) {
        const int vi = static_cast<int>(run / n_rc_inits);
        const int init = static_cast<int>(run % n_rc_inits);
        const SearchOutcome& oc = outcomes[run];
        ComparisonRow row;
        row.variant = variants[vi].label();
        row.rc_init = init;
        row.best_loss = oc.best_loss;
        row.mean_vpt = oc.vpt.mean;
        row.median_vpt = oc.vpt.median;
        row.rc_lambda1 = oc.invariant_diff.rc_lambda1;
        row.lambda1_rel_error = oc.invariant_diff.lambda1_rel_error;
        row.ky_abs_error = oc.invariant_diff.ky_abs_error;
        row.forecast_bounded = oc.forecast_bounded;
        row.forecast_sigma = oc.forecast_sigma;
        double max_rel = 0.0;
        for (long j = 0; j < result.climate_sigma.size(); ++j) {
            const double rel = std::abs(oc.forecast_sigma[j] - result.climate_sigma[j]) /
                               result.climate_sigma[j];
            max_rel = std::max(max_rel, rel);
        }
        row.max_sigma_rel_error = oc.forecast_bounded ? max_rel
                                                      : std::numeric_limits<double>::infinity();
        result.rows.push_back(std::move(row));
    }

    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        VariantSummary s;
        s.variant = variants[vi].label();
        std::vector<double> means;
        std::vector<double> pooled;
        double loss_sum = 0.0, err_sum = 0.0, bounded = 0.0;
        for (int init = 0; init < n_rc_inits; ++init) {
            const long run = static_cast<long>(vi) * n_rc_inits + init;
            means.push_back(outcomes[run].vpt.mean);
            loss_sum += outcomes[run].best_loss;
            err_sum += outcomes[run].invariant_diff.lambda1_rel_error;
            bounded += outcomes[run].forecast_bounded ? 1.0 : 0.0;
            for (double v : outcomes[run].vpt.vpt_values) pooled.push_back(v);
        }
        double mean_sum = 0.0;
        for (double m : means) mean_sum += m;
        s.mean_of_mean_vpts = mean_sum / static_cast<double>(means.size());
        s.median_of_mean_vpts = detail::median_of(means);
        double pooled_sum = 0.0;
        for (double v : pooled) pooled_sum += v;
        s.pooled_mean_vpt = pooled_sum / static_cast<double>(pooled.size());
        s.pooled_median_vpt = detail::median_of(pooled);
        s.mean_lambda1_rel_error = err_sum / static_cast<double>(n_rc_inits);
        s.mean_best_loss = loss_sum / static_cast<double>(n_rc_inits);
        s.bounded_fraction = bounded / static_cast<double>(n_rc_inits);
        result.summaries.push_back(std::move(s));
    }
    return result;
}

}  // namespace chaosrc
