#include "aid/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "aid/carrier_dynamics.hpp"
#include "aid/error.hpp"
#include "aid/imaging.hpp"
#include "aid/montecarlo.hpp"
#include "aid/parallel.hpp"
#include "aid/sensitivity.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace aid {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TimingBudget, t_i, t_r, t_e, t_scc, t_ia, t_ra, n)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(QubitReadoutParams, k0_mean, contrast_sos, q0_mean, q1_mean, p_mean, r_mean,
                                   w_mean, lambda_mean, ka_mean)

// Material keys carry their units; densities are given in ppm of carbon sites.
void to_json(json& j, const MaterialParams& m) {
    j = json{{"P_ppm", m.P / kPpmDensity},
             {"Q_ppm", m.Q / kPpmDensity},
             {"Q_minus_init_ppm", m.Q_minus_init / kPpmDensity},
             {"sigma_Nn_um2", m.sigma_Nn},
             {"sigma_Np_um2", m.sigma_Np},
             {"sigma_NVp_um2", m.sigma_NVp},
             {"sigma_NVn_um2", m.sigma_NVn},
             {"v_th_um_per_s", m.v_th},
             {"D_n_um2_per_s", m.D_n},
             {"D_p_um2_per_s", m.D_p},
             {"omega_um3_per_s", m.omega},
             {"I_mW", m.beam.power_mW},
             {"I0_mW", m.beam.ref_power_mW},
             {"s_um", m.beam.width_um},
             {"theta_N_coef_Hz", m.rates.theta_N_coef},
             {"theta_0_coef_Hz", m.rates.theta_0_coef},
             {"theta_minus_coef_Hz", m.rates.theta_minus_coef},
             {"R_max_um", m.R_max_um},
             {"thickness_um", m.thickness_um},
             {"prep_exclusion_radius_um", m.prep_exclusion_radius_um}};
}

void from_json(const json& j, MaterialParams& m) {
    m.P = j.at("P_ppm").get<double>() * kPpmDensity;
    m.Q = j.at("Q_ppm").get<double>() * kPpmDensity;
    m.Q_minus_init = j.at("Q_minus_init_ppm").get<double>() * kPpmDensity;
    j.at("sigma_Nn_um2").get_to(m.sigma_Nn);
    j.at("sigma_Np_um2").get_to(m.sigma_Np);
    j.at("sigma_NVp_um2").get_to(m.sigma_NVp);
    j.at("sigma_NVn_um2").get_to(m.sigma_NVn);
    j.at("v_th_um_per_s").get_to(m.v_th);
    j.at("D_n_um2_per_s").get_to(m.D_n);
    j.at("D_p_um2_per_s").get_to(m.D_p);
    j.at("omega_um3_per_s").get_to(m.omega);
    j.at("I_mW").get_to(m.beam.power_mW);
    j.at("I0_mW").get_to(m.beam.ref_power_mW);
    j.at("s_um").get_to(m.beam.width_um);
    j.at("theta_N_coef_Hz").get_to(m.rates.theta_N_coef);
    j.at("theta_0_coef_Hz").get_to(m.rates.theta_0_coef);
    j.at("theta_minus_coef_Hz").get_to(m.rates.theta_minus_coef);
    j.at("R_max_um").get_to(m.R_max_um);
    j.at("thickness_um").get_to(m.thickness_um);
    j.at("prep_exclusion_radius_um").get_to(m.prep_exclusion_radius_um);
}
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SolverOptions, rtol, atol_trap, atol_carrier, h_init, h_min, h_max, max_newton,
                                   newton_tol, negativity_tol, max_steps)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ActivationOptions, spot_radius_um, cycle_duration)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CalibrationOptions, target_carriers_per_cycle, cycles, lo_mW, hi_mW, rel_tol,
                                   max_iterations)

namespace {

constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Run configuration

struct GridConfig {
    double dr_min_um = 0.1;
    double dr_max_um = 5.0;
    double fine_radius_um = 4.0;
    double growth = 1.05;
    int refinements = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GridConfig, dr_min_um, dr_max_um, fine_radius_um, growth, refinements)

struct SensitivityBlock {
    std::string parameter = "qubit.ka_mean";
    std::vector<double> values = {1, 2, 5, 10, 22, 50, 100, 200, 500, 1000};
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SensitivityBlock, parameter, values)

struct PdeBlock {
    std::uint64_t max_cycles = 100000;
    int points_per_decade = 6;
    std::vector<std::uint64_t> snapshot_cycles = {0, 1000, 100000};
    std::vector<double> epsilon_batch;
    bool calibrate = false;
    CalibrationOptions calibration;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PdeBlock, max_cycles, points_per_decade, snapshot_cycles, epsilon_batch, calibrate,
                                   calibration)

struct ResponseBlock {
    std::string kind = "odmr";
    double center_freq = 2.87e9;
    double fwhm = 7e6;
    double rabi_freq = 5e6;
    double decay_time = 2e-6;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ResponseBlock, kind, center_freq, fwhm, rabi_freq, decay_time)

struct SweepBlock {
    std::vector<double> points;  ///< explicit points; when empty, `count` points from start to stop
    double start = 2.85e9;
    double stop = 2.89e9;
    int count = 81;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SweepBlock, points, start, stop, count)

struct ExperimentBlock {
    ResponseBlock response;
    SweepBlock sweep;
    std::uint64_t n = 10000;
    std::uint64_t runs = 100;
    std::uint32_t background_defects = 0;
    double background_ionization = 0.8;
    double contrast_aid = 0.36;
    std::string sampling = "per_repeat";
    std::vector<std::string> protocols = {"sos", "aid"};
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ExperimentBlock, response, sweep, n, runs, background_defects,
                                   background_ionization, contrast_aid, sampling, protocols)

struct ScheduleBlock {
    std::string mode = "constant";  ///< constant | pde (file from the pde command) | simulate
    double lambda = 1.0;
    std::string file;
    double epsilon = 1.0;
    std::uint64_t max_cycles = 10000000;
    int points_per_decade = 6;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ScheduleBlock, mode, lambda, file, epsilon, max_cycles, points_per_decade)

struct CurveBlock {
    std::vector<std::uint64_t> n_values;  ///< when empty, log grid n_min..n_max
    std::uint64_t n_min = 100;
    std::uint64_t n_max = 10000000;
    int points_per_decade = 4;
    std::uint64_t runs = 2000;
    std::vector<double> epsilons = {1.0};
    std::vector<std::uint32_t> background_defects = {0};
    std::string sampling = "aggregated";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CurveBlock, n_values, n_min, n_max, points_per_decade, runs, epsilons,
                                   background_defects, sampling)

struct ImageBlock {
    std::string mode = "simulate";  ///< simulate | files
    std::string on_file;
    std::string off_file;
    double epsilon = 1.0;
    std::uint64_t cycles_off = 10000000;
    std::uint64_t width_px = 51;
    std::uint64_t height_px = 51;
    double pitch_um = 0.8;
    double annulus_width_um = 1.0;
    double inner_mask_um = 2.0;
    std::vector<double> r_grid = {2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20};
    std::vector<double> w_grid = {1, 3, 5, 7, 9, 11, 13, 15};
    bool noiseless = false;
    double pgm_scale = 1.0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ImageBlock, mode, on_file, off_file, epsilon, cycles_off, width_px, height_px,
                                   pitch_um, annulus_width_um, inner_mask_um, r_grid, w_grid, noiseless, pgm_scale)

struct RunConfig {
    std::uint64_t seed = 1;
    QubitReadoutParams qubit;
    TimingBudget timing;
    MaterialParams material;
    SolverOptions solver;
    GridConfig grid;
    ActivationOptions activation;
    SensitivityBlock sensitivity;
    PdeBlock pde;
    ExperimentBlock experiment;
    ScheduleBlock schedule;
    CurveBlock curve;
    ImageBlock image;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RunConfig, seed, qubit, timing, material, solver, grid, activation, sensitivity,
                                   pde, experiment, schedule, curve, image)

const char* type_name(const json& j) { return j.type_name(); }

bool compatible(const json& base, const json& user) {
    if (base.is_number_float()) return user.is_number();
    if (base.is_number_unsigned()) return user.is_number_unsigned();
    if (base.is_number_integer()) return user.is_number_integer();
    if (base.is_boolean()) return user.is_boolean();
    if (base.is_string()) return user.is_string();
    if (base.is_array()) return user.is_array();
    if (base.is_object()) return user.is_object();
    return false;
}

/// Copies user values onto the defaults, rejecting unknown keys and type mismatches.
void overlay(json& base, const json& user, const std::string& path) {
    if (!user.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError(key, "unknown key");
        json& slot = base[it.key()];
        if (slot.is_number_unsigned() && it.value().is_number_integer() && !it.value().is_number_unsigned())
            throw ConfigError(key, "expected a nonnegative integer");
        if (!compatible(slot, it.value()))
            throw ConfigError(key, std::string("expected ") + type_name(slot) + ", got " + type_name(it.value()));
        if (slot.is_object()) {
            overlay(slot, it.value(), key);
        } else {
            slot = it.value();
        }
    }
}

template <class Fn>
void check(const std::string& path, Fn&& fn) {
    try {
        fn();
    } catch (const DomainError& e) {
        throw ConfigError(path, e.what());
    }
}

RunConfig load_config(const std::optional<fs::path>& file) {
    json merged = RunConfig{};
    if (file) {
        std::ifstream in(*file);
        if (!in) throw ConfigError(file->string(), "cannot open config file");
        json user;
        try {
            user = json::parse(in, nullptr, true, true);
        } catch (const json::parse_error& e) {
            throw ConfigError(file->string(), e.what());
        }
        overlay(merged, user, "");
    }
    RunConfig cfg;
    try {
        cfg = merged.get<RunConfig>();
    } catch (const json::exception& e) {
        throw ConfigError("<config>", e.what());
    }
    check("qubit", [&] { cfg.qubit.validate(); });
    check("timing", [&] { cfg.timing.validate(); });
    check("material", [&] { cfg.material.validate(); });
    check("solver", [&] { cfg.solver.validate(); });
    if (cfg.grid.refinements < 0) throw ConfigError("grid.refinements", "must be >= 0");
    if (!(cfg.grid.dr_min_um > 0.0 && cfg.grid.dr_max_um >= cfg.grid.dr_min_um && cfg.grid.growth >= 1.0))
        throw ConfigError("grid", "need 0 < dr_min_um <= dr_max_um and growth >= 1");
    if (cfg.pde.points_per_decade < 1) throw ConfigError("pde.points_per_decade", "must be >= 1");
    if (!(cfg.activation.spot_radius_um >= 0.0 && cfg.activation.cycle_duration > 0.0))
        throw ConfigError("activation", "need spot_radius_um >= 0 and cycle_duration > 0");
    return cfg;
}

// ---------------------------------------------------------------------------
// Output helpers

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string num(std::uint64_t v) { return std::to_string(v); }

class Csv {
public:
    Csv(const fs::path& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw std::runtime_error("cannot write " + path.string());
        row(header);
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

struct RunContext {
    RunConfig cfg;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    fs::path out;
    std::vector<std::string> outputs;
    json results = json::object();

    fs::path file(const std::string& name) {
        outputs.push_back(name);
        return out / name;
    }
};

// ---------------------------------------------------------------------------
// Shared builders

RadialGrid build_grid(const RunConfig& cfg) {
    const auto& g = cfg.grid;
    RadialGrid grid = RadialGrid::stretched(cfg.material.R_max_um, g.dr_min_um, g.dr_max_um, g.fine_radius_um,
                                            g.growth, cfg.material.thickness_um);
    for (int i = 0; i < g.refinements; ++i) grid = grid.refined();
    return grid;
}

MaterialParams with_epsilon(const MaterialParams& base, double epsilon) {
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon", "must be >= 0");
    MaterialParams m = base;
    m.sigma_Np = base.sigma_Np * epsilon;
    return m;
}

std::vector<std::uint64_t> merged_cycles(std::uint64_t max_cycles, int per_decade,
                                         const std::vector<std::uint64_t>& extra) {
    std::set<std::uint64_t> s{0};
    if (max_cycles > 0) {
        for (auto c : log_cycle_grid(max_cycles, per_decade)) s.insert(c);
    }
    for (auto c : extra) {
        if (c <= max_cycles) s.insert(c);
    }
    return {s.begin(), s.end()};
}

/// Activation curve for `epsilon` with capture efficiency relative to sigma_Np = 0.
ActivationCurve activation_with_efficiency(const RunConfig& cfg, const RadialGrid& grid, double epsilon,
                                           const std::vector<std::uint64_t>& cycles,
                                           const ActivationCurve& reference,
                                           std::vector<CarrierState>* snapshots = nullptr) {
    ActivationCurve c = simulate_activation(with_epsilon(cfg.material, epsilon), grid, cycles, cfg.activation,
                                            cfg.solver, snapshots);
    attach_capture_efficiency(c, reference);
    return c;
}

std::vector<ActivationCurve> epsilon_curves(const RunConfig& cfg, const RadialGrid& grid,
                                            const std::vector<double>& epsilons,
                                            const std::vector<std::uint64_t>& cycles, unsigned threads) {
    const ActivationCurve reference =
        simulate_activation(with_epsilon(cfg.material, 0.0), grid, cycles, cfg.activation, cfg.solver);
    std::vector<ActivationCurve> curves(epsilons.size());
    parallel_for(epsilons.size(), threads, [&](std::size_t i) {
        curves[i] = activation_with_efficiency(cfg, grid, epsilons[i], cycles, reference);
    });
    return curves;
}

std::string base_name(const std::string& column) { return column.substr(0, column.find('[')); }

LambdaSchedule read_lambda_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("schedule.file", "cannot open lambda_eff table '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("schedule.file", "empty lambda_eff table");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(base_name(cell));
    }
    const auto col = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ConfigError("schedule.file", "missing column " + name);
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t ic = col("n_cycles"), il = col("lambda_eff");
    std::vector<std::uint64_t> ends;
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != header.size()) throw ConfigError("schedule.file", "ragged row: " + line);
        try {
            const auto n = static_cast<std::uint64_t>(std::stoull(cells[ic]));
            if (n == 0) continue;
            ends.push_back(n);
            values.push_back(std::stod(cells[il]));
        } catch (const std::logic_error&) {
            throw ConfigError("schedule.file", "bad row: " + line);
        }
    }
    try {
        return LambdaSchedule(std::move(ends), std::move(values));
    } catch (const DomainError& e) {
        throw ConfigError("schedule.file", e.what());
    }
}

LambdaSchedule build_schedule(const RunContext& ctx, double epsilon) {
    const ScheduleBlock& s = ctx.cfg.schedule;
    if (s.mode == "constant") {
        try {
            return LambdaSchedule(s.lambda);
        } catch (const DomainError& e) {
            throw ConfigError("schedule.lambda", e.what());
        }
    }
    if (s.mode == "pde") {
        if (s.file.empty()) throw ConfigError("schedule.file", "required when schedule.mode is \"pde\"");
        return read_lambda_csv(s.file);
    }
    if (s.mode == "simulate") {
        if (s.max_cycles < 1 || s.points_per_decade < 1)
            throw ConfigError("schedule", "need max_cycles >= 1 and points_per_decade >= 1");
        const RadialGrid grid = build_grid(ctx.cfg);
        const auto cycles = merged_cycles(s.max_cycles, s.points_per_decade, {});
        const auto curves = epsilon_curves(ctx.cfg, grid, {epsilon}, cycles, 1);
        return LambdaSchedule::from_curve(curves.front());
    }
    throw ConfigError("schedule.mode", "expected constant, pde or simulate, got \"" + s.mode + "\"");
}

SamplingMode parse_sampling(const std::string& s, const std::string& path) {
    if (s == "per_repeat") return SamplingMode::PerRepeat;
    if (s == "aggregated") return SamplingMode::Aggregated;
    throw ConfigError(path, "expected per_repeat or aggregated, got \"" + s + "\"");
}

SpinResponse parse_response(const ResponseBlock& b) {
    SpinResponse r;
    if (b.kind == "odmr") {
        r.kind = ResponseKind::OdmrLorentzian;
    } else if (b.kind == "rabi") {
        r.kind = ResponseKind::Rabi;
    } else if (b.kind == "echo") {
        r.kind = ResponseKind::HahnEcho;
    } else {
        throw ConfigError("experiment.response.kind", "expected odmr, rabi or echo, got \"" + b.kind + "\"");
    }
    r.center_freq = b.center_freq;
    r.fwhm = b.fwhm;
    r.rabi_freq = b.rabi_freq;
    r.decay_time = b.decay_time;
    return r;
}

std::vector<double> sweep_points(const SweepBlock& s) {
    if (!s.points.empty()) return s.points;
    if (s.count < 1) throw ConfigError("experiment.sweep.count", "must be >= 1");
    std::vector<double> pts(static_cast<std::size_t>(s.count));
    for (int i = 0; i < s.count; ++i)
        pts[static_cast<std::size_t>(i)] = s.count == 1 ? s.start : s.start + (s.stop - s.start) * i / (s.count - 1);
    return pts;
}

ExperimentConfig build_experiment(const RunContext& ctx) {
    const ExperimentBlock& e = ctx.cfg.experiment;
    ExperimentConfig c;
    c.qubit = ctx.cfg.qubit;
    c.timing = ctx.cfg.timing;
    c.response = parse_response(e.response);
    c.sweep = sweep_points(e.sweep);
    c.n = e.n;
    c.background_defects = e.background_defects;
    c.background_ionization = e.background_ionization;
    c.contrast_aid = e.contrast_aid;
    c.seed = ctx.seed;
    c.threads = ctx.threads;
    c.sampling = parse_sampling(e.sampling, "experiment.sampling");
    check("experiment", [&] { c.validate(); });
    return c;
}

std::string point_unit(ResponseKind k) { return k == ResponseKind::OdmrLorentzian ? "Hz" : "s"; }

// ---------------------------------------------------------------------------
// sensitivity

const std::map<std::string, std::string>& sweep_units() {
    static const std::map<std::string, std::string> units = {
        {"qubit.k0_mean", "photons"}, {"qubit.contrast_sos", "1"}, {"qubit.q0_mean", "1"},
        {"qubit.q1_mean", "1"},       {"qubit.p_mean", "1"},       {"qubit.r_mean", "1"},
        {"qubit.w_mean", "carriers"}, {"qubit.lambda_mean", "1"},  {"qubit.ka_mean", "photons"},
        {"timing.t_i", "s"},          {"timing.t_r", "s"},         {"timing.t_e", "s"},
        {"timing.t_scc", "s"},        {"timing.t_ia", "s"},        {"timing.t_ra", "s"},
        {"timing.n", "repeats"},
    };
    return units;
}

void cmd_sensitivity(RunContext& ctx) {
    const SensitivityBlock& s = ctx.cfg.sensitivity;
    const auto unit = sweep_units().find(s.parameter);
    if (unit == sweep_units().end()) throw ConfigError("sensitivity.parameter", "not sweepable: " + s.parameter);
    const std::string block = s.parameter.substr(0, s.parameter.find('.'));
    const std::string field = s.parameter.substr(s.parameter.find('.') + 1);

    Csv csv(ctx.file("sensitivity.csv"),
            {field + "[" + unit->second + "]", "eta_sos[sqrt_s]", "eta_sos_approx[sqrt_s]", "eta_scc[sqrt_s]",
             "eta_aid[sqrt_s]", "eta_aid_high_ka[sqrt_s]", "eta_aid_low_ka[sqrt_s]", "eta_aid_background[sqrt_s]",
             "criterion_lhs[1]", "criterion_rhs[1]", "criterion_ratio[1]", "aid_beats_sos[bool]", "status[label]"});
    std::size_t degenerate = 0;
    for (double v : s.values) {
        json q = ctx.cfg.qubit, t = ctx.cfg.timing;
        json& target = block == "qubit" ? q : t;
        if (field == "n") {
            if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("sensitivity.values", "n must be a positive integer");
            target[field] = static_cast<std::uint64_t>(v);
        } else {
            target[field] = v;
        }
        const auto qubit = q.get<QubitReadoutParams>();
        const auto timing = t.get<TimingBudget>();

        bool ok = true;
        auto eval = [&](auto fn) -> double {
            try {
                return fn();
            } catch (const DomainError&) {
                ok = false;
                return std::numeric_limits<double>::quiet_NaN();
            }
        };
        const double sos = eval([&] { return eta_sos(qubit, timing).exact; });
        const double sos_a = eval([&] { return eta_sos(qubit, timing).approx; });
        const double scc = eval([&] { return eta_scc(qubit, timing); });
        const double aidv = eval([&] { return eta_aid(qubit, timing); });
        const double hi = eval([&] { return eta_aid_limit_high_ka(qubit, timing); });
        const double lo = eval([&] { return eta_aid_limit_low_ka(qubit, timing); });
        const double bg = eval([&] { return eta_aid_background_limit(qubit, timing); });
        std::optional<AidVsSos> crit;
        try {
            crit = aid_beats_sos(qubit, timing);
        } catch (const DomainError&) {
            ok = false;
        }
        const double nan = std::numeric_limits<double>::quiet_NaN();
        csv.row({num(v), num(sos), num(sos_a), num(scc), num(aidv), num(hi), num(lo), num(bg),
                 num(crit ? crit->lhs : nan), num(crit ? crit->rhs : nan), num(crit ? crit->ratio : nan),
                 crit ? (crit->aid_wins ? "true" : "false") : "nan", ok ? "ok" : "degenerate"});
        if (!ok) ++degenerate;
    }
    ctx.results["rows"] = s.values.size();
    ctx.results["degenerate_rows"] = degenerate;
}

// ---------------------------------------------------------------------------
// pde

double linear_r2(const std::vector<std::uint64_t>& x, const std::vector<double>& y) {
    const auto m = static_cast<double>(x.size());
    if (x.size() < 3) return std::numeric_limits<double>::quiet_NaN();
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sx += static_cast<double>(x[i]), sy += y[i];
    const double mx = sx / m, my = sy / m;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = static_cast<double>(x[i]) - mx, dy = y[i] - my;
        sxx += dx * dx, sxy += dx * dy, syy += dy * dy;
    }
    if (syy == 0.0) return 1.0;
    return sxy * sxy / (sxx * syy);
}

void write_profile(const fs::path& path, const MaterialParams& params, const CarrierState& st) {
    const RadialDensity act = activated_density(params, st);
    Csv csv(path, {"r_um[um]", "Q_minus[um^-3]", "P_plus[um^-3]", "n[um^-3]", "p[um^-3]", "activated[um^-3]"});
    for (std::size_t i = 0; i < st.grid.size(); ++i) {
        csv.row({num(st.grid.centers()[i]), num(st.Q_minus[i]), num(st.P_plus[i]), num(st.n[i]), num(st.p[i]),
                 num(act.density[i])});
    }
}

double min_density(const CarrierState& st) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto* v : {&st.Q_minus, &st.P_plus, &st.n, &st.p}) {
        for (double x : *v) m = std::min(m, x);
    }
    return m;
}

void cmd_pde(RunContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const PdeBlock& b = cfg.pde;
    const RadialGrid grid = build_grid(cfg);
    const auto cycles = merged_cycles(b.max_cycles, b.points_per_decade, b.snapshot_cycles);

    std::vector<CarrierState> states;
    ActivationCurve curve = simulate_activation(cfg.material, grid, cycles, cfg.activation, cfg.solver, &states);
    const double dt = cfg.activation.cycle_duration;

    {
        Csv csv(ctx.file("conservation.csv"), {"n_cycles[cycles]", "time[s]", "charge_balance[charges]",
                                               "charge_scale[charges]", "relative_drift[1]", "min_density[um^-3]"});
        double worst = 0.0;
        const double q0 = charge_balance(states.front());
        for (const auto& st : states) {
            const double q = charge_balance(st);
            const double scale = charge_scale(st);
            const double drift = scale > 0.0 ? std::abs(q - q0) / scale : 0.0;
            worst = std::max(worst, drift);
            csv.row({num(static_cast<std::uint64_t>(std::llround(st.time / dt))), num(st.time), num(q), num(scale),
                     num(drift), num(min_density(st))});
        }
        ctx.results["max_relative_charge_drift"] = worst;
    }
    for (std::size_t i = 0; i < cycles.size(); ++i) {
        if (std::find(b.snapshot_cycles.begin(), b.snapshot_cycles.end(), cycles[i]) == b.snapshot_cycles.end() &&
            !(cycles.size() == 1))
            continue;
        write_profile(ctx.file("profile_" + std::to_string(cycles[i]) + ".csv"), cfg.material, states[i]);
    }
    if (cycles.size() == 1) return;

    const bool self_reference = cfg.material.sigma_Np == 0.0;
    const ActivationCurve reference =
        self_reference ? curve
                       : simulate_activation(with_epsilon(cfg.material, 0.0), grid, cycles, cfg.activation, cfg.solver);
    attach_capture_efficiency(curve, reference);
    {
        Csv csv(ctx.file("activation.csv"), {"n_cycles[cycles]", "time[s]", "activated[ancillas]", "lambda_eff[1]",
                                             "carriers_per_cycle[1/cycle]", "reference_activated[ancillas]"});
        for (std::size_t i = 0; i < cycles.size(); ++i) {
            csv.row({num(cycles[i]), num(static_cast<double>(cycles[i]) * dt), num(curve.activated_count[i]),
                     num(curve.lambda_eff[i]), num(curve.carriers_per_cycle[i]), num(reference.activated_count[i])});
        }
    }
    ctx.results["activation_r2_linear"] = linear_r2(cycles, curve.activated_count);
    ctx.results["reference_r2_linear"] = linear_r2(cycles, reference.activated_count);
    ctx.results["carriers_per_cycle_final"] = curve.carriers_per_cycle.back();

    if (!b.epsilon_batch.empty()) {
        const auto batch = epsilon_curves(cfg, grid, b.epsilon_batch, cycles, ctx.threads);
        Csv csv(ctx.file("activation_batch.csv"),
                {"epsilon[1]", "n_cycles[cycles]", "activated[ancillas]", "lambda_eff[1]"});
        for (std::size_t e = 0; e < batch.size(); ++e) {
            for (std::size_t i = 0; i < cycles.size(); ++i) {
                csv.row({num(b.epsilon_batch[e]), num(cycles[i]), num(batch[e].activated_count[i]),
                         num(batch[e].lambda_eff[i])});
            }
        }
    }
    if (b.calibrate) {
        CalibrationResult r;
        try {
            r = calibrate_power(cfg.material, grid, b.calibration, cfg.activation, cfg.solver);
        } catch (const DomainError& e) {
            throw ConfigError("pde.calibration", e.what());
        }
        Csv csv(ctx.file("calibration.csv"), {"target[carriers/cycle]", "power[mW]", "carriers_per_cycle[1/cycle]",
                                              "cycles[cycles]", "iterations[1]"});
        csv.row({num(b.calibration.target_carriers_per_cycle), num(r.power_mW), num(r.carriers_per_cycle),
                 num(b.calibration.cycles), num(static_cast<std::uint64_t>(r.iterations))});
        ctx.results["calibrated_power_mW"] = r.power_mW;
    }
}

// ---------------------------------------------------------------------------
// odmr

void cmd_odmr(RunContext& ctx) {
    ExperimentConfig cfg = build_experiment(ctx);
    cfg.lambda_schedule = build_schedule(ctx, ctx.cfg.schedule.epsilon);
    const std::string unit = point_unit(cfg.response.kind);
    const std::size_t runs = ctx.cfg.experiment.runs;
    if (runs < 2) throw ConfigError("experiment.runs", "SNR needs at least 2 runs");

    Csv snr_csv(ctx.file("snr.csv"), {"protocol[label]", "n[repeats]", "runs[1]", "snr[1]", "snr_ci_low[1]",
                                      "snr_ci_high[1]", "analytic_snr[1]"});
    Csv fit_csv(ctx.file("fit.csv"),
                {"protocol[label]", "center[" + unit + "]", "fwhm[" + unit + "]", "amplitude[photons]", "baseline[photons]",
                 "status[label]"});
    for (const auto& proto : ctx.cfg.experiment.protocols) {
        Protocol p;
        if (proto == "sos") {
            p = Protocol::Sos;
        } else if (proto == "aid") {
            p = Protocol::Aid;
        } else {
            throw ConfigError("experiment.protocols", "expected sos or aid, got \"" + proto + "\"");
        }
        const Spectrum sp = p == Protocol::Sos ? simulate_sos(cfg) : simulate_aid(cfg);
        {
            Csv csv(ctx.file("spectrum_" + proto + ".csv"),
                    {"point[" + unit + "]", "spin_flip[1]", "counts[photons]", "repeats[1]", "seed[1]"});
            for (std::size_t i = 0; i < sp.points.size(); ++i) {
                csv.row({num(sp.points[i]), num(spin_response_value(cfg.response, sp.points[i])), num(sp.counts[i]),
                         num(sp.n), num(sp.seed)});
            }
        }
        const RunPairs pairs = simulate_run_pairs(cfg, p, runs);
        const SnrEstimate est = estimate_snr(pairs.on, pairs.off, 1000, 0.95, ctx.seed);
        double analytic = std::numeric_limits<double>::quiet_NaN();
        if (p == Protocol::Sos) {
            analytic = snr_sos(cfg.qubit, cfg.n);
        } else if (cfg.lambda_schedule.is_constant() && cfg.background_defects == 0) {
            QubitReadoutParams q = cfg.qubit;
            q.q1_mean = aid_ionization(cfg, 1.0);
            q.lambda_mean = cfg.lambda_schedule.at(1);
            q.w_mean = 0.0;
            try {
                TimingBudget t = cfg.timing;
                t.n = cfg.n;
                analytic = std::sqrt(static_cast<double>(cfg.n) * t.t_aid()) / eta_aid(q, t);
            } catch (const DomainError&) {
            }
        }
        snr_csv.row({proto, num(cfg.n), num(static_cast<std::uint64_t>(runs)), num(est.snr), num(est.ci_low),
                     num(est.ci_high), num(analytic)});
        ctx.results["snr_" + proto] = est.snr;

        if (cfg.response.kind == ResponseKind::OdmrLorentzian) {
            std::vector<double> y(sp.counts.begin(), sp.counts.end());
            try {
                const LorentzianFit f = fit_lorentzian(sp.points, y);
                fit_csv.row({proto, num(f.center), num(std::abs(f.fwhm)), num(f.amplitude), num(f.baseline), "ok"});
            } catch (const std::exception&) {
                fit_csv.row({proto, "nan", "nan", "nan", "nan", "failed"});
            }
        }
    }
}

// ---------------------------------------------------------------------------
// curve

std::vector<std::uint64_t> curve_n_values(const CurveBlock& c) {
    if (!c.n_values.empty()) return c.n_values;
    if (c.n_min < 1 || c.n_max < c.n_min || c.points_per_decade < 1)
        throw ConfigError("curve", "need 1 <= n_min <= n_max and points_per_decade >= 1");
    std::vector<std::uint64_t> v;
    const double lmin = std::log10(static_cast<double>(c.n_min)), lmax = std::log10(static_cast<double>(c.n_max));
    const int steps = std::max(1, static_cast<int>(std::ceil((lmax - lmin) * c.points_per_decade - 1e-9)));
    for (int i = 0; i <= steps; ++i) {
        const auto n = static_cast<std::uint64_t>(std::llround(std::pow(10.0, lmin + (lmax - lmin) * i / steps)));
        if (v.empty() || n > v.back()) v.push_back(n);
    }
    return v;
}

void cmd_curve(RunContext& ctx) {
    const CurveBlock& cb = ctx.cfg.curve;
    ExperimentConfig base = build_experiment(ctx);
    base.sampling = parse_sampling(cb.sampling, "curve.sampling");
    const auto ns = curve_n_values(cb);
    if (cb.runs < 2) throw ConfigError("curve.runs", "SNR needs at least 2 runs");
    if (cb.background_defects.empty()) throw ConfigError("curve.background_defects", "must not be empty");

    const bool simulate = ctx.cfg.schedule.mode == "simulate";
    std::vector<double> epsilons = simulate ? cb.epsilons : std::vector<double>{std::nan("")};
    if (epsilons.empty()) throw ConfigError("curve.epsilons", "must not be empty");
    std::vector<LambdaSchedule> schedules;
    if (simulate) {
        const ScheduleBlock& s = ctx.cfg.schedule;
        const RadialGrid grid = build_grid(ctx.cfg);
        const auto cycles = merged_cycles(std::max(s.max_cycles, ns.back()), s.points_per_decade, {});
        for (const auto& c : epsilon_curves(ctx.cfg, grid, epsilons, cycles, ctx.threads))
            schedules.push_back(LambdaSchedule::from_curve(c));
    } else {
        schedules.push_back(build_schedule(ctx, 0.0));
    }

    Csv csv(ctx.file("curve.csv"), {"epsilon[1]", "background_defects[count]", "n[repeats]", "t_aid[s]", "snr[1]",
                                    "snr_ci_low[1]", "snr_ci_high[1]", "eta[sqrt_s]", "valid[bool]"});
    Csv opt(ctx.file("curve_optima.csv"),
            {"epsilon[1]", "background_defects[count]", "n_opt[repeats]", "eta_opt[sqrt_s]", "interior[bool]"});
    for (std::size_t e = 0; e < epsilons.size(); ++e) {
        for (auto defects : cb.background_defects) {
            ExperimentConfig c = base;
            c.lambda_schedule = schedules[e];
            c.background_defects = defects;
            const auto curve = sensitivity_curve(c, ns, cb.runs);
            for (const auto& pt : curve) {
                csv.row({num(epsilons[e]), num(std::uint64_t{defects}), num(pt.n), num(pt.t_aid), num(pt.snr.snr),
                         num(pt.snr.ci_low), num(pt.snr.ci_high), num(pt.eta), pt.valid ? "true" : "false"});
            }
            const auto best = curve_optimum(curve);
            if (best) {
                const bool interior = *best > 0 && *best + 1 < curve.size();
                opt.row({num(epsilons[e]), num(std::uint64_t{defects}), num(curve[*best].n), num(curve[*best].eta),
                         interior ? "true" : "false"});
            } else {
                opt.row({num(epsilons[e]), num(std::uint64_t{defects}), "nan", "nan", "false"});
            }
        }
    }
}

// ---------------------------------------------------------------------------
// image

ImageGrid load_image(const std::string& path, const std::string& key, double pitch) {
    if (path.empty()) throw ConfigError(key, "required when image.mode is \"files\"");
    const fs::path p(path);
    if (!fs::exists(p)) throw ConfigError(key, "no such file: " + path);
    return p.extension() == ".pgm" ? read_pgm16(p, pitch) : read_grid_csv(p);
}

void cmd_image(RunContext& ctx) {
    const ImageBlock& b = ctx.cfg.image;
    ImageGrid on, off;
    if (b.mode == "simulate") {
        if (b.width_px == 0 || b.height_px == 0 || !(b.pitch_um > 0.0))
            throw ConfigError("image", "need positive width_px, height_px and pitch_um");
        if (b.cycles_off < 1) throw ConfigError("image.cycles_off", "must be >= 1");
        const double ratio = ctx.cfg.qubit.q1_mean / ctx.cfg.qubit.q0_mean;
        const auto cycles_on = std::max<std::uint64_t>(
            1, static_cast<std::uint64_t>(std::llround(ratio * static_cast<double>(b.cycles_off))));
        const MaterialParams m = with_epsilon(ctx.cfg.material, b.epsilon);
        const RadialGrid grid = build_grid(ctx.cfg);
        std::vector<std::uint64_t> cycles{cycles_on, b.cycles_off};
        if (cycles_on >= b.cycles_off) cycles = {b.cycles_off};
        std::vector<CarrierState> states;
        simulate_activation(m, grid, cycles, ctx.cfg.activation, ctx.cfg.solver, &states);
        const RadialDensity d_on = activated_density(m, states.front());
        const RadialDensity d_off = activated_density(m, states.back());
        const ImageGrid geo = ImageGrid::centered(b.width_px, b.height_px, b.pitch_um);
        const double ka = ctx.cfg.qubit.ka_mean;
        const double t = ctx.cfg.material.thickness_um;
        if (b.noiseless) {
            on = expected_image(d_on, ka, geo, t);
            off = expected_image(d_off, ka, geo, t);
        } else {
            on = synthesize_image(d_on, ka, geo, mix64(ctx.seed), t);
            off = synthesize_image(d_off, ka, geo, mix64(ctx.seed + 1), t);
        }
        ctx.results["cycles_on"] = cycles_on;
        ctx.results["cycles_off"] = b.cycles_off;
    } else if (b.mode == "files") {
        on = load_image(b.on_file, "image.on_file", b.pitch_um);
        off = load_image(b.off_file, "image.off_file", b.pitch_um);
        if (!on.same_geometry(off)) throw ConfigError("image", "on and off images differ in geometry");
    } else {
        throw ConfigError("image.mode", "expected simulate or files, got \"" + b.mode + "\"");
    }
    if (b.r_grid.empty() || b.w_grid.empty()) throw ConfigError("image", "r_grid and w_grid must not be empty");
    if (!(b.annulus_width_um > 0.0)) throw ConfigError("image.annulus_width_um", "must be positive");

    const ImageGrid diff = differential_image(on, off);
    write_grid_csv(on, ctx.file("image_on.csv"), "photons");
    write_grid_csv(off, ctx.file("image_off.csv"), "photons");
    write_grid_csv(diff, ctx.file("image_diff.csv"), "photons");
    write_pgm16(on, ctx.file("image_on.pgm"), b.pgm_scale);
    write_pgm16(off, ctx.file("image_off.pgm"), b.pgm_scale);

    const RadialProfile pon = radial_profile(on, b.annulus_width_um);
    const RadialProfile poff = radial_profile(off, b.annulus_width_um);
    {
        Csv csv(ctx.file("radial_profile.csv"),
                {"r_um[um]", "pixels[count]", "F_on[photons]", "F_off[photons]", "dF[photons]"});
        for (std::size_t i = 0; i < pon.sum.size(); ++i) {
            csv.row({num(pon.radius_um(i)), num(std::uint64_t{pon.pixels[i]}), num(pon.sum[i]), num(poff.sum[i]),
                     num(pon.sum[i] - poff.sum[i])});
        }
    }
    const RingSweep sw = sweep_ring(on, off, b.r_grid, b.w_grid, b.inner_mask_um, b.annulus_width_um);
    {
        Csv csv(ctx.file("ring_sweep.csv"), {"r_um[um]", "w_um[um]", "I_on[photons]", "I_off[photons]",
                                             "dI[photons]", "contrast[1]", "snr[1]"});
        for (const auto& row : sw.rows) {
            csv.row({num(row.ring.radius_um), num(row.ring.width_um), num(row.stats.I_on), num(row.stats.I_off),
                     num(row.stats.dI), num(row.stats.contrast), num(row.stats.snr)});
        }
    }
    if (!sw.rows.empty()) {
        Csv csv(ctx.file("ring_optima.csv"), {"criterion[label]", "r_um[um]", "w_um[um]", "value[1]"});
        const auto emit = [&](const char* name, std::size_t k, double v) {
            csv.row({name, num(sw.rows[k].ring.radius_um), num(sw.rows[k].ring.width_um), num(v)});
        };
        emit("abs_dI", sw.best_dI, std::abs(sw.rows[sw.best_dI].stats.dI));
        emit("abs_contrast", sw.best_contrast, std::abs(sw.rows[sw.best_contrast].stats.contrast));
        emit("snr", sw.best_snr, sw.rows[sw.best_snr].stats.snr);
    }
}

// ---------------------------------------------------------------------------

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Ancilla-aided integrated detection simulator"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    app.add_option("--config", config_path, "JSON run configuration");
    auto* seed_opt = app.add_option("--seed", seed, "global seed (overrides the config)");
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

    using Command = void (*)(RunContext&);
    const std::vector<std::tuple<std::string, std::string, Command>> commands = {
        {"sensitivity", "closed-form sensitivities over a parameter sweep", cmd_sensitivity},
        {"pde", "carrier dynamics, activation curves and conservation log", cmd_pde},
        {"odmr", "Monte Carlo spectra and SNR", cmd_odmr},
        {"curve", "Monte Carlo sensitivity versus repeat count", cmd_curve},
        {"image", "synthetic images and ring extraction", cmd_image},
    };
    for (const auto& [name, help, fn] : commands) app.add_subcommand(name, help);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    const auto started = std::chrono::steady_clock::now();
    try {
        RunContext ctx;
        ctx.cfg = load_config(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path));
        if (*seed_opt) ctx.cfg.seed = seed;
        ctx.seed = ctx.cfg.seed;
        ctx.threads = threads;
        ctx.out = out_dir;
        fs::create_directories(ctx.out);

        std::string name;
        Command fn = nullptr;
        for (const auto& [n, h, f] : commands) {
            if (app.got_subcommand(n)) name = n, fn = f;
        }
        fn(ctx);

        json manifest;
        manifest["command"] = name;
        manifest["seed"] = ctx.seed;
        manifest["config"] = ctx.cfg;
        manifest["versions"] = {{"aidsim", kVersion},       {"stochastics", kVersion}, {"sensitivity", kVersion},
                                {"carrier_dynamics", kVersion}, {"montecarlo", kVersion},  {"imaging", kVersion}};
        manifest["outputs"] = ctx.outputs;
        manifest["results"] = ctx.results;
        write_json(ctx.out / "manifest.json", manifest);

        json info;
        info["started_utc"] = utc_now();
        info["threads"] = threads;
        info["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        write_json(ctx.out / "run_info.json", info);
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const DomainError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace aid
