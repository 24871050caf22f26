// Acceptance checks. Prints one PASS/FAIL line per criterion.
// Exit status is nonzero if any criterion fails, except criteria listed as
// known failures (see README); --strict counts those too.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "aid/carrier_dynamics.hpp"
#include "aid/cli.hpp"
#include "aid/imaging.hpp"
#include "aid/montecarlo.hpp"
#include "aid/sensitivity.hpp"
#include "aid/stochastics.hpp"

using namespace aid;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

unsigned hw_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

Outcome criterion1() {
    double worst = 0.0;
    const double grid[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (double p : grid)
        for (double q : grid)
            for (double r : grid) {
                const auto s = scc_trap_activation(BernoulliVar(p), BernoulliVar(q), BernoulliVar(r));
                const auto e =
                    enumerate_compound_variance({BernoulliVar(p), BernoulliVar(q), BernoulliVar(r)}, CompoundForm::SccV);
                worst = std::max({worst, std::abs(s.mean - e.stats.mean), std::abs(s.variance - e.stats.variance)});
            }
    for (double p : grid)
        for (double q : grid)
            for (double w : {0.0, 1.0, 4.0}) {
                const auto a = aid_trap_activation(BernoulliVar(p), BernoulliVar(q), PoissonVar(w));
                const auto e =
                    enumerate_compound_variance({BernoulliVar(p), BernoulliVar(q), PoissonVar(w)}, CompoundForm::AidV);
                worst = std::max({worst, std::abs(a.mean - e.stats.mean), std::abs(a.variance - e.stats.variance)});
            }
    return {worst <= 1e-10, "max |analytic - enumeration| = " + fmt("%.2e", worst)};
}

Outcome criterion2() {
    TimingBudget t;
    QubitReadoutParams q;
    q.ka_mean = 1e6;
    const double high = std::abs(eta_aid(q, t) / eta_aid_limit_high_ka(q, t) - 1);

    double low = 0.0;
    for (auto [q0, q1] : {std::pair{1.0, 0.0}, std::pair{0.0, 1.0}}) {
        for (double ka : {1.0, 22.0, 1000.0}) {
            QubitReadoutParams d;
            d.q0_mean = q0;
            d.q1_mean = q1;
            d.ka_mean = ka;
            low = std::max(low, std::abs(eta_aid(d, t) / eta_aid_limit_low_ka(d, t) - 1));
        }
    }
    QubitReadoutParams b;
    b.lambda_mean = 1e-3;
    b.w_mean = 100.0;
    const double bg = std::abs(eta_aid(b, t) / eta_aid_background_limit(b, t) - 1);
    return {high <= 0.01 && low <= 0.01 && bg <= 0.05, "rel. errors: bright " + fmt("%.2e", high) + ", dim " +
                                                           fmt("%.2e", low) + ", background " + fmt("%.3f", bg)};
}

Outcome criterion3() {
    ExperimentConfig c;
    c.threads = hw_threads();
    const std::size_t runs = 400;
    const RunPairs sos = simulate_run_pairs(c, Protocol::Sos, runs);
    const SnrEstimate s = estimate_snr(sos.on, sos.off, 1000, 0.95, 11);
    const double analytic = snr_sos(c.qubit, c.n);
    const RunPairs aid = simulate_run_pairs(c, Protocol::Aid, runs);
    const SnrEstimate a = estimate_snr(aid.on, aid.off, 1000, 0.95, 12);
    const bool in_ci = s.ci_low <= analytic && analytic <= s.ci_high;
    return {in_ci && a.snr > s.snr,
            "SOS SNR " + fmt("%.2f", s.snr) + " [" + fmt("%.2f", s.ci_low) + ", " + fmt("%.2f", s.ci_high) +
                "] vs analytic " + fmt("%.3f", analytic) + "; AID SNR " + fmt("%.1f", a.snr)};
}

double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
    const double m = double(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / m, my += y[i] / m;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy * sxy / (sxx * syy);
}

Outcome criterion4() {
    const MaterialParams m;
    const RadialGrid g = default_grid(m);

    CarrierSolver solver(m, g);
    CarrierState s = solver.initial_state();
    const double q0 = charge_balance(s);
    double drift = 0.0, t_prev = 0.0;
    for (int k = 0; k <= 20; ++k) {
        const double t = kCycleDuration * std::pow(10.0, 4.0 * k / 20.0);
        solver.advance(s, t - t_prev);
        t_prev = t;
        drift = std::max(drift, std::abs(charge_balance(s) - q0) / charge_scale(s));
    }

    MaterialParams lin = m;
    lin.sigma_Np = 0.0;
    std::vector<std::uint64_t> cycles;
    for (std::uint64_t n = 500; n <= 10000; n += 500) cycles.push_back(n);
    const auto curve = simulate_activation(lin, g, cycles);
    const double r2 = r_squared(std::vector<double>(cycles.begin(), cycles.end()), curve.activated_count);

    double change = 0.0;
    for (double eps : {0.0, 1.0}) {
        MaterialParams p = m;
        p.sigma_Np *= eps;
        const auto a = simulate_activation(p, g, {10000});
        const auto b = simulate_activation(p, g.refined(), {10000});
        change = std::max(change, std::abs(b.activated_count[0] / a.activated_count[0] - 1));
    }
    return {drift <= 1e-6 && r2 > 0.999 && change < 0.01, "drift " + fmt("%.2e", drift) + ", R^2 " +
                                                               fmt("%.6f", r2) + ", grid halving " +
                                                               fmt("%.4f", change)};
}

Outcome criterion5() {
    const MaterialParams m;
    const auto r = calibrate_power(m, default_grid(m));
    const double rel = std::abs(r.power_mW / 2.22 - 1);
    return {rel <= 0.25, "calibrated power " + fmt("%.3f", r.power_mW) + " mW (" +
                             fmt("%.2f", r.carriers_per_cycle) + " carriers/cycle), target 2.22 mW +/- 25%"};
}

std::vector<std::uint64_t> n_grid() {
    std::vector<std::uint64_t> ns;
    for (int k = 0; k <= 20; ++k) ns.push_back(std::uint64_t(std::llround(100 * std::pow(10.0, k / 4.0))));
    return ns;
}

bool non_decreasing(const std::vector<CurvePoint>& lo, const std::vector<CurvePoint>& hi, std::string& where) {
    for (std::size_t i = 0; i < lo.size(); ++i) {
        if (!lo[i].valid) continue;
        if (!hi[i].valid) continue;  // no signal at all: infinitely worse
        if (hi[i].eta < lo[i].eta) {
            where = "n=" + std::to_string(lo[i].n);
            return false;
        }
    }
    return true;
}

Outcome criterion6() {
    const MaterialParams base;
    const RadialGrid g = default_grid(base);
    const auto cycles = log_cycle_grid(10000000, 6);
    MaterialParams ref_m = base;
    ref_m.sigma_Np = 0.0;
    const ActivationCurve ref = simulate_activation(ref_m, g, cycles);

    const std::vector<double> eps{0.0, 0.01, 0.5, 1.0, 2.0};
    std::vector<ActivationCurve> acts(eps.size());
    std::vector<std::thread> pool;
    for (std::size_t e = 0; e < eps.size(); ++e) {
        pool.emplace_back([&, e] {
            MaterialParams m = base;
            m.sigma_Np = base.sigma_Np * eps[e];
            acts[e] = eps[e] == 0.0 ? ref : simulate_activation(m, g, cycles);
            attach_capture_efficiency(acts[e], ref);
        });
    }
    for (auto& t : pool) t.join();

    ExperimentConfig c;
    c.sampling = SamplingMode::Aggregated;
    c.threads = hw_threads();
    c.seed = 2024;
    const std::size_t runs = 4000;
    const auto ns = n_grid();
    std::vector<std::vector<CurvePoint>> curves;
    for (const auto& a : acts) {
        c.lambda_schedule = LambdaSchedule::from_curve(a);
        curves.push_back(sensitivity_curve(c, ns, runs));
    }
    bool ordered = true;
    std::string where;
    for (std::size_t e = 1; e < eps.size() && ordered; ++e) {
        ordered = non_decreasing(curves[e - 1], curves[e], where);
        if (!ordered) where = "eps " + fmt("%g", eps[e]) + " at " + where;
    }
    const auto opt = curve_optimum(curves[3]);
    const bool interior = opt && *opt > 0 && *opt + 1 < ns.size();

    c.lambda_schedule = LambdaSchedule::from_curve(acts[3]);
    std::vector<std::vector<CurvePoint>> bg;
    for (std::uint32_t d : {0u, 5u, 50u}) {
        c.background_defects = d;
        bg.push_back(sensitivity_curve(c, ns, runs));
    }
    bool bg_ordered = true;
    std::string bg_where;
    for (std::size_t k = 1; k < bg.size() && bg_ordered; ++k) bg_ordered = non_decreasing(bg[k - 1], bg[k], bg_where);

    std::string detail = std::string("epsilon ordering ") + (ordered ? "ok" : "violated (" + where + ")") +
                         "; eps=1 optimum at n=" + (opt ? std::to_string(ns[*opt]) : "none") +
                         (interior ? " (interior)" : " (edge)") + "; defect ordering " +
                         (bg_ordered ? "ok" : "violated (" + bg_where + ")");
    return {ordered && interior && bg_ordered, detail};
}

Outcome criterion7() {
    MaterialParams m;
    const RadialGrid g = default_grid(m);
    const QubitReadoutParams q;
    const std::uint64_t off_cycles = 10000000;
    const auto on_cycles = std::uint64_t(std::llround(q.q1_mean / q.q0_mean * double(off_cycles)));
    std::vector<CarrierState> states;
    simulate_activation(m, g, {on_cycles, off_cycles}, {}, {}, &states);
    const ImageGrid geo = default_scan();
    const RadialDensity d_on = activated_density(m, states[0]), d_off = activated_density(m, states[1]);

    const ImageGrid s_on = synthesize_image(d_on, q.ka_mean, geo, 1);
    const ImageGrid s_off = synthesize_image(d_off, q.ka_mean, geo, 2);
    double part = 0.0;
    for (const auto* img : {&s_on, &s_off}) {
        const RadialProfile p = radial_profile(*img);
        double sum = 0.0;
        for (double v : p.sum) sum += v;
        part = std::max(part, std::abs(sum - img->total()));
    }
    bool zero = true;
    for (const auto& row : sweep_ring(s_on, s_on, {5, 10, 13, 15}, {1, 3, 5, 7}).rows)
        zero = zero && row.stats.dI == 0.0 && row.stats.contrast == 0.0;

    const ImageGrid on = expected_image(d_on, q.ka_mean, geo), off = expected_image(d_off, q.ka_mean, geo);
    const RingSweep sw = sweep_ring(on, off, {13.0}, {1, 3, 5, 7, 9, 11, 13, 15});
    bool monotone = true;
    for (std::size_t k = 1; k < sw.rows.size(); ++k)
        monotone = monotone && std::abs(sw.rows[k].stats.dI) >= std::abs(sw.rows[k - 1].stats.dI) * (1 - 1e-12);
    const double wc = sw.rows[sw.best_contrast].ring.width_um, ws = sw.rows[sw.best_snr].ring.width_um;
    return {part == 0.0 && zero && monotone && wc < ws,
            "partition residual " + fmt("%g", part) + ", identical-pair sweep " + (zero ? "zero" : "nonzero") +
                ", dI(w) at r=13 " + (monotone ? "monotone" : "not monotone") + ", w_contrast " + fmt("%g", wc) +
                " um < w_snr " + fmt("%g", ws) + " um"};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

Outcome criterion8() {
    const fs::path root = fs::temp_directory_path() / "aid_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path cfg = root / "config.json";
    std::ofstream(cfg) << R"({
        "pde": {"max_cycles": 1000, "epsilon_batch": [0, 0.5, 1, 2]},
        "experiment": {"n": 5000, "runs": 50, "sweep": {"count": 21}, "background_defects": 2},
        "curve": {"n_min": 100, "n_max": 100000, "runs": 200, "epsilons": [0.5, 1], "background_defects": [0, 5]},
        "schedule": {"mode": "simulate", "max_cycles": 100000},
        "image": {"cycles_off": 100000}
    })";
    const unsigned many = std::max(4u, hw_threads());
    std::size_t files = 0;
    std::string bad;
    for (const std::string cmd : {"sensitivity", "pde", "odmr", "curve", "image"}) {
        for (unsigned t : {1u, many}) {
            const int rc = run_cli({cmd, "--config", cfg.string(), "--seed", "77", "--threads", std::to_string(t),
                                    "--out", (root / (cmd + "_" + std::to_string(t))).string()});
            if (rc != 0) bad += cmd + " exit " + std::to_string(rc) + " ";
        }
        for (const auto& e : fs::directory_iterator(root / (cmd + "_1"))) {
            const std::string name = e.path().filename().string();
            if (name == "run_info.json") continue;
            ++files;
            if (slurp(e.path()) != slurp(root / (cmd + "_" + std::to_string(many)) / name)) bad += cmd + "/" + name + " ";
        }
    }
    fs::remove_all(root);
    return {bad.empty() && files > 0, std::to_string(files) + " files compared at 1 vs " + std::to_string(many) +
                                          " threads" + (bad.empty() ? "" : "; differences: " + bad)};
}

}  // namespace

int main(int argc, char** argv) {
    bool strict = false;
    for (int i = 1; i < argc; ++i) strict = strict || std::string(argv[i]) == "--strict";

    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
        bool known_failure;
    };
    const std::vector<Criterion> criteria = {
        {1, "variance oracle equivalence", criterion1, false},
        {2, "sensitivity limit recovery", criterion2, false},
        {3, "Monte Carlo vs analytic SNR", criterion3, false},
        {4, "carrier dynamics conservation and linearity", criterion4, false},
        {5, "power calibration", criterion5, true},
        {6, "background degradation ordering", criterion6, false},
        {7, "ring extraction properties", criterion7, false},
        {8, "CLI determinism across thread counts", criterion8, false},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] criterion %d: %s (%.1f s): %s%s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                    o.detail.c_str(), !o.pass && c.known_failure ? " [known failure]" : "");
        std::fflush(stdout);
        if (!o.pass && (strict || !c.known_failure)) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
