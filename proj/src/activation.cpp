#include <algorithm>
#include <cmath>
#include <sstream>

#include "aid/carrier_dynamics.hpp"
#include "aid/error.hpp"

namespace aid {

double ActivationCurve::lambda_at(std::uint64_t cycle) const {
    if (lambda_eff.empty()) throw DomainError("activation curve has no capture efficiency attached");
    auto it = std::lower_bound(n_cycles.begin(), n_cycles.end(), cycle);
    if (it == n_cycles.end()) return lambda_eff.back();
    return lambda_eff[static_cast<std::size_t>(it - n_cycles.begin())];
}

double activated_ancillas(const MaterialParams& params, const CarrierState& state,
                          const ActivationOptions& options) {
    const auto& c = state.grid.centers();
    const auto& v = state.grid.volumes();
    double total = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c[i] < options.spot_radius_um) continue;
        const double init = c[i] >= params.prep_exclusion_radius_um ? params.Q_minus_init : 0.0;
        total += v[i] * (init - state.Q_minus[i]);
    }
    return total;
}

ActivationCurve activation_curve(const MaterialParams& params, const std::vector<CarrierState>& states,
                                 const std::vector<std::uint64_t>& n_cycles,
                                 const ActivationOptions& options) {
    if (states.size() != n_cycles.size()) throw DomainError("one state per cycle index required");
    ActivationCurve curve;
    curve.n_cycles = n_cycles;
    for (const auto& s : states) curve.activated_count.push_back(activated_ancillas(params, s, options));
    return curve;
}

ActivationCurve simulate_activation(const MaterialParams& params, const RadialGrid& grid,
                                    const std::vector<std::uint64_t>& n_cycles,
                                    const ActivationOptions& options, const SolverOptions& solver_options,
                                    std::vector<CarrierState>* snapshots) {
    for (std::size_t i = 1; i < n_cycles.size(); ++i) {
        if (n_cycles[i] <= n_cycles[i - 1]) throw DomainError("cycle indices must be strictly increasing");
    }
    CarrierSolver solver(params, grid, solver_options);
    CarrierState state = solver.initial_state();
    ActivationCurve curve;
    curve.n_cycles = n_cycles;
    for (std::uint64_t n : n_cycles) {
        const double t = static_cast<double>(n) * options.cycle_duration;
        solver.advance(state, t - state.time);
        curve.activated_count.push_back(activated_ancillas(params, state, options));
        if (snapshots) snapshots->push_back(state);
    }
    return curve;
}

void attach_capture_efficiency(ActivationCurve& curve, const ActivationCurve& reference, double tol) {
    if (curve.n_cycles != reference.n_cycles) throw DomainError("curves must share cycle indices");
    const std::size_t m = curve.n_cycles.size();
    double largest = 0.0;
    for (double a : curve.activated_count) largest = std::max(largest, std::abs(a));
    for (double a : reference.activated_count) largest = std::max(largest, std::abs(a));

    curve.lambda_eff.assign(m, 0.0);
    curve.carriers_per_cycle.assign(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
        const std::uint64_t n_prev = k == 0 ? 0 : curve.n_cycles[k - 1];
        const double a_prev = k == 0 ? 0.0 : curve.activated_count[k - 1];
        const double r_prev = k == 0 ? 0.0 : reference.activated_count[k - 1];
        const double d = curve.activated_count[k] - a_prev;
        const double dref = reference.activated_count[k] - r_prev;
        if (d < -tol * largest || dref < -tol * largest) {
            std::ostringstream msg;
            msg << "non-monotone ancilla activation between cycles " << n_prev << " and "
                << curve.n_cycles[k] << " (increment " << d << ", reference " << dref << ")";
            throw NumericalError(msg.str());
        }
        const std::uint64_t span = curve.n_cycles[k] - n_prev;
        if (span == 0) continue;
        curve.carriers_per_cycle[k] = std::max(dref, 0.0) / static_cast<double>(span);
        curve.lambda_eff[k] = dref > 0.0 ? std::max(d, 0.0) / dref : 0.0;
    }
}

std::vector<std::uint64_t> log_cycle_grid(std::uint64_t n_max, int per_decade) {
    if (n_max < 1 || per_decade < 1) throw DomainError("log grid needs n_max >= 1 and per_decade >= 1");
    std::vector<std::uint64_t> out{1};
    const double decades = std::log10(static_cast<double>(n_max));
    const int total = static_cast<int>(std::ceil(decades * per_decade));
    for (int k = 1; k <= total; ++k) {
        const auto n = static_cast<std::uint64_t>(std::llround(std::pow(10.0, static_cast<double>(k) / per_decade)));
        if (n > out.back() && n < n_max) out.push_back(n);
    }
    if (out.back() != n_max) out.push_back(n_max);
    return out;
}

CalibrationResult calibrate_power(const MaterialParams& params, const RadialGrid& grid,
                                  const CalibrationOptions& options, const ActivationOptions& activation,
                                  const SolverOptions& solver) {
    if (!(options.target_carriers_per_cycle > 0.0)) {
        throw DomainError("calibration target must be > 0 carriers per cycle");
    }
    if (!(options.lo_mW > 0.0 && options.hi_mW > options.lo_mW)) throw DomainError("invalid power bracket");

    MaterialParams p = params;
    p.sigma_Np = 0.0;
    const double target = options.target_carriers_per_cycle;
    auto per_cycle = [&](double power) {
        p.beam.power_mW = power;
        const auto curve = simulate_activation(p, grid, {options.cycles}, activation, solver);
        return curve.activated_count.back() / static_cast<double>(options.cycles);
    };

    double lo = options.lo_mW, hi = options.hi_mW;
    const double f_lo = per_cycle(lo), f_hi = per_cycle(hi);
    if (!(f_lo <= target && target <= f_hi)) {
        std::ostringstream msg;
        msg << "calibration target " << target << " carriers/cycle outside reachable range [" << f_lo << ", "
            << f_hi << "] for powers [" << lo << ", " << hi << "] mW";
        throw DomainError(msg.str());
    }
    for (int it = 1; it <= options.max_iterations; ++it) {
        const double mid = std::sqrt(lo * hi);
        const double f = per_cycle(mid);
        if (std::abs(f / target - 1.0) <= options.rel_tol) return {mid, f, it};
        (f < target ? lo : hi) = mid;
    }
    throw NumericalError("power calibration did not converge");
}

}  // namespace aid
