#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace aid {

/// Carbon-site density of diamond expressed per ppm, in um^-3.
inline constexpr double kPpmDensity = 1.76e5;

/// Illumination profile: Gaussian in r with width `s`.
struct Beam {
    double power_mW = 2.22;
    double ref_power_mW = 1e-3;
    double width_um = 1.0;

    double relative_power() const { return power_mW / ref_power_mW; }
};

/// Photo-conversion rate prefactors (Hz) at the beam center.
/// theta_N scales linearly with I/I0, theta_0 and theta_minus quadratically.
struct RateLaws {
    double theta_N_coef = 15.0;
    double theta_0_coef = 0.0046;
    double theta_minus_coef = 0.0107;
};

/// Material and illumination parameters. Densities in um^-3, cross sections
/// in um^2, velocities in um/s, diffusivities in um^2/s.
struct MaterialParams {
    double P = 1.0 * kPpmDensity;            ///< total nitrogen
    double Q = 0.01 * kPpmDensity;           ///< total NV
    double Q_minus_init = 0.007 * kPpmDensity;
    double sigma_Nn = 3.1e-6;   ///< N+ electron capture
    double sigma_Np = 1.4e-8;   ///< N0 hole capture
    double sigma_NVp = 9e-8;    ///< NV- hole capture
    double sigma_NVn = 0.0;     ///< NV0 electron capture
    double v_th = 1.15e11;      ///< sqrt(3 kB T / m_e) at 293 K
    double D_n = 6.1e9;
    double D_p = 5.3e9;
    double omega = 0.0;         ///< NV <-> N tunneling coupling (um^3/s); no value known
    Beam beam;
    RateLaws rates;
    double R_max_um = 250.0;
    double thickness_um = 1.0;
    /// NVs with r < prep_exclusion_radius_um start neutral (Q_minus = P_plus = 0).
    /// Zero means uniform preparation over the whole disk.
    double prep_exclusion_radius_um = 0.0;

    double kappa_p() const { return sigma_NVp * v_th; }
    double kappa_n() const { return sigma_NVn * v_th; }
    double gamma_p() const { return sigma_Np * v_th; }
    double gamma_n() const { return sigma_Nn * v_th; }

    /// Beam-center rates (Hz).
    double theta_N0() const { return rates.theta_N_coef * beam.relative_power(); }
    double theta_00() const;
    double theta_minus0() const;

    void validate() const;
};

/// Cell-centered finite-volume grid on [0, R_max]. Cell i spans faces[i]..faces[i+1].
class RadialGrid {
public:
    explicit RadialGrid(std::vector<double> faces, double thickness_um = 1.0);

    /// Uniform spacing dr_min out to fine_radius, then geometric growth by
    /// `growth` per cell until dr_max, then uniform dr_max to R_max.
    static RadialGrid stretched(double R_max, double dr_min, double dr_max, double fine_radius,
                                double growth = 1.05, double thickness_um = 1.0);
    /// Same construction with every cell split in two.
    RadialGrid refined() const;

    std::size_t size() const { return centers_.size(); }
    const std::vector<double>& faces() const { return faces_; }
    const std::vector<double>& centers() const { return centers_; }
    const std::vector<double>& volumes() const { return volumes_; }
    double thickness() const { return thickness_; }

    /// Area-weighted average of exp(-r^2/s^2) over cell i.
    double gaussian_average(std::size_t i, double s) const;

private:
    std::vector<double> faces_;
    std::vector<double> centers_;
    std::vector<double> volumes_;
    double thickness_;
};

/// Default grid: 0.1 um cells inside 4 um, stretched to 5 um cells at 250 um.
RadialGrid default_grid(const MaterialParams& params);

/// Radial densities (um^-3) at a given illumination time.
struct CarrierState {
    RadialGrid grid;
    std::vector<double> Q_minus;
    std::vector<double> P_plus;
    std::vector<double> n;
    std::vector<double> p;
    double time = 0.0;
};

/// Ancillas prepared in NV- (fraction Q_minus_init/Q) and N+ compensating them,
/// so the initial charge balance is exactly zero.
CarrierState initial_state(const MaterialParams& params, const RadialGrid& grid);

/// Net charge (elementary charges) integrated over the slab:
/// sum_i V_i (P_plus - Q_minus + p - n).
double charge_balance(const CarrierState& state);

/// Total charge magnitude sum_i V_i (P_plus + Q_minus + p + n) / 2, used to
/// normalize balance drift.
double charge_scale(const CarrierState& state);

struct SolverOptions {
    double rtol = 1e-5;
    double atol_trap = 1e-7;     ///< absolute tolerance for Q_minus, P_plus (um^-3)
    double atol_carrier = 1e-9;  ///< absolute tolerance for n, p (um^-3)
    double h_init = 1e-13;
    double h_min = 1e-22;
    double h_max = 1e-3;
    int max_newton = 12;
    double newton_tol = 1e-3;    ///< on the weighted correction norm
    double negativity_tol = 1e-12;  ///< relative to the largest density
    std::uint64_t max_steps = 10000000;  ///< attempted steps per advance() call

    void validate() const;
};

struct SolverStats {
    std::uint64_t steps = 0;
    std::uint64_t rejected = 0;
    std::uint64_t newton_iterations = 0;
    double last_h = 0.0;
    double max_error_estimate = 0.0;  ///< largest accepted weighted local error
};

/// Backward-Euler method of lines for the photo-generation / diffusion /
/// capture system in cylindrical symmetry.
///
/// Unknowns per cell are (Q_minus, P_plus, n, p). Diffusion uses conservative
/// face fluxes with zero flux at r = 0 and r = R_max; reactions conserve charge
/// cell by cell, so global charge is conserved up to roundoff. Newton's method
/// on the implicit step solves a block-tridiagonal system. Steps are adapted
/// from a filtered local error estimate and rejected if any density goes
/// negative beyond tolerance.
class CarrierSolver {
public:
    CarrierSolver(MaterialParams params, RadialGrid grid, SolverOptions options = {});

    const MaterialParams& params() const { return params_; }
    const RadialGrid& grid() const { return grid_; }
    const SolverStats& stats() const { return stats_; }

    CarrierState initial_state() const { return aid::initial_state(params_, grid_); }

    /// Advance `state` by `duration` seconds of continuous illumination.
    /// Throws NumericalError on step-size underflow.
    void advance(CarrierState& state, double duration);

    /// Time derivative of the packed state (testing hook).
    std::vector<double> rhs(const CarrierState& state) const;

private:
    struct Rates {
        std::vector<double> theta_N, theta_0, theta_minus;
    };

    void eval_rhs(const std::vector<double>& u, std::vector<double>& f) const;
    bool implicit_step(const std::vector<double>& u0, double h, std::vector<double>& u1,
                       std::vector<double>& err) ;

    MaterialParams params_;
    RadialGrid grid_;
    SolverOptions options_;
    SolverStats stats_;
    Rates rates_;
    std::vector<double> trans_;  ///< face transmissibility 2 pi r_f t / dr between cell i-1 and i
    double h_ = 0.0;
    double scale_ = 1.0;
};

/// Convenience wrapper: fresh solver, one advance.
CarrierState evolve(const MaterialParams& params, const CarrierState& state, double duration,
                    const SolverOptions& options = {});

// ---------------------------------------------------------------------------
// Ancilla activation

inline constexpr double kCycleDuration = 80e-9;

/// Activated-ancilla counts at sampled cycle indices.
struct ActivationCurve {
    std::vector<std::uint64_t> n_cycles;   ///< strictly increasing, first may be 0
    std::vector<double> activated_count;   ///< ancillas converted by hole capture
    /// lambda_eff over the interval (n_cycles[i-1], n_cycles[i]]; lambda_eff[0]
    /// refers to (0, n_cycles[0]] (or is 0 when n_cycles[0] == 0).
    std::vector<double> lambda_eff;
    /// Carriers offered to the ancillas per cycle over each interval.
    std::vector<double> carriers_per_cycle;

    /// Piecewise-constant lambda_eff for a given 1-based cycle index.
    double lambda_at(std::uint64_t cycle) const;
};

struct ActivationOptions {
    double spot_radius_um = 3.0;      ///< ancillas counted for r >= spot radius
    double cycle_duration = kCycleDuration;
};

/// Ancillas outside the illumination spot converted out of NV-:
/// sum over cells with center >= spot radius of V_i (Q_minus_init - Q_minus).
double activated_ancillas(const MaterialParams& params, const CarrierState& state,
                          const ActivationOptions& options = {});

/// Activated counts for an already computed state sequence. lambda_eff is
/// left empty until `attach_capture_efficiency` is called.
ActivationCurve activation_curve(const MaterialParams& params, const std::vector<CarrierState>& states,
                                 const std::vector<std::uint64_t>& n_cycles,
                                 const ActivationOptions& options = {});

/// Runs the solver through the requested cycle boundaries and records counts.
/// `snapshots` (optional) receives the states at each boundary.
ActivationCurve simulate_activation(const MaterialParams& params, const RadialGrid& grid,
                                    const std::vector<std::uint64_t>& n_cycles,
                                    const ActivationOptions& options = {},
                                    const SolverOptions& solver = {},
                                    std::vector<CarrierState>* snapshots = nullptr);

/// Fills lambda_eff and carriers_per_cycle from a reference curve computed with
/// no background hole capture (sigma_Np = 0), where every hole reaches an
/// ancilla: lambda_eff = increment / reference increment over each interval.
/// Both curves must share n_cycles. Throws NumericalError if the activation is
/// non-monotone beyond `tol` (relative to the largest count).
void attach_capture_efficiency(ActivationCurve& curve, const ActivationCurve& reference,
                               double tol = 1e-6);

/// Geometric sample of cycle indices from 1 to n_max with `per_decade` points
/// per decade (always includes 1 and n_max).
std::vector<std::uint64_t> log_cycle_grid(std::uint64_t n_max, int per_decade);

struct CalibrationOptions {
    double target_carriers_per_cycle = 0.8;
    std::uint64_t cycles = 10000;
    double lo_mW = 0.01;
    double hi_mW = 100.0;
    double rel_tol = 0.01;
    int max_iterations = 60;
};

struct CalibrationResult {
    double power_mW;
    double carriers_per_cycle;
    int iterations;
};

/// Bisection (in log power) on the beam power until the mean activated-ancilla
/// increment per cycle, with sigma_Np forced to 0, matches the target within
/// rel_tol. Throws DomainError when the target is outside the bracket.
CalibrationResult calibrate_power(const MaterialParams& params, const RadialGrid& grid,
                                  const CalibrationOptions& options = {},
                                  const ActivationOptions& activation = {},
                                  const SolverOptions& solver = {});

}  // namespace aid
