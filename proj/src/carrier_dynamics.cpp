#include "aid/carrier_dynamics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "aid/error.hpp"

namespace aid {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kFields = 4;
enum Field { kQm = 0, kPp = 1, kN = 2, kP = 3 };

using Mat4 = Eigen::Matrix4d;
using Vec4 = Eigen::Vector4d;

void require(bool ok, const std::string& what) {
    if (!ok) throw DomainError(what);
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameters

double MaterialParams::theta_00() const {
    const double x = beam.relative_power();
    return rates.theta_0_coef * x * x;
}

double MaterialParams::theta_minus0() const {
    const double x = beam.relative_power();
    return rates.theta_minus_coef * x * x;
}

void MaterialParams::validate() const {
    require(P >= 0 && Q >= 0, "densities must be >= 0");
    require(Q_minus_init >= 0 && Q_minus_init <= Q, "Q_minus_init must lie in [0, Q]");
    require(Q_minus_init <= P, "Q_minus_init must not exceed P (initial N+ compensates NV-)");
    require(sigma_Nn >= 0 && sigma_Np >= 0 && sigma_NVp >= 0 && sigma_NVn >= 0,
            "cross sections must be >= 0");
    require(v_th >= 0, "v_th must be >= 0");
    require(D_n >= 0 && D_p >= 0, "diffusion coefficients must be >= 0");
    require(omega >= 0, "omega must be >= 0");
    require(beam.power_mW >= 0 && beam.ref_power_mW > 0, "beam power must be >= 0, reference > 0");
    require(beam.width_um > 0, "beam width must be > 0");
    require(rates.theta_N_coef >= 0 && rates.theta_0_coef >= 0 && rates.theta_minus_coef >= 0,
            "rate prefactors must be >= 0");
    require(R_max_um > 0 && thickness_um > 0, "domain radius and thickness must be > 0");
    require(prep_exclusion_radius_um >= 0, "prep exclusion radius must be >= 0");
}

// ---------------------------------------------------------------------------
// Grid

RadialGrid::RadialGrid(std::vector<double> faces, double thickness_um)
    : faces_(std::move(faces)), thickness_(thickness_um) {
    require(faces_.size() >= 2, "grid needs at least one cell");
    require(faces_.front() == 0.0, "grid must start at r = 0");
    require(thickness_ > 0, "grid thickness must be > 0");
    for (std::size_t i = 0; i + 1 < faces_.size(); ++i) {
        require(faces_[i + 1] > faces_[i], "grid faces must be strictly increasing");
        centers_.push_back(0.5 * (faces_[i] + faces_[i + 1]));
        volumes_.push_back(kPi * (faces_[i + 1] * faces_[i + 1] - faces_[i] * faces_[i]) * thickness_);
    }
}

RadialGrid RadialGrid::stretched(double R_max, double dr_min, double dr_max, double fine_radius,
                                 double growth, double thickness_um) {
    require(R_max > 0 && dr_min > 0 && dr_max >= dr_min && growth >= 1.0, "invalid grid spec");
    std::vector<double> f{0.0};
    double dr = dr_min;
    while (f.back() < R_max) {
        double r = f.back();
        if (r >= fine_radius - 1e-12) dr = std::min(dr * growth, dr_max);
        double next = r + dr;
        // Avoid a sliver at the outer boundary.
        if (next > R_max || R_max - next < 0.5 * dr) next = R_max;
        f.push_back(next);
    }
    return RadialGrid(std::move(f), thickness_um);
}

RadialGrid RadialGrid::refined() const {
    std::vector<double> f;
    f.reserve(2 * faces_.size());
    for (std::size_t i = 0; i + 1 < faces_.size(); ++i) {
        f.push_back(faces_[i]);
        f.push_back(0.5 * (faces_[i] + faces_[i + 1]));
    }
    f.push_back(faces_.back());
    return RadialGrid(std::move(f), thickness_);
}

double RadialGrid::gaussian_average(std::size_t i, double s) const {
    const double a = faces_[i], b = faces_[i + 1];
    const double s2 = s * s;
    // integral of exp(-r^2/s^2) 2 pi r dr over [a, b] divided by the annulus area.
    return s2 * (std::exp(-a * a / s2) - std::exp(-b * b / s2)) / (b * b - a * a);
}

RadialGrid default_grid(const MaterialParams& params) {
    return RadialGrid::stretched(params.R_max_um, 0.1, 5.0, 4.0, 1.05, params.thickness_um);
}

// ---------------------------------------------------------------------------
// States and diagnostics

CarrierState initial_state(const MaterialParams& params, const RadialGrid& grid) {
    params.validate();
    const std::size_t n = grid.size();
    CarrierState s{grid, std::vector<double>(n), std::vector<double>(n), std::vector<double>(n, 0.0),
                   std::vector<double>(n, 0.0), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
        const bool prepared = grid.centers()[i] >= params.prep_exclusion_radius_um;
        s.Q_minus[i] = prepared ? params.Q_minus_init : 0.0;
        s.P_plus[i] = s.Q_minus[i];
    }
    return s;
}

double charge_balance(const CarrierState& state) {
    const auto& v = state.grid.volumes();
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        total += v[i] * (state.P_plus[i] - state.Q_minus[i] + state.p[i] - state.n[i]);
    }
    return total;
}

double charge_scale(const CarrierState& state) {
    const auto& v = state.grid.volumes();
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        total += v[i] * (std::abs(state.P_plus[i]) + std::abs(state.Q_minus[i]) + std::abs(state.p[i]) +
                         std::abs(state.n[i]));
    }
    return 0.5 * total;
}

// ---------------------------------------------------------------------------
// Solver

namespace {

std::vector<double> pack(const CarrierState& s) {
    std::vector<double> u(kFields * s.grid.size());
    for (std::size_t i = 0; i < s.grid.size(); ++i) {
        u[kFields * i + kQm] = s.Q_minus[i];
        u[kFields * i + kPp] = s.P_plus[i];
        u[kFields * i + kN] = s.n[i];
        u[kFields * i + kP] = s.p[i];
    }
    return u;
}

void unpack(const std::vector<double>& u, CarrierState& s) {
    for (std::size_t i = 0; i < s.grid.size(); ++i) {
        s.Q_minus[i] = u[kFields * i + kQm];
        s.P_plus[i] = u[kFields * i + kPp];
        s.n[i] = u[kFields * i + kN];
        s.p[i] = u[kFields * i + kP];
    }
}

/// Block-tridiagonal system with 4x4 diagonal blocks and diagonal couplings.
struct BlockTridiag {
    std::vector<Mat4> diag;
    std::vector<Vec4> lower;  ///< coupling of cell i to i-1 (diagonal entries)
    std::vector<Vec4> upper;  ///< coupling of cell i to i+1

    std::vector<Eigen::PartialPivLU<Mat4>> lu;
    std::vector<Mat4> cprime;

    explicit BlockTridiag(std::size_t n) : diag(n), lower(n), upper(n), lu(n), cprime(n) {}

    void factor() {
        const std::size_t n = diag.size();
        for (std::size_t i = 0; i < n; ++i) {
            Mat4 m = diag[i];
            if (i > 0) m -= lower[i].asDiagonal() * cprime[i - 1];
            lu[i].compute(m);
            cprime[i] = lu[i].solve(Mat4(upper[i].asDiagonal()));
        }
    }

    void solve(std::vector<double>& x) const {
        const std::size_t n = diag.size();
        std::vector<Vec4> d(n);
        for (std::size_t i = 0; i < n; ++i) {
            Vec4 b = Eigen::Map<const Vec4>(&x[kFields * i]);
            if (i > 0) b -= lower[i].asDiagonal() * d[i - 1];
            d[i] = lu[i].solve(b);
        }
        for (std::size_t i = n; i-- > 0;) {
            if (i + 1 < n) {
                Vec4 next = Eigen::Map<const Vec4>(&x[kFields * (i + 1)]);
                d[i] -= cprime[i] * next;
            }
            Eigen::Map<Vec4> xi(&x[kFields * i]);
            xi = d[i];
        }
    }
};

}  // namespace

void SolverOptions::validate() const {
    if (!(rtol > 0.0 && atol_trap > 0.0 && atol_carrier > 0.0)) throw DomainError("solver tolerances must be positive");
    if (!(h_min > 0.0 && h_min <= h_init && h_init <= h_max))
        throw DomainError("solver steps need 0 < h_min <= h_init <= h_max");
    if (max_newton < 1 || !(newton_tol > 0.0)) throw DomainError("need max_newton >= 1 and newton_tol > 0");
    if (!(negativity_tol >= 0.0)) throw DomainError("negativity_tol must be >= 0");
    if (max_steps < 1) throw DomainError("max_steps must be >= 1");
}

CarrierSolver::CarrierSolver(MaterialParams params, RadialGrid grid, SolverOptions options)
    : params_(std::move(params)), grid_(std::move(grid)), options_(options) {
    params_.validate();
    options_.validate();
    const std::size_t n = grid_.size();
    rates_.theta_N.resize(n);
    rates_.theta_0.resize(n);
    rates_.theta_minus.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grid_.gaussian_average(i, params_.beam.width_um);
        rates_.theta_N[i] = params_.theta_N0() * g;
        rates_.theta_0[i] = params_.theta_00() * g;
        rates_.theta_minus[i] = params_.theta_minus0() * g;
    }
    const auto& f = grid_.faces();
    const auto& c = grid_.centers();
    trans_.assign(n + 1, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
        trans_[i] = 2.0 * kPi * f[i] * grid_.thickness() / (c[i] - c[i - 1]);
    }
    scale_ = std::max({params_.P, params_.Q, 1.0});
}

void CarrierSolver::eval_rhs(const std::vector<double>& u, std::vector<double>& f) const {
    const std::size_t n = grid_.size();
    f.assign(u.size(), 0.0);
    const double P = params_.P, Q = params_.Q;
    const double kp = params_.kappa_p(), kn = params_.kappa_n();
    const double gp = params_.gamma_p(), gn = params_.gamma_n();
    const double om = params_.omega;
    const auto& vol = grid_.volumes();

    for (std::size_t i = 0; i < n; ++i) {
        const double Qm = u[kFields * i + kQm], Pp = u[kFields * i + kPp];
        const double ne = u[kFields * i + kN], ph = u[kFields * i + kP];
        const double tN = rates_.theta_N[i], t0 = rates_.theta_0[i], tm = rates_.theta_minus[i];
        const double tunnel = om * (Q * (P - Pp) - Qm * P);

        f[kFields * i + kQm] = (t0 + kn * ne) * (Q - Qm) - (tm + kp * ph) * Qm + tunnel;
        f[kFields * i + kPp] = (tN + gp * ph) * (P - Pp) - gn * ne * Pp + tunnel;
        f[kFields * i + kN] = tm * Qm + tN * (P - Pp) - kn * ne * (Q - Qm) - gn * ne * Pp;
        f[kFields * i + kP] = t0 * (Q - Qm) - kp * ph * Qm - gp * ph * (P - Pp);

        for (int k : {kN, kP}) {
            const double D = k == kN ? params_.D_n : params_.D_p;
            double flux = 0.0;
            if (i > 0) flux -= trans_[i] * (u[kFields * i + k] - u[kFields * (i - 1) + k]);
            if (i + 1 < n) flux += trans_[i + 1] * (u[kFields * (i + 1) + k] - u[kFields * i + k]);
            f[kFields * i + k] += D * flux / vol[i];
        }
    }
}

std::vector<double> CarrierSolver::rhs(const CarrierState& state) const {
    std::vector<double> f;
    eval_rhs(pack(state), f);
    return f;
}

bool CarrierSolver::implicit_step(const std::vector<double>& u0, double h, std::vector<double>& u1,
                                  std::vector<double>& err) {
    const std::size_t n = grid_.size();
    const double P = params_.P, Q = params_.Q;
    const double kp = params_.kappa_p(), kn = params_.kappa_n();
    const double gp = params_.gamma_p(), gn = params_.gamma_n();
    const double om = params_.omega;
    const auto& vol = grid_.volumes();

    std::vector<double> weight(u0.size());
    auto refresh_weights = [&]() {
        for (std::size_t j = 0; j < u0.size(); ++j) {
            const int k = static_cast<int>(j % kFields);
            const double atol = (k == kQm || k == kPp) ? options_.atol_trap : options_.atol_carrier;
            weight[j] = atol + options_.rtol * std::max(std::abs(u0[j]), std::abs(u1[j]));
        }
    };

    BlockTridiag sys(n);
    std::vector<double> f, g(u0.size());
    u1 = u0;
    bool converged = false;
    double prev_norm = INFINITY;
    for (int it = 0; it < options_.max_newton; ++it) {
        ++stats_.newton_iterations;
        eval_rhs(u1, f);
        for (std::size_t j = 0; j < u0.size(); ++j) g[j] = -(u1[j] - u0[j] - h * f[j]);

        for (std::size_t i = 0; i < n; ++i) {
            const double Qm = u1[kFields * i + kQm], Pp = u1[kFields * i + kPp];
            const double ne = u1[kFields * i + kN], ph = u1[kFields * i + kP];
            const double tN = rates_.theta_N[i], t0 = rates_.theta_0[i], tm = rates_.theta_minus[i];
            Mat4 J;
            J << -(t0 + kn * ne) - (tm + kp * ph) - om * P, -om * Q, kn * (Q - Qm), -kp * Qm,
                -om * P, -(tN + gp * ph) - gn * ne - om * Q, -gn * Pp, gp * (P - Pp),
                tm + kn * ne, -tN - gn * ne, -kn * (Q - Qm) - gn * Pp, 0.0,
                -t0 - kp * ph, gp * ph, 0.0, -kp * Qm - gp * (P - Pp);
            const double left = i > 0 ? trans_[i] : 0.0;
            const double right = i + 1 < n ? trans_[i + 1] : 0.0;
            J(kN, kN) -= params_.D_n * (left + right) / vol[i];
            J(kP, kP) -= params_.D_p * (left + right) / vol[i];
            sys.diag[i] = Mat4::Identity() - h * J;
            sys.lower[i] = Vec4(0, 0, -h * params_.D_n * left / vol[i], -h * params_.D_p * left / vol[i]);
            sys.upper[i] = Vec4(0, 0, -h * params_.D_n * right / vol[i], -h * params_.D_p * right / vol[i]);
        }
        sys.factor();
        sys.solve(g);

        refresh_weights();
        double norm = 0.0;
        for (std::size_t j = 0; j < u0.size(); ++j) {
            if (!std::isfinite(g[j])) return false;
            u1[j] += g[j];
            norm = std::max(norm, std::abs(g[j]) / weight[j]);
        }
        if (norm < options_.newton_tol) {
            converged = true;
            break;
        }
        if (it >= 3 && norm > 2.0 * prev_norm) return false;
        prev_norm = norm;
    }
    if (!converged) return false;

    // Filtered local error estimate: (I - hJ)^{-1} (u1 - u0 - h f(u0)) / 2.
    std::vector<double> f0;
    eval_rhs(u0, f0);
    err.resize(u0.size());
    for (std::size_t j = 0; j < u0.size(); ++j) err[j] = 0.5 * (u1[j] - u0[j] - h * f0[j]);
    sys.solve(err);
    refresh_weights();
    for (std::size_t j = 0; j < u0.size(); ++j) err[j] /= weight[j];
    return true;
}

void CarrierSolver::advance(CarrierState& state, double duration) {
    if (duration < 0.0) throw DomainError("evolve duration must be >= 0");
    if (state.grid.size() != grid_.size()) throw DomainError("state grid does not match solver grid");
    if (duration == 0.0) return;

    std::vector<double> u = pack(state), u1, err;
    const double t0 = state.time;
    const double t_end = t0 + duration;
    double t = t0;
    double h = h_ > 0.0 ? h_ : options_.h_init;
    const double floor = -options_.negativity_tol * scale_;
    std::uint64_t attempts = 0;

    while (t < t_end) {
        if (++attempts > options_.max_steps) {
            std::ostringstream msg;
            msg << "carrier solver exceeded " << options_.max_steps << " steps at t = " << t << " s (h = " << h
                << " s, target " << t_end << " s)";
            throw NumericalError(msg.str());
        }
        const double remaining = t_end - t;
        const bool last = h >= remaining;
        const double step = std::min({h, remaining, options_.h_max});

        bool ok = implicit_step(u, step, u1, err);
        double enorm = INFINITY;
        if (ok) {
            enorm = 0.0;
            for (double e : err) enorm = std::max(enorm, std::abs(e));
            for (double x : u1) {
                if (x < floor) {
                    ok = false;
                    break;
                }
            }
        }
        if (ok && enorm <= 1.0) {
            t = (last || step == remaining) ? t_end : t + step;
            u.swap(u1);
            ++stats_.steps;
            stats_.last_h = step;
            stats_.max_error_estimate = std::max(stats_.max_error_estimate, enorm);
            const double grow = enorm > 0.0 ? std::min(5.0, 0.9 / std::sqrt(enorm)) : 5.0;
            const double proposed = step * grow;
            // A step cut short by the interval end says nothing about larger steps.
            h = (step < h && grow >= 1.0) ? std::max(h, proposed) : proposed;
        } else {
            ++stats_.rejected;
            const double shrink = ok ? std::max(0.2, 0.9 / std::sqrt(enorm)) : 0.25;
            h = step * shrink;
        }
        if (h < options_.h_min) {
            std::ostringstream msg;
            msg << "carrier solver step-size underflow at t = " << t << " s (h = " << h
                << " s, steps = " << stats_.steps << ", rejected = " << stats_.rejected << ")";
            throw NumericalError(msg.str());
        }
    }
    h_ = h;
    unpack(u, state);
    state.time = t_end;
}

CarrierState evolve(const MaterialParams& params, const CarrierState& state, double duration,
                    const SolverOptions& options) {
    CarrierSolver solver(params, state.grid, options);
    CarrierState out = state;
    solver.advance(out, duration);
    return out;
}

}  // namespace aid
