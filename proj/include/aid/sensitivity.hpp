#pragma once

#include <cstdint>

#include "aid/stochastics.hpp"

namespace aid {

/// Per-cycle time budget (seconds).
///
/// SOS consumes t_i, t_r, t_e. SCC reuses t_i and t_r as the qubit charge
/// initialization and readout times and adds t_scc. AID consumes t_scc, t_e and
/// the ancilla-ensemble overhead t_ia + t_ra, amortized over n repeats.
struct TimingBudget {
    double t_i = 1e-6;
    double t_r = 300e-9;
    double t_e = 15e-6;
    double t_scc = 80e-9;
    double t_ia = 5e-3;
    double t_ra = 5e-3;
    std::uint64_t n = 10000;

    void validate() const;

    double t_sos() const { return t_i + t_r + t_e; }
    double t_scc_total() const { return t_i + t_r + t_scc + t_e; }
    double t_aid() const { return t_scc + t_e + (t_ia + t_ra) / static_cast<double>(n); }

    /// Copy with every duration multiplied by `factor`.
    TimingBudget scaled(double factor) const;
};

/// Qubit and ancilla readout parameters. Defaults are the single-NV values
/// used throughout the Monte Carlo protocols.
struct QubitReadoutParams {
    double k0_mean = 0.075;     ///< photons per SOS readout, |0>
    double contrast_sos = 0.3;  ///< mu: <k1> = (1 - mu) <k0>
    double q0_mean = 0.8;
    double q1_mean = 0.5;
    double p_mean = 1.0;
    double r_mean = 0.0;
    double w_mean = 0.0;
    double lambda_mean = 1.0;
    double ka_mean = 22.0;

    double k1_mean() const { return (1.0 - contrast_sos) * k0_mean; }
    void validate() const;
};

double snr_sos(const QubitReadoutParams& params, std::uint64_t n);

struct SosSensitivity {
    double exact;   ///< sqrt(t (k0 + k1)) / |k0 - k1|
    double approx;  ///< sqrt(2 t) / (mu sqrt(k0)), valid for small mu
};

SosSensitivity eta_sos(const QubitReadoutParams& params, const TimingBudget& timing);

/// SCC readout of the qubit itself; <k> is taken from k0_mean.
double eta_scc(const QubitReadoutParams& params, const TimingBudget& timing);

/// Full AID sensitivity including capture inefficiency and background carriers.
double eta_aid(const QubitReadoutParams& params, const TimingBudget& timing);

/// Bright-ancilla limit: depends on the SCC probabilities only.
double eta_aid_limit_high_ka(const QubitReadoutParams& params, const TimingBudget& timing);

/// Dim-ancilla limit: photon shot noise dominates.
double eta_aid_limit_low_ka(const QubitReadoutParams& params, const TimingBudget& timing);

/// Poor capture and many background carriers.
double eta_aid_background_limit(const QubitReadoutParams& params, const TimingBudget& timing);

/// Variance of the AID signal summed over both spin projections, per repeat
/// (sum_j lambda [Var(v_j k_a) + k_a^2 v_j^2 (1 - lambda)]).
double aid_signal_variance(const QubitReadoutParams& params);

struct AidVsSos {
    bool aid_wins;
    double lhs;    ///< mu^2 <k0> (1 + (t_ia + t_ra) / (n t_c))
    double rhs;    ///< 2 |q0 - q1|^2 / (q0(1-q0) + q1(1-q1))
    double ratio;  ///< lhs / rhs; equals (eta_AID / eta_SOS)^2 in the bright-ancilla, small-mu regime
};

/// Compares the bright-ancilla AID sensitivity with the small-contrast SOS
/// sensitivity. With t_c = t_i + t_r + t_e:
///
///   eta_SOS^2 = 2 t_c / (mu^2 k0)
///   eta_AID^2 = t_c (1 + o) (q0(1-q0) + q1(1-q1)) / (q0 - q1)^2,  o = (t_ia + t_ra)/(n t_c)
///
/// so eta_AID < eta_SOS  <=>  mu^2 k0 (1 + o) < 2 (q0 - q1)^2 / (q0(1-q0) + q1(1-q1)).
AidVsSos aid_beats_sos(const QubitReadoutParams& params, const TimingBudget& timing);

}  // namespace aid
