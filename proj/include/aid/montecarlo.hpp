#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "aid/carrier_dynamics.hpp"
#include "aid/sensitivity.hpp"

namespace aid {

enum class ResponseKind { OdmrLorentzian, Rabi, HahnEcho };

/// Spin-flip probability |u1|^2 as a function of the protocol point.
///
/// ODMR points are MW frequencies (Hz): L(f) = 1 / (1 + x^2), x = 2 (f - f0) / fwhm.
/// RABI points are pulse durations (s): sin^2(pi f_R t) exp(-t / decay).
/// ECHO points are half echo times tau (s): (1 + exp(-(2 tau / decay)^3)) / 2.
/// The Rabi and echo envelopes are phenomenological shapes.
struct SpinResponse {
    ResponseKind kind = ResponseKind::OdmrLorentzian;
    double center_freq = 2.87e9;
    double fwhm = 7e6;
    double rabi_freq = 5e6;
    double decay_time = 2e-6;
};

double spin_response_value(const SpinResponse& response, double point);

/// Capture probability per repeat. Either a constant or piecewise constant in
/// the 1-based repeat index, taken from an activation curve.
class LambdaSchedule {
public:
    LambdaSchedule(double constant = 1.0);
    /// lambda[k] applies to repeats (ends[k-1], ends[k]]; the last value
    /// extends to all later repeats.
    LambdaSchedule(std::vector<std::uint64_t> ends, std::vector<double> lambda);
    static LambdaSchedule from_curve(const ActivationCurve& curve);

    double at(std::uint64_t repeat) const;
    bool is_constant() const { return ends_.empty(); }

    /// Calls fn(first, last, lambda) for maximal runs of constant lambda covering [1, n].
    template <class Fn>
    void for_each_segment(std::uint64_t n, Fn&& fn) const {
        if (ends_.empty()) {
            fn(std::uint64_t{1}, n, constant_);
            return;
        }
        std::uint64_t first = 1;
        for (std::size_t k = 0; k < ends_.size() && first <= n; ++k) {
            const std::uint64_t last = std::min(ends_[k], n);
            if (last >= first) fn(first, last, lambda_[k]);
            first = last + 1;
        }
        if (first <= n) fn(first, n, lambda_.back());
    }

    const std::vector<std::uint64_t>& ends() const { return ends_; }
    const std::vector<double>& values() const { return lambda_; }

private:
    double constant_ = 1.0;
    std::vector<std::uint64_t> ends_;
    std::vector<double> lambda_;
};

/// Per-repeat draws follow the protocol literally. Aggregated draws replace
/// each run of repeats with constant probabilities by the equivalent binomial
/// and Poisson totals (same distribution, cost independent of n).
enum class SamplingMode { PerRepeat, Aggregated };

struct ExperimentConfig {
    QubitReadoutParams qubit;
    TimingBudget timing;
    SpinResponse response;
    std::vector<double> sweep;
    std::uint64_t n = 10000;
    LambdaSchedule lambda_schedule{1.0};
    std::uint32_t background_defects = 0;
    double background_ionization = 0.8;   ///< <q>_w per defect in the spot
    double contrast_aid = 0.36;           ///< <q>(point) = q0 (1 - C |u1|^2)
    std::uint64_t seed = 1;
    unsigned threads = 1;
    SamplingMode sampling = SamplingMode::PerRepeat;

    void validate() const;
};

struct Spectrum {
    std::vector<double> points;
    std::vector<std::uint64_t> counts;
    std::uint64_t n = 0;
    std::uint64_t seed = 0;
};

/// SOS mean photons per repeat at a protocol point.
double sos_mean_photons(const ExperimentConfig& config, double spin_flip);
/// AID ionization probability per repeat at a protocol point.
double aid_ionization(const ExperimentConfig& config, double spin_flip);

Spectrum simulate_sos(const ExperimentConfig& config);
Spectrum simulate_aid(const ExperimentConfig& config);

/// One SOS / AID run of config.n repeats with spin-flip probability `spin_flip`
/// drawn from `rng`; returns the summed photon count.
std::uint64_t sos_run(const ExperimentConfig& config, double spin_flip, RandomStream& rng);
std::uint64_t aid_run(const ExperimentConfig& config, double spin_flip, RandomStream& rng);

enum class Protocol { Sos, Aid };

/// `runs` independent run sums with the MW on resonance (|u1|^2 = 1) and off
/// (|u1|^2 = 0). Streams depend only on (seed, tag, run index, on/off), so
/// different configurations sharing a seed use common random numbers.
struct RunPairs {
    std::vector<double> on;
    std::vector<double> off;
};
RunPairs simulate_run_pairs(const ExperimentConfig& config, Protocol protocol, std::size_t runs,
                            std::uint64_t tag = 0);

struct SnrEstimate {
    double snr = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t runs = 0;
};

/// SNR = |mean_on - mean_off| / sqrt(var_on + var_off) over run-level sums,
/// with a percentile bootstrap confidence interval.
SnrEstimate estimate_snr(const std::vector<double>& on_runs, const std::vector<double>& off_runs,
                         std::size_t resamples = 1000, double confidence = 0.95, std::uint64_t seed = 0);

struct CurvePoint {
    std::uint64_t n = 0;
    double t_aid = 0.0;   ///< average time per repeat (s)
    SnrEstimate snr;
    double eta = 0.0;     ///< sqrt(n t_aid) / SNR (sqrt(s))
    bool valid = false;
};

/// Monte Carlo AID sensitivity versus repeat count.
std::vector<CurvePoint> sensitivity_curve(const ExperimentConfig& config,
                                          const std::vector<std::uint64_t>& n_values, std::size_t runs);

struct LorentzianFit {
    double center = 0.0;
    double fwhm = 0.0;
    double amplitude = 0.0;  ///< negative for a dip
    double baseline = 0.0;
    int iterations = 0;
};

/// Least-squares fit of baseline + amplitude / (1 + (2 (x - center) / fwhm)^2)
/// (Levenberg-Marquardt). Throws NumericalError if it does not converge.
LorentzianFit fit_lorentzian(const std::vector<double>& x, const std::vector<double>& y);

/// Index of the smallest valid eta, if any.
std::optional<std::size_t> curve_optimum(const std::vector<CurvePoint>& curve);

}  // namespace aid
