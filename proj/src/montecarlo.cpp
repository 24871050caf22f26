#include "aid/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "aid/error.hpp"
#include "aid/parallel.hpp"

namespace aid {

double spin_response_value(const SpinResponse& response, double point) {
    switch (response.kind) {
        case ResponseKind::OdmrLorentzian: {
            if (!(response.fwhm > 0.0)) throw DomainError("ODMR linewidth must be positive");
            const double x = 2.0 * (point - response.center_freq) / response.fwhm;
            return 1.0 / (1.0 + x * x);
        }
        case ResponseKind::Rabi: {
            if (point < 0.0) throw DomainError("negative pulse duration");
            if (!(response.decay_time > 0.0)) throw DomainError("decay time must be positive");
            const double s = std::sin(std::numbers::pi * response.rabi_freq * point);
            return s * s * std::exp(-point / response.decay_time);
        }
        case ResponseKind::HahnEcho: {
            if (point < 0.0) throw DomainError("negative echo delay");
            if (!(response.decay_time > 0.0)) throw DomainError("decay time must be positive");
            const double x = 2.0 * point / response.decay_time;
            return 0.5 * (1.0 + std::exp(-x * x * x));
        }
    }
    throw DomainError("unknown response kind");
}

// ---------------------------------------------------------------------------

LambdaSchedule::LambdaSchedule(double constant) : constant_(constant) {
    if (!(constant >= 0.0 && constant <= 1.0)) throw DomainError("lambda outside [0, 1]");
}

LambdaSchedule::LambdaSchedule(std::vector<std::uint64_t> ends, std::vector<double> lambda)
    : ends_(std::move(ends)), lambda_(std::move(lambda)) {
    if (ends_.empty() || ends_.size() != lambda_.size())
        throw DomainError("lambda schedule needs matching, nonempty ends and values");
    for (std::size_t k = 0; k < ends_.size(); ++k) {
        if (!(lambda_[k] >= 0.0 && lambda_[k] <= 1.0)) throw DomainError("lambda outside [0, 1]");
        if (ends_[k] == 0 || (k > 0 && ends_[k] <= ends_[k - 1]))
            throw DomainError("lambda schedule ends must be positive and increasing");
    }
}

LambdaSchedule LambdaSchedule::from_curve(const ActivationCurve& curve) {
    std::vector<std::uint64_t> ends;
    std::vector<double> values;
    for (std::size_t k = 0; k < curve.n_cycles.size(); ++k) {
        if (curve.n_cycles[k] == 0) continue;
        if (k >= curve.lambda_eff.size()) throw DomainError("activation curve has no lambda_eff");
        ends.push_back(curve.n_cycles[k]);
        values.push_back(std::clamp(curve.lambda_eff[k], 0.0, 1.0));
    }
    return LambdaSchedule(std::move(ends), std::move(values));
}

double LambdaSchedule::at(std::uint64_t repeat) const {
    if (ends_.empty()) return constant_;
    auto it = std::lower_bound(ends_.begin(), ends_.end(), repeat);
    if (it == ends_.end()) return lambda_.back();
    return lambda_[static_cast<std::size_t>(it - ends_.begin())];
}

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
    qubit.validate();
    timing.validate();
    if (n < 1) throw DomainError("n must be at least 1");
    if (!(background_ionization >= 0.0 && background_ionization <= 1.0))
        throw DomainError("background ionization probability outside [0, 1]");
    if (!(contrast_aid >= 0.0 && contrast_aid <= 1.0)) throw DomainError("AID contrast outside [0, 1]");
}

double sos_mean_photons(const ExperimentConfig& config, double spin_flip) {
    return (1.0 - spin_flip) * config.qubit.k0_mean + spin_flip * config.qubit.k1_mean();
}

double aid_ionization(const ExperimentConfig& config, double spin_flip) {
    return config.qubit.q0_mean * (1.0 - config.contrast_aid * spin_flip);
}

std::uint64_t sos_run(const ExperimentConfig& config, double spin_flip, RandomStream& rng) {
    const double mean = sos_mean_photons(config, spin_flip);
    std::uint64_t total = 0;
    for (std::uint64_t i = 0; i < config.n; ++i) total += rng.poisson(mean);
    return total;
}

std::uint64_t aid_run(const ExperimentConfig& config, double spin_flip, RandomStream& rng) {
    const double q = aid_ionization(config, spin_flip);
    const double p = config.qubit.p_mean;
    const double ka = config.qubit.ka_mean;
    const double qw = config.background_ionization;
    const std::uint32_t nw = config.background_defects;

    std::uint64_t activated = 0;
    if (config.sampling == SamplingMode::PerRepeat) {
        std::uint64_t photons = 0;
        for (std::uint64_t i = 1; i <= config.n; ++i) {
            const double lambda = config.lambda_schedule.at(i);
            std::uint64_t captured = 0;
            if (rng.bernoulli(p) && rng.bernoulli(q) && rng.bernoulli(lambda)) ++captured;
            for (std::uint32_t b = 0; b < nw; ++b) {
                if (rng.bernoulli(qw) && rng.bernoulli(lambda)) ++captured;
            }
            activated += captured;
        }
        for (std::uint64_t a = 0; a < activated; ++a) photons += rng.poisson(ka);
        return photons;
    }

    config.lambda_schedule.for_each_segment(config.n, [&](std::uint64_t first, std::uint64_t last, double lambda) {
        const std::uint64_t m = last - first + 1;
        activated += rng.binomial(m, p * q * lambda);
        if (nw > 0) activated += rng.binomial(m * nw, qw * lambda);
    });
    return rng.poisson(ka * static_cast<double>(activated));
}

namespace {

Spectrum simulate(const ExperimentConfig& config, Protocol protocol) {
    config.validate();
    if (config.sweep.empty()) throw DomainError("sweep must not be empty");
    Spectrum out;
    out.points = config.sweep;
    out.counts.assign(config.sweep.size(), 0);
    out.n = config.n;
    out.seed = config.seed;
    std::vector<double> flips(config.sweep.size());
    for (std::size_t i = 0; i < flips.size(); ++i) flips[i] = spin_response_value(config.response, config.sweep[i]);

    const char* module = protocol == Protocol::Sos ? "spectrum-sos" : "spectrum-aid";
    parallel_for(config.sweep.size(), config.threads, [&](std::size_t i) {
        RandomStream rng = RandomStream::derive(config.seed, module, i);
        out.counts[i] = protocol == Protocol::Sos ? sos_run(config, flips[i], rng) : aid_run(config, flips[i], rng);
    });
    return out;
}

}  // namespace

Spectrum simulate_sos(const ExperimentConfig& config) {
    if (!(config.qubit.k0_mean > 0.0)) throw DomainError("k0_mean must be positive");
    return simulate(config, Protocol::Sos);
}

Spectrum simulate_aid(const ExperimentConfig& config) { return simulate(config, Protocol::Aid); }

RunPairs simulate_run_pairs(const ExperimentConfig& config, Protocol protocol, std::size_t runs, std::uint64_t tag) {
    config.validate();
    RunPairs out;
    out.on.assign(runs, 0.0);
    out.off.assign(runs, 0.0);
    const std::string module = std::string(protocol == Protocol::Sos ? "runs-sos-" : "runs-aid-") + std::to_string(tag);
    parallel_for(2 * runs, config.threads, [&](std::size_t task) {
        const bool on = task % 2 == 0;
        const std::size_t run = task / 2;
        RandomStream rng = RandomStream::derive(config.seed, module, task);
        const double flip = on ? 1.0 : 0.0;
        const auto total = protocol == Protocol::Sos ? sos_run(config, flip, rng) : aid_run(config, flip, rng);
        (on ? out.on : out.off)[run] = static_cast<double>(total);
    });
    return out;
}

namespace {

struct Moments {
    double mean;
    double var;
};

Moments moments(const std::vector<double>& x, const std::vector<std::size_t>* idx = nullptr) {
    const std::size_t m = idx ? idx->size() : x.size();
    auto at = [&](std::size_t k) { return idx ? x[(*idx)[k]] : x[k]; };
    double mean = 0.0;
    for (std::size_t k = 0; k < m; ++k) mean += at(k);
    mean /= static_cast<double>(m);
    double ss = 0.0;
    for (std::size_t k = 0; k < m; ++k) ss += (at(k) - mean) * (at(k) - mean);
    return {mean, ss / static_cast<double>(m - 1)};
}

double snr_of(const Moments& on, const Moments& off) {
    const double denom = std::sqrt(on.var + off.var);
    const double diff = std::abs(on.mean - off.mean);
    if (denom == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return diff / denom;
}

double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

SnrEstimate estimate_snr(const std::vector<double>& on_runs, const std::vector<double>& off_runs,
                         std::size_t resamples, double confidence, std::uint64_t seed) {
    if (on_runs.size() < 2 || off_runs.size() < 2) throw DomainError("SNR needs at least 2 runs per data set");
    if (!(confidence > 0.0 && confidence < 1.0)) throw DomainError("confidence must be in (0, 1)");
    SnrEstimate est;
    est.runs = std::min(on_runs.size(), off_runs.size());
    est.snr = snr_of(moments(on_runs), moments(off_runs));
    if (resamples == 0) {
        est.ci_low = est.ci_high = est.snr;
        return est;
    }
    RandomStream rng = RandomStream::derive(seed, "bootstrap", 0);
    std::vector<double> boot(resamples);
    std::vector<std::size_t> ion(on_runs.size()), ioff(off_runs.size());
    for (std::size_t b = 0; b < resamples; ++b) {
        for (auto& i : ion) i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(on_runs.size()));
        for (auto& i : ioff) i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(off_runs.size()));
        boot[b] = snr_of(moments(on_runs, &ion), moments(off_runs, &ioff));
    }
    const double alpha = 0.5 * (1.0 - confidence);
    est.ci_low = percentile(boot, alpha);
    est.ci_high = percentile(boot, 1.0 - alpha);
    return est;
}

std::vector<CurvePoint> sensitivity_curve(const ExperimentConfig& config, const std::vector<std::uint64_t>& n_values,
                                          std::size_t runs) {
    std::vector<CurvePoint> curve;
    curve.reserve(n_values.size());
    for (std::size_t k = 0; k < n_values.size(); ++k) {
        ExperimentConfig c = config;
        c.n = n_values[k];
        c.timing.n = n_values[k];
        const RunPairs data = simulate_run_pairs(c, Protocol::Aid, runs, k);
        CurvePoint pt;
        pt.n = c.n;
        pt.t_aid = c.timing.t_aid();
        pt.snr = estimate_snr(data.on, data.off, 1000, 0.95, config.seed ^ mix64(k + 1));
        pt.valid = pt.snr.snr > 0.0 && std::isfinite(pt.snr.snr);
        pt.eta = pt.valid ? std::sqrt(static_cast<double>(pt.n) * pt.t_aid) / pt.snr.snr
                          : std::numeric_limits<double>::quiet_NaN();
        curve.push_back(pt);
    }
    return curve;
}

std::optional<std::size_t> curve_optimum(const std::vector<CurvePoint>& curve) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (!curve[i].valid) continue;
        if (!best || curve[i].eta < curve[*best].eta) best = i;
    }
    return best;
}

}  // namespace aid

namespace aid {

LorentzianFit fit_lorentzian(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t m = x.size();
    if (m < 5 || y.size() != m) throw DomainError("Lorentzian fit needs at least 5 matching points");

    // Start: baseline from the two ends, extremum as center, width from the
    // points beyond half the extremum.
    const double base0 = 0.5 * (y.front() + y.back());
    std::size_t ext = 0;
    for (std::size_t i = 1; i < m; ++i) {
        if (std::abs(y[i] - base0) > std::abs(y[ext] - base0)) ext = i;
    }
    const double amp0 = y[ext] - base0;
    double lo = x[ext], hi = x[ext];
    for (std::size_t i = 0; i < m; ++i) {
        if (std::abs(y[i] - base0) >= 0.5 * std::abs(amp0)) {
            lo = std::min(lo, x[i]);
            hi = std::max(hi, x[i]);
        }
    }
    const double span = *std::max_element(x.begin(), x.end()) - *std::min_element(x.begin(), x.end());
    Eigen::Vector4d th(x[ext], std::max(hi - lo, span / static_cast<double>(m)), amp0, base0);

    auto residuals = [&](const Eigen::Vector4d& t, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
        r.resize(static_cast<Eigen::Index>(m));
        if (J) J->resize(static_cast<Eigen::Index>(m), 4);
        for (std::size_t i = 0; i < m; ++i) {
            const double u = 2.0 * (x[i] - t[0]) / t[1];
            const double L = 1.0 / (1.0 + u * u);
            const auto k = static_cast<Eigen::Index>(i);
            r[k] = t[3] + t[2] * L - y[i];
            if (J) {
                const double dLdu = -2.0 * u * L * L;
                (*J)(k, 0) = t[2] * dLdu * (-2.0 / t[1]);
                (*J)(k, 1) = t[2] * dLdu * (-u / t[1]);
                (*J)(k, 2) = L;
                (*J)(k, 3) = 1.0;
            }
        }
    };

    Eigen::VectorXd r, r_new;
    Eigen::MatrixXd J;
    residuals(th, r, &J);
    double cost = r.squaredNorm();
    double mu = 1e-3;
    for (int it = 1; it <= 200; ++it) {
        const Eigen::Matrix4d A = J.transpose() * J;
        const Eigen::Vector4d g = J.transpose() * r;
        Eigen::Matrix4d D = A;
        for (int k = 0; k < 4; ++k) D(k, k) += mu * std::max(A(k, k), 1e-300);
        const Eigen::Vector4d step = D.ldlt().solve(-g);
        Eigen::Vector4d trial = th + step;
        if (trial[1] <= 0.0) trial[1] = 0.5 * th[1];
        residuals(trial, r_new, nullptr);
        const double cost_new = r_new.squaredNorm();
        if (cost_new < cost) {
            const bool done = std::abs(cost - cost_new) <= 1e-12 * cost ||
                              step.cwiseAbs().maxCoeff() <= 1e-12 * (th.cwiseAbs().maxCoeff() + 1.0);
            th = trial;
            cost = cost_new;
            residuals(th, r, &J);
            mu = std::max(mu / 3.0, 1e-12);
            if (done) return {th[0], th[1], th[2], th[3], it};
        } else {
            mu *= 4.0;
            if (mu > 1e12) return {th[0], th[1], th[2], th[3], it};
        }
    }
    throw NumericalError("Lorentzian fit did not converge");
}

}  // namespace aid
