#include "aid/sensitivity.hpp"

#include <cmath>
#include <string>

#include "aid/error.hpp"

namespace aid {

namespace {

void require_prob(double x, const char* name) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw DomainError(std::string(name) + " must lie in [0,1], got " + std::to_string(x));
    }
}

void require_nonneg(double x, const char* name) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
        throw DomainError(std::string(name) + " must be finite and >= 0, got " + std::to_string(x));
    }
}

double spin_contrast(const QubitReadoutParams& p) {
    const double dq = std::abs(p.q0_mean - p.q1_mean);
    if (dq == 0.0) throw DomainError("zero spin contrast: q0 == q1");
    return dq;
}

}  // namespace

void TimingBudget::validate() const {
    require_nonneg(t_i, "timing.t_i");
    require_nonneg(t_r, "timing.t_r");
    require_nonneg(t_e, "timing.t_e");
    require_nonneg(t_scc, "timing.t_scc");
    require_nonneg(t_ia, "timing.t_ia");
    require_nonneg(t_ra, "timing.t_ra");
    if (n < 1) throw DomainError("timing.n must be >= 1");
}

TimingBudget TimingBudget::scaled(double factor) const {
    TimingBudget t = *this;
    t.t_i *= factor;
    t.t_r *= factor;
    t.t_e *= factor;
    t.t_scc *= factor;
    t.t_ia *= factor;
    t.t_ra *= factor;
    return t;
}

void QubitReadoutParams::validate() const {
    require_nonneg(k0_mean, "qubit.k0_mean");
    require_prob(contrast_sos, "qubit.contrast_sos");
    require_prob(q0_mean, "qubit.q0_mean");
    require_prob(q1_mean, "qubit.q1_mean");
    require_prob(p_mean, "qubit.p_mean");
    require_prob(r_mean, "qubit.r_mean");
    require_nonneg(w_mean, "qubit.w_mean");
    require_prob(lambda_mean, "qubit.lambda_mean");
    require_nonneg(ka_mean, "qubit.ka_mean");
}

double snr_sos(const QubitReadoutParams& params, std::uint64_t n) {
    params.validate();
    if (params.k0_mean == 0.0) throw DomainError("SOS SNR undefined for a dark qubit (k0 = 0)");
    const double k0 = params.k0_mean, k1 = params.k1_mean();
    return std::sqrt(static_cast<double>(n)) * std::abs(k0 - k1) / std::sqrt(k0 + k1);
}

SosSensitivity eta_sos(const QubitReadoutParams& params, const TimingBudget& timing) {
    params.validate();
    timing.validate();
    if (params.k0_mean == 0.0) throw DomainError("SOS sensitivity undefined for k0 = 0");
    if (params.contrast_sos == 0.0) throw DomainError("SOS sensitivity undefined for zero contrast");
    const double k0 = params.k0_mean, k1 = params.k1_mean();
    const double t = timing.t_sos();
    return {std::sqrt(t * (k0 + k1)) / std::abs(k0 - k1),
            std::sqrt(2.0) / (params.contrast_sos * std::sqrt(k0)) * std::sqrt(t)};
}

double eta_scc(const QubitReadoutParams& params, const TimingBudget& timing) {
    params.validate();
    timing.validate();
    const double dq = spin_contrast(params);
    if (params.p_mean == 0.0) throw DomainError("SCC sensitivity undefined for p = 0");
    if (params.k0_mean == 0.0) throw DomainError("SCC sensitivity undefined for k = 0");

    const BernoulliVar p(params.p_mean), r(params.r_mean);
    const auto v0 = scc_trap_activation(p, BernoulliVar(params.q0_mean), r);
    const auto v1 = scc_trap_activation(p, BernoulliVar(params.q1_mean), r);
    const double k = params.k0_mean;
    const double var = (k * k + k) * (v0.variance + v1.variance) + k * (v0.mean * v0.mean + v1.mean * v1.mean);
    return std::sqrt(timing.t_scc_total()) * std::sqrt(var) / (params.p_mean * dq * k);
}

double aid_signal_variance(const QubitReadoutParams& params) {
    const BernoulliVar p(params.p_mean);
    const PoissonVar w(params.w_mean), ka(params.ka_mean);
    const double lambda = params.lambda_mean;
    double sum = 0.0;
    for (double q : {params.q0_mean, params.q1_mean}) {
        const auto v = aid_trap_activation(p, BernoulliVar(q), w);
        const auto vk = photon_compound(v, ka);
        sum += vk.variance + ka.mean() * ka.mean() * v.mean * v.mean * (1.0 - lambda);
    }
    return lambda * sum;
}

double eta_aid(const QubitReadoutParams& params, const TimingBudget& timing) {
    params.validate();
    timing.validate();
    const double dq = spin_contrast(params);
    if (params.lambda_mean == 0.0) throw DomainError("no carrier capture: lambda = 0");
    if (params.p_mean == 0.0) throw DomainError("AID sensitivity undefined for p = 0");
    if (params.ka_mean == 0.0) throw DomainError("AID sensitivity undefined for k_a = 0");

    const double lambda = params.lambda_mean;
    const double signal = lambda * params.p_mean * dq * params.ka_mean;
    return std::sqrt(timing.t_aid()) * std::sqrt(aid_signal_variance(params)) / signal;
}

double eta_aid_limit_high_ka(const QubitReadoutParams& params, const TimingBudget& timing) {
    params.validate();
    timing.validate();
    const double dq = spin_contrast(params);
    const double q0 = params.q0_mean, q1 = params.q1_mean;
    return std::sqrt(timing.t_aid()) * std::sqrt(q0 * (1.0 - q0) + q1 * (1.0 - q1)) / dq;
}

double eta_aid_limit_low_ka(const QubitReadoutParams& params, const TimingBudget& timing) {
    params.validate();
    timing.validate();
    const double dq = spin_contrast(params);
    if (params.ka_mean == 0.0) throw DomainError("k_a = 0: no ancilla photons");
    const double q0 = params.q0_mean, q1 = params.q1_mean;
    return std::sqrt(timing.t_aid()) * std::sqrt(q0 * q0 + q1 * q1) / (dq * std::sqrt(params.ka_mean));
}

double eta_aid_background_limit(const QubitReadoutParams& params, const TimingBudget& timing) {
    params.validate();
    timing.validate();
    const double dq = spin_contrast(params);
    if (params.lambda_mean == 0.0) throw DomainError("no carrier capture: lambda = 0");
    if (params.p_mean == 0.0) throw DomainError("p = 0");
    return std::sqrt(2.0 * timing.t_aid()) * params.w_mean /
           (std::sqrt(params.lambda_mean) * params.p_mean * dq);
}

AidVsSos aid_beats_sos(const QubitReadoutParams& params, const TimingBudget& timing) {
    params.validate();
    timing.validate();
    const double q0 = params.q0_mean, q1 = params.q1_mean;
    const double tc = timing.t_i + timing.t_r + timing.t_e;
    const double overhead = tc > 0.0 ? (timing.t_ia + timing.t_ra) / (static_cast<double>(timing.n) * tc) : 0.0;
    const double mu = params.contrast_sos;

    AidVsSos out{};
    out.lhs = mu * mu * params.k0_mean * (1.0 + overhead);
    const double spread = q0 * (1.0 - q0) + q1 * (1.0 - q1);
    const double dq2 = (q0 - q1) * (q0 - q1);
    if (spread == 0.0) {
        // Perfect single-shot SCC: AID variance vanishes unless there is no contrast at all.
        out.rhs = dq2 > 0.0 ? INFINITY : 0.0;
    } else {
        out.rhs = 2.0 * dq2 / spread;
    }
    out.ratio = out.rhs > 0.0 ? out.lhs / out.rhs : INFINITY;
    out.aid_wins = out.lhs < out.rhs;
    return out;
}

}  // namespace aid
