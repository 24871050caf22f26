#include "aid/stochastics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aid/error.hpp"

namespace aid {

namespace {

void require_probability(double x, const char* name) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw DomainError(std::string(name) + " must lie in [0,1], got " + std::to_string(x));
    }
}

}  // namespace

BernoulliVar::BernoulliVar(double mean) : mean_(mean) {
    require_probability(mean, "Bernoulli mean");
}

PoissonVar::PoissonVar(double mean) : mean_(mean) {
    if (!(mean >= 0.0) || !std::isfinite(mean)) {
        throw DomainError("Poisson mean must be finite and >= 0, got " + std::to_string(mean));
    }
}

ReadoutStatistics product(const ReadoutStatistics& x, const ReadoutStatistics& y) {
    return {x.mean * y.mean,
            x.mean * x.mean * y.variance + y.mean * y.mean * x.variance + x.variance * y.variance};
}

ReadoutStatistics scc_trap_activation(const BernoulliVar& p, const BernoulliVar& q,
                                      const BernoulliVar& r) {
    ReadoutStatistics s = scc_trap_activation_uncorrelated(p, q, r);
    s.variance -= 2.0 * p.variance() * (1.0 - q.mean()) * r.mean();
    if (s.variance < 0.0) s.variance = 0.0;  // roundoff only: exact value is m(1-m) >= 0
    return s;
}

ReadoutStatistics scc_trap_activation_uncorrelated(const BernoulliVar& p, const BernoulliVar& q,
                                                   const BernoulliVar& r) {
    const double pm = p.mean(), qm = q.mean(), rm = r.mean();
    const double vp = p.variance(), vq = q.variance(), vr = r.variance();
    ReadoutStatistics s;
    s.mean = pm * (1.0 - qm) + (1.0 - pm) * rm;
    s.variance = (1.0 - qm) * (1.0 - qm) * vp + pm * pm * vq + rm * rm * vp +
                 (1.0 - pm) * (1.0 - pm) * vr + vp * (vq + vr);
    return s;
}

ReadoutStatistics aid_trap_activation(const BernoulliVar& p, const BernoulliVar& q,
                                      const PoissonVar& w) {
    const double pm = p.mean(), qm = q.mean();
    const double vp = p.variance(), vq = q.variance();
    ReadoutStatistics s;
    s.mean = pm * qm + w.mean();
    s.variance = qm * qm * vp + pm * pm * vq + vp * vq + w.variance();
    return s;
}

ReadoutStatistics photon_compound(const ReadoutStatistics& v, const PoissonVar& k) {
    const double km = k.mean();
    return {v.mean * km, km * (v.mean * v.mean + v.variance) + km * km * v.variance};
}

DiscreteDist truncated_poisson(double mean, double tol, double* tail_bound) {
    if (!(tol > 0.0)) throw DomainError("truncation tolerance must be > 0");
    PoissonVar{mean};  // validates
    DiscreteDist d;
    if (mean == 0.0) {
        d.values = {0.0};
        d.probs = {1.0};
        if (tail_bound) *tail_bound = 0.0;
        return d;
    }
    // P(k) by recurrence in log space to survive large means.
    double logp = -mean;
    for (std::uint64_t k = 0;; ++k) {
        if (k > 0) logp += std::log(mean) - std::log(static_cast<double>(k));
        d.values.push_back(static_cast<double>(k));
        d.probs.push_back(std::exp(logp));
        // Bound the discarded tail sum_{j>k} j^2 P(j). The term ratio
        // t_{j+1}/t_j = (j+1) mean / j^2 decreases in j, so once it drops below
        // one the tail is dominated by a geometric series.
        const double kk = static_cast<double>(k);
        const double ratio = (kk + 2.0) * mean / ((kk + 1.0) * (kk + 1.0));
        if (ratio < 1.0) {
            const double first = (kk + 1.0) * mean * std::exp(logp);
            const double bound = first / (1.0 - ratio);
            if (bound <= tol) {
                if (tail_bound) *tail_bound = bound;
                return d;
            }
        }
    }
}

namespace {

DiscreteDist support_of(const VarDescriptor& var, double tol, double& tail) {
    return std::visit(
        [&](const auto& v) -> DiscreteDist {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, BernoulliVar>) {
                return {{0.0, 1.0}, {1.0 - v.mean(), v.mean()}};
            } else if constexpr (std::is_same_v<T, PoissonVar>) {
                double b = 0.0;
                DiscreteDist d = truncated_poisson(v.mean(), tol, &b);
                tail += b;
                return d;
            } else {
                if (v.values.size() != v.probs.size() || v.values.empty()) {
                    throw DomainError("discrete distribution needs matching, nonempty values/probs");
                }
                return v;
            }
        },
        var);
}

double evaluate(CompoundForm form, const std::vector<double>& x) {
    switch (form) {
        case CompoundForm::SccV: return x[0] * (1.0 - x[1]) + (1.0 - x[0]) * x[2];
        case CompoundForm::AidV: return x[0] * x[1] + x[2];
        case CompoundForm::PhotonCompound: return x[0] * x[1];
    }
    return 0.0;
}

std::size_t arity(CompoundForm form) {
    return form == CompoundForm::PhotonCompound ? 2 : 3;
}

}  // namespace

EnumerationResult enumerate_compound_variance(const std::vector<VarDescriptor>& vars,
                                              CompoundForm form, double truncation_tol) {
    if (!(truncation_tol > 0.0)) throw DomainError("truncation tolerance must be > 0");
    if (vars.size() != arity(form)) throw DomainError("wrong number of variables for compound form");

    EnumerationResult out;
    std::vector<DiscreteDist> supports;
    for (const auto& v : vars) supports.push_back(support_of(v, truncation_tol, out.truncation_bound));

    // Odometer over the cartesian product of supports; two passes so the
    // variance is accumulated around the exact mean.
    auto for_each_outcome = [&](auto&& fn) {
        std::vector<std::size_t> idx(supports.size(), 0);
        std::vector<double> x(supports.size());
        for (;;) {
            double prob = 1.0;
            for (std::size_t i = 0; i < supports.size(); ++i) {
                x[i] = supports[i].values[idx[i]];
                prob *= supports[i].probs[idx[i]];
            }
            fn(prob, evaluate(form, x));
            std::size_t i = 0;
            for (; i < supports.size(); ++i) {
                if (++idx[i] < supports[i].values.size()) break;
                idx[i] = 0;
            }
            if (i == supports.size()) return;
        }
    };
    double m1 = 0.0;
    for_each_outcome([&](double prob, double val) {
        m1 += prob * val;
        ++out.support_size;
    });
    double m2 = 0.0;
    for_each_outcome([&](double prob, double val) { m2 += prob * (val - m1) * (val - m1); });
    out.stats.mean = m1;
    out.stats.variance = m2;
    return out;
}

bool sample(const BernoulliVar& var, RandomStream& rng) {
    return rng.bernoulli(var.mean());
}

std::uint64_t sample(const PoissonVar& var, RandomStream& rng) {
    return rng.poisson(var.mean());
}

}  // namespace aid
