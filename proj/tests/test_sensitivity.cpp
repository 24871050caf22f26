#include <doctest.h>

#include <cmath>

#include "aid/error.hpp"
#include "aid/sensitivity.hpp"

using namespace aid;

namespace {

TimingBudget unit_time() {
    // t_sos = t_aid = t_scc_total = 1 s with no ensemble overhead.
    TimingBudget t;
    t.t_i = 0.0;
    t.t_r = 0.0;
    t.t_scc = 0.0;
    t.t_e = 1.0;
    t.t_ia = 0.0;
    t.t_ra = 0.0;
    t.n = 1;
    return t;
}

QubitReadoutParams ideal_aid() {
    QubitReadoutParams q;
    q.lambda_mean = 1.0;
    q.p_mean = 1.0;
    q.w_mean = 0.0;
    return q;
}

// Independent oracle for the AID sensitivity: per-repeat moments of the ancilla
// photon count summed over the two spin projections, written from first principles.
double oracle_eta_aid(double p, double q0, double q1, double w, double lambda, double ka, double t) {
    double var = 0.0;
    for (double q : {q0, q1}) {
        // Captured carriers c = Binomial-thinned (p q) + Poisson(lambda w) when the
        // capture is applied per carrier; photons = Poisson(ka) per carrier.
        const double mv = p * q + w;
        const double vv = p * q * (1 - p * q) + w;
        const double vk = ka * (mv * mv + vv) + ka * ka * vv;  // compound with Poisson ka
        var += lambda * (vk + ka * ka * mv * mv * (1 - lambda));
    }
    return std::sqrt(t) * std::sqrt(var) / (lambda * p * std::abs(q0 - q1) * ka);
}

}  // namespace

TEST_CASE("timing budget accessors") {
    TimingBudget t;
    CHECK(t.t_sos() == doctest::Approx(16.3e-6));
    CHECK(t.t_scc_total() == doctest::Approx(16.38e-6));
    CHECK(t.t_aid() == doctest::Approx(80e-9 + 15e-6 + 1e-2 / 1e4));
    t.n = 0;
    CHECK_THROWS_AS(t.validate(), DomainError);
}

TEST_CASE("k1 follows from the contrast formula") {
    QubitReadoutParams q;
    CHECK(q.k1_mean() == doctest::Approx(0.0525));
}

TEST_CASE("snr_sos examples") {
    QubitReadoutParams q;
    CHECK(snr_sos(q, 10000) == doctest::Approx(0.0225 * 100 / std::sqrt(0.1275)));
    CHECK(snr_sos(q, 10000) == doctest::Approx(6.30).epsilon(1e-3));
    q.contrast_sos = 0.0;
    CHECK(snr_sos(q, 100) == 0.0);
    q.k0_mean = 1.0;
    q.contrast_sos = 1.0;
    CHECK(snr_sos(q, 1) == doctest::Approx(1.0));
    q.k0_mean = 0.0;
    CHECK_THROWS_AS(snr_sos(q, 10), DomainError);
}

TEST_CASE("eta_sos examples") {
    QubitReadoutParams q;
    const auto t = unit_time();
    const auto e = eta_sos(q, t);
    CHECK(e.exact == doctest::Approx(std::sqrt(0.1275) / 0.0225));
    CHECK(e.exact == doctest::Approx(15.9).epsilon(0.01));
    CHECK(e.approx == doctest::Approx(std::sqrt(2.0) / (0.3 * std::sqrt(0.075))));
    CHECK(e.approx == doctest::Approx(17.2).epsilon(0.01));
    CHECK(eta_sos(q, t.scaled(4.0)).exact == doctest::Approx(2.0 * e.exact));
    q.k0_mean = 1.0;
    q.contrast_sos = 1.0;
    CHECK(eta_sos(q, t).exact == doctest::Approx(1.0));
    q.contrast_sos = 0.0;
    CHECK_THROWS_AS(eta_sos(q, t), DomainError);
}

TEST_CASE("SOS sensitivity equals sqrt(n t) / SNR") {
    QubitReadoutParams q;
    TimingBudget t;
    for (std::uint64_t n : {1ull, 100ull, 10000ull}) {
        const double eta = std::sqrt(static_cast<double>(n) * t.t_sos()) / snr_sos(q, n);
        CHECK(std::abs(eta - eta_sos(q, t).exact) <= 1e-12 * eta);
    }
}

TEST_CASE("eta_scc examples") {
    QubitReadoutParams q;
    const auto t = unit_time();
    q.k0_mean = 1e6;
    CHECK(eta_scc(q, t) == doctest::Approx(std::sqrt(0.41) / 0.3).epsilon(1e-3));
    const double limit = eta_scc(q, t);
    q.k0_mean = 0.075;
    CHECK(eta_scc(q, t) > limit);
    double prev = INFINITY;
    for (double k : {0.01, 0.1, 1.0, 10.0, 100.0}) {
        q.k0_mean = k;
        const double e = eta_scc(q, t);
        CHECK(e < prev);
        prev = e;
    }
    q.q0_mean = 1.0;
    q.q1_mean = 0.0;
    q.k0_mean = 1e3;
    CHECK(std::isfinite(eta_scc(q, t)));
    q.q1_mean = 1.0;
    CHECK_THROWS_WITH_AS(eta_scc(q, t), doctest::Contains("zero spin contrast"), DomainError);
}

TEST_CASE("eta_aid against an independent oracle") {
    const auto t = unit_time();
    for (double p : {0.2, 0.7, 1.0})
        for (double w : {0.0, 0.5, 4.0})
            for (double lambda : {0.05, 0.5, 1.0})
                for (double ka : {1.0, 22.0}) {
                    QubitReadoutParams q;
                    q.p_mean = p;
                    q.w_mean = w;
                    q.lambda_mean = lambda;
                    q.ka_mean = ka;
                    CHECK(eta_aid(q, t) == doctest::Approx(oracle_eta_aid(p, 0.8, 0.5, w, lambda, ka, 1.0)));
                }
    QubitReadoutParams q;
    q.lambda_mean = 0.0;
    CHECK_THROWS_WITH_AS(eta_aid(q, t), doctest::Contains("no carrier capture"), DomainError);
}

TEST_CASE("eta_aid limits") {
    const auto t = unit_time();
    auto q = ideal_aid();
    q.ka_mean = 1e6;
    CHECK(eta_aid_limit_high_ka(q, t) == doctest::Approx(std::sqrt(0.41) / 0.3));
    CHECK(eta_aid_limit_high_ka(q, t) == doctest::Approx(2.134).epsilon(1e-3));
    CHECK(eta_aid(q, t) == doctest::Approx(eta_aid_limit_high_ka(q, t)).epsilon(1e-3));

    q.ka_mean = 22.0;
    CHECK(eta_aid_limit_low_ka(q, t) == doctest::Approx(std::sqrt(0.89) / (0.3 * std::sqrt(22.0))));
    CHECK(eta_aid_limit_low_ka(q, t) == doctest::Approx(0.670).epsilon(1e-3));
    const double e22 = eta_aid_limit_low_ka(q, t);
    q.ka_mean = 88.0;
    CHECK(eta_aid_limit_low_ka(q, t) == doctest::Approx(e22 / 2));

    q.q0_mean = 1.0;
    q.q1_mean = 0.0;
    q.ka_mean = 1.0;
    CHECK(eta_aid_limit_low_ka(q, t) == doctest::Approx(1.0));
    CHECK(eta_aid_limit_high_ka(q, t) == 0.0);
    for (double ka : {1.0, 22.0, 1e3}) {
        q.ka_mean = ka;
        CHECK(eta_aid(q, t) == doctest::Approx(eta_aid_limit_low_ka(q, t)).epsilon(1e-12));
    }

    q = ideal_aid();
    const double eps = 1e-4;
    q.q0_mean = 0.5 + eps;
    q.q1_mean = 0.5 - eps;
    CHECK(eta_aid_limit_high_ka(q, t) == doctest::Approx(std::sqrt(0.5) / (2 * eps)).epsilon(1e-6));
}

TEST_CASE("background limit") {
    const auto t = unit_time();
    QubitReadoutParams q;
    q.w_mean = 4.0;
    q.lambda_mean = 1.0;
    CHECK(eta_aid_background_limit(q, t) == doctest::Approx(std::sqrt(2.0) * 4 / 0.3));
    CHECK(eta_aid_background_limit(q, t) == doctest::Approx(18.9).epsilon(0.01));
    const double base = eta_aid_background_limit(q, t);
    q.w_mean = 8.0;
    CHECK(eta_aid_background_limit(q, t) == doctest::Approx(2 * base));
    q.w_mean = 4.0;
    q.lambda_mean = 0.25;
    CHECK(eta_aid_background_limit(q, t) == doctest::Approx(2 * base));

    q.lambda_mean = 1e-3;
    q.w_mean = 100.0;
    CHECK(eta_aid(q, t) == doctest::Approx(eta_aid_background_limit(q, t)).epsilon(0.05));
}

TEST_CASE("eta_aid monotonicity on the probability grid") {
    const auto t = unit_time();
    for (int ip = 1; ip <= 10; ++ip)
        for (int i0 = 0; i0 <= 10; ++i0)
            for (int i1 = 0; i1 <= 10; ++i1) {
                if (i0 == i1) continue;
                QubitReadoutParams q;
                q.p_mean = ip / 10.0;
                q.q0_mean = i0 / 10.0;
                q.q1_mean = i1 / 10.0;
                double prev = INFINITY;
                for (double ka : {1.0, 5.0, 22.0, 100.0}) {
                    q.ka_mean = ka;
                    const double e = eta_aid(q, t);
                    CHECK(e <= prev * (1 + 1e-12));
                    prev = e;
                }
                q.ka_mean = 22.0;
                prev = INFINITY;
                for (int il = 1; il <= 10; ++il) {
                    q.lambda_mean = il / 10.0;
                    const double e = eta_aid(q, t);
                    CHECK(e <= prev * (1 + 1e-12));
                    prev = e;
                }
                q.lambda_mean = 0.5;
                prev = 0.0;
                for (double w : {0.0, 0.1, 1.0, 10.0}) {
                    q.w_mean = w;
                    const double e = eta_aid(q, t);
                    CHECK(e >= prev * (1 - 1e-12));
                    prev = e;
                }
            }
}

TEST_CASE("all sensitivities scale as the square root of a common time factor") {
    QubitReadoutParams q;
    q.w_mean = 0.3;
    q.lambda_mean = 0.6;
    TimingBudget t;
    const auto s = t.scaled(9.0);
    CHECK(eta_sos(q, s).exact == doctest::Approx(3 * eta_sos(q, t).exact).epsilon(1e-12));
    CHECK(eta_sos(q, s).approx == doctest::Approx(3 * eta_sos(q, t).approx).epsilon(1e-12));
    CHECK(eta_scc(q, s) == doctest::Approx(3 * eta_scc(q, t)).epsilon(1e-12));
    CHECK(eta_aid(q, s) == doctest::Approx(3 * eta_aid(q, t)).epsilon(1e-12));
    CHECK(eta_aid_limit_high_ka(q, s) == doctest::Approx(3 * eta_aid_limit_high_ka(q, t)).epsilon(1e-12));
    CHECK(eta_aid_limit_low_ka(q, s) == doctest::Approx(3 * eta_aid_limit_low_ka(q, t)).epsilon(1e-12));
    CHECK(eta_aid_background_limit(q, s) == doctest::Approx(3 * eta_aid_background_limit(q, t)).epsilon(1e-12));
}

TEST_CASE("AID versus SOS criterion") {
    QubitReadoutParams q;
    TimingBudget t;
    t.n = 1000000000000ull;
    auto c = aid_beats_sos(q, t);
    CHECK(c.lhs == doctest::Approx(0.00675).epsilon(1e-6));
    CHECK(c.rhs == doctest::Approx(2 * 0.09 / 0.41));
    CHECK(c.aid_wins);

    // The criterion is the squared ratio of the two small-contrast, bright-ancilla sensitivities.
    TimingBudget s = t;
    s.t_scc = 0.0;
    s.n = 50;
    c = aid_beats_sos(q, s);
    const double tc = s.t_i + s.t_r + s.t_e;
    const double o = (s.t_ia + s.t_ra) / (50 * tc);
    const double eta_sos_sq = 2 * tc / (0.09 * 0.075);
    const double eta_aid_sq = tc * (1 + o) * 0.41 / 0.09;
    CHECK(c.ratio == doctest::Approx(eta_aid_sq / eta_sos_sq));

    q.q1_mean = q.q0_mean;
    c = aid_beats_sos(q, t);
    CHECK(c.rhs == 0.0);
    CHECK_FALSE(c.aid_wins);
}
