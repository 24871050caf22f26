#include <doctest.h>

#include <cmath>
#include <vector>

#include "aid/error.hpp"
#include "aid/stochastics.hpp"

using namespace aid;

namespace {

// Independent oracle: enumerate the 8 Boolean outcomes of (p, q, r) by hand.
ReadoutStatistics brute_scc(double p, double q, double r) {
    double m1 = 0.0, m2 = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
                const double pr = (a ? p : 1 - p) * (b ? q : 1 - q) * (c ? r : 1 - r);
                const double v = a * (1 - b) + (1 - a) * c;
                m1 += pr * v;
                m2 += pr * v * v;
            }
    return {m1, m2 - m1 * m1};
}

// Independent oracle for p q + w with w ~ Poisson: Boolean part plus w moments.
ReadoutStatistics brute_aid(double p, double q, double w) {
    const double m = p * q;
    return {m + w, m * (1 - m) + w};
}

}  // namespace

TEST_CASE("variables reject out-of-range means") {
    CHECK_THROWS_AS(BernoulliVar(-0.1), DomainError);
    CHECK_THROWS_AS(BernoulliVar(1.1), DomainError);
    CHECK_THROWS_AS(BernoulliVar(std::nan("")), DomainError);
    CHECK_THROWS_AS(PoissonVar(-1.0), DomainError);
    CHECK(BernoulliVar(0.3).variance() == doctest::Approx(0.21));
    CHECK(PoissonVar(4.0).variance() == 4.0);
}

TEST_CASE("product of independent variables") {
    const auto s = product({2.0, 0.5}, {3.0, 0.25});
    CHECK(s.mean == doctest::Approx(6.0));
    CHECK(s.variance == doctest::Approx(4.0 * 0.25 + 9.0 * 0.5 + 0.125));
}

TEST_CASE("scc_trap_activation examples") {
    auto s = scc_trap_activation(BernoulliVar(1), BernoulliVar(0.8), BernoulliVar(0));
    CHECK(s.mean == doctest::Approx(0.2));
    CHECK(s.variance == doctest::Approx(0.16));
    s = scc_trap_activation(BernoulliVar(1), BernoulliVar(0), BernoulliVar(0));
    CHECK(s.mean == 1.0);
    CHECK(s.variance == 0.0);
    s = scc_trap_activation(BernoulliVar(0.5), BernoulliVar(0.5), BernoulliVar(0.5));
    const auto b = brute_scc(0.5, 0.5, 0.5);
    CHECK(s.mean == doctest::Approx(0.5));
    CHECK(std::abs(s.variance - b.variance) <= 1e-12);
}

TEST_CASE("uncorrelated SCC form differs only through the shared p") {
    const auto exact = scc_trap_activation(BernoulliVar(0.5), BernoulliVar(0.5), BernoulliVar(0.5));
    const auto loose = scc_trap_activation_uncorrelated(BernoulliVar(0.5), BernoulliVar(0.5), BernoulliVar(0.5));
    CHECK(loose.mean == exact.mean);
    CHECK(loose.variance - exact.variance == doctest::Approx(2 * 0.25 * 0.5 * 0.5));
    for (double q : {0.0, 0.3, 1.0}) {
        const auto a = scc_trap_activation(BernoulliVar(1), BernoulliVar(q), BernoulliVar(0.4));
        const auto c = scc_trap_activation_uncorrelated(BernoulliVar(1), BernoulliVar(q), BernoulliVar(0.4));
        CHECK(a.variance == doctest::Approx(c.variance));
    }
}

TEST_CASE("scc_trap_activation agrees with enumeration on the 0.1 grid") {
    double worst = 0.0;
    for (int i = 0; i <= 10; ++i)
        for (int j = 0; j <= 10; ++j)
            for (int k = 0; k <= 10; ++k) {
                const double p = i / 10.0, q = j / 10.0, r = k / 10.0;
                const auto s = scc_trap_activation(BernoulliVar(p), BernoulliVar(q), BernoulliVar(r));
                const auto e = enumerate_compound_variance({BernoulliVar(p), BernoulliVar(q), BernoulliVar(r)},
                                                           CompoundForm::SccV);
                const auto b = brute_scc(p, q, r);
                worst = std::max({worst, std::abs(s.mean - e.stats.mean), std::abs(s.variance - e.stats.variance),
                                  std::abs(b.variance - e.stats.variance)});
                REQUIRE(s.variance >= 0.0);
            }
    CHECK(worst <= 1e-12);
}

TEST_CASE("aid_trap_activation examples and oracle grid") {
    auto s = aid_trap_activation(BernoulliVar(1), BernoulliVar(0.8), PoissonVar(0));
    CHECK(s.mean == doctest::Approx(0.8));
    CHECK(s.variance == doctest::Approx(0.16));
    s = aid_trap_activation(BernoulliVar(1), BernoulliVar(0.8), PoissonVar(4));
    CHECK(s.mean == doctest::Approx(4.8));
    CHECK(s.variance == doctest::Approx(4.16));
    s = aid_trap_activation(BernoulliVar(0), BernoulliVar(0.6), PoissonVar(0));
    CHECK(s.mean == 0.0);
    CHECK(s.variance == 0.0);

    for (double p : {0.0, 0.25, 0.5, 0.75, 1.0})
        for (double q : {0.0, 0.25, 0.5, 0.75, 1.0})
            for (double w : {0.0, 1.0, 4.0}) {
                const auto a = aid_trap_activation(BernoulliVar(p), BernoulliVar(q), PoissonVar(w));
                const auto e =
                    enumerate_compound_variance({BernoulliVar(p), BernoulliVar(q), PoissonVar(w)}, CompoundForm::AidV);
                const auto b = brute_aid(p, q, w);
                CHECK(std::abs(a.mean - e.stats.mean) <= 1e-10);
                CHECK(std::abs(a.variance - e.stats.variance) <= 1e-10);
                CHECK(std::abs(a.variance - b.variance) <= 1e-12);
            }
}

TEST_CASE("photon_compound") {
    auto s = photon_compound({1.0, 0.0}, PoissonVar(22));
    CHECK(s.mean == 22.0);
    CHECK(s.variance == doctest::Approx(22.0));
    s = photon_compound({0.0, 0.0}, PoissonVar(5));
    CHECK(s.mean == 0.0);
    CHECK(s.variance == 0.0);
    s = photon_compound({0.8, 0.16}, PoissonVar(22));
    CHECK(s.variance == doctest::Approx(95.04));

    const auto e = enumerate_compound_variance({BernoulliVar(0.8), PoissonVar(22)}, CompoundForm::PhotonCompound);
    CHECK(e.stats.mean == doctest::Approx(17.6).epsilon(1e-12));
    CHECK(std::abs(e.stats.variance - 95.04) <= 1e-9);
    CHECK(e.truncation_bound <= 1e-12);
}

TEST_CASE("photon_compound matches sampling within 3 standard errors") {
    RandomStream rng(2024, 1);
    const BernoulliVar v(0.8);
    const PoissonVar k(22);
    const int n = 10000000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = sample(v, rng) ? static_cast<double>(sample(k, rng)) : 0.0;
        s += x;
        s2 += x * x;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    CHECK(std::abs(mean - 17.6) < 3.0 * std::sqrt(95.04 / n));
    // Var of the sample variance ~ (mu4 - sigma^4) / n; a 1% band is many standard errors wide here.
    CHECK(var == doctest::Approx(95.04).epsilon(0.01));
}

TEST_CASE("enumeration oracle edge cases") {
    auto e = enumerate_compound_variance({BernoulliVar(1), BernoulliVar(0.8), BernoulliVar(0)}, CompoundForm::SccV);
    CHECK(e.stats.mean == doctest::Approx(0.2));
    CHECK(e.stats.variance == doctest::Approx(0.16));
    e = enumerate_compound_variance({BernoulliVar(1), PoissonVar(0)}, CompoundForm::PhotonCompound);
    CHECK(e.stats.mean == 0.0);
    CHECK(e.stats.variance == 0.0);
    CHECK_THROWS_AS(enumerate_compound_variance({BernoulliVar(1), PoissonVar(1)}, CompoundForm::PhotonCompound, 0.0),
                    DomainError);
    CHECK_THROWS_AS(enumerate_compound_variance({BernoulliVar(1)}, CompoundForm::SccV), DomainError);

    DiscreteDist v{{0.0, 1.0, 2.0}, {0.25, 0.5, 0.25}};
    e = enumerate_compound_variance({v, PoissonVar(3)}, CompoundForm::PhotonCompound);
    const auto c = photon_compound({1.0, 0.5}, PoissonVar(3));
    CHECK(std::abs(e.stats.variance - c.variance) <= 1e-10);
}

TEST_CASE("truncated Poisson tail bound holds") {
    for (double mean : {0.5, 4.0, 22.0, 100.0}) {
        double bound = 0.0;
        const auto d = truncated_poisson(mean, 1e-12, &bound);
        double m2 = 0.0;
        for (std::size_t k = 0; k < d.values.size(); ++k) m2 += d.values[k] * d.values[k] * d.probs[k];
        const double exact = mean + mean * mean;
        CHECK(bound <= 1e-12);
        CHECK(exact - m2 >= -1e-9);
        CHECK(exact - m2 <= 1e-12 + 1e-12 * exact);
    }
}

TEST_CASE("sampling determinism and statistics") {
    RandomStream a(5, 3), b(5, 3);
    for (int i = 0; i < 100; ++i) CHECK(sample(PoissonVar(22), a) == sample(PoissonVar(22), b));

    RandomStream r(77, 0);
    for (int i = 0; i < 100; ++i) {
        CHECK(sample(PoissonVar(0), r) == 0);
        CHECK(sample(BernoulliVar(1), r));
    }
    const int n = 1000000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += static_cast<double>(sample(PoissonVar(22), r));
    CHECK(std::abs(s / n - 22.0) < 4.0 * std::sqrt(22.0) / 1000.0);
}
