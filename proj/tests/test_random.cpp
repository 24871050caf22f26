#include <doctest.h>

#include <cmath>
#include <set>

#include "aid/random.hpp"

using aid::RandomStream;

TEST_CASE("identical seed, stream and position replay the same draws") {
    RandomStream a(42, 7), b(42, 7);
    for (int i = 0; i < 1000; ++i) CHECK(a() == b());
    a.seek(10);
    RandomStream c(42, 7);
    for (int i = 0; i < 10; ++i) c();
    CHECK(a() == c());
}

TEST_CASE("different streams and seeds diverge") {
    RandomStream a(1, 0), b(1, 1), c(2, 0);
    std::set<std::uint64_t> first{a(), b(), c()};
    CHECK(first.size() == 3);
    auto m1 = RandomStream::derive(5, "spectrum-sos", 0);
    auto m2 = RandomStream::derive(5, "spectrum-aid", 0);
    CHECK(m1() != m2());
}

TEST_CASE("uniform draws lie in [0, 1) with mean 1/2") {
    RandomStream r(3, 0);
    const int n = 200000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        s += u;
    }
    CHECK(std::abs(s / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST_CASE("degenerate distributions") {
    RandomStream r(9, 9);
    for (int i = 0; i < 100; ++i) {
        CHECK(r.poisson(0.0) == 0);
        CHECK(r.bernoulli(1.0));
        CHECK_FALSE(r.bernoulli(0.0));
        CHECK(r.binomial(17, 1.0) == 17);
        CHECK(r.binomial(17, 0.0) == 0);
    }
}

TEST_CASE("binomial draws match mean and variance") {
    RandomStream r(11, 2);
    const int n = 100000;
    const double p = 0.3;
    const std::uint64_t trials = 50;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = static_cast<double>(r.binomial(trials, p));
        s += x;
        s2 += x * x;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    const double m_exact = trials * p, v_exact = trials * p * (1 - p);
    CHECK(std::abs(mean - m_exact) < 4.0 * std::sqrt(v_exact / n));
    CHECK(var == doctest::Approx(v_exact).epsilon(0.02));
}
