#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace aid {

/// Counter-based random stream.
///
/// Every draw is a pure function of (key, counter), where the key is derived
/// from a 64-bit seed and a stream index. Two streams built from the same
/// (seed, stream) pair replay the same sequence, which is what makes sweeps
/// reproducible regardless of how tasks are distributed over threads.
///
/// Satisfies UniformRandomBitGenerator so it can drive <random> distributions.
class RandomStream {
public:
    using result_type = std::uint64_t;

    RandomStream(std::uint64_t seed, std::uint64_t stream);

    /// Stream keyed by (seed, module name, task index); stable across platforms.
    static RandomStream derive(std::uint64_t seed, std::string_view module, std::uint64_t task);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();

    bool bernoulli(double p);
    std::uint64_t poisson(double mean);
    std::uint64_t binomial(std::uint64_t trials, double p);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    std::uint64_t position() const { return counter_; }

    /// Jump to an absolute draw index.
    void seek(std::uint64_t counter) { counter_ = counter; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace aid
