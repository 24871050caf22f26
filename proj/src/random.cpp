#include "aid/random.hpp"

#include <random>

namespace aid {

std::uint64_t mix64(std::uint64_t x) {
    // SplitMix64 finalizer.
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed),
      stream_(stream),
      key_(mix64(mix64(seed + 0x9e3779b97f4a7c15ULL) ^ (stream * 0xd1b54a32d192ed03ULL + 1))) {}

RandomStream RandomStream::derive(std::uint64_t seed, std::string_view module, std::uint64_t task) {
    return RandomStream(seed, mix64(fnv1a(module)) ^ mix64(task + 0x632be59bd9b4e019ULL));
}

RandomStream::result_type RandomStream::operator()() {
    const std::uint64_t c = counter_++;
    return mix64(key_ ^ mix64(c * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL));
}

double RandomStream::uniform() {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

bool RandomStream::bernoulli(double p) {
    return uniform() < p;
}

std::uint64_t RandomStream::poisson(double mean) {
    if (!(mean > 0.0)) return 0;
    std::poisson_distribution<std::uint64_t> dist(mean);
    return dist(*this);
}

std::uint64_t RandomStream::binomial(std::uint64_t trials, double p) {
    if (trials == 0 || !(p > 0.0)) return 0;
    if (p >= 1.0) return trials;
    std::binomial_distribution<std::uint64_t> dist(trials, p);
    return dist(*this);
}

}  // namespace aid
