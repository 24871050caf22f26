#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "aid/random.hpp"

namespace aid {

/// Boolean variable with P(1) = mean.
class BernoulliVar {
public:
    explicit BernoulliVar(double mean);
    double mean() const { return mean_; }
    double variance() const { return mean_ * (1.0 - mean_); }

private:
    double mean_;
};

/// Poisson-distributed count.
class PoissonVar {
public:
    explicit PoissonVar(double mean);
    double mean() const { return mean_; }
    double variance() const { return mean_; }

private:
    double mean_;
};

/// Mean and variance of a compound measurement variable.
struct ReadoutStatistics {
    double mean = 0.0;
    double variance = 0.0;
};

/// Product X*Y of independent variables.
ReadoutStatistics product(const ReadoutStatistics& x, const ReadoutStatistics& y);

/// v = p(1-q) + (1-p) r: qubit still bright after the SCC pulse.
///
/// The variance is exact. It equals the sum of the variances of the two terms
/// minus 2<p>(1-<p>)(1-<q>)<r>, because both terms share p.
ReadoutStatistics scc_trap_activation(const BernoulliVar& p, const BernoulliVar& q,
                                      const BernoulliVar& r);

/// Same mean, variance taken as Var[p(1-q)] + Var[(1-p) r] (the shared p
/// treated as two independent copies). Agrees with scc_trap_activation when
/// <p> is 0 or 1, <q> = 1, or <r> = 0.
ReadoutStatistics scc_trap_activation_uncorrelated(const BernoulliVar& p, const BernoulliVar& q,
                                                   const BernoulliVar& r);

/// v = p q + w: carriers reaching the ancilla ensemble, w background carriers.
ReadoutStatistics aid_trap_activation(const BernoulliVar& p, const BernoulliVar& q,
                                      const PoissonVar& w);

/// Statistics of v*k for v independent of a Poisson photon count k.
ReadoutStatistics photon_compound(const ReadoutStatistics& v, const PoissonVar& k);

// ---------------------------------------------------------------------------
// Enumeration oracle

enum class CompoundForm {
    SccV,            ///< (p, q, r) -> p(1-q) + (1-p) r
    AidV,            ///< (p, q, w) -> p q + w
    PhotonCompound,  ///< (v, k)    -> v k
};

/// Explicit finite probability mass function.
struct DiscreteDist {
    std::vector<double> values;
    std::vector<double> probs;
};

using VarDescriptor = std::variant<BernoulliVar, PoissonVar, DiscreteDist>;

struct EnumerationResult {
    ReadoutStatistics stats;
    /// Upper bound on the second moment discarded by truncating Poisson supports.
    double truncation_bound = 0.0;
    std::size_t support_size = 0;
};

/// Exact mean and variance by exhaustive enumeration of the joint support.
///
/// Poisson supports are cut at the smallest K with sum_{k>K} k^2 P(k) <= tol,
/// so both moments are off by at most `truncation_tol`. Throws DomainError for
/// tol <= 0 or an argument count that does not match `form`.
EnumerationResult enumerate_compound_variance(const std::vector<VarDescriptor>& vars,
                                              CompoundForm form,
                                              double truncation_tol = 1e-12);

/// Truncated Poisson support {0..K} and its probabilities; `tail_bound` receives
/// the bound on the discarded second moment.
DiscreteDist truncated_poisson(double mean, double tol, double* tail_bound = nullptr);

bool sample(const BernoulliVar& var, RandomStream& rng);
std::uint64_t sample(const PoissonVar& var, RandomStream& rng);

}  // namespace aid
