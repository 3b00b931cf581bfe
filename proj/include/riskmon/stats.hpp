#pragma once

#include <cstdint>

// Small numeric helpers shared by the monitor, the experiment runner and the
// test suites: deterministic seed derivation and exact binomial bounds.

namespace riskmon {

// One step of the splitmix64 generator (public-domain constants). Used as the
// seed-splitting function: it is stateless, well mixed, and easy to document.
std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent sub-seed from a master seed and up to two indices
// (e.g. sweep cell and trial, or trial and RNG role). The derivation is
//   s0 = splitmix64(master)
//   s1 = splitmix64(s0 ^ (a + 0x9E3779B97F4A7C15))
//   s2 = splitmix64(s1 ^ (b + 0x2545F4914F6CDD1D))
// so any trial can be reproduced in isolation from (master, a, b).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

// Exact binomial CDF P(X <= k) for X ~ Binomial(n, p).
double binomial_cdf(long k, long n, double p);

// Smallest k such that P(Binomial(n, p) <= k) >= q. Used as a one-sided
// Monte-Carlo slack: an observed count above this is evidence (at level 1-q)
// that the true rate exceeds p.
long binomial_upper_quantile(long n, double p, double q);

// One-sided Clopper-Pearson upper confidence bound for a binomial proportion
// given k successes in n trials at confidence level `conf` (e.g. 0.95).
double clopper_pearson_upper(long k, long n, double conf);

}  // namespace riskmon
