#pragma once

#include "riskmon/core.hpp"

// Predictable betting-rate strategies. A rate for step t may depend only on
// the history z_1..z_{t-1}; the monitor enforces this by computing the rate
// from a tracker's moments *before* the step-t payoff is consumed.

namespace riskmon {

enum class BettingKind {
  fixed,      // constant lambda in [0, 1/epsilon)
  agra,       // approximate growth-rate-optimal plug-in, capped at (1/2)/epsilon
  eb_plugin,  // empirical-Bernstein plug-in schedule, capped at c (default 1/2)
};

// Approximate-GRO rate: max{0, min{(mu-eps)/(var+(mu-eps)^2), (1/2)/eps}}.
// The degenerate case var = 0 and mu = eps returns 0 (zero numerator wins).
double rate_agra(const RiskSpec& spec, const RunningMoments& moments);

// Mirror of rate_agra for the reversed (i.i.d.) wealth process, which bets
// on the risk staying *below* epsilon: the payoff is (eps - z), so the mean
// excess flips sign and the cap becomes (1/2)/(1-eps).
double rate_agra_reverse(const RiskSpec& spec, const RunningMoments& moments);

// Empirical-Bernstein plug-in rate for step t (t >= 1):
//   min{ sqrt( 2*log(2/delta) / (var * t * log(1+t)) ), cap }.
// A variance floor of 1e-6 is applied inside the denominator only, so that
// constant early losses cannot produce an infinite rate.
double rate_eb(const RiskSpec& spec, const RunningMoments& moments, long t,
               double cap = 0.5);

// Identity on lambda after a domain check against [0, 1/epsilon).
double rate_fixed(const RiskSpec& spec, double lambda);

// A strategy bundles a kind with its constants and evaluates the rate for
// step t given moments over z_1..z_{t-1}. Pure function of its inputs.
class BettingStrategy {
 public:
  static BettingStrategy fixed(double lambda);
  static BettingStrategy agra();
  static BettingStrategy eb_plugin(double cap = 0.5);

  BettingKind kind() const { return kind_; }
  double fixed_lambda() const { return fixed_lambda_; }
  double eb_cap() const { return eb_cap_; }

  // `reverse` switches agra to its mirrored form; fixed rates are validated
  // against the reverse domain [0, 1/(1-eps)) by the tracker step instead.
  double rate(const RiskSpec& spec, const RunningMoments& moments, long t,
              bool reverse = false) const;

  const char* name() const;

 private:
  BettingKind kind_ = BettingKind::agra;
  double fixed_lambda_ = 0.0;
  double eb_cap_ = 0.5;
};

}  // namespace riskmon
