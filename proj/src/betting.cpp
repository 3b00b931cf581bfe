#include "riskmon/betting.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace riskmon {

namespace {

double agra_form(double mean_excess, double var, double cap) {
  double denom = var + mean_excess * mean_excess;
  if (denom == 0.0) return 0.0;  // mean at target with zero spread: no bet
  return std::max(0.0, std::min(mean_excess / denom, cap));
}

}  // namespace

double rate_agra(const RiskSpec& spec, const RunningMoments& moments) {
  return agra_form(moments.mean() - spec.epsilon(), moments.var(),
                   0.5 / spec.epsilon());
}

double rate_agra_reverse(const RiskSpec& spec, const RunningMoments& moments) {
  return agra_form(spec.epsilon() - moments.mean(), moments.var(),
                   0.5 / (1.0 - spec.epsilon()));
}

double rate_eb(const RiskSpec& spec, const RunningMoments& moments, long t,
               double cap) {
  if (t < 1) throw std::invalid_argument("rate_eb: t must be >= 1");
  if (!(cap > 0.0 && cap < 1.0))
    throw std::domain_error("rate_eb: cap must lie in (0,1)");
  double var = std::max(moments.var(), 1e-6);  // floor: denominator only
  double num = 2.0 * std::log(2.0 / spec.delta());
  double denom = var * double(t) * std::log1p(double(t));
  return std::min(std::sqrt(num / denom), cap);
}

double rate_fixed(const RiskSpec& spec, double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0 / spec.epsilon()))
    throw std::domain_error("rate_fixed: lambda must lie in [0, 1/epsilon)");
  return lambda;
}

BettingStrategy BettingStrategy::fixed(double lambda) {
  BettingStrategy s;
  s.kind_ = BettingKind::fixed;
  s.fixed_lambda_ = lambda;
  return s;
}

BettingStrategy BettingStrategy::agra() {
  BettingStrategy s;
  s.kind_ = BettingKind::agra;
  return s;
}

BettingStrategy BettingStrategy::eb_plugin(double cap) {
  BettingStrategy s;
  s.kind_ = BettingKind::eb_plugin;
  s.eb_cap_ = cap;
  return s;
}

double BettingStrategy::rate(const RiskSpec& spec,
                             const RunningMoments& moments, long t,
                             bool reverse) const {
  switch (kind_) {
    case BettingKind::fixed:
      return fixed_lambda_;  // domain checked by the consuming tracker step
    case BettingKind::agra:
      return reverse ? rate_agra_reverse(spec, moments)
                     : rate_agra(spec, moments);
    case BettingKind::eb_plugin:
      return rate_eb(spec, moments, t, eb_cap_);
  }
  throw std::logic_error("BettingStrategy: unknown kind");
}

const char* BettingStrategy::name() const {
  switch (kind_) {
    case BettingKind::fixed:
      return "fixed";
    case BettingKind::agra:
      return "agra";
    case BettingKind::eb_plugin:
      return "eb";
  }
  return "unknown";
}

}  // namespace riskmon
