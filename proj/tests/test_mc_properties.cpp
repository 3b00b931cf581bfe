#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "riskmon/monitor.hpp"
#include "riskmon/stats.hpp"

// Monte-Carlo property tests: distributional guarantees checked against
// exact binomial slack or 3-standard-error margins. All runs are seeded, so
// outcomes are reproducible.

using namespace riskmon;

namespace {

const RiskSpec kSpec(0.1, 0.1);

WindowConfig no_burn() { return WindowConfig::make(std::nullopt, 1, 0L); }

// First stop time of a tracker driven by i.i.d. Bernoulli(p) losses with a
// predictable rate schedule; 0 when it never stops within T steps.
long first_stop(TrackerKind kind, const BettingStrategy& strategy, double p,
                long T, std::uint64_t seed) {
  TrackerState st = init_tracker(kind, kSpec, no_burn());
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution bern(p);
  const bool reverse = kind == TrackerKind::wealth_reverse_iid;
  for (long t = 1; t <= T; ++t) {
    double lam = strategy.rate(kSpec, st.moments, st.t + 1, reverse);
    double z = bern(rng) ? 1.0 : 0.0;
    std::span<const double> batch(&z, 1);
    switch (kind) {
      case TrackerKind::wealth_mult:
        st = step_mult(std::move(st), kSpec, no_burn(), lam, batch);
        break;
      case TrackerKind::wealth_sum:
        st = step_sum(std::move(st), kSpec, no_burn(), lam, batch);
        break;
      case TrackerKind::wealth_eb:
        st = step_eb(std::move(st), kSpec, no_burn(), lam, batch);
        break;
      case TrackerKind::wealth_reverse_iid:
        st = step_reverse_iid(std::move(st), kSpec, no_burn(), lam, batch);
        break;
      default:
        throw std::logic_error("first_stop: unsupported kind");
    }
    if (st.stopped) return t;
  }
  return 0;
}

long count_stops(TrackerKind kind, const BettingStrategy& strategy, double p,
                 long T, long R, std::uint64_t master) {
  long stops = 0;
  for (long r = 0; r < R; ++r)
    if (first_stop(kind, strategy, p, T, derive_seed(master, std::uint64_t(r))))
      ++stops;
  return stops;
}

}  // namespace

TEST_CASE("wealth stays a supermartingale at the risk boundary") {
  // z ~ Bernoulli(eps): the fixed-rate wealth is an exact martingale, the
  // hardest case for E[M_t] <= 1.
  const long R = 3000;
  std::vector<long> checkpoints = {10, 100, 1000};
  std::vector<double> sum(checkpoints.size(), 0.0);
  std::vector<double> sumsq(checkpoints.size(), 0.0);
  for (long r = 0; r < R; ++r) {
    TrackerState st = init_tracker(TrackerKind::wealth_mult, kSpec, no_burn());
    std::mt19937_64 rng(derive_seed(991, std::uint64_t(r)));
    std::bernoulli_distribution bern(0.1);
    std::size_t next = 0;
    for (long t = 1; t <= 1000; ++t) {
      double z = bern(rng) ? 1.0 : 0.0;
      st = step_mult(std::move(st), kSpec, no_burn(), 0.5,
                     std::span<const double>(&z, 1));
      if (next < checkpoints.size() && t == checkpoints[next]) {
        double m = std::exp(st.statistic);
        sum[next] += m;
        sumsq[next] += m * m;
        ++next;
      }
    }
  }
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    double mean = sum[c] / double(R);
    double var = sumsq[c] / double(R) - mean * mean;
    double se = std::sqrt(std::max(var, 0.0) / double(R));
    INFO("t = " << checkpoints[c] << ", mean = " << mean << ", se = " << se);
    CHECK(mean <= 1.0 + 3.0 * se);
  }
}

TEST_CASE("false-alarm probability stays within the budget at the boundary") {
  // i.i.d. risk exactly epsilon: crossing 1/delta is a false alarm, and the
  // anytime-valid guarantee caps its probability at delta.
  const long R = 800;
  const long T = 800;
  const long slack = binomial_upper_quantile(R, kSpec.delta(), 0.95);

  long mult = count_stops(TrackerKind::wealth_mult, BettingStrategy::agra(),
                          0.1, T, R, 551);
  INFO("mult stops = " << mult << " / " << R << ", slack = " << slack);
  CHECK(mult <= slack);

  long sum = count_stops(TrackerKind::wealth_sum, BettingStrategy::agra(),
                         0.1, T, R, 552);
  INFO("sum stops = " << sum);
  CHECK(sum <= slack);

  long eb = count_stops(TrackerKind::wealth_eb, BettingStrategy::eb_plugin(),
                        0.1, T, R, 553);
  INFO("eb stops = " << eb);
  CHECK(eb <= slack);
}

TEST_CASE("a clear violation is detected in every trial") {
  const long R = 200;
  const long T = 1500;
  std::vector<long> stops;
  for (long r = 0; r < R; ++r) {
    long s = first_stop(TrackerKind::wealth_mult, BettingStrategy::agra(),
                        0.3, T, derive_seed(661, std::uint64_t(r)));
    REQUIRE(s > 0);
    stops.push_back(s);
  }
  std::sort(stops.begin(), stops.end());
  CHECK(stops[stops.size() / 2] < 400);  // detection is quick, not marginal
}

TEST_CASE("batching averages evidence and shrinks the wealth variance") {
  // same number of steps, B draws averaged per step: Var(log M) ~ 1/B
  const long R = 500;
  const long steps = 50;
  auto logw_var = [&](long B, std::uint64_t master) {
    double sum = 0.0, sumsq = 0.0;
    std::vector<double> batch(std::size_t(B), 0.0);
    for (long r = 0; r < R; ++r) {
      std::mt19937_64 rng(derive_seed(master, std::uint64_t(r)));
      std::bernoulli_distribution bern(0.2);
      WindowConfig w = WindowConfig::make(std::nullopt, B, 0L);
      TrackerState st = init_tracker(TrackerKind::wealth_mult, kSpec, w);
      for (long t = 1; t <= steps; ++t) {
        for (double& z : batch) z = bern(rng) ? 1.0 : 0.0;
        st = step_mult(std::move(st), kSpec, w, 0.5,
                       std::span<const double>(batch));
      }
      sum += st.statistic;
      sumsq += st.statistic * st.statistic;
    }
    double mean = sum / double(R);
    return sumsq / double(R) - mean * mean;
  };
  double v1 = logw_var(1, 771);
  double v10 = logw_var(10, 772);
  double v50 = logw_var(50, 773);
  INFO("var: B=1 " << v1 << ", B=10 " << v10 << ", B=50 " << v50);
  CHECK(v1 > v10);
  CHECK(v10 > v50);
  CHECK(v1 > 5.0 * v10);  // roughly proportional to 1/B
}

TEST_CASE("reverse admission stays within the budget when risk is not safe") {
  // risk exactly epsilon: admitting the threshold would be wrong, and the
  // reverse wealth crosses 1/delta with probability at most delta.
  const long R = 800;
  const long T = 800;
  const long slack = binomial_upper_quantile(R, kSpec.delta(), 0.95);
  long crossings = count_stops(TrackerKind::wealth_reverse_iid,
                               BettingStrategy::agra(), 0.1, T, R, 881);
  INFO("reverse crossings = " << crossings << " / " << R
                              << ", slack = " << slack);
  CHECK(crossings <= slack);
}

TEST_CASE("halving the excess risk roughly doubles the detection delay") {
  DelayBoundReport small_mu =
      delay_bound_check(kSpec, 0.2, 0.1, 200, 120, 20000, 1001);
  DelayBoundReport big_mu =
      delay_bound_check(kSpec, 0.2, 0.2, 200, 120, 20000, 1002);
  REQUIRE(small_mu.censored == 0);
  REQUIRE(big_mu.censored == 0);
  double ratio = small_mu.observed_mean / big_mu.observed_mean;
  INFO("delays " << small_mu.observed_mean << " vs " << big_mu.observed_mean);
  CHECK(ratio >= 1.5);
  CHECK(ratio <= 3.0);
  // the predicted scale stays an upper envelope on these runs
  CHECK(small_mu.constant <= 1.1);
  CHECK(big_mu.constant <= 1.1);
}

TEST_CASE("a longer quiet period deepens the hole and delays detection") {
  // zero losses before the shift: wealth shrinks by (1 - lambda*eps) each
  // step, so the post-shift climb starts lower the longer the quiet period.
  auto mean_delay = [&](long T_shift, std::uint64_t master) {
    const long R = 150;
    const double lambda = 0.2;
    double total = 0.0;
    long detected = 0;
    for (long r = 0; r < R; ++r) {
      std::mt19937_64 rng(derive_seed(master, std::uint64_t(r)));
      std::bernoulli_distribution post(0.3);
      TrackerState st =
          init_tracker(TrackerKind::wealth_mult, kSpec, no_burn());
      for (long t = 1; t <= T_shift + 4000 && !st.stopped; ++t) {
        double z = t <= T_shift ? 0.0 : (post(rng) ? 1.0 : 0.0);
        st = step_mult(std::move(st), kSpec, no_burn(), lambda,
                       std::span<const double>(&z, 1));
      }
      if (st.stop_time) {
        total += double(*st.stop_time - (T_shift + 1));
        ++detected;
      }
    }
    REQUIRE(detected == R);
    return total / double(detected);
  };
  double d200 = mean_delay(200, 1101);
  double d400 = mean_delay(400, 1102);
  INFO("mean delay: T_shift=200 " << d200 << ", T_shift=400 " << d400);
  CHECK(d400 > d200 + 50.0);
}

TEST_CASE("tightening the budget scales the delay like log(1/delta)") {
  // immediate shift, small fixed rate: mean delay tracks log(1/delta), so
  // delta 0.1 -> 0.01 doubles it.
  DelayBoundReport loose =
      delay_bound_check(RiskSpec(0.1, 0.1), 0.05, 0.3, 0, 200, 5000, 1201);
  DelayBoundReport tight =
      delay_bound_check(RiskSpec(0.1, 0.01), 0.05, 0.3, 0, 200, 5000, 1202);
  REQUIRE(loose.censored == 0);
  REQUIRE(tight.censored == 0);
  double ratio = tight.observed_mean / loose.observed_mean;
  INFO("delays " << loose.observed_mean << " vs " << tight.observed_mean);
  CHECK(ratio >= 1.7);
  CHECK(ratio <= 2.3);
}
