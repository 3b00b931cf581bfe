#pragma once

#include <optional>
#include <span>
#include <string>

#include "riskmon/core.hpp"

// Evidence-accumulation processes, one state machine per (kind, threshold).
//
// Wealth kinds store log M_t in `statistic` (the batched per-step factor is
// formed in linear space, where it is bounded away from zero, then logged);
// wealth_sum stores the raw cumulative sum; running_risk / oracle_risk store
// an empirical risk estimate in [0,1].
//
// Stopping is absorbing: once `stopped` is set, stop_time never changes.
// During burn-in (t <= burn_in) trackers update state but suppress stopping;
// the oracle tracker is exempt (it estimates the true risk and defines the
// ground-truth violation time).

namespace riskmon {

enum class TrackerKind {
  wealth_mult,       // product of (1 + lambda * (z - eps)), stop at 1/delta
  wealth_sum,        // sum of lambda * (z - eps), stop at sqrt(2 t log(1/delta))
  wealth_eb,         // empirical-Bernstein wealth, stop at 1/delta
  running_risk,      // windowed mean of losses, flag on > eps (no guarantee)
  oracle_risk,       // fresh-batch mean of the true step distribution
  wealth_reverse_iid,  // reversed process; crossing 1/delta admits psi for good
};

const char* tracker_name(TrackerKind kind);
std::optional<TrackerKind> tracker_from_name(const std::string& name);

struct TrackerState {
  TrackerKind kind = TrackerKind::wealth_mult;
  double statistic = 0.0;
  long t = 0;
  RunningMoments moments{0.0};
  bool stopped = false;
  std::optional<long> stop_time;
  // RRC mode for wealth_sum: accumulate but never stop.
  bool track_only = false;
  // Strict-window mode: per-step increments over the last S steps; the
  // statistic is their sum instead of the running total.
  std::vector<double> increment_ring;
  std::size_t increment_next_ = 0;
  std::size_t increment_filled_ = 0;
};

// Fresh state for a tracker under the given run configuration. Betting
// moments are seeded with mean = epsilon, var = 0.25 and follow the sliding
// window from `window` (running_risk windows the statistic itself).
TrackerState init_tracker(TrackerKind kind, const RiskSpec& spec,
                          const WindowConfig& window);

// Azuma-derived stopping boundary for the summation process at step t.
double sum_boundary(const RiskSpec& spec, long t);

// psi(lambda) penalty of the empirical-Bernstein wealth increment,
// rho(lambda) = (-log(1-lambda) - lambda) / 4 for lambda in [0,1).
double eb_rho(double lambda);

// One step of each process. `batch` is the step-t payoff batch {z_{t,b}};
// all take the step's betting rate (already formed from history only) and
// return the advanced state. Steps on a stopped state still update the
// statistic and moments but never alter stop_time.
TrackerState step_mult(TrackerState state, const RiskSpec& spec,
                       const WindowConfig& window, double lambda,
                       std::span<const double> batch);
TrackerState step_sum(TrackerState state, const RiskSpec& spec,
                      const WindowConfig& window, double lambda,
                      std::span<const double> batch);
TrackerState step_eb(TrackerState state, const RiskSpec& spec,
                     const WindowConfig& window, double lambda,
                     std::span<const double> batch);
TrackerState step_running(TrackerState state, const RiskSpec& spec,
                          const WindowConfig& window,
                          std::span<const double> batch);
TrackerState step_oracle(TrackerState state, const RiskSpec& spec,
                         std::span<const double> oracle_batch);
TrackerState step_reverse_iid(TrackerState state, const RiskSpec& spec,
                              const WindowConfig& window, double lambda,
                              std::span<const double> batch);

}  // namespace riskmon
