#pragma once

#include <optional>
#include <string>
#include <vector>

#include "riskmon/betting.hpp"
#include "riskmon/core.hpp"
#include "riskmon/streams.hpp"
#include "riskmon/trackers.hpp"

// Grid monitor: runs one tracker per threshold over a loss stream, maintains
// the threshold confidence set, and reduces stop times to per-threshold
// stopping records with false-alarm and delay summaries.

namespace riskmon {

// Set of thresholds not yet flagged (forward mode) or flagged so far
// (reverse mode). Forward membership only shrinks; reverse only grows.
class ConfidenceSet {
 public:
  explicit ConfidenceSet(std::size_t grid_size, bool reverse = false);

  void update(std::size_t psi_index, bool rejected);
  bool contains(std::size_t psi_index) const;
  std::size_t size() const;  // members in the set
  bool reverse() const { return reverse_; }

 private:
  // forward: flagged_[i] latches true on rejection, set = unflagged
  // reverse: flagged_[i] latches true on crossing, set = flagged
  std::vector<bool> flagged_;
  std::size_t flagged_count_ = 0;
  bool reverse_ = false;
};

// Outcome of one (threshold, tracker) pair over a run.
struct StoppingRecord {
  double psi = 0.0;
  std::optional<long> tau_star;  // first step with true risk > epsilon
  std::optional<long> tau;       // tracker stop time
  std::optional<long> delay;     // tau - tau_star when both present
  bool censored = false;         // no stop within the horizon
  bool false_alarm = false;
  bool truth_known = false;  // tau_star resolvable (synthetic streams only)
};

struct TrackerConfig {
  TrackerKind kind = TrackerKind::wealth_mult;
  BettingStrategy strategy = BettingStrategy::agra();
  bool track_only = false;  // accumulate but never stop (rolling-control mode)
  std::string label() const;
};

struct MonitorOptions {
  long horizon = 1000;
  bool record_trace = false;    // per-step statistic for threshold 0
  bool parallel = true;         // OpenMP across thresholds when available
  long oracle_every = 1;        // oracle cadence when truth needs estimating
};

struct TrackerTrace {
  std::string label;
  // statistic[(t-1) * grid_size + i] = tracker value for threshold i after
  // step t (log wealth for wealth trackers, running estimate otherwise)
  std::vector<double> statistic;
};

struct MonitorResult {
  ThresholdGrid grid;
  std::vector<TrackerConfig> trackers;
  // records[k][i]: tracker k, threshold i
  std::vector<std::vector<StoppingRecord>> records;
  // cs_sizes[k][t] = members after step t for tracker k; entry [0] is the
  // pre-data size (the full grid in forward mode, 0 in reverse mode).
  std::vector<std::vector<std::size_t>> cs_sizes;
  std::vector<TrackerTrace> traces;  // populated when record_trace is set
  long steps_run = 0;
};

MonitorResult run_monitor(const ThresholdGrid& grid, const RiskSpec& spec,
                          const WindowConfig& window,
                          const std::vector<TrackerConfig>& trackers,
                          LossStream& stream, const MonitorOptions& options);

// Per-threshold false-alarm rates over R aligned trials, plus the fractions
// of thresholds with any false alarm and with rate above delta. Thresholds
// without ground truth never count as alarms (fail-safe for file replays).
struct FalseAlarmSummary {
  std::vector<double> psi;
  std::vector<double> per_threshold;  // rate over trials, aligned with psi
  long thresholds_gt0 = 0;
  long thresholds_gt_delta = 0;
  double frac_gt0 = 0.0;
  double frac_gt_delta = 0.0;
};

// `trials[r]` holds one StoppingRecord per threshold; grids must align.
FalseAlarmSummary false_alarm_rate(
    const std::vector<std::vector<StoppingRecord>>& trials, double delta);

// Mean/sd/quantiles over valid detection delays (negative delays are false
// alarms and excluded); censored runs are counted but not averaged.
struct DelaySummary {
  std::size_t n = 0;          // valid delays
  std::size_t censored = 0;
  std::size_t false_alarms = 0;
  double mean = 0.0;
  double sd = 0.0;            // population sd
  double median = 0.0;
  double p90 = 0.0;
};

DelaySummary delay_summary(const std::vector<StoppingRecord>& records);

// Worst-case detection-delay check for a fixed-rate bettor: the stream sits
// at risk epsilon until T_shift, then jumps to epsilon + mu. The predicted
// scale is (log(1/delta) + T_shift*lambda*epsilon) / (lambda*mu); the report
// carries the observed Monte-Carlo mean delay and the implied constant
// C = observed / predicted.
struct DelayBoundReport {
  double predicted = 0.0;
  double observed_mean = 0.0;
  double constant = 0.0;  // observed / predicted
  std::size_t trials = 0;
  std::size_t censored = 0;
};

DelayBoundReport delay_bound_check(const RiskSpec& spec, double lambda,
                                   double mu, long T_shift,
                                   std::size_t trials = 200,
                                   long horizon = 20000,
                                   std::uint64_t seed = 20260825);

}  // namespace riskmon
