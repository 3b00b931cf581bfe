#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "riskmon/monitor.hpp"
#include "riskmon/streams.hpp"

// Experiment orchestration: the (window, batch, tracker) sweep over R seeded
// trials, summary/record/trace serialization, and guarantee validation.

namespace riskmon {

struct ExperimentConfig {
  double epsilon = 0.1;
  double delta = 0.1;
  std::vector<double> grid;  // empty → linspace(0, 1, 101)

  std::vector<std::optional<long>> windows = {std::nullopt, 200, 50, 10};
  std::vector<long> batches = {1, 10, 50};
  std::vector<TrackerConfig> trackers;  // empty → mult/sum/eb/running defaults

  Task task = Task::ter;
  ShiftSchedule schedule = ShiftSchedule::stepwise(200);
  std::string in_pool;   // ScorePool::parse spec; empty → library default
  std::string out_pool;  // likewise
  std::string input_path;  // replay a score file instead of sampling

  long trials = 50;
  long horizon = 1500;
  long burn_in = 100;  // raw observations; per-step burn-in is burn_in / B
  long oracle_batch = 1000;
  std::uint64_t seed = 1;
};

// Collects every problem with the config (empty result = valid).
std::vector<std::string> validate_config(const ExperimentConfig& config);

// Library defaults applied when the corresponding config fields are empty.
std::string default_in_pool();
std::string default_out_pool();
std::vector<TrackerConfig> default_trackers();

// One summary row per (window, batch, tracker) cell.
struct SummaryRow {
  std::optional<long> window;
  long batch = 1;
  std::string tracker;
  long trials = 0;
  DelaySummary delays;  // pooled over trials and thresholds
  double fp_gt0 = 0.0;  // fraction of thresholds with any false alarm
  double fp_gt_delta = 0.0;  // fraction with false-alarm rate > delta
  bool truth_known = true;
};

struct TrialRecords {
  std::optional<long> window;
  long batch = 1;
  std::string tracker;
  long trial = 0;
  std::vector<StoppingRecord> records;
};

struct CsTrace {
  std::optional<long> window;
  long batch = 1;
  std::string tracker;
  std::vector<double> mean_size;  // mean_size[t] over trials, t = 0..steps
};

struct ExperimentBundle {
  ExperimentConfig config;
  std::string config_hash;  // hex FNV-1a over semantic fields
  std::vector<SummaryRow> summary;
  std::vector<TrialRecords> trials;
  std::vector<CsTrace> cs_traces;
};

// Runs the full sweep. Trials are independent (seeded from the master seed)
// and run in parallel up to `workers` (0 → library/OpenMP default).
ExperimentBundle run_experiment(const ExperimentConfig& config,
                                int workers = 0);

// Hash of the semantic fields only (paths and worker counts excluded);
// printed in every output so artifacts can be matched to their config.
std::uint64_t config_hash(const ExperimentConfig& config);

// Serialization: tab-separated tables with a header row, doubles at 17
// significant digits, plus one JSON metadata document per bundle.
void write_summary(const ExperimentBundle& bundle, std::ostream& os);
void write_records(const ExperimentBundle& bundle, std::ostream& os);
void write_cs_traces(const ExperimentBundle& bundle, std::ostream& os);
void write_metadata(const ExperimentBundle& bundle, std::ostream& os);
// Writes summary.tsv, records.tsv, cs_trace.tsv, metadata.json under dir;
// removes the files it created if any write fails midway.
void write_bundle(const ExperimentBundle& bundle, const std::string& dir);

// Per-step monitor trace: statistic rows (t, tracker, psi, statistic,
// stopped) for every threshold, then cs_size rows (t, tracker, cs_size),
// t = 1..steps_run. Requires a result recorded with record_trace.
void emit_trace(const MonitorResult& result, std::ostream& os);

// Reads metadata.json and records.tsv back from a bundle directory; used by
// guarantee checking on previously written runs. Summary and traces are not
// reloaded.
ExperimentBundle read_bundle(const std::string& dir);

// Guarantee validation: no tracked threshold may show a false-alarm rate
// exceeding delta beyond exact-binomial Monte-Carlo slack.
struct GuaranteeLine {
  std::string cell;  // "tracker S=... B=..."
  long flagged = 0;  // thresholds beyond slack
  long total = 0;
  double worst_rate = 0.0;
  double worst_upper = 0.0;  // exact binomial 95% upper bound at the worst
  bool pass = false;
};

struct GuaranteeReport {
  std::vector<GuaranteeLine> lines;
  bool pass = false;  // fail-closed: empty bundle fails
  std::string message;
};

GuaranteeReport validate_guarantees(const ExperimentBundle& bundle,
                                    const RiskSpec& spec);

}  // namespace riskmon
