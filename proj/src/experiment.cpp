#include "riskmon/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "riskmon/stats.hpp"

namespace riskmon {

namespace {

// Library-default score pools for the total-error-rate analog: inliers score
// low except for a 5% saturated tail, so every mid/high threshold carries the
// same small pre-shift risk and becomes violated at the same schedule step
// once the outlier weight ramps up.
constexpr const char* kDefaultInPool = "0.95*beta(3,24)+0.05*uniform(0.97,1)";
constexpr const char* kDefaultOutPool = "beta(5,18)";

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string window_str(const std::optional<long>& w) {
  return w ? std::to_string(*w) : "none";
}

std::vector<TrackerConfig> effective_trackers(const ExperimentConfig& config) {
  if (!config.trackers.empty()) return config.trackers;
  std::vector<TrackerConfig> out(4);
  out[0] = {TrackerKind::running_risk, BettingStrategy::agra(), false};
  out[1] = {TrackerKind::wealth_mult, BettingStrategy::agra(), false};
  out[2] = {TrackerKind::wealth_sum, BettingStrategy::fixed(1.0), false};
  out[3] = {TrackerKind::wealth_eb, BettingStrategy::eb_plugin(), false};
  return out;
}

ThresholdGrid effective_grid(const ExperimentConfig& config) {
  if (config.grid.empty()) return ThresholdGrid::linspace(0.0, 1.0, 101);
  return ThresholdGrid(config.grid);
}

std::string effective_in_pool(const ExperimentConfig& config) {
  return config.in_pool.empty() ? kDefaultInPool : config.in_pool;
}

std::string effective_out_pool(const ExperimentConfig& config) {
  return config.out_pool.empty() ? kDefaultOutPool : config.out_pool;
}

}  // namespace

std::string default_in_pool() { return kDefaultInPool; }

std::string default_out_pool() { return kDefaultOutPool; }

std::vector<TrackerConfig> default_trackers() {
  return effective_trackers(ExperimentConfig{});
}

std::vector<std::string> validate_config(const ExperimentConfig& config) {
  std::vector<std::string> errors;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  check(config.epsilon > 0.0 && config.epsilon < 1.0,
        "epsilon must lie in (0,1)");
  check(config.delta > 0.0 && config.delta < 1.0, "delta must lie in (0,1)");
  if (!config.grid.empty()) {
    try {
      ThresholdGrid g(config.grid);
    } catch (const std::exception& e) {
      errors.push_back(std::string("grid: ") + e.what());
    }
  }
  check(!config.windows.empty(), "windows list must be non-empty");
  for (const auto& w : config.windows)
    if (w && *w < 1) errors.push_back("window sizes must be >= 1");
  check(!config.batches.empty(), "batches list must be non-empty");
  for (long b : config.batches)
    if (b < 1) errors.push_back("batch sizes must be >= 1");
  if (config.epsilon > 0.0 && config.epsilon < 1.0) {
    for (const TrackerConfig& t : effective_trackers(config)) {
      if (t.kind == TrackerKind::oracle_risk && !config.input_path.empty())
        errors.push_back("oracle_risk tracker needs a synthetic stream");
      if (t.strategy.kind() == BettingKind::fixed) {
        double lam = t.strategy.fixed_lambda();
        bool ok = lam >= 0.0 &&
                  (t.kind == TrackerKind::wealth_eb
                       ? lam < 1.0
                       : t.kind == TrackerKind::wealth_reverse_iid
                             ? lam < 1.0 / (1.0 - config.epsilon)
                             : lam < 1.0 / config.epsilon);
        if (!ok)
          errors.push_back("tracker " + t.label() +
                           ": fixed rate outside the betting domain");
      }
      if (t.kind == TrackerKind::wealth_eb &&
          t.strategy.kind() == BettingKind::agra)
        errors.push_back("wealth_eb cannot take agra rates");
    }
  }
  try {
    ScorePool::parse(effective_in_pool(config));
  } catch (const std::exception& e) {
    errors.push_back(std::string("in_pool: ") + e.what());
  }
  try {
    ScorePool::parse(effective_out_pool(config));
  } catch (const std::exception& e) {
    errors.push_back(std::string("out_pool: ") + e.what());
  }
  if (!config.input_path.empty() &&
      !std::filesystem::exists(config.input_path))
    errors.push_back("input file '" + config.input_path + "' does not exist");
  check(config.trials >= 1, "trials must be >= 1");
  if (config.input_path.empty())
    check(config.horizon >= 1, "horizon must be >= 1");
  else
    check(config.horizon >= 0,
          "horizon must be >= 0 (0 = full input length)");
  check(config.burn_in >= 0, "burn_in must be >= 0");
  check(config.oracle_batch >= 1, "oracle_batch must be >= 1");
  return errors;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::ostringstream os;
  os << "epsilon=" << fmt17(config.epsilon) << ";delta=" << fmt17(config.delta)
     << ";grid=";
  if (config.grid.empty()) {
    os << "linspace(0,1,101)";
  } else {
    for (double v : config.grid) os << fmt17(v) << ",";
  }
  os << ";windows=";
  for (const auto& w : config.windows) os << window_str(w) << ",";
  os << ";batches=";
  for (long b : config.batches) os << b << ",";
  os << ";trackers=";
  for (const TrackerConfig& t : effective_trackers(config))
    os << t.label() << ",";
  os << ";task=" << task_name(config.task)
     << ";schedule=" << config.schedule.describe()
     << ";in_pool=" << ScorePool::parse(effective_in_pool(config)).describe()
     << ";out_pool=" << ScorePool::parse(effective_out_pool(config)).describe()
     << ";input=" << config.input_path << ";trials=" << config.trials
     << ";horizon=" << config.horizon << ";burn_in=" << config.burn_in
     << ";oracle_batch=" << config.oracle_batch << ";seed=" << config.seed;
  const std::string s = os.str();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

ExperimentBundle run_experiment(const ExperimentConfig& config, int workers) {
  {
    std::vector<std::string> errors = validate_config(config);
    if (!errors.empty()) {
      std::string msg = "invalid config:";
      for (const std::string& e : errors) msg += "\n  - " + e;
      throw std::invalid_argument(msg);
    }
  }
  const RiskSpec spec(config.epsilon, config.delta);
  const ThresholdGrid grid = effective_grid(config);
  const std::vector<TrackerConfig> trackers = effective_trackers(config);
  const ScorePool in_pool = ScorePool::parse(effective_in_pool(config));
  const ScorePool out_pool = ScorePool::parse(effective_out_pool(config));

  std::optional<IngestedScores> file_scores;
  if (!config.input_path.empty())
    file_scores = ingest_scores(config.input_path, config.task);

  ExperimentBundle bundle;
  bundle.config = config;
  {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx",
                  (unsigned long long)config_hash(config));
    bundle.config_hash = buf;
  }

  const long R = config.trials;
#ifdef _OPENMP
  const int nthreads = workers > 0 ? workers : omp_get_max_threads();
#else
  (void)workers;
#endif

  std::size_t cell_index = 0;
  for (const std::optional<long>& S : config.windows) {
    for (long B : config.batches) {
      const WindowConfig window = WindowConfig::make(S, B, config.burn_in / B);
      const std::size_t Rn = std::size_t(R);
      std::vector<MonitorResult> results(Rn);
      std::vector<std::string> failures(Rn);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
#endif
      for (long r = 0; r < R; ++r) {
        try {
          std::uint64_t seed =
              derive_seed(config.seed, cell_index, std::uint64_t(r));
          std::unique_ptr<LossStream> stream;
          long horizon = config.horizon;
          if (file_scores) {
            auto fs = std::make_unique<FileLossStream>(*file_scores, grid);
            if (horizon == 0) horizon = fs->steps();
            stream = std::move(fs);
          } else {
            stream = std::make_unique<MixtureLossStream>(
                grid, config.task, config.schedule, in_pool, out_pool, B,
                seed, config.oracle_batch);
          }
          MonitorOptions options;
          options.horizon = horizon;
          options.record_trace = false;
          options.parallel = false;  // parallelism lives at the trial level
          results[std::size_t(r)] =
              run_monitor(grid, spec, window, trackers, *stream, options);
        } catch (const std::exception& e) {
          failures[std::size_t(r)] = e.what();
        }
      }
      for (long r = 0; r < R; ++r)
        if (!failures[std::size_t(r)].empty())
          throw std::runtime_error("trial " + std::to_string(r) + " failed: " +
                                   failures[std::size_t(r)]);

      for (std::size_t k = 0; k < trackers.size(); ++k) {
        std::vector<std::vector<StoppingRecord>> per_trial;
        per_trial.reserve(std::size_t(R));
        std::vector<StoppingRecord> pooled;
        for (long r = 0; r < R; ++r) {
          per_trial.push_back(results[std::size_t(r)].records[k]);
          pooled.insert(pooled.end(), results[std::size_t(r)].records[k].begin(),
                        results[std::size_t(r)].records[k].end());
        }
        FalseAlarmSummary fa = false_alarm_rate(per_trial, config.delta);

        SummaryRow row;
        row.window = S;
        row.batch = B;
        row.tracker = trackers[k].label();
        row.trials = R;
        row.delays = delay_summary(pooled);
        row.fp_gt0 = fa.frac_gt0;
        row.fp_gt_delta = fa.frac_gt_delta;
        row.truth_known = pooled.front().truth_known;
        bundle.summary.push_back(row);

        for (long r = 0; r < R; ++r)
          bundle.trials.push_back(TrialRecords{
              S, B, trackers[k].label(), r, results[std::size_t(r)].records[k]});

        CsTrace trace;
        trace.window = S;
        trace.batch = B;
        trace.tracker = trackers[k].label();
        const std::size_t steps = results[0].cs_sizes[k].size();
        trace.mean_size.assign(steps, 0.0);
        for (long r = 0; r < R; ++r)
          for (std::size_t t = 0; t < steps; ++t)
            trace.mean_size[t] +=
                double(results[std::size_t(r)].cs_sizes[k][t]);
        for (std::size_t t = 0; t < steps; ++t)
          trace.mean_size[t] /= double(R);
        bundle.cs_traces.push_back(std::move(trace));
      }
      ++cell_index;
    }
  }
  return bundle;
}

namespace {

std::string opt_str(const std::optional<long>& v) {
  return v ? std::to_string(*v) : "na";
}

void check_stream(std::ostream& os, const std::string& what) {
  if (!os.good())
    throw std::runtime_error("failed writing " + what);
}

}  // namespace

void write_summary(const ExperimentBundle& bundle, std::ostream& os) {
  os << "window\tbatch\ttracker\ttrials\tdelays\tdelay_mean\tdelay_sd\t"
        "delay_median\tcensored\tfalse_alarms\tfp_gt0\tfp_gt_delta\t"
        "truth_known\tconfig_hash\tseed\n";
  for (const SummaryRow& r : bundle.summary) {
    os << window_str(r.window) << "\t" << r.batch << "\t" << r.tracker << "\t"
       << r.trials << "\t" << r.delays.n << "\t"
       << (r.delays.n ? fmt17(r.delays.mean) : "na") << "\t"
       << (r.delays.n ? fmt17(r.delays.sd) : "na") << "\t"
       << (r.delays.n ? fmt17(r.delays.median) : "na") << "\t"
       << r.delays.censored << "\t" << r.delays.false_alarms << "\t"
       << fmt17(r.fp_gt0) << "\t" << fmt17(r.fp_gt_delta) << "\t"
       << (r.truth_known ? 1 : 0) << "\t" << bundle.config_hash << "\t"
       << bundle.config.seed << "\n";
  }
  check_stream(os, "summary table");
}

void write_records(const ExperimentBundle& bundle, std::ostream& os) {
  os << "window\tbatch\ttracker\ttrial\tpsi\ttau_star\ttau\tdelay\tcensored\t"
        "false_alarm\ttruth_known\n";
  for (const TrialRecords& tr : bundle.trials) {
    for (const StoppingRecord& r : tr.records) {
      os << window_str(tr.window) << "\t" << tr.batch << "\t" << tr.tracker
         << "\t" << tr.trial << "\t" << fmt17(r.psi) << "\t"
         << opt_str(r.tau_star) << "\t" << opt_str(r.tau) << "\t"
         << opt_str(r.delay) << "\t" << (r.censored ? 1 : 0) << "\t"
         << (r.false_alarm ? 1 : 0) << "\t" << (r.truth_known ? 1 : 0)
         << "\n";
    }
  }
  check_stream(os, "records table");
}

void write_cs_traces(const ExperimentBundle& bundle, std::ostream& os) {
  os << "window\tbatch\ttracker\tt\tmean_cs_size\n";
  for (const CsTrace& tr : bundle.cs_traces)
    for (std::size_t t = 0; t < tr.mean_size.size(); ++t)
      os << window_str(tr.window) << "\t" << tr.batch << "\t" << tr.tracker
         << "\t" << t << "\t" << fmt17(tr.mean_size[t]) << "\n";
  check_stream(os, "cs-size trace table");
}

void write_metadata(const ExperimentBundle& bundle, std::ostream& os) {
  nlohmann::json j;
  const ExperimentConfig& c = bundle.config;
  j["config_hash"] = bundle.config_hash;
  j["epsilon"] = c.epsilon;
  j["delta"] = c.delta;
  j["rejection_threshold"] = 1.0 / c.delta;
  j["grid_points"] = effective_grid(c).size();
  j["grid_lo"] = effective_grid(c).values().front();
  j["grid_hi"] = effective_grid(c).values().back();
  std::vector<std::string> windows;
  for (const auto& w : c.windows) windows.push_back(window_str(w));
  j["windows"] = windows;
  j["batches"] = c.batches;
  std::vector<std::string> trackers;
  for (const TrackerConfig& t : effective_trackers(c))
    trackers.push_back(t.label());
  j["trackers"] = trackers;
  j["task"] = task_name(c.task);
  j["schedule"] = c.schedule.describe();
  j["in_pool"] = ScorePool::parse(effective_in_pool(c)).describe();
  j["out_pool"] = ScorePool::parse(effective_out_pool(c)).describe();
  j["input"] = c.input_path;
  j["trials"] = c.trials;
  j["horizon"] = c.horizon;
  j["burn_in"] = c.burn_in;
  j["oracle_batch"] = c.oracle_batch;
  j["seed"] = c.seed;
  j["cs_size_t0"] = effective_grid(c).size();
  j["delay_convention"] =
      "delays measured in stream steps including burn-in; negative delays "
      "are counted as false alarms and excluded from delay means";
  os << j.dump(2) << "\n";
  check_stream(os, "metadata document");
}

void write_bundle(const ExperimentBundle& bundle, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<fs::path> written;
  auto emit = [&](const char* name, auto&& writer) {
    fs::path p = fs::path(dir) / name;
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot open '" + p.string() + "'");
    written.push_back(p);
    writer(os);
    os.flush();
    if (!os.good())
      throw std::runtime_error("failed writing '" + p.string() + "'");
  };
  try {
    emit("summary.tsv", [&](std::ostream& os) { write_summary(bundle, os); });
    emit("records.tsv", [&](std::ostream& os) { write_records(bundle, os); });
    emit("cs_trace.tsv",
         [&](std::ostream& os) { write_cs_traces(bundle, os); });
    emit("metadata.json",
         [&](std::ostream& os) { write_metadata(bundle, os); });
  } catch (...) {
    for (const fs::path& p : written) {
      std::error_code ec;
      fs::remove(p, ec);  // partial outputs are removed on abort
    }
    throw;
  }
}

void emit_trace(const MonitorResult& result, std::ostream& os) {
  if (result.traces.empty())
    throw std::invalid_argument("emit_trace: result carries no trace");
  const std::size_t n = result.grid.size();
  os << "t\ttracker\tpsi\tstatistic\tstopped\tcs_size\n";
  for (long t = 1; t <= result.steps_run; ++t) {
    for (std::size_t k = 0; k < result.traces.size(); ++k) {
      const TrackerTrace& tr = result.traces[k];
      for (std::size_t i = 0; i < n; ++i) {
        const StoppingRecord& r = result.records[k][i];
        bool stopped = r.tau && *r.tau <= t;
        os << t << "\t" << tr.label << "\t" << fmt17(result.grid[i]) << "\t"
           << fmt17(tr.statistic[std::size_t(t - 1) * n + i]) << "\t"
           << (stopped ? 1 : 0) << "\tna\n";
      }
    }
  }
  for (long t = 1; t <= result.steps_run; ++t)
    for (std::size_t k = 0; k < result.traces.size(); ++k)
      os << t << "\t" << result.traces[k].label << "\tna\tna\tna\t"
         << result.cs_sizes[k][std::size_t(t)] << "\n";
  check_stream(os, "trace table");
}

GuaranteeReport validate_guarantees(const ExperimentBundle& bundle,
                                    const RiskSpec& spec) {
  GuaranteeReport report;
  if (bundle.trials.empty()) {
    report.pass = false;
    report.message = "no trials";
    return report;
  }
  // Group trial records by (window, batch, tracker) cell.
  std::map<std::string, std::vector<const TrialRecords*>> cells;
  for (const TrialRecords& tr : bundle.trials) {
    std::string key = tr.tracker + " S=" + window_str(tr.window) +
                      " B=" + std::to_string(tr.batch);
    cells[key].push_back(&tr);
  }
  bool all_pass = true;
  for (const auto& [key, trs] : cells) {
    const long R = long(trs.size());
    const std::size_t n = trs.front()->records.size();
    const long slack = binomial_upper_quantile(R, spec.delta(), 0.95);
    GuaranteeLine line;
    line.cell = key;
    line.total = long(n);
    long worst = -1;
    for (std::size_t i = 0; i < n; ++i) {
      long alarms = 0;
      for (const TrialRecords* tr : trs)
        if (tr->records[i].false_alarm) ++alarms;
      if (alarms > slack) ++line.flagged;
      if (alarms > worst) {
        worst = alarms;
        line.worst_rate = double(alarms) / double(R);
        line.worst_upper = clopper_pearson_upper(alarms, R, 0.95);
      }
    }
    line.pass = line.flagged == 0;
    all_pass = all_pass && line.pass;
    report.lines.push_back(std::move(line));
  }
  report.pass = all_pass;
  report.message = all_pass ? "all tracked cells within the false-alarm budget"
                            : "false-alarm budget exceeded in at least one cell";
  return report;
}

ExperimentBundle read_bundle(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path meta_path = fs::path(dir) / "metadata.json";
  const fs::path records_path = fs::path(dir) / "records.tsv";

  ExperimentBundle bundle;
  {
    std::ifstream is(meta_path);
    if (!is)
      throw std::runtime_error("cannot open '" + meta_path.string() + "'");
    nlohmann::json j = nlohmann::json::parse(is);
    bundle.config_hash = j.value("config_hash", "");
    bundle.config.epsilon = j.value("epsilon", 0.1);
    bundle.config.delta = j.value("delta", 0.1);
    bundle.config.trials = j.value("trials", 0L);
    bundle.config.horizon = j.value("horizon", 0L);
    bundle.config.seed = j.value("seed", std::uint64_t(0));
  }

  std::ifstream is(records_path);
  if (!is)
    throw std::runtime_error("cannot open '" + records_path.string() + "'");
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error(records_path.string() + ": empty records table");
  long lineno = 1;
  auto parse_opt = [](const std::string& s) -> std::optional<long> {
    if (s == "na") return std::nullopt;
    return std::stol(s);
  };
  TrialRecords* current = nullptr;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cur;
    for (char c : line) {
      if (c == '\t') {
        f.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur += c;
      }
    }
    f.push_back(cur);
    if (f.size() != 11)
      throw std::runtime_error(records_path.string() + ":" +
                               std::to_string(lineno) +
                               ": expected 11 columns");
    std::optional<long> window;
    if (f[0] != "none") window = std::stol(f[0]);
    long batch = std::stol(f[1]);
    long trial = std::stol(f[3]);
    if (!current || current->tracker != f[2] || current->trial != trial ||
        current->window != window || current->batch != batch) {
      bundle.trials.push_back(TrialRecords{window, batch, f[2], trial, {}});
      current = &bundle.trials.back();
    }
    StoppingRecord r;
    r.psi = std::stod(f[4]);
    r.tau_star = parse_opt(f[5]);
    r.tau = parse_opt(f[6]);
    r.delay = parse_opt(f[7]);
    r.censored = f[8] == "1";
    r.false_alarm = f[9] == "1";
    r.truth_known = f[10] == "1";
    current->records.push_back(r);
  }
  return bundle;
}

}  // namespace riskmon
