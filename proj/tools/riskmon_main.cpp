// Command-line front end. Four subcommands cover the pipeline end to end:
// `simulate` writes synthetic score streams, `monitor` runs trackers over a
// stream or file, `sweep` runs the (window, batch, tracker) experiment grid,
// and `check` validates the false-alarm guarantee on a written bundle.
// Exit code is nonzero iff validation or a guarantee check fails.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "riskmon/experiment.hpp"

using namespace riskmon;

namespace {

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string opt_str(const std::optional<long>& v) {
  return v ? std::to_string(*v) : "na";
}

// --- shared flag groups -----------------------------------------------------

struct ScheduleFlags {
  std::string kind = "stepwise";
  long t_out = 200;
  long shift_at = 1;
};

void add_schedule_flags(CLI::App* cmd, ScheduleFlags& flags) {
  cmd->add_option("--schedule", flags.kind,
                  "outlier mixture schedule: iid, immediate, or stepwise")
      ->check(CLI::IsMember({"iid", "immediate", "stepwise"}))
      ->capture_default_str();
  cmd->add_option("--t-out", flags.t_out,
                  "steps per stepwise increment of the outlier weight")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--shift-at", flags.shift_at,
                  "first all-outlier step of the immediate schedule")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

ShiftSchedule build_schedule(const ScheduleFlags& flags) {
  if (flags.kind == "iid") return ShiftSchedule::iid();
  if (flags.kind == "immediate")
    return ShiftSchedule::immediate(flags.shift_at);
  return ShiftSchedule::stepwise(flags.t_out);
}

void add_pool_flags(CLI::App* cmd, std::string& in_pool,
                    std::string& out_pool) {
  cmd->add_option("--in-pool", in_pool,
                  "inlier score distribution, e.g. "
                  "'0.9*beta(1.6,9)+0.1*uniform(0.45,1)' (default: " +
                      default_in_pool() + ")");
  cmd->add_option("--out-pool", out_pool,
                  "outlier score distribution (default: " +
                      default_out_pool() + ")");
}

void add_workers_flag(CLI::App* cmd, int& workers) {
  cmd->add_option("--workers", workers,
                  "parallel worker count (0 = all available cores)")
      ->envname("RISKMON_WORKERS")
      ->check(CLI::NonNegativeNumber);
}

void apply_workers(int workers) {
#ifdef _OPENMP
  if (workers > 0) omp_set_num_threads(workers);
#else
  (void)workers;
#endif
}

// --- tracker specs ----------------------------------------------------------

double parse_rate(const std::string& text, const std::string& spec) {
  try {
    std::size_t pos = 0;
    double v = std::stod(text, &pos);
    if (pos == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("bad rate '" + text + "' in tracker spec '" +
                              spec + "'");
}

BettingStrategy default_strategy(TrackerKind kind) {
  if (kind == TrackerKind::wealth_sum) return BettingStrategy::fixed(1.0);
  if (kind == TrackerKind::wealth_eb) return BettingStrategy::eb_plugin();
  return BettingStrategy::agra();
}

// "kind[:strategy[:value]][:track]", e.g. "wealth_mult", "wealth_sum:agra",
// "wealth_sum:fixed:1:track", "wealth_eb:eb:0.4".
TrackerConfig parse_tracker(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.empty()) throw std::invalid_argument("empty tracker spec");

  TrackerConfig out;
  std::optional<TrackerKind> kind = tracker_from_name(parts[0]);
  if (!kind)
    throw std::invalid_argument("unknown tracker kind '" + parts[0] + "'");
  out.kind = *kind;
  out.strategy = default_strategy(*kind);

  std::size_t i = 1;
  if (i < parts.size() && parts[i] != "track") {
    const std::string& s = parts[i++];
    if (s == "agra") {
      out.strategy = BettingStrategy::agra();
    } else if (s == "eb") {
      double cap = 0.5;
      if (i < parts.size() && parts[i] != "track")
        cap = parse_rate(parts[i++], text);
      out.strategy = BettingStrategy::eb_plugin(cap);
    } else if (s == "fixed") {
      if (i >= parts.size() || parts[i] == "track")
        throw std::invalid_argument("tracker spec '" + text +
                                    "' needs a rate: kind:fixed:<lambda>");
      out.strategy = BettingStrategy::fixed(parse_rate(parts[i++], text));
    } else {
      throw std::invalid_argument("unknown betting strategy '" + s +
                                  "' in tracker spec '" + text + "'");
    }
  }
  if (i < parts.size() && parts[i] == "track") {
    out.track_only = true;
    ++i;
  }
  if (i != parts.size())
    throw std::invalid_argument("trailing tokens in tracker spec '" + text +
                                "'");
  return out;
}

std::vector<TrackerConfig> parse_trackers(
    const std::vector<std::string>& specs) {
  if (specs.empty()) return default_trackers();
  std::vector<TrackerConfig> out;
  out.reserve(specs.size());
  for (const std::string& s : specs) out.push_back(parse_tracker(s));
  return out;
}

std::optional<long> parse_window(const std::string& text) {
  if (text == "none") return std::nullopt;
  try {
    std::size_t pos = 0;
    long v = std::stol(text, &pos);
    if (pos == text.size() && v >= 1) return v;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("window must be 'none' or a positive integer, "
                              "got '" +
                              text + "'");
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string out_path;
  std::string task_name = "ter";
  ScheduleFlags schedule;
  std::string in_pool;
  std::string out_pool;
  long steps = 1500;
  long batch = 1;
  std::uint64_t seed = 1;
};

int run_simulate(const SimulateArgs& a) {
  Task task = *task_from_name(a.task_name);
  ScorePool in =
      ScorePool::parse(a.in_pool.empty() ? default_in_pool() : a.in_pool);
  ScorePool out =
      ScorePool::parse(a.out_pool.empty() ? default_out_pool() : a.out_pool);
  ShiftSchedule schedule = build_schedule(a.schedule);

  std::ofstream os(a.out_path);
  if (!os)
    throw std::runtime_error("cannot open '" + a.out_path + "' for writing");
  switch (task) {
    case Task::ter:
      os << "t\tscore\tsource\n";
      break;
    case Task::miscoverage_cls:
      os << "t\tscore\n";
      break;
    case Task::miscoverage_reg:
      os << "t\tyhat\ty\n";
      break;
  }

  std::mt19937_64 rng(a.seed);
  for (long t = 1; t <= a.steps; ++t) {
    for (long b = 0; b < a.batch; ++b) {
      ScoreRecord rec = sample_mixture(schedule, t, rng, in, out, task);
      switch (task) {
        case Task::ter:
          os << t << '\t' << fmt17(rec.score) << '\t'
             << (rec.source == Source::out ? "out" : "in") << '\n';
          break;
        case Task::miscoverage_cls:
          os << t << '\t' << fmt17(rec.score) << '\n';
          break;
        case Task::miscoverage_reg:
          os << t << '\t' << fmt17(rec.yhat) << '\t' << fmt17(rec.y) << '\n';
          break;
      }
    }
  }
  if (!os) throw std::runtime_error("write to '" + a.out_path + "' failed");
  std::cout << "wrote " << a.steps * a.batch << " scores (" << a.steps
            << " steps x batch " << a.batch << ") to " << a.out_path << "\n";
  return 0;
}

// --- monitor ----------------------------------------------------------------

struct MonitorArgs {
  std::string input;
  std::string task_name = "ter";
  double epsilon = 0.1;
  double delta = 0.1;
  std::vector<double> grid;
  std::size_t grid_n = 101;
  std::string window = "none";
  long batch = 1;
  long burn_in = -1;  // raw observations; negative = default 100
  bool strict_window = false;
  std::vector<std::string> trackers;
  ScheduleFlags schedule;
  std::string in_pool;
  std::string out_pool;
  long horizon = 1500;
  bool horizon_given = false;
  long oracle_batch = 1000;
  long oracle_every = 1;
  bool serial = false;
  std::uint64_t seed = 1;
  std::string trace_path;
  std::string out_path;
  int workers = 0;
};

int run_monitor_cmd(const MonitorArgs& a) {
  apply_workers(a.workers);
  Task task = *task_from_name(a.task_name);
  ThresholdGrid grid = a.grid.empty()
                           ? ThresholdGrid::linspace(0.0, 1.0, a.grid_n)
                           : ThresholdGrid(a.grid);
  RiskSpec spec(a.epsilon, a.delta);
  std::vector<TrackerConfig> trackers = parse_trackers(a.trackers);

  std::unique_ptr<LossStream> stream;
  long batch = a.batch;
  long horizon = a.horizon;
  if (!a.input.empty()) {
    auto file_stream = std::make_unique<FileLossStream>(
        ingest_scores(a.input, task), grid);
    batch = file_stream->batch();
    if (!a.horizon_given) horizon = file_stream->steps();
    stream = std::move(file_stream);
  } else {
    stream = std::make_unique<MixtureLossStream>(
        grid, task, build_schedule(a.schedule),
        ScorePool::parse(a.in_pool.empty() ? default_in_pool() : a.in_pool),
        ScorePool::parse(a.out_pool.empty() ? default_out_pool()
                                            : a.out_pool),
        a.batch, a.seed, a.oracle_batch);
  }

  WindowConfig window = WindowConfig::make(
      parse_window(a.window), batch,
      a.burn_in < 0 ? std::nullopt
                    : std::optional<long>(a.burn_in / batch),
      a.strict_window);

  MonitorOptions options;
  options.horizon = horizon;
  options.record_trace = !a.trace_path.empty();
  options.parallel = !a.serial;
  options.oracle_every = a.oracle_every;

  MonitorResult result =
      run_monitor(grid, spec, window, trackers, *stream, options);

  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!a.out_path.empty()) {
    file.open(a.out_path);
    if (!file)
      throw std::runtime_error("cannot open '" + a.out_path +
                               "' for writing");
    os = &file;
  }
  *os << "tracker\tpsi\ttau_star\ttau\tdelay\tcensored\tfalse_alarm\t"
         "truth_known\n";
  for (std::size_t k = 0; k < result.trackers.size(); ++k) {
    const std::string label = result.trackers[k].label();
    for (const StoppingRecord& r : result.records[k])
      *os << label << '\t' << fmt17(r.psi) << '\t' << opt_str(r.tau_star)
          << '\t' << opt_str(r.tau) << '\t' << opt_str(r.delay) << '\t'
          << (r.censored ? 1 : 0) << '\t' << (r.false_alarm ? 1 : 0) << '\t'
          << (r.truth_known ? 1 : 0) << '\n';
  }
  if (!*os) throw std::runtime_error("writing the records table failed");

  for (std::size_t k = 0; k < result.trackers.size(); ++k) {
    DelaySummary ds = delay_summary(result.records[k]);
    std::cerr << result.trackers[k].label() << ": " << ds.n << " stops, "
              << ds.censored << " censored, " << ds.false_alarms
              << " false alarms";
    if (ds.n > 0) std::cerr << ", mean delay " << ds.mean;
    std::cerr << "\n";
  }

  if (!a.trace_path.empty()) {
    std::ofstream trace(a.trace_path);
    if (!trace)
      throw std::runtime_error("cannot open '" + a.trace_path +
                               "' for writing");
    emit_trace(result, trace);
  }
  return 0;
}

// --- sweep ------------------------------------------------------------------

struct SweepArgs {
  double epsilon = 0.1;
  double delta = 0.1;
  std::vector<double> grid;
  std::size_t grid_n = 101;
  std::vector<std::string> windows = {"none", "200", "50", "10"};
  std::vector<long> batches = {1, 10, 50};
  std::vector<std::string> trackers;
  std::string task_name = "ter";
  ScheduleFlags schedule;
  std::string in_pool;
  std::string out_pool;
  std::string input;
  long trials = 50;
  long horizon = 1500;
  long burn_in = 100;
  long oracle_batch = 1000;
  std::uint64_t seed = 1;
  std::string out_dir;
  int workers = 0;
};

int run_sweep(const SweepArgs& a) {
  apply_workers(a.workers);
  ExperimentConfig c;
  c.epsilon = a.epsilon;
  c.delta = a.delta;
  if (!a.grid.empty())
    c.grid = a.grid;
  else if (a.grid_n != 101)
    c.grid = ThresholdGrid::linspace(0.0, 1.0, a.grid_n).values();

  // Collect every conversion problem before validating, so a bad flag set
  // reports all its errors in one pass.
  std::vector<std::string> errors;
  c.windows.clear();
  for (const std::string& w : a.windows) {
    try {
      c.windows.push_back(parse_window(w));
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
  }
  c.batches = a.batches;
  for (const std::string& spec : a.trackers) {
    try {
      c.trackers.push_back(parse_tracker(spec));
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
  }
  c.task = *task_from_name(a.task_name);
  c.schedule = build_schedule(a.schedule);
  c.in_pool = a.in_pool;
  c.out_pool = a.out_pool;
  c.input_path = a.input;
  c.trials = a.trials;
  c.horizon = a.horizon;
  c.burn_in = a.burn_in;
  c.oracle_batch = a.oracle_batch;
  c.seed = a.seed;

  for (std::string& e : validate_config(c)) errors.push_back(std::move(e));
  if (!errors.empty()) {
    for (const std::string& e : errors) std::cerr << "config error: " << e << "\n";
    return 1;
  }

  ExperimentBundle bundle = run_experiment(c, a.workers);
  write_summary(bundle, std::cout);
  if (!a.out_dir.empty()) {
    write_bundle(bundle, a.out_dir);
    std::cerr << "bundle " << bundle.config_hash << " written to " << a.out_dir
              << "\n";
  }
  return 0;
}

// --- check ------------------------------------------------------------------

int run_check(const std::string& bundle_dir) {
  ExperimentBundle bundle = read_bundle(bundle_dir);
  RiskSpec spec(bundle.config.epsilon, bundle.config.delta);
  GuaranteeReport report = validate_guarantees(bundle, spec);
  for (const GuaranteeLine& line : report.lines)
    std::printf("%s %s: %ld/%ld thresholds beyond slack; worst rate %g "
                "(95%% upper %g)\n",
                line.pass ? "PASS" : "FAIL", line.cell.c_str(), line.flagged,
                line.total, line.worst_rate, line.worst_upper);
  std::cout << report.message << "\n";
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming risk monitor: anytime-valid per-threshold violation "
               "detection via betting trackers"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "option defaults from an INI/TOML file, one [section] per "
                 "subcommand; command-line flags override it");

  SimulateArgs sim;
  CLI::App* sim_cmd =
      app.add_subcommand("simulate", "generate a synthetic score stream file");
  sim_cmd->add_option("-o,--out", sim.out_path, "output score file")
      ->required();
  sim_cmd
      ->add_option("--task", sim.task_name,
                   "loss task: ter, miscoverage_cls, or miscoverage_reg")
      ->check(CLI::IsMember({"ter", "miscoverage_cls", "miscoverage_reg"}))
      ->capture_default_str();
  add_schedule_flags(sim_cmd, sim.schedule);
  add_pool_flags(sim_cmd, sim.in_pool, sim.out_pool);
  sim_cmd->add_option("--steps", sim.steps, "stream length in steps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sim_cmd->add_option("--batch", sim.batch, "observations per step")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed, "stream seed")
      ->capture_default_str();

  MonitorArgs mon;
  CLI::App* mon_cmd = app.add_subcommand(
      "monitor", "run trackers over a score file or a synthetic stream");
  mon_cmd->add_option("-i,--input", mon.input,
                      "score file to replay (omit for a synthetic stream)");
  mon_cmd
      ->add_option("--task", mon.task_name,
                   "loss task: ter, miscoverage_cls, or miscoverage_reg")
      ->check(CLI::IsMember({"ter", "miscoverage_cls", "miscoverage_reg"}))
      ->capture_default_str();
  mon_cmd->add_option("--epsilon", mon.epsilon, "tolerated risk level")
      ->capture_default_str();
  mon_cmd->add_option("--delta", mon.delta, "false-alarm budget")
      ->capture_default_str();
  CLI::Option* mon_grid =
      mon_cmd->add_option("--grid", mon.grid, "explicit threshold values");
  mon_cmd
      ->add_option("--grid-n", mon.grid_n,
                   "evenly spaced thresholds over [0,1]")
      ->check(CLI::PositiveNumber)
      ->capture_default_str()
      ->excludes(mon_grid);
  mon_cmd
      ->add_option("--window", mon.window,
                   "sliding window for the betting statistics: 'none' or S")
      ->capture_default_str();
  mon_cmd
      ->add_option("--batch", mon.batch,
                   "observations per step (synthetic streams; files carry "
                   "their own batch)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  mon_cmd->add_option("--burn-in", mon.burn_in,
                      "observations before stopping is allowed (default 100)");
  mon_cmd->add_flag("--strict-window", mon.strict_window,
                    "restart the statistic itself over the window (ablation)");
  mon_cmd->add_option(
      "--trackers", mon.trackers,
      "tracker specs kind[:strategy[:value]][:track]; kinds: running_risk, "
      "wealth_mult, wealth_sum, wealth_eb, oracle_risk, wealth_reverse_iid; "
      "strategies: agra, fixed:<lambda>, eb[:<cap>]");
  add_schedule_flags(mon_cmd, mon.schedule);
  add_pool_flags(mon_cmd, mon.in_pool, mon.out_pool);
  CLI::Option* mon_horizon =
      mon_cmd->add_option("--horizon", mon.horizon, "steps to run")
          ->check(CLI::PositiveNumber)
          ->capture_default_str();
  mon_cmd
      ->add_option("--oracle-batch", mon.oracle_batch,
                   "fresh draws per step for ground-truth estimation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  mon_cmd
      ->add_option("--oracle-every", mon.oracle_every,
                   "steps between oracle evaluations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  mon_cmd->add_flag("--serial", mon.serial,
                    "disable the parallel per-threshold kernel");
  mon_cmd->add_option("--seed", mon.seed, "stream seed")
      ->capture_default_str();
  mon_cmd->add_option("--trace", mon.trace_path,
                      "write the per-step statistic/set-size trace here");
  mon_cmd->add_option("-o,--out", mon.out_path,
                      "write the stopping-record table here (default stdout)");
  add_workers_flag(mon_cmd, mon.workers);

  SweepArgs sweep;
  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "run the (window, batch, tracker) grid over seeded trials");
  sweep_cmd->add_option("--epsilon", sweep.epsilon, "tolerated risk level")
      ->capture_default_str();
  sweep_cmd->add_option("--delta", sweep.delta, "false-alarm budget")
      ->capture_default_str();
  CLI::Option* sweep_grid =
      sweep_cmd->add_option("--grid", sweep.grid, "explicit threshold values");
  sweep_cmd
      ->add_option("--grid-n", sweep.grid_n,
                   "evenly spaced thresholds over [0,1]")
      ->check(CLI::PositiveNumber)
      ->capture_default_str()
      ->excludes(sweep_grid);
  sweep_cmd
      ->add_option("--windows", sweep.windows,
                   "sliding-window sizes to sweep ('none' allowed)")
      ->capture_default_str();
  sweep_cmd->add_option("--batches", sweep.batches, "batch sizes to sweep")
      ->capture_default_str();
  sweep_cmd->add_option(
      "--trackers", sweep.trackers,
      "tracker specs kind[:strategy[:value]][:track] (default: running_risk, "
      "wealth_mult, wealth_sum:fixed:1, wealth_eb)");
  sweep_cmd
      ->add_option("--task", sweep.task_name,
                   "loss task: ter, miscoverage_cls, or miscoverage_reg")
      ->check(CLI::IsMember({"ter", "miscoverage_cls", "miscoverage_reg"}))
      ->capture_default_str();
  add_schedule_flags(sweep_cmd, sweep.schedule);
  add_pool_flags(sweep_cmd, sweep.in_pool, sweep.out_pool);
  sweep_cmd->add_option("-i,--input", sweep.input,
                        "score file to replay instead of sampling");
  sweep_cmd->add_option("--trials", sweep.trials, "independent trials")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sweep_cmd->add_option("--horizon", sweep.horizon, "steps per trial")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sweep_cmd
      ->add_option("--burn-in", sweep.burn_in,
                   "observations before stopping is allowed")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sweep_cmd
      ->add_option("--oracle-batch", sweep.oracle_batch,
                   "fresh draws per step for ground-truth estimation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sweep_cmd->add_option("--seed", sweep.seed, "master seed")
      ->capture_default_str();
  sweep_cmd->add_option("-o,--out-dir", sweep.out_dir,
                        "write summary/records/traces/metadata here");
  add_workers_flag(sweep_cmd, sweep.workers);

  std::string bundle_dir;
  CLI::App* check_cmd = app.add_subcommand(
      "check", "validate the false-alarm guarantee on a written bundle");
  check_cmd
      ->add_option("-b,--bundle", bundle_dir, "bundle directory from sweep")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim_cmd->parsed()) return run_simulate(sim);
    if (mon_cmd->parsed()) {
      mon.horizon_given = mon_horizon->count() > 0;
      return run_monitor_cmd(mon);
    }
    if (sweep_cmd->parsed()) return run_sweep(sweep);
    return run_check(bundle_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
