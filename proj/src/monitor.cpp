#include "riskmon/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>

#include "riskmon/stats.hpp"

namespace riskmon {

ConfidenceSet::ConfidenceSet(std::size_t grid_size, bool reverse)
    : flagged_(grid_size, false), reverse_(reverse) {}

void ConfidenceSet::update(std::size_t psi_index, bool rejected) {
  if (rejected && !flagged_[psi_index]) {
    flagged_[psi_index] = true;
    ++flagged_count_;
  }
}

bool ConfidenceSet::contains(std::size_t psi_index) const {
  return reverse_ ? bool(flagged_[psi_index]) : !flagged_[psi_index];
}

std::size_t ConfidenceSet::size() const {
  return reverse_ ? flagged_count_ : flagged_.size() - flagged_count_;
}

std::string TrackerConfig::label() const {
  std::string s = tracker_name(kind);
  bool wealth = kind == TrackerKind::wealth_mult ||
                kind == TrackerKind::wealth_sum ||
                kind == TrackerKind::wealth_eb ||
                kind == TrackerKind::wealth_reverse_iid;
  if (wealth) {
    s += "/";
    s += strategy.name();
    if (strategy.kind() == BettingKind::fixed) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%g", strategy.fixed_lambda());
      s += buf;
    }
  }
  if (track_only) s += "/track";
  return s;
}

namespace {

// Rejects strategy/kind pairings whose rates would leave the tracker's
// betting domain mid-run, so steps cannot throw inside the parallel loop.
void check_pairing(const RiskSpec& spec, const TrackerConfig& cfg) {
  const BettingStrategy& s = cfg.strategy;
  switch (cfg.kind) {
    case TrackerKind::wealth_mult:
    case TrackerKind::wealth_sum:
      if (s.kind() == BettingKind::fixed) rate_fixed(spec, s.fixed_lambda());
      break;
    case TrackerKind::wealth_eb:
      if (s.kind() == BettingKind::agra)
        throw std::invalid_argument(
            "wealth_eb cannot take agra rates (they may reach 1); use the "
            "eb plug-in or a fixed rate below 1");
      if (s.kind() == BettingKind::fixed &&
          !(s.fixed_lambda() >= 0.0 && s.fixed_lambda() < 1.0))
        throw std::domain_error(
            "wealth_eb fixed rate must lie in [0,1)");
      break;
    case TrackerKind::wealth_reverse_iid:
      if (s.kind() == BettingKind::fixed &&
          !(s.fixed_lambda() >= 0.0 &&
            s.fixed_lambda() < 1.0 / (1.0 - spec.epsilon())))
        throw std::domain_error(
            "reverse fixed rate must lie in [0, 1/(1-epsilon))");
      break;
    case TrackerKind::running_risk:
    case TrackerKind::oracle_risk:
      break;  // no betting rate
  }
}

TrackerState advance(TrackerState st, const RiskSpec& spec,
                     const WindowConfig& window, const TrackerConfig& cfg,
                     std::span<const double> batch) {
  switch (cfg.kind) {
    case TrackerKind::wealth_mult: {
      double lam = cfg.strategy.rate(spec, st.moments, st.t + 1);
      return step_mult(std::move(st), spec, window, lam, batch);
    }
    case TrackerKind::wealth_sum: {
      double lam = cfg.strategy.rate(spec, st.moments, st.t + 1);
      return step_sum(std::move(st), spec, window, lam, batch);
    }
    case TrackerKind::wealth_eb: {
      double lam = cfg.strategy.rate(spec, st.moments, st.t + 1);
      return step_eb(std::move(st), spec, window, lam, batch);
    }
    case TrackerKind::wealth_reverse_iid: {
      double lam =
          cfg.strategy.rate(spec, st.moments, st.t + 1, /*reverse=*/true);
      return step_reverse_iid(std::move(st), spec, window, lam, batch);
    }
    case TrackerKind::running_risk:
      return step_running(std::move(st), spec, window, batch);
    case TrackerKind::oracle_risk:
      throw std::logic_error("oracle_risk is stepped with oracle batches");
  }
  throw std::logic_error("advance: unknown tracker kind");
}

}  // namespace

MonitorResult run_monitor(const ThresholdGrid& grid, const RiskSpec& spec,
                          const WindowConfig& window,
                          const std::vector<TrackerConfig>& trackers,
                          LossStream& stream, const MonitorOptions& options) {
  window.validate();
  if (trackers.empty())
    throw std::invalid_argument("run_monitor: no trackers configured");
  if (options.horizon < 1)
    throw std::invalid_argument("run_monitor: horizon must be >= 1");
  if (options.oracle_every < 1)
    throw std::invalid_argument("run_monitor: oracle cadence must be >= 1");
  if (stream.grid_size() != grid.size() && stream.grid_size() != 1)
    throw std::invalid_argument(
        "run_monitor: stream loss vectors do not match the grid");
  for (const TrackerConfig& cfg : trackers) check_pairing(spec, cfg);

  const std::size_t n = grid.size();
  const std::size_t K = trackers.size();
  const long T = options.horizon;

  std::vector<std::vector<TrackerState>> states(K);
  std::vector<ConfidenceSet> cs;
  cs.reserve(K);
  bool needs_oracle_tracker = false;
  for (std::size_t k = 0; k < K; ++k) {
    states[k].reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      TrackerState st = init_tracker(trackers[k].kind, spec, window);
      st.track_only = trackers[k].track_only;
      states[k].push_back(std::move(st));
    }
    cs.emplace_back(n, trackers[k].kind == TrackerKind::wealth_reverse_iid);
    if (trackers[k].kind == TrackerKind::oracle_risk)
      needs_oracle_tracker = true;
  }

  // Ground truth: prefer the exact schedule risk when the stream knows it;
  // otherwise fall back to a fresh-batch oracle estimate per step.
  const bool exact_truth = stream.true_mean(0, 1).has_value();
  bool oracle_truth = !exact_truth;
  std::vector<std::optional<long>> tau_star(n);
  std::vector<TrackerState> oracle_states;
  // Stream step at which the oracle estimator was observed flagged; the
  // estimator itself counts refreshes, not steps.
  std::vector<std::optional<long>> oracle_stop_step(n);
  if (oracle_truth || needs_oracle_tracker) {
    LossRecord probe;
    if (!stream.oracle_batch(1, probe)) {
      if (needs_oracle_tracker)
        throw std::invalid_argument(
            "run_monitor: oracle_risk tracker needs a stream with oracle "
            "batches");
      oracle_truth = false;
    } else {
      probe.validate(n);
      oracle_states.reserve(n);
      WindowConfig oracle_window = WindowConfig::make(std::nullopt, 1, 0L);
      for (std::size_t i = 0; i < n; ++i)
        oracle_states.push_back(
            init_tracker(TrackerKind::oracle_risk, spec, oracle_window));
      // consume the probe batch as the step-1 oracle draw
      bool broadcast = probe.values.size() == probe.batch && n > 1;
      for (std::size_t i = 0; i < n; ++i) {
        const double* row =
            probe.values.data() + (broadcast ? 0 : i * probe.batch);
        oracle_states[i] = step_oracle(
            std::move(oracle_states[i]), spec,
            std::span<const double>(row, probe.batch));
      }
    }
  }
  const bool truth_known = exact_truth || oracle_truth;
  const bool use_oracle = !oracle_states.empty();

  MonitorResult res;
  res.grid = grid;
  res.trackers = trackers;
  res.records.assign(K, std::vector<StoppingRecord>(n));
  res.cs_sizes.assign(K, {});
  for (std::size_t k = 0; k < K; ++k) res.cs_sizes[k].push_back(cs[k].size());
  if (options.record_trace) {
    res.traces.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      res.traces[k].label = trackers[k].label();
      res.traces[k].statistic.reserve(std::size_t(T) * n);
    }
  }

  LossRecord rec;
  LossRecord oracle_rec;
  for (long t = 1; t <= T; ++t) {
    if (!stream.next(rec))
      throw std::runtime_error("run_monitor: stream ended at step " +
                               std::to_string(t) + " before horizon " +
                               std::to_string(T));
    rec.validate(n);
    const std::size_t B = rec.batch;
    const bool broadcast = rec.values.size() == B && n > 1;

    // Resolve ground truth for step t.
    if (exact_truth) {
      for (std::size_t i = 0; i < n; ++i)
        if (!tau_star[i]) {
          std::optional<double> m =
              stream.true_mean(stream.grid_size() == 1 ? 0 : i, t);
          if (m && *m > spec.epsilon()) tau_star[i] = t;
        }
    }
    if (use_oracle && (t == 1 || (t - 1) % options.oracle_every == 0)) {
      if (t > 1) {
        if (!stream.oracle_batch(t, oracle_rec))
          throw std::runtime_error(
              "run_monitor: oracle batches ended mid-stream");
        oracle_rec.validate(n);
        const bool ob = oracle_rec.values.size() == oracle_rec.batch && n > 1;
        for (std::size_t i = 0; i < n; ++i) {
          const double* row =
              oracle_rec.values.data() + (ob ? 0 : i * oracle_rec.batch);
          oracle_states[i] = step_oracle(
              std::move(oracle_states[i]), spec,
              std::span<const double>(row, oracle_rec.batch));
        }
      }
      for (std::size_t i = 0; i < n; ++i)
        if (!oracle_stop_step[i] && oracle_states[i].stopped)
          oracle_stop_step[i] = t;
      if (oracle_truth)
        for (std::size_t i = 0; i < n; ++i)
          if (!tau_star[i]) tau_star[i] = oracle_stop_step[i];
    }

    for (std::size_t k = 0; k < K; ++k) {
      if (trackers[k].kind == TrackerKind::oracle_risk) {
        // mirror of the shared oracle estimator; statistic kept per config
        continue;
      }
      std::vector<TrackerState>& row_states = states[k];
      const TrackerConfig& cfg = trackers[k];
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (options.parallel && n > 1)
#endif
      for (long ii = 0; ii < long(n); ++ii) {
        std::size_t i = std::size_t(ii);
        const double* row = rec.values.data() + (broadcast ? 0 : i * B);
        row_states[i] = advance(std::move(row_states[i]), spec, window, cfg,
                                std::span<const double>(row, B));
      }
      for (std::size_t i = 0; i < n; ++i)
        cs[k].update(i, row_states[i].stopped);
      res.cs_sizes[k].push_back(cs[k].size());
      if (options.record_trace)
        for (std::size_t i = 0; i < n; ++i)
          res.traces[k].statistic.push_back(row_states[i].statistic);
    }
    // oracle_risk tracker rows reuse the shared oracle estimator state
    for (std::size_t k = 0; k < K; ++k) {
      if (trackers[k].kind != TrackerKind::oracle_risk) continue;
      for (std::size_t i = 0; i < n; ++i) {
        states[k][i] = oracle_states[i];
        states[k][i].stop_time = oracle_stop_step[i];
        cs[k].update(i, states[k][i].stopped);
      }
      res.cs_sizes[k].push_back(cs[k].size());
      if (options.record_trace)
        for (std::size_t i = 0; i < n; ++i)
          res.traces[k].statistic.push_back(states[k][i].statistic);
    }
  }

  for (std::size_t k = 0; k < K; ++k) {
    // Reverse trackers stop to *admit* a threshold, not to raise an alarm;
    // delay and false-alarm semantics do not apply to them.
    bool reverse = trackers[k].kind == TrackerKind::wealth_reverse_iid;
    for (std::size_t i = 0; i < n; ++i) {
      StoppingRecord& r = res.records[k][i];
      r.psi = grid[i];
      r.truth_known = truth_known;
      if (truth_known) r.tau_star = tau_star[i];
      r.tau = states[k][i].stop_time;
      r.censored = !r.tau.has_value();
      if (!reverse) {
        if (r.tau && r.tau_star) r.delay = *r.tau - *r.tau_star;
        r.false_alarm =
            truth_known && r.tau && (!r.tau_star || *r.tau < *r.tau_star);
      }
    }
  }
  res.steps_run = T;
  return res;
}

FalseAlarmSummary false_alarm_rate(
    const std::vector<std::vector<StoppingRecord>>& trials, double delta) {
  if (trials.empty())
    throw std::invalid_argument("false_alarm_rate: no trials");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::domain_error("false_alarm_rate: delta must lie in (0,1)");
  const std::size_t n = trials.front().size();
  if (n == 0) throw std::invalid_argument("false_alarm_rate: empty grid");
  for (const auto& tr : trials) {
    if (tr.size() != n)
      throw std::invalid_argument("false_alarm_rate: misaligned grids");
    for (std::size_t i = 0; i < n; ++i)
      if (tr[i].psi != trials.front()[i].psi)
        throw std::invalid_argument("false_alarm_rate: misaligned grids");
  }
  FalseAlarmSummary out;
  out.psi.resize(n);
  out.per_threshold.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    out.psi[i] = trials.front()[i].psi;
    long alarms = 0;
    for (const auto& tr : trials)
      if (tr[i].false_alarm) ++alarms;
    out.per_threshold[i] = double(alarms) / double(trials.size());
    if (out.per_threshold[i] > 0.0) ++out.thresholds_gt0;
    if (out.per_threshold[i] > delta) ++out.thresholds_gt_delta;
  }
  out.frac_gt0 = double(out.thresholds_gt0) / double(n);
  out.frac_gt_delta = double(out.thresholds_gt_delta) / double(n);
  return out;
}

DelaySummary delay_summary(const std::vector<StoppingRecord>& records) {
  DelaySummary out;
  std::vector<double> delays;
  for (const StoppingRecord& r : records) {
    if (r.false_alarm) ++out.false_alarms;
    if (!r.tau && (!r.truth_known || r.tau_star)) ++out.censored;
    if (r.delay && *r.delay >= 0) delays.push_back(double(*r.delay));
  }
  out.n = delays.size();
  if (delays.empty()) {
    out.mean = out.sd = out.median = out.p90 =
        std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  double sum = 0.0;
  for (double d : delays) sum += d;
  out.mean = sum / double(delays.size());
  double ss = 0.0;
  for (double d : delays) ss += (d - out.mean) * (d - out.mean);
  out.sd = std::sqrt(ss / double(delays.size()));
  std::sort(delays.begin(), delays.end());
  std::size_t m = delays.size();
  out.median = (m % 2 == 1) ? delays[m / 2]
                            : 0.5 * (delays[m / 2 - 1] + delays[m / 2]);
  out.p90 = delays[std::min(m - 1, std::size_t(0.9 * double(m)))];
  return out;
}

DelayBoundReport delay_bound_check(const RiskSpec& spec, double lambda,
                                   double mu, long T_shift,
                                   std::size_t trials, long horizon,
                                   std::uint64_t seed) {
  if (!(mu > 0.0)) throw std::domain_error("delay_bound_check: mu must be > 0");
  rate_fixed(spec, lambda);
  if (lambda == 0.0)
    throw std::domain_error("delay_bound_check: lambda must be > 0");
  if (spec.epsilon() + mu > 1.0)
    throw std::domain_error("delay_bound_check: epsilon + mu exceeds 1");
  if (T_shift < 0 || trials == 0 || horizon <= T_shift)
    throw std::invalid_argument("delay_bound_check: bad trial geometry");

  DelayBoundReport rep;
  rep.trials = trials;
  rep.predicted = (spec.log_rejection_threshold() +
                   double(T_shift) * lambda * spec.epsilon()) /
                  (lambda * mu);
  // Burn-in is disabled here: the bound concerns the raw stopping rule.
  WindowConfig w = WindowConfig::make(std::nullopt, 1, 0L);
  double sum = 0.0;
  std::size_t stopped = 0;
  for (std::size_t r = 0; r < trials; ++r) {
    std::mt19937_64 rng(derive_seed(seed, r));
    std::bernoulli_distribution pre(spec.epsilon());
    std::bernoulli_distribution post(spec.epsilon() + mu);
    TrackerState st = init_tracker(TrackerKind::wealth_mult, spec, w);
    for (long t = 1; t <= horizon && !st.stopped; ++t) {
      double z = (t <= T_shift ? pre(rng) : post(rng)) ? 1.0 : 0.0;
      st = step_mult(std::move(st), spec, w, lambda,
                     std::span<const double>(&z, 1));
    }
    if (st.stop_time) {
      ++stopped;
      sum += double(*st.stop_time - (T_shift + 1));
    }
  }
  rep.censored = trials - stopped;
  rep.observed_mean =
      stopped ? sum / double(stopped) : std::numeric_limits<double>::quiet_NaN();
  rep.constant = rep.observed_mean / rep.predicted;
  return rep;
}

}  // namespace riskmon
