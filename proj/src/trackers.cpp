#include "riskmon/trackers.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace riskmon {

const char* tracker_name(TrackerKind kind) {
  switch (kind) {
    case TrackerKind::wealth_mult:
      return "wealth_mult";
    case TrackerKind::wealth_sum:
      return "wealth_sum";
    case TrackerKind::wealth_eb:
      return "wealth_eb";
    case TrackerKind::running_risk:
      return "running_risk";
    case TrackerKind::oracle_risk:
      return "oracle_risk";
    case TrackerKind::wealth_reverse_iid:
      return "wealth_reverse_iid";
  }
  return "unknown";
}

std::optional<TrackerKind> tracker_from_name(const std::string& name) {
  if (name == "wealth_mult" || name == "mult") return TrackerKind::wealth_mult;
  if (name == "wealth_sum" || name == "sum") return TrackerKind::wealth_sum;
  if (name == "wealth_eb" || name == "eb") return TrackerKind::wealth_eb;
  if (name == "running_risk" || name == "running")
    return TrackerKind::running_risk;
  if (name == "oracle_risk" || name == "oracle")
    return TrackerKind::oracle_risk;
  if (name == "wealth_reverse_iid" || name == "reverse")
    return TrackerKind::wealth_reverse_iid;
  return std::nullopt;
}

TrackerState init_tracker(TrackerKind kind, const RiskSpec& spec,
                          const WindowConfig& window) {
  window.validate();
  TrackerState st;
  st.kind = kind;
  st.statistic = 0.0;
  st.moments = RunningMoments(spec.epsilon(), window.window);
  if (window.strict_window && window.window &&
      kind != TrackerKind::running_risk && kind != TrackerKind::oracle_risk)
    st.increment_ring.assign(std::size_t(*window.window), 0.0);
  return st;
}

double sum_boundary(const RiskSpec& spec, long t) {
  if (t < 1) throw std::invalid_argument("sum_boundary: t must be >= 1");
  return std::sqrt(2.0 * double(t) * spec.log_rejection_threshold());
}

double eb_rho(double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0))
    throw std::domain_error("eb_rho: lambda must lie in [0,1)");
  return (-std::log1p(-lambda) - lambda) / 4.0;
}

namespace {

void check_batch(std::span<const double> batch) {
  if (batch.empty())
    throw std::invalid_argument("tracker step: empty payoff batch");
  for (double z : batch)
    if (!(z >= 0.0 && z <= 1.0))
      throw std::domain_error("tracker step: loss outside [0,1]");
}

double batch_mean(std::span<const double> batch) {
  return std::accumulate(batch.begin(), batch.end(), 0.0) /
         double(batch.size());
}

void require_kind(const TrackerState& state, TrackerKind kind) {
  if (state.kind != kind)
    throw std::invalid_argument("tracker step: state is of another kind");
}

// Adds a per-step increment to the statistic; in strict-window mode the
// statistic becomes the sum of the last S increments instead.
void apply_increment(TrackerState& state, double inc) {
  if (state.increment_ring.empty()) {
    state.statistic += inc;
    return;
  }
  state.increment_ring[state.increment_next_] = inc;
  state.increment_next_ = (state.increment_next_ + 1) % state.increment_ring.size();
  if (state.increment_filled_ < state.increment_ring.size())
    ++state.increment_filled_;
  double sum = 0.0;
  std::size_t start = (state.increment_filled_ < state.increment_ring.size())
                          ? 0
                          : state.increment_next_;
  for (std::size_t i = 0; i < state.increment_filled_; ++i)
    sum += state.increment_ring[(start + i) % state.increment_ring.size()];
  state.statistic = sum;
}

// Shared stop logic: absorbing, suppressed during burn-in and in track-only
// mode. `crossed` is the tracker's own boundary test at the current step.
void maybe_stop(TrackerState& state, const WindowConfig& window, bool crossed) {
  if (state.stopped || state.track_only) return;
  if (state.t <= window.burn_in) return;
  if (crossed) {
    state.stopped = true;
    state.stop_time = state.t;
  }
}

void check_nonfinite(double x) {
  if (!std::isfinite(x))
    throw std::runtime_error("tracker step: non-finite statistic");
}

}  // namespace

TrackerState step_mult(TrackerState state, const RiskSpec& spec,
                       const WindowConfig& window, double lambda,
                       std::span<const double> batch) {
  require_kind(state, TrackerKind::wealth_mult);
  check_batch(batch);
  if (!(lambda >= 0.0 && lambda < 1.0 / spec.epsilon()))
    throw std::domain_error("step_mult: lambda must lie in [0, 1/epsilon)");
  state.t += 1;
  // Batched factor (1/B) * sum_b (1 + lambda (z_b - eps)), formed through
  // the batch mean so constant batches reproduce the unbatched update
  // exactly; bounded below by 1 - lambda*eps > 0, so the log is safe.
  double zbar = batch_mean(batch);
  double factor = 1.0 + lambda * (zbar - spec.epsilon());
  double inc = std::log(factor);
  check_nonfinite(inc);
  apply_increment(state, inc);
  state.moments.push(zbar);
  maybe_stop(state, window,
             state.statistic >= spec.log_rejection_threshold());
  return state;
}

TrackerState step_sum(TrackerState state, const RiskSpec& spec,
                      const WindowConfig& window, double lambda,
                      std::span<const double> batch) {
  require_kind(state, TrackerKind::wealth_sum);
  check_batch(batch);
  if (!(lambda >= 0.0 && lambda < 1.0 / spec.epsilon()))
    throw std::domain_error("step_sum: lambda must lie in [0, 1/epsilon)");
  state.t += 1;
  double inc = lambda * (batch_mean(batch) - spec.epsilon());
  check_nonfinite(inc);
  apply_increment(state, inc);
  state.moments.push(batch_mean(batch));
  maybe_stop(state, window, state.statistic >= sum_boundary(spec, state.t));
  return state;
}

TrackerState step_eb(TrackerState state, const RiskSpec& spec,
                     const WindowConfig& window, double lambda,
                     std::span<const double> batch) {
  require_kind(state, TrackerKind::wealth_eb);
  check_batch(batch);
  if (!(lambda >= 0.0 && lambda < 1.0))
    throw std::domain_error("step_eb: lambda must lie in [0,1)");
  state.t += 1;
  double zbar = batch_mean(batch);
  double dev = zbar - state.moments.mean();  // against mu_{t-1}
  double v = 4.0 * dev * dev;
  double inc = lambda * (zbar - spec.epsilon()) - v * eb_rho(lambda);
  check_nonfinite(inc);
  apply_increment(state, inc);
  state.moments.push(zbar);
  maybe_stop(state, window,
             state.statistic >= spec.log_rejection_threshold());
  return state;
}

TrackerState step_running(TrackerState state, const RiskSpec& spec,
                          const WindowConfig& window,
                          std::span<const double> batch) {
  require_kind(state, TrackerKind::running_risk);
  check_batch(batch);
  state.t += 1;
  state.moments.push(batch_mean(batch));
  state.statistic = state.moments.mean();
  maybe_stop(state, window, state.statistic > spec.epsilon());
  return state;
}

TrackerState step_oracle(TrackerState state, const RiskSpec& spec,
                         std::span<const double> oracle_batch) {
  require_kind(state, TrackerKind::oracle_risk);
  check_batch(oracle_batch);
  state.t += 1;
  state.statistic = batch_mean(oracle_batch);
  // Ground-truth estimator: no burn-in, flags as soon as the fresh-batch
  // mean exceeds the risk level.
  if (!state.stopped && state.statistic > spec.epsilon()) {
    state.stopped = true;
    state.stop_time = state.t;
  }
  return state;
}

TrackerState step_reverse_iid(TrackerState state, const RiskSpec& spec,
                              const WindowConfig& window, double lambda,
                              std::span<const double> batch) {
  require_kind(state, TrackerKind::wealth_reverse_iid);
  check_batch(batch);
  if (!(lambda >= 0.0 && lambda < 1.0 / (1.0 - spec.epsilon())))
    throw std::domain_error(
        "step_reverse_iid: lambda must lie in [0, 1/(1-epsilon))");
  state.t += 1;
  double zbar = batch_mean(batch);
  double factor = 1.0 + lambda * (spec.epsilon() - zbar);
  double inc = std::log(factor);
  check_nonfinite(inc);
  apply_increment(state, inc);
  state.moments.push(zbar);
  maybe_stop(state, window,
             state.statistic >= spec.log_rejection_threshold());
  return state;
}

}  // namespace riskmon
