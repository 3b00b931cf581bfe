#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

// Core domain types: the risk/error budget, the candidate-threshold grid,
// batched loss records, and the running moments that feed the betting rates.
//
// Conventions used throughout the library:
//  - losses are bounded, z in [0,1]; out-of-range values are hard errors,
//    never clamped;
//  - time indices are 1-based (t = 1, 2, ..., T);
//  - variance is the population variance (divide by count);
//  - all types are value objects; updates return new state, so states for
//    different thresholds can be advanced in parallel.

namespace riskmon {

// Tolerated risk level epsilon and false-alarm budget delta. A tracker
// rejects "risk <= epsilon" when its wealth reaches 1/delta.
class RiskSpec {
 public:
  RiskSpec(double epsilon, double delta);

  double epsilon() const { return epsilon_; }
  double delta() const { return delta_; }
  double rejection_threshold() const { return rejection_threshold_; }
  // Wealth is kept in log-space; stop tests compare against this value.
  double log_rejection_threshold() const { return log_rejection_threshold_; }

 private:
  double epsilon_;
  double delta_;
  double rejection_threshold_;      // 1/delta, cached
  double log_rejection_threshold_;  // -log(delta), cached
};

// Strictly increasing candidate decision thresholds, all within [0,1].
class ThresholdGrid {
 public:
  // Empty placeholder so result types are default-constructible; the
  // validating constructor rejects empty grids.
  ThresholdGrid() = default;
  explicit ThresholdGrid(std::vector<double> values);

  // n evenly spaced points over [lo, hi] inclusive; n >= 1.
  static ThresholdGrid linspace(double lo, double hi, std::size_t n);

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<double> values_;
};

// One step of per-threshold losses. `values` holds one loss per grid point
// per batch element, laid out threshold-major: values[i * batch + b].
// When the losses are threshold-independent the record may carry a single
// row (grid size 1).
struct LossRecord {
  long t = 0;
  std::size_t batch = 1;
  std::vector<double> values;

  // Throws std::domain_error / std::invalid_argument on malformed records
  // (t < 1, empty batch, size mismatch, losses outside [0,1]).
  void validate(std::size_t grid_size) const;
};

// Sliding-window / batching configuration shared by all trackers of a run.
struct WindowConfig {
  std::optional<long> window;  // S; absent = unbounded history
  long batch = 1;              // B
  long burn_in = 100;          // t_burn; default floor(100/B)
  // When true, wealth itself is also restarted over the last S steps
  // (ablation mode); default applies the window to the betting statistics
  // only, while wealth accumulates from stream start.
  bool strict_window = false;

  // Builds a config with the default burn-in floor(100/B).
  static WindowConfig make(std::optional<long> window, long batch,
                           std::optional<long> burn_in = std::nullopt,
                           bool strict_window = false);
  void validate() const;
};

// Running mean and population variance of the per-step payoffs, either over
// the whole history or over a sliding window of the last S values (kept as
// an explicit ring buffer and recomputed exactly on each update).
//
// Before any observation the moments are seeded with mean = mu0 (the risk
// level epsilon in all current uses) and var = 0.25, the maximal variance of
// a [0,1]-bounded variable; this keeps the adaptive betting rates well
// defined at t = 1.
class RunningMoments {
 public:
  explicit RunningMoments(double seed_mean,
                          std::optional<long> window = std::nullopt);

  void push(double z);  // throws std::domain_error if z outside [0,1]
  void reset();         // back to the freshly constructed seeded state

  long count() const { return count_; }
  double mean() const { return mean_; }
  double var() const { return var_; }
  const std::optional<long>& window() const { return window_; }

  bool operator==(const RunningMoments& other) const;

 private:
  void recompute_from_ring();

  double seed_mean_;
  std::optional<long> window_;
  long count_ = 0;
  double mean_ = 0.0;
  double var_ = 0.0;
  // Welford accumulator (unwindowed mode only).
  double m2_ = 0.0;
  // Ring buffer of the last S raw values (windowed mode only).
  std::vector<double> ring_;
  std::size_t ring_next_ = 0;
  std::size_t ring_filled_ = 0;
};

// Functional form of RunningMoments::push.
RunningMoments update_moments(RunningMoments state, double z);

}  // namespace riskmon
