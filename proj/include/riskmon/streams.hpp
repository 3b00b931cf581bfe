#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "riskmon/core.hpp"

// Loss-stream production: task losses computed from scores, parametric score
// pools, shift schedules, synthetic mixture streams, and file ingestion.

namespace riskmon {

enum class Task { ter, miscoverage_cls, miscoverage_reg };

const char* task_name(Task task);
std::optional<Task> task_from_name(const std::string& name);

enum class Source { none, in, out };

// One scored observation. `score` carries the outlier score (TER) or the
// true-class probability (classification miscoverage); regression records
// carry the prediction/truth pair instead.
struct ScoreRecord {
  long t = 0;
  double score = 0.0;
  Source source = Source::none;
  double yhat = 0.0;
  double y = 0.0;
};

// Task losses. All are pure, total on their domains, and {0,1}-valued.
double ter_loss(const ScoreRecord& rec, double psi);
double miscoverage_loss_cls(const ScoreRecord& rec, double psi);
double miscoverage_loss_reg(const ScoreRecord& rec, double psi);
double task_loss(Task task, const ScoreRecord& rec, double psi);

// Time-indexed outlier mixture weight pi_out(t).
class ShiftSchedule {
 public:
  enum class Kind { iid, immediate, stepwise, custom };

  static ShiftSchedule iid();
  static ShiftSchedule immediate(long shift_at = 1);
  // pi increases over {0, 0.05, 0.10, ..., 1} every t_out steps.
  static ShiftSchedule stepwise(long t_out = 200);
  static ShiftSchedule custom(std::vector<double> pi);  // pi[t-1] per step

  Kind kind() const { return kind_; }
  long t_out() const { return t_out_; }
  double pi_out(long t) const;  // t >= 1; custom schedules must cover t
  std::string describe() const;

 private:
  Kind kind_ = Kind::iid;
  long t_out_ = 200;
  long shift_at_ = 1;
  std::vector<double> custom_pi_;
};

// A score distribution: a weighted mixture of Beta(a,b) components (optionally
// scaled into [0,scale]), uniform segments, and empirical pools. Supplies both
// sampling and exact tail probabilities, so synthetic streams know their true
// per-threshold risk at every step.
class ScorePool {
 public:
  struct Beta {
    double a, b;
    double scale = 1.0;
  };
  struct Uniform {
    double lo, hi;
  };
  struct Empirical {
    std::vector<double> values;  // sorted on construction
  };
  using Component = std::variant<Beta, Uniform, Empirical>;

  static ScorePool beta(double a, double b, double scale = 1.0);
  static ScorePool uniform(double lo, double hi);
  static ScorePool empirical(std::vector<double> values);
  static ScorePool mixture(std::vector<std::pair<double, ScorePool>> parts);

  // Parses "beta(a,b)", "beta(a,b,scale)", "uniform(lo,hi)" and weighted
  // mixtures like "0.9*beta(1.6,9)+0.1*uniform(0.45,1)".
  static ScorePool parse(const std::string& text);

  double sample(std::mt19937_64& rng) const;
  double prob_geq(double x) const;  // P(score >= x)
  double prob_gt(double x) const;   // P(score >  x)
  std::string describe() const;

 private:
  ScorePool() = default;
  std::vector<double> weights_;  // strictly positive, sum to 1
  std::vector<Component> components_;
};

// Draws one observation at step t: source ~ Bernoulli(pi_out(t)), then a
// score from the matching pool, shaped for the given task (regression packs
// the drawn score into a (yhat, y) pair with |y - yhat| equal to the score).
ScoreRecord sample_mixture(const ShiftSchedule& schedule, long t,
                           std::mt19937_64& rng, const ScorePool& in_pool,
                           const ScorePool& out_pool, Task task = Task::ter);

// Abstract per-step loss supplier consumed by the monitor. Implementations
// are sequential (they own RNG state); independent trials use independently
// seeded stream instances.
class LossStream {
 public:
  virtual ~LossStream() = default;

  // Produces the step-t record (t advances by 1 per call, starting at 1).
  // Returns false when the stream is exhausted.
  virtual bool next(LossRecord& out) = 0;

  // Exact per-threshold mean loss at step t, when the generating process is
  // known; monitors use it to compute the true violation time.
  virtual std::optional<double> true_mean(std::size_t /*psi_index*/,
                                          long /*t*/) const {
    return std::nullopt;
  }

  // Fresh oracle batch for ground-truth estimation (independent draws from
  // the step-t distribution), or false when unsupported.
  virtual bool oracle_batch(long /*t*/, LossRecord& /*out*/) { return false; }

  virtual std::size_t grid_size() const = 0;
};

// Synthetic stream over a threshold grid: at each step draws B mixture
// observations and evaluates the task loss against every threshold. Knows
// its exact risk curve, so true_mean and oracle batches are available.
class MixtureLossStream : public LossStream {
 public:
  MixtureLossStream(const ThresholdGrid& grid, Task task,
                    ShiftSchedule schedule, ScorePool in_pool,
                    ScorePool out_pool, long batch, std::uint64_t seed,
                    long oracle_batch_size = 1000);

  bool next(LossRecord& out) override;
  std::optional<double> true_mean(std::size_t psi_index, long t) const override;
  bool oracle_batch(long t, LossRecord& out) override;
  std::size_t grid_size() const override { return grid_.size(); }

 private:
  void fill(LossRecord& out, long t, long batch, std::mt19937_64& rng);

  ThresholdGrid grid_;
  Task task_;
  ShiftSchedule schedule_;
  ScorePool in_pool_;
  ScorePool out_pool_;
  long batch_;
  long oracle_batch_size_;
  long t_ = 0;
  std::mt19937_64 rng_;
  std::mt19937_64 oracle_rng_;
  // P(loss = 1) at pi = 0 and pi = 1 per threshold; risk at any step is the
  // pi_out(t)-weighted interpolation.
  std::vector<double> risk_in_;
  std::vector<double> risk_out_;
};

// Scalar stream with a known mean profile m(t): every step draws B
// Bernoulli(m(t)) losses shared across the (typically single-point) grid.
class ProfileLossStream : public LossStream {
 public:
  ProfileLossStream(std::function<double(long)> mean_profile, long batch,
                    std::uint64_t seed, std::size_t grid_size = 1,
                    long oracle_batch_size = 1000);

  bool next(LossRecord& out) override;
  std::optional<double> true_mean(std::size_t psi_index, long t) const override;
  bool oracle_batch(long t, LossRecord& out) override;
  std::size_t grid_size() const override { return grid_size_; }

 private:
  std::function<double(long)> mean_;
  long batch_;
  long oracle_batch_size_;
  std::size_t grid_size_;
  long t_ = 0;
  std::mt19937_64 rng_;
  std::mt19937_64 oracle_rng_;
};

// Parsed score file: validated, time-ordered records grouped into fixed-size
// batches (consecutive records sharing t form one batch).
struct IngestedScores {
  Task task = Task::ter;
  long batch = 1;
  std::vector<ScoreRecord> records;  // grouped: batch consecutive rows per step
  std::size_t steps() const { return records.size() / std::size_t(batch); }
};

// Reads a delimited score file (header row; columns per task: TER "t,score,
// source", classification "t,score", regression "t,yhat,y"). Parse errors
// carry the offending 1-based physical line number.
IngestedScores ingest_scores(const std::string& path, Task task);

// Replays ingested scores against a grid. No ground truth is available.
class FileLossStream : public LossStream {
 public:
  FileLossStream(IngestedScores scores, const ThresholdGrid& grid);

  bool next(LossRecord& out) override;
  std::size_t grid_size() const override { return grid_.size(); }
  long batch() const { return scores_.batch; }
  long steps() const { return long(scores_.steps()); }

 private:
  IngestedScores scores_;
  ThresholdGrid grid_;
  long t_ = 0;
};

}  // namespace riskmon
