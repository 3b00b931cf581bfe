#include "riskmon/core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/binomial.hpp>

#include "riskmon/stats.hpp"

namespace riskmon {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                          std::uint64_t b) {
  std::uint64_t s = splitmix64(master);
  s = splitmix64(s ^ (a + 0x9E3779B97F4A7C15ULL));
  s = splitmix64(s ^ (b + 0x2545F4914F6CDD1DULL));
  return s;
}

double binomial_cdf(long k, long n, double p) {
  if (n < 0 || p < 0.0 || p > 1.0)
    throw std::domain_error("binomial_cdf: need n >= 0 and p in [0,1]");
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  boost::math::binomial_distribution<double> dist(double(n), p);
  return boost::math::cdf(dist, double(k));
}

long binomial_upper_quantile(long n, double p, double q) {
  if (q <= 0.0 || q >= 1.0)
    throw std::domain_error("binomial_upper_quantile: q must be in (0,1)");
  long lo = 0, hi = n;
  while (lo < hi) {
    long mid = lo + (hi - lo) / 2;
    if (binomial_cdf(mid, n, p) >= q)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

double clopper_pearson_upper(long k, long n, double conf) {
  if (n <= 0 || k < 0 || k > n)
    throw std::domain_error("clopper_pearson_upper: need 0 <= k <= n, n > 0");
  if (conf <= 0.0 || conf >= 1.0)
    throw std::domain_error("clopper_pearson_upper: conf must be in (0,1)");
  if (k >= n) return 1.0;
  boost::math::beta_distribution<double> dist(double(k + 1), double(n - k));
  return boost::math::quantile(dist, conf);
}

RiskSpec::RiskSpec(double epsilon, double delta)
    : epsilon_(epsilon), delta_(delta) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::domain_error("RiskSpec: epsilon must lie in (0,1)");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::domain_error("RiskSpec: delta must lie in (0,1)");
  rejection_threshold_ = 1.0 / delta_;
  log_rejection_threshold_ = -std::log(delta_);
}

ThresholdGrid::ThresholdGrid(std::vector<double> values)
    : values_(std::move(values)) {
  if (values_.empty())
    throw std::invalid_argument("ThresholdGrid: grid must be non-empty");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] >= 0.0 && values_[i] <= 1.0))
      throw std::domain_error("ThresholdGrid: values must lie in [0,1]");
    if (i > 0 && !(values_[i] > values_[i - 1]))
      throw std::invalid_argument(
          "ThresholdGrid: values must be strictly increasing");
  }
}

ThresholdGrid ThresholdGrid::linspace(double lo, double hi, std::size_t n) {
  if (n == 0) throw std::invalid_argument("ThresholdGrid: n must be >= 1");
  std::vector<double> v;
  v.reserve(n);
  if (n == 1) {
    v.push_back(lo);
  } else {
    for (std::size_t i = 0; i < n; ++i)
      v.push_back(lo + (hi - lo) * double(i) / double(n - 1));
    v.back() = hi;  // guard against rounding past the endpoint
  }
  return ThresholdGrid(std::move(v));
}

void LossRecord::validate(std::size_t grid_size) const {
  if (t < 1) throw std::invalid_argument("LossRecord: t must be >= 1");
  if (batch < 1) throw std::invalid_argument("LossRecord: batch must be >= 1");
  if (values.size() != grid_size * batch && values.size() != batch)
    throw std::invalid_argument(
        "LossRecord: values size does not match grid x batch");
  for (double z : values)
    if (!(z >= 0.0 && z <= 1.0))
      throw std::domain_error("LossRecord: losses must lie in [0,1]");
}

WindowConfig WindowConfig::make(std::optional<long> window, long batch,
                                std::optional<long> burn_in,
                                bool strict_window) {
  WindowConfig cfg;
  cfg.window = window;
  cfg.batch = batch;
  cfg.burn_in = burn_in ? *burn_in : (batch >= 1 ? 100 / batch : 0);
  cfg.strict_window = strict_window;
  cfg.validate();
  return cfg;
}

void WindowConfig::validate() const {
  if (window && *window < 1)
    throw std::invalid_argument("WindowConfig: window must be >= 1");
  if (batch < 1) throw std::invalid_argument("WindowConfig: batch must be >= 1");
  if (burn_in < 0)
    throw std::invalid_argument("WindowConfig: burn_in must be >= 0");
}

RunningMoments::RunningMoments(double seed_mean, std::optional<long> window)
    : seed_mean_(seed_mean), window_(window) {
  if (!(seed_mean >= 0.0 && seed_mean <= 1.0))
    throw std::domain_error("RunningMoments: seed mean must lie in [0,1]");
  if (window_) {
    if (*window_ < 1)
      throw std::invalid_argument("RunningMoments: window must be >= 1");
    ring_.assign(std::size_t(*window_), 0.0);
  }
  reset();
}

void RunningMoments::reset() {
  count_ = 0;
  mean_ = seed_mean_;
  var_ = 0.25;
  m2_ = 0.0;
  ring_next_ = 0;
  ring_filled_ = 0;
}

void RunningMoments::push(double z) {
  if (!(z >= 0.0 && z <= 1.0))
    throw std::domain_error("RunningMoments: value outside [0,1]");
  ++count_;
  if (!window_) {
    if (count_ == 1) {
      mean_ = z;
      m2_ = 0.0;
    } else {
      double delta = z - mean_;
      mean_ += delta / double(count_);
      m2_ += delta * (z - mean_);
    }
    var_ = m2_ / double(count_);
    return;
  }
  ring_[ring_next_] = z;
  ring_next_ = (ring_next_ + 1) % ring_.size();
  if (ring_filled_ < ring_.size()) ++ring_filled_;
  recompute_from_ring();
}

void RunningMoments::recompute_from_ring() {
  // Exact two-pass recomputation in chronological order, so windowed moments
  // are bit-identical to a fresh computation over the retained values.
  std::size_t n = ring_filled_;
  std::size_t start = (ring_filled_ < ring_.size())
                          ? 0
                          : ring_next_;  // oldest retained value
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += ring_[(start + i) % ring_.size()];
  double mean = sum / double(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = ring_[(start + i) % ring_.size()] - mean;
    ss += d * d;
  }
  mean_ = mean;
  var_ = ss / double(n);
}

bool RunningMoments::operator==(const RunningMoments& other) const {
  if (seed_mean_ != other.seed_mean_ || window_ != other.window_ ||
      count_ != other.count_ || mean_ != other.mean_ || var_ != other.var_ ||
      m2_ != other.m2_ || ring_filled_ != other.ring_filled_)
    return false;
  // Compare retained window contents in chronological order.
  if (window_) {
    std::size_t n = ring_filled_;
    std::size_t sa = (ring_filled_ < ring_.size()) ? 0 : ring_next_;
    std::size_t sb =
        (other.ring_filled_ < other.ring_.size()) ? 0 : other.ring_next_;
    for (std::size_t i = 0; i < n; ++i)
      if (ring_[(sa + i) % ring_.size()] !=
          other.ring_[(sb + i) % other.ring_.size()])
        return false;
  }
  return true;
}

RunningMoments update_moments(RunningMoments state, double z) {
  state.push(z);
  return state;
}

}  // namespace riskmon
