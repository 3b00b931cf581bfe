#include "riskmon/streams.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <boost/math/special_functions/beta.hpp>

#include "riskmon/stats.hpp"

namespace riskmon {

const char* task_name(Task task) {
  switch (task) {
    case Task::ter:
      return "ter";
    case Task::miscoverage_cls:
      return "miscoverage_cls";
    case Task::miscoverage_reg:
      return "miscoverage_reg";
  }
  return "unknown";
}

std::optional<Task> task_from_name(const std::string& name) {
  if (name == "ter") return Task::ter;
  if (name == "miscoverage_cls" || name == "cls") return Task::miscoverage_cls;
  if (name == "miscoverage_reg" || name == "reg") return Task::miscoverage_reg;
  return std::nullopt;
}

double ter_loss(const ScoreRecord& rec, double psi) {
  if (rec.source == Source::none)
    throw std::invalid_argument("ter_loss: record has no in/out source");
  if (rec.source == Source::in) return rec.score >= psi ? 1.0 : 0.0;
  return rec.score < psi ? 1.0 : 0.0;
}

double miscoverage_loss_cls(const ScoreRecord& rec, double psi) {
  return rec.score < psi ? 1.0 : 0.0;
}

double miscoverage_loss_reg(const ScoreRecord& rec, double psi) {
  return std::abs(rec.y - rec.yhat) > psi ? 1.0 : 0.0;
}

double task_loss(Task task, const ScoreRecord& rec, double psi) {
  switch (task) {
    case Task::ter:
      return ter_loss(rec, psi);
    case Task::miscoverage_cls:
      return miscoverage_loss_cls(rec, psi);
    case Task::miscoverage_reg:
      return miscoverage_loss_reg(rec, psi);
  }
  throw std::logic_error("task_loss: unknown task");
}

ShiftSchedule ShiftSchedule::iid() { return ShiftSchedule(); }

ShiftSchedule ShiftSchedule::immediate(long shift_at) {
  if (shift_at < 1)
    throw std::invalid_argument("ShiftSchedule: shift_at must be >= 1");
  ShiftSchedule s;
  s.kind_ = Kind::immediate;
  s.shift_at_ = shift_at;
  return s;
}

ShiftSchedule ShiftSchedule::stepwise(long t_out) {
  if (t_out < 1)
    throw std::invalid_argument("ShiftSchedule: t_out must be >= 1");
  ShiftSchedule s;
  s.kind_ = Kind::stepwise;
  s.t_out_ = t_out;
  return s;
}

ShiftSchedule ShiftSchedule::custom(std::vector<double> pi) {
  if (pi.empty())
    throw std::invalid_argument("ShiftSchedule: custom profile is empty");
  for (double p : pi)
    if (!(p >= 0.0 && p <= 1.0))
      throw std::domain_error("ShiftSchedule: pi values must lie in [0,1]");
  ShiftSchedule s;
  s.kind_ = Kind::custom;
  s.custom_pi_ = std::move(pi);
  return s;
}

double ShiftSchedule::pi_out(long t) const {
  if (t < 1) throw std::invalid_argument("ShiftSchedule: t must be >= 1");
  switch (kind_) {
    case Kind::iid:
      return 0.0;
    case Kind::immediate:
      return t >= shift_at_ ? 1.0 : 0.0;
    case Kind::stepwise:
      return std::min(0.05 * double((t - 1) / t_out_), 1.0);
    case Kind::custom:
      if (std::size_t(t) > custom_pi_.size())
        throw std::out_of_range("ShiftSchedule: custom profile ends before t");
      return custom_pi_[std::size_t(t - 1)];
  }
  throw std::logic_error("ShiftSchedule: unknown kind");
}

std::string ShiftSchedule::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::iid:
      os << "iid";
      break;
    case Kind::immediate:
      os << "immediate@" << shift_at_;
      break;
    case Kind::stepwise:
      os << "stepwise(t_out=" << t_out_ << ")";
      break;
    case Kind::custom:
      os << "custom(n=" << custom_pi_.size() << ")";
      break;
  }
  return os.str();
}

namespace {

std::string format_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

}  // namespace

ScorePool ScorePool::beta(double a, double b, double scale) {
  if (!(a > 0.0) || !(b > 0.0))
    throw std::domain_error("ScorePool: beta parameters must be positive");
  if (!(scale > 0.0 && scale <= 1.0))
    throw std::domain_error("ScorePool: beta scale must lie in (0,1]");
  ScorePool p;
  p.weights_ = {1.0};
  p.components_ = {Beta{a, b, scale}};
  return p;
}

ScorePool ScorePool::uniform(double lo, double hi) {
  if (!(lo >= 0.0 && lo < hi && hi <= 1.0))
    throw std::domain_error("ScorePool: uniform needs 0 <= lo < hi <= 1");
  ScorePool p;
  p.weights_ = {1.0};
  p.components_ = {Uniform{lo, hi}};
  return p;
}

ScorePool ScorePool::empirical(std::vector<double> values) {
  if (values.empty())
    throw std::invalid_argument("ScorePool: empirical pool is empty");
  for (double v : values)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::domain_error("ScorePool: empirical values must lie in [0,1]");
  std::sort(values.begin(), values.end());
  ScorePool p;
  p.weights_ = {1.0};
  p.components_ = {Empirical{std::move(values)}};
  return p;
}

ScorePool ScorePool::mixture(std::vector<std::pair<double, ScorePool>> parts) {
  if (parts.empty())
    throw std::invalid_argument("ScorePool: mixture has no parts");
  ScorePool p;
  double total = 0.0;
  for (auto& [w, pool] : parts) {
    if (!(w > 0.0))
      throw std::domain_error("ScorePool: mixture weights must be positive");
    total += w;
  }
  for (auto& [w, pool] : parts) {
    for (std::size_t i = 0; i < pool.components_.size(); ++i) {
      p.weights_.push_back(w / total * pool.weights_[i]);
      p.components_.push_back(pool.components_[i]);
    }
  }
  return p;
}

double ScorePool::sample(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::size_t pick = components_.size() - 1;
  if (components_.size() > 1) {
    double u = unif(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      acc += weights_[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
  }
  const Component& c = components_[pick];
  if (const Beta* b = std::get_if<Beta>(&c)) {
    std::gamma_distribution<double> ga(b->a, 1.0), gb(b->b, 1.0);
    double x = ga(rng), y = gb(rng);
    double v = (x + y > 0.0) ? x / (x + y) : 0.0;
    return v * b->scale;
  }
  if (const Uniform* u = std::get_if<Uniform>(&c)) {
    std::uniform_real_distribution<double> d(u->lo, u->hi);
    return d(rng);
  }
  const Empirical& e = std::get<Empirical>(c);
  std::uniform_int_distribution<std::size_t> d(0, e.values.size() - 1);
  return e.values[d(rng)];
}

namespace {

double component_prob_geq(const ScorePool::Component& c, double x) {
  if (const ScorePool::Beta* b = std::get_if<ScorePool::Beta>(&c)) {
    if (x <= 0.0) return 1.0;
    if (x >= b->scale) return 0.0;  // continuous: P(= scale) is 0
    return boost::math::ibetac(b->a, b->b, x / b->scale);
  }
  if (const ScorePool::Uniform* u = std::get_if<ScorePool::Uniform>(&c)) {
    if (x <= u->lo) return 1.0;
    if (x >= u->hi) return 0.0;
    return (u->hi - x) / (u->hi - u->lo);
  }
  const ScorePool::Empirical& e = std::get<ScorePool::Empirical>(c);
  auto it = std::lower_bound(e.values.begin(), e.values.end(), x);
  return double(e.values.end() - it) / double(e.values.size());
}

double component_prob_gt(const ScorePool::Component& c, double x) {
  if (std::holds_alternative<ScorePool::Empirical>(c)) {
    const ScorePool::Empirical& e = std::get<ScorePool::Empirical>(c);
    auto it = std::upper_bound(e.values.begin(), e.values.end(), x);
    return double(e.values.end() - it) / double(e.values.size());
  }
  return component_prob_geq(c, x);  // continuous components: P(=x) = 0
}

}  // namespace

double ScorePool::prob_geq(double x) const {
  double p = 0.0;
  for (std::size_t i = 0; i < components_.size(); ++i)
    p += weights_[i] * component_prob_geq(components_[i], x);
  return p;
}

double ScorePool::prob_gt(double x) const {
  double p = 0.0;
  for (std::size_t i = 0; i < components_.size(); ++i)
    p += weights_[i] * component_prob_gt(components_[i], x);
  return p;
}

std::string ScorePool::describe() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    if (i > 0) os << "+";
    if (components_.size() > 1) os << format_number(weights_[i]) << "*";
    const Component& c = components_[i];
    if (const Beta* b = std::get_if<Beta>(&c)) {
      os << "beta(" << format_number(b->a) << "," << format_number(b->b);
      if (b->scale != 1.0) os << "," << format_number(b->scale);
      os << ")";
    } else if (const Uniform* u = std::get_if<Uniform>(&c)) {
      os << "uniform(" << format_number(u->lo) << "," << format_number(u->hi)
         << ")";
    } else {
      os << "empirical(n="
         << std::get<Empirical>(c).values.size() << ")";
    }
  }
  return os.str();
}

namespace {

// Recursive-descent parser for pool expressions:
//   expr   := term ('+' term)*
//   term   := (number '*')? atom
//   atom   := 'beta(' number ',' number (',' number)? ')'
//           | 'uniform(' number ',' number ')'
struct PoolParser {
  const std::string& text;
  std::size_t pos = 0;

  explicit PoolParser(const std::string& t) : text(t) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("pool spec '" + text + "': " + what);
  }

  void skip_ws() {
    while (pos < text.size() && std::isspace(unsigned(text[pos]))) ++pos;
  }

  bool consume(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  double number() {
    skip_ws();
    std::size_t used = 0;
    double v;
    try {
      v = std::stod(text.substr(pos), &used);
    } catch (const std::exception&) {
      fail("expected a number at position " + std::to_string(pos));
    }
    pos += used;
    return v;
  }

  std::string ident() {
    skip_ws();
    std::size_t start = pos;
    while (pos < text.size() && std::isalpha(unsigned(text[pos]))) ++pos;
    if (start == pos) fail("expected a pool name at position " +
                           std::to_string(pos));
    return text.substr(start, pos - start);
  }

  ScorePool atom() {
    std::string name = ident();
    if (!consume('(')) fail("expected '(' after '" + name + "'");
    std::vector<double> args;
    args.push_back(number());
    while (consume(',')) args.push_back(number());
    if (!consume(')')) fail("expected ')' in '" + name + "' arguments");
    if (name == "beta") {
      if (args.size() == 2) return ScorePool::beta(args[0], args[1]);
      if (args.size() == 3)
        return ScorePool::beta(args[0], args[1], args[2]);
      fail("beta takes 2 or 3 arguments");
    }
    if (name == "uniform") {
      if (args.size() == 2) return ScorePool::uniform(args[0], args[1]);
      fail("uniform takes 2 arguments");
    }
    fail("unknown pool '" + name + "' (expected beta or uniform)");
  }

  std::pair<double, ScorePool> term() {
    skip_ws();
    if (pos < text.size() && (std::isdigit(unsigned(text[pos])) ||
                              text[pos] == '.' || text[pos] == '-')) {
      double w = number();
      if (!consume('*')) fail("expected '*' after a mixture weight");
      return {w, atom()};
    }
    return {1.0, atom()};
  }

  ScorePool parse() {
    std::vector<std::pair<double, ScorePool>> parts;
    parts.push_back(term());
    while (consume('+')) parts.push_back(term());
    skip_ws();
    if (pos != text.size())
      fail("unexpected trailing text at position " + std::to_string(pos));
    if (parts.size() == 1 && parts[0].first == 1.0)
      return std::move(parts[0].second);
    return ScorePool::mixture(std::move(parts));
  }
};

}  // namespace

ScorePool ScorePool::parse(const std::string& text) {
  PoolParser p(text);
  try {
    return p.parse();
  } catch (const std::domain_error& e) {
    // factory rejections (bad parameters) surface like any other parse error
    throw std::invalid_argument("pool spec '" + text + "': " + e.what());
  }
}

ScoreRecord sample_mixture(const ShiftSchedule& schedule, long t,
                           std::mt19937_64& rng, const ScorePool& in_pool,
                           const ScorePool& out_pool, Task task) {
  double pi = schedule.pi_out(t);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  bool out = unif(rng) < pi;
  const ScorePool& pool = out ? out_pool : in_pool;
  ScoreRecord rec;
  rec.t = t;
  rec.source = out ? Source::out : Source::in;
  rec.score = pool.sample(rng);
  if (task == Task::miscoverage_reg) {
    rec.yhat = 0.5;
    rec.y = 0.5 + rec.score;
  }
  return rec;
}

MixtureLossStream::MixtureLossStream(const ThresholdGrid& grid, Task task,
                                     ShiftSchedule schedule, ScorePool in_pool,
                                     ScorePool out_pool, long batch,
                                     std::uint64_t seed,
                                     long oracle_batch_size)
    : grid_(grid),
      task_(task),
      schedule_(std::move(schedule)),
      in_pool_(std::move(in_pool)),
      out_pool_(std::move(out_pool)),
      batch_(batch),
      oracle_batch_size_(oracle_batch_size),
      rng_(derive_seed(seed, 0)),
      oracle_rng_(derive_seed(seed, 1)) {
  if (batch_ < 1)
    throw std::invalid_argument("MixtureLossStream: batch must be >= 1");
  if (oracle_batch_size_ < 1)
    throw std::invalid_argument(
        "MixtureLossStream: oracle batch must be >= 1");
  risk_in_.resize(grid_.size());
  risk_out_.resize(grid_.size());
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    double psi = grid_[i];
    switch (task_) {
      case Task::ter:
        risk_in_[i] = in_pool_.prob_geq(psi);        // inlier flagged
        risk_out_[i] = 1.0 - out_pool_.prob_geq(psi);  // outlier missed
        break;
      case Task::miscoverage_cls:
        risk_in_[i] = 1.0 - in_pool_.prob_geq(psi);  // p < psi
        risk_out_[i] = 1.0 - out_pool_.prob_geq(psi);
        break;
      case Task::miscoverage_reg:
        risk_in_[i] = in_pool_.prob_gt(psi);  // residual > psi
        risk_out_[i] = out_pool_.prob_gt(psi);
        break;
    }
  }
}

void MixtureLossStream::fill(LossRecord& out, long t, long batch,
                             std::mt19937_64& rng) {
  out.t = t;
  out.batch = std::size_t(batch);
  out.values.assign(grid_.size() * std::size_t(batch), 0.0);
  for (long b = 0; b < batch; ++b) {
    ScoreRecord rec =
        sample_mixture(schedule_, t, rng, in_pool_, out_pool_, task_);
    for (std::size_t i = 0; i < grid_.size(); ++i)
      out.values[i * std::size_t(batch) + std::size_t(b)] =
          task_loss(task_, rec, grid_[i]);
  }
}

bool MixtureLossStream::next(LossRecord& out) {
  ++t_;
  fill(out, t_, batch_, rng_);
  return true;
}

std::optional<double> MixtureLossStream::true_mean(std::size_t psi_index,
                                                   long t) const {
  double pi = schedule_.pi_out(t);
  return (1.0 - pi) * risk_in_[psi_index] + pi * risk_out_[psi_index];
}

bool MixtureLossStream::oracle_batch(long t, LossRecord& out) {
  fill(out, t, oracle_batch_size_, oracle_rng_);
  return true;
}

ProfileLossStream::ProfileLossStream(std::function<double(long)> mean_profile,
                                     long batch, std::uint64_t seed,
                                     std::size_t grid_size,
                                     long oracle_batch_size)
    : mean_(std::move(mean_profile)),
      batch_(batch),
      oracle_batch_size_(oracle_batch_size),
      grid_size_(grid_size),
      rng_(derive_seed(seed, 0)),
      oracle_rng_(derive_seed(seed, 1)) {
  if (!mean_) throw std::invalid_argument("ProfileLossStream: null profile");
  if (batch_ < 1)
    throw std::invalid_argument("ProfileLossStream: batch must be >= 1");
  if (grid_size_ < 1)
    throw std::invalid_argument("ProfileLossStream: grid size must be >= 1");
}

bool ProfileLossStream::next(LossRecord& out) {
  ++t_;
  double m = mean_(t_);
  if (!(m >= 0.0 && m <= 1.0))
    throw std::domain_error("ProfileLossStream: profile mean outside [0,1]");
  std::bernoulli_distribution d(m);
  out.t = t_;
  out.batch = std::size_t(batch_);
  out.values.assign(std::size_t(batch_), 0.0);
  for (long b = 0; b < batch_; ++b)
    out.values[std::size_t(b)] = d(rng_) ? 1.0 : 0.0;
  return true;
}

std::optional<double> ProfileLossStream::true_mean(std::size_t, long t) const {
  return mean_(t);
}

bool ProfileLossStream::oracle_batch(long t, LossRecord& out) {
  double m = mean_(t);
  std::bernoulli_distribution d(m);
  out.t = t;
  out.batch = std::size_t(oracle_batch_size_);
  out.values.assign(std::size_t(oracle_batch_size_), 0.0);
  for (long b = 0; b < oracle_batch_size_; ++b)
    out.values[std::size_t(b)] = d(oracle_rng_) ? 1.0 : 0.0;
  return true;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t' || c == ',' || c == ' ') {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

[[noreturn]] void parse_fail(const std::string& path, long line,
                             const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& path, long line, const std::string& s,
                    const char* what) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    parse_fail(path, line, std::string("invalid ") + what + " '" + s + "'");
  }
}

long parse_long(const std::string& path, long line, const std::string& s,
                const char* what) {
  try {
    std::size_t used = 0;
    long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    parse_fail(path, line, std::string("invalid ") + what + " '" + s + "'");
  }
}

}  // namespace

IngestedScores ingest_scores(const std::string& path, Task task) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open score file '" + path + "'");

  std::vector<std::string> expected;
  switch (task) {
    case Task::ter:
      expected = {"t", "score", "source"};
      break;
    case Task::miscoverage_cls:
      expected = {"t", "score"};
      break;
    case Task::miscoverage_reg:
      expected = {"t", "yhat", "y"};
      break;
  }

  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) parse_fail(path, 1, "missing header row");
  ++lineno;
  if (split_fields(line) != expected) {
    std::string want;
    for (const auto& c : expected) want += (want.empty() ? "" : ",") + c;
    parse_fail(path, lineno, "header must be '" + want + "'");
  }

  IngestedScores out;
  out.task = task;
  long group_batch = 0;    // size of the first complete group
  long current_t = 0;      // time index of the open group
  long current_count = 0;  // rows in the open group

  auto close_group = [&](long at_line) {
    if (current_count == 0) return;
    if (group_batch == 0) {
      group_batch = current_count;
    } else if (current_count != group_batch) {
      parse_fail(path, at_line,
                 "batch size changed from " + std::to_string(group_batch) +
                     " to " + std::to_string(current_count) + " at t=" +
                     std::to_string(current_t));
    }
  };

  while (std::getline(in, line)) {
    ++lineno;
    std::vector<std::string> f = split_fields(line);
    if (f.empty()) continue;  // blank line
    if (f.size() != expected.size())
      parse_fail(path, lineno,
                 "expected " + std::to_string(expected.size()) +
                     " columns, found " + std::to_string(f.size()));
    ScoreRecord rec;
    rec.t = parse_long(path, lineno, f[0], "time index");
    if (rec.t < 1) parse_fail(path, lineno, "time index must be >= 1");
    switch (task) {
      case Task::ter: {
        rec.score = parse_double(path, lineno, f[1], "score");
        if (!(rec.score >= 0.0 && rec.score <= 1.0))
          parse_fail(path, lineno, "score " + f[1] + " outside [0,1]");
        if (f[2] == "in")
          rec.source = Source::in;
        else if (f[2] == "out")
          rec.source = Source::out;
        else
          parse_fail(path, lineno, "source must be 'in' or 'out', got '" +
                                       f[2] + "'");
        break;
      }
      case Task::miscoverage_cls: {
        rec.score = parse_double(path, lineno, f[1], "score");
        if (!(rec.score >= 0.0 && rec.score <= 1.0))
          parse_fail(path, lineno, "score " + f[1] + " outside [0,1]");
        break;
      }
      case Task::miscoverage_reg: {
        rec.yhat = parse_double(path, lineno, f[1], "yhat");
        rec.y = parse_double(path, lineno, f[2], "y");
        if (!std::isfinite(rec.yhat) || !std::isfinite(rec.y))
          parse_fail(path, lineno, "yhat/y must be finite");
        break;
      }
    }
    if (rec.t == current_t) {
      ++current_count;
    } else {
      if (rec.t < current_t)
        parse_fail(path, lineno,
                   "time index decreases (" + std::to_string(current_t) +
                       " then " + std::to_string(rec.t) + ")");
      close_group(lineno);
      current_t = rec.t;
      current_count = 1;
    }
    out.records.push_back(rec);
  }
  close_group(lineno + 1);
  if (out.records.empty()) parse_fail(path, lineno, "no data rows");
  out.batch = group_batch;
  return out;
}

FileLossStream::FileLossStream(IngestedScores scores, const ThresholdGrid& grid)
    : scores_(std::move(scores)), grid_(grid) {
  if (scores_.task == Task::ter)
    for (const ScoreRecord& r : scores_.records)
      if (r.source == Source::none)
        throw std::invalid_argument("FileLossStream: TER needs in/out labels");
}

bool FileLossStream::next(LossRecord& out) {
  if (std::size_t(t_) >= scores_.steps()) return false;
  ++t_;
  long batch = scores_.batch;
  out.t = t_;
  out.batch = std::size_t(batch);
  out.values.assign(grid_.size() * std::size_t(batch), 0.0);
  const ScoreRecord* rows =
      scores_.records.data() + std::size_t(t_ - 1) * std::size_t(batch);
  for (long b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < grid_.size(); ++i)
      out.values[i * std::size_t(batch) + std::size_t(b)] =
          task_loss(scores_.task, rows[b], grid_[i]);
  return true;
}

}  // namespace riskmon
