// Benchmark: the OpenMP per-threshold kernel against the serial reference on
// identical seeded streams. Verifies that both modes produce exactly the same
// stopping decisions before reporting timings; exits nonzero on mismatch.
//
// Usage: riskmon-bench [grid_n] [horizon] [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "riskmon/experiment.hpp"

using namespace riskmon;

namespace {

MonitorResult run_once(const ThresholdGrid& grid, long horizon,
                       std::uint64_t seed, bool parallel, double& ms) {
  RiskSpec spec(0.1, 0.1);
  WindowConfig window = WindowConfig::make(std::nullopt, 1);
  std::vector<TrackerConfig> trackers = default_trackers();
  MixtureLossStream stream(grid, Task::ter, ShiftSchedule::stepwise(200),
                           ScorePool::parse(default_in_pool()),
                           ScorePool::parse(default_out_pool()), 1, seed);
  MonitorOptions options;
  options.horizon = horizon;
  options.parallel = parallel;

  auto t0 = std::chrono::steady_clock::now();
  MonitorResult result =
      run_monitor(grid, spec, window, trackers, stream, options);
  auto t1 = std::chrono::steady_clock::now();
  ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return result;
}

bool same_decisions(const MonitorResult& a, const MonitorResult& b) {
  if (a.records.size() != b.records.size()) return false;
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    if (a.records[k].size() != b.records[k].size()) return false;
    for (std::size_t i = 0; i < a.records[k].size(); ++i) {
      const StoppingRecord& x = a.records[k][i];
      const StoppingRecord& y = b.records[k][i];
      if (x.psi != y.psi || x.tau_star != y.tau_star || x.tau != y.tau ||
          x.delay != y.delay || x.censored != y.censored ||
          x.false_alarm != y.false_alarm || x.truth_known != y.truth_known)
        return false;
    }
  }
  return a.cs_sizes == b.cs_sizes;
}

}  // namespace

int main(int argc, char** argv) {
  const long grid_n = argc > 1 ? std::atol(argv[1]) : 201;
  const long horizon = argc > 2 ? std::atol(argv[2]) : 1500;
  const int repeats = argc > 3 ? int(std::atol(argv[3])) : 3;
  if (grid_n < 1 || horizon < 1 || repeats < 1) {
    std::fprintf(stderr, "usage: %s [grid_n] [horizon] [repeats]\n", argv[0]);
    return 2;
  }

  int threads = 1;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif
  std::printf("grid %ld thresholds, horizon %ld, %d repeats, %d thread(s)\n",
              grid_n, horizon, repeats, threads);

  ThresholdGrid grid = ThresholdGrid::linspace(0.0, 1.0, std::size_t(grid_n));
  double best_serial = -1.0, best_parallel = -1.0;
  for (int r = 0; r < repeats; ++r) {
    const std::uint64_t seed = 1000 + std::uint64_t(r);
    double serial_ms = 0.0, parallel_ms = 0.0;
    MonitorResult serial = run_once(grid, horizon, seed, false, serial_ms);
    MonitorResult parallel = run_once(grid, horizon, seed, true, parallel_ms);
    if (!same_decisions(serial, parallel)) {
      std::fprintf(stderr,
                   "FAIL: serial and parallel runs diverged at seed %llu\n",
                   static_cast<unsigned long long>(seed));
      return 1;
    }
    if (best_serial < 0 || serial_ms < best_serial) best_serial = serial_ms;
    if (best_parallel < 0 || parallel_ms < best_parallel)
      best_parallel = parallel_ms;
    std::printf("  repeat %d: serial %8.2f ms   parallel %8.2f ms\n", r,
                serial_ms, parallel_ms);
  }
  std::printf("identical stopping decisions in every repeat\n");
  std::printf("best of %d: serial %.2f ms, parallel %.2f ms, speedup %.2fx\n",
              repeats, best_serial, best_parallel,
              best_serial / best_parallel);
  return 0;
}
