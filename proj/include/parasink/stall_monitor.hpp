#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "parasink/executor.hpp"

namespace parasink {

struct StallSample {
  /// Milliseconds since run start.
  double t_ms = 0.0;
  int running_total = 0;
  std::vector<int> running_by_module;
  /// Permits held per module (running or queued for a thread).
  std::vector<int> permits_by_module;
  /// Executor threads with any task frame, IMT subtasks included.
  int busy_threads = 0;
  std::size_t n_threads = 0;
};

struct FlushInterval {
  int module = kNoModule;
  double start_ms = 0.0;
  double end_ms = 0.0;
};

struct StallReport {
  std::vector<std::string> module_names;
  std::vector<std::optional<std::size_t>> limits;
  std::size_t n_threads = 1;
  std::vector<StallSample> samples;
  /// 1 - mean(running_total) / n_threads.
  double stall_fraction = 0.0;
  /// Same statistic over busy executor threads.
  double thread_stall_fraction = 0.0;
  /// Per module: fraction of samples where it holds all its permits while running_total < n_threads.
  std::vector<double> attribution;
};

/// Builds a sample from an occupancy snapshot.
StallSample make_sample(double t_ms, const OccupancySnapshot& snapshot, std::vector<int> permits,
                        std::size_t n_threads);

StallReport aggregate(std::vector<std::string> module_names, std::vector<std::optional<std::size_t>> limits,
                      std::size_t n_threads, std::vector<StallSample> samples);

struct ModuleInterval {
  int module = 0;
  double start_ms = 0.0;
  double end_ms = 0.0;
};

/// Samples a scripted set of module intervals at a fixed period over [0, duration_ms).
std::vector<StallSample> replay_intervals(std::span<const ModuleInterval> intervals, std::size_t n_modules,
                                          std::size_t n_threads, double period_ms, double duration_ms);

/// Dedicated sampling thread. `probe` is called every period until stop().
class StallSampler {
 public:
  using Probe = std::function<StallSample(double t_ms)>;

  StallSampler(Probe probe, std::chrono::milliseconds period);
  ~StallSampler();
  StallSampler(const StallSampler&) = delete;
  StallSampler& operator=(const StallSampler&) = delete;

  void start();
  std::vector<StallSample> stop();

 private:
  Probe probe_;
  std::chrono::milliseconds period_;
  std::chrono::steady_clock::time_point start_;
  std::vector<StallSample> samples_;
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

/// CSV: `t_ms,total,<module>...`, one row per sample.
void emit_stall_csv(const StallReport& report, std::ostream& out);

/// Area chart of module concurrency over time with the thread ceiling; viewBox 1000x300.
void emit_stall_svg(const StallReport& report, std::ostream& out);

/// Pearson correlation between the per-sample gap (n_threads - running_total) and whether a
/// flush was in progress at that sample. Zero when either series is constant.
double gap_flush_correlation(const StallReport& report, std::span<const FlushInterval> flushes);

}  // namespace parasink
