#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "habi/nn/types.hpp"

namespace habi::inference {

/// One decision for one state. The return value is kept alive so the call
/// cannot be optimized away.
using DecideFn = std::function<Vector<double>(const Vector<double>& state)>;
/// One decision per column.
using BatchDecideFn = std::function<Matrix<double>(const Matrix<double>& states)>;

struct FrequencyOptions {
  int warmup = 100;
  int reps = 1000;
  /// Pin the measuring thread to one CPU (Linux only; ignored elsewhere).
  bool pin_thread = true;
  int cpu = 0;
  /// Batched mode: columns per call. 0 disables it.
  int batch_size = 0;
  int batch_reps = 100;
};

struct FrequencyReport {
  std::string policy;
  std::string task;
  int n_candidates = 0;
  int threads = 1;
  int reps = 0;
  int warmup = 0;
  /// Sequential single-state calls per second, from total wall-clock time.
  double hz_single_stream = 0.0;
  double mean_us = 0.0;
  double p50_us = 0.0;
  double p90_us = 0.0;
  double p99_us = 0.0;
  double max_us = 0.0;
  /// Batch calls per second and the batch size, when batched mode ran.
  std::optional<double> hz_batched;
  int batch_size = 0;
  /// Smallest observable clock increment.
  double timer_resolution_ns = 0.0;
  /// False when the clock is coarser than 1 microsecond.
  bool reliable = true;
  bool pinned = false;

  /// Flat "key = value" lines.
  std::string to_key_values() const;
  static std::string csv_header();
  std::string csv_row() const;
};

/// Smallest nonzero difference between consecutive steady_clock readings.
double timer_resolution_ns();

/// Runs `decide` over `states` round-robin on a single dedicated thread:
/// `warmup` untimed calls, then `reps` timed calls. UsageError when reps < 100,
/// warmup < 0 or there are no states.
FrequencyReport measure_frequency(const DecideFn& decide, const std::vector<Vector<double>>& states,
                                  const FrequencyOptions& options,
                                  const BatchDecideFn& batch_decide = {});

/// Per-call cost of the harness itself, measured with a no-op decision.
double harness_overhead_us(const std::vector<Vector<double>>& states, const FrequencyOptions& options);

/// Writes the key/value block to `path` (overwriting).
void write_report(const std::filesystem::path& path, const FrequencyReport& report);
/// Appends a row, writing the header first if the file is new or empty.
void append_bench_csv(const std::filesystem::path& path, const FrequencyReport& report);

}  // namespace habi::inference
