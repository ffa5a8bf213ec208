#include "habi/inference/frequency.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#if defined(__linux__)
#include <pthread.h>
#include <sched.h>
#endif

#include "habi/errors.hpp"

namespace habi::inference {

namespace {

using Clock = std::chrono::steady_clock;

double us_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::micro>(b - a).count();
}

double percentile(std::vector<double> sorted_copy, double p) {
  std::sort(sorted_copy.begin(), sorted_copy.end());
  const double pos = p * static_cast<double>(sorted_copy.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted_copy.size() - 1);
  return sorted_copy[lo] + (pos - static_cast<double>(lo)) * (sorted_copy[hi] - sorted_copy[lo]);
}

bool pin_current_thread(int cpu) {
#if defined(__linux__)
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(cpu, &set);
  return pthread_setaffinity_np(pthread_self(), sizeof(set), &set) == 0;
#else
  (void)cpu;
  return false;
#endif
}

// Sink that keeps results observable.
volatile double g_sink = 0.0;

}  // namespace

double timer_resolution_ns() {
  double best = 1e18;
  for (int i = 0; i < 1000; ++i) {
    const auto a = Clock::now();
    auto b = Clock::now();
    while (b == a) b = Clock::now();
    best = std::min(best, std::chrono::duration<double, std::nano>(b - a).count());
  }
  return best;
}

FrequencyReport measure_frequency(const DecideFn& decide, const std::vector<Vector<double>>& states,
                                  const FrequencyOptions& options, const BatchDecideFn& batch_decide) {
  if (states.empty()) throw UsageError("measure_frequency: no probe states");
  if (options.reps < 100) throw UsageError("measure_frequency: reps must be >= 100");
  if (options.warmup < 0) throw UsageError("measure_frequency: warmup must be >= 0");
  if (options.batch_size < 0 || (options.batch_size > 0 && options.batch_reps < 1)) {
    throw UsageError("measure_frequency: bad batch settings");
  }
  if (options.batch_size > 0 && !batch_decide) {
    throw UsageError("measure_frequency: batched mode needs a batch decision function");
  }
  FrequencyReport r;
  r.reps = options.reps;
  r.warmup = options.warmup;
  r.threads = 1;
  r.timer_resolution_ns = timer_resolution_ns();
  r.reliable = r.timer_resolution_ns <= 1000.0;

  std::exception_ptr error;
  auto body = [&] {
    try {
      if (options.pin_thread) r.pinned = pin_current_thread(options.cpu);
      const std::size_t m = states.size();
      double sink = 0.0;
      for (int k = 0; k < options.warmup; ++k) sink += decide(states[static_cast<std::size_t>(k) % m])(0);
      std::vector<double> lat(static_cast<std::size_t>(options.reps));
      const auto start = Clock::now();
      auto prev = start;
      for (int k = 0; k < options.reps; ++k) {
        sink += decide(states[static_cast<std::size_t>(k) % m])(0);
        const auto now = Clock::now();
        lat[static_cast<std::size_t>(k)] = us_between(prev, now);
        prev = now;
      }
      const double total_us = us_between(start, prev);
      r.hz_single_stream = 1e6 * options.reps / total_us;
      r.mean_us = total_us / options.reps;
      r.p50_us = percentile(lat, 0.50);
      r.p90_us = percentile(lat, 0.90);
      r.p99_us = percentile(lat, 0.99);
      r.max_us = *std::max_element(lat.begin(), lat.end());
      if (options.batch_size > 0) {
        Matrix<double> batch(states.front().size(), options.batch_size);
        for (Index j = 0; j < batch.cols(); ++j) batch.col(j) = states[static_cast<std::size_t>(j) % m];
        sink += batch_decide(batch)(0, 0);
        const auto b0 = Clock::now();
        for (int k = 0; k < options.batch_reps; ++k) sink += batch_decide(batch)(0, 0);
        r.hz_batched = 1e6 * options.batch_reps / us_between(b0, Clock::now());
        r.batch_size = options.batch_size;
      }
      g_sink = sink;
    } catch (...) {
      error = std::current_exception();
    }
  };
  // A dedicated thread so pinning never changes the caller's affinity.
  std::thread worker(body);
  worker.join();
  if (error) std::rethrow_exception(error);
  return r;
}

double harness_overhead_us(const std::vector<Vector<double>>& states, const FrequencyOptions& options) {
  FrequencyOptions o = options;
  o.batch_size = 0;
  DecideFn noop = [](const Vector<double>& s) { return s; };
  return measure_frequency(noop, states, o).mean_us;
}

std::string FrequencyReport::to_key_values() const {
  std::ostringstream os;
  os.precision(10);
  os << "policy = " << policy << '\n'
     << "task = " << task << '\n'
     << "n_candidates = " << n_candidates << '\n'
     << "threads = " << threads << '\n'
     << "warmup = " << warmup << '\n'
     << "reps = " << reps << '\n'
     << "hz_single_stream = " << hz_single_stream << '\n'
     << "mean_us = " << mean_us << '\n'
     << "p50_us = " << p50_us << '\n'
     << "p90_us = " << p90_us << '\n'
     << "p99_us = " << p99_us << '\n'
     << "max_us = " << max_us << '\n';
  if (hz_batched) os << "hz_batched = " << *hz_batched << '\n' << "batch_size = " << batch_size << '\n';
  os << "timer_resolution_ns = " << timer_resolution_ns << '\n'
     << "reliable = " << (reliable ? "true" : "false") << '\n'
     << "pinned = " << (pinned ? "true" : "false") << '\n';
  return os.str();
}

std::string FrequencyReport::csv_header() { return "policy,task,n_candidates,hz,p50_us,p99_us,threads"; }

std::string FrequencyReport::csv_row() const {
  std::ostringstream os;
  os.precision(10);
  os << policy << ',' << task << ',' << n_candidates << ',' << hz_single_stream << ',' << p50_us
     << ',' << p99_us << ',' << threads;
  return os.str();
}

void write_report(const std::filesystem::path& path, const FrequencyReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw UsageError("cannot write " + path.string());
  out << report.to_key_values();
}

void append_bench_csv(const std::filesystem::path& path, const FrequencyReport& report) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw UsageError("cannot write " + path.string());
  if (fresh) out << FrequencyReport::csv_header() << '\n';
  out << report.csv_row() << '\n';
}

}  // namespace habi::inference
