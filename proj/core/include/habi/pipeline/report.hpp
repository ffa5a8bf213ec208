#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace habi::pipeline {

struct ReportRow {
  std::string policy;  // id, e.g. "hi_n5"
  std::string label;   // e.g. "HI(N=5)"
  /// Mean over training seeds of the per-seed normalized score.
  std::optional<double> score;
  /// Standard error of that mean: sqrt(sum of per-seed stderr^2) / seeds.
  std::optional<double> stderr_score;
  int episodes = 0;            // per training seed
  std::string episode_seeds;   // file holding the shared episode seed list
  std::string training_seeds;  // ';'-joined
  std::optional<double> hz;
  std::optional<double> speedup;
  std::string score_source;
  std::string hz_source;
};

struct ComparisonReport {
  std::vector<ReportRow> rows;
  std::string eval_dir;
  std::string bench_dir;
};

/// One row each for the teacher, HI(N) for every N in `candidates` (plus any
/// other N found on disk), HI without critic and direct distillation, filled
/// from the latest eval and bench outputs under `out`. Absent inputs leave
/// the affected fields empty (MISSING on disk).
ComparisonReport assemble_report(const std::filesystem::path& out,
                                 const std::vector<int>& candidates = {5});

std::string report_csv(const ComparisonReport& report);
/// Aligned table with a Performance row and a Hz row per policy column.
std::string report_text(const ComparisonReport& report);

}  // namespace habi::pipeline
