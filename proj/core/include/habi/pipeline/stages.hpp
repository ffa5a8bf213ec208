#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "habi/errors.hpp"
#include "habi/pipeline/config.hpp"

namespace habi::pipeline {

enum class Stage { kGenData, kTrainPlanner, kHabitize, kEval, kBench, kReport };

/// "gen-data", "train-planner", "habitize", "eval", "bench", "report".
std::string_view stage_name(Stage stage);

/// An earlier stage's output is not on disk. `path()` is what was looked for.
class MissingArtifact : public UsageError {
 public:
  explicit MissingArtifact(std::filesystem::path path)
      : UsageError("missing prerequisite " + path.string()), path_(std::move(path)) {}

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

// Artifact names inside a stage directory.
inline constexpr const char* kConfigFile = "config.txt";
inline constexpr const char* kInputsFile = "inputs.txt";
inline constexpr const char* kDatasetFile = "dataset.bin";
inline constexpr const char* kPlannerFile = "planner.bin";
inline constexpr const char* kTeacherDataFile = "teacher_dataset.bin";
inline constexpr const char* kEvalFile = "eval.csv";
inline constexpr const char* kReturnsFile = "returns.csv";
inline constexpr const char* kBenchFile = "bench.csv";

/// Policy ids used in eval.csv and bench.csv.
std::string hi_policy_id(int n_candidates);  // "hi_n<N>"
inline constexpr const char* kTeacherId = "teacher";
inline constexpr const char* kNoCriticId = "hi_no_critic";
inline constexpr const char* kDistillId = "distill";

/// Habitization run directory for training seed k inside a habitize stage dir.
std::filesystem::path habi_run_dir(const std::filesystem::path& stage_dir, int k);
std::filesystem::path distill_dir(const std::filesystem::path& stage_dir, int k);

/// Seed of training run k, derived from the run seed.
std::uint64_t training_seed(const RunConfig& config, int k);

/// Fresh <out>/<stage>/<UTC timestamp>[-i] directory. Never reuses a name.
std::filesystem::path new_stage_dir(const std::filesystem::path& out, Stage stage);

/// Point <out>/<stage>/LATEST at `dir` (written last, after all artifacts).
void mark_latest(const std::filesystem::path& out, Stage stage, const std::filesystem::path& dir);

/// Directory named by <out>/<stage>/LATEST. MissingArtifact when absent.
std::filesystem::path latest_stage_dir(const std::filesystem::path& out, Stage stage);

/// `file` inside the latest directory of `stage`. MissingArtifact when absent.
std::filesystem::path require_artifact(const std::filesystem::path& out, Stage stage,
                                       const std::string& file);

// Each stage validates the config, reads its inputs through LATEST, writes a
// new stage directory and returns it. Progress lines go to `log`.

std::filesystem::path run_gen_data(const RunConfig& config, const std::filesystem::path& out,
                                   std::ostream& log);
std::filesystem::path run_train_planner(const RunConfig& config, const std::filesystem::path& out,
                                        std::ostream& log);
/// Teacher dataset, then `habi.seeds` habitization runs and as many
/// direct-distillation baselines on the same teacher dataset.
std::filesystem::path run_habitize(const RunConfig& config, const std::filesystem::path& out,
                                   std::ostream& log);
/// Teacher, HI(N) for every configured N, HI without critic and direct
/// distillation, all on one shared set of episode seeds.
std::filesystem::path run_eval(const RunConfig& config, const std::filesystem::path& out,
                               std::ostream& log);
/// Single-stream decision rate of every policy on identical probe states.
std::filesystem::path run_bench(const RunConfig& config, const std::filesystem::path& out,
                                std::ostream& log);
std::filesystem::path run_report(const RunConfig& config, const std::filesystem::path& out,
                                 std::ostream& log);

/// Every stage in order.
std::filesystem::path run_all(const RunConfig& config, const std::filesystem::path& out,
                              std::ostream& log);

}  // namespace habi::pipeline
