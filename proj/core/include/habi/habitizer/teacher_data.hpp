#pragma once

#include <cstdint>
#include <filesystem>

#include "habi/planner/teacher.hpp"

namespace habi::habitizer {

/// One teacher decision: the state, every candidate first action with its Q,
/// and the selected (argmax-Q) action.
struct TeacherSample {
  Vector<double> state;
  Vector<double> best_action;
  Matrix<double> candidates;  // action_dim x n
  Vector<double> q;           // n
  Index best = 0;
};

/// Teacher decisions for many states, stored as float arrays.
struct TeacherDataset {
  int state_dim = 0;
  int action_dim = 0;
  int n_candidates = 0;
  std::uint64_t seed = 0;
  Matrix<float> states;        // state_dim x M
  Matrix<float> best_actions;  // action_dim x M
  Matrix<float> candidates;    // action_dim x (M * n); sample i owns columns [i*n, (i+1)*n)
  Matrix<float> q;             // n x M
  std::vector<std::uint32_t> best_index;

  std::size_t size() const { return best_index.size(); }
  TeacherSample sample(std::size_t i) const;
  /// Throws FormatError unless shapes agree and every best action is its
  /// sample's argmax-Q candidate (lowest index on ties).
  void validate() const;

  void save(const std::filesystem::path& path) const;
  static TeacherDataset load(const std::filesystem::path& path);
};

/// Plan at every column of `states` with n candidates. State i uses a stream
/// seeded by (seed, i), so the result does not depend on `threads`.
TeacherDataset generate_teacher_dataset(const planner::TeacherPlanner& planner,
                                        const Matrix<double>& states, int n, std::uint64_t seed,
                                        int threads = 1);

/// `count` distinct columns of `data.states`, chosen by a seeded shuffle.
Matrix<double> sample_states(const envs::OfflineDataset& data, std::size_t count, std::uint64_t seed);

}  // namespace habi::habitizer
