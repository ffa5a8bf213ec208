#include "habi/habitizer/teacher_data.hpp"

#include <algorithm>
#include <numeric>
#include <thread>

#include "habi/errors.hpp"
#include "habi/nn/checkpoint.hpp"
#include "habi/rng.hpp"
#include "habi/select.hpp"

namespace habi::habitizer {

TeacherSample TeacherDataset::sample(std::size_t i) const {
  if (i >= size()) throw UsageError("teacher dataset: index out of range");
  const auto col = static_cast<Index>(i);
  TeacherSample s;
  s.state = states.col(col).cast<double>();
  s.best_action = best_actions.col(col).cast<double>();
  s.candidates = candidates.middleCols(col * n_candidates, n_candidates).cast<double>();
  s.q = q.col(col).cast<double>();
  s.best = best_index[i];
  return s;
}

void TeacherDataset::validate() const {
  const auto m = static_cast<Index>(size());
  auto fail = [](const std::string& why) { throw FormatError("teacher dataset: " + why); };
  if (state_dim < 1 || action_dim < 1 || n_candidates < 1) fail("dimensions must be positive");
  if (states.rows() != state_dim || states.cols() != m || best_actions.rows() != action_dim ||
      best_actions.cols() != m || candidates.rows() != action_dim ||
      candidates.cols() != m * n_candidates || q.rows() != n_candidates || q.cols() != m) {
    fail("array shapes disagree");
  }
  for (Index i = 0; i < m; ++i) {
    const auto b = static_cast<Index>(best_index[static_cast<std::size_t>(i)]);
    if (b >= n_candidates) fail("best index out of range at sample " + std::to_string(i));
    if (argmax_lowest(q.col(i)) != b) fail("best action is not the argmax at sample " + std::to_string(i));
    if (best_actions.col(i) != candidates.col(i * n_candidates + b)) {
      fail("best action differs from its candidate at sample " + std::to_string(i));
    }
  }
}

void TeacherDataset::save(const std::filesystem::path& path) const {
  validate();
  nn::Container c;
  c.put_text("kind", "teacher-dataset");
  c.put_u64("meta", {static_cast<std::uint64_t>(size()), static_cast<std::uint64_t>(state_dim),
                     static_cast<std::uint64_t>(action_dim),
                     static_cast<std::uint64_t>(n_candidates), seed});
  auto flat = [](const Matrix<float>& mat) { return std::vector<float>(mat.data(), mat.data() + mat.size()); };
  c.put_f32("states", flat(states));
  c.put_f32("best_actions", flat(best_actions));
  c.put_f32("candidates", flat(candidates));
  c.put_f32("q", flat(q));
  c.put_u64("best_index", std::vector<std::uint64_t>(best_index.begin(), best_index.end()));
  c.save(path);
}

TeacherDataset TeacherDataset::load(const std::filesystem::path& path) {
  const auto c = nn::Container::load(path);
  if (c.text("kind") != "teacher-dataset") {
    throw FormatError(path.string() + ": not a teacher dataset file");
  }
  const auto meta = c.u64("meta");
  if (meta.size() != 5) throw FormatError(path.string() + ": bad meta section");
  TeacherDataset d;
  const auto m = static_cast<Index>(meta[0]);
  d.state_dim = static_cast<int>(meta[1]);
  d.action_dim = static_cast<int>(meta[2]);
  d.n_candidates = static_cast<int>(meta[3]);
  d.seed = meta[4];
  auto mat = [&](const char* name, Index rows, Index cols) {
    const auto& v = c.f32(name);
    if (static_cast<Index>(v.size()) != rows * cols) {
      throw FormatError(path.string() + ": section '" + name + "' has wrong length");
    }
    return Matrix<float>(Eigen::Map<const Matrix<float>>(v.data(), rows, cols));
  };
  d.states = mat("states", d.state_dim, m);
  d.best_actions = mat("best_actions", d.action_dim, m);
  d.candidates = mat("candidates", d.action_dim, m * d.n_candidates);
  d.q = mat("q", d.n_candidates, m);
  const auto idx = c.u64("best_index");
  d.best_index.assign(idx.begin(), idx.end());
  try {
    d.validate();
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return d;
}

TeacherDataset generate_teacher_dataset(const planner::TeacherPlanner& planner,
                                        const Matrix<double>& states, int n, std::uint64_t seed,
                                        int threads) {
  if (n < 1) throw UsageError("generate_teacher_dataset: n must be >= 1");
  if (threads < 1) throw UsageError("generate_teacher_dataset: threads must be >= 1");
  if (planner.denoiser.layers.empty() || planner.value_net.layers.empty()) {
    throw UsageError("generate_teacher_dataset: planner is not trained (no networks loaded)");
  }
  if (states.rows() != planner.state_dim) {
    throw ConfigError("generate_teacher_dataset: state dimension mismatch");
  }
  const Index m = states.cols();
  TeacherDataset d;
  d.state_dim = planner.state_dim;
  d.action_dim = planner.action_dim;
  d.n_candidates = n;
  d.seed = seed;
  d.states = states.cast<float>();
  d.best_actions.resize(planner.action_dim, m);
  d.candidates.resize(planner.action_dim, m * n);
  d.q.resize(n, m);
  d.best_index.resize(static_cast<std::size_t>(m));
  auto work = [&](Index first, Index stride) {
    for (Index i = first; i < m; i += stride) {
      std::mt19937_64 rng(derive_seed(seed, 0x7eac, static_cast<std::uint64_t>(i)));
      // Scores are computed from the float-rounded candidates so that the
      // stored arrays satisfy the argmax invariant exactly.
      const auto sampled = planner::plan(planner, states.col(i), n, rng);
      const Matrix<double> cand = sampled.candidates.cast<float>().cast<double>();
      const auto r = planner::score_candidates(planner, states.col(i), cand);
      Vector<float> qf = r.q.cast<float>();
      const auto best = argmax_lowest(qf);
      d.candidates.middleCols(i * n, n) = cand.cast<float>();
      d.q.col(i) = qf;
      d.best_index[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(best);
      d.best_actions.col(i) = d.candidates.col(i * n + best);
    }
  };
  const auto workers = static_cast<Index>(std::min<Index>(threads, std::max<Index>(m, 1)));
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (Index w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& t : pool) t.join();
  }
  return d;
}

Matrix<double> sample_states(const envs::OfflineDataset& data, std::size_t count, std::uint64_t seed) {
  if (count > data.size()) {
    throw UsageError("sample_states: asked for " + std::to_string(count) + " states from " +
                     std::to_string(data.size()));
  }
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 0x57a7));
  // Partial Fisher-Yates with an explicit modulus so the order is library independent.
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng() % (idx.size() - k));
    std::swap(idx[k], idx[j]);
  }
  Matrix<double> out(data.states.rows(), static_cast<Index>(count));
  for (std::size_t k = 0; k < count; ++k) out.col(static_cast<Index>(k)) = data.states.col(static_cast<Index>(idx[k]));
  return out;
}

}  // namespace habi::habitizer
