#include "habi/envs/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "habi/envs/point_maze.hpp"
#include "habi/envs/reach.hpp"
#include "habi/errors.hpp"
#include "habi/nn/checkpoint.hpp"
#include "habi/rng.hpp"

namespace habi::envs {

std::string to_string(Behavior b) {
  switch (b) {
    case Behavior::kExpert:
      return "expert";
    case Behavior::kNoisyExpert:
      return "noisy-expert";
    case Behavior::kRandom:
      return "random";
    case Behavior::kMixed:
      return "mixed";
  }
  return "unknown";
}

Behavior parse_behavior(std::string_view name) {
  if (name == "expert") return Behavior::kExpert;
  if (name == "noisy-expert") return Behavior::kNoisyExpert;
  if (name == "random") return Behavior::kRandom;
  if (name == "mixed") return Behavior::kMixed;
  throw ConfigError("unknown behavior '" + std::string(name) +
                    "' (expected expert, noisy-expert, random or mixed)");
}

std::size_t OfflineDataset::episode_end(std::size_t k) const {
  return k + 1 < episode_starts.size() ? episode_starts[k + 1] : size();
}

std::size_t OfflineDataset::episode_of(std::size_t i) const {
  auto it = std::upper_bound(episode_starts.begin(), episode_starts.end(), i);
  return static_cast<std::size_t>(it - episode_starts.begin()) - 1;
}

double OfflineDataset::success_rate() const {
  if (episode_starts.empty()) return 0.0;
  std::size_t wins = 0;
  for (std::size_t k = 0; k < episode_count(); ++k) {
    if (rewards[episode_end(k) - 1] > 0.0) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(episode_count());
}

Vector<double> OfflineDataset::action_window(std::size_t i, int horizon) const {
  if (horizon < 1) throw UsageError("action_window: horizon must be >= 1");
  if (i >= size()) throw UsageError("action_window: index out of range");
  const std::size_t last = episode_end(episode_of(i)) - 1;
  const Index ad = actions.rows();
  Vector<double> out(ad * horizon);
  for (int h = 0; h < horizon; ++h) {
    const std::size_t j = std::min(i + static_cast<std::size_t>(h), last);
    out.segment(h * ad, ad) = actions.col(static_cast<Index>(j));
  }
  return out;
}

std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma) {
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t k = rewards.size(); k-- > 0;) {
    acc = rewards[k] + gamma * acc;
    out[k] = acc;
  }
  return out;
}

void OfflineDataset::validate() const {
  const std::size_t n = size();
  auto fail = [](const std::string& why) { throw FormatError("offline dataset: " + why); };
  if (static_cast<std::size_t>(states.cols()) != n ||
      static_cast<std::size_t>(actions.cols()) != n ||
      static_cast<std::size_t>(next_states.cols()) != n || dones.size() != n ||
      returns_to_go.size() != n || next_states.rows() != states.rows()) {
    fail("column counts disagree");
  }
  if (n == 0) {
    if (!episode_starts.empty()) fail("episodes without transitions");
    return;
  }
  if (episode_starts.empty() || episode_starts.front() != 0) fail("first episode must start at 0");
  for (std::size_t k = 0; k < episode_count(); ++k) {
    const std::size_t b = episode_starts[k], e = episode_end(k);
    if (e <= b) fail("empty or unordered episode " + std::to_string(k));
    for (std::size_t i = b; i < e; ++i) {
      const bool last = i + 1 == e;
      if (last != (dones[i] != 0)) fail("done flag mismatch at transition " + std::to_string(i));
      const double expect = last ? rewards[i] : rewards[i] + gamma * returns_to_go[i + 1];
      if (std::abs(returns_to_go[i] - expect) > 1e-9) {
        fail("return-to-go backup violated at transition " + std::to_string(i));
      }
      if (!last && next_states.col(static_cast<Index>(i)) != states.col(static_cast<Index>(i + 1))) {
        fail("next_state chain broken at transition " + std::to_string(i));
      }
    }
  }
}

void OfflineDataset::save(const std::filesystem::path& path) const {
  validate();
  nn::Container c;
  c.put_text("kind", "offline-dataset");
  c.put_text("env", env_name);
  c.put_text("behavior", behavior);
  c.put_u64("meta", {seed, static_cast<std::uint64_t>(size()),
                     static_cast<std::uint64_t>(states.rows()),
                     static_cast<std::uint64_t>(actions.rows())});
  c.put_f64("gamma", {gamma});
  auto flat = [](const Matrix<double>& m) { return std::vector<double>(m.data(), m.data() + m.size()); };
  c.put_f64("states", flat(states));
  c.put_f64("actions", flat(actions));
  c.put_f64("next_states", flat(next_states));
  c.put_f64("rewards", rewards);
  c.put_f64("returns_to_go", returns_to_go);
  c.put_u64("dones", std::vector<std::uint64_t>(dones.begin(), dones.end()));
  c.put_u64("episode_starts", std::vector<std::uint64_t>(episode_starts.begin(), episode_starts.end()));
  c.save(path);
}

OfflineDataset OfflineDataset::load(const std::filesystem::path& path) {
  const auto c = nn::Container::load(path);
  if (c.text("kind") != "offline-dataset") {
    throw FormatError(path.string() + ": not an offline dataset file");
  }
  OfflineDataset d;
  d.env_name = c.text("env");
  d.behavior = c.text("behavior");
  const auto meta = c.u64("meta");
  if (meta.size() != 4) throw FormatError(path.string() + ": bad meta section");
  d.seed = meta[0];
  const auto n = static_cast<Index>(meta[1]);
  const auto sd = static_cast<Index>(meta[2]);
  const auto ad = static_cast<Index>(meta[3]);
  d.gamma = c.f64("gamma").at(0);
  auto mat = [&](const char* name, Index rows) {
    const auto v = c.f64(name);
    if (static_cast<Index>(v.size()) != rows * n) {
      throw FormatError(path.string() + ": section '" + name + "' has wrong length");
    }
    return Matrix<double>(Eigen::Map<const Matrix<double>>(v.data(), rows, n));
  };
  d.states = mat("states", sd);
  d.actions = mat("actions", ad);
  d.next_states = mat("next_states", sd);
  d.rewards = c.f64("rewards");
  d.returns_to_go = c.f64("returns_to_go");
  const auto dones = c.u64("dones");
  d.dones.assign(dones.begin(), dones.end());
  const auto starts = c.u64("episode_starts");
  d.episode_starts.assign(starts.begin(), starts.end());
  try {
    d.validate();
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return d;
}

OfflineDataset generate_offline_dataset(const Env& env, Behavior behavior, int n_episodes,
                                        std::uint64_t seed, const DatasetOptions& options) {
  if (n_episodes < 1) throw UsageError("generate_offline_dataset: n_episodes must be >= 1");
  if (options.noise_sigma < 0.0) throw ConfigError("generate_offline_dataset: noise_sigma < 0");
  if (!(options.random_fraction >= 0.0 && options.random_fraction <= 1.0)) {
    throw ConfigError("generate_offline_dataset: random_fraction must lie in [0, 1]");
  }
  auto sim = env.clone();
  auto expert = env.make_expert();
  const int sd = env.state_dim(), ad = env.action_dim();

  std::vector<Vector<double>> s, a, s2;
  OfflineDataset d;
  d.env_name = env.name();
  d.behavior = to_string(behavior);
  d.seed = seed;
  d.gamma = env.gamma();

  for (int ep = 0; ep < n_episodes; ++ep) {
    const auto ep_seed = derive_seed(seed, 0x0ff1, static_cast<std::uint64_t>(ep));
    Behavior mode = behavior;
    if (behavior == Behavior::kMixed) {
      const double f = options.random_fraction;
      const bool random = std::floor((ep + 1) * f) > std::floor(ep * f);
      mode = random ? Behavior::kRandom : Behavior::kNoisyExpert;
    }
    std::mt19937_64 rng(derive_seed(ep_seed, 1));
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);

    Vector<double> state = sim->reset(derive_seed(ep_seed, 2), options.start);
    expert->begin_episode(derive_seed(ep_seed, 3));
    d.episode_starts.push_back(d.rewards.size());
    std::vector<double> ep_rewards;
    for (;;) {
      Vector<double> act(ad);
      if (mode == Behavior::kRandom) {
        for (int k = 0; k < ad; ++k) act(k) = uniform(rng);
      } else {
        act = expert->act(state);
        if (mode == Behavior::kNoisyExpert) {
          for (int k = 0; k < ad; ++k) act(k) += options.noise_sigma * noise(rng);
        }
        act = clamp_action(act);
      }
      const auto res = sim->step(act);
      s.push_back(state);
      a.push_back(act);
      s2.push_back(res.next_state);
      ep_rewards.push_back(res.reward);
      d.rewards.push_back(res.reward);
      d.dones.push_back(res.done ? 1 : 0);
      state = res.next_state;
      if (res.done) break;
    }
    const auto rtg = discounted_returns(ep_rewards, d.gamma);
    d.returns_to_go.insert(d.returns_to_go.end(), rtg.begin(), rtg.end());
  }
  const auto n = static_cast<Index>(s.size());
  d.states.resize(sd, n);
  d.actions.resize(ad, n);
  d.next_states.resize(sd, n);
  for (Index i = 0; i < n; ++i) {
    d.states.col(i) = s[static_cast<std::size_t>(i)];
    d.actions.col(i) = a[static_cast<std::size_t>(i)];
    d.next_states.col(i) = s2[static_cast<std::size_t>(i)];
  }
  return d;
}

std::unique_ptr<Env> make_env(std::string_view name) {
  if (name == "reach1d") return std::make_unique<ReachEnv>();
  if (name == "reach1d-dense") {
    ReachOptions o;
    o.dense_reward = true;
    return std::make_unique<ReachEnv>(o);
  }
  for (const auto& preset : maze_preset_names()) {
    if (name == preset) return std::make_unique<PointMazeEnv>(maze_preset(name), preset);
  }
  throw ConfigError("unknown environment '" + std::string(name) +
                    "' (expected reach1d, reach1d-dense, umaze, medium or large)");
}

}  // namespace habi::envs
