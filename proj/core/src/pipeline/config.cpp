#include "habi/pipeline/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "habi/envs/dataset.hpp"
#include "habi/envs/point_maze.hpp"
#include "habi/errors.hpp"

namespace habi::pipeline {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_value(const std::string& v) { return v; }
std::string format_value(int v) { return std::to_string(v); }
std::string format_value(std::uint64_t v) { return std::to_string(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }

std::string format_value(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format_value(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string format_value(habitizer::ErrorNorm v) {
  return v == habitizer::ErrorNorm::kSquared ? "squared" : "euclidean";
}

std::string format_value(envs::StartMode v) {
  return v == envs::StartMode::kPreset ? "preset" : "anywhere";
}

template <class T>
T parse_number(std::string_view s) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw ConfigError("'" + std::string(s) + "' is not a valid number");
  }
  return v;
}

void parse_value(std::string_view s, std::string& out) { out = std::string(s); }
void parse_value(std::string_view s, int& out) { out = parse_number<int>(s); }
void parse_value(std::string_view s, std::uint64_t& out) { out = parse_number<std::uint64_t>(s); }
void parse_value(std::string_view s, double& out) { out = parse_number<double>(s); }

void parse_value(std::string_view s, bool& out) {
  if (s == "true" || s == "1") {
    out = true;
  } else if (s == "false" || s == "0") {
    out = false;
  } else {
    throw ConfigError("'" + std::string(s) + "' is not a boolean");
  }
}

void parse_value(std::string_view s, std::vector<int>& out) {
  out.clear();
  if (s.empty()) throw ConfigError("empty integer list");
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto next = std::min(s.find(',', pos), s.size());
    out.push_back(parse_number<int>(trim(s.substr(pos, next - pos))));
    pos = next + 1;
  }
}

void parse_value(std::string_view s, habitizer::ErrorNorm& out) {
  if (s == "euclidean") {
    out = habitizer::ErrorNorm::kEuclidean;
  } else if (s == "squared") {
    out = habitizer::ErrorNorm::kSquared;
  } else {
    throw ConfigError("norm must be 'euclidean' or 'squared', got '" + std::string(s) + "'");
  }
}

void parse_value(std::string_view s, envs::StartMode& out) {
  if (s == "preset") {
    out = envs::StartMode::kPreset;
  } else if (s == "anywhere") {
    out = envs::StartMode::kAnywhere;
  } else {
    throw ConfigError("start must be 'preset' or 'anywhere', got '" + std::string(s) + "'");
  }
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <class Access>
Field field(std::string section, std::string key, Access access) {
  return {std::move(section), std::move(key),
          [access](const RunConfig& c) { return format_value(access(c)); },
          [access](RunConfig& c, std::string_view v) { parse_value(v, access(c)); }};
}

#define HABI_FIELD(sec, name) field(#sec, #name, [](auto& c) -> auto& { return c.sec.name; })

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      HABI_FIELD(run, env),
      HABI_FIELD(run, seed),
      HABI_FIELD(run, threads),
      HABI_FIELD(data, episodes),
      HABI_FIELD(data, behavior),
      HABI_FIELD(data, noise_sigma),
      HABI_FIELD(data, random_fraction),
      HABI_FIELD(planner, diffusion_steps),
      HABI_FIELD(planner, horizon),
      HABI_FIELD(planner, beta_start),
      HABI_FIELD(planner, beta_end),
      HABI_FIELD(planner, denoiser_hidden),
      HABI_FIELD(planner, value_hidden),
      HABI_FIELD(planner, n_candidates_train),
      HABI_FIELD(planner, denoiser_steps),
      HABI_FIELD(planner, value_steps),
      HABI_FIELD(planner, batch),
      HABI_FIELD(planner, lr),
      HABI_FIELD(habi, latent_dim),
      HABI_FIELD(habi, hidden),
      HABI_FIELD(habi, critic_hidden),
      HABI_FIELD(habi, lr),
      HABI_FIELD(habi, steps),
      HABI_FIELD(habi, batch),
      HABI_FIELD(habi, critic_batch),
      HABI_FIELD(habi, target_kl),
      HABI_FIELD(habi, lr_beta),
      HABI_FIELD(habi, norm),
      HABI_FIELD(habi, teacher_states),
      HABI_FIELD(habi, seeds),
      HABI_FIELD(habi, log_every),
      HABI_FIELD(habi, checkpoint_every),
      HABI_FIELD(inference, candidates),
      HABI_FIELD(eval, episodes),
      HABI_FIELD(eval, start),
      HABI_FIELD(eval, anchor_episodes),
      HABI_FIELD(bench, reps),
      HABI_FIELD(bench, warmup),
      HABI_FIELD(bench, teacher_reps),
      HABI_FIELD(bench, teacher_warmup),
      HABI_FIELD(bench, threads),
      HABI_FIELD(bench, probe_states),
      HABI_FIELD(bench, pin),
      HABI_FIELD(bench, batch_size),
  };
  return all;
}

#undef HABI_FIELD

const Field& find_field(std::string_view section, std::string_view key) {
  for (const auto& f : fields()) {
    if (f.section == section && f.key == key) return f;
  }
  bool known_section = false;
  for (const auto& f : fields()) known_section = known_section || f.section == section;
  if (!known_section) throw ConfigError("unknown section [" + std::string(section) + "]");
  throw ConfigError("unknown key '" + std::string(key) + "' in [" + std::string(section) + "]");
}

void require(bool ok, const std::string& key, const std::string& rule) {
  if (!ok) throw ConfigError("config: " + key + " " + rule);
}

void require_sizes(const std::vector<int>& v, const std::string& key) {
  require(!v.empty(), key, "must list at least one layer");
  for (int x : v) require(x >= 1 && x <= 4096, key, "entries must be in [1, 4096]");
}

}  // namespace

void RunConfig::validate() const {
  const auto names = envs::maze_preset_names();
  const bool maze = std::find(names.begin(), names.end(), run.env) != names.end();
  require(maze || run.env == "reach1d" || run.env == "reach1d-dense", "run.env",
          "must be a maze preset or reach1d[-dense], got '" + run.env + "'");
  require(run.threads >= 1 && run.threads <= 256, "run.threads", "must be in [1, 256]");

  require(data.episodes >= 1, "data.episodes", "must be >= 1");
  envs::parse_behavior(data.behavior);
  require(data.noise_sigma >= 0.0, "data.noise_sigma", "must be >= 0");
  require(data.random_fraction >= 0.0 && data.random_fraction <= 1.0, "data.random_fraction",
          "must be in [0, 1]");

  require(planner.diffusion_steps >= 1 && planner.diffusion_steps <= 1000,
          "planner.diffusion_steps", "must be in [1, 1000]");
  require(planner.horizon >= 1 && planner.horizon <= 64, "planner.horizon", "must be in [1, 64]");
  require(planner.beta_start > 0.0 && planner.beta_start <= planner.beta_end &&
              planner.beta_end < 1.0,
          "planner.beta_start/beta_end", "must satisfy 0 < start <= end < 1");
  require_sizes(planner.denoiser_hidden, "planner.denoiser_hidden");
  require_sizes(planner.value_hidden, "planner.value_hidden");
  require(planner.n_candidates_train >= 1, "planner.n_candidates_train", "must be >= 1");
  require(planner.denoiser_steps >= 1, "planner.denoiser_steps", "must be >= 1");
  require(planner.value_steps >= 1, "planner.value_steps", "must be >= 1");
  require(planner.batch >= 1, "planner.batch", "must be >= 1");
  require(planner.lr > 0.0 && planner.lr < 1.0, "planner.lr", "must be in (0, 1)");

  require(habi.latent_dim >= 1 && habi.latent_dim <= 4096, "habi.latent_dim", "must be in [1, 4096]");
  require_sizes(habi.hidden, "habi.hidden");
  require_sizes(habi.critic_hidden, "habi.critic_hidden");
  require(habi.lr > 0.0 && habi.lr < 1.0, "habi.lr", "must be in (0, 1)");
  require(habi.steps >= 1, "habi.steps", "must be >= 1");
  require(habi.batch >= 1, "habi.batch", "must be >= 1");
  require(habi.critic_batch >= 1 && habi.critic_batch <= habi.batch, "habi.critic_batch",
          "must be in [1, habi.batch]");
  require(habi.target_kl > 0.0, "habi.target_kl", "must be > 0");
  require(habi.lr_beta > 0.0, "habi.lr_beta", "must be > 0");
  require(habi.teacher_states >= 1, "habi.teacher_states", "must be >= 1");
  require(habi.seeds >= 1 && habi.seeds <= 100, "habi.seeds", "must be in [1, 100]");
  require(habi.log_every >= 1, "habi.log_every", "must be >= 1");
  require(habi.checkpoint_every >= 1, "habi.checkpoint_every", "must be >= 1");

  require(!inference.candidates.empty(), "inference.candidates", "must list at least one N");
  for (int n : inference.candidates) {
    require(n >= 1 && n <= 10000, "inference.candidates", "entries must be in [1, 10000]");
  }
  std::set<int> distinct(inference.candidates.begin(), inference.candidates.end());
  require(distinct.size() == inference.candidates.size(), "inference.candidates",
          "must not repeat");

  require(eval.episodes >= 1, "eval.episodes", "must be >= 1");
  require(eval.anchor_episodes >= 1, "eval.anchor_episodes", "must be >= 1");

  require(bench.reps >= 100, "bench.reps", "must be >= 100");
  require(bench.warmup >= 0, "bench.warmup", "must be >= 0");
  require(bench.teacher_reps >= 100, "bench.teacher_reps", "must be >= 100");
  require(bench.teacher_warmup >= 0, "bench.teacher_warmup", "must be >= 0");
  require(bench.threads == 1, "bench.threads", "must be 1 (single-stream measurement)");
  require(bench.probe_states >= 1, "bench.probe_states", "must be >= 1");
  require(bench.batch_size >= 0, "bench.batch_size", "must be >= 0");
}

RunConfig mini_config() {
  RunConfig c;
  c.data.episodes = 200;
  c.planner.denoiser_hidden = {128, 128};
  c.planner.value_hidden = {64, 64};
  c.planner.n_candidates_train = 32;
  c.planner.denoiser_steps = 3000;
  c.planner.value_steps = 1500;
  c.planner.batch = 128;
  c.habi.latent_dim = 16;
  c.habi.hidden = {64, 64};
  c.habi.critic_hidden = {64, 64};
  c.habi.steps = 3000;
  c.habi.critic_batch = 16;
  c.habi.teacher_states = 2000;
  c.habi.seeds = 2;
  c.habi.checkpoint_every = 1000;
  c.eval.episodes = 30;
  c.eval.anchor_episodes = 50;
  c.bench.reps = 500;
  c.bench.warmup = 50;
  c.bench.teacher_reps = 100;
  c.bench.teacher_warmup = 5;
  c.bench.probe_states = 16;
  return c;
}

RunConfig parse_config(std::string_view text, const RunConfig& base) {
  RunConfig out = base;
  std::string section;
  std::set<std::string> seen;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    ++line_no;
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = "config line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    if (section.empty()) throw ConfigError(where + "key outside any [section]");
    const auto key = std::string(trim(line.substr(0, eq)));
    const auto value = trim(line.substr(eq + 1));
    if (!seen.insert(section + "." + key).second) {
      throw ConfigError(where + "duplicate key " + section + "." + key);
    }
    try {
      find_field(section, key).set(out, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return out;
}

RunConfig load_config(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), base);
}

std::string to_text(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(config) + "\n";
  }
  return out;
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto lhs = trim(assignment.substr(0, eq));
  const auto dot = lhs.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not section.key=value");
  }
  find_field(lhs.substr(0, dot), lhs.substr(dot + 1)).set(config, trim(assignment.substr(eq + 1)));
}

}  // namespace habi::pipeline
