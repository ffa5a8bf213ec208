#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "habi/envs/env.hpp"

namespace habi::envs {

/// Axis-aligned wall segment inside the unit square.
struct Wall {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  bool vertical() const { return x1 == x2; }
  friend bool operator==(const Wall&, const Wall&) = default;
};

/// Maze description. Text format, one item per line, '#' starts a comment:
///
///     x1 y1 x2 y2        wall segment (must be axis-aligned)
///     start x y          start position
///     goal x y radius    goal disc
///     grid n             planning grid for the scripted expert; walls should lie on
///                        its cell edges, the expert does not see other walls
struct MazeLayout {
  std::vector<Wall> walls;
  std::array<double, 2> start = {0.1, 0.1};
  std::array<double, 2> goal = {0.9, 0.9};
  double goal_radius = 0.05;
  int grid = 5;

  /// Throws ConfigError on malformed lines, diagonal walls or out-of-square coordinates.
  static MazeLayout parse(std::string_view text);
  std::string serialize() const;
  friend bool operator==(const MazeLayout&, const MazeLayout&) = default;
};

/// Built-in layouts: "umaze", "medium", "large". Throws ConfigError otherwise.
const MazeLayout& maze_preset(std::string_view name);
std::vector<std::string> maze_preset_names();
/// Preset text exactly as shipped in data/mazes/<name>.txt.
std::string_view maze_preset_text(std::string_view name);

struct PointMazeOptions {
  double dt = 0.05;
  double max_speed = 1.0;
  int max_steps = 300;
  double gamma = 0.99;
};

/// 2-D point mass: state (x, y, vx, vy), action = acceleration in [-1, 1]^2.
/// Semi-implicit Euler; collisions resolve per axis, zeroing the normal
/// velocity component and keeping the tangential one. Reward 1 inside the
/// goal disc (episode ends), 0 elsewhere.
class PointMazeEnv final : public Env {
 public:
  /// Distance kept between the point and a wall it is pressed against.
  static constexpr double kContactGap = 1e-6;

  PointMazeEnv(MazeLayout layout, std::string name, PointMazeOptions options = {});

  std::string name() const override { return name_; }
  int state_dim() const override { return 4; }
  int action_dim() const override { return 2; }
  int max_steps() const override { return options_.max_steps; }
  double gamma() const override { return options_.gamma; }

  Vector<double> reset(std::uint64_t seed, StartMode mode = StartMode::kPreset) override;
  /// Place the point at an explicit state (tests, probes).
  void set_state(const Vector<double>& state);
  StepResult step(const Vector<double>& action) override;
  const Vector<double>& state() const override { return state_; }
  int elapsed_steps() const override { return steps_; }

  std::unique_ptr<Env> clone() const override;
  std::unique_ptr<Controller> make_expert() const override;

  const MazeLayout& layout() const { return layout_; }
  const PointMazeOptions& options() const { return options_; }
  bool in_goal(double x, double y) const;

 private:
  double move_x(double x, double y, double dx, bool& hit) const;
  double move_y(double x, double y, double dy, bool& hit) const;

  MazeLayout layout_;
  std::string name_;
  PointMazeOptions options_;
  Vector<double> state_;
  int steps_ = 0;
};

/// Shortest-path waypoint follower over the layout's cell grid. Among equally
/// short routes it picks per (episode, cell) with a seeded coin, so a dataset
/// of expert episodes covers every shortest route.
class MazeExpert final : public Controller {
 public:
  explicit MazeExpert(const PointMazeEnv& env);

  void begin_episode(std::uint64_t seed) override;
  Vector<double> act(const Vector<double>& state) override;

  /// BFS distance (in cells) from each cell to the goal cell; -1 if unreachable.
  const std::vector<int>& distance_map() const { return distance_; }
  int cell_of(double x, double y) const;

 private:
  bool open_between(int cell_a, int cell_b) const;

  MazeLayout layout_;
  int n_ = 0;
  std::vector<int> distance_;
  std::uint64_t episode_seed_ = 0;
};

/// SVG rendering of a layout and an optional (x, y) trajectory, for humans.
std::string render_svg(const MazeLayout& layout, const std::vector<std::array<double, 2>>& path);

}  // namespace habi::envs
