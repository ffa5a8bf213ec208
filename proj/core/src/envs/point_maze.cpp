#include "habi/envs/point_maze.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <random>
#include <sstream>

#include "habi/errors.hpp"
#include "habi/rng.hpp"
#include "maze_presets.inc"

namespace habi::envs {

namespace {

constexpr double kEdgeTol = 1e-9;

double parse_number(const std::string& token, int line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(v)) {
    throw ConfigError("maze layout line " + std::to_string(line_no) + ": bad number '" + token +
                      "'");
  }
  return v;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

bool in_unit_square(double x, double y) { return x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0; }

// Cell grid over the unit square; cell id = row * n + col.
struct Grid {
  const MazeLayout* layout;
  int n;

  int cell(double x, double y) const {
    const int c = std::clamp(static_cast<int>(std::floor(x * n)), 0, n - 1);
    const int r = std::clamp(static_cast<int>(std::floor(y * n)), 0, n - 1);
    return r * n + c;
  }

  std::array<double, 2> center(int id) const {
    return {(id % n + 0.5) / n, (id / n + 0.5) / n};
  }

  // a and b must be 4-neighbours.
  bool open(int a, int b) const {
    const int ra = a / n, ca = a % n, rb = b / n, cb = b % n;
    const bool vertical_edge = ra == rb;
    const double line = vertical_edge ? static_cast<double>(std::max(ca, cb)) / n
                                      : static_cast<double>(std::max(ra, rb)) / n;
    const double lo = vertical_edge ? static_cast<double>(ra) / n : static_cast<double>(ca) / n;
    const double hi = lo + 1.0 / n;
    for (const auto& w : layout->walls) {
      if (w.vertical() != vertical_edge) continue;
      const double wl = vertical_edge ? w.x1 : w.y1;
      if (std::abs(wl - line) > kEdgeTol) continue;
      const double w_lo = vertical_edge ? std::min(w.y1, w.y2) : std::min(w.x1, w.x2);
      const double w_hi = vertical_edge ? std::max(w.y1, w.y2) : std::max(w.x1, w.x2);
      if (std::min(hi, w_hi) - std::max(lo, w_lo) > kEdgeTol) return false;
    }
    return true;
  }

  std::vector<int> neighbours(int id) const {
    std::vector<int> out;
    const int r = id / n, c = id % n;
    if (r > 0) out.push_back(id - n);
    if (c > 0) out.push_back(id - 1);
    if (c + 1 < n) out.push_back(id + 1);
    if (r + 1 < n) out.push_back(id + n);
    return out;
  }

  std::vector<int> distances_to(int target) const {
    std::vector<int> dist(static_cast<std::size_t>(n * n), -1);
    std::deque<int> queue{target};
    dist[static_cast<std::size_t>(target)] = 0;
    while (!queue.empty()) {
      const int cur = queue.front();
      queue.pop_front();
      for (int nb : neighbours(cur)) {
        if (dist[static_cast<std::size_t>(nb)] >= 0 || !open(cur, nb)) continue;
        dist[static_cast<std::size_t>(nb)] = dist[static_cast<std::size_t>(cur)] + 1;
        queue.push_back(nb);
      }
    }
    return dist;
  }
};

}  // namespace

MazeLayout MazeLayout::parse(std::string_view text) {
  MazeLayout layout;
  layout.walls.clear();
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  bool have_start = false, have_goal = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    auto bad = [&](const std::string& why) {
      return ConfigError("maze layout line " + std::to_string(line_no) + ": " + why);
    };
    if (tok[0] == "grid") {
      if (tok.size() != 2) throw bad("expected 'grid n'");
      const double g = parse_number(tok[1], line_no);
      if (g < 1 || g > 64 || g != std::floor(g)) throw bad("grid must be an integer in [1, 64]");
      layout.grid = static_cast<int>(g);
    } else if (tok[0] == "start") {
      if (tok.size() != 3) throw bad("expected 'start x y'");
      layout.start = {parse_number(tok[1], line_no), parse_number(tok[2], line_no)};
      if (!in_unit_square(layout.start[0], layout.start[1])) throw bad("start outside unit square");
      have_start = true;
    } else if (tok[0] == "goal") {
      if (tok.size() != 4) throw bad("expected 'goal x y radius'");
      layout.goal = {parse_number(tok[1], line_no), parse_number(tok[2], line_no)};
      layout.goal_radius = parse_number(tok[3], line_no);
      if (!in_unit_square(layout.goal[0], layout.goal[1])) throw bad("goal outside unit square");
      if (layout.goal_radius <= 0.0) throw bad("goal radius must be positive");
      have_goal = true;
    } else {
      if (tok.size() != 4) throw bad("expected 'x1 y1 x2 y2'");
      Wall w{parse_number(tok[0], line_no), parse_number(tok[1], line_no),
             parse_number(tok[2], line_no), parse_number(tok[3], line_no)};
      if (w.x1 != w.x2 && w.y1 != w.y2) throw bad("wall is not axis-aligned");
      if (w.x1 == w.x2 && w.y1 == w.y2) throw bad("wall has zero length");
      if (!in_unit_square(w.x1, w.y1) || !in_unit_square(w.x2, w.y2)) {
        throw bad("wall outside unit square");
      }
      layout.walls.push_back(w);
    }
  }
  if (!have_start) throw ConfigError("maze layout: missing 'start' line");
  if (!have_goal) throw ConfigError("maze layout: missing 'goal' line");
  return layout;
}

std::string MazeLayout::serialize() const {
  std::string out = "grid " + std::to_string(grid) + "\n";
  out += "start " + format_number(start[0]) + " " + format_number(start[1]) + "\n";
  out += "goal " + format_number(goal[0]) + " " + format_number(goal[1]) + " " +
         format_number(goal_radius) + "\n";
  for (const auto& w : walls) {
    out += format_number(w.x1) + " " + format_number(w.y1) + " " + format_number(w.x2) + " " +
           format_number(w.y2) + "\n";
  }
  return out;
}

std::string_view maze_preset_text(std::string_view name) {
  if (name == "umaze") return presets::kUmaze;
  if (name == "medium") return presets::kMedium;
  if (name == "large") return presets::kLarge;
  throw ConfigError("unknown maze preset '" + std::string(name) +
                    "' (expected umaze, medium or large)");
}

const MazeLayout& maze_preset(std::string_view name) {
  static const MazeLayout umaze = MazeLayout::parse(presets::kUmaze);
  static const MazeLayout medium = MazeLayout::parse(presets::kMedium);
  static const MazeLayout large = MazeLayout::parse(presets::kLarge);
  if (name == "umaze") return umaze;
  if (name == "medium") return medium;
  if (name == "large") return large;
  maze_preset_text(name);  // throws
  return medium;
}

std::vector<std::string> maze_preset_names() { return {"umaze", "medium", "large"}; }

PointMazeEnv::PointMazeEnv(MazeLayout layout, std::string name, PointMazeOptions options)
    : layout_(std::move(layout)), name_(std::move(name)), options_(options) {
  if (options_.dt <= 0.0 || options_.max_speed <= 0.0 || options_.max_steps < 1 ||
      options_.gamma <= 0.0 || options_.gamma > 1.0) {
    throw ConfigError("point maze: invalid options");
  }
  Grid grid{&layout_, layout_.grid};
  const auto dist = grid.distances_to(grid.cell(layout_.goal[0], layout_.goal[1]));
  if (dist[static_cast<std::size_t>(grid.cell(layout_.start[0], layout_.start[1]))] < 0) {
    throw ConfigError("point maze '" + name_ + "': goal unreachable from start");
  }
  state_ = Vector<double>::Zero(4);
  state_ << layout_.start[0], layout_.start[1], 0.0, 0.0;
}

Vector<double> PointMazeEnv::reset(std::uint64_t seed, StartMode mode) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  state_ = Vector<double>::Zero(4);
  if (mode == StartMode::kPreset) {
    const double jitter = 0.1 / layout_.grid;
    state_(0) = std::clamp(layout_.start[0] + jitter * (2.0 * unit(rng) - 1.0), 0.0, 1.0);
    state_(1) = std::clamp(layout_.start[1] + jitter * (2.0 * unit(rng) - 1.0), 0.0, 1.0);
  } else {
    Grid grid{&layout_, layout_.grid};
    const int goal_cell = grid.cell(layout_.goal[0], layout_.goal[1]);
    const auto dist = grid.distances_to(goal_cell);
    std::vector<int> cells;
    for (int id = 0; id < static_cast<int>(dist.size()); ++id) {
      if (dist[static_cast<std::size_t>(id)] > 0) cells.push_back(id);
    }
    const int pick = cells[static_cast<std::size_t>(unit(rng) * static_cast<double>(cells.size())) %
                           cells.size()];
    const double cw = 1.0 / layout_.grid;
    state_(0) = (pick % layout_.grid + 0.1 + 0.8 * unit(rng)) * cw;
    state_(1) = (pick / layout_.grid + 0.1 + 0.8 * unit(rng)) * cw;
  }
  steps_ = 0;
  return state_;
}

void PointMazeEnv::set_state(const Vector<double>& state) {
  if (state.size() != 4) throw ConfigError("point maze: state must have 4 entries");
  if (!in_unit_square(state(0), state(1))) throw ConfigError("point maze: position outside square");
  state_ = state;
  steps_ = 0;
}

bool PointMazeEnv::in_goal(double x, double y) const {
  const double dx = x - layout_.goal[0];
  const double dy = y - layout_.goal[1];
  return dx * dx + dy * dy <= layout_.goal_radius * layout_.goal_radius;
}

double PointMazeEnv::move_x(double x, double y, double dx, bool& hit) const {
  double nx = x + dx;
  const double g = kContactGap;
  for (const auto& w : layout_.walls) {
    if (w.vertical()) {
      // Half-gap slack: a body resting in contact next to the wall's end
      // (exactly g away) must be able to slide past it.
      const double lo = std::min(w.y1, w.y2) - 0.5 * g, hi = std::max(w.y1, w.y2) + 0.5 * g;
      if (y < lo || y > hi) continue;
      if (x <= w.x1 - g && nx > w.x1 - g) {
        nx = w.x1 - g;
        hit = true;
      } else if (x >= w.x1 + g && nx < w.x1 + g) {
        nx = w.x1 + g;
        hit = true;
      }
    } else {
      // Running along a horizontal wall's line into its end.
      if (std::abs(y - w.y1) >= 0.5 * g) continue;
      const double lo = std::min(w.x1, w.x2), hi = std::max(w.x1, w.x2);
      if (x <= lo - g && nx > lo - g) {
        nx = lo - g;
        hit = true;
      } else if (x >= hi + g && nx < hi + g) {
        nx = hi + g;
        hit = true;
      }
    }
  }
  if (nx < 0.0 || nx > 1.0) {
    nx = std::clamp(nx, 0.0, 1.0);
    hit = true;
  }
  return nx;
}

double PointMazeEnv::move_y(double x, double y, double dy, bool& hit) const {
  double ny = y + dy;
  const double g = kContactGap;
  for (const auto& w : layout_.walls) {
    if (!w.vertical()) {
      const double lo = std::min(w.x1, w.x2) - 0.5 * g, hi = std::max(w.x1, w.x2) + 0.5 * g;
      if (x < lo || x > hi) continue;
      if (y <= w.y1 - g && ny > w.y1 - g) {
        ny = w.y1 - g;
        hit = true;
      } else if (y >= w.y1 + g && ny < w.y1 + g) {
        ny = w.y1 + g;
        hit = true;
      }
    } else {
      if (std::abs(x - w.x1) >= 0.5 * g) continue;
      const double lo = std::min(w.y1, w.y2), hi = std::max(w.y1, w.y2);
      if (y <= lo - g && ny > lo - g) {
        ny = lo - g;
        hit = true;
      } else if (y >= hi + g && ny < hi + g) {
        ny = hi + g;
        hit = true;
      }
    }
  }
  if (ny < 0.0 || ny > 1.0) {
    ny = std::clamp(ny, 0.0, 1.0);
    hit = true;
  }
  return ny;
}

StepResult PointMazeEnv::step(const Vector<double>& action) {
  if (action.size() != 2) throw ConfigError("point maze: action must have 2 entries");
  const Vector<double> a = clamp_action(action);
  const double dt = options_.dt;
  double vx = std::clamp(state_(2) + a(0) * dt, -options_.max_speed, options_.max_speed);
  double vy = std::clamp(state_(3) + a(1) * dt, -options_.max_speed, options_.max_speed);
  bool hit_x = false, hit_y = false;
  const double x = move_x(state_(0), state_(1), vx * dt, hit_x);
  const double y = move_y(x, state_(1), vy * dt, hit_y);
  if (hit_x) vx = 0.0;
  if (hit_y) vy = 0.0;
  state_ << x, y, vx, vy;
  ++steps_;
  StepResult out;
  out.next_state = state_;
  const bool goal = in_goal(x, y);
  out.reward = goal ? 1.0 : 0.0;
  out.done = goal || steps_ >= options_.max_steps;
  return out;
}

std::unique_ptr<Env> PointMazeEnv::clone() const { return std::make_unique<PointMazeEnv>(*this); }

std::unique_ptr<Controller> PointMazeEnv::make_expert() const {
  return std::make_unique<MazeExpert>(*this);
}

MazeExpert::MazeExpert(const PointMazeEnv& env) : layout_(env.layout()), n_(env.layout().grid) {
  Grid grid{&layout_, n_};
  distance_ = grid.distances_to(grid.cell(layout_.goal[0], layout_.goal[1]));
}

void MazeExpert::begin_episode(std::uint64_t seed) { episode_seed_ = seed; }

int MazeExpert::cell_of(double x, double y) const { return Grid{&layout_, n_}.cell(x, y); }

bool MazeExpert::open_between(int a, int b) const { return Grid{&layout_, n_}.open(a, b); }

Vector<double> MazeExpert::act(const Vector<double>& state) {
  Grid grid{&layout_, n_};
  const double x = state(0), y = state(1);
  const int cur = grid.cell(x, y);
  const int d = distance_[static_cast<std::size_t>(cur)];
  std::array<double, 2> target = layout_.goal;
  if (d > 0) {
    std::vector<int> next;
    for (int nb : grid.neighbours(cur)) {
      if (distance_[static_cast<std::size_t>(nb)] == d - 1 && grid.open(cur, nb)) next.push_back(nb);
    }
    if (!next.empty()) {
      const auto coin = splitmix64(episode_seed_ ^ splitmix64(static_cast<std::uint64_t>(cur)));
      target = grid.center(next[coin % next.size()]);
    }
  }
  // Velocity-tracking waypoint controller.
  constexpr double kPos = 3.0, kVel = 6.0, kMaxSpeed = 0.6;
  double vx_des = kPos * (target[0] - x);
  double vy_des = kPos * (target[1] - y);
  const double speed = std::hypot(vx_des, vy_des);
  if (speed > kMaxSpeed) {
    vx_des *= kMaxSpeed / speed;
    vy_des *= kMaxSpeed / speed;
  }
  Vector<double> a(2);
  a << kVel * (vx_des - state(2)), kVel * (vy_des - state(3));
  return clamp_action(a);
}

std::string render_svg(const MazeLayout& layout, const std::vector<std::array<double, 2>>& path) {
  constexpr double S = 400.0;
  auto px = [&](double v) { return format_number(v * S); };
  auto py = [&](double v) { return format_number((1.0 - v) * S); };
  std::string out =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\" viewBox=\"0 0 400 "
      "400\">\n<rect x=\"0\" y=\"0\" width=\"400\" height=\"400\" fill=\"white\" "
      "stroke=\"black\" stroke-width=\"4\"/>\n";
  for (const auto& w : layout.walls) {
    out += "<line x1=\"" + px(w.x1) + "\" y1=\"" + py(w.y1) + "\" x2=\"" + px(w.x2) + "\" y2=\"" +
           py(w.y2) + "\" stroke=\"black\" stroke-width=\"4\"/>\n";
  }
  out += "<circle cx=\"" + px(layout.goal[0]) + "\" cy=\"" + py(layout.goal[1]) + "\" r=\"" +
         format_number(layout.goal_radius * S) + "\" fill=\"#7c7\"/>\n";
  out += "<circle cx=\"" + px(layout.start[0]) + "\" cy=\"" + py(layout.start[1]) +
         "\" r=\"4\" fill=\"#c77\"/>\n";
  if (!path.empty()) {
    out += "<polyline fill=\"none\" stroke=\"#36c\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : path) out += px(p[0]) + "," + py(p[1]) + " ";
    out += "\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace habi::envs
