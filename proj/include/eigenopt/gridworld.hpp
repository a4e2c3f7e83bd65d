#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <deque>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "eigenopt/errors.hpp"

namespace eigenopt {

enum class Action : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3 };

inline constexpr int kNumActions = 4;
inline constexpr std::array<Action, kNumActions> kActions{Action::Up, Action::Down, Action::Left,
                                                          Action::Right};

constexpr int to_index(Action a) { return static_cast<int>(a); }
constexpr Action action_from_index(int i) { return static_cast<Action>(i); }

constexpr char action_arrow(Action a) {
  switch (a) {
    case Action::Up: return '^';
    case Action::Down: return 'v';
    case Action::Left: return '<';
    case Action::Right: return '>';
  }
  return '?';
}

constexpr std::optional<Action> action_from_arrow(char c) {
  switch (c) {
    case '^': return Action::Up;
    case 'v': return Action::Down;
    case '<': return Action::Left;
    case '>': return Action::Right;
    default: return std::nullopt;
  }
}

struct Cell {
  int row = 0;
  int col = 0;
  friend constexpr auto operator<=>(const Cell&, const Cell&) = default;
};

constexpr Cell offset(Cell c, Action a) {
  switch (a) {
    case Action::Up: return {c.row - 1, c.col};
    case Action::Down: return {c.row + 1, c.col};
    case Action::Left: return {c.row, c.col - 1};
    case Action::Right: return {c.row, c.col + 1};
  }
  return c;
}

/// Tabular state index in [0, num_states()), assigned row-major over floor cells.
using State = int;

/// Immutable rectangular grid. The outer border must be wall and all floor
/// cells must form one 4-connected component.
class GridLayout {
 public:
  GridLayout(std::string name, int height, int width, const std::vector<Cell>& walls)
      : name_(std::move(name)), height_(height), width_(width) {
    if (height < 3 || width < 3) throw ValidationError("layout must be at least 3x3");
    wall_.assign(static_cast<std::size_t>(height * width), false);
    for (const Cell& c : walls) {
      if (!in_bounds(c)) throw ValidationError("wall outside the grid");
      wall_[flat(c)] = true;
    }
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c)
        if ((r == 0 || c == 0 || r == height - 1 || c == width - 1) && !wall_[flat({r, c})])
          throw ValidationError("outer border of layout '" + name_ + "' must be wall");
    index_.assign(wall_.size(), -1);
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c)
        if (!wall_[flat({r, c})]) {
          index_[flat({r, c})] = static_cast<State>(cells_.size());
          cells_.push_back({r, c});
        }
    if (cells_.empty()) throw ValidationError("layout has no floor cells");
    next_.resize(cells_.size() * kNumActions);
    for (State s = 0; s < num_states(); ++s)
      for (Action a : kActions) {
        const Cell target = offset(cells_[s], a);
        next_[s * kNumActions + to_index(a)] = is_wall(target) ? s : index_[flat(target)];
      }
    check_connected();
    doorways_ = find_doorways();
  }

  /// Parses '#' as wall and any other character as floor.
  static GridLayout from_rows(std::string name, const std::vector<std::string>& rows) {
    if (rows.empty()) throw ValidationError("empty layout");
    const int width = static_cast<int>(rows.front().size());
    std::vector<Cell> walls;
    for (int r = 0; r < static_cast<int>(rows.size()); ++r) {
      if (static_cast<int>(rows[r].size()) != width)
        throw ValidationError("ragged layout row " + std::to_string(r));
      for (int c = 0; c < width; ++c)
        if (rows[r][c] == '#') walls.push_back({r, c});
    }
    return GridLayout(std::move(name), static_cast<int>(rows.size()), width, walls);
  }

  const std::string& name() const { return name_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int num_states() const { return static_cast<int>(cells_.size()); }

  bool in_bounds(Cell c) const { return c.row >= 0 && c.col >= 0 && c.row < height_ && c.col < width_; }
  bool is_wall(Cell c) const { return !in_bounds(c) || wall_[flat(c)]; }

  State state_of(Cell c) const {
    if (is_wall(c))
      throw ValidationError("cell (" + std::to_string(c.row) + "," + std::to_string(c.col) +
                            ") is not a floor cell of '" + name_ + "'");
    return index_[flat(c)];
  }
  std::optional<State> try_state_of(Cell c) const {
    if (is_wall(c)) return std::nullopt;
    return index_[flat(c)];
  }
  Cell cell_of(State s) const { return cells_.at(static_cast<std::size_t>(s)); }

  /// Deterministic motion; blocked moves leave the agent in place.
  State move(State s, Action a) const { return next_[s * kNumActions + to_index(a)]; }

  std::vector<State> neighbors(State s) const {
    std::vector<State> out;
    for (Action a : kActions)
      if (State n = move(s, a); n != s) out.push_back(n);
    return out;
  }

  /// One-cell passages through a wall (two open neighbours on opposite sides)
  /// that join two distinct rooms. Sorted by state index.
  const std::vector<State>& doorways() const { return doorways_; }

  std::vector<Cell> walls() const {
    std::vector<Cell> out;
    for (int r = 0; r < height_; ++r)
      for (int c = 0; c < width_; ++c)
        if (wall_[flat({r, c})]) out.push_back({r, c});
    return out;
  }

 private:
  std::size_t flat(Cell c) const { return static_cast<std::size_t>(c.row * width_ + c.col); }

  void check_connected() const {
    std::vector<bool> seen(cells_.size(), false);
    std::deque<State> frontier{0};
    seen[0] = true;
    std::size_t reached = 1;
    while (!frontier.empty()) {
      const State s = frontier.front();
      frontier.pop_front();
      for (State n : neighbors(s))
        if (!seen[n]) {
          seen[n] = true;
          ++reached;
          frontier.push_back(n);
        }
    }
    if (reached != cells_.size())
      throw ValidationError("floor cells of '" + name_ + "' are not all connected");
  }

  bool is_passage(State s) const {
    const Cell c = cells_[s];
    const bool up = !is_wall(offset(c, Action::Up)), down = !is_wall(offset(c, Action::Down));
    const bool left = !is_wall(offset(c, Action::Left)), right = !is_wall(offset(c, Action::Right));
    return (up && down && !left && !right) || (left && right && !up && !down);
  }

  // One-cell passages whose two sides fall into different regions once every
  // passage cell is removed.
  std::vector<State> find_doorways() const {
    const int n = num_states();
    std::vector<int> region(static_cast<std::size_t>(n), -1);
    for (State s = 0; s < n; ++s)
      if (is_passage(s)) region[s] = -2;
    int next_region = 0;
    for (State s = 0; s < n; ++s) {
      if (region[s] != -1) continue;
      std::deque<State> frontier{s};
      region[s] = next_region;
      while (!frontier.empty()) {
        const State u = frontier.front();
        frontier.pop_front();
        for (State v : neighbors(u))
          if (region[v] == -1) {
            region[v] = next_region;
            frontier.push_back(v);
          }
      }
      ++next_region;
    }
    std::vector<State> out;
    for (State s = 0; s < n; ++s) {
      if (region[s] != -2) continue;
      const auto sides = neighbors(s);
      if (sides.size() == 2 && region[sides[0]] >= 0 && region[sides[1]] >= 0 && region[sides[0]] != region[sides[1]])
        out.push_back(s);
    }
    return out;
  }

  std::string name_;
  int height_;
  int width_;
  std::vector<bool> wall_;
  std::vector<State> index_;
  std::vector<Cell> cells_;
  std::vector<State> next_;
  std::vector<State> doorways_;
};

/// 13x13 four-rooms map: 104 floor cells, 4 doorways.
inline GridLayout four_rooms_layout() {
  return GridLayout::from_rows("four_rooms", {
                                                 "#############",
                                                 "#.....#.....#",
                                                 "#.....#.....#",
                                                 "#...........#",
                                                 "#.....#.....#",
                                                 "#.....#.....#",
                                                 "##.####.....#",
                                                 "#.....###.###",
                                                 "#.....#.....#",
                                                 "#.....#.....#",
                                                 "#...........#",
                                                 "#.....#.....#",
                                                 "#############",
                                             });
}

/// 19x19 map of 3x3 rooms (5x5 each) with one centred doorway per shared wall.
inline GridLayout nine_rooms_layout() {
  constexpr int size = 19;
  std::vector<Cell> walls;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const bool on_wall_row = r % 6 == 0;
      const bool on_wall_col = c % 6 == 0;
      if (!on_wall_row && !on_wall_col) continue;
      const bool border = r == 0 || c == 0 || r == size - 1 || c == size - 1;
      // Doorways sit in the middle of each 5-cell wall segment (offset 3 within a room).
      const bool doorway = !border && on_wall_row != on_wall_col &&
                           ((on_wall_row && c % 6 == 3) || (on_wall_col && r % 6 == 3));
      if (!doorway) walls.push_back({r, c});
    }
  return GridLayout("nine_rooms", size, size, walls);
}

inline GridLayout build_layout(std::string_view name) {
  if (name == "four_rooms") return four_rooms_layout();
  if (name == "nine_rooms") return nine_rooms_layout();
  throw ConfigError("unknown environment '" + std::string(name) +
                    "' (expected four_rooms or nine_rooms)");
}

// ---------------------------------------------------------------------------
// Dynamics

struct TaskMode {
  State start = 0;
  State goal = 0;
};
struct GoalFree {};
using EnvMode = std::variant<TaskMode, GoalFree>;

struct Transition {
  State state = 0;
  Action action = Action::Up;
  double reward = 0.0;
  State next_state = 0;
  bool done = false;
};

inline Transition step(const GridLayout& layout, const EnvMode& mode, State s, Action a) {
  const State next = layout.move(s, a);
  const auto* task = std::get_if<TaskMode>(&mode);
  const bool at_goal = task != nullptr && next == task->goal;
  return {s, a, at_goal ? 1.0 : 0.0, next, at_goal};
}

/// Per-state action distribution, rows indexed by State.
using StochasticPolicy = std::vector<std::array<double, kNumActions>>;

inline StochasticPolicy uniform_policy(const GridLayout& layout) {
  return StochasticPolicy(static_cast<std::size_t>(layout.num_states()), {0.25, 0.25, 0.25, 0.25});
}

/// Row-stochastic P_pi[s][s'] under `policy` in goal-free dynamics.
inline Eigen::MatrixXd transition_matrix(const GridLayout& layout, const StochasticPolicy& policy) {
  const int n = layout.num_states();
  if (static_cast<int>(policy.size()) != n)
    throw ValidationError("policy has " + std::to_string(policy.size()) + " rows, expected " +
                          std::to_string(n));
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (State s = 0; s < n; ++s) {
    double total = 0.0;
    for (Action a : kActions) {
      const double w = policy[s][to_index(a)];
      if (w < 0.0) throw ValidationError("negative action probability in state " + std::to_string(s));
      total += w;
      p(s, layout.move(s, a)) += w;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw ValidationError("policy row " + std::to_string(s) + " sums to " + std::to_string(total));
  }
  return p;
}

/// BFS step distances from `from` to every state.
inline std::vector<int> bfs_distances(const GridLayout& layout, State from) {
  std::vector<int> dist(static_cast<std::size_t>(layout.num_states()), -1);
  std::deque<State> frontier{from};
  dist[from] = 0;
  while (!frontier.empty()) {
    const State s = frontier.front();
    frontier.pop_front();
    for (State n : layout.neighbors(s))
      if (dist[n] < 0) {
        dist[n] = dist[s] + 1;
        frontier.push_back(n);
      }
  }
  return dist;
}

// ---------------------------------------------------------------------------
// Start/goal configurations and the plain-text map format

struct StartGoal {
  std::string id;
  Cell start;
  Cell goal;
};

/// Four named start/goal pairs per environment, start and goal in different rooms.
inline std::vector<StartGoal> default_start_goals(std::string_view env) {
  if (env == "four_rooms")
    return {{"A", {1, 1}, {11, 11}},
            {"B", {11, 1}, {1, 11}},
            {"C", {2, 9}, {9, 3}},
            {"D", {9, 10}, {4, 2}}};
  if (env == "nine_rooms")
    return {{"A", {1, 1}, {17, 17}},
            {"B", {17, 1}, {1, 17}},
            {"C", {3, 9}, {15, 9}},
            {"D", {9, 2}, {15, 16}}};
  throw ConfigError("no start/goal configurations for environment '" + std::string(env) + "'");
}

inline TaskMode task_mode(const GridLayout& layout, const StartGoal& sg) {
  return {layout.state_of(sg.start), layout.state_of(sg.goal)};
}

/// One row per line: '#' wall, '.' floor, 'S' start, 'G' goal. Newline-terminated.
inline std::string layout_to_text(const GridLayout& layout, std::optional<State> start = std::nullopt,
                                  std::optional<State> goal = std::nullopt) {
  std::string out;
  for (int r = 0; r < layout.height(); ++r) {
    for (int c = 0; c < layout.width(); ++c) {
      const auto s = layout.try_state_of({r, c});
      if (!s) out += '#';
      else if (start && *s == *start) out += 'S';
      else if (goal && *s == *goal) out += 'G';
      else out += '.';
    }
    out += '\n';
  }
  return out;
}

struct ParsedLayout {
  GridLayout layout;
  std::optional<State> start;
  std::optional<State> goal;
};

inline ParsedLayout layout_from_text(std::string name, std::string_view text) {
  std::vector<std::string> rows;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    for (char ch : line)
      if (ch != '#' && ch != '.' && ch != 'S' && ch != 'G')
        throw ValidationError(std::string("unexpected map character '") + ch + "'");
    rows.push_back(line);
  }
  GridLayout layout = GridLayout::from_rows(std::move(name), rows);
  std::optional<State> start, goal;
  for (int r = 0; r < static_cast<int>(rows.size()); ++r)
    for (int c = 0; c < static_cast<int>(rows[r].size()); ++c) {
      const char ch = rows[r][c];
      if (ch != 'S' && ch != 'G') continue;
      auto& slot = ch == 'S' ? start : goal;
      if (slot) throw ValidationError(std::string("duplicate '") + ch + "' in map");
      slot = layout.state_of({r, c});
    }
  return {std::move(layout), start, goal};
}

}  // namespace eigenopt
