#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "eigenopt/errors.hpp"
#include "eigenopt/gridworld.hpp"
#include "eigenopt/representation.hpp"
#include "eigenopt/rng.hpp"

namespace eigenopt {

struct EigenKind {
  int rank = 0;
  double eigenvalue = 0.0;
  int sign = 1;  // +1: climbs e, -1: climbs -e
  friend bool operator==(const EigenKind&, const EigenKind&) = default;
};
struct BottleneckKind {
  State doorway = 0;
  int room = 0;
  friend bool operator==(const BottleneckKind&, const BottleneckKind&) = default;
};
struct PrimitiveKind {
  Action action = Action::Up;
  friend bool operator==(const PrimitiveKind&, const PrimitiveKind&) = default;
};
using OptionKind = std::variant<EigenKind, BottleneckKind, PrimitiveKind>;

/// Deterministic option <I, pi, beta> over tabular states.
struct OptionDef {
  int id = 0;
  std::vector<std::uint8_t> initiation;
  std::vector<Action> policy;
  std::vector<std::uint8_t> termination;
  OptionKind kind;

  int num_states() const { return static_cast<int>(policy.size()); }
  bool can_start(State s) const { return initiation[s] != 0; }
  bool terminates(State s) const { return termination[s] != 0; }
  Action act(State s) const { return policy[s]; }
  int initiation_size() const {
    return static_cast<int>(std::count(initiation.begin(), initiation.end(), std::uint8_t{1}));
  }

  friend bool operator==(const OptionDef&, const OptionDef&) = default;
};

inline std::string describe(const OptionKind& kind) {
  std::ostringstream out;
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, EigenKind>) out << "eigen(rank=" << k.rank << (k.sign < 0 ? ",-" : ",+") << ")";
        else if constexpr (std::is_same_v<K, BottleneckKind>)
          out << "bottleneck(doorway=" << k.doorway << ",room=" << k.room << ")";
        else out << "primitive(" << action_arrow(k.action) << ")";
      },
      kind);
  return out.str();
}

struct OptionLearnConfig {
  double gamma = 0.9;
  double alpha = 0.1;
  int n_episodes = 100;
  int episode_len = 1000;
};

/// Option values at or below this count as non-positive.
inline constexpr double kPositiveValueTolerance = 1e-9;

/// Throws ConstructionError unless I and {beta = 1} are disjoint and every
/// rollout from I reaches a termination state within |S| steps.
inline void validate_option(const GridLayout& layout, const OptionDef& o) {
  const int n = layout.num_states();
  if (o.num_states() != n || static_cast<int>(o.initiation.size()) != n ||
      static_cast<int>(o.termination.size()) != n)
    throw ConstructionError("option " + std::to_string(o.id) + " has mismatched table sizes");
  for (State s = 0; s < n; ++s) {
    if (!o.can_start(s)) continue;
    if (o.terminates(s))
      throw ConstructionError("option " + std::to_string(o.id) + " terminates inside its initiation set");
    State cur = s;
    int steps = 0;
    do {
      cur = layout.move(cur, o.act(cur));
      ++steps;
    } while (!o.terminates(cur) && steps < n);
    if (!o.terminates(cur))
      throw ConstructionError("option " + std::to_string(o.id) + " does not terminate from state " +
                              std::to_string(s));
  }
}

inline OptionDef primitive_option(const GridLayout& layout, Action a, int id) {
  const auto n = static_cast<std::size_t>(layout.num_states());
  return {id, std::vector<std::uint8_t>(n, 1), std::vector<Action>(n, a), std::vector<std::uint8_t>(n, 1),
          PrimitiveKind{a}};
}

// ---------------------------------------------------------------------------
// Eigenoptions

/// One-hot tabular features.
struct OneHotFeatures {
  int num_states = 0;
  Eigen::VectorXd operator()(State s) const { return Eigen::VectorXd::Unit(num_states, s); }
};

/// r(s, s') = e^T (phi(s') - phi(s)).
template <class FeatureMap>
double intrinsic_reward(const Eigenpair& e, const FeatureMap& phi, State s, State s_next) {
  return e.vector.dot(phi(s_next) - phi(s));
}

/// One-hot specialisation: e[s'] - e[s].
inline double intrinsic_reward(const Eigen::VectorXd& e, State s, State s_next) { return e(s_next) - e(s); }

/// Tabular action values for option learning, row-major |S| x |A|.
using OptionQ = std::vector<std::array<double, kNumActions>>;

namespace detail {

inline int greedy_lowest(const std::array<double, kNumActions>& row) {
  int best = 0;
  for (int a = 1; a < kNumActions; ++a)
    if (row[a] > row[best]) best = a;
  return best;
}

inline double row_max(const std::array<double, kNumActions>& row) {
  return *std::max_element(row.begin(), row.end());
}

// Drops states whose greedy rollout cycles inside I (or walks into a wall while
// still inside I) until every rollout from I terminates.
inline void prune_non_terminating(const GridLayout& layout, OptionDef& o) {
  const int n = layout.num_states();
  bool changed = true;
  while (changed) {
    changed = false;
    for (State s = 0; s < n; ++s) {
      if (!o.can_start(s)) continue;
      std::vector<State> path{s};
      State cur = s;
      while (true) {
        cur = layout.move(cur, o.act(cur));
        if (o.terminates(cur)) break;
        if (std::find(path.begin(), path.end(), cur) != path.end()) {
          for (auto it = std::find(path.begin(), path.end(), cur); it != path.end(); ++it) {
            o.initiation[*it] = 0;
            o.termination[*it] = 1;
          }
          changed = true;
          break;
        }
        path.push_back(cur);
      }
    }
  }
}

}  // namespace detail

/// Greedy option from learned intrinsic action values: pi = argmax (lowest
/// action on ties), I = {max Q > 0}, beta = 1 outside I.
inline OptionDef option_from_values(const GridLayout& layout, const OptionQ& q, int id, OptionKind kind) {
  const int n = layout.num_states();
  OptionDef o{id, std::vector<std::uint8_t>(n, 0), std::vector<Action>(n, Action::Up),
              std::vector<std::uint8_t>(n, 1), kind};
  for (State s = 0; s < n; ++s) {
    o.policy[s] = action_from_index(detail::greedy_lowest(q[s]));
    if (detail::row_max(q[s]) > kPositiveValueTolerance) {
      o.initiation[s] = 1;
      o.termination[s] = 0;
    }
  }
  detail::prune_non_terminating(layout, o);
  if (o.initiation_size() == 0)
    throw ConstructionError("option " + std::to_string(id) + " [" + describe(kind) +
                            "] has an empty initiation set (no state with positive value)");
  validate_option(layout, o);
  return o;
}

/// Q-learning on the intrinsic reward of `e` from uniform-random exploration in
/// goal-free dynamics, each episode starting from a uniformly drawn state.
inline OptionQ learn_intrinsic_values(const GridLayout& layout, const Eigen::VectorXd& e,
                                      const OptionLearnConfig& cfg, Rng& rng) {
  const int n = layout.num_states();
  OptionQ q(static_cast<std::size_t>(n), {0.0, 0.0, 0.0, 0.0});
  for (int ep = 0; ep < cfg.n_episodes; ++ep) {
    State s = static_cast<State>(rng.below(static_cast<std::size_t>(n)));
    for (int t = 0; t < cfg.episode_len; ++t) {
      const int a = static_cast<int>(rng.below(kNumActions));
      const State next = layout.move(s, action_from_index(a));
      const double r = intrinsic_reward(e, s, next);
      q[s][a] += cfg.alpha * (r + cfg.gamma * detail::row_max(q[next]) - q[s][a]);
      s = next;
    }
  }
  return q;
}

/// Q-learning on the intrinsic reward by sweeping a fixed dataset.
inline OptionQ learn_intrinsic_values_from_dataset(std::span<const Transition> dataset, int num_states,
                                                   const Eigen::VectorXd& e, double gamma, double alpha,
                                                   int n_sweeps) {
  OptionQ q(static_cast<std::size_t>(num_states), {0.0, 0.0, 0.0, 0.0});
  for (int sweep = 0; sweep < n_sweeps; ++sweep)
    for (const Transition& t : dataset) {
      const int a = to_index(t.action);
      const double r = intrinsic_reward(e, t.state, t.next_state);
      q[t.state][a] += alpha * (r + gamma * detail::row_max(q[t.next_state]) - q[t.state][a]);
    }
  return q;
}

/// Option climbing sign * e. Each (rank, sign) pair draws from its own stream.
inline OptionDef learn_eigenoption(const GridLayout& layout, const Eigenpair& e, const OptionLearnConfig& cfg,
                                   std::uint64_t seed, int id, int sign = 1) {
  if (sign != 1 && sign != -1) throw ValidationError("eigenoption sign must be +1 or -1");
  Rng rng(seed, 2 * static_cast<std::uint64_t>(e.rank) + (sign < 0 ? 1 : 0));
  const Eigen::VectorXd v = static_cast<double>(sign) * e.vector;
  const OptionQ q = learn_intrinsic_values(layout, v, cfg, rng);
  return option_from_values(layout, q, id, EigenKind{e.rank, e.value, sign});
}

struct EigenOptionSet {
  std::vector<OptionDef> options;
  std::vector<Eigenpair> eigenpairs;
  std::vector<std::string> rejections;
};

/// How eigenvectors map to options.
enum class EigenSigns {
  Both,       // +e and -e per eigenvector, in rank order, until n options exist
  Normalized  // one option per eigenvector, using the sign-normalised e
};

/// Eigenoptions from the top eigenvectors of the closed-form SR of the
/// uniform random walk. Degenerate directions are reported, not included.
/// With EigenSigns::Both the result can hold fewer than n options only when
/// the eigenvectors run out.
inline EigenOptionSet build_eigenoptions(const GridLayout& layout, int n, double sr_gamma,
                                         const OptionLearnConfig& cfg, std::uint64_t seed,
                                         EigenSigns signs = EigenSigns::Both) {
  if (n < 1) throw ValidationError("need at least one eigenoption");
  const SRMatrix psi = sr_closed_form(transition_matrix(layout, uniform_policy(layout)), sr_gamma);
  EigenOptionSet out;
  const std::vector<int> directions = signs == EigenSigns::Both ? std::vector<int>{1, -1} : std::vector<int>{1};
  const std::vector<Eigenpair> pairs = top_eigenvectors(psi, std::min(n, layout.num_states()));
  for (const Eigenpair& e : pairs) {
    if (static_cast<int>(out.options.size()) >= n) break;
    out.eigenpairs.push_back(e);
    for (int sign : directions) {
      if (static_cast<int>(out.options.size()) >= n) break;
      try {
        out.options.push_back(learn_eigenoption(layout, e, cfg, seed, static_cast<int>(out.options.size()), sign));
      } catch (const ConstructionError& err) {
        out.rejections.push_back("eigenvector rank " + std::to_string(e.rank) + (sign < 0 ? " (-)" : " (+)") + ": " +
                                 err.what());
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bottleneck options

inline std::vector<State> find_bottlenecks(const GridLayout& layout) { return layout.doorways(); }

/// Connected components of the floor once doorway cells are removed, ordered
/// by their smallest state index.
inline std::vector<std::vector<State>> find_rooms(const GridLayout& layout) {
  const int n = layout.num_states();
  std::vector<int> label(static_cast<std::size_t>(n), -1);
  for (State d : layout.doorways()) label[d] = -2;
  std::vector<std::vector<State>> rooms;
  for (State s = 0; s < n; ++s) {
    if (label[s] != -1) continue;
    const int id = static_cast<int>(rooms.size());
    rooms.emplace_back();
    std::deque<State> frontier{s};
    label[s] = id;
    while (!frontier.empty()) {
      const State u = frontier.front();
      frontier.pop_front();
      rooms[id].push_back(u);
      for (State v : layout.neighbors(u))
        if (label[v] == -1) {
          label[v] = id;
          frontier.push_back(v);
        }
    }
    std::sort(rooms[id].begin(), rooms[id].end());
  }
  return rooms;
}

/// Shortest-path option from anywhere in `room` to `doorway`.
inline OptionDef build_bottleneck_option(const GridLayout& layout, State doorway, const std::vector<State>& room,
                                         int id, int room_id = 0) {
  const int n = layout.num_states();
  std::vector<bool> allowed(static_cast<std::size_t>(n), false);
  for (State s : room) allowed[s] = true;
  if (allowed[doorway]) throw ConstructionError("doorway lies inside the room");
  allowed[doorway] = true;
  const auto adjacent = layout.neighbors(doorway);
  if (std::none_of(adjacent.begin(), adjacent.end(), [&](State v) { return v != doorway && allowed[v]; }))
    throw ConstructionError("doorway " + std::to_string(doorway) + " is not adjacent to the room");

  std::vector<int> dist(static_cast<std::size_t>(n), -1);
  std::deque<State> frontier{doorway};
  dist[doorway] = 0;
  while (!frontier.empty()) {
    const State u = frontier.front();
    frontier.pop_front();
    for (State v : layout.neighbors(u))
      if (allowed[v] && dist[v] < 0) {
        dist[v] = dist[u] + 1;
        frontier.push_back(v);
      }
  }
  OptionDef o{id, std::vector<std::uint8_t>(n, 0), std::vector<Action>(n, Action::Up),
              std::vector<std::uint8_t>(n, 1), BottleneckKind{doorway, room_id}};
  for (State s : room) {
    if (dist[s] < 0) throw ConstructionError("room state " + std::to_string(s) + " cannot reach doorway");
    o.initiation[s] = 1;
    o.termination[s] = 0;
    for (Action a : kActions) {
      const State v = layout.move(s, a);
      if (v != s && allowed[v] && dist[v] == dist[s] - 1) {
        o.policy[s] = a;
        break;
      }
    }
  }
  validate_option(layout, o);
  return o;
}

/// One option per (doorway, adjacent room) pair.
inline std::vector<OptionDef> build_bottleneck_options(const GridLayout& layout) {
  const auto rooms = find_rooms(layout);
  std::vector<int> room_of(static_cast<std::size_t>(layout.num_states()), -1);
  for (int r = 0; r < static_cast<int>(rooms.size()); ++r)
    for (State s : rooms[r]) room_of[s] = r;
  std::vector<OptionDef> out;
  for (State d : find_bottlenecks(layout)) {
    std::vector<int> adjacent_rooms;
    for (State v : layout.neighbors(d))
      if (room_of[v] >= 0) adjacent_rooms.push_back(room_of[v]);
    std::sort(adjacent_rooms.begin(), adjacent_rooms.end());
    adjacent_rooms.erase(std::unique(adjacent_rooms.begin(), adjacent_rooms.end()), adjacent_rooms.end());
    for (int r : adjacent_rooms)
      out.push_back(build_bottleneck_option(layout, d, rooms[r], static_cast<int>(out.size()), r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Execution

struct OptionRollout {
  std::vector<Transition> trajectory;
  int steps = 0;
  bool terminated = false;  // beta fired or the episode ended; false only when cut at max_steps
};

inline OptionRollout rollout_option(const GridLayout& layout, const EnvMode& mode, const OptionDef& o, State s0,
                                    int max_steps) {
  if (!o.can_start(s0))
    throw PreconditionError("state " + std::to_string(s0) + " is outside the initiation set of option " +
                            std::to_string(o.id));
  OptionRollout out;
  State s = s0;
  while (out.steps < max_steps) {
    const Transition t = step(layout, mode, s, o.act(s));
    out.trajectory.push_back(t);
    ++out.steps;
    s = t.next_state;
    if (t.done || o.terminates(s)) {
      out.terminated = true;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plain-text serialisation

namespace detail {

inline void write_grid(std::ostream& out, const GridLayout& layout, auto&& glyph) {
  for (int r = 0; r < layout.height(); ++r) {
    for (int c = 0; c < layout.width(); ++c) {
      const auto s = layout.try_state_of({r, c});
      out << (s ? glyph(*s) : '#');
    }
    out << '\n';
  }
}

inline std::vector<std::string> read_grid(std::istream& in, const GridLayout& layout, const std::string& section) {
  std::string line;
  if (!std::getline(in, line) || line != section)
    throw ValidationError("expected section '" + section + "' in option file");
  std::vector<std::string> rows;
  for (int r = 0; r < layout.height(); ++r) {
    if (!std::getline(in, line) || static_cast<int>(line.size()) != layout.width())
      throw ValidationError("malformed row " + std::to_string(r) + " in section '" + section + "'");
    rows.push_back(line);
  }
  return rows;
}

}  // namespace detail

/// Arrow map: policy inside I, 'T' where the option terminates, '#' walls.
inline std::string option_arrow_map(const GridLayout& layout, const OptionDef& o) {
  std::ostringstream out;
  detail::write_grid(out, layout, [&](State s) { return o.can_start(s) ? action_arrow(o.act(s)) : 'T'; });
  return out.str();
}

inline void write_option(std::ostream& out, const GridLayout& layout, const OptionDef& o) {
  out << "option " << o.id << '\n' << "kind ";
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, EigenKind>)
          out << "eigen " << k.rank << ' ' << k.sign << ' ' << std::setprecision(17) << k.eigenvalue;
        else if constexpr (std::is_same_v<K, BottleneckKind>) out << "bottleneck " << k.doorway << ' ' << k.room;
        else out << "primitive " << to_index(k.action);
      },
      o.kind);
  out << "\npolicy\n";
  detail::write_grid(out, layout, [&](State s) { return action_arrow(o.act(s)); });
  out << "initiation\n";
  detail::write_grid(out, layout, [&](State s) { return o.can_start(s) ? '1' : '0'; });
  out << "termination\n";
  detail::write_grid(out, layout, [&](State s) { return o.terminates(s) ? '1' : '0'; });
  out << "end\n";
}

inline OptionDef read_option(std::istream& in, const GridLayout& layout) {
  const int n = layout.num_states();
  OptionDef o{0, std::vector<std::uint8_t>(n, 0), std::vector<Action>(n, Action::Up),
              std::vector<std::uint8_t>(n, 0), PrimitiveKind{}};
  std::string line, word;
  if (!std::getline(in, line)) throw ValidationError("empty option file");
  {
    std::istringstream head(line);
    if (!(head >> word >> o.id) || word != "option") throw ValidationError("expected 'option <id>'");
  }
  if (!std::getline(in, line)) throw ValidationError("missing kind line");
  {
    std::istringstream kind(line);
    std::string tag;
    kind >> word >> tag;
    if (word != "kind") throw ValidationError("expected 'kind ...'");
    if (tag == "eigen") {
      EigenKind k;
      if (!(kind >> k.rank >> k.sign >> k.eigenvalue) || (k.sign != 1 && k.sign != -1))
        throw ValidationError("bad eigen kind line");
      o.kind = k;
    } else if (tag == "bottleneck") {
      BottleneckKind k;
      kind >> k.doorway >> k.room;
      o.kind = k;
    } else if (tag == "primitive") {
      int a = 0;
      kind >> a;
      if (a < 0 || a >= kNumActions) throw ValidationError("bad primitive action");
      o.kind = PrimitiveKind{action_from_index(a)};
    } else {
      throw ValidationError("unknown option kind '" + tag + "'");
    }
    if (kind.fail()) throw ValidationError("malformed kind line");
  }
  const auto policy = detail::read_grid(in, layout, "policy");
  const auto init = detail::read_grid(in, layout, "initiation");
  const auto term = detail::read_grid(in, layout, "termination");
  for (State s = 0; s < n; ++s) {
    const Cell c = layout.cell_of(s);
    const auto a = action_from_arrow(policy[c.row][c.col]);
    if (!a) throw ValidationError("bad policy glyph at state " + std::to_string(s));
    o.policy[s] = *a;
    o.initiation[s] = init[c.row][c.col] == '1';
    o.termination[s] = term[c.row][c.col] == '1';
  }
  if (!std::getline(in, line) || line != "end") throw ValidationError("missing 'end' marker");
  return o;
}

}  // namespace eigenopt
