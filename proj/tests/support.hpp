// Test-only oracles and fixtures. Nothing here calls the library's solvers,
// so the comparisons in the suites are between independent routes.
#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "eigenopt/agents.hpp"
#include "eigenopt/gridworld.hpp"
#include "eigenopt/options.hpp"

namespace eigenopt::testing {

/// Psi = sum_k gamma^k P^k, truncated once the term is below 1e-15.
inline Eigen::MatrixXd geometric_series_sr(const Eigen::MatrixXd& p, double gamma) {
  const auto n = p.rows();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  for (int k = 0; k < 100000; ++k) {
    term = gamma * (term * p);
    sum += term;
    if (term.cwiseAbs().maxCoeff() < 1e-15) break;
  }
  return sum;
}

/// Cyclic Jacobi eigensolver for symmetric matrices. Returns (values, vectors)
/// with eigenvectors in columns, values unsorted.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> jacobi_eigen(Eigen::MatrixXd a) {
  const auto n = a.rows();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-26 * std::max(1.0, a.squaredNorm())) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  return {a.diagonal(), v};
}

/// Exact optimal Q for reward r(s, s') = e[s'] - e[s] on a layout in
/// goal-free mode, by value iteration to 1e-13.
inline std::vector<std::array<double, kNumActions>> intrinsic_value_iteration(const GridLayout& layout,
                                                                             const Eigen::VectorXd& e, double gamma) {
  const int n = layout.num_states();
  std::vector<std::array<double, kNumActions>> q(static_cast<std::size_t>(n), {0, 0, 0, 0});
  for (int it = 0; it < 100000; ++it) {
    double change = 0.0;
    auto next = q;
    for (State s = 0; s < n; ++s)
      for (int a = 0; a < kNumActions; ++a) {
        const State s2 = layout.move(s, action_from_index(a));
        const double best = *std::max_element(q[s2].begin(), q[s2].end());
        next[s][a] = e[s2] - e[s] + gamma * best;
        change = std::max(change, std::abs(next[s][a] - q[s][a]));
      }
    q = std::move(next);
    if (change < 1e-13) break;
  }
  return q;
}

/// All-pairs shortest paths on the floor graph by Floyd-Warshall.
inline std::vector<std::vector<int>> floyd_warshall(const GridLayout& layout) {
  const int n = layout.num_states();
  const int inf = std::numeric_limits<int>::max() / 4;
  std::vector<std::vector<int>> d(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n), inf));
  for (State s = 0; s < n; ++s) {
    d[s][s] = 0;
    for (Action a : kActions) {
      const State t = layout.move(s, a);
      if (t != s) d[s][t] = 1;
    }
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

/// Doorway oracle: a cell with open neighbours on exactly two opposite sides
/// whose removal makes the detour between those neighbours longer than 4.
inline std::vector<State> doorway_oracle(const GridLayout& layout) {
  std::vector<State> out;
  for (State s = 0; s < layout.num_states(); ++s) {
    const auto open = [&](Action a) { return layout.move(s, a) != s; };
    const bool vertical = open(Action::Up) && open(Action::Down) && !open(Action::Left) && !open(Action::Right);
    const bool horizontal = open(Action::Left) && open(Action::Right) && !open(Action::Up) && !open(Action::Down);
    if (!vertical && !horizontal) continue;
    const State a = layout.move(s, vertical ? Action::Up : Action::Left);
    const State b = layout.move(s, vertical ? Action::Down : Action::Right);
    // BFS from a avoiding s.
    std::vector<int> dist(static_cast<std::size_t>(layout.num_states()), -1);
    std::deque<State> frontier{a};
    dist[a] = 0;
    dist[s] = -2;
    while (!frontier.empty()) {
      const State u = frontier.front();
      frontier.pop_front();
      for (Action act : kActions) {
        const State v = layout.move(u, act);
        if (dist[v] == -1) {
          dist[v] = dist[u] + 1;
          frontier.push_back(v);
        }
      }
    }
    if (dist[b] < 0 || dist[b] > 4) out.push_back(s);
  }
  return out;
}

/// One-row corridor with `n` floor cells: states 0..n-1 left to right.
inline GridLayout corridor(int n) {
  std::vector<std::string> rows{std::string(n + 2, '#'), "#" + std::string(n, '.') + "#", std::string(n + 2, '#')};
  return GridLayout::from_rows("corridor", rows);
}

/// An open square room with `side` x `side` floor cells.
inline GridLayout open_room(int side) {
  std::vector<std::string> rows;
  rows.push_back(std::string(side + 2, '#'));
  for (int r = 0; r < side; ++r) rows.push_back("#" + std::string(side, '.') + "#");
  rows.push_back(std::string(side + 2, '#'));
  return GridLayout::from_rows("open_room", rows);
}

// ---------------------------------------------------------------------------
// Five-state chain with one hand-built option
//
// States 0..4 left to right, goal at 4. The option starts in {0, 1, 2}, walks
// right and terminates at 3 (or at the goal).

struct ChainProblem {
  GridLayout layout = corridor(5);
  TaskMode mode{0, 4};
  OptionDef option{0, {1, 1, 1, 0, 0}, std::vector<Action>(5, Action::Right), {0, 0, 0, 1, 1}, BottleneckKind{3, 0}};
};

/// Best discounted return from s over every primitive action sequence of
/// length up to `depth`, by exhaustive enumeration.
inline double enumerate_best_return(const ChainProblem& p, State s, double gamma, int depth) {
  if (depth == 0) return 0.0;
  double best = 0.0;
  for (Action a : kActions) {
    const Transition t = step(p.layout, p.mode, s, a);
    const double tail = t.done ? 0.0 : enumerate_best_return(p, t.next_state, gamma, depth - 1);
    best = std::max(best, t.reward + gamma * tail);
  }
  return best;
}

/// Q*(s, o): follow the option's fixed rollout, then act optimally.
inline double brute_force_option_value(const ChainProblem& p, State s, double gamma_o, double gamma) {
  double ret = 0.0, discount = 1.0;
  State cur = s;
  bool done = false;
  do {
    const Transition t = step(p.layout, p.mode, cur, p.option.act(cur));
    ret += discount * t.reward;
    discount *= gamma_o;
    cur = t.next_state;
    done = t.done;
  } while (!done && !p.option.terminates(cur));
  return done ? ret : ret + discount * enumerate_best_return(p, cur, gamma, 8);
}

/// Uniformly random behaviour over A and the option from random non-goal
/// starts, applying the option-value update after every decision.
inline QTable train_chain_smdp(const ChainProblem& p, const AgentConfig& cfg, int episodes, std::uint64_t seed) {
  const OptionSet options(p.layout.num_states(), {p.option});
  QTable q(p.layout.num_states());
  q.add_option_column(p.option.id);
  Rng rng(seed);
  std::vector<Transition> traj;
  for (int ep = 0; ep < episodes; ++ep) {
    State s = static_cast<State>(rng.below(4));
    for (int decisions = 0; decisions < 100; ++decisions) {
      const auto avail = options.available(s);
      const Column c = avail[rng.below(avail.size())];
      traj.clear();
      if (is_primitive(c)) {
        traj.push_back(step(p.layout, p.mode, s, action_from_index(c)));
      } else {
        State cur = s;
        do {
          traj.push_back(step(p.layout, p.mode, cur, p.option.act(cur)));
          cur = traj.back().next_state;
        } while (!traj.back().done && !p.option.terminates(cur));
      }
      smdp_update_executed(q, traj, c, traj.back().next_state, options, cfg);
      if (traj.back().done) break;
      s = traj.back().next_state;
    }
  }
  return q;
}

}  // namespace eigenopt::testing
