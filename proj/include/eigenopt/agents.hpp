#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "eigenopt/errors.hpp"
#include "eigenopt/gridworld.hpp"
#include "eigenopt/options.hpp"
#include "eigenopt/qtable.hpp"
#include "eigenopt/representation.hpp"
#include "eigenopt/rng.hpp"
#include "eigenopt/run_result.hpp"

namespace eigenopt {

/// Learner hyperparameters; alpha/gamma apply to primitive columns and
/// alpha_o/gamma_o to option columns.
struct AgentConfig {
  double epsilon = 0.05;
  double gamma = 0.99;
  double alpha = 0.1;
  double gamma_o = 0.99;
  double alpha_o = 0.1;

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("epsilon must lie in [0, 1]");
    if (!(gamma >= 0.0 && gamma < 1.0) || !(gamma_o >= 0.0 && gamma_o < 1.0))
      throw ValidationError("discounts must lie in [0, 1)");
    if (!(alpha > 0.0 && alpha <= 1.0) || !(alpha_o > 0.0 && alpha_o <= 1.0))
      throw ValidationError("step sizes must lie in (0, 1]");
  }
};

/// Online discovery settings. learn_option_values selects VACE (true) or CEO (false).
struct VaceConfig {
  int n_steps = 1000;
  int n_sweeps = 100;
  int n_iter = 1000;
  double sr_eta = 0.1;
  double sr_gamma = 0.99;
  bool learn_option_values = true;

  void validate() const {
    if (n_steps < 1 || n_sweeps < 1 || n_iter < 1) throw ValidationError("VACE counts must be positive");
    SRLearnerConfig{sr_eta, sr_gamma, n_sweeps}.validate();
  }
};

struct RunSettings {
  int n_episodes = 50;
  int episode_cap = 5000;
  std::vector<int> snapshot_episodes{1, 5, 10, 20, 50, 100};
};

/// Environment for one run: layout plus start/goal, with labels for the results.
struct Task {
  const GridLayout* layout = nullptr;
  TaskMode mode;
  std::string env;
  std::string config_id;
};

// ---------------------------------------------------------------------------
// Action selection and value updates

/// Uniform over `explore` with probability epsilon, otherwise argmax of Q over
/// `greedy` with ties broken uniformly at random.
///
/// Draw order: one uniform, then one bounded draw only if exploring or if the
/// greedy set has more than one maximiser.
inline Column select_action(const QTable& q, State s, std::span<const Column> explore,
                            std::span<const Column> greedy, double epsilon, Rng& rng) {
  if (explore.empty() || greedy.empty()) throw std::logic_error("empty action set");
  if (rng.uniform() < epsilon) return explore[rng.below(explore.size())];
  double best = -std::numeric_limits<double>::infinity();
  Column ties[64];
  std::size_t n_ties = 0;
  std::vector<Column> overflow;
  for (Column c : greedy) {
    const double v = q(s, c);
    if (v > best) {
      best = v;
      n_ties = 0;
      overflow.clear();
    }
    if (v == best) {
      if (n_ties < std::size(ties)) ties[n_ties++] = c;
      else overflow.push_back(c);
    }
  }
  const std::size_t total = n_ties + overflow.size();
  if (total == 1) return ties[0];
  const std::size_t pick = rng.below(total);
  return pick < n_ties ? ties[pick] : overflow[pick - n_ties];
}

inline Column epsilon_greedy_select(const QTable& q, State s, std::span<const Column> available, double epsilon,
                                    Rng& rng) {
  return select_action(q, s, available, available, epsilon, rng);
}

/// Q(s,a) += alpha [r + gamma max_{available_next} Q(s', .) - Q(s,a)]; no bootstrap at the goal.
inline void q_update(QTable& q, const Transition& t, const AgentConfig& cfg, std::span<const Column> available_next) {
  const double bootstrap = t.done ? 0.0 : q.max_over(t.next_state, available_next);
  double& value = q(t.state, to_index(t.action));
  value += cfg.alpha * (t.reward + cfg.gamma * bootstrap - value);
}

/// U(s, o) = (1 - beta_o(s)) Q(s, o) + beta_o(s) max_{available} Q(s, .).
inline double intra_option_target(const QTable& q, State s, const OptionDef& o, Column column,
                                  std::span<const Column> available) {
  return o.terminates(s) ? q.max_over(s, available) : q(s, column);
}

/// Intra-option Q-learning for one transition: the primitive column via
/// q_update and every option that would have taken the same action in s.
/// Targets are computed from the table before any of this call's writes.
/// `exclude` skips one column (the one an SMDP update already handled).
inline void intra_option_update_all(QTable& q, const Transition& t, const OptionSet& options, const AgentConfig& cfg,
                                    Column exclude = -1) {
  const auto available_next = options.available(t.next_state);
  const auto matching = options.consistent(t.state, t.action);
  double targets[64];
  std::vector<double> spill;
  if (matching.size() > std::size(targets)) spill.resize(matching.size());
  double* target = matching.size() > std::size(targets) ? spill.data() : targets;
  for (std::size_t k = 0; k < matching.size(); ++k) {
    const Column col = option_column(matching[k]);
    const double u = t.done ? 0.0 : intra_option_target(q, t.next_state, options[matching[k]], col, available_next);
    target[k] = t.reward + cfg.gamma_o * u;
  }
  const Column primitive = to_index(t.action);
  if (primitive != exclude) q_update(q, t, cfg, available_next);
  for (std::size_t k = 0; k < matching.size(); ++k) {
    const Column col = option_column(matching[k]);
    if (col == exclude) continue;
    double& value = q(t.state, col);
    value += cfg.alpha_o * (target[k] - value);
  }
}

/// Update after a primitive step or a completed option execution: walking the
/// trajectory backwards with return <- r + gamma * return, the executed column
/// at each visited state moves towards return + gamma^remaining * max Q(s_next, .);
/// every other consistent column gets the one-step intra-option update.
inline void smdp_update_executed(QTable& q, std::span<const Transition> traj, Column executed, State s_next,
                                 const OptionSet& options, const AgentConfig& cfg) {
  if (traj.empty()) throw ValidationError("cannot apply an option-value update to an empty trajectory");
  const bool primitive = is_primitive(executed);
  const double gamma = primitive ? cfg.gamma : cfg.gamma_o;
  const double alpha = primitive ? cfg.alpha : cfg.alpha_o;
  const bool ended_at_goal = traj.back().done;
  const auto available_next = options.available(s_next);
  double ret = 0.0;
  double discount = 1.0;
  for (auto it = traj.rbegin(); it != traj.rend(); ++it) {
    const Transition& t = *it;
    ret = t.reward + gamma * ret;
    discount *= gamma;
    const double bootstrap = ended_at_goal ? 0.0 : discount * q.max_over(s_next, available_next);
    double& value = q(t.state, executed);
    value += alpha * (ret + bootstrap - value);
    intra_option_update_all(q, t, options, cfg, executed);
  }
}

// ---------------------------------------------------------------------------
// Run bookkeeping

namespace detail {

class Recorder {
 public:
  Recorder(const Task& task, std::string algorithm, std::uint64_t seed, const RunSettings& settings)
      : settings_(settings),
        snapshot_at_(settings.snapshot_episodes.begin(), settings.snapshot_episodes.end()),
        visits_(static_cast<std::size_t>(task.layout->num_states()), 0) {
    result_.seed = seed;
    result_.algorithm = std::move(algorithm);
    result_.env = task.env;
    result_.config_id = task.config_id;
  }

  void visit(State s) { ++visits_[s]; }
  void count_step() { ++wall_steps_; }
  long long wall_steps() const { return wall_steps_; }
  int episodes_done() const { return static_cast<int>(result_.episodes.size()); }
  bool done() const { return episodes_done() >= settings_.n_episodes; }

  void end_episode(int steps, bool reached_goal, const QTable& q, const OptionSet& options, int n_options) {
    const int episode = episodes_done() + 1;
    result_.episodes.push_back({episode, steps, wall_steps_, n_options, reached_goal});
    if (snapshot_at_.contains(episode))
      result_.snapshots.push_back(value_propagation_snapshot(q, options, visits_, episode));
  }

  void log(std::string line) { result_.log.push_back(std::move(line)); }

  RunResult finish(QTable q) {
    result_.final_q = std::move(q);
    return std::move(result_);
  }

 private:
  const RunSettings& settings_;
  std::set<int> snapshot_at_;
  std::vector<long long> visits_;
  long long wall_steps_ = 0;
  RunResult result_;
};

// Episode loop shared by all learners. `decide` performs one decision (a
// primitive step or a whole option execution) from state s, may take at most
// `budget` environment steps, and reports every transition through `emit`.
template <class Decide>
void run_episodes(const Task& task, const RunSettings& settings, Recorder& rec, const QTable& q,
                  const OptionSet& value_options, const std::function<int()>& n_options, Decide&& decide) {
  const TaskMode& mode = task.mode;
  while (!rec.done()) {
    State s = mode.start;
    rec.visit(s);
    int steps = 0;
    bool reached = false;
    while (!reached && steps < settings.episode_cap) {
      decide(s, settings.episode_cap - steps, [&](const Transition& t) {
        ++steps;
        rec.count_step();
        rec.visit(t.next_state);
        s = t.next_state;
        reached = reached || t.done;
      });
    }
    rec.end_episode(steps, reached, q, value_options, n_options());
  }
}

// Executes option o from s for at most `budget` steps, calling on_step per transition.
template <class OnStep>
void execute_option(const GridLayout& layout, const TaskMode& mode, const OptionDef& o, State s, int budget,
                    OnStep&& on_step) {
  for (int k = 0; k < budget; ++k) {
    const Transition t = step(layout, mode, s, o.act(s));
    on_step(t);
    s = t.next_state;
    if (t.done || o.terminates(s)) return;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Learners

/// Plain epsilon-greedy Q-learning over primitive actions.
inline RunResult run_qlearning(const Task& task, const AgentConfig& cfg, const RunSettings& settings,
                               std::uint64_t seed) {
  cfg.validate();
  const GridLayout& layout = *task.layout;
  Rng rng(seed);
  QTable q(layout.num_states());
  const OptionSet none(layout.num_states());
  detail::Recorder rec(task, "qlearning", seed, settings);
  detail::run_episodes(task, settings, rec, q, none, [] { return 0; }, [&](State s, int, auto&& emit) {
    const Column c = epsilon_greedy_select(q, s, kPrimitiveColumns, cfg.epsilon, rng);
    const Transition t = step(layout, task.mode, s, action_from_index(c));
    q_update(q, t, cfg, kPrimitiveColumns);
    emit(t);
  });
  return rec.finish(std::move(q));
}

/// Value-aware eigenoptions: intra-option Q-learning over A plus a fixed option
/// set; options are selectable by the epsilon-greedy policy and every
/// transition updates the primitive and all consistent options.
inline RunResult run_vaeo(const Task& task, const OptionSet& options, const AgentConfig& cfg,
                          const RunSettings& settings, std::uint64_t seed, std::string algorithm = "vaeo") {
  cfg.validate();
  const GridLayout& layout = *task.layout;
  Rng rng(seed);
  QTable q(layout.num_states());
  for (const OptionDef& o : options.options()) q.add_option_column(o.id);
  detail::Recorder rec(task, std::move(algorithm), seed, settings);
  const int n_options = options.size();
  detail::run_episodes(task, settings, rec, q, options, [&] { return n_options; }, [&](State s, int budget, auto&& emit) {
    const Column c = epsilon_greedy_select(q, s, options.available(s), cfg.epsilon, rng);
    if (is_primitive(c)) {
      const Transition t = step(layout, task.mode, s, action_from_index(c));
      intra_option_update_all(q, t, options, cfg);
      emit(t);
      return;
    }
    detail::execute_option(layout, task.mode, options[c - kNumActions], s, budget, [&](const Transition& t) {
      intra_option_update_all(q, t, options, cfg);
      emit(t);
    });
  });
  return rec.finish(std::move(q));
}

/// Q-learning whose exploratory steps may launch an option (followed to
/// termination, Q-learning on every primitive transition). No option values.
inline RunResult run_eo_exploration(const Task& task, const OptionSet& options, const AgentConfig& cfg,
                                    const RunSettings& settings, std::uint64_t seed, std::string algorithm = "eo") {
  cfg.validate();
  const GridLayout& layout = *task.layout;
  Rng rng(seed);
  QTable q(layout.num_states());
  const OptionSet none(layout.num_states());
  detail::Recorder rec(task, std::move(algorithm), seed, settings);
  const int n_options = options.size();
  detail::run_episodes(task, settings, rec, q, none, [&] { return n_options; }, [&](State s, int budget, auto&& emit) {
    const Column c = select_action(q, s, options.available(s), kPrimitiveColumns, cfg.epsilon, rng);
    if (is_primitive(c)) {
      const Transition t = step(layout, task.mode, s, action_from_index(c));
      q_update(q, t, cfg, kPrimitiveColumns);
      emit(t);
      return;
    }
    detail::execute_option(layout, task.mode, options[c - kNumActions], s, budget, [&](const Transition& t) {
      q_update(q, t, cfg, kPrimitiveColumns);
      emit(t);
    });
  });
  return rec.finish(std::move(q));
}

/// Greedy rollout over A and available options, ties broken with `rng`; never
/// writes to q. Returns the steps taken (the cap when the goal is not reached);
/// `reached`, when given, tells the two apart if the goal falls on the last step.
inline int greedy_evaluation_episode(const Task& task, const OptionSet& options, const QTable& q, int cap, Rng& rng,
                                     bool* reached = nullptr) {
  if (reached) *reached = false;
  const GridLayout& layout = *task.layout;
  State s = task.mode.start;
  int steps = 0;
  while (steps < cap) {
    const Column c = epsilon_greedy_select(q, s, options.available(s), 0.0, rng);
    if (is_primitive(c)) {
      const Transition t = step(layout, task.mode, s, action_from_index(c));
      ++steps;
      if (t.done) {
        if (reached) *reached = true;
        return steps;
      }
      s = t.next_state;
      continue;
    }
    bool done = false;
    detail::execute_option(layout, task.mode, options[c - kNumActions], s, cap - steps, [&](const Transition& t) {
      ++steps;
      s = t.next_state;
      done = done || t.done;
    });
    if (done) {
      if (reached) *reached = true;
      return steps;
    }
  }
  return cap;
}

/// Credit-assignment isolation: training acts with primitives only while
/// intra-option updates run on every step; after each training episode a
/// greedy, non-learning evaluation episode over A and options is recorded.
/// The returned curve holds evaluation steps-to-goal.
inline RunResult run_credit_assignment_protocol(const Task& task, const OptionSet& options, const AgentConfig& cfg,
                                                const RunSettings& settings, std::uint64_t seed,
                                                std::string algorithm = "credit_protocol") {
  cfg.validate();
  const GridLayout& layout = *task.layout;
  Rng rng(seed);
  Rng eval_rng(seed, 1);
  QTable q(layout.num_states());
  for (const OptionDef& o : options.options()) q.add_option_column(o.id);
  detail::Recorder rec(task, std::move(algorithm), seed, settings);
  while (!rec.done()) {
    State s = task.mode.start;
    rec.visit(s);
    for (int steps = 0; steps < settings.episode_cap; ++steps) {
      const Column c = epsilon_greedy_select(q, s, kPrimitiveColumns, cfg.epsilon, rng);
      const Transition t = step(layout, task.mode, s, action_from_index(c));
      intra_option_update_all(q, t, options, cfg);
      rec.count_step();
      rec.visit(t.next_state);
      if (t.done) break;
      s = t.next_state;
    }
    bool reached = false;
    const int eval_steps = greedy_evaluation_episode(task, options, q, settings.episode_cap, eval_rng, &reached);
    rec.end_episode(eval_steps, reached, q, options, options.size());
  }
  return rec.finish(std::move(q));
}

/// Online option discovery (covering eigenoptions) with or without option values.
///
/// Interaction is continuous: reaching the goal (or the episode cap) resets to
/// the start state. Once at least n_steps transitions have accumulated since
/// the last discovery, the SR is learned by TD sweeps over that window, its top
/// eigenvector defines an intrinsic reward, an option is learned by Q-learning
/// sweeps over the same window and appended (with a zero value column when
/// learning option values). The window is then cleared.
inline RunResult run_vace(const Task& task, const AgentConfig& cfg, const VaceConfig& vcfg,
                          const OptionLearnConfig& ocfg, const RunSettings& settings, std::uint64_t seed) {
  cfg.validate();
  vcfg.validate();
  const GridLayout& layout = *task.layout;
  const int n = layout.num_states();
  const bool value_aware = vcfg.learn_option_values;
  Rng rng(seed);
  QTable q(n);
  OptionSet options(n);
  const OptionSet none(n);
  std::vector<Transition> window;
  window.reserve(std::min<std::size_t>(static_cast<std::size_t>(vcfg.n_steps), 1u << 16) +
                 static_cast<std::size_t>(settings.episode_cap));
  int discoveries = 0;
  detail::Recorder rec(task, value_aware ? "vace" : "ceo", seed, settings);

  auto discover = [&] {
    ++discoveries;
    const SRMatrix psi = learn_sr_from_dataset(window, n, {vcfg.sr_eta, vcfg.sr_gamma, vcfg.n_sweeps});
    // The top eigenvector of a learned SR is a non-negative Perron vector that
    // peaks where the agent spends its time; flip it so the option climbs
    // toward the least visited states instead.
    Eigenpair top = top_eigenvectors(psi, 1).front();
    const int sign = top.vector.sum() > 0.0 ? -1 : 1;
    top.vector *= static_cast<double>(sign);
    const OptionQ oq =
        learn_intrinsic_values_from_dataset(window, n, top.vector, ocfg.gamma, ocfg.alpha, vcfg.n_sweeps);
    try {
      OptionDef o = option_from_values(layout, oq, options.size(), EigenKind{1, top.value, sign});
      if (value_aware) q.add_option_column(o.id);
      options.add(std::move(o));
    } catch (const ConstructionError& err) {
      rec.log("iteration " + std::to_string(discoveries) + ": skipped option (" + err.what() + ")");
    }
    window.clear();
  };

  std::vector<Transition> executed;
  detail::run_episodes(
      task, settings, rec, q, value_aware ? options : none, [&] { return options.size(); },
      [&](State s, int budget, auto&& emit) {
        const Column c = value_aware
                             ? epsilon_greedy_select(q, s, options.available(s), cfg.epsilon, rng)
                             : select_action(q, s, options.available(s), kPrimitiveColumns, cfg.epsilon, rng);
        executed.clear();
        auto on_step = [&](const Transition& t) {
          window.push_back(t);
          executed.push_back(t);
          if (!value_aware) q_update(q, t, cfg, kPrimitiveColumns);
          emit(t);
        };
        if (is_primitive(c)) on_step(step(layout, task.mode, s, action_from_index(c)));
        else detail::execute_option(layout, task.mode, options[c - kNumActions], s, budget, on_step);
        if (value_aware) smdp_update_executed(q, executed, c, executed.back().next_state, options, cfg);
        if (static_cast<int>(window.size()) >= vcfg.n_steps && discoveries < vcfg.n_iter) discover();
      });
  return rec.finish(std::move(q));
}

}  // namespace eigenopt
