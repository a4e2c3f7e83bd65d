#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eigenopt/qtable.hpp"

namespace eigenopt {

struct EpisodeRecord {
  int episode = 0;                   // 1-based
  int steps_to_goal = 0;             // equals the cap when the episode was truncated
  long long wall_steps_elapsed = 0;  // environment steps since the start of the run
  int n_options = 0;
  bool reached_goal = false;
};

/// Positive-value mask and cumulative visitation counts at the end of an episode.
struct ValueSnapshot {
  int episode = 0;
  std::vector<long long> visitation;
  std::vector<std::uint8_t> positive_value;
};

struct RunResult {
  std::uint64_t seed = 0;
  std::string algorithm;
  std::string env;
  std::string config_id;
  std::vector<EpisodeRecord> episodes;
  std::vector<ValueSnapshot> snapshots;
  QTable final_q;
  std::vector<std::string> log;

  std::vector<double> steps_curve() const {
    std::vector<double> out;
    out.reserve(episodes.size());
    for (const auto& e : episodes) out.push_back(e.steps_to_goal);
    return out;
  }
};

/// mask[s] = max over A and the options available at s (restricted to columns
/// the table actually has) of Q(s, .) > 0.
inline ValueSnapshot value_propagation_snapshot(const QTable& q, const OptionSet& options,
                                                std::vector<long long> visitation, int episode = 0) {
  ValueSnapshot snap{episode, std::move(visitation), std::vector<std::uint8_t>(q.num_states(), 0)};
  for (State s = 0; s < q.num_states(); ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (Column c : (options.empty() ? std::span<const Column>(kPrimitiveColumns) : options.available(s)))
      if (c < q.num_columns()) best = std::max(best, q(s, c));
    snap.positive_value[s] = best > 0.0;
  }
  return snap;
}

/// Visitation scaled to [0, 1] by the largest count.
inline std::vector<double> normalized_visitation(const std::vector<long long>& counts) {
  long long peak = 0;
  for (long long c : counts) peak = std::max(peak, c);
  std::vector<double> out(counts.size(), 0.0);
  if (peak > 0)
    for (std::size_t i = 0; i < counts.size(); ++i) out[i] = static_cast<double>(counts[i]) / static_cast<double>(peak);
  return out;
}

}  // namespace eigenopt
