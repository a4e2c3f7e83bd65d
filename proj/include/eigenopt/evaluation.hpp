#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/normal.hpp>

#include "eigenopt/errors.hpp"
#include "eigenopt/gridworld.hpp"
#include "eigenopt/run_result.hpp"

namespace eigenopt {

enum class Statistic { Mean, Median };

/// Per-episode statistic with a confidence band.
struct AggregateCurve {
  Statistic statistic = Statistic::Mean;
  double confidence = 0.99;
  int n_runs = 0;
  std::vector<double> value;
  std::vector<double> lower;
  std::vector<double> upper;
};

namespace detail {

inline std::vector<std::vector<double>> curves_of(std::span<const RunResult> results) {
  if (results.size() < 2) throw ValidationError("aggregation needs at least two runs");
  std::vector<std::vector<double>> curves;
  for (const RunResult& r : results) curves.push_back(r.steps_curve());
  for (const auto& c : curves)
    if (c.size() != curves.front().size()) throw ValidationError("runs have different episode counts");
  return curves;
}

inline void check_confidence(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw ValidationError("confidence must lie in (0, 1)");
}

}  // namespace detail

/// Two-sided normal critical value, e.g. 2.5758 for 0.99.
inline double normal_critical_value(double confidence) {
  detail::check_confidence(confidence);
  return boost::math::quantile(boost::math::normal(), 0.5 + confidence / 2.0);
}

/// mean +/- z * s / sqrt(n) per episode (normal approximation).
inline AggregateCurve aggregate_mean_ci(const std::vector<std::vector<double>>& curves, double confidence = 0.99) {
  if (curves.size() < 2) throw ValidationError("aggregation needs at least two runs");
  for (const auto& c : curves)
    if (c.size() != curves.front().size()) throw ValidationError("runs have different episode counts");
  const double z = normal_critical_value(confidence);
  const auto n = static_cast<double>(curves.size());
  AggregateCurve out{Statistic::Mean, confidence, static_cast<int>(curves.size()), {}, {}, {}};
  for (std::size_t e = 0; e < curves.front().size(); ++e) {
    double sum = 0.0;
    for (const auto& c : curves) sum += c[e];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& c : curves) ss += (c[e] - mean) * (c[e] - mean);
    const double half = z * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    out.value.push_back(mean);
    out.lower.push_back(mean - half);
    out.upper.push_back(mean + half);
  }
  return out;
}

inline AggregateCurve aggregate_mean_ci(std::span<const RunResult> results, double confidence = 0.99) {
  return aggregate_mean_ci(detail::curves_of(results), confidence);
}

/// 1-based order statistics (l, u) bracketing the median: l - 1 is the
/// (1 - confidence)/2 quantile of Binomial(n, 1/2) and u = n + 1 - l.
inline std::pair<int, int> median_order_statistics(int n, double confidence) {
  detail::check_confidence(confidence);
  const boost::math::binomial_distribution<double> dist(n, 0.5);
  const double tail = (1.0 - confidence) / 2.0;
  int k = 0;
  while (k < n && boost::math::cdf(dist, k) < tail) ++k;
  const int lower = std::min(k + 1, (n + 1) / 2);
  return {lower, n + 1 - lower};
}

inline double median_of_sorted(const std::vector<double>& v) {
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Per-episode median with an order-statistic binomial band.
inline AggregateCurve aggregate_median(const std::vector<std::vector<double>>& curves, double confidence = 0.99) {
  if (curves.size() < 2) throw ValidationError("aggregation needs at least two runs");
  for (const auto& c : curves)
    if (c.size() != curves.front().size()) throw ValidationError("runs have different episode counts");
  const int n = static_cast<int>(curves.size());
  const auto [lo, hi] = median_order_statistics(n, confidence);
  AggregateCurve out{Statistic::Median, confidence, n, {}, {}, {}};
  std::vector<double> column(static_cast<std::size_t>(n));
  for (std::size_t e = 0; e < curves.front().size(); ++e) {
    for (int r = 0; r < n; ++r) column[r] = curves[r][e];
    std::sort(column.begin(), column.end());
    out.value.push_back(median_of_sorted(column));
    out.lower.push_back(column[lo - 1]);
    out.upper.push_back(column[hi - 1]);
  }
  return out;
}

inline AggregateCurve aggregate_median(std::span<const RunResult> results, double confidence = 0.99) {
  return aggregate_median(detail::curves_of(results), confidence);
}

/// Mean steps-to-goal over all episodes of one run (area under the learning curve / episodes).
inline double area_under_curve(const RunResult& r) {
  if (r.episodes.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& e : r.episodes) sum += e.steps_to_goal;
  return sum / static_cast<double>(r.episodes.size());
}

/// Mean steps-to-goal over the last `fraction` of episodes.
inline double tail_mean(const RunResult& r, double fraction) {
  const auto n = r.episodes.size();
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n))));
  double sum = 0.0;
  for (std::size_t i = n - k; i < n; ++i) sum += r.episodes[i].steps_to_goal;
  return sum / static_cast<double>(k);
}

/// BFS step count between two states.
inline int shortest_path_oracle(const GridLayout& layout, State start, State goal) {
  const int d = bfs_distances(layout, start)[goal];
  if (d < 0) throw ValidationError("goal unreachable from start");
  return d;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr std::string_view kRunCsvHeader =
    "seed,algorithm,env,config_id,episode,steps_to_goal,wall_steps_elapsed,n_options";

inline void write_run_csv(std::ostream& out, const RunResult& r, bool header = true) {
  if (header) out << kRunCsvHeader << '\n';
  for (const auto& e : r.episodes)
    out << r.seed << ',' << r.algorithm << ',' << r.env << ',' << r.config_id << ',' << e.episode << ','
        << e.steps_to_goal << ',' << e.wall_steps_elapsed << ',' << e.n_options << '\n';
}

/// Parses rows written by write_run_csv (one or more runs); groups consecutive
/// rows by (seed, algorithm, env, config_id).
inline std::vector<RunResult> read_run_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kRunCsvHeader) throw ValidationError("missing or wrong run CSV header");
  std::vector<RunResult> runs;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 8) throw ValidationError("run CSV row " + std::to_string(row) + " has " + std::to_string(f.size()) + " fields");
    try {
      const auto seed = std::stoull(f[0]);
      if (runs.empty() || runs.back().seed != seed || runs.back().algorithm != f[1] || runs.back().env != f[2] ||
          runs.back().config_id != f[3]) {
        RunResult r;
        r.seed = seed;
        r.algorithm = f[1];
        r.env = f[2];
        r.config_id = f[3];
        runs.push_back(std::move(r));
      }
      EpisodeRecord e;
      e.episode = std::stoi(f[4]);
      e.steps_to_goal = std::stoi(f[5]);
      e.wall_steps_elapsed = std::stoll(f[6]);
      e.n_options = std::stoi(f[7]);
      runs.back().episodes.push_back(e);
    } catch (const std::logic_error&) {
      throw ValidationError("malformed number in run CSV row " + std::to_string(row));
    }
  }
  return runs;
}

inline void write_aggregate_csv(std::ostream& out, const AggregateCurve& c) {
  out << "episode,stat,lo,hi,n\n" << std::setprecision(17);
  for (std::size_t e = 0; e < c.value.size(); ++e)
    out << e + 1 << ',' << c.value[e] << ',' << c.lower[e] << ',' << c.upper[e] << ',' << c.n_runs << '\n';
}

inline AggregateCurve read_aggregate_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "episode,stat,lo,hi,n") throw ValidationError("missing aggregate CSV header");
  AggregateCurve c;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[5];
    for (auto& x : f)
      if (!std::getline(ss, x, ',')) throw ValidationError("short aggregate CSV row");
    try {
      c.value.push_back(std::stod(f[1]));
      c.lower.push_back(std::stod(f[2]));
      c.upper.push_back(std::stod(f[3]));
      c.n_runs = std::stoi(f[4]);
    } catch (const std::logic_error&) {
      throw ValidationError("malformed number in aggregate CSV");
    }
  }
  if (c.value.empty()) throw ValidationError("aggregate CSV has no rows");
  return c;
}

/// Grid CSV, one map row per line; walls are written as -1.
inline void write_state_grid_csv(std::ostream& out, const GridLayout& layout, const std::vector<double>& per_state) {
  out << std::setprecision(17);
  for (int r = 0; r < layout.height(); ++r) {
    for (int c = 0; c < layout.width(); ++c) {
      if (c) out << ',';
      const auto s = layout.try_state_of({r, c});
      if (s) out << per_state[*s];
      else out << -1;
    }
    out << '\n';
  }
}

inline std::vector<std::vector<double>> read_grid_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::logic_error&) {
        throw ValidationError("malformed grid CSV cell '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw ValidationError("ragged grid CSV");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError("empty grid CSV");
  return rows;
}

}  // namespace eigenopt
