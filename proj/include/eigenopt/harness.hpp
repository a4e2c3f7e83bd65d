#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "eigenopt/agents.hpp"
#include "eigenopt/config.hpp"
#include "eigenopt/evaluation.hpp"
#include "eigenopt/options.hpp"
#include "eigenopt/plot.hpp"
#include "eigenopt/rng.hpp"

namespace eigenopt {

namespace fs = std::filesystem;

/// Writes `content` to a sibling temp file, then renames it over `path`.
inline void write_atomic(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ostringstream suffix;
  suffix << ".tmp." << std::this_thread::get_id();
  const fs::path tmp = path.string() + suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Run directory layout:
///   config.json                                resolved config plus metadata
///   run.log
///   layouts/<cfg>.txt                          map with S and G
///   runs/<cfg>/<alg>/seed_<k>.csv              one row per episode
///   aggregate/index.csv                        config_id,algorithm,statistic,file
///   aggregate/<cfg>__<alg>__{mean,median}.csv
///   snapshots/index.csv                        config_id,algorithm,seed,episode,visitation,positive
///   snapshots/<cfg>__<alg>__ep<k>_{visitation,positive}.csv
///   plots/*.png
class ResultStore {
 public:
  explicit ResultStore(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const { return root_; }
  fs::path config() const { return root_ / "config.json"; }
  fs::path log() const { return root_ / "run.log"; }
  fs::path layout(const std::string& cfg) const { return root_ / "layouts" / (cfg + ".txt"); }
  fs::path run(const std::string& cfg, const std::string& alg, std::uint64_t seed) const {
    return root_ / "runs" / cfg / alg / ("seed_" + std::to_string(seed) + ".csv");
  }
  fs::path aggregate_index() const { return root_ / "aggregate" / "index.csv"; }
  fs::path aggregate(const std::string& cfg, const std::string& alg, const std::string& stat) const {
    return root_ / "aggregate" / (cfg + "__" + alg + "__" + stat + ".csv");
  }
  fs::path snapshot_index() const { return root_ / "snapshots" / "index.csv"; }
  fs::path snapshot(const std::string& cfg, const std::string& alg, int episode, const std::string& what) const {
    return root_ / "snapshots" / (cfg + "__" + alg + "__ep" + std::to_string(episode) + "_" + what + ".csv");
  }
  fs::path plots() const { return root_ / "plots"; }

 private:
  fs::path root_;
};

/// Pre-computed option sets shared read-only by every cell of a sweep.
struct PreparedOptions {
  std::optional<EigenOptionSet> eigen;
  std::optional<OptionSet> eigen_set;
  std::optional<OptionSet> bottleneck_set;
};

inline PreparedOptions prepare_options(const ExperimentConfig& cfg, const GridLayout& layout) {
  PreparedOptions out;
  const bool need_eigen = std::any_of(cfg.algorithms.begin(), cfg.algorithms.end(), uses_eigenoptions);
  const bool need_bottleneck = std::any_of(cfg.algorithms.begin(), cfg.algorithms.end(), uses_bottlenecks);
  if (need_eigen) {
    out.eigen = build_eigenoptions(layout, cfg.n_eigenoptions, cfg.sr_gamma, cfg.option_learning, cfg.option_seed,
                                   cfg.eigen_signs);
    out.eigen_set.emplace(layout.num_states(), out.eigen->options);
  }
  if (need_bottleneck) out.bottleneck_set.emplace(layout.num_states(), build_bottleneck_options(layout));
  return out;
}

/// One (algorithm, start/goal, seed) cell.
inline RunResult run_cell(const ExperimentConfig& cfg, const GridLayout& layout, const PreparedOptions& prepared,
                          Algorithm alg, const StartGoal& sg, std::uint64_t seed) {
  const Task task{&layout, task_mode(layout, sg), cfg.env, sg.id};
  const std::string name(algorithm_name(alg));
  switch (alg) {
    case Algorithm::QLearning: return run_qlearning(task, cfg.agent, cfg.run, seed);
    case Algorithm::EigenExploration: return run_eo_exploration(task, *prepared.eigen_set, cfg.agent, cfg.run, seed, name);
    case Algorithm::VaeoEigen: return run_vaeo(task, *prepared.eigen_set, cfg.agent, cfg.run, seed, name);
    case Algorithm::VaeoBottleneck: return run_vaeo(task, *prepared.bottleneck_set, cfg.agent, cfg.run, seed, name);
    case Algorithm::CreditEigen:
      return run_credit_assignment_protocol(task, *prepared.eigen_set, cfg.agent, cfg.run, seed, name);
    case Algorithm::CreditBottleneck:
      return run_credit_assignment_protocol(task, *prepared.bottleneck_set, cfg.agent, cfg.run, seed, name);
    case Algorithm::Ceo:
    case Algorithm::Vace: {
      VaceConfig v = cfg.vace;
      v.learn_option_values = alg == Algorithm::Vace;
      return run_vace(task, cfg.agent, v, cfg.option_learning, cfg.run, seed);
    }
  }
  throw std::logic_error("unhandled algorithm");
}

/// Index of the run with median final performance (mean steps over the last
/// quarter of episodes); ties go to the lower seed.
inline std::size_t median_run_index(std::span<const RunResult> runs) {
  if (runs.empty()) throw ValidationError("no runs");
  std::vector<std::size_t> idx(runs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> score;
  for (const RunResult& r : runs) score.push_back(tail_mean(r, 0.25));
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] < score[b];
    return runs[a].seed < runs[b].seed;
  });
  return idx[(idx.size() - 1) / 2];
}

inline std::shared_ptr<spdlog::logger> make_run_logger(const fs::path& log_file, bool console = true) {
  fs::create_directories(log_file.parent_path());
  std::vector<spdlog::sink_ptr> sinks;
  sinks.push_back(std::make_shared<spdlog::sinks::basic_file_sink_mt>(log_file.string(), true));
  if (console) sinks.push_back(std::make_shared<spdlog::sinks::stderr_color_sink_mt>());
  auto logger = std::make_shared<spdlog::logger>("eigenopt", sinks.begin(), sinks.end());
  logger->set_pattern("[%Y-%m-%d %H:%M:%S.%e] [%l] %v");
  logger->flush_on(spdlog::level::info);
  return logger;
}

inline nlohmann::json run_metadata(const ExperimentConfig& cfg, const PreparedOptions& prepared) {
  nlohmann::json meta;
  meta["rng"] = Rng::kName;
  meta["mean_ci"] = "normal approximation, z = " + std::to_string(normal_critical_value(cfg.confidence));
  if (cfg.seeds.size() >= 2) {
    const auto [lo, hi] = median_order_statistics(static_cast<int>(cfg.seeds.size()), cfg.confidence);
    meta["median_ci"] = "binomial order statistics " + std::to_string(lo) + ".." + std::to_string(hi) + " of " +
                        std::to_string(cfg.seeds.size());
  }
  meta["eigen_tie_break"] = "equal eigenvalues ordered lexicographically on sign-normalised vectors";
  if (prepared.eigen) {
    meta["eigenoptions"] = prepared.eigen->options.size();
    meta["eigenoption_rejections"] = prepared.eigen->rejections;
  }
  return meta;
}

namespace detail {

inline std::string run_csv(const RunResult& r) {
  std::ostringstream out;
  write_run_csv(out, r);
  return out.str();
}

inline std::string aggregate_csv(const AggregateCurve& c) {
  std::ostringstream out;
  write_aggregate_csv(out, c);
  return out.str();
}

inline std::string grid_csv(const GridLayout& layout, const std::vector<double>& values) {
  std::ostringstream out;
  write_state_grid_csv(out, layout, values);
  return out.str();
}

}  // namespace detail

struct SweepSummary {
  std::size_t cells = 0;
  std::map<std::pair<std::string, std::string>, std::vector<RunResult>> runs;  // (config_id, algorithm)
};

/// Renders every plot the result directory has data for.
inline int plot_directory(const fs::path& dir, spdlog::logger& log) {
  const ResultStore store(dir);
  if (!fs::exists(store.aggregate_index())) {
    log.error("{} has no aggregate/index.csv", dir.string());
    return 2;
  }
  std::istringstream index(read_file(store.aggregate_index()));
  std::string line;
  std::getline(index, line);
  if (line != "config_id,algorithm,statistic,file") {
    log.error("aggregate index has an unexpected header");
    return 2;
  }
  std::map<std::pair<std::string, std::string>, std::vector<plot::Series>> groups;  // (config, statistic)
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 4) {
      log.error("malformed aggregate index row '{}'", line);
      return 2;
    }
    std::istringstream csv(read_file(store.root() / "aggregate" / f[3]));
    groups[{f[0], f[2]}].push_back({f[1], read_aggregate_csv(csv)});
  }
  if (groups.empty()) {
    log.error("aggregate index lists no curves");
    return 2;
  }
  int written = 0;
  for (const auto& [key, series] : groups) {
    const auto& [cfg, stat] = key;
    const std::string title = "config " + cfg + " (" + stat + ", " + std::to_string(series.front().curve.n_runs) +
                              " runs)";
    plot::write_png(store.plots() / (cfg + "_" + stat + ".png"), plot::learning_curves(series, title));
    ++written;
  }
  if (fs::exists(store.snapshot_index())) {
    std::istringstream snaps(read_file(store.snapshot_index()));
    std::getline(snaps, line);
    while (std::getline(snaps, line)) {
      if (line.empty()) continue;
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
      if (f.size() != 6) {
        log.error("malformed snapshot index row '{}'", line);
        return 2;
      }
      std::istringstream vis(read_file(store.root() / "snapshots" / f[4]));
      std::istringstream pos(read_file(store.root() / "snapshots" / f[5]));
      std::optional<Cell> start, goal;
      if (fs::exists(store.layout(f[0]))) {
        const ParsedLayout parsed = layout_from_text(f[0], read_file(store.layout(f[0])));
        if (parsed.start) start = parsed.layout.cell_of(*parsed.start);
        if (parsed.goal) goal = parsed.layout.cell_of(*parsed.goal);
      }
      const std::string title = f[1] + " config " + f[0] + " seed " + f[2] + " episode " + f[3];
      plot::write_png(store.plots() / (f[0] + "__" + f[1] + "__ep" + f[3] + ".png"),
                      plot::heatmap(read_grid_csv(vis), read_grid_csv(pos), title, start, goal));
      ++written;
    }
  }
  log.info("wrote {} plots to {}", written, store.plots().string());
  return 0;
}

/// Runs every (algorithm x start/goal x seed) cell on `workers` threads and
/// writes per-run CSVs, aggregates, snapshots and plots under `out`.
inline SweepSummary run_sweep(const ExperimentConfig& cfg, const fs::path& out, int workers, spdlog::logger& log,
                              bool make_plots = true) {
  validate(cfg);
  const ResultStore store(out);
  if (fs::exists(store.config())) log.warn("{} already holds results; overwriting", out.string());
  const GridLayout layout = config_layout(cfg);
  const PreparedOptions prepared = prepare_options(cfg, layout);
  if (prepared.eigen) {
    log.info("{} eigenoptions built", prepared.eigen->options.size());
    for (const auto& r : prepared.eigen->rejections) log.info("rejected {}", r);
  }

  nlohmann::json snapshot = to_json(cfg);
  snapshot["metadata"] = run_metadata(cfg, prepared);
  write_atomic(store.config(), snapshot.dump(2) + "\n");
  for (const StartGoal& sg : cfg.start_goals) {
    const TaskMode mode = task_mode(layout, sg);
    write_atomic(store.layout(sg.id), layout_to_text(layout, mode.start, mode.goal));
  }

  struct Cell {
    Algorithm alg;
    std::size_t sg;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (Algorithm a : cfg.algorithms)
    for (std::size_t i = 0; i < cfg.start_goals.size(); ++i)
      for (std::uint64_t seed : cfg.seeds) cells.push_back({a, i, seed});

  std::vector<RunResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        const Cell& c = cells[i];
        const StartGoal& sg = cfg.start_goals[c.sg];
        RunResult r = run_cell(cfg, layout, prepared, c.alg, sg, c.seed);
        r.final_q = QTable{};  // not persisted; keeps memory flat
        write_atomic(store.run(sg.id, r.algorithm, c.seed), detail::run_csv(r));
        for (const auto& line : r.log) log.info("{} {} seed {}: {}", r.algorithm, sg.id, c.seed, line);
        results[i] = std::move(r);
        const std::size_t n = ++done;
        if (n % 50 == 0 || n == cells.size()) log.info("{}/{} runs finished", n, cells.size());
      } catch (...) {
        const std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = cells.size();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  SweepSummary summary;
  summary.cells = cells.size();
  for (std::size_t i = 0; i < cells.size(); ++i)
    summary.runs[{cfg.start_goals[cells[i].sg].id, results[i].algorithm}].push_back(std::move(results[i]));

  std::ostringstream index, snaps;
  index << "config_id,algorithm,statistic,file\n";
  snaps << "config_id,algorithm,seed,episode,visitation,positive\n";
  for (const auto& [key, runs] : summary.runs) {
    const auto& [cfg_id, alg] = key;
    if (runs.size() >= 2) {
      const auto mean = aggregate_mean_ci(runs, cfg.confidence);
      const auto median = aggregate_median(runs, cfg.confidence);
      write_atomic(store.aggregate(cfg_id, alg, "mean"), detail::aggregate_csv(mean));
      write_atomic(store.aggregate(cfg_id, alg, "median"), detail::aggregate_csv(median));
      index << cfg_id << ',' << alg << ",mean," << store.aggregate(cfg_id, alg, "mean").filename().string() << '\n'
            << cfg_id << ',' << alg << ",median," << store.aggregate(cfg_id, alg, "median").filename().string()
            << '\n';
    } else {
      log.warn("{} {}: a single run has no confidence band; skipping aggregates", cfg_id, alg);
    }
    const RunResult& typical = runs[median_run_index(runs)];
    for (const ValueSnapshot& snap : typical.snapshots) {
      std::vector<double> positive(snap.positive_value.begin(), snap.positive_value.end());
      const auto vis_path = store.snapshot(cfg_id, alg, snap.episode, "visitation");
      const auto pos_path = store.snapshot(cfg_id, alg, snap.episode, "positive");
      write_atomic(vis_path, detail::grid_csv(layout, normalized_visitation(snap.visitation)));
      write_atomic(pos_path, detail::grid_csv(layout, positive));
      snaps << cfg_id << ',' << alg << ',' << typical.seed << ',' << snap.episode << ','
            << vis_path.filename().string() << ',' << pos_path.filename().string() << '\n';
    }
  }
  write_atomic(store.aggregate_index(), index.str());
  write_atomic(store.snapshot_index(), snaps.str());
  log.info("{} runs written to {}", cells.size(), out.string());
  if (make_plots && plot_directory(out, log) != 0) throw std::runtime_error("plotting failed");
  return summary;
}

/// Writes every pre-computed option of the config's environment: serialised
/// option files, per-option rollout-length histograms, the SR and its
/// eigenpairs.
inline int inspect_options(const ExperimentConfig& cfg, const fs::path& out, spdlog::logger& log) {
  const GridLayout layout = config_layout(cfg);
  const fs::path dir = out / "options";
  const EigenOptionSet eigen = build_eigenoptions(layout, cfg.n_eigenoptions, cfg.sr_gamma, cfg.option_learning,
                                                  cfg.option_seed, cfg.eigen_signs);
  const std::vector<OptionDef> bottlenecks = build_bottleneck_options(layout);

  const auto describe_option = [&](const OptionDef& o, const std::string& name) {
    std::ostringstream text;
    write_option(text, layout, o);
    write_atomic(dir / (name + ".txt"), text.str());

    std::map<int, int> histogram;
    for (State s = 0; s < layout.num_states(); ++s)
      if (o.can_start(s)) ++histogram[rollout_option(layout, GoalFree{}, o, s, layout.num_states()).steps];
    std::ostringstream stats;
    stats << "option " << o.id << ' ' << describe(o.kind) << '\n';
    if (const auto* k = std::get_if<EigenKind>(&o.kind))
      stats << "eigenvalue " << std::setprecision(17) << k->eigenvalue << '\n';
    stats << "initiation_states " << o.initiation_size() << '\n' << "rollout_length count\n";
    for (const auto& [len, count] : histogram) stats << len << ' ' << count << '\n';
    stats << '\n' << option_arrow_map(layout, o);
    write_atomic(dir / (name + ".stats.txt"), stats.str());
  };
  for (std::size_t i = 0; i < eigen.options.size(); ++i) describe_option(eigen.options[i], "eigen_" + std::to_string(i));
  for (std::size_t i = 0; i < bottlenecks.size(); ++i)
    describe_option(bottlenecks[i], "bottleneck_" + std::to_string(i));

  const SRMatrix psi = sr_closed_form(transition_matrix(layout, uniform_policy(layout)), cfg.sr_gamma);
  std::ostringstream sr, pairs, rejections;
  write_matrix_csv(sr, psi.values);
  write_eigenpairs_csv(pairs, eigen.eigenpairs);
  for (const auto& r : eigen.rejections) rejections << r << '\n';
  write_atomic(dir / "sr.csv", sr.str());
  write_atomic(dir / "eigenpairs.csv", pairs.str());
  write_atomic(dir / "rejections.txt", rejections.str());
  log.info("{} eigenoptions ({} rejected directions) and {} bottleneck options written to {}", eigen.options.size(),
           eigen.rejections.size(), bottlenecks.size(), dir.string());
  return 0;
}

}  // namespace eigenopt
