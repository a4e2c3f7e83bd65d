// eigenopt: run seeded sweeps, inspect pre-computed options, re-render plots.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "eigenopt/harness.hpp"

namespace {

using namespace eigenopt;

ExperimentConfig load_with_overrides(const std::string& path, const std::string& seeds) {
  ExperimentConfig cfg = load_config(path);
  if (!seeds.empty()) cfg.seeds = parse_seed_list(seeds);
  validate(cfg);
  return cfg;
}

fs::path default_out(const std::string& config_path) {
  return fs::path("results") / fs::path(config_path).stem();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eigenoption discovery and option-value learning in tabular gridworlds"};
  app.require_subcommand(1);

  std::string config_path, seeds, out, dir;
  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool no_plots = false;

  auto* run = app.add_subcommand("run", "run every (algorithm, start/goal, seed) cell of a config");
  run->add_option("config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
  run->add_option("--seeds", seeds, "override seeds, e.g. 0-99 or 1,5,7");
  run->add_option("--workers", workers, "parallel runs")->check(CLI::PositiveNumber);
  run->add_option("--out", out, "result directory (default results/<config name>)");
  run->add_flag("--no-plots", no_plots, "skip PNG rendering");

  auto* inspect = app.add_subcommand("inspect-options", "write eigen and bottleneck option diagnostics");
  inspect->add_option("config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
  inspect->add_option("--out", out, "output directory (default results/<config name>)");

  auto* plot_cmd = app.add_subcommand("plot", "render PNG plots from a result directory");
  plot_cmd->add_option("dir", dir, "result directory written by 'run'")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const ExperimentConfig cfg = load_with_overrides(config_path, seeds);
      const fs::path root = out.empty() ? default_out(config_path) : fs::path(out);
      auto log = make_run_logger(ResultStore(root).log());
      const auto summary = run_sweep(cfg, root, workers, *log, !no_plots);
      std::cout << summary.cells << " runs in " << root.string() << '\n';
      return 0;
    }
    if (*inspect) {
      const ExperimentConfig cfg = load_config(config_path);
      const fs::path root = out.empty() ? default_out(config_path) : fs::path(out);
      auto log = make_run_logger(root / "inspect.log");
      return inspect_options(cfg, root, *log);
    }
    if (!fs::is_directory(dir)) {
      std::cerr << "error: " << dir << " is not a directory\n";
      return 2;
    }
    auto log = make_run_logger(fs::path(dir) / "plot.log");
    return plot_directory(dir, *log);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
