#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eigenopt/agents.hpp"
#include "eigenopt/errors.hpp"
#include "eigenopt/gridworld.hpp"
#include "eigenopt/options.hpp"

namespace eigenopt {

enum class Algorithm {
  QLearning,
  EigenExploration,
  VaeoEigen,
  VaeoBottleneck,
  Ceo,
  Vace,
  CreditEigen,
  CreditBottleneck
};

inline constexpr std::array<std::pair<Algorithm, std::string_view>, 8> kAlgorithmNames{{
    {Algorithm::QLearning, "qlearning"},
    {Algorithm::EigenExploration, "eo"},
    {Algorithm::VaeoEigen, "vaeo_eigen"},
    {Algorithm::VaeoBottleneck, "vaeo_bottleneck"},
    {Algorithm::Ceo, "ceo"},
    {Algorithm::Vace, "vace"},
    {Algorithm::CreditEigen, "credit_protocol_eigen"},
    {Algorithm::CreditBottleneck, "credit_protocol_bottleneck"},
}};

inline std::string_view algorithm_name(Algorithm a) {
  for (const auto& [alg, name] : kAlgorithmNames)
    if (alg == a) return name;
  return "?";
}

inline std::optional<Algorithm> parse_algorithm(std::string_view name) {
  for (const auto& [alg, n] : kAlgorithmNames)
    if (n == name) return alg;
  return std::nullopt;
}

inline bool uses_eigenoptions(Algorithm a) {
  return a == Algorithm::EigenExploration || a == Algorithm::VaeoEigen || a == Algorithm::CreditEigen;
}
inline bool uses_bottlenecks(Algorithm a) { return a == Algorithm::VaeoBottleneck || a == Algorithm::CreditBottleneck; }

/// Default number of pre-computed eigenoptions per environment.
inline int default_eigenoption_count(std::string_view env) {
  if (env == "four_rooms") return 6;
  if (env == "nine_rooms") return 24;
  return 6;
}

/// Everything needed to reproduce a sweep. Defaults are the reference
/// hyperparameters; env-dependent fields are resolved when parsed.
struct ExperimentConfig {
  std::string env;
  std::string layout_file;  // optional text map; overrides the built-in geometry
  std::vector<StartGoal> start_goals;
  std::vector<Algorithm> algorithms;
  int n_eigenoptions = 0;
  EigenSigns eigen_signs = EigenSigns::Both;
  double sr_gamma = 0.99;
  std::uint64_t option_seed = 0;
  std::vector<std::uint64_t> seeds;
  RunSettings run;
  AgentConfig agent;
  OptionLearnConfig option_learning;
  VaceConfig vace;
  double confidence = 0.99;

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    const auto sg_eq = [](const StartGoal& x, const StartGoal& y) {
      return x.id == y.id && x.start == y.start && x.goal == y.goal;
    };
    const auto agent_eq = [](const AgentConfig& x, const AgentConfig& y) {
      return x.epsilon == y.epsilon && x.gamma == y.gamma && x.alpha == y.alpha && x.gamma_o == y.gamma_o &&
             x.alpha_o == y.alpha_o;
    };
    const auto opt_eq = [](const OptionLearnConfig& x, const OptionLearnConfig& y) {
      return x.gamma == y.gamma && x.alpha == y.alpha && x.n_episodes == y.n_episodes && x.episode_len == y.episode_len;
    };
    const auto vace_eq = [](const VaceConfig& x, const VaceConfig& y) {
      return x.n_steps == y.n_steps && x.n_sweeps == y.n_sweeps && x.n_iter == y.n_iter && x.sr_eta == y.sr_eta &&
             x.sr_gamma == y.sr_gamma;
    };
    return a.env == b.env && a.layout_file == b.layout_file &&
           std::equal(a.start_goals.begin(), a.start_goals.end(), b.start_goals.begin(), b.start_goals.end(), sg_eq) &&
           a.algorithms == b.algorithms && a.n_eigenoptions == b.n_eigenoptions && a.eigen_signs == b.eigen_signs &&
           a.sr_gamma == b.sr_gamma && a.option_seed == b.option_seed && a.seeds == b.seeds &&
           a.run.n_episodes == b.run.n_episodes && a.run.episode_cap == b.run.episode_cap &&
           a.run.snapshot_episodes == b.run.snapshot_episodes && agent_eq(a.agent, b.agent) &&
           opt_eq(a.option_learning, b.option_learning) && vace_eq(a.vace, b.vace) && a.confidence == b.confidence;
  }
};

namespace detail {

using nlohmann::json;

// Reads obj[key] into out when present; wraps type errors with the field path.
template <class T>
void read_field(const json& obj, const std::string& path, const char* key, T& out) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + path + key + "' has the wrong type");
  }
}

inline void reject_unknown(const json& obj, const std::string& path, std::initializer_list<std::string_view> known) {
  for (const auto& [key, value] : obj.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown field '" + path + key + "'");
}

inline const json& object_at(const json& obj, const char* key, const std::string& path) {
  const json& v = obj.at(key);
  if (!v.is_object()) throw ConfigError("field '" + path + key + "' must be an object");
  return v;
}

inline Cell parse_cell(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
    throw ConfigError("field '" + path + "' must be [row, col]");
  return {v[0].get<int>(), v[1].get<int>()};
}

inline std::vector<std::uint64_t> parse_seeds(const json& v) {
  std::vector<std::uint64_t> seeds;
  if (v.is_array()) {
    for (const json& s : v) {
      if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
        throw ConfigError("field 'seeds' must hold non-negative integers");
      seeds.push_back(s.get<std::uint64_t>());
    }
  } else if (v.is_object()) {
    reject_unknown(v, "seeds.", {"first", "count"});
    std::uint64_t first = 0;
    long long count = -1;
    read_field(v, "seeds.", "first", first);
    read_field(v, "seeds.", "count", count);
    if (count < 1) throw ConfigError("field 'seeds.count' must be a positive integer");
    for (long long i = 0; i < count; ++i) seeds.push_back(first + static_cast<std::uint64_t>(i));
  } else {
    throw ConfigError("field 'seeds' must be a list or {first, count}");
  }
  if (seeds.empty()) throw ConfigError("field 'seeds' is empty");
  return seeds;
}

}  // namespace detail

/// Parses "a-b", "a,b,c" or a mix such as "0-9,20".
inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    try {
      const auto dash = part.find('-');
      if (dash == std::string::npos) {
        seeds.push_back(std::stoull(part));
      } else {
        const auto lo = std::stoull(part.substr(0, dash));
        const auto hi = std::stoull(part.substr(dash + 1));
        if (hi < lo) throw ConfigError("seed range '" + part + "' is reversed");
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("cannot parse seed list '" + text + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("empty seed list");
  return seeds;
}

/// Loads the layout named by the config (built-in name or text map).
inline GridLayout config_layout(const ExperimentConfig& cfg) {
  if (cfg.layout_file.empty()) return build_layout(cfg.env);
  std::ifstream in(cfg.layout_file);
  if (!in) throw ConfigError("cannot open layout_file '" + cfg.layout_file + "'");
  std::stringstream text;
  text << in.rdbuf();
  return layout_from_text(cfg.env, text.str()).layout;
}

/// Checks cross-field constraints; messages name the offending field.
inline void validate(const ExperimentConfig& cfg) {
  if (cfg.env.empty()) throw ConfigError("field 'env' is required");
  if (cfg.algorithms.empty()) throw ConfigError("field 'algorithms' must list at least one algorithm");
  if (cfg.seeds.empty()) throw ConfigError("field 'seeds' is empty");
  if (cfg.start_goals.empty()) throw ConfigError("field 'start_goals' is empty");
  if (cfg.n_eigenoptions < 1) throw ConfigError("field 'n_eigenoptions' must be positive");
  if (cfg.run.n_episodes < 1) throw ConfigError("field 'n_episodes' must be positive");
  if (cfg.run.episode_cap < 1) throw ConfigError("field 'episode_cap' must be positive");
  if (!(cfg.sr_gamma >= 0.0 && cfg.sr_gamma < 1.0)) throw ConfigError("field 'sr_gamma' must lie in [0, 1)");
  if (!(cfg.confidence > 0.0 && cfg.confidence < 1.0)) throw ConfigError("field 'confidence' must lie in (0, 1)");
  if (!(cfg.option_learning.gamma >= 0.0 && cfg.option_learning.gamma < 1.0))
    throw ConfigError("field 'option_learning.gamma' must lie in [0, 1)");
  if (!(cfg.option_learning.alpha > 0.0 && cfg.option_learning.alpha <= 1.0))
    throw ConfigError("field 'option_learning.alpha' must lie in (0, 1]");
  if (cfg.option_learning.n_episodes < 1 || cfg.option_learning.episode_len < 1)
    throw ConfigError("fields 'option_learning.n_episodes' and 'option_learning.episode_len' must be positive");
  try {
    cfg.agent.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("section 'agent': ") + e.what());
  }
  try {
    cfg.vace.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("section 'vace': ") + e.what());
  }
  const GridLayout layout = config_layout(cfg);
  std::vector<std::string> ids;
  for (const StartGoal& sg : cfg.start_goals) {
    if (sg.id.empty()) throw ConfigError("a start_goals entry has an empty id");
    if (std::find(ids.begin(), ids.end(), sg.id) != ids.end())
      throw ConfigError("duplicate start_goals id '" + sg.id + "'");
    ids.push_back(sg.id);
    if (!layout.try_state_of(sg.start)) throw ConfigError("start_goals '" + sg.id + "': start is not a floor cell");
    if (!layout.try_state_of(sg.goal)) throw ConfigError("start_goals '" + sg.id + "': goal is not a floor cell");
    if (sg.start == sg.goal) throw ConfigError("start_goals '" + sg.id + "': start equals goal");
  }
}

/// Parses a JSON config. Omitted fields take their defaults; unknown fields
/// are errors.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::read_field;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  detail::reject_unknown(j, "", {"env", "layout_file", "start_goals", "algorithms", "n_eigenoptions", "eigen_signs",
                                 "sr_gamma", "option_seed", "seeds", "n_episodes", "episode_cap",
                                 "snapshot_episodes", "agent", "option_learning", "vace", "confidence"});
  ExperimentConfig cfg;
  if (!j.contains("env")) throw ConfigError("field 'env' is required");
  read_field(j, "", "env", cfg.env);
  read_field(j, "", "layout_file", cfg.layout_file);

  if (j.contains("start_goals")) {
    const auto& list = j.at("start_goals");
    if (!list.is_array()) throw ConfigError("field 'start_goals' must be a list");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = "start_goals[" + std::to_string(i) + "].";
      detail::reject_unknown(list[i], path, {"id", "start", "goal"});
      StartGoal sg;
      read_field(list[i], path, "id", sg.id);
      if (!list[i].contains("start") || !list[i].contains("goal"))
        throw ConfigError("field '" + path + "start/goal' is required");
      sg.start = detail::parse_cell(list[i].at("start"), path + "start");
      sg.goal = detail::parse_cell(list[i].at("goal"), path + "goal");
      cfg.start_goals.push_back(sg);
    }
  } else if (cfg.layout_file.empty()) {
    cfg.start_goals = default_start_goals(cfg.env);
    if (cfg.start_goals.empty()) throw ConfigError("no default start_goals for env '" + cfg.env + "'");
  } else {
    // A text map carries its own S and G.
    const GridLayout layout = config_layout(cfg);
    std::ifstream in(cfg.layout_file);
    std::stringstream text;
    text << in.rdbuf();
    const ParsedLayout parsed = layout_from_text(cfg.env, text.str());
    if (!parsed.start || !parsed.goal) throw ConfigError("layout_file needs S and G or an explicit start_goals list");
    cfg.start_goals.push_back({"map", layout.cell_of(*parsed.start), layout.cell_of(*parsed.goal)});
  }

  if (!j.contains("algorithms")) throw ConfigError("field 'algorithms' is required");
  {
    const auto& algs = j.at("algorithms");
    std::vector<std::string> names;
    if (algs.is_string()) names.push_back(algs.get<std::string>());
    else read_field(j, "", "algorithms", names);
    for (const auto& name : names) {
      const auto a = parse_algorithm(name);
      if (!a) throw ConfigError("field 'algorithms': unknown algorithm '" + name + "'");
      cfg.algorithms.push_back(*a);
    }
  }

  cfg.n_eigenoptions = default_eigenoption_count(cfg.env);
  read_field(j, "", "n_eigenoptions", cfg.n_eigenoptions);
  if (j.contains("eigen_signs")) {
    std::string s;
    read_field(j, "", "eigen_signs", s);
    if (s == "both") cfg.eigen_signs = EigenSigns::Both;
    else if (s == "normalized") cfg.eigen_signs = EigenSigns::Normalized;
    else throw ConfigError("field 'eigen_signs' must be \"both\" or \"normalized\"");
  }
  read_field(j, "", "sr_gamma", cfg.sr_gamma);
  read_field(j, "", "option_seed", cfg.option_seed);
  cfg.seeds = j.contains("seeds") ? detail::parse_seeds(j.at("seeds")) : std::vector<std::uint64_t>{};
  if (!j.contains("seeds"))
    for (std::uint64_t s = 0; s < 100; ++s) cfg.seeds.push_back(s);
  read_field(j, "", "n_episodes", cfg.run.n_episodes);
  read_field(j, "", "episode_cap", cfg.run.episode_cap);
  read_field(j, "", "snapshot_episodes", cfg.run.snapshot_episodes);
  read_field(j, "", "confidence", cfg.confidence);

  if (j.contains("agent")) {
    const auto& a = detail::object_at(j, "agent", "");
    detail::reject_unknown(a, "agent.", {"epsilon", "gamma", "alpha", "gamma_o", "alpha_o"});
    read_field(a, "agent.", "epsilon", cfg.agent.epsilon);
    read_field(a, "agent.", "gamma", cfg.agent.gamma);
    read_field(a, "agent.", "alpha", cfg.agent.alpha);
    read_field(a, "agent.", "gamma_o", cfg.agent.gamma_o);
    read_field(a, "agent.", "alpha_o", cfg.agent.alpha_o);
  }
  if (j.contains("option_learning")) {
    const auto& o = detail::object_at(j, "option_learning", "");
    detail::reject_unknown(o, "option_learning.", {"gamma", "alpha", "n_episodes", "episode_len"});
    read_field(o, "option_learning.", "gamma", cfg.option_learning.gamma);
    read_field(o, "option_learning.", "alpha", cfg.option_learning.alpha);
    read_field(o, "option_learning.", "n_episodes", cfg.option_learning.n_episodes);
    read_field(o, "option_learning.", "episode_len", cfg.option_learning.episode_len);
  }
  if (j.contains("vace")) {
    const auto& v = detail::object_at(j, "vace", "");
    detail::reject_unknown(v, "vace.", {"n_steps", "n_sweeps", "n_iter", "sr_eta", "sr_gamma"});
    read_field(v, "vace.", "n_steps", cfg.vace.n_steps);
    read_field(v, "vace.", "n_sweeps", cfg.vace.n_sweeps);
    read_field(v, "vace.", "n_iter", cfg.vace.n_iter);
    read_field(v, "vace.", "sr_eta", cfg.vace.sr_eta);
    read_field(v, "vace.", "sr_gamma", cfg.vace.sr_gamma);
  }
  validate(cfg);
  return cfg;
}

inline ExperimentConfig parse_config(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

/// Fully resolved JSON form; config_from_json(to_json(c)) == c.
inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["env"] = cfg.env;
  if (!cfg.layout_file.empty()) j["layout_file"] = cfg.layout_file;
  j["start_goals"] = nlohmann::json::array();
  for (const StartGoal& sg : cfg.start_goals)
    j["start_goals"].push_back({{"id", sg.id}, {"start", {sg.start.row, sg.start.col}}, {"goal", {sg.goal.row, sg.goal.col}}});
  j["algorithms"] = nlohmann::json::array();
  for (Algorithm a : cfg.algorithms) j["algorithms"].push_back(std::string(algorithm_name(a)));
  j["n_eigenoptions"] = cfg.n_eigenoptions;
  j["eigen_signs"] = cfg.eigen_signs == EigenSigns::Both ? "both" : "normalized";
  j["sr_gamma"] = cfg.sr_gamma;
  j["option_seed"] = cfg.option_seed;
  bool contiguous = true;
  for (std::size_t i = 1; i < cfg.seeds.size(); ++i) contiguous = contiguous && cfg.seeds[i] == cfg.seeds[0] + i;
  if (contiguous && !cfg.seeds.empty()) j["seeds"] = {{"first", cfg.seeds.front()}, {"count", cfg.seeds.size()}};
  else j["seeds"] = cfg.seeds;
  j["n_episodes"] = cfg.run.n_episodes;
  j["episode_cap"] = cfg.run.episode_cap;
  j["snapshot_episodes"] = cfg.run.snapshot_episodes;
  j["confidence"] = cfg.confidence;
  j["agent"] = {{"epsilon", cfg.agent.epsilon},
                {"gamma", cfg.agent.gamma},
                {"alpha", cfg.agent.alpha},
                {"gamma_o", cfg.agent.gamma_o},
                {"alpha_o", cfg.agent.alpha_o}};
  j["option_learning"] = {{"gamma", cfg.option_learning.gamma},
                          {"alpha", cfg.option_learning.alpha},
                          {"n_episodes", cfg.option_learning.n_episodes},
                          {"episode_len", cfg.option_learning.episode_len}};
  j["vace"] = {{"n_steps", cfg.vace.n_steps},
               {"n_sweeps", cfg.vace.n_sweeps},
               {"n_iter", cfg.vace.n_iter},
               {"sr_eta", cfg.vace.sr_eta},
               {"sr_gamma", cfg.vace.sr_gamma}};
  return j;
}

}  // namespace eigenopt
