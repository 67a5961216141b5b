// Experiment configuration: flat key=value files with per-variant overrides.
//
//   # comment
//   algorithm = adloco
//   eta = 0.8
//   seeds = 1,2,3
//   variant.no_merge.trainer_merging = 0
//
// An empty file yields the shipped defaults. Unknown keys are rejected with
// the offending line number. `recipe = auto` (the default) picks the data
// recipe that matches the objective family.

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "adloco/engine.hpp"
#include "adloco/errors.hpp"

namespace adloco {

struct ExperimentSpec {
  std::string name = "experiment";
  RunConfig base;
  bool base_recipe_explicit = false;
  // Ordered variant list; each entry is (name, key -> raw value overrides).
  std::vector<std::pair<std::string, std::map<std::string, std::string>>> variants;
  std::vector<std::uint64_t> seeds = {1};
  std::string out_dir = "out";
  double target_loss = 0.0;  // 0 = no explicit target
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

inline long parse_long(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
}

inline double parse_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& v) {
  std::vector<std::uint64_t> seeds;
  std::istringstream is(v);
  std::string cell;
  while (std::getline(is, cell, ',')) {
    cell = trim(cell);
    if (cell.empty()) continue;
    try {
      seeds.push_back(static_cast<std::uint64_t>(std::stoull(cell)));
    } catch (const std::exception&) {
      throw ConfigError("seeds: expected a comma-separated integer list, got '" + cell + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("seeds: at least one seed required");
  return seeds;
}

}  // namespace detail

// Apply one run-level key to a RunConfig. Returns false when the key is not a
// run-level key (so the caller can try experiment-level keys).
inline bool apply_run_key(RunConfig& cfg, const std::string& key, const std::string& value,
                          bool* recipe_explicit = nullptr) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_long;
  if (key == "algorithm") cfg.algorithm = parse_algorithm(value);
  else if (key == "outer_steps") cfg.outer_steps = parse_long(value, key);
  else if (key == "inner_steps") cfg.inner_steps = parse_long(value, key);
  else if (key == "workers_per_trainer")
    cfg.workers_per_trainer = static_cast<int>(parse_long(value, key));
  else if (key == "num_trainers") cfg.num_trainers = static_cast<int>(parse_long(value, key));
  else if (key == "initial_batch") cfg.initial_batch = parse_long(value, key);
  else if (key == "b_max") cfg.b_max = parse_long(value, key);
  else if (key == "n_switch") cfg.n_switch = static_cast<int>(parse_long(value, key));
  else if (key == "merge_w") cfg.merge_w = static_cast<int>(parse_long(value, key));
  else if (key == "merge_frequency")
    cfg.merge_frequency = static_cast<int>(parse_long(value, key));
  else if (key == "inner_opt") cfg.inner.kind = parse_inner_opt(value);
  else if (key == "lr_inner") cfg.inner.lr = parse_double(value, key);
  else if (key == "weight_decay") cfg.inner.weight_decay = parse_double(value, key);
  else if (key == "outer_opt") cfg.outer.kind = parse_outer_opt(value);
  else if (key == "lr_outer") cfg.outer.lr = parse_double(value, key);
  else if (key == "outer_momentum") cfg.outer.momentum = parse_double(value, key);
  else if (key == "batch_test") cfg.test.kind = parse_batch_test(value);
  else if (key == "eta") cfg.test.eta = parse_double(value, key);
  else if (key == "theta") cfg.test.theta = parse_double(value, key);
  else if (key == "nu") cfg.test.nu = parse_double(value, key);
  else if (key == "batch_cap") cfg.test.cap = parse_long(value, key);
  else if (key == "adaptive_batching") cfg.adaptive_batching = parse_bool(value, key);
  else if (key == "trainer_merging") cfg.trainer_merging = parse_bool(value, key);
  else if (key == "switch_mode") cfg.switch_mode = parse_bool(value, key);
  else if (key == "parallel") cfg.parallel = parse_bool(value, key);
  else if (key == "objective") {
    if (value == "quadratic") cfg.objective = ObjectiveKind::kQuadratic;
    else if (value == "logistic") cfg.objective = ObjectiveKind::kLogistic;
    else if (value == "mlp") cfg.objective = ObjectiveKind::kMlp;
    else throw ConfigError("unknown objective '" + value + "'");
  } else if (key == "recipe") {
    if (value == "auto") {
      if (recipe_explicit != nullptr) *recipe_explicit = false;
    } else {
      cfg.recipe = parse_recipe(value);
      if (recipe_explicit != nullptr) *recipe_explicit = true;
    }
  } else if (key == "dim") cfg.dim = static_cast<int>(parse_long(value, key));
  else if (key == "mlp_hidden") cfg.mlp_hidden = static_cast<int>(parse_long(value, key));
  else if (key == "dataset_size") cfg.dataset_size = static_cast<int>(parse_long(value, key));
  else if (key == "shard_fraction") cfg.shard_fraction = parse_double(value, key);
  else if (key == "init_scale") cfg.init_scale = parse_double(value, key);
  else if (key == "eval_batch") cfg.eval_batch = static_cast<int>(parse_long(value, key));
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_long(value, key));
  else return false;
  return true;
}

inline DataRecipe default_recipe_for(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kQuadratic: return DataRecipe::kGaussianQuadratic;
    case ObjectiveKind::kLogistic: return DataRecipe::kTwoCluster;
    case ObjectiveKind::kMlp: return DataRecipe::kTeacherMlp;
  }
  return DataRecipe::kGaussianQuadratic;
}

inline ExperimentSpec parse_config(std::istream& is) {
  ExperimentSpec spec;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    std::string key = detail::trim(s.substr(0, eq));
    std::string value = detail::trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "empty key");
    try {
      if (key.rfind("variant.", 0) == 0) {
        const std::string rest = key.substr(8);
        const auto dot = rest.find('.');
        if (dot == std::string::npos || dot == 0 || dot + 1 >= rest.size())
          throw ConfigError("variant keys look like 'variant.<name>.<key>'");
        const std::string vname = rest.substr(0, dot);
        const std::string vkey = rest.substr(dot + 1);
        {
          // Validate the key/value pair against a scratch config now, so the
          // error carries the line number.
          RunConfig scratch = spec.base;
          if (!apply_run_key(scratch, vkey, value))
            throw ConfigError("unknown key '" + vkey + "'");
        }
        auto* entry = [&]() -> std::map<std::string, std::string>* {
          for (auto& v : spec.variants)
            if (v.first == vname) return &v.second;
          spec.variants.emplace_back(vname, std::map<std::string, std::string>{});
          return &spec.variants.back().second;
        }();
        (*entry)[vkey] = value;
      } else if (key == "name") {
        if (value.empty()) throw ConfigError("name must not be empty");
        spec.name = value;
      } else if (key == "out_dir") {
        spec.out_dir = value;
      } else if (key == "seeds") {
        spec.seeds = detail::parse_seed_list(value);
      } else if (key == "target_loss") {
        spec.target_loss = detail::parse_double(value, key);
      } else if (!apply_run_key(spec.base, key, value, &spec.base_recipe_explicit)) {
        throw ConfigError("unknown key '" + key + "'");
      }
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  if (!spec.base_recipe_explicit) spec.base.recipe = default_recipe_for(spec.base.objective);
  validate(spec.base);
  return spec;
}

inline ExperimentSpec load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(is);
}

// Concrete RunConfig for one variant: base, then the variant's overrides, with
// the automatic recipe re-resolved unless something pinned it.
inline RunConfig materialize(const ExperimentSpec& spec, const std::string& variant_name) {
  RunConfig cfg = spec.base;
  bool recipe_explicit = spec.base_recipe_explicit;
  if (!variant_name.empty()) {
    const std::map<std::string, std::string>* overrides = nullptr;
    for (const auto& v : spec.variants)
      if (v.first == variant_name) overrides = &v.second;
    if (overrides == nullptr) throw ConfigError("unknown variant '" + variant_name + "'");
    for (const auto& [k, v] : *overrides) apply_run_key(cfg, k, v, &recipe_explicit);
  }
  if (!recipe_explicit) cfg.recipe = default_recipe_for(cfg.objective);
  validate(cfg);
  return cfg;
}

// Serialize a spec with every run-level key written out; parsing the result
// reproduces the spec exactly.
inline std::string dump_config(const ExperimentSpec& spec) {
  std::ostringstream os;
  char num[64];
  const auto put_d = [&](const char* key, double v) {
    std::snprintf(num, sizeof num, "%.17g", v);
    os << key << " = " << num << '\n';
  };
  os << "name = " << spec.name << '\n';
  os << "out_dir = " << spec.out_dir << '\n';
  os << "seeds = ";
  for (std::size_t i = 0; i < spec.seeds.size(); ++i) os << (i ? "," : "") << spec.seeds[i];
  os << '\n';
  put_d("target_loss", spec.target_loss);
  const RunConfig& c = spec.base;
  os << "algorithm = " << to_string(c.algorithm) << '\n';
  os << "outer_steps = " << c.outer_steps << '\n';
  os << "inner_steps = " << c.inner_steps << '\n';
  os << "workers_per_trainer = " << c.workers_per_trainer << '\n';
  os << "num_trainers = " << c.num_trainers << '\n';
  os << "initial_batch = " << c.initial_batch << '\n';
  os << "b_max = " << c.b_max << '\n';
  os << "n_switch = " << c.n_switch << '\n';
  os << "merge_w = " << c.merge_w << '\n';
  os << "merge_frequency = " << c.merge_frequency << '\n';
  os << "inner_opt = " << (c.inner.kind == InnerOptKind::kSgd ? "sgd" : "adamw") << '\n';
  put_d("lr_inner", c.inner.lr);
  put_d("weight_decay", c.inner.weight_decay);
  os << "outer_opt = " << (c.outer.kind == OuterOptKind::kSgd ? "sgd" : "nesterov") << '\n';
  put_d("lr_outer", c.outer.lr);
  put_d("outer_momentum", c.outer.momentum);
  os << "batch_test = " << to_string(c.test.kind) << '\n';
  put_d("eta", c.test.eta);
  put_d("theta", c.test.theta);
  put_d("nu", c.test.nu);
  os << "batch_cap = " << c.test.cap << '\n';
  os << "adaptive_batching = " << (c.adaptive_batching ? 1 : 0) << '\n';
  os << "trainer_merging = " << (c.trainer_merging ? 1 : 0) << '\n';
  os << "switch_mode = " << (c.switch_mode ? 1 : 0) << '\n';
  os << "parallel = " << (c.parallel ? 1 : 0) << '\n';
  os << "objective = " << to_string(c.objective) << '\n';
  os << "recipe = " << to_string(c.recipe) << '\n';
  os << "dim = " << c.dim << '\n';
  os << "mlp_hidden = " << c.mlp_hidden << '\n';
  os << "dataset_size = " << c.dataset_size << '\n';
  put_d("shard_fraction", c.shard_fraction);
  put_d("init_scale", c.init_scale);
  os << "eval_batch = " << c.eval_batch << '\n';
  os << "seed = " << c.seed << '\n';
  for (const auto& [vname, overrides] : spec.variants)
    for (const auto& [k, v] : overrides)
      os << "variant." << vname << "." << k << " = " << v << '\n';
  return os.str();
}

}  // namespace adloco
