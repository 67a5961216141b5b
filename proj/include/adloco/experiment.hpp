// Experiment drivers behind the CLI: single runs, baseline comparisons,
// component ablations, and the scaling-law checks, plus CSV/JSON export.
//
// Every run writes one CSV (schema below); every invocation writes one JSON
// summary. Files are written to a temporary name and renamed into place, so
// readers never observe partial output.
//
// CSV schema (one row per outer step per alive trainer):
//   step, trainer_id, loss, requested_batch, accum_flag, alive_trainers,
//   comm_step, comm_cum
// comm_step/comm_cum repeat the step-level value on each of the step's rows.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "adloco/config.hpp"
#include "adloco/engine.hpp"
#include "adloco/errors.hpp"

namespace adloco {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string metrics_to_csv(const RunMetrics& m) {
  std::string out =
      "step,trainer_id,loss,requested_batch,accum_flag,alive_trainers,comm_step,comm_cum\n";
  for (const StepRow& r : m.rows) {
    out += std::to_string(r.step);
    out += ',';
    out += std::to_string(r.trainer_id);
    out += ',';
    out += format_double(r.loss);
    out += ',';
    out += std::to_string(r.requested_batch);
    out += ',';
    out += std::to_string(r.accum_flag);
    out += ',';
    out += std::to_string(r.alive_trainers);
    out += ',';
    out += format_double(r.comm_step);
    out += ',';
    out += format_double(r.comm_cum);
    out += '\n';
  }
  return out;
}

// Write-then-rename so concurrent readers never see a partial file.
inline void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot open '" + tmp + "' for writing");
    os << content;
    if (!os) throw ConfigError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ConfigError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

// First outer step whose best alive-trainer loss reaches the target; -1 never.
inline long steps_to_target(const RunMetrics& m, double target) {
  for (std::size_t t = 0; t < m.min_loss.size(); ++t)
    if (m.min_loss[t] <= target) return static_cast<long>(t);
  return -1;
}

// Cumulative communication spent up to the step that reached the target
// (steps before the first sync cost nothing); -1 when never reached.
inline double comm_to_target(const RunMetrics& m, double target) {
  const long t = steps_to_target(m, target);
  if (t < 0) return -1.0;
  if (t == 0) return 0.0;
  return m.comm_curve[static_cast<std::size_t>(t - 1)];
}

struct RunOutcome {
  std::string variant;
  std::uint64_t seed = 0;
  std::string csv_path;
  RunConfig cfg;
  RunMetrics metrics;
};

namespace detail {

inline std::string run_basename(const ExperimentSpec& spec, const std::string& variant,
                                std::uint64_t seed) {
  return spec.name + "_" + variant + "_seed" + std::to_string(seed) + ".csv";
}

inline std::vector<RunOutcome> run_jobs(
    const ExperimentSpec& spec, const std::vector<std::pair<std::string, RunConfig>>& jobs,
    std::ostream& log) {
  std::filesystem::create_directories(spec.out_dir);
  std::vector<RunOutcome> outcomes;
  for (const auto& [variant, cfg_base] : jobs) {
    for (const std::uint64_t seed : spec.seeds) {
      RunOutcome oc;
      oc.variant = variant;
      oc.seed = seed;
      oc.cfg = cfg_base;
      oc.cfg.seed = seed;
      try {
        oc.metrics = run(oc.cfg);
      } catch (const std::exception& e) {
        throw ConfigError("run '" + variant + "' seed " + std::to_string(seed) +
                          " failed: " + e.what());
      }
      oc.csv_path =
          (std::filesystem::path(spec.out_dir) / run_basename(spec, variant, seed)).string();
      write_file_atomic(oc.csv_path, metrics_to_csv(oc.metrics));
      log << "  " << variant << " seed " << seed << ": final loss "
          << format_double(oc.metrics.final_loss) << ", C = "
          << format_double(oc.metrics.total_comm) << " -> " << oc.csv_path << "\n";
      outcomes.push_back(std::move(oc));
    }
  }
  return outcomes;
}

inline nlohmann::json outcome_json(const RunOutcome& oc, double target) {
  nlohmann::json j;
  j["variant"] = oc.variant;
  j["seed"] = oc.seed;
  j["csv"] = oc.csv_path;
  j["algorithm"] = to_string(oc.cfg.algorithm);
  j["final_loss"] = oc.metrics.final_loss;
  j["total_comm"] = oc.metrics.total_comm;
  j["merge_count"] = oc.metrics.merges.size();
  j["final_mean_requested"] = oc.metrics.mean_requested.back();
  if (oc.metrics.comm_curve.size() >= 10) {
    const LogFit fit = fit_log_growth(oc.metrics.comm_curve);
    j["r2_log"] = fit.r2_log;
    j["r2_linear"] = fit.r2_lin;
  } else {
    j["r2_log"] = nullptr;
    j["r2_linear"] = nullptr;
  }
  if (target > 0.0) {
    const long st = steps_to_target(oc.metrics, target);
    j["target_loss"] = target;
    if (st >= 0) {
      j["steps_to_target"] = st;
      j["comm_to_target"] = comm_to_target(oc.metrics, target);
    } else {
      j["steps_to_target"] = nullptr;
      j["comm_to_target"] = nullptr;
    }
  } else {
    j["target_loss"] = nullptr;
    j["steps_to_target"] = nullptr;
    j["comm_to_target"] = nullptr;
  }
  return j;
}

inline void write_summary(const ExperimentSpec& spec, const nlohmann::json& summary,
                          std::ostream& log) {
  const std::string path =
      (std::filesystem::path(spec.out_dir) / (spec.name + "_summary.json")).string();
  write_file_atomic(path, summary.dump(2) + "\n");
  log << "  summary -> " << path << "\n";
}

}  // namespace detail

// `run`: the base config (variant name "base") plus any declared variants,
// each over every seed. Targets come from target_loss when set.
inline int do_run(const ExperimentSpec& spec, const std::string& only_variant,
                  std::ostream& log) {
  std::vector<std::pair<std::string, RunConfig>> jobs;
  if (only_variant.empty() || only_variant == "base")
    jobs.emplace_back("base", materialize(spec, ""));
  for (const auto& [vname, _] : spec.variants)
    if (only_variant.empty() || only_variant == vname)
      jobs.emplace_back(vname, materialize(spec, vname));
  if (jobs.empty()) throw ConfigError("unknown variant '" + only_variant + "'");

  log << "run: " << spec.name << " (" << jobs.size() << " variant(s) x " << spec.seeds.size()
      << " seed(s))\n";
  const auto outcomes = detail::run_jobs(spec, jobs, log);

  nlohmann::json summary;
  summary["experiment"] = spec.name;
  summary["mode"] = "run";
  summary["runs"] = nlohmann::json::array();
  for (const auto& oc : outcomes)
    summary["runs"].push_back(detail::outcome_json(oc, spec.target_loss));
  detail::write_summary(spec, summary, log);
  return 0;
}

// `compare`: the adaptive algorithm against the fixed-batch baseline, LocalSGD
// and single-stream SGD on shared seeds. LocalSGD gets num_trainers x
// workers_per_trainer workers so every variant occupies the same hardware.
// The per-seed target loss is self-calibrating: the SGD baseline's final loss.
inline int do_compare(const ExperimentSpec& spec, std::ostream& log) {
  RunConfig adloco_cfg = materialize(spec, "");
  adloco_cfg.algorithm = Algorithm::kAdLoCo;
  RunConfig diloco_cfg = adloco_cfg;
  diloco_cfg.algorithm = Algorithm::kDiLoCo;
  RunConfig localsgd_cfg = adloco_cfg;
  localsgd_cfg.algorithm = Algorithm::kLocalSgd;
  localsgd_cfg.workers_per_trainer = adloco_cfg.num_trainers * adloco_cfg.workers_per_trainer;
  RunConfig sgd_cfg = adloco_cfg;
  sgd_cfg.algorithm = Algorithm::kSgd;

  const std::vector<std::pair<std::string, RunConfig>> jobs = {
      {"sgd", sgd_cfg}, {"localsgd", localsgd_cfg}, {"diloco", diloco_cfg},
      {"adloco", adloco_cfg}};
  log << "compare: " << spec.name << " over " << spec.seeds.size() << " seed(s)\n";
  const auto outcomes = detail::run_jobs(spec, jobs, log);

  // Per-seed self-calibrated targets from the SGD leg (explicit target wins).
  std::vector<double> target_by_seed(spec.seeds.size(), spec.target_loss);
  if (spec.target_loss <= 0.0)
    for (const auto& oc : outcomes)
      if (oc.variant == "sgd")
        for (std::size_t i = 0; i < spec.seeds.size(); ++i)
          if (spec.seeds[i] == oc.seed) target_by_seed[i] = oc.metrics.final_loss;

  nlohmann::json summary;
  summary["experiment"] = spec.name;
  summary["mode"] = "compare";
  summary["runs"] = nlohmann::json::array();
  for (const auto& oc : outcomes) {
    double target = 0.0;
    for (std::size_t i = 0; i < spec.seeds.size(); ++i)
      if (spec.seeds[i] == oc.seed) target = target_by_seed[i];
    summary["runs"].push_back(detail::outcome_json(oc, target));
  }

  // Head-to-head: seeds where the adaptive run reached the target with
  // strictly less communication than the fixed-batch baseline.
  int seeds_won = 0, seeds_counted = 0;
  for (std::size_t i = 0; i < spec.seeds.size(); ++i) {
    const std::uint64_t seed = spec.seeds[i];
    double c_ad = -1.0, c_di = -1.0;
    for (const auto& oc : outcomes) {
      if (oc.seed != seed) continue;
      if (oc.variant == "adloco") c_ad = comm_to_target(oc.metrics, target_by_seed[i]);
      if (oc.variant == "diloco") c_di = comm_to_target(oc.metrics, target_by_seed[i]);
    }
    ++seeds_counted;
    const bool adloco_reached = c_ad >= 0.0;
    const bool diloco_reached = c_di >= 0.0;
    if (adloco_reached && (!diloco_reached || c_ad < c_di)) ++seeds_won;
  }
  summary["adloco_beats_diloco_comm_seeds"] = seeds_won;
  summary["seeds_total"] = seeds_counted;
  log << "  adloco cheaper-to-target than diloco on " << seeds_won << "/" << seeds_counted
      << " seed(s)\n";
  detail::write_summary(spec, summary, log);
  return 0;
}

// `ablate`: full configuration against one-feature-off variants.
inline int do_ablate(const ExperimentSpec& spec, std::ostream& log) {
  RunConfig full = materialize(spec, "");
  full.algorithm = Algorithm::kAdLoCo;
  full.adaptive_batching = true;
  full.trainer_merging = true;
  full.switch_mode = true;
  RunConfig no_adaptive = full;
  no_adaptive.adaptive_batching = false;
  RunConfig no_merge = full;
  no_merge.trainer_merging = false;
  RunConfig no_switch = full;
  no_switch.switch_mode = false;

  const std::vector<std::pair<std::string, RunConfig>> jobs = {
      {"full", full}, {"no_adaptive", no_adaptive}, {"no_merge", no_merge},
      {"no_switch", no_switch}};
  log << "ablate: " << spec.name << " over " << spec.seeds.size() << " seed(s)\n";
  const auto outcomes = detail::run_jobs(spec, jobs, log);

  nlohmann::json summary;
  summary["experiment"] = spec.name;
  summary["mode"] = "ablate";
  summary["runs"] = nlohmann::json::array();
  for (const auto& oc : outcomes)
    summary["runs"].push_back(detail::outcome_json(oc, spec.target_loss));

  nlohmann::json agg;
  double full_mean = 0.0;
  for (const auto& [vname, _] : jobs) {
    double mean = 0.0;
    int n = 0;
    for (const auto& oc : outcomes)
      if (oc.variant == vname) {
        mean += oc.metrics.final_loss;
        ++n;
      }
    mean /= n;
    agg[vname] = mean;
    if (vname == "full") full_mean = mean;
    log << "  " << vname << ": mean final loss " << format_double(mean) << "\n";
  }
  summary["mean_final_loss"] = agg;
  summary["every_ablation_no_better"] = agg["no_adaptive"].get<double>() >= full_mean &&
                                        agg["no_merge"].get<double>() >= full_mean &&
                                        agg["no_switch"].get<double>() >= full_mean;
  detail::write_summary(spec, summary, log);
  return 0;
}

// `theory`: batch-growth and communication-growth checks on the adaptive loop.
inline int do_theory(const ExperimentSpec& spec, std::ostream& log) {
  RunConfig cfg = materialize(spec, "");
  cfg.algorithm = Algorithm::kAdLoCo;
  const std::vector<std::pair<std::string, RunConfig>> jobs = {{"theory", cfg}};
  log << "theory: " << spec.name << " over " << spec.seeds.size() << " seed(s)\n";
  const auto outcomes = detail::run_jobs(spec, jobs, log);

  // Seed-averaged requested-batch trajectory.
  const std::size_t steps = outcomes.front().metrics.mean_requested.size();
  std::vector<double> avg_requested(steps, 0.0);
  for (const auto& oc : outcomes)
    for (std::size_t t = 0; t < steps; ++t) avg_requested[t] += oc.metrics.mean_requested[t];
  for (double& v : avg_requested) v /= static_cast<double>(outcomes.size());

  int nondecreasing = 0;
  for (std::size_t t = 0; t + 1 < steps; ++t)
    if (avg_requested[t + 1] >= avg_requested[t]) ++nondecreasing;
  const double monotone_fraction =
      steps > 1 ? static_cast<double>(nondecreasing) / static_cast<double>(steps - 1) : 1.0;
  const double growth_ratio = avg_requested.back() / avg_requested.front();

  int log_wins = 0;
  nlohmann::json fits = nlohmann::json::array();
  for (const auto& oc : outcomes) {
    const LogFit fit = fit_log_growth(oc.metrics.comm_curve);
    if (fit.r2_log >= fit.r2_lin) ++log_wins;
    fits.push_back({{"seed", oc.seed}, {"r2_log", fit.r2_log}, {"r2_linear", fit.r2_lin}});
  }

  // Analytic oracle: harmonic numbers grow logarithmically by construction.
  std::vector<double> harmonic(200);
  double h = 0.0;
  for (int n = 1; n <= 200; ++n) {
    h += 1.0 / n;
    harmonic[n - 1] = h;
  }
  const LogFit oracle = fit_log_growth(harmonic);

  nlohmann::json summary;
  summary["experiment"] = spec.name;
  summary["mode"] = "theory";
  summary["runs"] = nlohmann::json::array();
  for (const auto& oc : outcomes)
    summary["runs"].push_back(detail::outcome_json(oc, spec.target_loss));
  summary["batch_growth"] = {{"monotone_fraction", monotone_fraction},
                             {"growth_ratio", growth_ratio},
                             {"avg_requested_first", avg_requested.front()},
                             {"avg_requested_final", avg_requested.back()}};
  summary["comm_fits"] = fits;
  summary["comm_log_preferred_seeds"] = log_wins;
  summary["harmonic_oracle_r2_log"] = oracle.r2_log;
  log << "  batch growth: monotone fraction " << format_double(monotone_fraction)
      << ", growth ratio " << format_double(growth_ratio) << "\n";
  log << "  comm growth: log fit preferred on " << log_wins << "/" << outcomes.size()
      << " seed(s); harmonic oracle r2_log = " << format_double(oracle.r2_log) << "\n";
  detail::write_summary(spec, summary, log);
  return 0;
}

}  // namespace adloco
