#include <catch2/catch_amalgamated.hpp>

#include "adloco/config.hpp"
#include "adloco/errors.hpp"
#include "adloco/experiment.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

using namespace adloco;
namespace fs = std::filesystem;

namespace {

ExperimentSpec spec_from(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

// Fresh scratch directory per test, removed on scope exit.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("adloco_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

nlohmann::json summary_of(const TempDir& dir, const std::string& name) {
  return nlohmann::json::parse(slurp(dir.path / (name + "_summary.json")));
}

const char* kTinyRun =
    "name = tiny\n"
    "outer_steps = 3\n"
    "inner_steps = 2\n"
    "num_trainers = 2\n"
    "initial_batch = 2\n"
    "b_max = 8\n"
    "lr_inner = 0.05\n"
    "objective = quadratic\n"
    "dim = 3\n"
    "dataset_size = 64\n"
    "eval_batch = 16\n";

}  // namespace

TEST_CASE("doubles are formatted with full round-trip precision", "[experiment]") {
  REQUIRE(format_double(0.5) == "0.5");
  REQUIRE(format_double(0.1) == "0.10000000000000001");
  REQUIRE(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  REQUIRE(std::stod(format_double(1e300)) == 1e300);
}

TEST_CASE("metrics serialize to the documented CSV schema", "[experiment]") {
  RunMetrics m;
  StepRow a;
  a.step = 0;
  a.trainer_id = 2;
  a.loss = 0.5;
  a.requested_batch = 4;
  a.accum_flag = 1;
  a.alive_trainers = 3;
  a.comm_step = 1.5;
  a.comm_cum = 1.5;
  StepRow b = a;
  b.step = 1;
  b.loss = 0.1;
  b.comm_cum = 3.0;
  m.rows = {a, b};

  REQUIRE(metrics_to_csv(m) ==
          "step,trainer_id,loss,requested_batch,accum_flag,alive_trainers,comm_step,comm_cum\n"
          "0,2,0.5,4,1,3,1.5,1.5\n"
          "1,2,0.10000000000000001,4,1,3,1.5,3\n");
}

TEST_CASE("target accounting uses the best-alive loss curve", "[experiment]") {
  RunMetrics m;
  m.min_loss = {1.0, 0.5, 0.2};
  m.comm_curve = {10.0, 25.0, 45.0};

  REQUIRE(steps_to_target(m, 1.5) == 0);
  REQUIRE(steps_to_target(m, 0.5) == 1);
  REQUIRE(steps_to_target(m, 0.3) == 2);
  REQUIRE(steps_to_target(m, 0.1) == -1);

  // Reaching the target before the first sync costs nothing.
  REQUIRE(comm_to_target(m, 1.5) == 0.0);
  REQUIRE(comm_to_target(m, 0.5) == 10.0);
  REQUIRE(comm_to_target(m, 0.3) == 25.0);
  REQUIRE(comm_to_target(m, 0.1) == -1.0);
}

TEST_CASE("atomic writes land complete and leave no temp file", "[experiment]") {
  TempDir dir("atomic");
  const fs::path target = dir.path / "data.csv";
  write_file_atomic(target.string(), "a,b\n1,2\n");
  REQUIRE(slurp(target) == "a,b\n1,2\n");
  REQUIRE_FALSE(fs::exists(target.string() + ".tmp"));

  // Overwrites replace the previous content wholesale.
  write_file_atomic(target.string(), "x\n");
  REQUIRE(slurp(target) == "x\n");
}

TEST_CASE("run mode writes one CSV per variant and seed plus a summary", "[experiment]") {
  TempDir dir("run");
  ExperimentSpec spec = spec_from(std::string(kTinyRun) +
                                  "seeds = 1, 2\n"
                                  "variant.fixed.adaptive_batching = off\n");
  spec.out_dir = dir.path.string();

  std::ostringstream log;
  REQUIRE(do_run(spec, "", log) == 0);

  for (const char* variant : {"base", "fixed"})
    for (const char* seed : {"1", "2"}) {
      const fs::path csv =
          dir.path / ("tiny_" + std::string(variant) + "_seed" + seed + ".csv");
      REQUIRE(fs::exists(csv));
      REQUIRE(slurp(csv).rfind("step,trainer_id,", 0) == 0);
    }

  const nlohmann::json summary = summary_of(dir, "tiny");
  REQUIRE(summary["mode"] == "run");
  REQUIRE(summary["runs"].size() == 4);
  for (const auto& r : summary["runs"]) {
    REQUIRE(r["final_loss"].is_number());
    REQUIRE(r["total_comm"].is_number());
    // Only 3 outer steps: too few sync points for a growth fit, no target set.
    REQUIRE(r["r2_log"].is_null());
    REQUIRE(r["r2_linear"].is_null());
    REQUIRE(r["target_loss"].is_null());
    REQUIRE(r["steps_to_target"].is_null());
  }
}

TEST_CASE("run mode can select a single variant and rejects unknown ones", "[experiment]") {
  TempDir dir("run_one");
  ExperimentSpec spec = spec_from(std::string(kTinyRun) + "variant.alt.lr_inner = 0.01\n");
  spec.out_dir = dir.path.string();

  std::ostringstream log;
  REQUIRE(do_run(spec, "alt", log) == 0);
  REQUIRE(fs::exists(dir.path / "tiny_alt_seed1.csv"));
  REQUIRE_FALSE(fs::exists(dir.path / "tiny_base_seed1.csv"));
  REQUIRE(summary_of(dir, "tiny")["runs"].size() == 1);

  REQUIRE_THROWS_AS(do_run(spec, "nope", log), ConfigError);
}

TEST_CASE("an explicit target fills in the to-target fields", "[experiment]") {
  TempDir dir("target");
  // Any quadratic sits below 1e9 from step 0, so the target is hit immediately.
  ExperimentSpec spec = spec_from(std::string(kTinyRun) + "target_loss = 1000000000\n");
  spec.out_dir = dir.path.string();

  std::ostringstream log;
  REQUIRE(do_run(spec, "base", log) == 0);
  const nlohmann::json r = summary_of(dir, "tiny")["runs"][0];
  REQUIRE(r["target_loss"] == 1000000000.0);
  REQUIRE(r["steps_to_target"] == 0);
  REQUIRE(r["comm_to_target"] == 0.0);
}

TEST_CASE("compare mode runs all four algorithms on shared seeds", "[experiment]") {
  TempDir dir("compare");
  ExperimentSpec spec = spec_from(std::string(kTinyRun) + "seeds = 7\n");
  spec.name = "cmp";
  spec.out_dir = dir.path.string();

  std::ostringstream log;
  REQUIRE(do_compare(spec, log) == 0);

  const nlohmann::json summary = summary_of(dir, "cmp");
  REQUIRE(summary["mode"] == "compare");
  REQUIRE(summary["runs"].size() == 4);
  std::vector<std::string> variants;
  for (const auto& r : summary["runs"]) variants.push_back(r["variant"].get<std::string>());
  REQUIRE(variants == std::vector<std::string>{"sgd", "localsgd", "diloco", "adloco"});

  const int won = summary["adloco_beats_diloco_comm_seeds"].get<int>();
  REQUIRE(summary["seeds_total"] == 1);
  REQUIRE(won >= 0);
  REQUIRE(won <= 1);

  // Self-calibration: the SGD leg reaches its own final loss by definition.
  for (const auto& r : summary["runs"])
    if (r["variant"] == "sgd") {
      REQUIRE(r["target_loss"].get<double>() == r["final_loss"].get<double>());
      REQUIRE(r["steps_to_target"].is_number());
    }
}

TEST_CASE("ablate mode reports per-variant means and the no-better flag", "[experiment]") {
  TempDir dir("ablate");
  ExperimentSpec spec = spec_from(std::string(kTinyRun) + "seeds = 1, 2\nmerge_w = 2\n");
  spec.name = "abl";
  spec.out_dir = dir.path.string();

  std::ostringstream log;
  REQUIRE(do_ablate(spec, log) == 0);

  const nlohmann::json summary = summary_of(dir, "abl");
  REQUIRE(summary["mode"] == "ablate");
  REQUIRE(summary["runs"].size() == 4 * 2);
  for (const char* v : {"full", "no_adaptive", "no_merge", "no_switch"})
    REQUIRE(summary["mean_final_loss"][v].is_number());
  REQUIRE(summary["every_ablation_no_better"].is_boolean());

  // The mean is the arithmetic mean of that variant's per-seed final losses.
  double full_sum = 0.0;
  int full_n = 0;
  for (const auto& r : summary["runs"])
    if (r["variant"] == "full") {
      full_sum += r["final_loss"].get<double>();
      ++full_n;
    }
  REQUIRE(full_n == 2);
  REQUIRE(summary["mean_final_loss"]["full"].get<double>() ==
          Catch::Approx(full_sum / 2).epsilon(1e-15));
}

TEST_CASE("theory mode reports growth diagnostics and the analytic oracle", "[experiment]") {
  TempDir dir("theory");
  ExperimentSpec spec = spec_from(
      "name = thr\n"
      "outer_steps = 12\n"
      "inner_steps = 2\n"
      "num_trainers = 2\n"
      "initial_batch = 1\n"
      "b_max = 8\n"
      "lr_inner = 0.05\n"
      "objective = quadratic\n"
      "dim = 4\n"
      "dataset_size = 64\n"
      "eval_batch = 16\n"
      "seeds = 1, 2\n");
  spec.out_dir = dir.path.string();

  std::ostringstream log;
  REQUIRE(do_theory(spec, log) == 0);

  const nlohmann::json summary = summary_of(dir, "thr");
  REQUIRE(summary["mode"] == "theory");
  const nlohmann::json& growth = summary["batch_growth"];
  REQUIRE(growth["monotone_fraction"].get<double>() >= 0.0);
  REQUIRE(growth["monotone_fraction"].get<double>() <= 1.0);
  REQUIRE(growth["avg_requested_first"].get<double>() == 1.0);
  REQUIRE(growth["growth_ratio"].get<double>() ==
          Catch::Approx(growth["avg_requested_final"].get<double>() /
                        growth["avg_requested_first"].get<double>()));
  REQUIRE(summary["comm_fits"].size() == 2);
  const int preferred = summary["comm_log_preferred_seeds"].get<int>();
  REQUIRE(preferred >= 0);
  REQUIRE(preferred <= 2);
  REQUIRE(summary["harmonic_oracle_r2_log"].get<double>() > 0.999);
}
