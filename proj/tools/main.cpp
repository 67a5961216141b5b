// Command-line front end: run / compare / ablate / theory / selftest.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "adloco/config.hpp"
#include "adloco/experiment.hpp"
#include "adloco/selftest.hpp"

namespace {

struct CommonOpts {
  std::string config;
  std::string out;
  std::string seeds;
  std::string variant;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  // One option, two spellings: `adloco run exp.cfg` and `adloco run --config exp.cfg`.
  cmd->add_option("config,--config", o.config, "Path to the experiment config file");
  cmd->add_option("--out", o.out, "Output directory (overrides config and ADLOCO_OUT)");
  cmd->add_option("--seeds", o.seeds, "Comma-separated seed list (overrides config)");
}

// Output directory precedence: --out flag, then ADLOCO_OUT, then the config.
adloco::ExperimentSpec load_spec(const CommonOpts& o) {
  if (o.config.empty())
    throw adloco::ConfigError("no config file given (positional or --config)");
  adloco::ExperimentSpec spec = adloco::load_config(o.config);
  if (const char* env = std::getenv("ADLOCO_OUT"); env != nullptr && *env != '\0')
    spec.out_dir = env;
  if (!o.out.empty()) spec.out_dir = o.out;
  if (!o.seeds.empty()) spec.seeds = adloco::detail::parse_seed_list(o.seeds);
  return spec;
}

int run_selftest() {
  const auto results = adloco::selftest::run_all();
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name;
    if (!r.detail.empty()) std::cout << ": " << r.detail;
    std::cout << "\n";
    all_pass = all_pass && r.pass;
  }
  std::cout << (all_pass ? "selftest: all checks passed\n" : "selftest: FAILURES\n");
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale simulator for adaptive-batch inner/outer distributed training"};
  app.require_subcommand(1);

  CommonOpts run_opts, compare_opts, ablate_opts, theory_opts;

  CLI::App* cmd_run = app.add_subcommand("run", "Run the configured variants over all seeds");
  add_common(cmd_run, run_opts);
  cmd_run->add_option("--variant", run_opts.variant, "Run only this variant");

  CLI::App* cmd_compare = app.add_subcommand(
      "compare", "Adaptive loop vs fixed-batch, LocalSGD and SGD baselines on shared seeds");
  add_common(cmd_compare, compare_opts);

  CLI::App* cmd_ablate =
      app.add_subcommand("ablate", "Toggle adaptive batching, merging, and switch-mode");
  add_common(cmd_ablate, ablate_opts);

  CLI::App* cmd_theory =
      app.add_subcommand("theory", "Batch-growth and communication-growth checks");
  add_common(cmd_theory, theory_opts);

  CLI::App* cmd_selftest =
      app.add_subcommand("selftest", "Run the oracle and invariant suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_selftest->parsed()) return run_selftest();
    if (cmd_run->parsed()) return adloco::do_run(load_spec(run_opts), run_opts.variant, std::cout);
    if (cmd_compare->parsed()) return adloco::do_compare(load_spec(compare_opts), std::cout);
    if (cmd_ablate->parsed()) return adloco::do_ablate(load_spec(ablate_opts), std::cout);
    if (cmd_theory->parsed()) return adloco::do_theory(load_spec(theory_opts), std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
