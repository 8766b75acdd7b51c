// Experiment runner. Subcommands:
//   run    — one seeded training run; writes metrics/samples/model snapshots
//   sweep  — one run per (objective x seed) cell plus a summary table
//   eval   — recompute metrics from a saved run directory
//   oracle — exact target/flow tables for enumerable configs
//
// Configs come from a named preset (--env) or a file (--config); any key can
// be overridden on the command line with --section.key=value. The output
// root defaults to ./runs and can be overridden with --out or the
// GFLOWNET_OUT environment variable.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gfn/config.hpp"
#include "gfn/run.hpp"
#include "gfn/version.hpp"

namespace {

struct CommonArgs {
  std::string preset;
  std::string config_file;
  std::string objective;
  std::string out_root;
  long long seed = -1;
  std::string partial;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--env", args.preset, "named preset (set-tiny, set-small, ..., bits-tiny)");
  cmd->add_option("--config", args.config_file, "config file path");
  cmd->add_option("--objective", args.objective, "db | tb | subtb | fl-db | fl-subtb");
  cmd->add_option("--seed", args.seed, "training seed (train.seed)");
  cmd->add_option("--partial", args.partial, "train on incomplete trajectories (true/false)");
  cmd->add_option("--out", args.out_root, "output root directory");
  cmd->add_option("--override,--set", args.overrides, "section.key=value overrides")
      ->take_all();
  cmd->allow_extras();  // bare --section.key=value forms land in remaining()
}

std::filesystem::path resolve_out_root(const CommonArgs& args) {
  if (!args.out_root.empty()) return args.out_root;
  if (const char* env = std::getenv("GFLOWNET_OUT")) return env;
  return "runs";
}

gfn::RunConfig build_config(const CommonArgs& args, const std::vector<std::string>& extras) {
  gfn::ParsedConfig parsed;
  std::string name = "custom";
  std::string origin = "<config>";
  if (!args.preset.empty() && !args.config_file.empty())
    throw gfn::ConfigError("give either --env <preset> or --config <file>, not both");
  if (!args.preset.empty()) {
    parsed = gfn::parse_preset(args.preset);
    name = args.preset;
    origin = "preset:" + args.preset;
  } else if (!args.config_file.empty()) {
    parsed = gfn::parse_config_text(gfn::read_file(args.config_file), args.config_file);
    name = std::filesystem::path(args.config_file).stem().string();
    origin = args.config_file;
  } else {
    throw gfn::ConfigError("missing --env <preset> or --config <file>");
  }
  if (!args.objective.empty())
    gfn::apply_override(parsed, "objective.kind=" + args.objective);
  if (args.seed >= 0)
    gfn::apply_override(parsed, "train.seed=" + std::to_string(args.seed));
  if (!args.partial.empty()) gfn::apply_override(parsed, "train.partial=" + args.partial);
  for (const auto& o : args.overrides) gfn::apply_override(parsed, o);
  for (const auto& extra : extras) {
    // accept bare --section.key=value
    std::string e = extra;
    if (e.rfind("--", 0) == 0) e.erase(0, 2);
    gfn::apply_override(parsed, e);
  }
  return gfn::resolve_run_config(parsed, name, origin);
}

void print_final(const gfn::MetricRow& row) {
  std::cout << "final: step=" << row.step << " transitions=" << row.transitions;
  if (row.loss) std::cout << " loss=" << gfn::fmt_g(*row.loss);
  if (row.topk_reward) std::cout << " topk_reward=" << gfn::fmt_g(*row.topk_reward);
  if (row.modes) std::cout << " modes=" << *row.modes;
  if (row.l1) std::cout << " l1=" << gfn::fmt_g(*row.l1);
  if (row.spearman_corr) std::cout << " spearman=" << gfn::fmt_g(*row.spearman_corr);
  std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gflownet: amortized samplers over DAG environments"};
  app.set_version_flag("--version", gfn::kVersion);
  app.require_subcommand(1);

  CommonArgs run_args, sweep_args, oracle_args;
  std::string eval_dir;

  auto* cmd_run = app.add_subcommand("run", "execute one training run");
  add_common(cmd_run, run_args);
  auto* cmd_sweep = app.add_subcommand("sweep", "run an objective x seed sweep");
  add_common(cmd_sweep, sweep_args);
  auto* cmd_eval = app.add_subcommand("eval", "recompute metrics from a saved run");
  cmd_eval->add_option("dir", eval_dir, "run directory")->required();
  auto* cmd_oracle = app.add_subcommand("oracle", "emit exact target/flow tables");
  add_common(cmd_oracle, oracle_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_run->parsed()) {
      const auto cfg = build_config(run_args, cmd_run->remaining());
      const auto outcome = gfn::execute_run(cfg, resolve_out_root(run_args));
      std::cout << "run dir: " << outcome.dir.string() << "\n";
      print_final(outcome.result.rows.back());
      if (outcome.result.aborted) {
        std::cerr << "aborted: " << outcome.result.abort_reason << "\n";
        return 2;
      }
    } else if (cmd_sweep->parsed()) {
      const auto cfg = build_config(sweep_args, cmd_sweep->remaining());
      const auto outcome = gfn::execute_sweep(cfg, resolve_out_root(sweep_args));
      std::cout << "summary: " << outcome.summary_path.string() << "\n";
      bool any_failed = false;
      for (const auto& c : outcome.cells) {
        std::cout << c.objective << " seed=" << c.seed << " status=" << c.status << "\n";
        any_failed = any_failed || c.status != "ok";
      }
      if (any_failed) return 2;
    } else if (cmd_eval->parsed()) {
      const auto summary = gfn::recompute_eval(eval_dir);
      print_final(summary.row);
      if (summary.test_set_spearman)
        std::cout << "test_set_spearman=" << gfn::fmt_g(*summary.test_set_spearman) << "\n";
    } else if (cmd_oracle->parsed()) {
      const auto cfg = build_config(oracle_args, cmd_oracle->remaining());
      const auto path = gfn::write_oracle_tables(cfg, resolve_out_root(oracle_args) /
                                                          (cfg.name + "-oracle"));
      std::cout << "oracle tables: " << path.parent_path().string() << "\n";
    }
  } catch (const gfn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
