#pragma once

// End-to-end experiment execution shared by the CLI and the test suites:
// resolve a config, run training, and persist metrics.csv, samples.csv,
// timing.csv, model.json and the resolved-config snapshot under a directory
// named by config hash and seed. Sweeps run one cell per (objective, seed)
// and aggregate final metrics.

#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gfn/config.hpp"
#include "gfn/eval.hpp"
#include "gfn/io_util.hpp"
#include "gfn/metrics.hpp"
#include "gfn/model.hpp"
#include "gfn/serialize.hpp"
#include "gfn/trainer.hpp"
#include "gfn/version.hpp"

namespace gfn {

inline std::string config_snapshot_text(const RunConfig& cfg) {
  return std::string("# gflownet ") + kVersion + "\n" + canonical_config_text(cfg);
}

/// Builds the configured environment and invokes f with it.
template <class F>
auto with_env(const RunConfig& cfg, F&& f) {
  if (cfg.env_kind == "set") {
    SetEnv env(cfg.set_env);
    return f(env);
  }
  BitSeqEnvConfig bc = cfg.bit_env;
  if (!cfg.modes_file.empty()) bc.modes = BitSeqEnv::load_modes_file(cfg.modes_file);
  BitSeqEnv env(bc);
  return f(env);
}

/// Mode criterion for a run. Bit env: match radius against the mode set.
/// Set env: explicit reward threshold, or threshold derived from an energy
/// margin above the best reachable subset energy, or the percentile rule on
/// enumerable instances; absent otherwise (modes column stays empty).
inline std::optional<ModeCriterion> resolve_mode_criterion(const RunConfig& cfg,
                                                           const BitSeqEnv&) {
  ModeCriterion crit;
  crit.match_radius = cfg.mode_radius;
  return crit;
}

inline std::optional<ModeCriterion> resolve_mode_criterion(const RunConfig& cfg,
                                                           const SetEnv& env) {
  ModeCriterion crit;
  if (cfg.mode_threshold) {
    crit.reward_threshold = *cfg.mode_threshold;
    return crit;
  }
  if (cfg.mode_energy_margin) {
    std::vector<double> e = env.element_energies();
    std::sort(e.begin(), e.end());
    double best = 0.0;
    for (int i = 0; i < env.config().target_size; ++i) best += e[i];
    crit.reward_threshold =
        std::exp(-(env.config().beta * best + *cfg.mode_energy_margin));
    return crit;
  }
  try {
    const auto target = target_distribution(env, cfg.enum_cap);
    std::vector<double> rewards;
    rewards.reserve(target.keys.size());
    for (const auto& key : target.keys)
      rewards.push_back(std::exp(env.log_reward(env.parse_key(key))));
    std::sort(rewards.begin(), rewards.end());
    const auto idx = static_cast<std::size_t>(
        cfg.mode_percentile / 100.0 * static_cast<double>(rewards.size() - 1));
    crit.reward_threshold = rewards[idx];
    return crit;
  } catch (const std::runtime_error&) {
    return std::nullopt;  // not enumerable and no explicit threshold
  }
}

struct RunOutcome {
  std::filesystem::path dir;
  TrainResult result;
  std::string resolved_config;
};

inline std::filesystem::path run_directory(const std::filesystem::path& out_root,
                                           const RunConfig& cfg,
                                           const std::string& snapshot) {
  return out_root / (cfg.name + "-" + hex16(fnv1a64(snapshot)) + "-s" +
                     std::to_string(cfg.seed));
}

template <class Env>
MlpGfn build_model(const Env& env, const RunConfig& cfg) {
  GfnModelConfig mc;
  mc.hidden = cfg.hidden;
  mc.hidden_layers = cfg.hidden_layers;
  mc.flow_mode = cfg.flow_mode();
  mc.backward_mode = cfg.backward;
  return MlpGfn(env, mc, cfg.seed);
}

inline TrainerConfig trainer_config_of(const RunConfig& cfg) {
  TrainerConfig tc;
  tc.objective = cfg.objective;
  tc.exploration = cfg.exploration;
  tc.batch_size = cfg.batch_size;
  tc.budget = cfg.budget;
  tc.partial = cfg.partial;
  tc.seed = cfg.seed;
  tc.threads = cfg.threads;
  tc.metric_every = cfg.metric_every;
  tc.policy_lr = cfg.resolved_policy_lr();
  tc.logz_lr = cfg.logz_lr;
  return tc;
}

template <class Env>
SnapshotConfig snapshot_config_of(const RunConfig& cfg, const Env& env) {
  SnapshotConfig sc;
  sc.topk = cfg.topk;
  sc.enum_cap = cfg.enum_cap;
  sc.mode = resolve_mode_criterion(cfg, env);
  return sc;
}

/// Training without any file I/O; shared by execute_run and the test suites.
template <class Env>
TrainResult train_from_config(const Env& env, const RunConfig& cfg) {
  MlpGfn model = build_model(env, cfg);
  return run_training(model, env, trainer_config_of(cfg), snapshot_config_of(cfg, env));
}

template <class Env>
RunOutcome execute_run_in(const Env& env, const RunConfig& cfg,
                          const std::filesystem::path& out_root) {
  MlpGfn model = build_model(env, cfg);

  RunOutcome out;
  out.resolved_config = config_snapshot_text(cfg);
  out.dir = run_directory(out_root, cfg, out.resolved_config);
  std::filesystem::create_directories(out.dir);
  write_file(out.dir / "config.resolved", out.resolved_config);

  out.result = run_training(model, env, trainer_config_of(cfg), snapshot_config_of(cfg, env));

  write_file(out.dir / "metrics.csv", metrics_csv(out.result.rows));
  write_file(out.dir / "samples.csv", samples_csv(out.result.samples));
  write_file(out.dir / "timing.csv", timing_csv(out.result.timing));
  save_model_json(out.dir / "model.json", model);
  if (out.result.aborted)
    write_file(out.dir / "ABORTED", out.result.abort_reason + "\n");
  return out;
}

inline RunOutcome execute_run(const RunConfig& cfg, const std::filesystem::path& out_root) {
  return with_env(cfg, [&](const auto& env) { return execute_run_in(env, cfg, out_root); });
}

// ---------------------------------------------------------------------------
// Sweeps: one run per (objective x seed) cell.

struct SweepCell {
  std::string objective;
  std::uint64_t seed = 0;
  std::string status;  // "ok", "aborted", or "error: ..."
  MetricRow final_row;
  std::filesystem::path dir;
};

struct SweepOutcome {
  std::vector<SweepCell> cells;
  std::filesystem::path summary_path;
};

namespace detail {

inline void append_stat_rows(std::ostringstream& o, const std::string& objective,
                             const std::vector<const MetricRow*>& rows) {
  auto emit = [&](const char* tag, auto pick) {
    o << objective << ',' << tag << ",,";
    // mean/std per metric column over cells where the metric is present
    auto stat = [&](auto getter) -> std::string {
      std::vector<double> vals;
      for (const auto* r : rows) {
        const auto v = getter(*r);
        if (v) vals.push_back(static_cast<double>(*v));
      }
      if (vals.empty()) return "";
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      if (pick == 0) return fmt_g(mean);
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      var /= static_cast<double>(vals.size());
      return fmt_g(std::sqrt(var));
    };
    o << stat([](const MetricRow& r) { return r.loss; }) << ','
      << stat([](const MetricRow& r) { return r.topk_reward; }) << ','
      << stat([](const MetricRow& r) { return r.modes; }) << ','
      << stat([](const MetricRow& r) { return r.l1; }) << ','
      << stat([](const MetricRow& r) { return r.spearman_corr; }) << '\n';
  };
  emit("mean", 0);
  emit("std", 1);
}

}  // namespace detail

inline SweepOutcome execute_sweep(const RunConfig& base,
                                  const std::filesystem::path& out_root) {
  if (base.sweep_objectives.empty() || base.sweep_seeds.empty())
    throw ConfigError("sweep requires [sweep] objectives and seeds");
  SweepOutcome out;
  for (const auto& obj : base.sweep_objectives) {
    for (const auto seed : base.sweep_seeds) {
      SweepCell cell;
      cell.objective = obj;
      cell.seed = seed;
      RunConfig cfg = base;
      cfg.objective.kind = objective_from_string(obj);
      cfg.seed = seed;
      cfg.name = base.name + "-" + obj;
      cfg.sweep_objectives.clear();
      cfg.sweep_seeds.clear();
      try {
        if (cfg.partial && cfg.objective.kind == ObjectiveKind::kTb)
          throw ConfigError("tb cannot train on incomplete trajectories");
        RunOutcome ro = execute_run(cfg, out_root);
        cell.dir = ro.dir;
        cell.final_row = ro.result.rows.back();
        cell.status = ro.result.aborted ? "aborted" : "ok";
      } catch (const std::exception& e) {
        cell.status = std::string("error: ") + e.what();
        for (auto& c : cell.status)
          if (c == ',' || c == '\n') c = ';';
      }
      out.cells.push_back(std::move(cell));
    }
  }

  std::ostringstream o;
  o << "objective,seed,status,loss,topk_reward,modes,l1,spearman\n";
  for (const auto& c : out.cells) {
    o << c.objective << ',' << c.seed << ',' << c.status << ',';
    if (c.final_row.loss) o << fmt_g(*c.final_row.loss);
    o << ',';
    if (c.final_row.topk_reward) o << fmt_g(*c.final_row.topk_reward);
    o << ',';
    if (c.final_row.modes) o << *c.final_row.modes;
    o << ',';
    if (c.final_row.l1) o << fmt_g(*c.final_row.l1);
    o << ',';
    if (c.final_row.spearman_corr) o << fmt_g(*c.final_row.spearman_corr);
    o << '\n';
  }
  for (const auto& obj : base.sweep_objectives) {
    std::vector<const MetricRow*> rows;
    for (const auto& c : out.cells)
      if (c.objective == obj && c.status == "ok") rows.push_back(&c.final_row);
    if (!rows.empty()) detail::append_stat_rows(o, obj, rows);
  }
  out.summary_path = out_root / (base.name + "-summary.csv");
  std::filesystem::create_directories(out_root);
  write_file(out.summary_path, o.str());
  return out;
}

// ---------------------------------------------------------------------------
// Oracle tables: exact target distribution and uniform-backward flows for
// enumerable configs.

inline std::filesystem::path write_oracle_tables(const RunConfig& cfg,
                                                 const std::filesystem::path& out_dir) {
  return with_env(cfg, [&](const auto& env) {
    std::filesystem::create_directories(out_dir);
    const auto target = target_distribution(env, cfg.enum_cap);
    std::ostringstream t;
    t << "key,reward,target_prob\n";
    for (std::size_t i = 0; i < target.keys.size(); ++i) {
      const auto x = env.parse_key(target.keys[i]);
      t << target.keys[i] << ',' << fmt_g(std::exp(env.log_reward(x))) << ','
        << fmt_g(target.probs[i]) << '\n';
    }
    write_file(out_dir / "target.csv", t.str());

    const auto flows = flow_oracle(env, uniform_backward_policy(env), cfg.enum_cap);
    std::ostringstream f;
    f << "key,depth,flow\n";
    for (std::size_t i = 0; i < flows.space.states.size(); ++i) {
      const auto& s = flows.space.states[i];
      f << env.key(s) << ',' << env.depth(s) << ',' << fmt_g(flows.flow[i]) << '\n';
    }
    write_file(out_dir / "flows.csv", f.str());
    return out_dir / "target.csv";
  });
}

// ---------------------------------------------------------------------------
// Recompute metrics for a finished run directory (the `eval` subcommand).

struct EvalSummary {
  MetricRow row;
  std::optional<double> test_set_spearman;
};

inline EvalSummary recompute_eval(const std::filesystem::path& run_dir) {
  std::string snapshot = read_file(run_dir / "config.resolved");
  // Drop the leading "# gflownet <version>" comment; the parser also skips it.
  const auto parsed = parse_config_text(snapshot, (run_dir / "config.resolved").string());
  RunConfig cfg = resolve_run_config(parsed, "eval", (run_dir / "config.resolved").string());

  return with_env(cfg, [&](const auto& env) {
    GfnModelConfig mc;
    mc.hidden = cfg.hidden;
    mc.hidden_layers = cfg.hidden_layers;
    mc.flow_mode = cfg.flow_mode();
    mc.backward_mode = cfg.backward;
    MlpGfn model(env, mc, cfg.seed);
    load_model_json(run_dir / "model.json", model);

    const auto samples = parse_samples_csv(read_file(run_dir / "samples.csv"));
    EvalSummary out;
    if (!samples.empty()) {
      const auto topk = top_k_avg_reward(samples, cfg.topk);
      out.row.topk_reward = topk.value;
      if (const auto crit = resolve_mode_criterion(cfg, env))
        out.row.modes = count_modes(samples, *crit, env);
    }
    try {
      const auto target = target_distribution(env, cfg.enum_cap);
      const auto dist = exact_terminal_distribution(model, env, cfg.enum_cap);
      out.row.l1 = l1_distance(dist, target);
      std::vector<double> log_r, log_p;
      for (std::size_t i = 0; i < dist.keys.size(); ++i) {
        log_r.push_back(env.log_reward(env.parse_key(dist.keys[i])));
        log_p.push_back(std::log(std::max(dist.probs[i], 1e-300)));
      }
      out.row.spearman_corr = spearman(log_r, log_p);
    } catch (const std::runtime_error&) {
      // not enumerable: exact columns stay empty
    }
    if (!cfg.test_set_file.empty()) {
      std::vector<std::string> keys;
      std::istringstream in(read_file(cfg.test_set_file));
      std::string line;
      while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) keys.push_back(line);
      }
      out.test_set_spearman = spearman_log(model, env, keys, cfg.enum_cap);
    }
    return out;
  });
}

}  // namespace gfn
