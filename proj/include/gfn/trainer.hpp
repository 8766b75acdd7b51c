#pragma once

// Rollout sampling and the training loop. Rollouts draw actions from the
// epsilon-mixed, temperature-scaled forward policy; each rollout owns an RNG
// stream derived from (seed, step, rollout index), so the concurrent and
// single-threaded modes produce identical batches. One optimizer step is
// taken per batch on the objective's mean loss.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "gfn/eval.hpp"
#include "gfn/model.hpp"
#include "gfn/nn.hpp"
#include "gfn/objectives.hpp"
#include "gfn/rng.hpp"
#include "gfn/tensor.hpp"
#include "gfn/trajectory.hpp"

namespace gfn {

struct ExplorationConfig {
  double epsilon = 0.0;      // mix weight of the uniform policy
  double temperature = 1.0;  // applied to forward logits before normalization
};

/// The training policy pi = eps * U + (1 - eps) * P_F over action ids;
/// illegal actions get probability zero.
template <class Model, class Env>
std::vector<double> training_policy(Model& model, const Env& env,
                                    const typename Env::State& s,
                                    const ExplorationConfig& ex) {
  const PlainHeads h = model.plain_heads(env, s, ex.temperature);
  std::vector<char> mask;
  env.legal_action_mask(s, mask);
  std::size_t legal = 0;
  for (char c : mask) legal += (c != 0);
  std::vector<double> probs(mask.size(), 0.0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i])
      probs[i] = ex.epsilon / static_cast<double>(legal) +
                 (1.0 - ex.epsilon) * std::exp(h.log_pf[i]);
  return probs;
}

template <class Model, class Env>
Trajectory<typename Env::State> sample_trajectory(Model& model, const Env& env,
                                                  const ExplorationConfig& ex, Rng& rng,
                                                  bool record_energies) {
  Trajectory<typename Env::State> traj;
  auto s = env.initial_state();
  double prev_energy = record_energies ? env.state_energy(s) : 0.0;
  while (!env.is_terminal(s)) {
    const auto probs = training_policy(model, env, s, ex);
    const int a = static_cast<int>(rng.categorical(probs));
    auto next = env.apply(s, a);
    Transition<typename Env::State> tr{s, next, a};
    if (record_energies) {
      const double e = env.state_energy(next);
      tr.energy = e - prev_energy;
      prev_energy = e;
    }
    traj.steps.push_back(std::move(tr));
    s = std::move(next);
  }
  traj.complete = true;
  traj.log_reward = env.log_reward(s);
  return traj;
}

/// Truncated on-policy rollout of length L ~ Uniform{1, ..., maxlen-1};
/// never reaches a terminal state and records no reward.
template <class Model, class Env>
Trajectory<typename Env::State> sample_partial_trajectory(Model& model, const Env& env,
                                                          const ExplorationConfig& ex,
                                                          Rng& rng,
                                                          bool record_energies) {
  const int maxlen = env.max_trajectory_len();
  if (maxlen < 2)
    throw std::invalid_argument("sample_partial_trajectory: need trajectories of length >= 2");
  const int length = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(maxlen - 1)));
  Trajectory<typename Env::State> traj;
  auto s = env.initial_state();
  double prev_energy = record_energies ? env.state_energy(s) : 0.0;
  for (int t = 0; t < length; ++t) {
    const auto probs = training_policy(model, env, s, ex);
    const int a = static_cast<int>(rng.categorical(probs));
    auto next = env.apply(s, a);
    Transition<typename Env::State> tr{s, next, a};
    if (record_energies) {
      const double e = env.state_energy(next);
      tr.energy = e - prev_energy;
      prev_energy = e;
    }
    traj.steps.push_back(std::move(tr));
    s = std::move(next);
  }
  traj.complete = false;
  return traj;
}

/// Optimizer plus the TB normalization scalar when needed.
struct TrainContext {
  Adam opt;
  TensorPtr log_z;  // present iff the objective is TB

  explicit TrainContext(AdamConfig cfg = {}) : opt(cfg) {}
};

template <class Model>
TrainContext make_train_context(Model& model, ObjectiveKind kind, double policy_lr,
                                double logz_lr, AdamConfig adam = {}) {
  TrainContext ctx(adam);
  ctx.opt.add_group(model.params(), policy_lr);
  if (kind == ObjectiveKind::kTb) {
    ctx.log_z = make_leaf({0.0}, {1});
    ctx.opt.add_group({ctx.log_z}, logz_lr);
  }
  return ctx;
}

/// Mean objective loss over the batch (transitions for DB variants,
/// trajectories for TB/SubTB variants), without stepping the optimizer.
template <class Model, class Env>
TensorPtr batch_loss(Model& model, TrainContext& ctx, const Env& env,
                     const std::vector<Trajectory<typename Env::State>>& batch,
                     const ObjectiveConfig& obj, HeadsCache& cache) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  std::vector<TensorPtr> parts;
  switch (obj.kind) {
    case ObjectiveKind::kDb:
      for (const auto& traj : batch)
        for (const auto& tr : traj.steps) parts.push_back(db_loss(model, env, tr, &cache));
      break;
    case ObjectiveKind::kFlDb:
      for (const auto& traj : batch)
        for (const auto& tr : traj.steps)
          parts.push_back(fl_db_loss(model, env, tr, &cache));
      break;
    case ObjectiveKind::kTb:
      for (const auto& traj : batch) {
        if (!traj.complete)
          throw std::invalid_argument(
              "tb objective cannot train on incomplete trajectories");
        parts.push_back(tb_loss(model, ctx.log_z, env, traj, &cache));
      }
      break;
    case ObjectiveKind::kSubTb:
      for (const auto& traj : batch)
        parts.push_back(subtb_loss(model, env, traj, obj.subtb_lambda, &cache));
      break;
    case ObjectiveKind::kFlSubTb:
      for (const auto& traj : batch)
        parts.push_back(fl_subtb_loss(model, env, traj, obj.subtb_lambda, &cache));
      break;
  }
  return mean_of(parts);
}

/// One optimizer step on the batch; returns the pre-step loss.
template <class Model, class Env>
double train_step(Model& model, TrainContext& ctx, const Env& env,
                  const std::vector<Trajectory<typename Env::State>>& batch,
                  const ObjectiveConfig& obj) {
  HeadsCache cache;
  const TensorPtr loss = batch_loss(model, ctx, env, batch, obj, cache);
  const double value = loss->item();
  if (!std::isfinite(value)) return value;  // caller aborts; params untouched
  ctx.opt.zero_grad();
  backward(loss);
  ctx.opt.step();
  return value;
}

// ---------------------------------------------------------------------------
// Training loop.

struct TrainerConfig {
  ObjectiveConfig objective;
  ExplorationConfig exploration;
  int batch_size = 16;
  long long budget = 50000;  // transitions sampled from the environment
  bool partial = false;
  std::uint64_t seed = 1;
  int threads = 1;
  long long metric_every = 1000;
  double policy_lr = 1e-3;
  double logz_lr = 0.1;
  AdamConfig adam;
};

struct SnapshotConfig {
  std::size_t topk = 100;
  std::uint64_t enum_cap = kDefaultEnumCap;
  bool exact_metrics = true;  // compute L1/Spearman when the env is enumerable
  std::optional<ModeCriterion> mode;
};

struct MetricRow {
  long long step = 0;
  long long transitions = 0;
  std::optional<double> loss;
  std::optional<double> topk_reward;
  std::optional<long long> modes;
  std::optional<double> l1;
  std::optional<double> spearman_corr;
};

struct TrainResult {
  std::vector<MetricRow> rows;
  std::vector<SampleRecord> samples;
  std::vector<std::pair<long long, double>> timing;  // (step, wall seconds)
  long long steps = 0;
  long long transitions = 0;
  double final_loss = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

namespace detail {

/// Incremental mode bookkeeping over the deduplicated sample stream.
template <class Env>
class ModeTracker {
 public:
  ModeTracker(const std::optional<ModeCriterion>& crit, const Env& env) : env_(env) {
    if (!crit) return;
    crit_ = *crit;
    if (crit_->match_radius) hit_.assign(mode_strings().size(), 0);
  }

  void add_unique(const std::string& key, double reward) {
    if (!crit_) return;
    if (crit_->reward_threshold) {
      if (reward > *crit_->reward_threshold) ++threshold_count_;
      return;
    }
    const auto& modes = mode_strings();
    const std::string bits = key.substr(1);
    for (std::size_t m = 0; m < modes.size(); ++m) {
      if (hit_[m]) continue;
      if (*crit_->match_radius == 0
              ? bits == modes[m]
              : edit_distance(bits, modes[m]) <= *crit_->match_radius)
        hit_[m] = 1;
    }
  }

  std::optional<long long> count() const {
    if (!crit_) return std::nullopt;
    if (crit_->reward_threshold) return threshold_count_;
    long long c = 0;
    for (char h : hit_) c += h;
    return c;
  }

 private:
  const std::vector<std::string>& mode_strings() const {
    if constexpr (requires { env_.modes(); }) {
      return env_.modes();
    } else {
      throw std::invalid_argument("mode radius criterion needs a mode-set env");
    }
  }

  const Env& env_;
  std::optional<ModeCriterion> crit_;
  std::vector<char> hit_;
  long long threshold_count_ = 0;
};

}  // namespace detail

template <class Model, class Env>
std::string describe_nonfinite(Model& model, TrainContext& ctx, const Env& env,
                               const std::vector<Trajectory<typename Env::State>>& batch,
                               const ObjectiveConfig& obj);

template <class Model, class Env>
TrainResult run_training(Model& model, const Env& env, const TrainerConfig& cfg,
                         const SnapshotConfig& snap) {
  if (cfg.batch_size < 1) throw std::invalid_argument("run_training: batch_size >= 1");
  if (cfg.budget < 1) throw std::invalid_argument("run_training: budget must be positive");
  if (cfg.partial && cfg.objective.kind == ObjectiveKind::kTb)
    throw std::invalid_argument("tb objective cannot train on incomplete trajectories");

  const bool record_energies = is_forward_looking(cfg.objective.kind);
  TrainContext ctx = make_train_context(model, cfg.objective.kind, cfg.policy_lr,
                                        cfg.logz_lr, cfg.adam);

  // Exact-evaluation fixtures, when the instance is enumerable.
  std::optional<TerminalDistribution> target;
  if (snap.exact_metrics) {
    try {
      target = target_distribution(env, snap.enum_cap);
    } catch (const std::runtime_error&) {
      target.reset();
    }
  }

  TrainResult result;
  std::unordered_map<std::string, double> unique_rewards;
  std::vector<double> unique_reward_values;
  detail::ModeTracker<Env> mode_tracker(snap.mode, env);

  const auto t_start = std::chrono::steady_clock::now();
  auto snapshot = [&](std::optional<double> loss) {
    MetricRow row;
    row.step = result.steps;
    row.transitions = result.transitions;
    row.loss = loss;
    if (!unique_reward_values.empty()) {
      std::vector<double> v = unique_reward_values;
      const std::size_t take = std::min(snap.topk, v.size());
      std::nth_element(v.begin(), v.begin() + (take - 1), v.end(), std::greater<>());
      double sum = 0.0;
      for (std::size_t i = 0; i < take; ++i) sum += v[i];
      row.topk_reward = sum / static_cast<double>(take);
    }
    row.modes = mode_tracker.count();
    if (target) {
      const auto dist = exact_terminal_distribution(model, env, snap.enum_cap);
      row.l1 = l1_distance(dist, *target);
      std::vector<double> log_r, log_p;
      for (std::size_t i = 0; i < dist.keys.size(); ++i) {
        log_r.push_back(env.log_reward(env.parse_key(dist.keys[i])));
        log_p.push_back(std::log(std::max(dist.probs[i], 1e-300)));
      }
      row.spearman_corr = spearman(log_r, log_p);
    }
    result.rows.push_back(std::move(row));
    result.timing.emplace_back(
        result.steps,
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count());
  };

  snapshot(std::nullopt);  // initial state of the sampler, before any update

  std::vector<Trajectory<typename Env::State>> batch(
      static_cast<std::size_t>(cfg.batch_size));
  long long next_mark = cfg.metric_every;
  while (result.transitions < cfg.budget) {
    const long long step_index = result.steps;
    auto sample_one = [&](int i) {
      Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(step_index),
                          static_cast<std::uint64_t>(i)));
      batch[static_cast<std::size_t>(i)] =
          cfg.partial
              ? sample_partial_trajectory(model, env, cfg.exploration, rng, record_energies)
              : sample_trajectory(model, env, cfg.exploration, rng, record_energies);
    };
    if (cfg.threads <= 1) {
      for (int i = 0; i < cfg.batch_size; ++i) sample_one(i);
    } else {
      std::vector<std::thread> workers;
      const int nw = std::min(cfg.threads, cfg.batch_size);
      workers.reserve(static_cast<std::size_t>(nw));
      for (int w = 0; w < nw; ++w)
        workers.emplace_back([&, w]() {
          for (int i = w; i < cfg.batch_size; i += nw) sample_one(i);
        });
      for (auto& t : workers) t.join();
    }

    for (const auto& traj : batch) {
      result.transitions += static_cast<long long>(traj.length());
      if (traj.complete) {
        const std::string key = env.key(traj.last_state());
        const double reward = std::exp(traj.log_reward);
        result.samples.push_back({key, reward, result.steps});
        if (unique_rewards.emplace(key, reward).second) {
          unique_reward_values.push_back(reward);
          mode_tracker.add_unique(key, reward);
        }
      }
    }

    const double loss = train_step(model, ctx, env, batch, cfg.objective);
    ++result.steps;
    result.final_loss = loss;
    if (!std::isfinite(loss)) {
      result.aborted = true;
      result.abort_reason = describe_nonfinite(model, ctx, env, batch, cfg.objective);
      snapshot(loss);
      return result;
    }
    if (result.transitions >= next_mark || result.transitions >= cfg.budget) {
      snapshot(loss);
      while (next_mark <= result.transitions) next_mark += cfg.metric_every;
    }
  }
  return result;
}

/// Locates the first transition/trajectory whose loss term is non-finite;
/// used for the abort diagnostic.
template <class Model, class Env>
std::string describe_nonfinite(Model& model, TrainContext& ctx, const Env& env,
                               const std::vector<Trajectory<typename Env::State>>& batch,
                               const ObjectiveConfig& obj) {
  HeadsCache cache;
  std::string out = "non-finite loss";
  try {
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& traj = batch[b];
      if (obj.kind == ObjectiveKind::kDb || obj.kind == ObjectiveKind::kFlDb) {
        for (const auto& tr : traj.steps) {
          const double v = obj.kind == ObjectiveKind::kDb
                               ? db_loss(model, env, tr, &cache)->item()
                               : fl_db_loss(model, env, tr, &cache)->item();
          if (!std::isfinite(v))
            return "non-finite loss at transition " + env.key(tr.from) + " -> " +
                   env.key(tr.to) + " (rollout " + std::to_string(b) + ")";
        }
      } else {
        const double v =
            obj.kind == ObjectiveKind::kTb
                ? tb_loss(model, ctx.log_z, env, traj, &cache)->item()
                : (obj.kind == ObjectiveKind::kSubTb
                       ? subtb_loss(model, env, traj, obj.subtb_lambda, &cache)->item()
                       : fl_subtb_loss(model, env, traj, obj.subtb_lambda, &cache)->item());
        if (!std::isfinite(v))
          return "non-finite loss in rollout " + std::to_string(b) + " ending at " +
                 env.key(traj.last_state());
      }
    }
  } catch (const std::exception& e) {
    out += std::string(" (diagnostic re-evaluation failed: ") + e.what() + ")";
  }
  return out;
}

}  // namespace gfn
