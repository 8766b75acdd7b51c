#pragma once

// Balance objectives. Every residual is assembled in log space and squared;
// no flow is ever exponentiated inside a loss. Detailed balance relates one
// edge, trajectory balance one complete trajectory, subtrajectory balance
// every segment (geometric lambda^length weights, normalized per
// trajectory). The forward-looking variants carry the transition energies
// explicitly in the residual, which is what produces usable learning signal
// before a terminal state is reached.

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "gfn/model.hpp"
#include "gfn/tensor.hpp"
#include "gfn/trajectory.hpp"

namespace gfn {

enum class ObjectiveKind { kDb, kTb, kSubTb, kFlDb, kFlSubTb };

inline bool is_forward_looking(ObjectiveKind k) {
  return k == ObjectiveKind::kFlDb || k == ObjectiveKind::kFlSubTb;
}

inline const char* to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::kDb: return "db";
    case ObjectiveKind::kTb: return "tb";
    case ObjectiveKind::kSubTb: return "subtb";
    case ObjectiveKind::kFlDb: return "fl-db";
    case ObjectiveKind::kFlSubTb: return "fl-subtb";
  }
  return "?";
}

inline ObjectiveKind objective_from_string(const std::string& s) {
  if (s == "db") return ObjectiveKind::kDb;
  if (s == "tb") return ObjectiveKind::kTb;
  if (s == "subtb") return ObjectiveKind::kSubTb;
  if (s == "fl-db") return ObjectiveKind::kFlDb;
  if (s == "fl-subtb") return ObjectiveKind::kFlSubTb;
  throw std::invalid_argument("unknown objective: " + s);
}

struct ObjectiveConfig {
  ObjectiveKind kind = ObjectiveKind::kFlDb;
  double subtb_lambda = 0.9;  // in (0, 1]
};

/// Heads memo for one training step; states recur within and across
/// transitions of a batch.
struct HeadsCache {
  std::unordered_map<std::string, Heads> map;
};

template <class Model, class Env>
Heads heads_for(Model& model, const Env& env, const typename Env::State& s,
                HeadsCache* cache) {
  if (!cache) return model.heads(env, s);
  const std::string key = env.key(s);
  auto it = cache->map.find(key);
  if (it == cache->map.end()) it = cache->map.emplace(key, model.heads(env, s)).first;
  return it->second;
}

// ---------------------------------------------------------------------------
// Detailed balance: F(s) P_F(s'|s) = F(s') P_B(s|s').

template <class Model, class Env>
TensorPtr db_residual(Model& model, const Env& env,
                      const Transition<typename Env::State>& tr,
                      HeadsCache* cache = nullptr) {
  if (model.flow_mode() != FlowMode::kPlain)
    throw std::invalid_argument("db_loss: model is forward-looking, use fl_db_loss");
  const Heads& hs = heads_for(model, env, tr.from, cache);
  const Heads& ht = heads_for(model, env, tr.to, cache);
  const int slot = env.parent_slot_for_action(tr.action);
  return linear_combination({{hs.log_flow, 1.0},
                             {index(hs.log_pf, tr.action), 1.0},
                             {ht.log_flow, -1.0},
                             {index(ht.log_pb, slot), -1.0}});
}

template <class Model, class Env>
TensorPtr db_loss(Model& model, const Env& env,
                  const Transition<typename Env::State>& tr,
                  HeadsCache* cache = nullptr) {
  return square(db_residual(model, env, tr, cache));
}

// ---------------------------------------------------------------------------
// Forward-looking detailed balance:
// F~(s) P_F(s'|s) = F~(s') P_B(s|s') e^{-E(s->s')}.

template <class Model, class Env>
TensorPtr fl_db_residual(Model& model, const Env& env,
                         const Transition<typename Env::State>& tr,
                         HeadsCache* cache = nullptr) {
  if (model.flow_mode() != FlowMode::kForwardLooking)
    throw std::invalid_argument("fl_db_loss: model is not forward-looking");
  if (!tr.has_energy())
    throw std::invalid_argument("fl_db_loss: transition energy missing");
  const Heads& hs = heads_for(model, env, tr.from, cache);
  const Heads& ht = heads_for(model, env, tr.to, cache);
  const int slot = env.parent_slot_for_action(tr.action);
  return linear_combination({{hs.log_flow, 1.0},
                             {index(hs.log_pf, tr.action), 1.0},
                             {ht.log_flow, -1.0},
                             {index(ht.log_pb, slot), -1.0}},
                            tr.energy);
}

template <class Model, class Env>
TensorPtr fl_db_loss(Model& model, const Env& env,
                     const Transition<typename Env::State>& tr,
                     HeadsCache* cache = nullptr) {
  return square(fl_db_residual(model, env, tr, cache));
}

// ---------------------------------------------------------------------------
// Trajectory balance: Z prod P_F = R(x) prod P_B over a complete trajectory.

template <class Model, class Env>
TensorPtr tb_residual(Model& model, const TensorPtr& log_z, const Env& env,
                      const Trajectory<typename Env::State>& traj,
                      HeadsCache* cache = nullptr) {
  if (!traj.complete)
    throw std::invalid_argument("tb_loss: requires a complete trajectory");
  if (traj.steps.empty()) throw std::invalid_argument("tb_loss: empty trajectory");
  std::vector<std::pair<TensorPtr, double>> terms;
  terms.reserve(2 * traj.steps.size() + 1);
  terms.emplace_back(log_z, 1.0);
  for (const auto& tr : traj.steps) {
    const Heads& hs = heads_for(model, env, tr.from, cache);
    const Heads& ht = heads_for(model, env, tr.to, cache);
    terms.emplace_back(index(hs.log_pf, tr.action), 1.0);
    terms.emplace_back(index(ht.log_pb, env.parent_slot_for_action(tr.action)), -1.0);
  }
  const double log_r = env.log_reward(traj.last_state());
  return linear_combination(std::move(terms), -log_r);
}

template <class Model, class Env>
TensorPtr tb_loss(Model& model, const TensorPtr& log_z, const Env& env,
                  const Trajectory<typename Env::State>& traj,
                  HeadsCache* cache = nullptr) {
  return square(tb_residual(model, log_z, env, traj, cache));
}

// ---------------------------------------------------------------------------
// Subtrajectory balance over all segments i < j:
// F(s_i) prod P_F = F(s_j) prod P_B  (flows clamped at terminal endpoints).
// The forward-looking variant adds the telescoped segment energy to the
// residual. Loss is sum_ij lambda^{j-i} r_ij^2 / sum_ij lambda^{j-i}.

namespace detail {

template <class Model, class Env>
TensorPtr subtb_loss_impl(Model& model, const Env& env,
                          const Trajectory<typename Env::State>& traj,
                          double lambda, bool forward_looking, HeadsCache* cache,
                          int only_length) {
  if (traj.steps.empty()) throw std::invalid_argument("subtb_loss: empty trajectory");
  if (!(lambda > 0.0 && lambda <= 1.0))
    throw std::invalid_argument("subtb_loss: lambda must be in (0, 1]");
  const std::size_t n = traj.steps.size();

  std::vector<Heads> state_heads(n + 1);
  state_heads[0] = heads_for(model, env, traj.steps[0].from, cache);
  for (std::size_t t = 0; t < n; ++t)
    state_heads[t + 1] = heads_for(model, env, traj.steps[t].to, cache);

  std::vector<TensorPtr> pf(n), pb(n);
  for (std::size_t t = 0; t < n; ++t) {
    pf[t] = index(state_heads[t].log_pf, traj.steps[t].action);
    pb[t] = index(state_heads[t + 1].log_pb,
                  env.parent_slot_for_action(traj.steps[t].action));
    if (forward_looking && !traj.steps[t].has_energy())
      throw std::invalid_argument("fl_subtb_loss: transition energy missing");
  }

  std::vector<std::pair<TensorPtr, double>> weighted;
  double weight_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j <= n; ++j) {
      const int len = static_cast<int>(j - i);
      if (only_length > 0 && len != only_length) continue;
      std::vector<std::pair<TensorPtr, double>> terms;
      terms.reserve(2 * (j - i) + 2);
      terms.emplace_back(state_heads[i].log_flow, 1.0);
      terms.emplace_back(state_heads[j].log_flow, -1.0);
      double bias = 0.0;
      for (std::size_t t = i; t < j; ++t) {
        terms.emplace_back(pf[t], 1.0);
        terms.emplace_back(pb[t], -1.0);
        if (forward_looking) bias += traj.steps[t].energy;
      }
      const double w = std::pow(lambda, len);
      weighted.emplace_back(square(linear_combination(std::move(terms), bias)), w);
      weight_total += w;
    }
  }
  for (auto& [t, w] : weighted) w /= weight_total;
  return linear_combination(std::move(weighted));
}

}  // namespace detail

template <class Model, class Env>
TensorPtr subtb_loss(Model& model, const Env& env,
                     const Trajectory<typename Env::State>& traj, double lambda,
                     HeadsCache* cache = nullptr, int only_length = 0) {
  if (model.flow_mode() != FlowMode::kPlain)
    throw std::invalid_argument("subtb_loss: model is forward-looking, use fl_subtb_loss");
  return detail::subtb_loss_impl(model, env, traj, lambda, false, cache, only_length);
}

template <class Model, class Env>
TensorPtr fl_subtb_loss(Model& model, const Env& env,
                        const Trajectory<typename Env::State>& traj, double lambda,
                        HeadsCache* cache = nullptr, int only_length = 0) {
  if (model.flow_mode() != FlowMode::kForwardLooking)
    throw std::invalid_argument("fl_subtb_loss: model is not forward-looking");
  return detail::subtb_loss_impl(model, env, traj, lambda, true, cache, only_length);
}

// ---------------------------------------------------------------------------
// Diagnostic for environments with an explicit terminate action: when the
// balance constraints hold, log F~(s) = -log P_F(s_terminal | s), so the
// residual |log F~(s) + log P_F(s_terminal | s)| vanishes at an exact
// solution.

template <class Model, class Env>
double terminating_parameterization_residual(Model& model, const Env& env,
                                             const typename Env::State& s) {
  const auto terminate = env.terminate_action(s);
  if (!terminate)
    throw std::invalid_argument(
        "terminating_parameterization_residual: env has no terminate action");
  const PlainHeads h = model.plain_heads(env, s);
  return std::abs(h.log_flow + h.log_pf[static_cast<std::size_t>(*terminate)]);
}

}  // namespace gfn
