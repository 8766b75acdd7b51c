#pragma once

// Exact and sampled evaluation. On enumerable instances the terminal
// distribution of the learned sampler is computed by a topological DP over
// the reachable DAG (exploration off), the target is R(x)/Z over enumerated
// terminals, and the two are compared in L1. Sample-log metrics (unique
// top-k reward, mode counts) and the backward-DP flow oracle used by tests
// also live here.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gfn/edit_distance.hpp"
#include "gfn/model.hpp"

namespace gfn {

inline constexpr std::uint64_t kDefaultEnumCap = 1000000;

/// All states reachable from s0, grouped by depth (a topological order).
template <class Env>
struct EnumeratedSpace {
  std::vector<typename Env::State> states;  // depth-major order
  std::vector<std::size_t> depth_offsets;   // offsets into `states` per depth
  std::unordered_map<std::string, std::size_t> index;
};

template <class Env>
EnumeratedSpace<Env> enumerate_space(const Env& env, std::uint64_t cap = kDefaultEnumCap) {
  EnumeratedSpace<Env> space;
  std::vector<typename Env::State> layer{env.initial_state()};
  space.index.emplace(env.key(layer[0]), 0);
  while (!layer.empty()) {
    space.depth_offsets.push_back(space.states.size());
    for (auto& s : layer) space.states.push_back(std::move(s));
    if (space.states.size() > cap)
      throw std::runtime_error("enumerate_space: state count exceeds cap");
    const std::size_t begin = space.depth_offsets.back();
    const std::size_t end = space.states.size();
    layer.clear();
    for (std::size_t i = begin; i < end; ++i) {
      const auto& s = space.states[i];
      if (env.is_terminal(s)) continue;
      for (int a : env.legal_actions(s)) {
        auto child = env.apply(s, a);
        const std::string key = env.key(child);
        if (space.index.count(key)) continue;
        space.index.emplace(key, space.states.size() + layer.size());
        layer.push_back(std::move(child));
        if (space.states.size() + layer.size() > cap)
          throw std::runtime_error("enumerate_space: state count exceeds cap");
      }
    }
  }
  return space;
}

struct TerminalDistribution {
  std::vector<std::string> keys;  // canonical enumeration order
  std::vector<double> probs;

  double total() const {
    double t = 0.0;
    for (double p : probs) t += p;
    return t;
  }
};

/// Marginal terminating probability of every terminal state under the
/// model's forward policy (no exploration, temperature 1), by DP over the
/// reachable DAG in depth order.
template <class Model, class Env>
TerminalDistribution exact_terminal_distribution(Model& model, const Env& env,
                                                 std::uint64_t cap = kDefaultEnumCap) {
  const auto space = enumerate_space(env, cap);
  std::vector<double> reach(space.states.size(), 0.0);
  reach[0] = 1.0;
  std::unordered_map<std::string, double> terminal_prob;
  for (std::size_t i = 0; i < space.states.size(); ++i) {
    const auto& s = space.states[i];
    if (env.is_terminal(s)) {
      terminal_prob[env.key(s)] = reach[i];
      continue;
    }
    const PlainHeads h = model.plain_heads(env, s);
    for (int a : env.legal_actions(s)) {
      const auto child = env.apply(s, a);
      reach[space.index.at(env.key(child))] +=
          reach[i] * std::exp(h.log_pf[static_cast<std::size_t>(a)]);
    }
  }
  TerminalDistribution out;
  for (const auto& x : env.enumerate_terminals(cap)) {
    out.keys.push_back(env.key(x));
    out.probs.push_back(terminal_prob.at(out.keys.back()));
  }
  return out;
}

/// R(x)/Z over enumerated terminals.
template <class Env>
TerminalDistribution target_distribution(const Env& env,
                                         std::uint64_t cap = kDefaultEnumCap) {
  TerminalDistribution out;
  double z = 0.0;
  for (const auto& x : env.enumerate_terminals(cap)) {
    out.keys.push_back(env.key(x));
    out.probs.push_back(std::exp(env.log_reward(x)));
    z += out.probs.back();
  }
  for (auto& p : out.probs) p /= z;
  return out;
}

inline double l1_distance(const TerminalDistribution& p, const TerminalDistribution& q) {
  if (p.keys != q.keys)
    throw std::invalid_argument("l1_distance: distributions have different support");
  double d = 0.0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) d += std::abs(p.probs[i] - q.probs[i]);
  return d;
}

// ---------------------------------------------------------------------------
// Sample-log metrics.

struct SampleRecord {
  std::string key;
  double reward = 0.0;
  long long step = 0;
};

struct TopKResult {
  double value = 0.0;
  bool fewer_than_k = false;  // set when unique count < k (mean over all)
};

inline TopKResult top_k_avg_reward(const std::vector<SampleRecord>& log, std::size_t k) {
  if (k < 1) throw std::invalid_argument("top_k_avg_reward: k must be >= 1");
  if (log.empty()) throw std::invalid_argument("top_k_avg_reward: empty sample log");
  std::unordered_map<std::string, double> unique;
  for (const auto& r : log) unique.emplace(r.key, r.reward);
  std::vector<double> rewards;
  rewards.reserve(unique.size());
  for (const auto& [_, r] : unique) rewards.push_back(r);
  std::sort(rewards.begin(), rewards.end(), std::greater<>());
  TopKResult out;
  out.fewer_than_k = rewards.size() < k;
  const std::size_t take = std::min(k, rewards.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < take; ++i) sum += rewards[i];
  out.value = sum / static_cast<double>(take);
  return out;
}

/// Set env: distinct terminals with reward above a threshold. Bit env:
/// members of the mode set matched within an edit-distance radius.
struct ModeCriterion {
  std::optional<double> reward_threshold;  // set-style
  std::optional<int> match_radius;         // bit-style (0 = exact membership)
};

inline long long count_modes_by_threshold(const std::vector<SampleRecord>& log,
                                          double threshold) {
  std::unordered_set<std::string> found;
  for (const auto& r : log)
    if (r.reward > threshold) found.insert(r.key);
  return static_cast<long long>(found.size());
}

template <class Env>
long long count_modes(const std::vector<SampleRecord>& log, const ModeCriterion& crit,
                      const Env& env) {
  if (crit.reward_threshold) {
    if (!(*crit.reward_threshold > 0.0))
      throw std::invalid_argument("count_modes: threshold must be positive");
    return count_modes_by_threshold(log, *crit.reward_threshold);
  }
  if (!crit.match_radius || *crit.match_radius < 0)
    throw std::invalid_argument("count_modes: criterion not set");
  if constexpr (!requires { env.modes(); }) {
    throw std::invalid_argument("count_modes: match radius needs a mode-set env");
  } else {
  const auto& modes = env.modes();
  std::vector<char> hit(modes.size(), 0);
  std::unordered_set<std::string> seen;
  for (const auto& r : log) {
    if (!seen.insert(r.key).second) continue;
    const std::string bits = r.key.substr(1);  // strip the "b" key prefix
    for (std::size_t m = 0; m < modes.size(); ++m) {
      if (hit[m]) continue;
      if (*crit.match_radius == 0 ? bits == modes[m]
                                  : edit_distance(bits, modes[m]) <= *crit.match_radius)
        hit[m] = 1;
    }
  }
  long long count = 0;
  for (char h : hit) count += h;
  return count;
  }
}

// ---------------------------------------------------------------------------
// Spearman rank correlation (average-rank ties).

inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman: need two same-length vectors, size >= 2");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw std::invalid_argument("spearman: constant ranks");
  return sxy / std::sqrt(sxx * syy);
}

/// Spearman correlation of log R(x) against log P_F_terminal(x) over a test
/// set of canonical state keys.
template <class Model, class Env>
double spearman_log(Model& model, const Env& env, const std::vector<std::string>& test_set,
                    std::uint64_t cap = kDefaultEnumCap) {
  if (test_set.size() < 2)
    throw std::invalid_argument("spearman_log: test set must have >= 2 states");
  const auto dist = exact_terminal_distribution(model, env, cap);
  std::unordered_map<std::string, double> prob;
  for (std::size_t i = 0; i < dist.keys.size(); ++i) prob[dist.keys[i]] = dist.probs[i];
  std::vector<double> log_r, log_p;
  for (const auto& key : test_set) {
    const auto x = env.parse_key(key);
    auto it = prob.find(key);
    if (it == prob.end())
      throw std::invalid_argument("spearman_log: key not terminal: " + key);
    log_r.push_back(env.log_reward(x));
    log_p.push_back(std::log(it->second));
  }
  return spearman(log_r, log_p);
}

// ---------------------------------------------------------------------------
// Backward-DP flow oracle: F(x) = R(x) at terminals, and
// F(s) = sum over children s' of F(s') P_B(s|s'). With the DB-consistent
// forward policy P_F(s'|s) = F(s') P_B(s|s') / F(s) this is the exact state
// flow, and F(s0) = Z.

template <class Env>
using BackwardPolicyFn =
    std::function<double(const typename Env::State& child, int parent_slot)>;

template <class Env>
BackwardPolicyFn<Env> uniform_backward_policy(const Env& env) {
  return [&env](const typename Env::State& child, int) {
    return 1.0 / static_cast<double>(env.parents(child).size());
  };
}

template <class Env>
struct FlowTable {
  EnumeratedSpace<Env> space;
  std::vector<double> flow;  // aligned with space.states

  double at(const std::string& key) const { return flow[space.index.at(key)]; }
};

template <class Env>
FlowTable<Env> flow_oracle(const Env& env, const BackwardPolicyFn<Env>& backward,
                           std::uint64_t cap = kDefaultEnumCap) {
  FlowTable<Env> table{enumerate_space(env, cap), {}};
  auto& space = table.space;
  table.flow.assign(space.states.size(), 0.0);
  for (std::size_t ri = space.states.size(); ri-- > 0;) {
    const auto& s = space.states[ri];
    if (env.is_terminal(s)) {
      table.flow[ri] = std::exp(env.log_reward(s));
      continue;
    }
    double acc = 0.0;
    for (int a : env.legal_actions(s)) {
      const auto child = env.apply(s, a);
      acc += table.flow[space.index.at(env.key(child))] *
             backward(child, env.parent_slot_for_action(a));
    }
    table.flow[ri] = acc;
  }
  return table;
}

}  // namespace gfn
