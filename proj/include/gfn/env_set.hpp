#pragma once

// Set construction environment: grow a subset of a universe U one element at
// a time until it holds exactly `target_size` elements. Each element carries
// a fixed energy term; the state energy is the beta-scaled sum over chosen
// elements, so transition energies are available at every step.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfn/rng.hpp"

namespace gfn {

struct SetState {
  std::vector<int> chosen;  // sorted, unique element indices

  bool contains(int e) const {
    return std::binary_search(chosen.begin(), chosen.end(), e);
  }
  bool operator==(const SetState& o) const { return chosen == o.chosen; }
};

struct SetEnvConfig {
  int universe_size = 6;
  int target_size = 3;
  double beta = 1.0;
  std::uint64_t seed = 7;
  /// Optional explicit per-element energies (tests, canonical instances);
  /// when empty the energies are sampled from the seed in [-1, 1], with the
  /// first floor(target_size/10) elements sharing one sampled value.
  std::vector<double> element_energies;
};

class SetEnv {
 public:
  using State = SetState;

  explicit SetEnv(SetEnvConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.target_size < 1 || cfg_.target_size > cfg_.universe_size)
      throw std::invalid_argument("set env: need 1 <= target_size <= universe_size");
    if (!(cfg_.beta > 0.0)) throw std::invalid_argument("set env: beta must be positive");
    if (cfg_.element_energies.empty()) {
      Rng rng(derive_seed(cfg_.seed, 0x5e7));
      energies_.resize(cfg_.universe_size);
      const int shared = cfg_.target_size / 10;
      const double shared_value = rng.uniform(-1.0, 1.0);
      for (int i = 0; i < cfg_.universe_size; ++i)
        energies_[i] = i < shared ? shared_value : rng.uniform(-1.0, 1.0);
    } else {
      if (static_cast<int>(cfg_.element_energies.size()) != cfg_.universe_size)
        throw std::invalid_argument("set env: element_energies size mismatch");
      for (double e : cfg_.element_energies)
        if (e < -1.0 - 1e-12 || e > 1.0 + 1e-12)
          throw std::invalid_argument("set env: element energy outside [-1, 1]");
      energies_ = cfg_.element_energies;
    }
  }

  const SetEnvConfig& config() const { return cfg_; }
  const std::vector<double>& element_energies() const { return energies_; }

  State initial_state() const { return State{}; }

  bool is_terminal(const State& s) const {
    return static_cast<int>(s.chosen.size()) == cfg_.target_size;
  }

  int max_trajectory_len() const { return cfg_.target_size; }
  int action_space() const { return cfg_.universe_size; }
  int parent_slots() const { return cfg_.universe_size; }
  int encoding_dim() const { return cfg_.universe_size + 1; }

  std::vector<int> legal_actions(const State& s) const {
    if (is_terminal(s)) throw std::invalid_argument("set env: legal_actions on terminal");
    std::vector<int> out;
    out.reserve(cfg_.universe_size - s.chosen.size());
    for (int e = 0; e < cfg_.universe_size; ++e)
      if (!s.contains(e)) out.push_back(e);
    return out;
  }

  void legal_action_mask(const State& s, std::vector<char>& mask) const {
    if (is_terminal(s)) throw std::invalid_argument("set env: action mask on terminal");
    mask.assign(cfg_.universe_size, 1);
    for (int e : s.chosen) mask[e] = 0;
  }

  State apply(const State& s, int action) const {
    if (is_terminal(s)) throw std::invalid_argument("set env: apply on terminal");
    if (action < 0 || action >= cfg_.universe_size || s.contains(action))
      throw std::invalid_argument("set env: illegal action " + std::to_string(action));
    State out = s;
    out.chosen.insert(std::upper_bound(out.chosen.begin(), out.chosen.end(), action),
                      action);
    return out;
  }

  std::vector<State> parents(const State& s) const {
    if (s.chosen.empty()) throw std::invalid_argument("set env: parents of initial state");
    std::vector<State> out;
    out.reserve(s.chosen.size());
    for (std::size_t i = 0; i < s.chosen.size(); ++i) {
      State p = s;
      p.chosen.erase(p.chosen.begin() + i);
      out.push_back(std::move(p));
    }
    return out;
  }

  /// Backward-head slot of the parent reached by undoing `action`.
  int parent_slot_for_action(int action) const { return action; }

  void parent_slot_mask(const State& s, std::vector<char>& mask) const {
    if (s.chosen.empty()) throw std::invalid_argument("set env: parent mask of initial state");
    mask.assign(cfg_.universe_size, 0);
    for (int e : s.chosen) mask[e] = 1;
  }

  /// Beta-scaled effective energy; E(empty) = 0 and energies add per element.
  double state_energy(const State& s) const {
    double sum = 0.0;
    for (int e : s.chosen) sum += energies_[e];
    return cfg_.beta * sum;
  }

  double transition_energy(const State& s, const State& t) const {
    require_edge(s, t);
    return state_energy(t) - state_energy(s);
  }

  double log_reward(const State& s) const {
    if (!is_terminal(s)) throw std::invalid_argument("set env: reward of nonterminal");
    return -state_energy(s);
  }

  void encode(const State& s, std::vector<double>& out) const {
    out.assign(cfg_.universe_size + 1, 0.0);
    for (int e : s.chosen) out[e] = 1.0;
    out[cfg_.universe_size] =
        static_cast<double>(s.chosen.size()) / static_cast<double>(cfg_.target_size);
  }

  std::string key(const State& s) const {
    std::string out = "s";
    for (std::size_t i = 0; i < s.chosen.size(); ++i) {
      if (i) out += '-';
      out += std::to_string(s.chosen[i]);
    }
    return out;
  }

  State parse_key(const std::string& k) const {
    if (k.empty() || k[0] != 's') throw std::invalid_argument("set env: bad state key " + k);
    State s;
    std::size_t i = 1;
    while (i < k.size()) {
      std::size_t j = k.find('-', i);
      if (j == std::string::npos) j = k.size();
      s.chosen.push_back(std::stoi(k.substr(i, j - i)));
      i = j + 1;
    }
    if (!std::is_sorted(s.chosen.begin(), s.chosen.end()))
      throw std::invalid_argument("set env: unsorted state key " + k);
    return s;
  }

  int depth(const State& s) const { return static_cast<int>(s.chosen.size()); }

  std::uint64_t terminal_count(std::uint64_t cap) const {
    // C(universe, target) with early refusal to avoid overflow.
    double c = 1.0;
    for (int i = 0; i < cfg_.target_size; ++i) {
      c *= static_cast<double>(cfg_.universe_size - i) / static_cast<double>(i + 1);
      if (c > 2.0 * static_cast<double>(cap)) break;
    }
    if (c > static_cast<double>(cap))
      throw std::runtime_error("set env: terminal count exceeds enumeration cap");
    return static_cast<std::uint64_t>(c + 0.5);
  }

  std::vector<State> enumerate_terminals(std::uint64_t cap) const {
    terminal_count(cap);
    std::vector<State> out;
    State cur;
    enumerate_rec(cur, 0, out);
    return out;
  }

  std::optional<int> terminate_action(const State&) const { return std::nullopt; }

 private:
  void require_edge(const State& s, const State& t) const {
    if (t.chosen.size() != s.chosen.size() + 1)
      throw std::invalid_argument("set env: not an edge");
    for (int e : s.chosen)
      if (!t.contains(e)) throw std::invalid_argument("set env: not an edge");
  }

  void enumerate_rec(State& cur, int next, std::vector<State>& out) const {
    if (is_terminal(cur)) {
      out.push_back(cur);
      return;
    }
    const int need = cfg_.target_size - static_cast<int>(cur.chosen.size());
    for (int e = next; e + need <= cfg_.universe_size; ++e) {
      cur.chosen.push_back(e);
      enumerate_rec(cur, e + 1, out);
      cur.chosen.pop_back();
    }
  }

  SetEnvConfig cfg_;
  std::vector<double> energies_;
};

}  // namespace gfn
