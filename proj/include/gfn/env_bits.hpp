#pragma once

// Bit-sequence environment: append one k-bit word per step until the string
// holds n bits. The energy of any state (including short prefixes) is the
// beta-scaled minimum edit distance to a fixed mode set M of full-length
// strings, so intermediate states carry usable energy signal.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "gfn/edit_distance.hpp"
#include "gfn/rng.hpp"

namespace gfn {

struct BitSeqState {
  std::vector<int> words;  // each in [0, 2^k)

  bool operator==(const BitSeqState& o) const { return words == o.words; }
};

struct BitSeqEnvConfig {
  int n = 20;  // total bits
  int k = 4;   // word width
  double beta = 3.0;
  std::uint64_t seed = 11;
  int num_modes = 60;               // sampled when `modes` is empty
  std::vector<std::string> modes;   // explicit mode set (tests / file input)
};

class BitSeqEnv {
 public:
  using State = BitSeqState;

  explicit BitSeqEnv(BitSeqEnvConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.k < 1 || cfg_.k > 16) throw std::invalid_argument("bit env: bad word width");
    if (cfg_.n < cfg_.k || cfg_.n % cfg_.k != 0)
      throw std::invalid_argument("bit env: n must be a positive multiple of k");
    if (!(cfg_.beta > 0.0)) throw std::invalid_argument("bit env: beta must be positive");
    if (cfg_.modes.empty()) {
      if (cfg_.num_modes < 1) throw std::invalid_argument("bit env: num_modes < 1");
      Rng rng(derive_seed(cfg_.seed, 0xb175));
      std::unordered_set<std::string> seen;
      while (static_cast<int>(modes_.size()) < cfg_.num_modes) {
        std::string m(cfg_.n, '0');
        for (auto& c : m) c = rng.below(2) ? '1' : '0';
        if (seen.insert(m).second) modes_.push_back(std::move(m));
      }
    } else {
      for (const auto& m : cfg_.modes) {
        if (static_cast<int>(m.size()) != cfg_.n)
          throw std::invalid_argument("bit env: mode length != n");
        for (char c : m)
          if (c != '0' && c != '1') throw std::invalid_argument("bit env: mode not binary");
      }
      modes_ = cfg_.modes;
    }
  }

  static std::vector<std::string> load_modes_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("bit env: cannot open modes file " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) out.push_back(line);
    }
    return out;
  }

  const BitSeqEnvConfig& config() const { return cfg_; }
  const std::vector<std::string>& modes() const { return modes_; }

  State initial_state() const { return State{}; }

  int word_count() const { return cfg_.n / cfg_.k; }
  int alphabet() const { return 1 << cfg_.k; }

  bool is_terminal(const State& s) const {
    return static_cast<int>(s.words.size()) == word_count();
  }

  int max_trajectory_len() const { return word_count(); }
  int action_space() const { return alphabet(); }
  int parent_slots() const { return 1; }
  int encoding_dim() const { return word_count() * alphabet() + 1; }

  std::vector<int> legal_actions(const State& s) const {
    if (is_terminal(s)) throw std::invalid_argument("bit env: legal_actions on terminal");
    std::vector<int> out(alphabet());
    for (int w = 0; w < alphabet(); ++w) out[w] = w;
    return out;
  }

  void legal_action_mask(const State& s, std::vector<char>& mask) const {
    if (is_terminal(s)) throw std::invalid_argument("bit env: action mask on terminal");
    mask.assign(alphabet(), 1);
  }

  State apply(const State& s, int action) const {
    if (is_terminal(s)) throw std::invalid_argument("bit env: apply on terminal");
    if (action < 0 || action >= alphabet())
      throw std::invalid_argument("bit env: illegal action");
    State out = s;
    out.words.push_back(action);
    return out;
  }

  std::vector<State> parents(const State& s) const {
    if (s.words.empty()) throw std::invalid_argument("bit env: parents of initial state");
    State p = s;
    p.words.pop_back();
    return {std::move(p)};
  }

  int parent_slot_for_action(int) const { return 0; }

  void parent_slot_mask(const State& s, std::vector<char>& mask) const {
    if (s.words.empty()) throw std::invalid_argument("bit env: parent mask of initial state");
    mask.assign(1, 1);
  }

  std::string bits(const State& s) const {
    std::string out;
    out.reserve(s.words.size() * cfg_.k);
    for (int w : s.words)
      for (int b = cfg_.k - 1; b >= 0; --b) out += ((w >> b) & 1) ? '1' : '0';
    return out;
  }

  /// Beta-scaled minimum edit distance of the current prefix to the mode set.
  double state_energy(const State& s) const {
    const std::string x = bits(s);
    int best = edit_distance(x, modes_[0]);
    for (std::size_t i = 1; i < modes_.size() && best > 0; ++i)
      best = std::min(best, edit_distance(x, modes_[i]));
    return cfg_.beta * static_cast<double>(best);
  }

  double transition_energy(const State& s, const State& t) const {
    if (t.words.size() != s.words.size() + 1 ||
        !std::equal(s.words.begin(), s.words.end(), t.words.begin()))
      throw std::invalid_argument("bit env: not an edge");
    return state_energy(t) - state_energy(s);
  }

  double log_reward(const State& s) const {
    if (!is_terminal(s)) throw std::invalid_argument("bit env: reward of nonterminal");
    return -state_energy(s);
  }

  void encode(const State& s, std::vector<double>& out) const {
    out.assign(encoding_dim(), 0.0);
    for (std::size_t i = 0; i < s.words.size(); ++i)
      out[i * alphabet() + s.words[i]] = 1.0;
    out[encoding_dim() - 1] =
        static_cast<double>(s.words.size()) / static_cast<double>(word_count());
  }

  std::string key(const State& s) const { return "b" + bits(s); }

  State parse_key(const std::string& k) const {
    if (k.empty() || k[0] != 'b') throw std::invalid_argument("bit env: bad state key " + k);
    const std::string b = k.substr(1);
    if (b.size() % cfg_.k != 0) throw std::invalid_argument("bit env: bad key length " + k);
    State s;
    for (std::size_t i = 0; i < b.size(); i += cfg_.k) {
      int w = 0;
      for (int j = 0; j < cfg_.k; ++j) {
        const char c = b[i + j];
        if (c != '0' && c != '1') throw std::invalid_argument("bit env: bad key " + k);
        w = (w << 1) | (c == '1');
      }
      s.words.push_back(w);
    }
    return s;
  }

  int depth(const State& s) const { return static_cast<int>(s.words.size()); }

  std::uint64_t terminal_count(std::uint64_t cap) const {
    double c = 1.0;
    for (int i = 0; i < word_count(); ++i) {
      c *= static_cast<double>(alphabet());
      if (c > 2.0 * static_cast<double>(cap)) break;
    }
    if (c > static_cast<double>(cap))
      throw std::runtime_error("bit env: terminal count exceeds enumeration cap");
    return static_cast<std::uint64_t>(c + 0.5);
  }

  std::vector<State> enumerate_terminals(std::uint64_t cap) const {
    terminal_count(cap);
    std::vector<State> out;
    State cur;
    enumerate_rec(cur, out);
    return out;
  }

  std::optional<int> terminate_action(const State&) const { return std::nullopt; }

 private:
  void enumerate_rec(State& cur, std::vector<State>& out) const {
    if (is_terminal(cur)) {
      out.push_back(cur);
      return;
    }
    for (int w = 0; w < alphabet(); ++w) {
      cur.words.push_back(w);
      enumerate_rec(cur, out);
      cur.words.pop_back();
    }
  }

  BitSeqEnvConfig cfg_;
  std::vector<std::string> modes_;
};

}  // namespace gfn
