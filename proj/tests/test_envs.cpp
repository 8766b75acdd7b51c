#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "gfn/edit_distance.hpp"
#include "gfn/env_bits.hpp"
#include "gfn/env_set.hpp"
#include "gfn/rng.hpp"
#include "support/instances.hpp"
#include "support/oracles.hpp"

using namespace gfn;

namespace {

/// Exhaustive DAG walk counting distinct trajectories into each terminal.
template <class Env>
long long count_paths_to(const Env& env, const typename Env::State& target) {
  long long count = 0;
  auto dfs = [&](auto&& self, const typename Env::State& s) -> void {
    if (env.key(s) == env.key(target)) {
      ++count;
      return;
    }
    if (env.is_terminal(s)) return;
    for (int a : env.legal_actions(s)) self(self, env.apply(s, a));
  };
  dfs(dfs, env.initial_state());
  return count;
}

}  // namespace

TEST_CASE("set env initial state and legal actions") {
  auto env = gfn::test::make_t1();
  auto s0 = env.initial_state();
  CHECK(s0.chosen.empty());
  CHECK(env.state_energy(s0) == 0.0);
  CHECK(env.legal_actions(s0).size() == 3);
  auto s1 = env.apply(s0, 0);
  CHECK(env.legal_actions(s1).size() == 2);
  auto s2 = env.apply(s1, 1);
  CHECK(env.is_terminal(s2));
  CHECK_THROWS_AS(env.legal_actions(s2), std::invalid_argument);
}

TEST_CASE("set apply is order-insensitive and rejects repeats") {
  auto env = gfn::test::make_t1();
  auto s0 = env.initial_state();
  auto ab = env.apply(env.apply(s0, 0), 1);
  auto ba = env.apply(env.apply(s0, 1), 0);
  CHECK(ab == ba);
  CHECK(env.key(ab) == "s0-1");
  CHECK_THROWS_AS(env.apply(ab, 0), std::invalid_argument);
  CHECK_THROWS_AS(env.apply(s0, 7), std::invalid_argument);
}

TEST_CASE("set energies add and transitions telescope") {
  SetEnvConfig cfg;
  cfg.universe_size = 4;
  cfg.target_size = 3;
  cfg.element_energies = {0.3, -0.5, 0.1, 0.9};
  cfg.beta = 1.0;
  SetEnv env(cfg);
  auto s = env.apply(env.apply(env.initial_state(), 0), 1);
  CHECK(env.state_energy(s) == Catch::Approx(-0.2).margin(1e-15));
  auto t = env.apply(s, 2);
  CHECK(env.transition_energy(s, t) == Catch::Approx(0.1).margin(1e-15));
  CHECK(env.transition_energy(s, t) + env.state_energy(s) ==
        Catch::Approx(env.state_energy(t)).margin(1e-12));

  // telescoping along a full trajectory hits the terminal energy exactly
  double acc = 0.0;
  auto cur = env.initial_state();
  for (int a : {3, 1, 0}) {
    auto next = env.apply(cur, a);
    acc += env.transition_energy(cur, next);
    cur = next;
  }
  CHECK(acc == Catch::Approx(env.state_energy(cur)).margin(1e-12));
  CHECK_THROWS_AS(env.transition_energy(env.initial_state(), cur), std::invalid_argument);
}

TEST_CASE("set parents enumerate element removals") {
  auto env = gfn::test::make_t1();
  auto ab = env.parse_key("s0-1");
  auto parents = env.parents(ab);
  REQUIRE(parents.size() == 2);
  CHECK(env.key(parents[0]) == "s1");
  CHECK(env.key(parents[1]) == "s0");
  CHECK_THROWS_AS(env.parents(env.initial_state()), std::invalid_argument);
  CHECK(parents.size() == ab.chosen.size());
}

TEST_CASE("set encoding is multi-hot with progress scalar") {
  auto env = gfn::test::make_t1();
  std::vector<double> enc;
  env.encode(env.initial_state(), enc);
  CHECK(enc == std::vector<double>{0.0, 0.0, 0.0, 0.0});
  env.encode(env.parse_key("s0"), enc);
  CHECK(enc == std::vector<double>{1.0, 0.0, 0.0, 0.5});
}

TEST_CASE("encodings are injective over reachable states") {
  SetEnvConfig cfg;
  cfg.universe_size = 5;
  cfg.target_size = 3;
  cfg.seed = 3;
  SetEnv env(cfg);
  std::set<std::vector<double>> seen;
  long long states = 0;
  auto dfs = [&](auto&& self, const SetState& s) -> void {
    std::vector<double> enc;
    env.encode(s, enc);
    seen.insert(enc);
    ++states;
    if (env.is_terminal(s)) return;
    for (int a : env.legal_actions(s))
      if (s.chosen.empty() || a > s.chosen.back()) self(self, env.apply(s, a));
  };
  dfs(dfs, env.initial_state());
  CHECK(static_cast<long long>(seen.size()) == states);

  auto bits = gfn::test::make_tiny_bits();
  std::set<std::vector<double>> bseen;
  long long bstates = 0;
  auto bdfs = [&](auto&& self, const BitSeqState& s) -> void {
    std::vector<double> enc;
    bits.encode(s, enc);
    bseen.insert(enc);
    ++bstates;
    if (bits.is_terminal(s)) return;
    for (int a : bits.legal_actions(s)) self(self, bits.apply(s, a));
  };
  bdfs(bdfs, bits.initial_state());
  CHECK(static_cast<long long>(bseen.size()) == bstates);
}

TEST_CASE("set terminal enumeration counts binomials and respects the cap") {
  SetEnvConfig cfg;
  cfg.universe_size = 6;
  cfg.target_size = 3;
  cfg.seed = 1;
  SetEnv env(cfg);
  auto terminals = env.enumerate_terminals(1000000);
  CHECK(terminals.size() == 20);
  for (const auto& x : terminals) CHECK(env.is_terminal(x));
  std::unordered_set<std::string> keys;
  for (const auto& x : terminals) keys.insert(env.key(x));
  CHECK(keys.size() == 20);
  CHECK_THROWS_AS(env.enumerate_terminals(10), std::runtime_error);
}

TEST_CASE("set trajectory count into a terminal is |S|!") {
  SetEnvConfig cfg;
  cfg.universe_size = 5;
  cfg.target_size = 3;
  cfg.seed = 9;
  SetEnv env(cfg);
  for (const auto& x : env.enumerate_terminals(1000)) {
    CHECK(count_paths_to(env, x) == 6);  // 3!
  }
}

TEST_CASE("duplicate-energy group shares one value") {
  SetEnvConfig cfg;
  cfg.universe_size = 30;
  cfg.target_size = 20;  // group size 2
  cfg.seed = 4;
  SetEnv env(cfg);
  const auto& e = env.element_energies();
  CHECK(e[0] == e[1]);
  CHECK(e[1] != e[2]);
  for (double v : e) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("reward positivity on seeded envs") {
  SetEnvConfig cfg;
  cfg.universe_size = 6;
  cfg.target_size = 3;
  cfg.seed = 12;
  cfg.beta = 2.5;
  SetEnv env(cfg);
  for (const auto& x : env.enumerate_terminals(100))
    CHECK(std::exp(env.log_reward(x)) > 0.0);
}

TEST_CASE("t1 oracle: rewards, Z and target probabilities") {
  auto env = gfn::test::make_t1();
  // enumeration oracle: recompute rewards by brute-force re-summation
  double z = 0.0;
  std::vector<std::pair<std::string, double>> rewards;
  for (const auto& x : env.enumerate_terminals(100)) {
    double raw = 0.0;
    for (int e : x.chosen) raw += env.element_energies()[e];
    const double r = std::exp(-env.config().beta * raw);
    rewards.emplace_back(env.key(x), r);
    z += r;
    CHECK(r == Catch::Approx(std::exp(env.log_reward(x))).margin(1e-15));
  }
  REQUIRE(rewards.size() == 3);
  CHECK(rewards[0].first == "s0-1");
  CHECK(rewards[0].second == Catch::Approx(0.5).margin(1e-12));
  CHECK(rewards[1].first == "s0-2");
  CHECK(rewards[1].second == Catch::Approx(2.0).margin(1e-12));
  CHECK(rewards[2].first == "s1-2");
  CHECK(rewards[2].second == Catch::Approx(1.0).margin(1e-12));
  CHECK(z == Catch::Approx(3.5).margin(1e-12));
  CHECK(rewards[0].second / z == Catch::Approx(1.0 / 7.0).margin(1e-12));
  CHECK(rewards[1].second / z == Catch::Approx(4.0 / 7.0).margin(1e-12));
  CHECK(rewards[2].second / z == Catch::Approx(2.0 / 7.0).margin(1e-12));
}

// ---------------------------------------------------------------------------

TEST_CASE("bit env basics") {
  auto env = gfn::test::make_tiny_bits();  // n=8, k=4
  auto s0 = env.initial_state();
  CHECK(s0.words.empty());
  CHECK(env.legal_actions(s0).size() == 16);
  auto s1 = env.apply(s0, 0b0101);
  CHECK(env.bits(s1) == "0101");
  CHECK(env.legal_actions(s1).size() == 16);
  auto s2 = env.apply(s1, 0b1111);
  CHECK(env.bits(s2) == "01011111");
  CHECK(env.is_terminal(s2));
  auto parents = env.parents(s2);
  REQUIRE(parents.size() == 1);
  CHECK(env.bits(parents[0]) == "0101");
  CHECK_THROWS_AS(env.parents(s0), std::invalid_argument);
}

TEST_CASE("bit terminal enumeration and unique paths") {
  auto env = gfn::test::make_tiny_bits();
  auto terminals = env.enumerate_terminals(1000);
  CHECK(terminals.size() == 256);
  for (const auto& x : terminals) CHECK(env.is_terminal(x));
  CHECK_THROWS_AS(env.enumerate_terminals(100), std::runtime_error);
  CHECK(count_paths_to(env, terminals[17]) == 1);
}

TEST_CASE("edit distance examples and recursive cross-check") {
  CHECK(edit_distance("0101", "0101") == 0);
  CHECK(edit_distance("", "01") == 2);
  CHECK(edit_distance("0000", "0011") == gfn::test::naive_edit_distance("0000", "0011"));
  CHECK(edit_distance("0000", "0011") == 2);

  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    auto random_bits = [&](std::size_t len) {
      std::string s(len, '0');
      for (auto& c : s) c = rng.below(2) ? '1' : '0';
      return s;
    };
    const auto a = random_bits(rng.below(9));
    const auto b = random_bits(rng.below(9));
    CHECK(edit_distance(a, b) == gfn::test::naive_edit_distance(a, b));
  }
}

TEST_CASE("bit state energy is the min edit distance to the mode set") {
  BitSeqEnvConfig cfg;
  cfg.n = 8;
  cfg.k = 4;
  cfg.beta = 1.5;
  cfg.modes = {"00000000"};
  BitSeqEnv env(cfg);

  auto x = env.parse_key("b00000000");
  CHECK(env.state_energy(x) == 0.0);  // distance to itself

  auto prefix = env.parse_key("b0011");
  const double expected = 1.5 * gfn::test::naive_edit_distance("0011", "00000000");
  CHECK(env.state_energy(prefix) == Catch::Approx(expected).margin(1e-15));

  // transition energies telescope up to the initial-state offset
  auto s0 = env.initial_state();
  auto s1 = env.apply(s0, 0b0011);
  auto s2 = env.apply(s1, 0b0000);
  const double sum = env.transition_energy(s0, s1) + env.transition_energy(s1, s2);
  CHECK(sum == Catch::Approx(env.state_energy(s2) - env.state_energy(s0)).margin(1e-12));
}

TEST_CASE("bit mode sets are seeded, distinct and validated") {
  BitSeqEnvConfig cfg;
  cfg.n = 12;
  cfg.k = 4;
  cfg.num_modes = 10;
  cfg.seed = 21;
  BitSeqEnv env(cfg);
  REQUIRE(env.modes().size() == 10);
  std::unordered_set<std::string> uniq(env.modes().begin(), env.modes().end());
  CHECK(uniq.size() == 10);
  for (const auto& m : env.modes()) CHECK(m.size() == 12);

  BitSeqEnv env2(cfg);
  CHECK(env2.modes() == env.modes());  // seed determines the mode set

  cfg.modes = {"000011110000", "111100001111"};
  BitSeqEnv env3(cfg);
  CHECK(env3.modes().size() == 2);
  cfg.modes = {"0001"};
  CHECK_THROWS_AS(BitSeqEnv(cfg), std::invalid_argument);
}

TEST_CASE("dag depth strictly increases along edges") {
  auto env = gfn::test::make_t1();
  auto dfs = [&](auto&& self, const SetState& s) -> void {
    if (env.is_terminal(s)) return;
    for (int a : env.legal_actions(s)) {
      auto t = env.apply(s, a);
      CHECK(env.depth(t) == env.depth(s) + 1);
      self(self, t);
    }
  };
  dfs(dfs, env.initial_state());
}
