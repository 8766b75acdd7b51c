#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "gfn/env_bits.hpp"
#include "gfn/env_set.hpp"
#include "gfn/eval.hpp"
#include "gfn/model.hpp"
#include "gfn/rng.hpp"
#include "support/exact_models.hpp"
#include "support/instances.hpp"
#include "support/oracles.hpp"

using namespace gfn;

TEST_CASE("uniform policy on T1 terminates uniformly") {
  auto env = gfn::test::make_t1();
  TabularGfn uniform(FlowMode::kPlain);  // zero logits = uniform policy
  auto dist = exact_terminal_distribution(uniform, env);
  REQUIRE(dist.probs.size() == 3);
  for (double p : dist.probs) CHECK(p == Catch::Approx(1.0 / 3.0).margin(1e-12));
  CHECK(std::abs(dist.total() - 1.0) < 1e-9);
}

TEST_CASE("exact distribution equals the factorial brute-force oracle") {
  SetEnvConfig cfg;
  cfg.universe_size = 5;
  cfg.target_size = 3;
  cfg.seed = 8;
  SetEnv env(cfg);
  GfnModelConfig mc;
  mc.hidden = 16;
  MlpGfn model(env, mc, 21);

  auto dist = exact_terminal_distribution(model, env);
  CHECK(std::abs(dist.total() - 1.0) < 1e-9);

  auto pf = [&](const std::vector<int>& current, int action) {
    SetState s{current};
    const auto h = model.plain_heads(env, s);
    return std::exp(h.log_pf[static_cast<std::size_t>(action)]);
  };
  for (std::size_t i = 0; i < dist.keys.size(); ++i) {
    const auto x = env.parse_key(dist.keys[i]);
    const double brute = gfn::test::permutation_marginal(x.chosen, pf);
    CHECK(dist.probs[i] == Catch::Approx(brute).margin(1e-12));
  }
}

TEST_CASE("bit terminal probability is the product over word choices") {
  auto env = gfn::test::make_tiny_bits();  // n=8, k=4
  GfnModelConfig mc;
  mc.hidden = 12;
  MlpGfn model(env, mc, 3);
  auto dist = exact_terminal_distribution(model, env);
  CHECK(std::abs(dist.total() - 1.0) < 1e-9);

  for (std::size_t i = 0; i < dist.keys.size(); i += 37) {
    const auto x = env.parse_key(dist.keys[i]);
    double prob = 1.0;
    auto s = env.initial_state();
    for (int w : x.words) {
      prob *= std::exp(model.plain_heads(env, s).log_pf[static_cast<std::size_t>(w)]);
      s = env.apply(s, w);
    }
    CHECK(dist.probs[i] == Catch::Approx(prob).margin(1e-12));
  }
}

TEST_CASE("target distribution on T1 and symmetry cases") {
  auto env = gfn::test::make_t1();
  auto target = target_distribution(env);
  REQUIRE(target.keys == std::vector<std::string>{"s0-1", "s0-2", "s1-2"});
  CHECK(target.probs[0] == Catch::Approx(1.0 / 7.0).margin(1e-12));
  CHECK(target.probs[1] == Catch::Approx(4.0 / 7.0).margin(1e-12));
  CHECK(target.probs[2] == Catch::Approx(2.0 / 7.0).margin(1e-12));

  SetEnvConfig flat;
  flat.universe_size = 6;
  flat.target_size = 3;
  flat.element_energies.assign(6, 0.25);
  SetEnv flat_env(flat);
  auto uniform_target = target_distribution(flat_env);
  for (double p : uniform_target.probs)
    CHECK(p == Catch::Approx(1.0 / 20.0).margin(1e-12));

  // scaling beta reorders nothing
  SetEnvConfig hot = gfn::test::make_t1().config();
  hot.element_energies = {0.0, std::log(2.0), -std::log(2.0)};
  hot.beta = 3.0;
  SetEnv hot_env(hot);
  auto hot_target = target_distribution(hot_env);
  const auto argmax = [](const TerminalDistribution& d) {
    std::size_t best = 0;
    for (std::size_t i = 0; i < d.probs.size(); ++i)
      if (d.probs[i] > d.probs[best]) best = i;
    return d.keys[best];
  };
  CHECK(argmax(hot_target) == argmax(target));
}

TEST_CASE("l1 distance basics") {
  TerminalDistribution p{{"a", "b"}, {0.5, 0.5}};
  TerminalDistribution q{{"a", "b"}, {1.0, 0.0}};
  CHECK(l1_distance(p, p) == 0.0);
  CHECK(l1_distance(p, q) == Catch::Approx(1.0));
  TerminalDistribution disjoint1{{"a", "b"}, {1.0, 0.0}};
  TerminalDistribution disjoint2{{"a", "b"}, {0.0, 1.0}};
  CHECK(l1_distance(disjoint1, disjoint2) == Catch::Approx(2.0));
  TerminalDistribution other{{"a", "c"}, {0.5, 0.5}};
  CHECK_THROWS_AS(l1_distance(p, other), std::invalid_argument);
}

TEST_CASE("top-k average reward over unique samples") {
  std::vector<SampleRecord> log{{"x", 2.0, 0}, {"y", 1.0, 1}, {"z", 0.5, 2}};
  CHECK(top_k_avg_reward(log, 2).value == Catch::Approx(1.5));
  CHECK(!top_k_avg_reward(log, 2).fewer_than_k);

  // duplicates of the best state collapse
  log.push_back({"x", 2.0, 3});
  log.push_back({"x", 2.0, 4});
  CHECK(top_k_avg_reward(log, 2).value == Catch::Approx(1.5));

  const auto flagged = top_k_avg_reward(log, 10);
  CHECK(flagged.fewer_than_k);
  CHECK(flagged.value == Catch::Approx((2.0 + 1.0 + 0.5) / 3.0));

  CHECK_THROWS_AS(top_k_avg_reward({}, 3), std::invalid_argument);
}

TEST_CASE("mode counting by reward threshold and by mode-set matching") {
  auto env = gfn::test::make_t1();
  std::vector<SampleRecord> log{{"s0-1", 0.5, 0}, {"s0-2", 2.0, 1}, {"s1-2", 1.0, 2},
                                {"s0-2", 2.0, 3}};
  ModeCriterion rho;
  rho.reward_threshold = 1.5;
  CHECK(count_modes(log, rho, env) == 1);  // only {0,2} with R = 2
  CHECK(count_modes(std::vector<SampleRecord>{}, rho, env) == 0);

  BitSeqEnvConfig bc;
  bc.n = 8;
  bc.k = 4;
  bc.modes = {"00000000", "11111111", "01010101"};
  BitSeqEnv bits(bc);
  ModeCriterion delta;
  delta.match_radius = 0;
  std::vector<SampleRecord> blog;
  for (const auto& m : bits.modes()) blog.push_back({"b" + m, 1.0, 0});
  CHECK(count_modes(blog, delta, bits) == 3);

  delta.match_radius = 2;
  std::vector<SampleRecord> near{{"b00000011", 1.0, 0}};
  CHECK(count_modes(near, delta, bits) == 1);
}

TEST_CASE("spearman agrees with the pairwise oracle") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == Catch::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {9, 7, 5, 3}) == Catch::Approx(-1.0));
  CHECK_THROWS_AS(spearman({1.0}, {2.0}), std::invalid_argument);

  Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + rng.below(10);
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = static_cast<double>(rng.below(5));  // ties likely
    for (auto& v : y) v = rng.uniform(-1.0, 1.0);
    CHECK(spearman(x, y) ==
          Catch::Approx(gfn::test::pairwise_spearman(x, y)).margin(1e-12));
  }
}

TEST_CASE("spearman_log ranks exact likelihoods against rewards") {
  auto env = gfn::test::make_t1();
  const auto flows = flow_oracle(env, uniform_backward_policy(env));
  auto model = gfn::test::exact_plain_model(env, flows);
  std::vector<std::string> all{"s0-1", "s0-2", "s1-2"};
  CHECK(spearman_log(model, env, all) == Catch::Approx(1.0).margin(1e-12));
  CHECK_THROWS_AS(spearman_log(model, env, {"s0-1"}), std::invalid_argument);
}

TEST_CASE("flow oracle: F(s0) = Z and the T1 hand value") {
  auto env = gfn::test::make_t1();
  const auto flows = flow_oracle(env, uniform_backward_policy(env));
  CHECK(flows.at("s") == Catch::Approx(3.5).margin(1e-12));       // Z
  CHECK(flows.at("s0") == Catch::Approx(1.25).margin(1e-12));     // (0.5 + 2)/2
}

TEST_CASE("flow oracle equals the direct path-sum over terminals") {
  auto env = gfn::test::make_t1();
  const auto flows = flow_oracle(env, uniform_backward_policy(env));

  // independent route: F(s) = sum over terminals x >= s of P_B(s|x) R(x),
  // where P_B(s|x) accumulates one-step uniform backward probabilities over
  // all backward paths from x to s.
  auto backward_mass = [&](const SetState& from_terminal, const std::string& to_key) {
    double total = 0.0;
    auto dfs = [&](auto&& self, const SetState& s, double mass) -> void {
      if (env.key(s) == to_key) {
        total += mass;
        return;
      }
      if (s.chosen.empty()) return;
      const auto parents = env.parents(s);
      for (const auto& p : parents)
        self(self, p, mass / static_cast<double>(parents.size()));
    };
    dfs(dfs, from_terminal, 1.0);
    return total;
  };

  for (const auto& s : flows.space.states) {
    double direct = 0.0;
    for (const auto& x : env.enumerate_terminals(100)) {
      bool superset = true;
      for (int e : s.chosen) superset = superset && x.contains(e);
      if (!superset) continue;
      direct += backward_mass(x, env.key(s)) * std::exp(env.log_reward(x));
    }
    CHECK(flows.at(env.key(s)) == Catch::Approx(direct).margin(1e-12));
  }
}

TEST_CASE("oracle-derived policy satisfies detailed balance and hits the target") {
  auto env = gfn::test::make_t1();
  const auto flows = flow_oracle(env, uniform_backward_policy(env));
  auto model = gfn::test::exact_plain_model(env, flows);

  // Eq-1 residual at every edge, straight from plain heads
  for (const auto& s : flows.space.states) {
    if (env.is_terminal(s)) continue;
    const auto hs = model.plain_heads(env, s);
    for (int a : env.legal_actions(s)) {
      const auto child = env.apply(s, a);
      const auto hc = model.plain_heads(env, child);
      const double residual = hs.log_flow + hs.log_pf[static_cast<std::size_t>(a)] -
                              hc.log_flow -
                              hc.log_pb[static_cast<std::size_t>(
                                  env.parent_slot_for_action(a))];
      CHECK(std::abs(residual) < 1e-12);
    }
  }

  // forward-looking oracle flow satisfies the forward-looking constraint
  auto fl = gfn::test::exact_fl_model(env, flows);
  for (const auto& s : flows.space.states) {
    if (env.is_terminal(s)) continue;
    const auto hs = fl.plain_heads(env, s);
    for (int a : env.legal_actions(s)) {
      const auto child = env.apply(s, a);
      const auto hc = fl.plain_heads(env, child);
      const double residual =
          hs.log_flow + hs.log_pf[static_cast<std::size_t>(a)] - hc.log_flow -
          hc.log_pb[static_cast<std::size_t>(env.parent_slot_for_action(a))] +
          env.transition_energy(s, child);
      CHECK(std::abs(residual) < 1e-12);
    }
  }

  // the DB-exact sampler matches R/Z exactly
  auto dist = exact_terminal_distribution(model, env);
  auto target = target_distribution(env);
  CHECK(l1_distance(dist, target) < 1e-12);
}

TEST_CASE("exact distribution normalizes at random parameters") {
  auto env = gfn::test::make_t1();
  Rng seeds(606);
  for (int draw = 0; draw < 10; ++draw) {
    MlpGfn model(env, GfnModelConfig{12, 2, FlowMode::kPlain, BackwardMode::kLearned},
                 seeds.next());
    auto dist = exact_terminal_distribution(model, env);
    CHECK(std::abs(dist.total() - 1.0) < 1e-9);
  }
}

TEST_CASE("enumeration caps refuse oversized instances") {
  SetEnvConfig cfg;
  cfg.universe_size = 30;
  cfg.target_size = 15;
  cfg.seed = 2;
  SetEnv env(cfg);
  CHECK_THROWS_AS(enumerate_space(env, 1000), std::runtime_error);
  CHECK_THROWS_AS(target_distribution(env, 1000), std::runtime_error);
  CHECK_THROWS_AS(flow_oracle(env, uniform_backward_policy(env), 1000),
                  std::runtime_error);
}
