#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "gfn/nn.hpp"
#include "gfn/rng.hpp"
#include "support/finite_diff.hpp"

using namespace gfn;

TEST_CASE("mlp with zero parameters maps everything to zero") {
  Rng rng(1);
  Mlp net({3, 4, 2}, rng);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    std::fill(net.weight(l)->values.begin(), net.weight(l)->values.end(), 0.0);
    std::fill(net.bias(l)->values.begin(), net.bias(l)->values.end(), 0.0);
  }
  auto out = net.forward(make_vector({0.3, -0.7, 2.0}));
  CHECK(out->values == std::vector<double>{0.0, 0.0});
}

TEST_CASE("identity single-layer net reproduces its input") {
  Rng rng(1);
  Mlp net({2, 2}, rng);
  net.weight(0)->values = {1.0, 0.0, 0.0, 1.0};
  net.bias(0)->values = {0.0, 0.0};
  auto out = net.forward(make_vector({1.0, 2.0}));
  CHECK(out->values[0] == 1.0);
  CHECK(out->values[1] == 2.0);
}

TEST_CASE("random deep net produces finite output of the right arity") {
  Rng rng(42);
  Mlp net({2, 256, 256, 5}, rng);
  std::vector<double> onehot{1.0, 0.0};
  auto out = net.forward(make_vector(onehot));
  REQUIRE(out->size() == 5);
  for (double v : out->values) CHECK(std::isfinite(v));
}

TEST_CASE("mlp rejects input of the wrong width") {
  Rng rng(3);
  Mlp net({3, 2}, rng);
  CHECK_THROWS_AS(net.forward(make_vector({1.0, 2.0})), std::invalid_argument);
}

TEST_CASE("plain forward equals tape forward") {
  Rng rng(11);
  Mlp net({4, 8, 8, 3}, rng);
  Rng input_rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(4);
    for (auto& v : x) v = input_rng.uniform(-2.0, 2.0);
    auto taped = net.forward(make_vector(x));
    std::vector<double> plain;
    net.forward_plain(x, plain);
    REQUIRE(plain.size() == taped->size());
    for (std::size_t i = 0; i < plain.size(); ++i) CHECK(plain[i] == taped->values[i]);
  }
}

TEST_CASE("mlp gradients match central finite differences") {
  Rng rng(5);
  Mlp net({3, 6, 6, 2}, rng);
  const std::vector<double> x{0.4, -1.1, 0.9};
  auto build = [&]() {
    auto out = net.forward(make_vector(x));
    return mean_of({square(index(out, 0)), square(index(out, 1))});
  };
  const auto report = gfn::test::finite_diff_check(
      [&]() { return build()->item(); }, build, net.params());
  CHECK(report.max_rel_err < 1e-4);
  CHECK(report.checked > 50);
}

TEST_CASE("adam first step matches the hand-computed update") {
  auto p = make_leaf({0.5}, {1});
  Adam opt;  // beta1=0.9, beta2=0.999, eps=1e-8
  opt.add_group({p}, 0.01);
  p->grad[0] = 1.0;
  opt.step();
  // m_hat = v_hat = 1 after bias correction, so the update is -lr/(1+eps).
  const double expected = 0.5 - 0.01 / (1.0 + 1e-8);
  CHECK(p->values[0] == Catch::Approx(expected).margin(1e-15));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam with zero gradients is a fixed point") {
  auto p = make_leaf({1.25, -0.75}, {2});
  Adam opt;
  opt.add_group({p}, 0.1);
  for (int i = 0; i < 5; ++i) {
    opt.zero_grad();
    opt.step();
  }
  CHECK(p->values[0] == 1.25);
  CHECK(p->values[1] == -0.75);
  CHECK(opt.step_count() == 5);
}

TEST_CASE("adam updates are antisymmetric in the gradient") {
  auto a = make_leaf({0.0}, {1});
  auto b = make_leaf({0.0}, {1});
  Adam opt;
  opt.add_group({a, b}, 0.05);
  a->grad[0] = 0.7;
  b->grad[0] = -0.7;
  opt.step();
  CHECK(a->values[0] == Catch::Approx(-b->values[0]).margin(1e-18));
  CHECK(a->values[0] < 0.0);
}

TEST_CASE("adam rejects non-finite gradients without touching parameters") {
  auto p = make_leaf({2.0}, {1});
  Adam opt;
  opt.add_group({p}, 0.1);
  p->grad[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(opt.step(), std::runtime_error);
  CHECK(p->values[0] == 2.0);
  CHECK(opt.step_count() == 0);
}

TEST_CASE("adam requires positive learning rate and grad-enabled params") {
  auto p = make_leaf({1.0}, {1});
  Adam opt;
  CHECK_THROWS_AS(opt.add_group({p}, 0.0), std::invalid_argument);
  auto frozen = make_vector({1.0});
  CHECK_THROWS_AS(opt.add_group({frozen}, 0.1), std::invalid_argument);
}
