#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "gfn/rng.hpp"
#include "gfn/tensor.hpp"
#include "support/finite_diff.hpp"

using namespace gfn;

TEST_CASE("tensor shape invariant") {
  CHECK_THROWS_AS(Tensor({1.0, 2.0}, {3}, false), std::invalid_argument);
  auto t = make_leaf({1.0, 2.0, 3.0, 4.0, 5.0, 6.0}, {2, 3});
  CHECK(t->size() == 6);
  CHECK(t->grad.size() == 6);
}

TEST_CASE("backward of w^2") {
  auto w = make_scalar(3.0, true);
  auto loss = square(w);
  backward(loss);
  CHECK(loss->item() == 9.0);
  CHECK(w->grad[0] == Catch::Approx(6.0).margin(1e-15));
}

TEST_CASE("constant loss leaves gradients at zero") {
  auto w = make_scalar(2.0, true);
  auto loss = square(make_scalar(5.0));
  backward(loss);  // nothing to propagate
  CHECK(w->grad[0] == 0.0);
}

TEST_CASE("backward rejects non-scalar loss") {
  auto v = make_leaf({1.0, 2.0}, {2});
  CHECK_THROWS_AS(backward(v), std::invalid_argument);
}

TEST_CASE("linear_combination value and gradient") {
  auto a = make_scalar(2.0, true);
  auto b = make_scalar(-1.5, true);
  auto r = linear_combination({{a, 1.0}, {b, -2.0}}, 0.25);
  CHECK(r->item() == Catch::Approx(2.0 + 3.0 + 0.25));
  backward(square(r));
  const double rv = r->item();
  CHECK(a->grad[0] == Catch::Approx(2.0 * rv));
  CHECK(b->grad[0] == Catch::Approx(-4.0 * rv));
}

TEST_CASE("masked log softmax basics") {
  SECTION("two equal logits, no mask") {
    auto out = masked_log_softmax(make_vector({0.0, 0.0}), {1, 1});
    CHECK(out->values[0] == Catch::Approx(std::log(0.5)).margin(1e-15));
    CHECK(out->values[1] == Catch::Approx(std::log(0.5)).margin(1e-15));
  }
  SECTION("single legal action has log-probability zero") {
    auto out = masked_log_softmax(make_vector({5.0, 0.0}), {1, 0});
    CHECK(out->values[0] == 0.0);
    CHECK(out->values[1] == kNegInf);
  }
  SECTION("all masked throws") {
    CHECK_THROWS_AS(masked_log_softmax(make_vector({1.0, 2.0}), {0, 0}),
                    std::invalid_argument);
  }
}

TEST_CASE("masked log softmax normalizes for random logits and masks") {
  Rng rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<double> logits(n);
    std::vector<char> mask(n, 0);
    for (auto& v : logits) v = rng.uniform(-30.0, 30.0);
    std::size_t legal = 0;
    for (auto& m : mask) legal += (m = rng.below(2) ? 1 : 0);
    if (legal == 0) mask[rng.below(n)] = 1;
    auto out = masked_log_softmax(make_vector(logits), mask);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask[i]) sum += std::exp(out->values[i]);
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("masked log softmax gradient matches finite differences") {
  Rng rng(7);
  std::vector<double> logits(5);
  for (auto& v : logits) v = rng.uniform(-2.0, 2.0);
  auto x = make_leaf(logits, {5});
  const std::vector<char> mask{1, 0, 1, 1, 0};
  // loss = sum of squares of legal log-probs
  auto build = [&]() {
    auto out = masked_log_softmax(x, mask);
    std::vector<TensorPtr> parts;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) parts.push_back(square(index(out, i)));
    return mean_of(parts);
  };
  const auto report = gfn::test::finite_diff_check(
      [&]() { return build()->item(); }, build, {x});
  CHECK(report.max_rel_err < 1e-6);
  CHECK(report.checked == 5);
}

TEST_CASE("slice and index gradients flow to the right places") {
  auto x = make_leaf({1.0, 2.0, 3.0, 4.0}, {4});
  auto s = slice(x, 1, 2);
  auto loss = linear_combination({{index(s, 0), 2.0}, {index(s, 1), -1.0}});
  backward(loss);
  CHECK(x->grad == std::vector<double>{0.0, 2.0, -1.0, 0.0});
}

TEST_CASE("diamond graphs accumulate gradients once per path") {
  auto w = make_scalar(1.5, true);
  auto a = linear_combination({{w, 2.0}});
  auto loss = linear_combination({{a, 1.0}, {a, 1.0}, {w, 1.0}});  // 4w + w
  backward(loss);
  CHECK(loss->item() == Catch::Approx(5.0 * 1.5));
  CHECK(w->grad[0] == Catch::Approx(5.0));
}
