#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "madis/ops.hpp"

using namespace madis;

TEST_CASE("tensor shape and element access") {
  Tensor<float> t({2, 3, 4, 5});
  CHECK(t.rank() == 4);
  CHECK(t.numel() == 120);
  CHECK(t.array().sum() == 0.0f);
  t.at4(1, 2, 3, 4) = 7.0f;
  CHECK(t[119] == 7.0f);
  CHECK(t.all_finite());
  t[0] = std::numeric_limits<float>::infinity();
  CHECK(!t.all_finite());
  CHECK_THROWS(Tensor<float>({2, 0}));
  CHECK_THROWS(Tensor<float>::from_values({2}, {1.0f, 2.0f, 3.0f}));
}

TEST_CASE("tensor cast round trip") {
  std::mt19937 rng(3);
  Tensor<float> t = Tensor<float>::uniform({4, 4}, rng);
  Tensor<float> back = t.cast<double>().cast<float>();
  CHECK((t.array() == back.array()).all());
}

TEST_CASE("chain rule on a scalar composite") {
  // f(x, y) = sum(relu(x * y + x)); at x=2, y=3: df/dx = y+1 = 4, df/dy = x = 2
  auto x = make_var(Tensor<double>::scalar(2.0), true);
  auto y = make_var(Tensor<double>::scalar(3.0), true);
  auto f = sum(relu(add(mul(x, y), x)));
  CHECK(f->value[0] == doctest::Approx(8.0));
  backward(f);
  CHECK(x->grad[0] == doctest::Approx(4.0));
  CHECK(y->grad[0] == doctest::Approx(2.0));
}

TEST_CASE("gradient accumulates through shared subexpressions") {
  auto x = make_var(Tensor<double>::scalar(3.0), true);
  auto sq = mul(x, x);
  auto f = sum(add(sq, sq));  // 2x^2, df/dx = 4x = 12
  backward(f);
  CHECK(x->grad[0] == doctest::Approx(12.0));
}

TEST_CASE("requires_grad gating skips constant leaves") {
  auto x = make_var(Tensor<double>::scalar(2.0), true);
  auto c = make_var(Tensor<double>::scalar(5.0), false);
  auto f = sum(mul(x, c));
  backward(f);
  CHECK(x->grad[0] == doctest::Approx(5.0));
  CHECK(!c->grad_ready);
}

TEST_CASE("backward rejects non-scalar roots") {
  auto x = make_var(Tensor<double>({2, 2}), true);
  auto y = relu(x);
  CHECK_THROWS(backward(y));
}

TEST_CASE("zero_grad resets a leaf") {
  auto x = make_var(Tensor<double>::scalar(2.0), true);
  backward(sum(mul(x, x)));
  CHECK(x->grad_ready);
  zero_grad(x);
  CHECK(!x->grad_ready);
}

TEST_CASE("elementwise op values") {
  auto a = make_var(Tensor<double>::from_values({3}, {1.0, -2.0, 3.0}));
  auto b = make_var(Tensor<double>::from_values({3}, {4.0, 5.0, -6.0}));
  CHECK(add(a, b)->value[1] == 3.0);
  CHECK(sub(a, b)->value[2] == 9.0);
  CHECK(mul(a, b)->value[0] == 4.0);
  CHECK(scale(a, 2.0)->value[1] == -4.0);
  CHECK(relu(a)->value[1] == 0.0);
  CHECK(sigmoid(make_var(Tensor<double>::scalar(0.0)))->value[0] == 0.5);
  CHECK(sum(a)->value[0] == 2.0);
  CHECK(mean(b)->value[0] == doctest::Approx(1.0));
}

TEST_CASE("reshape and concat preserve element order") {
  auto a = make_var(Tensor<double>::from_values({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0}));
  auto b = make_var(Tensor<double>::from_values({1, 1, 2, 2}, {5.0, 6.0, 7.0, 8.0}));
  auto c = concat_channels(a, b);
  CHECK(c->value.shape() == std::vector<int>{1, 2, 2, 2});
  CHECK(c->value[3] == 4.0);
  CHECK(c->value[4] == 5.0);
  auto r = reshape(c, {2, 4});
  CHECK(r->value[7] == 8.0);
  CHECK_THROWS(reshape(c, {3, 3}));
}

TEST_CASE("select_batch gathers rows in order") {
  auto x = make_var(Tensor<double>::from_values({3, 2}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0}), true);
  auto s = select_batch(x, {2, 0});
  CHECK(s->value[0] == 5.0);
  CHECK(s->value[3] == 2.0);
  backward(sum(s));
  CHECK(x->grad[0] == 1.0);
  CHECK(x->grad[2] == 0.0);
  CHECK(x->grad[4] == 1.0);
  CHECK_THROWS(select_batch(x, {3}));
}

TEST_CASE("fully_connected matches a hand matrix product") {
  // x = [[1,2]], w = [[3,4],[5,6]], b = [10,20] -> [1*3+2*4+10, 1*5+2*6+20]
  auto x = make_var(Tensor<double>::from_values({1, 2}, {1.0, 2.0}));
  auto w = make_var(Tensor<double>::from_values({2, 2}, {3.0, 4.0, 5.0, 6.0}));
  auto b = make_var(Tensor<double>::from_values({2}, {10.0, 20.0}));
  auto y = fully_connected(x, w, b);
  CHECK(y->value[0] == doctest::Approx(21.0));
  CHECK(y->value[1] == doctest::Approx(37.0));
}

TEST_CASE("rows_l2_distance frozen oracle") {
  auto a = make_var(Tensor<double>::from_values({1, 3}, {1.0, 2.0, 2.0}));
  auto b = make_var(Tensor<double>::from_values({1, 3}, {0.0, 0.0, 0.0}));
  CHECK(rows_l2_distance(a, b)->value[0] == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("rows_cosine is exactly scale invariant") {
  std::mt19937 rng(11);
  Tensor<double> a = Tensor<double>::normal({4, 6}, rng);
  Tensor<double> b = Tensor<double>::normal({4, 6}, rng);
  Tensor<double> b2 = b;
  b2.array() *= 37.5;
  auto c1 = rows_cosine(make_var(a), make_var(b));
  auto c2 = rows_cosine(make_var(a), make_var(b2));
  for (int n = 0; n < 4; ++n)
    CHECK(std::abs(c1->value[n] - c2->value[n]) <= 1e-9);
}

TEST_CASE("bce_with_logits matches the naive formula") {
  std::mt19937 rng(5);
  Tensor<double> logits = Tensor<double>::normal({2, 1, 3, 3}, rng);
  Tensor<double> gt = Tensor<double>::uniform({2, 1, 3, 3}, rng);
  gt.array() = (gt.array() > 0.5).cast<double>();
  double expect = 0;
  for (Eigen::Index i = 0; i < logits.numel(); ++i) {
    double p = 1.0 / (1.0 + std::exp(-logits[i]));
    expect += -(gt[i] * std::log(p) + (1 - gt[i]) * std::log(1 - p));
  }
  expect /= double(logits.numel());
  auto loss = bce_with_logits(make_var(logits), gt);
  CHECK(loss->value[0] == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("soft_iou_loss hand case") {
  // pred = [1,0,0,0], gt = [1,1,0,0]: 1 - (1+1)/(1+2-1+1) = 1/3
  auto p = make_var(Tensor<double>::from_values({1, 1, 2, 2}, {1.0, 0.0, 0.0, 0.0}));
  Tensor<double> g = Tensor<double>::from_values({1, 1, 2, 2}, {1.0, 1.0, 0.0, 0.0});
  CHECK(soft_iou_loss(p, g)->value[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}
