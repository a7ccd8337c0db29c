#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ascent/ops.hpp"
#include "ascent/tensor.hpp"
#include "helpers.hpp"

using namespace ascent;
using testutil::grad_check;
using testutil::random_tensor;

TEST_CASE("elementwise binary ops match finite differences") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng, 0.5, 2.0);  // keep div away from 0
    auto run = [&](auto op) {
      double err = grad_check(
          [&op](const std::vector<Tensor>& in) { return reduce_sum(op(in[0], in[1])); }, {a, b});
      CHECK(err < 1e-4);
    };
    run([](const Tensor& x, const Tensor& y) { return add(x, y); });
    run([](const Tensor& x, const Tensor& y) { return sub(x, y); });
    run([](const Tensor& x, const Tensor& y) { return mul(x, y); });
    run([](const Tensor& x, const Tensor& y) { return div(x, y); });
  }
}

TEST_CASE("suffix broadcasting over leading axes") {
  std::mt19937_64 rng(2);
  Tensor a = random_tensor({4, 3}, rng);
  Tensor row = random_tensor({3}, rng, 0.5, 1.5);

  Tensor out = add(a, row);
  REQUIRE(out.shape() == Shape{4, 3});
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(out[i * 3 + j] == doctest::Approx(a[i * 3 + j] + row[j]));
    }
  }

  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({4, 3}, rng);
    Tensor y = random_tensor({3}, rng, 0.5, 1.5);
    double err = grad_check(
        [](const std::vector<Tensor>& in) { return reduce_sum(mul(in[0], in[1])); }, {x, y});
    CHECK(err < 1e-4);
    err = grad_check(
        [](const std::vector<Tensor>& in) { return reduce_sum(div(in[0], in[1])); }, {x, y});
    CHECK(err < 1e-4);
  }

  CHECK_THROWS_AS(add(random_tensor({4, 3}, rng), random_tensor({2}, rng)), DimensionError&);
}

TEST_CASE("unary ops match finite differences") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    Tensor x = random_tensor({5, 2}, rng, -2.0, 2.0);
    // keep elements away from the relu kink and sqrt domain edge
    for (auto& v : x.data()) {
      if (std::fabs(v) < 0.05) v += 0.1;
    }
    auto run = [&](auto op) {
      double err = grad_check(
          [&op](const std::vector<Tensor>& in) { return reduce_sum(op(in[0])); }, {x});
      CHECK(err < 1e-4);
    };
    run([](const Tensor& t) { return relu(t); });
    run([](const Tensor& t) { return sin_op(t); });
    run([](const Tensor& t) { return cos_op(t); });
    run([](const Tensor& t) { return softplus(t); });
    run([](const Tensor& t) { return scale(t, -1.7); });
    run([](const Tensor& t) { return add_scalar(t, 3.0); });

    Tensor pos = random_tensor({5, 2}, rng, 0.2, 3.0);
    double err = grad_check(
        [](const std::vector<Tensor>& in) { return reduce_sum(sqrt_op(in[0])); }, {pos});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("matmul forward and backward") {
  // 2x3 times 3x2 hand-checked entry
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 2});
  CHECK(c[0] == doctest::Approx(58));
  CHECK(c[3] == doctest::Approx(154));

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({3, 4}, rng);
    Tensor y = random_tensor({4, 2}, rng);
    double err = grad_check(
        [](const std::vector<Tensor>& in) { return reduce_sum(matmul(in[0], in[1])); }, {x, y});
    CHECK(err < 1e-4);
  }
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError&);
}

TEST_CASE("shape ops: transpose, reshape, slices, concat") {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor xt = transpose(x);
  REQUIRE(xt.shape() == Shape{4, 3});
  CHECK(xt[1 * 3 + 2] == x[2 * 4 + 1]);

  for (int trial = 0; trial < 15; ++trial) {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 2}, rng);
    double err = grad_check(
        [](const std::vector<Tensor>& in) {
          Tensor t = transpose(in[0]);
          Tensor r = reshape(t, {2, 6});
          Tensor s = slice_cols(in[0], 1, 2);
          Tensor rows = slice_rows(in[0], 0, 2);
          Tensor cat = concat_cols({s, in[1]});
          return add(add(reduce_sum(mul(r, r)), reduce_sum(cat)), reduce_sum(rows));
        },
        {a, b});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("softmax rows sum to one and gradients check") {
  std::mt19937_64 rng(6);
  Tensor x = random_tensor({3, 5}, rng, -3.0, 3.0);
  Tensor s = softmax(x, 1);
  for (std::size_t i = 0; i < 3; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < 5; ++j) total += s[i * 5 + j];
    CHECK(total == doctest::Approx(1.0));
  }

  // large offsets must not overflow (max-stabilized)
  Tensor big = Tensor::from({1, 3}, {1000.0, 1001.0, 1002.0});
  Tensor sb = softmax(big, 1);
  CHECK(std::isfinite(sb[0]));
  CHECK(sb[2] > sb[1]);

  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor({4, 3}, rng, -2.0, 2.0);
    Tensor w = random_tensor({4, 3}, rng);
    for (std::size_t axis : {std::size_t(0), std::size_t(1)}) {
      double err = grad_check(
          [axis](const std::vector<Tensor>& in) {
            return reduce_sum(mul(softmax(in[0], axis), in[1]));
          },
          {a, w});
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("layer_norm normalizes rows and gradients check") {
  std::mt19937_64 rng(7);
  Tensor x = random_tensor({2, 6}, rng, -2.0, 2.0);
  Tensor gain = Tensor::full({6}, 1.0);
  Tensor bias = Tensor::zeros({6});
  Tensor y = layer_norm(x, gain, bias);
  for (std::size_t i = 0; i < 2; ++i) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 6; ++j) mean += y[i * 6 + j];
    mean /= 6.0;
    for (std::size_t j = 0; j < 6; ++j) var += (y[i * 6 + j] - mean) * (y[i * 6 + j] - mean);
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var / 6.0 == doctest::Approx(1.0).epsilon(1e-3));
  }

  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor({3, 4}, rng, -2.0, 2.0);
    Tensor g = random_tensor({4}, rng, 0.5, 1.5);
    Tensor b = random_tensor({4}, rng);
    Tensor w = random_tensor({3, 4}, rng);
    double err = grad_check(
        [&w](const std::vector<Tensor>& in) {
          return reduce_sum(mul(layer_norm(in[0], in[1], in[2]), w));
        },
        {a, g, b});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("attention with T=1 returns v through the softmax") {
  Tensor q = Tensor::from({1, 4}, {0.3, -0.2, 0.9, 0.1});
  Tensor k = q;
  Tensor v = Tensor::from({1, 4}, {1.0, 2.0, 3.0, 4.0});
  Tensor out = attention(q, k, Tensor::from({1, 4}, std::vector<double>(v.data())), 2);
  REQUIRE(out.shape() == Shape{1, 4});
  for (std::size_t j = 0; j < 4; ++j) CHECK(out[j] == doctest::Approx(double(j + 1)));
}

TEST_CASE("attention gradients check") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor q = random_tensor({4, 6}, rng);
    Tensor k = random_tensor({4, 6}, rng);
    Tensor v = random_tensor({4, 6}, rng);
    Tensor w = random_tensor({4, 6}, rng);
    double err = grad_check(
        [&w](const std::vector<Tensor>& in) {
          return reduce_sum(mul(attention(in[0], in[1], in[2], 3), w));
        },
        {q, k, v});
    CHECK(err < 1e-4);
  }
  CHECK_THROWS_AS(
      attention(Tensor::zeros({2, 5}), Tensor::zeros({2, 5}), Tensor::zeros({2, 5}), 2),
      ConfigError&);
}

TEST_CASE("max_pool_time picks per-feature maxima, routes to first tie") {
  Tensor x = Tensor::from({3, 2}, {1.0, 5.0, 4.0, 5.0, 4.0, 2.0});
  Tensor pooled = max_pool_time(x);
  REQUIRE(pooled.shape() == Shape{2});
  CHECK(pooled[0] == doctest::Approx(4.0));
  CHECK(pooled[1] == doctest::Approx(5.0));

  x.set_requires_grad(true);
  Tensor loss = reduce_sum(max_pool_time(x));
  backward(loss);
  // col 0: rows 1 and 2 tie at 4.0 -> gradient to row 1 only
  // col 1: rows 0 and 1 tie at 5.0 -> gradient to row 0 only
  std::vector<double> expected = {0, 1, 1, 0, 0, 0};
  for (std::size_t i = 0; i < 6; ++i) CHECK(x.grad()[i] == doctest::Approx(expected[i]));

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 15; ++trial) {
    Tensor a = random_tensor({5, 3}, rng);
    Tensor w = random_tensor({3}, rng);
    double err = grad_check(
        [&w](const std::vector<Tensor>& in) { return reduce_sum(mul(max_pool_time(in[0]), w)); },
        {a});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("cumsum0 forward and backward") {
  Tensor x = Tensor::from({3, 2}, {1, 10, 2, 20, 3, 30});
  Tensor c = cumsum0(x);
  std::vector<double> expected = {1, 10, 3, 30, 6, 60};
  for (std::size_t i = 0; i < 6; ++i) CHECK(c[i] == doctest::Approx(expected[i]));

  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 15; ++trial) {
    Tensor a = random_tensor({4, 3}, rng);
    Tensor w = random_tensor({4, 3}, rng);
    double err = grad_check(
        [&w](const std::vector<Tensor>& in) { return reduce_sum(mul(cumsum0(in[0]), w)); }, {a});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("smooth_l1 matches piecewise definition and gradients check") {
  Tensor p = Tensor::from({2}, {0.3, 3.0});
  Tensor t = Tensor::zeros({2});
  // |0.3| < 1 -> 0.5*0.09; |3| >= 1 -> 3 - 0.5; mean over 2 elements
  CHECK(smooth_l1(p, t, 1.0).value() == doctest::Approx((0.5 * 0.09 + 2.5) / 2.0));

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor({4, 3}, rng, -2.0, 2.0);
    Tensor b = random_tensor({4, 3}, rng, -2.0, 2.0);
    // nudge away from the |x| = beta kink
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (std::fabs(std::fabs(a[i] - b[i]) - 1.0) < 0.05) a.data()[i] += 0.1;
    }
    double err = grad_check(
        [](const std::vector<Tensor>& in) { return smooth_l1(in[0], in[1], 1.0); }, {a, b});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("cross_entropy equals -log softmax and is overflow-safe") {
  Tensor logits = Tensor::from({3}, {1.0, 2.0, 3.0});
  const double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(cross_entropy(logits, 1).value() == doctest::Approx(-std::log(std::exp(2.0) / denom)));

  Tensor huge = Tensor::from({2}, {10000.0, 9999.0});
  CHECK(std::isfinite(cross_entropy(huge, 0).value()));

  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor l = random_tensor({5}, rng, -3.0, 3.0);
    double err = grad_check(
        [trial](const std::vector<Tensor>& in) { return cross_entropy(in[0], trial % 5); }, {l});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("backward visits shared subgraphs once and accumulates") {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = mul(x, x);          // x^2
  Tensor z = add(y, mul(y, x));  // x^2 + x^3
  backward(z);
  CHECK(x.grad()[0] == doctest::Approx(2 * 3 + 3 * 9));
}

TEST_CASE("backward errors: non-scalar root, double call, no-grad root") {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(backward(add(x, x)), DimensionError&);

  Tensor s = reduce_sum(x);
  backward(s);
  CHECK_THROWS_AS(backward(s), Error&);

  Tensor c = Tensor::scalar(1.0);
  CHECK_THROWS_AS(backward(c), Error&);
}

TEST_CASE("NoGradGuard suppresses graph recording") {
  Tensor x = Tensor::scalar(2.0, true);
  NoGradGuard guard;
  Tensor y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("randomized deep-graph gradient check, 100 trials") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor a = random_tensor({3, 4}, rng, -1.5, 1.5);
    Tensor b = random_tensor({4, 3}, rng, -1.5, 1.5);
    Tensor g = random_tensor({3}, rng, 0.5, 1.5);
    Tensor bias = random_tensor({3}, rng);
    double err = grad_check(
        [](const std::vector<Tensor>& in) {
          Tensor h = matmul(in[0], in[1]);               // 3x3
          h = layer_norm(h, in[2], in[3]);
          h = attention(h, h, h, 1);
          h = softplus(h);
          return reduce_mean(mul(h, h));
        },
        {a, b, g, bias});
    CHECK(err < 1e-4);
  }
}
