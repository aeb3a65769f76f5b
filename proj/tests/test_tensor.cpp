#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "vsc/tensor.hpp"

using namespace vsc;

namespace {

Tensor randn(Shape shape, Rng& rng, bool requires_grad = true) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("polynomial derivative: f(x)=x^2 at x=3 gives 6") {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor loss = square(x);
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar and detached losses") {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(backward(square(x)), std::invalid_argument);
  Tensor c = Tensor::scalar(1.0);
  CHECK_THROWS_AS(backward(c), std::invalid_argument);
}

TEST_CASE("backward is deterministic for fixed input") {
  Rng rng(11);
  Tensor x = randn({3, 5}, rng);
  auto run = [&]() {
    Tensor loss = mean_all(square(gelu(x)));
    backward(loss);
    return x.grad();
  };
  auto g1 = run();
  auto g2 = run();
  CHECK(g1 == g2);
}

TEST_CASE("elementwise binary ops and broadcast gradients") {
  Rng rng(42);
  Tensor a = randn({3, 4}, rng);
  Tensor b = randn({3, 4}, rng);
  for (auto& v : b.data()) v += 3.0;  // keep divisors away from zero
  gradcheck::check_leaf(a, [&] { return mean_all(mul(add(a, b), sub(a, b))); });
  gradcheck::check_leaf(b, [&] { return mean_all(div(a, b)); });

  Tensor row = randn({3, 1}, rng);
  gradcheck::check_leaf(row, [&] { return mean_all(mul(a, row)); });
  gradcheck::check_leaf(a, [&] { return mean_all(sub(a, row)); });
  Tensor mat = randn({4}, rng);
  gradcheck::check_leaf(mat, [&] { return mean_all(add(a, mat)); });

  CHECK_THROWS_AS(add(randn({2, 3}, rng), randn({2, 4}, rng)), std::invalid_argument);
}

TEST_CASE("unary op gradients") {
  Rng rng(7);
  Tensor x = randn({2, 6}, rng);
  for (auto& v : x.data()) v = 0.5 + std::fabs(v);  // positive domain
  gradcheck::check_leaf(x, [&] { return sum_all(log_t(x)); });
  gradcheck::check_leaf(x, [&] { return sum_all(sqrt_t(x)); });
  gradcheck::check_leaf(x, [&] { return sum_all(exp_t(mul_scalar(x, 0.3))); });

  Tensor y = randn({3, 5}, rng);
  gradcheck::check_leaf(y, [&] { return mean_all(leaky_relu(y, 0.01)); });
  gradcheck::check_leaf(y, [&] { return mean_all(gelu(y)); });
  gradcheck::check_leaf(y, [&] { return mean_all(abs_t(add_scalar(y, 0.1))); });
  gradcheck::check_leaf(y, [&] { return mean_all(square(neg(y))); });
}

TEST_CASE("matmul family gradients") {
  Rng rng(1);
  Tensor a = randn({3, 4}, rng);
  Tensor b = randn({4, 5}, rng);
  gradcheck::check_leaf(a, [&] { return mean_all(matmul(a, b)); });
  gradcheck::check_leaf(b, [&] { return mean_all(square(matmul(a, b))); });

  Tensor c = randn({3, 4}, rng);
  gradcheck::check_leaf(c, [&] { return mean_all(square(matmul_nt(a, c))); });

  Tensor ba = randn({2, 3, 4}, rng);
  Tensor bb = randn({2, 4, 3}, rng);
  gradcheck::check_leaf(ba, [&] { return mean_all(square(bmm(ba, bb))); });
  gradcheck::check_leaf(bb, [&] { return mean_all(square(bmm(ba, bb))); });

  CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
}

TEST_CASE("linear layer gradients incl. bias") {
  Rng rng(2);
  Tensor x = randn({2, 3, 6}, rng);
  Tensor w = randn({4, 6}, rng);
  Tensor b = randn({4}, rng);
  auto loss = [&] { return mean_all(square(linear(x, w, b))); };
  gradcheck::check_leaf(x, loss);
  gradcheck::check_leaf(w, loss);
  gradcheck::check_leaf(b, loss);
}

TEST_CASE("conv1d gradients for arbitrary kernel/stride/padding") {
  Rng rng(3);
  for (auto [stride, pad, k] : {std::tuple{1, 1, 3}, {2, 0, 2}, {1, 2, 5}, {3, 1, 4}}) {
    Tensor x = randn({2, 3, 12}, rng);
    Tensor w = randn({4, 3, k}, rng);
    Tensor b = randn({4}, rng);
    auto loss = [&, stride = stride, pad = pad] {
      return mean_all(square(conv1d(x, w, b, stride, pad)));
    };
    gradcheck::check_leaf(x, loss);
    gradcheck::check_leaf(w, loss);
    gradcheck::check_leaf(b, loss);
  }
}

TEST_CASE("conv1d MSE gradient matches finite differences (spec example)") {
  Rng rng(5);
  Tensor x = randn({1, 2, 8}, rng, false);
  Tensor w = randn({1, 2, 3}, rng);
  Tensor b = Tensor::zeros({1}, true);
  Tensor y = randn({1, 1, 8}, rng, false);
  auto loss = [&] { return mse_loss(conv1d(x, w, b, 1, 1), y); };
  gradcheck::check_leaf(w, loss, 1e-5, 1e-4);
  gradcheck::check_leaf(b, loss, 1e-5, 1e-4);
}

TEST_CASE("transposed conv gradients") {
  Rng rng(4);
  for (auto [stride, pad, k] : {std::tuple{2, 0, 2}, {1, 1, 3}, {4, 0, 4}}) {
    Tensor x = randn({2, 3, 6}, rng);
    Tensor w = randn({3, 2, k}, rng);
    Tensor b = randn({2}, rng);
    auto loss = [&, stride = stride, pad = pad] {
      return mean_all(square(conv1d_transpose(x, w, b, stride, pad)));
    };
    gradcheck::check_leaf(x, loss);
    gradcheck::check_leaf(w, loss);
    gradcheck::check_leaf(b, loss);
  }
}

TEST_CASE("maxpool and upsampling gradients") {
  Rng rng(6);
  Tensor x = randn({2, 3, 10}, rng);
  gradcheck::check_leaf(x, [&] { return mean_all(square(maxpool1d(x, 2, 2))); });
  gradcheck::check_leaf(x, [&] { return mean_all(square(upsample_nearest2(x))); });
  gradcheck::check_leaf(x, [&] { return mean_all(square(upsample_linear2(x))); });

  Tensor m = Tensor::from({1, 1, 4}, {1.0, 5.0, 2.0, 2.0});
  Tensor p = maxpool1d(m, 2, 2);
  CHECK(p.data() == std::vector<double>{5.0, 2.0});
}

TEST_CASE("normalization gradients (instance/layer/adain chain)") {
  Rng rng(8);
  Tensor x = randn({2, 3, 8}, rng);
  gradcheck::check_leaf(x, [&] { return mean_all(square(instance_norm_lastdim(x))); }, 1e-5, 1e-4);
  gradcheck::check_leaf(x, [&] { return mean_all(square(layer_norm_lastdim(x))); }, 1e-5, 1e-4);

  Tensor g = randn({2, 3}, rng);
  Tensor b = randn({2, 3}, rng);
  auto loss = [&] { return mean_all(square(adain(x, g, b))); };
  gradcheck::check_leaf(x, loss, 1e-5, 1e-4);
  gradcheck::check_leaf(g, loss, 1e-5, 1e-4);
  gradcheck::check_leaf(b, loss, 1e-5, 1e-4);
}

TEST_CASE("AdaIN mu/sigma chain matches finite differences within 1e-5") {
  // f(x) = sum(AdaIN(x, gamma=0, beta=0)); the normalize-recenter chain makes
  // the gradient vanish identically, and analytic vs central differences must
  // agree to 1e-5 on both the constant and the generic input.
  Tensor g = Tensor::zeros({1, 2});
  Tensor b = Tensor::zeros({1, 2});

  Tensor xc = Tensor::full({1, 2, 8}, 5.0, true);
  Tensor loss_c = sum_all(adain(xc, g, b));
  CHECK(loss_c.item() == doctest::Approx(0.0).epsilon(1e-12));
  backward(loss_c);
  for (double gv : xc.grad()) CHECK(std::fabs(gv) < 1e-12);

  Rng rng(9);
  Tensor x = randn({1, 2, 8}, rng);
  auto make_loss = [&] { return sum_all(adain(x, g, b)); };
  Tensor loss = make_loss();
  backward(loss);
  const auto analytic = x.grad();
  const double eps = 1e-5;
  for (std::size_t i = 0; i < x.data().size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + eps;
    const double lp = make_loss().item();
    x.data()[i] = orig - eps;
    const double lm = make_loss().item();
    x.data()[i] = orig;
    const double fd = (lp - lm) / (2.0 * eps);
    CHECK(std::fabs(analytic[i] - fd) < 1e-5);
  }
}

TEST_CASE("softmax and reductions") {
  Rng rng(10);
  Tensor x = randn({3, 6}, rng);
  gradcheck::check_leaf(x, [&] { return mean_all(square(softmax_lastdim(x))); }, 1e-5, 1e-4);
  gradcheck::check_leaf(x, [&] { return sum_all(mul(x, x)); });
  gradcheck::check_leaf(x, [&] { return mean_all(sum_lastdim(square(x))); });
  gradcheck::check_leaf(x, [&] { return sum_all(mean_lastdim(exp_t(mul_scalar(x, 0.2)))); });
  gradcheck::check_leaf(x, [&] { return sum_all(std_lastdim(x)); }, 1e-5, 1e-4);

  // std matches the population formula
  Tensor sd = std_lastdim(x);
  for (int r = 0; r < 3; ++r) {
    double mu = 0.0, var = 0.0;
    for (int c = 0; c < 6; ++c) mu += x.data()[static_cast<std::size_t>(r) * 6 + c];
    mu /= 6.0;
    for (int c = 0; c < 6; ++c) {
      const double d = x.data()[static_cast<std::size_t>(r) * 6 + c] - mu;
      var += d * d;
    }
    CHECK(sd.data()[static_cast<std::size_t>(r)] ==
          doctest::Approx(std::sqrt(var / 6.0)).epsilon(1e-12));
  }

  Tensor s = softmax_lastdim(x);
  for (int r = 0; r < 3; ++r) {
    double row = 0.0;
    for (int c = 0; c < 6; ++c) row += s.data()[static_cast<std::size_t>(r) * 6 + c];
    CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("shape ops: reshape/concat/slice/transpose/roll") {
  Rng rng(12);
  Tensor a = randn({2, 3, 4}, rng);
  Tensor b = randn({2, 2, 4}, rng);
  auto loss = [&] { return mean_all(square(concat({a, b}, 1))); };
  gradcheck::check_leaf(a, loss);
  gradcheck::check_leaf(b, loss);
  gradcheck::check_leaf(a, [&] { return mean_all(square(slice(a, 2, 1, 2))); });
  gradcheck::check_leaf(a, [&] { return mean_all(square(transpose12(a))); });
  gradcheck::check_leaf(a, [&] { return mean_all(square(roll_lastdim(a, 3))); });
  gradcheck::check_leaf(a, [&] { return mean_all(square(reshape(a, {6, 4}))); });

  // concat/slice round trip
  Tensor c = concat({slice(a, 1, 0, 1), slice(a, 1, 1, 2)}, 1);
  CHECK(c.data() == a.data());

  // roll round trip
  Tensor r = roll_lastdim(roll_lastdim(a, 3), -3);
  CHECK(r.data() == a.data());
}

TEST_CASE("windowed attention helpers and sdpa composite") {
  Rng rng(13);
  const int heads = 2, window = 4;
  Tensor x = randn({2, 8, 8}, rng);  // (N,E,T), E=8 -> hd=4, T=8 -> nW=2
  Tensor split = heads_split_windows(x, heads, window);
  CHECK(split.shape() == Shape{2 * 2 * 2, 4, 4});
  Tensor merged = heads_merge_windows(split, 2, heads, window);
  CHECK(merged.data() == x.data());
  gradcheck::check_leaf(x, [&] {
    return mean_all(square(heads_merge_windows(heads_split_windows(x, heads, window), 2, heads,
                                               window)));
  });

  Tensor q = randn({3, 4, 5}, rng);
  Tensor k = randn({3, 4, 5}, rng);
  Tensor v = randn({3, 4, 5}, rng);
  Tensor mask = Tensor::zeros({4, 4});
  mask.data()[1] = -1e9;  // forbid one pair
  auto loss = [&] { return mean_all(square(sdpa(q, k, v, mask))); };
  gradcheck::check_leaf(q, loss, 1e-5, 1e-4);
  gradcheck::check_leaf(k, loss, 1e-5, 1e-4);
  gradcheck::check_leaf(v, loss, 1e-5, 1e-4);

  // additive window bias: learned bias gets gradients
  Tensor scores = randn({2 * 2 * 2, 4, 4}, rng);
  Tensor bias = randn({2, 4, 4}, rng);
  auto bloss = [&] {
    return mean_all(square(softmax_lastdim(add_window_bias(scores, Tensor(), bias, 2, 2))));
  };
  gradcheck::check_leaf(scores, bloss, 1e-5, 1e-4);
  gradcheck::check_leaf(bias, bloss, 1e-5, 1e-4);
}

TEST_CASE("dropout: train-only, rescaled, gradient consistent with mask") {
  Rng rng(14);
  Tensor x = randn({4, 8}, rng);
  Rng eval_rng(0);
  Tensor same = dropout(x, 0.5, false, eval_rng);
  CHECK(same.data() == x.data());

  gradcheck::check_leaf(x, [&] {
    Rng drop_rng(99);  // identical mask on every rebuild
    return mean_all(square(dropout(x, 0.3, true, drop_rng)));
  });
}

TEST_CASE("embedding mean pooling gradients") {
  Rng rng(15);
  Tensor table = randn({7, 5}, rng);
  std::vector<std::vector<int>> tokens{{0, 1, 2}, {3}, {}, {6, 6, 5, 4}};
  Tensor out = embedding_mean(table, tokens);
  CHECK(out.shape() == Shape{4, 5});
  for (int d = 0; d < 5; ++d) CHECK(out.data()[2 * 5 + d] == 0.0);  // empty list -> zeros
  gradcheck::check_leaf(table, [&] { return mean_all(square(embedding_mean(table, tokens))); });
}

TEST_CASE("loss helpers") {
  Tensor a = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0}, true);
  Tensor b = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(mse_loss(a, b).item() == 0.0);
  CHECK(mae_loss(a, b).item() == 0.0);
  Tensor c = Tensor::from({2, 2}, {0.0, 1.0, 2.0, 3.0});
  CHECK(mse_loss(a, c).item() == doctest::Approx(1.0));
  CHECK(mae_loss(a, c).item() == doctest::Approx(1.0));
  CHECK_THROWS_AS(mse_loss(a, Tensor::from({4}, {1, 2, 3, 4})), std::invalid_argument);
  Rng rng(16);
  Tensor x = randn({3, 4}, rng);
  Tensor t = randn({3, 4}, rng, false);
  gradcheck::check_leaf(x, [&] { return mse_loss(x, t); });
  gradcheck::check_leaf(x, [&] { return mae_loss(x, t); });
}
