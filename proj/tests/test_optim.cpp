#include <doctest.h>

#include <fstream>
#include <stdexcept>

#include <cmath>
#include <filesystem>

#include "vsc/checkpoint.hpp"
#include "vsc/optim.hpp"

using namespace vsc;

TEST_CASE("adam with zero gradients is the identity on fresh state") {
  Rng rng(1);
  ParamStore ps;
  Tensor p = ps.create("p", {4}, 0.5, rng);
  const auto before = p.data();
  Adam opt;
  opt.step(ps);  // no gradients present at all
  CHECK(p.data() == before);
}

TEST_CASE("adam first step moves in -sign(g) with bias-corrected magnitude lr") {
  Rng rng(2);
  ParamStore ps;
  Tensor p = ps.create("p", {3}, 0.0, rng);
  p.data() = {1.0, -2.0, 3.0};
  Tensor loss = sum_all(mul(p, Tensor::from({3}, {2.0, -1.0, 0.5})));
  backward(loss);
  Adam opt({1e-3});
  opt.step(ps);
  // First-step Adam update is lr * g/(|g| + eps') ~= lr * sign(g).
  CHECK(p.data()[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
  CHECK(p.data()[1] == doctest::Approx(-2.0 + 1e-3).epsilon(1e-6));
  CHECK(p.data()[2] == doctest::Approx(3.0 - 1e-3).epsilon(1e-6));
}

TEST_CASE("adam reduces a quadratic monotonically") {
  Rng rng(3);
  ParamStore ps;
  Tensor x = ps.create("x", {2}, 0.0, rng);
  x.data() = {3.0, -2.0};
  Adam opt({0.05});
  double prev = 1e300;
  for (int i = 0; i < 50; ++i) {
    Tensor loss = sum_all(square(x));
    const double lv = loss.item();
    CHECK(lv < prev + 1e-12);
    prev = lv;
    backward(loss);
    opt.step(ps);
  }
  CHECK(prev < 9.0);
}

TEST_CASE("grad_map returns named gradients for every parameter") {
  Rng rng(8);
  ParamStore ps;
  Tensor a = ps.create("m.w", {2}, 0.3, rng);
  Tensor b = ps.create("m.unused", {3}, 0.3, rng);
  backward(sum_all(square(a)));
  const auto gm = grad_map(ps.all());
  REQUIRE(gm.size() == 2);
  CHECK(gm[0].first == "m.w");
  CHECK(gm[0].second[0] == doctest::Approx(2.0 * a.data()[0]));
  // parameters unreachable from the loss report zero gradients
  CHECK(gm[1].first == "m.unused");
  CHECK(gm[1].second == std::vector<double>(3, 0.0));
  (void)b;
}

TEST_CASE("gradient clipping caps the global norm") {
  Rng rng(4);
  ParamStore ps;
  Tensor a = ps.create("a", {2}, 0.0, rng);
  a.data() = {3.0, 4.0};
  Tensor loss = sum_all(mul(a, Tensor::from({2}, {30.0, 40.0})));
  backward(loss);
  const double pre = clip_grad_norm(ps, 1.0);
  CHECK(pre == doctest::Approx(50.0));
  double norm = 0.0;
  for (double g : a.grad()) norm += g * g;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("parameter store rejects duplicates and unknown checkpoint entries") {
  Rng rng(5);
  ParamStore ps;
  ps.create("w", {2, 2}, 0.1, rng);
  CHECK_THROWS_AS(ps.create("w", {2}, 0.1, rng), std::invalid_argument);
  CHECK_THROWS_AS(ps.load_values({{"nope", {1.0}}}), std::invalid_argument);
  CHECK_THROWS_AS(ps.load_values({{"w", {1.0}}}), std::invalid_argument);  // size mismatch
}

TEST_CASE("checkpoint round-trips bit-exactly and validates its magic") {
  namespace fs = std::filesystem;
  const std::string dir = std::string(VSC_TEST_TMP) + "/ckpt";
  fs::create_directories(dir);
  Rng rng(6);
  ParamStore ps;
  Tensor a = ps.create("model.layer.w", {3, 4}, 1.0, rng);
  Tensor b = ps.create("model.layer.b", {4}, 2.0, rng);
  const std::string path = dir + "/test.bin";
  save_checkpoint(path, ps);

  CheckpointMap m = read_checkpoint(path);
  CHECK(m.size() == 2);
  CHECK(m.at("model.layer.w").shape == Shape{3, 4});
  CHECK(m.at("model.layer.w").values == a.data());
  CHECK(m.at("model.layer.b").values == b.data());

  // Perturb then reload: exact restoration.
  const auto orig = a.data();
  a.data()[0] += 1.0;
  load_checkpoint(path, ps);
  CHECK(a.data() == orig);

  // Wrong magic is rejected.
  {
    std::ofstream bad(dir + "/bad.bin", std::ios::binary);
    bad << "NOTACKPT anything";
  }
  CHECK_THROWS_AS(read_checkpoint(dir + "/bad.bin"), std::runtime_error);
}
