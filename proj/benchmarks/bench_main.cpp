#include <benchmark/benchmark.h>

#include "vsc/approx.hpp"
#include "vsc/optim.hpp"
#include "vsc/refine.hpp"

using namespace vsc;

namespace {

Tensor random_batch(int n, int len, Rng& rng) {
  Tensor x = Tensor::zeros({n, 1, len});
  for (auto& v : x.data()) v = rng.uniform();
  return x;
}

void BM_Conv1dForward(benchmark::State& state) {
  Rng rng(1);
  const int L = static_cast<int>(state.range(0));
  Tensor x = Tensor::uniform({8, 16, L}, 1.0, rng);
  Tensor w = Tensor::uniform({16, 16, 3}, 0.25, rng);
  Tensor b = Tensor::zeros({16});
  for (auto _ : state) {
    Tensor y = conv1d(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(state.iterations() * 8LL * 16 * 16 * 3 * L);
}
BENCHMARK(BM_Conv1dForward)->Arg(128)->Arg(512);

void BM_Conv1dTrainStep(benchmark::State& state) {
  Rng rng(2);
  const int L = static_cast<int>(state.range(0));
  Tensor x = Tensor::uniform({8, 16, L}, 1.0, rng);
  Tensor w = Tensor::uniform({16, 16, 3}, 0.25, rng, true);
  Tensor b = Tensor::zeros({16}, true);
  Tensor t = Tensor::uniform({8, 16, L}, 1.0, rng);
  for (auto _ : state) {
    Tensor loss = mse_loss(conv1d(x, w, b, 1, 1), t);
    backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_Conv1dTrainStep)->Arg(128)->Arg(512);

void BM_ApproxForward(benchmark::State& state) {
  Rng rng(3);
  ApproxConfig cfg = ApproxConfig::desk();
  ApproxNet net(cfg, rng);
  Rng data(4);
  const int batch = static_cast<int>(state.range(0));
  Tensor x = random_batch(batch, 512, data);
  std::vector<Kind> targets(static_cast<std::size_t>(batch), Kind::ABP);
  Tensor d = one_hot_targets(targets);
  Rng fwd(0);
  for (auto _ : state) {
    Tensor y = net.forward(x, d, false, fwd);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_ApproxForward)->Arg(1)->Arg(16);

void BM_ApproxTrainStep(benchmark::State& state) {
  Rng rng(5);
  ApproxConfig cfg = ApproxConfig::desk();
  ApproxNet net(cfg, rng);
  Adam opt;
  Rng data(6);
  const int batch = static_cast<int>(state.range(0));
  Tensor x = random_batch(batch, 512, data);
  Tensor y = random_batch(batch, 512, data);
  std::vector<Kind> targets(static_cast<std::size_t>(batch), Kind::PPG);
  Tensor d = one_hot_targets(targets);
  Rng fwd(0);
  for (auto _ : state) {
    Tensor loss = apx_loss(net.forward(x, d, true, fwd), y);
    backward(loss);
    opt.step(net.params());
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_ApproxTrainStep)->Arg(8)->Arg(16)->Arg(32);

void BM_RefineEncode(benchmark::State& state) {
  Rng rng(7);
  RefineConfig cfg = RefineConfig::desk();
  RefineNet net(cfg, rng);
  Rng data(8);
  Tensor x = random_batch(16, 512, data);
  Rng fwd(0);
  for (auto _ : state) {
    Tensor e = net.encode_waveform(x, Kind::PPG, false, fwd);
    benchmark::DoNotOptimize(e.data().data());
  }
}
BENCHMARK(BM_RefineEncode);

}  // namespace

BENCHMARK_MAIN();
