#include <benchmark/benchmark.h>

#include "incepse/nn.hpp"
#include "incepse/ops.hpp"
#include "incepse/rng.hpp"
#include "incepse/tape.hpp"

using namespace incepse;

namespace {

Tensor rand_tensor(Rng& rng, std::vector<std::int64_t> shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.mutable_data()[i] = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Conv1dForward(benchmark::State& state) {
  Rng rng(1);
  const std::int64_t k = state.range(0);
  Tensor x = rand_tensor(rng, {8, 32, 1000});
  nn::ConvParams p;
  p.weight = rand_tensor(rng, {32, 32, k});
  p.stride = 1;
  for (auto _ : state) {
    Tensor y = nn::conv1d(nullptr, x, p);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 8 * 32 * 32 * 1000 * k);
}
BENCHMARK(BM_Conv1dForward)->Arg(3)->Arg(9)->Arg(39);

void BM_Conv1dTrainStep(benchmark::State& state) {
  Rng rng(2);
  const std::int64_t k = state.range(0);
  Tensor x = rand_tensor(rng, {8, 32, 1000});
  Tensor w = rand_tensor(rng, {32, 32, k});
  Tensor probe = rand_tensor(rng, {8, 32, 1000});
  for (auto _ : state) {
    Tape tape;
    Tensor lx = x;
    tape.watch(lx);
    Tensor lw = w;
    tape.watch(lw);
    nn::ConvParams p;
    p.weight = lw;
    p.stride = 1;
    Tensor y = nn::conv1d(&tape, lx, p);
    Tensor prod = ops::mul(&tape, y, probe);
    Tensor loss = ops::reduce(&tape, ops::Reduce::Sum, prod, {0, 1, 2});
    GradientMap g = tape.backward(loss);
    benchmark::DoNotOptimize(g.grad(lw).data());
  }
  state.SetItemsProcessed(state.iterations() * 3 * 8 * 32 * 32 * 1000 * k);
}
BENCHMARK(BM_Conv1dTrainStep)->Arg(9)->Arg(39);

void BM_BatchNormTrain(benchmark::State& state) {
  Rng rng(3);
  Tensor x = rand_tensor(rng, {8, 128, 1000});
  nn::BatchNormState s;
  s.gamma = Tensor::full({128}, 1.0);
  s.beta = Tensor::zeros({128});
  s.running_mean = Tensor::zeros({128});
  s.running_var = Tensor::full({128}, 1.0);
  for (auto _ : state) {
    Tensor y = nn::batchnorm1d(nullptr, x, s, nn::Mode::Train);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * x.size());
}
BENCHMARK(BM_BatchNormTrain);

void BM_Matmul(benchmark::State& state) {
  Rng rng(4);
  Tensor a = rand_tensor(rng, {128, 256});
  Tensor b = rand_tensor(rng, {256, 128});
  for (auto _ : state) {
    Tensor c = ops::matmul(nullptr, a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 128 * 256 * 128);
}
BENCHMARK(BM_Matmul);

} // namespace

BENCHMARK_MAIN();
