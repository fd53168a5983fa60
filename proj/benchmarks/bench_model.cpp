#include <benchmark/benchmark.h>

#include "incepse/model.hpp"
#include "incepse/rng.hpp"
#include "incepse/training.hpp"

using namespace incepse;

namespace {

Tensor rand_tensor(Rng& rng, std::vector<std::int64_t> shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.mutable_data()[i] = rng.uniform(-1.0, 1.0);
  return t;
}

model::IncepSEConfig mini_config() {
  model::IncepSEConfig cfg;
  cfg.depth = 2;
  cfg.branch_channels = 8;
  cfg.bottleneck_channels = 8;
  cfg.se_reduction = 2;
  cfg.num_classes = 2;
  cfg.dropout_p = 0.0;
  return cfg;
}

void BM_MiniForwardEval(benchmark::State& state) {
  Rng rng(1);
  model::ModelParams m = model::init_params(mini_config(), 0);
  Tensor x = rand_tensor(rng, {8, 12, 1000});
  for (auto _ : state) {
    Tensor y = model::model_forward(nullptr, x, m, nn::Mode::Eval);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_MiniForwardEval);

void BM_MiniTrainStep(benchmark::State& state) {
  Rng rng(2);
  model::ModelParams m = model::init_params(mini_config(), 0);
  Tensor x = rand_tensor(rng, {8, 12, 1000});
  Tensor y = Tensor::zeros({8, 2});
  for (std::int64_t i = 0; i < y.size(); ++i)
    y.mutable_data()[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
  std::vector<Tensor*> params;
  model::for_each_param(m, [&params](const std::string&, Tensor& t) { params.push_back(&t); });
  training::OptimState optim = training::init_optim(params);
  for (auto _ : state) {
    Tape tape;
    model::watch_params(tape, m);
    Tensor logits = model::model_forward(&tape, x, m, nn::Mode::Train);
    Tensor loss = training::bce_with_logits(&tape, logits, y);
    GradientMap gmap = tape.backward(loss);
    std::vector<Tensor> grads;
    for (Tensor* p : params) grads.push_back(gmap.grad(*p));
    training::clip_global_norm(grads, 0.1);
    training::adamw_step(params, grads, optim, 1e-3, 1e-4);
    benchmark::DoNotOptimize(params[0]->data());
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_MiniTrainStep);

void BM_FullForwardEval(benchmark::State& state) {
  Rng rng(3);
  model::ModelParams m = model::init_params(model::IncepSEConfig{}, 0);
  Tensor x = rand_tensor(rng, {1, 12, 1000});
  for (auto _ : state) {
    Tensor y = model::model_forward(nullptr, x, m, nn::Mode::Eval);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_FullForwardEval);

} // namespace

BENCHMARK_MAIN();
