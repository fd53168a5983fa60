#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "incepse/errors.hpp"
#include "incepse/model.hpp"
#include "incepse/ops.hpp"
#include "oracles.hpp"

using namespace incepse;
namespace md = incepse::model;

namespace {

md::IncepSEConfig mini_config() {
  md::IncepSEConfig c;
  c.input_channels = 12;
  c.depth = 2;
  c.branch_channels = 4;
  c.bottleneck_channels = 4;
  c.se_reduction = 2;
  c.num_classes = 2;
  c.dropout_p = 0.0;
  return c;
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "incepse_model_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

double weighted_sum(Tape* tape, const Tensor& t, const Tensor& w, Tensor* out = nullptr) {
  Tensor prod = ops::mul(tape, t, w);
  std::vector<int> axes;
  for (int i = 0; i < t.rank(); ++i) axes.push_back(i);
  Tensor s = ops::reduce(tape, ops::Reduce::Sum, prod, axes);
  if (out) *out = s;
  return s.at(0);
}

} // namespace

TEST_CASE("se_block with zeroed second linear gates uniformly at 0.5") {
  Rng rng(11);
  md::SEParams p;
  p.fc1.weight = oracles::rand_tensor(rng, {2, 4});
  p.fc1.bias = oracles::rand_tensor(rng, {2});
  p.fc2.weight = Tensor::zeros({4, 2});
  p.fc2.bias = Tensor::zeros({4});
  Tensor x = oracles::rand_tensor(rng, {3, 4, 7});
  Tensor y = md::se_block(nullptr, x, p);
  for (std::int64_t i = 0; i < x.size(); ++i)
    CHECK(y.values()[static_cast<std::size_t>(i)] ==
          0.5 * x.values()[static_cast<std::size_t>(i)]);
}

TEST_CASE("se_block saturating logits suppress the negative channel") {
  md::SEParams p;
  p.fc1.weight = Tensor::zeros({1, 2});
  p.fc1.bias = Tensor::zeros({1});
  p.fc2.weight = Tensor::zeros({2, 1});
  p.fc2.bias = Tensor::from_values({2}, {10.0, -10.0});
  Tensor x = Tensor::full({1, 2, 4}, 1.0);
  Tensor y = md::se_block(nullptr, x, p);
  for (int t = 0; t < 4; ++t) {
    CHECK(std::abs(y.at(0, 0, t) - 1.0) < 1e-4);
    CHECK(std::abs(y.at(0, 1, t)) < 1e-4); // suppressed
  }
}

TEST_CASE("se_block attention weights stay in (0,1) and never amplify") {
  Rng rng(13);
  for (int rep = 0; rep < 10; ++rep) {
    md::SEParams p;
    p.fc1.weight = oracles::rand_tensor(rng, {2, 6}, -2.0, 2.0);
    p.fc1.bias = oracles::rand_tensor(rng, {2}, -2.0, 2.0);
    p.fc2.weight = oracles::rand_tensor(rng, {6, 2}, -2.0, 2.0);
    p.fc2.bias = oracles::rand_tensor(rng, {6}, -2.0, 2.0);
    Tensor x = oracles::rand_tensor(rng, {2, 6, 9});
    Tensor y = md::se_block(nullptr, x, p);
    double in_max = 0.0, out_max = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) {
      in_max = std::max(in_max, std::abs(x.values()[static_cast<std::size_t>(i)]));
      out_max = std::max(out_max, std::abs(y.values()[static_cast<std::size_t>(i)]));
    }
    CHECK(out_max <= in_max);
    // per-element gate strictly inside (0,1)
    for (std::int64_t i = 0; i < x.size(); ++i) {
      const double xi = x.values()[static_cast<std::size_t>(i)];
      const double yi = y.values()[static_cast<std::size_t>(i)];
      if (xi != 0.0) {
        const double gate = yi / xi;
        CHECK(gate > 0.0);
        CHECK(gate < 1.0);
      }
    }
  }
}

TEST_CASE("se_block gradient matches finite differences") {
  Rng rng(17);
  Tensor x = oracles::rand_tensor(rng, {2, 3, 5});
  Tensor probe = oracles::rand_tensor(rng, {2, 3, 5});
  md::SEParams p;
  p.fc1.weight = oracles::rand_tensor(rng, {1, 3});
  p.fc1.bias = oracles::rand_tensor(rng, {1});
  p.fc2.weight = oracles::rand_tensor(rng, {3, 1});
  p.fc2.bias = oracles::rand_tensor(rng, {3});

  Tape tape;
  Tensor lx = x.clone();
  tape.watch(lx);
  tape.watch(p.fc1.weight);
  tape.watch(p.fc1.bias);
  tape.watch(p.fc2.weight);
  tape.watch(p.fc2.bias);
  Tensor out;
  weighted_sum(&tape, md::se_block(&tape, lx, p), probe, &out);
  GradientMap g = tape.backward(out);

  auto eval = [&] { return weighted_sum(nullptr, md::se_block(nullptr, lx, p), probe); };
  for (Tensor* leaf : {&lx, &p.fc1.weight, &p.fc1.bias, &p.fc2.weight, &p.fc2.bias}) {
    Tensor fd = oracles::fd_gradient(eval, *leaf);
    CHECK(oracles::max_rel_err(g.grad(*leaf), fd) < 1e-4);
  }
}

TEST_CASE("incepse_layer standard and final shapes") {
  md::IncepSEConfig cfg; // defaults: branch 32, depth 7
  md::ModelParams m = md::init_params(cfg, 1);
  Rng rng(19);

  Tensor x = oracles::rand_tensor(rng, {2, 12, 250});
  Tensor y = md::incepse_layer(nullptr, x, m.layers[0], 1, nn::Mode::Eval);
  CHECK(y.shape() == std::vector<std::int64_t>{2, 128, 250});

  Tensor x2 = oracles::rand_tensor(rng, {2, 128, 250});
  Tensor y2 = md::incepse_layer(nullptr, x2, m.layers[6], 2, nn::Mode::Eval);
  CHECK(y2.shape() == std::vector<std::int64_t>{2, 256, 125});
}

TEST_CASE("incepse_layer maps zero input to zero output") {
  md::IncepSEConfig cfg = mini_config();
  md::ModelParams m = md::init_params(cfg, 2);
  Tensor x = Tensor::zeros({2, 12, 48});
  Tensor y = md::incepse_layer(nullptr, x, m.layers[0], 1, nn::Mode::Train);
  for (std::int64_t i = 0; i < y.size(); ++i)
    CHECK(y.values()[static_cast<std::size_t>(i)] == 0.0);
}

TEST_CASE("model_forward logit shapes for every task width") {
  Rng rng(23);
  for (int classes : {71, 5}) {
    md::IncepSEConfig cfg = mini_config();
    cfg.num_classes = classes;
    md::ModelParams m = md::init_params(cfg, 3);
    Tensor x = oracles::rand_tensor(rng, {3, 12, 100});
    Tensor logits = md::model_forward(nullptr, x, m, nn::Mode::Eval);
    CHECK(logits.shape() == std::vector<std::int64_t>{3, classes});
  }
}

TEST_CASE("model_forward rejects inputs shorter than the largest kernel") {
  md::IncepSEConfig cfg = mini_config();
  md::ModelParams m = md::init_params(cfg, 4);
  Tensor x = Tensor::zeros({1, 12, 38});
  CHECK_THROWS_AS(md::model_forward(nullptr, x, m, nn::Mode::Eval), Error);
}

TEST_CASE("eval-mode forward is bit-identical across calls") {
  Rng rng(29);
  md::IncepSEConfig cfg = mini_config();
  md::ModelParams m = md::init_params(cfg, 5);
  Tensor x = oracles::rand_tensor(rng, {2, 12, 64});
  Tensor a = md::model_forward(nullptr, x, m, nn::Mode::Eval);
  Tensor b = md::model_forward(nullptr, x, m, nn::Mode::Eval);
  for (std::int64_t i = 0; i < a.size(); ++i)
    CHECK(a.values()[static_cast<std::size_t>(i)] == b.values()[static_cast<std::size_t>(i)]);
}

TEST_CASE("init_params determinism and distribution") {
  md::IncepSEConfig cfg; // default
  md::ModelParams a = md::init_params(cfg, 42);
  md::ModelParams b = md::init_params(cfg, 42);
  bool identical = true;
  md::for_each_tensor(a, [&](const std::string& name, Tensor& ta) {
    md::for_each_tensor(b, [&](const std::string& nb, Tensor& tb) {
      if (nb != name) return;
      for (std::int64_t i = 0; i < ta.size(); ++i)
        if (ta.values()[static_cast<std::size_t>(i)] != tb.values()[static_cast<std::size_t>(i)])
          identical = false;
    });
  });
  CHECK(identical);

  // biases exactly zero, gammas exactly one
  md::for_each_param(a, [&](const std::string& name, Tensor& t) {
    if (name.find("bias") != std::string::npos || name.find("beta") != std::string::npos)
      for (std::int64_t i = 0; i < t.size(); ++i)
        CHECK(t.values()[static_cast<std::size_t>(i)] == 0.0);
    if (name.find("gamma") != std::string::npos)
      for (std::int64_t i = 0; i < t.size(); ++i)
        CHECK(t.values()[static_cast<std::size_t>(i)] == 1.0);
  });

  // empirical std of a large conv within 20% of sqrt(2/fan_in)
  const Tensor& w = a.layers[1].branch[2].weight; // [32,32,39]
  REQUIRE(w.size() >= 10000);
  const double fan_in = 32.0 * 39.0;
  double sum = 0.0, sq = 0.0;
  for (std::int64_t i = 0; i < w.size(); ++i) {
    sum += w.values()[static_cast<std::size_t>(i)];
    sq += w.values()[static_cast<std::size_t>(i)] * w.values()[static_cast<std::size_t>(i)];
  }
  const double mean = sum / static_cast<double>(w.size());
  const double std_emp = std::sqrt(sq / static_cast<double>(w.size()) - mean * mean);
  const double std_theory = std::sqrt(2.0 / fan_in);
  CHECK(std_emp > 0.8 * std_theory);
  CHECK(std_emp < 1.2 * std_theory);
}

TEST_CASE("parameter count matches the independent formula and the locked constant") {
  md::IncepSEConfig cfg; // 12 leads, depth 7, branch 32, classes 71
  auto layer_params = [&cfg](int layer) {
    const std::int64_t cin = cfg.layer_in_channels(layer);
    const std::int64_t bc = cfg.layer_branch_channels(layer);
    const std::int64_t bn = cfg.bottleneck_channels;
    const std::int64_t h = cfg.se_hidden();
    const std::int64_t kernels = cfg.kernel_sizes[0] + cfg.kernel_sizes[1] + cfg.kernel_sizes[2];
    std::int64_t n = 0;
    n += bn * cin * 1 + bn;                        // bottleneck conv + bias
    n += h * bn + h + bn * h + bn;                 // SE linears
    n += bc * bn * kernels;                        // large-kernel branches
    n += bc * cin * cfg.pool_branch_kernel;        // pool-branch conv
    n += 4 * bc * cin * cfg.skip_kernel + 4 * bc;  // skip conv + bias
    n += 2 * (4 * bc);                             // bn gamma/beta
    return n;
  };
  std::int64_t formula = 0;
  for (int i = 0; i < cfg.depth; ++i) formula += layer_params(i);
  formula += static_cast<std::int64_t>(cfg.num_classes) * cfg.final_channels() + cfg.num_classes;

  CHECK(md::param_count(cfg) == formula);
  CHECK(formula == 1033251); // regression lock for the default 12-lead 71-class model
}

TEST_CASE("checkpoint round-trip reproduces forward bit-exactly") {
  Rng rng(31);
  md::IncepSEConfig cfg = mini_config();
  md::ModelParams m = md::init_params(cfg, 7);
  const auto path = temp_file("roundtrip.ckpt");
  md::save_checkpoint(m, path.string());
  md::ModelParams loaded = md::load_checkpoint(path.string());

  Tensor x = oracles::rand_tensor(rng, {2, 12, 80});
  Tensor a = md::model_forward(nullptr, x, m, nn::Mode::Eval);
  Tensor b = md::model_forward(nullptr, x, loaded, nn::Mode::Eval);
  for (std::int64_t i = 0; i < a.size(); ++i)
    CHECK(a.values()[static_cast<std::size_t>(i)] == b.values()[static_cast<std::size_t>(i)]);

  // save(load(file)) is byte-identical to file
  const auto path2 = temp_file("roundtrip2.ckpt");
  md::save_checkpoint(loaded, path2.string());
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
}

TEST_CASE("checkpoint error paths") {
  md::IncepSEConfig cfg = mini_config();
  md::ModelParams m = md::init_params(cfg, 8);
  const auto path = temp_file("errors.ckpt");
  md::save_checkpoint(m, path.string());

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  { // truncation
    const auto tpath = temp_file("truncated.ckpt");
    std::ofstream out(tpath, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_WITH_AS(md::load_checkpoint(tpath.string()),
                         doctest::Contains("unexpected end of checkpoint"), Error);
  }
  { // version mismatch
    std::string v = bytes;
    v[12] = static_cast<char>(99);
    const auto vpath = temp_file("badversion.ckpt");
    std::ofstream out(vpath, std::ios::binary | std::ios::trunc);
    out.write(v.data(), static_cast<std::streamsize>(v.size()));
    out.close();
    CHECK_THROWS_WITH_AS(md::load_checkpoint(vpath.string()),
                         doctest::Contains("version mismatch"), Error);
  }
  { // shape corruption: first record's dims start after magic(12)+version(4)
    // +config(13*i32+f64=60)+count(4)+name_len(4)+name(24)+rank(4)
    const std::size_t dims_off = 12 + 4 + 60 + 4 + 4 + 24 + 4;
    std::string s = bytes;
    s[dims_off] = static_cast<char>(s[dims_off] + 1);
    const auto spath = temp_file("badshape.ckpt");
    std::ofstream out(spath, std::ios::binary | std::ios::trunc);
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
    out.close();
    CHECK_THROWS_WITH_AS(md::load_checkpoint(spath.string()),
                         doctest::Contains("does not match model shape"), Error);
  }
}

TEST_CASE("skip path carries the full gradient when BN gamma is zeroed") {
  Rng rng(37);
  md::IncepSEConfig cfg = mini_config();
  md::ModelParams m = md::init_params(cfg, 9);
  for (std::int64_t i = 0; i < m.layers[0].bn.gamma.size(); ++i)
    m.layers[0].bn.gamma.mutable_data()[i] = 0.0;

  Tensor x = oracles::rand_tensor(rng, {2, 12, 48});
  Tensor probe = oracles::rand_tensor(rng, {2, 16, 48});

  Tape tape;
  Tensor lx = x.clone();
  tape.watch(lx);
  Tensor out;
  weighted_sum(&tape, md::incepse_layer(&tape, lx, m.layers[0], 1, nn::Mode::Train), probe,
               &out);
  Tensor layer_grad = tape.backward(out).grad(lx);

  Tape tape2;
  Tensor lx2 = x.clone();
  tape2.watch(lx2);
  Tensor out2;
  weighted_sum(&tape2, nn::conv1d(&tape2, lx2, m.layers[0].skip), probe, &out2);
  Tensor skip_grad = tape2.backward(out2).grad(lx2);

  for (std::int64_t i = 0; i < layer_grad.size(); ++i)
    CHECK(layer_grad.values()[static_cast<std::size_t>(i)] ==
          skip_grad.values()[static_cast<std::size_t>(i)]);
}

TEST_CASE("miniature model end-to-end gradient check") {
  Rng rng(41);
  md::IncepSEConfig cfg = mini_config();
  md::ModelParams m = md::init_params(cfg, 10);
  Tensor x = oracles::rand_tensor(rng, {2, 12, 48});
  Tensor probe = oracles::rand_tensor(rng, {2, 2});

  auto eval = [&](Tape* tape, Tensor* out) {
    Tensor logits = md::model_forward(tape, x, m, nn::Mode::Train);
    Tensor prod = ops::mul(tape, logits, probe);
    Tensor s = ops::reduce(tape, ops::Reduce::Sum, prod, {0, 1});
    if (out) *out = s;
    return s.at(0);
  };

  Tape tape;
  md::watch_params(tape, m);
  Tensor loss;
  eval(&tape, &loss);
  GradientMap g = tape.backward(loss);

  double worst = 0.0;
  std::string worst_name;
  md::for_each_param(m, [&](const std::string& name, Tensor& t) {
    Tensor fd = oracles::fd_gradient([&] { return eval(nullptr, nullptr); }, t);
    const double err = oracles::max_rel_err(g.grad(t), fd);
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  });
  INFO("worst " << worst_name << " rel err " << worst);
  CHECK(worst < 1e-3);
}
