#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "incepse/errors.hpp"
#include "incepse/ops.hpp"
#include "incepse/training.hpp"
#include "oracles.hpp"

using namespace incepse;
namespace tr = incepse::training;
namespace md = incepse::model;
namespace fs = std::filesystem;

namespace {

md::IncepSEConfig mini_config() {
  md::IncepSEConfig c;
  c.depth = 2;
  c.branch_channels = 4;
  c.bottleneck_channels = 4;
  c.se_reduction = 2;
  c.num_classes = 2;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "incepse_training_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

data::Dataset small_synth(int records, double noise, std::uint64_t seed, double seconds = 1.2) {
  data::SynthSpec spec;
  spec.num_records = records;
  spec.classes = 2;
  spec.imbalance_ratios = {0.6, 0.4};
  spec.leads = 12;
  spec.seconds = seconds;
  spec.noise_sigma = noise;
  return data::synth_dataset(spec, seed);
}

} // namespace

TEST_CASE("bce_with_logits closed forms and stability") {
  Tensor z0 = Tensor::from_values({1, 1}, {0.0});
  Tensor y1 = Tensor::from_values({1, 1}, {1.0});
  CHECK(tr::bce_with_logits(nullptr, z0, y1).at(0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Tensor z100 = Tensor::from_values({1, 1}, {100.0});
  const double v = tr::bce_with_logits(nullptr, z100, y1).at(0);
  CHECK(std::isfinite(v));
  CHECK(v < 1e-40);

  Tensor zbig = Tensor::from_values({1, 2}, {1e4, -1e4});
  Tensor ybig = Tensor::from_values({1, 2}, {1.0, 0.0});
  CHECK(std::isfinite(tr::bce_with_logits(nullptr, zbig, ybig).at(0)));

  Tensor ybad = Tensor::from_values({1, 1}, {0.5});
  CHECK_THROWS_AS(tr::bce_with_logits(nullptr, z0, ybad), Error);
}

TEST_CASE("bce gradient is sigmoid(z) - y, against finite differences") {
  Rng rng(3);
  Tensor z = oracles::rand_tensor(rng, {3, 4}, -2.0, 2.0);
  Tensor y = Tensor::zeros({3, 4});
  for (std::int64_t i = 0; i < y.size(); ++i)
    y.mutable_data()[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;

  Tape tape;
  Tensor lz = z.clone();
  tape.watch(lz);
  Tensor loss = tr::bce_with_logits(&tape, lz, y);
  Tensor analytic = tape.backward(loss).grad(lz);

  // closed form
  for (std::int64_t i = 0; i < z.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-lz.values()[static_cast<std::size_t>(i)]));
    const double want = (s - y.values()[static_cast<std::size_t>(i)]) / 12.0;
    CHECK(analytic.values()[static_cast<std::size_t>(i)] == doctest::Approx(want).epsilon(1e-12));
  }
  // and finite differences
  Tensor fd = oracles::fd_gradient(
      [&] { return tr::bce_with_logits(nullptr, lz, y).at(0); }, lz);
  CHECK(oracles::max_rel_err(analytic, fd) < 1e-4);
}

TEST_CASE("global norm clipping examples") {
  { // total norm 1 -> scaled to 0.1
    std::vector<Tensor> g = {Tensor::from_values({2}, {0.6, 0.8})};
    tr::ClipResult r = tr::clip_global_norm(g, 0.1);
    CHECK(r.pre_norm == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.scale == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(g[0].at(0) == doctest::Approx(0.06).epsilon(1e-15));
  }
  { // under the cap -> untouched
    std::vector<Tensor> g = {Tensor::from_values({2}, {0.03, 0.04})};
    tr::ClipResult r = tr::clip_global_norm(g, 0.1);
    CHECK(r.scale == 1.0);
    CHECK(g[0].at(0) == 0.03);
  }
  { // two parameters with norms 3 and 4
    std::vector<Tensor> g = {Tensor::from_values({1}, {3.0}), Tensor::from_values({1}, {4.0})};
    tr::ClipResult r = tr::clip_global_norm(g, 0.1);
    CHECK(r.pre_norm == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(r.scale == doctest::Approx(0.02).epsilon(1e-15));
    const double post = std::sqrt(g[0].at(0) * g[0].at(0) + g[1].at(0) * g[1].at(0));
    CHECK(std::abs(post - 0.1) < 1e-12);
  }
}

TEST_CASE("clipping preserves direction to within 1e-12 cosine") {
  Rng rng(7);
  std::vector<Tensor> g = {oracles::rand_tensor(rng, {50}), oracles::rand_tensor(rng, {30})};
  std::vector<Tensor> orig = {g[0].clone(), g[1].clone()};
  tr::ClipResult r = tr::clip_global_norm(g, 0.1);
  REQUIRE(r.scale < 1.0);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t p = 0; p < g.size(); ++p)
    for (std::int64_t i = 0; i < g[p].size(); ++i) {
      const double a = orig[p].values()[static_cast<std::size_t>(i)];
      const double b = g[p].values()[static_cast<std::size_t>(i)];
      dot += a * b;
      na += a * a;
      nb += b * b;
    }
  const double cosine = dot / std::sqrt(na * nb);
  CHECK(cosine > 1.0 - 1e-12);
  // post-clip global norm lands on the cap
  CHECK(std::sqrt(nb) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("adamw first step and pure-decay behavior") {
  { // t=1: update ~ -lr sign(g) - lr wd p
    Tensor p = Tensor::from_values({1}, {2.0});
    std::vector<Tensor*> params = {&p};
    tr::OptimState st = tr::init_optim(params);
    std::vector<Tensor> grads = {Tensor::from_values({1}, {0.5})};
    tr::adamw_step(params, grads, st, 0.01, 0.1);
    const double want = 2.0 - 0.01 * (0.5 / (0.5 + 1e-8)) - 0.01 * 0.1 * 2.0;
    CHECK(p.at(0) == doctest::Approx(want).epsilon(1e-12));
  }
  { // zero gradients, wd > 0: strict exponential shrink
    Tensor p = Tensor::from_values({2}, {1.5, -0.7});
    std::vector<Tensor*> params = {&p};
    tr::OptimState st = tr::init_optim(params);
    std::vector<Tensor> grads = {Tensor::zeros({2})};
    double prev0 = 1.5, prev1 = 0.7;
    for (int t = 0; t < 25; ++t) {
      tr::adamw_step(params, grads, st, 0.05, 0.01);
      CHECK(std::abs(p.at(0)) < prev0);
      CHECK(std::abs(p.at(1)) < prev1);
      prev0 = std::abs(p.at(0));
      prev1 = std::abs(p.at(1));
    }
    CHECK(p.at(0) == doctest::Approx(1.5 * std::pow(1.0 - 0.05 * 0.01, 25)).epsilon(1e-12));
  }
  { // 200 steps on f(theta) = theta^2 from 1.0
    Tensor p = Tensor::from_values({1}, {1.0});
    std::vector<Tensor*> params = {&p};
    tr::OptimState st = tr::init_optim(params);
    for (int t = 0; t < 200; ++t) {
      std::vector<Tensor> grads = {Tensor::from_values({1}, {2.0 * p.at(0)})};
      tr::adamw_step(params, grads, st, 0.1, 0.0);
    }
    CHECK(std::abs(p.at(0)) < 1e-3);
  }
}

TEST_CASE("onecycle closed-form anchors") {
  tr::SchedState s = tr::SchedState::onecycle(1e-2, 1000, 0.3, 25.0, 1e4);
  CHECK(s.onecycle_lr_at(0) == doctest::Approx(4e-4).epsilon(1e-15)); // max_lr/25
  CHECK(s.onecycle_lr_at(300) == 1e-2);                               // peak, exact
  CHECK(s.onecycle_lr_at(1000) == doctest::Approx(1e-6).epsilon(1e-12));
  CHECK(s.onecycle_lr_at(5000) == s.onecycle_lr_at(1000)); // hold after horizon
}

TEST_CASE("onecycle trajectory: continuous, one interior max, stated endpoints") {
  tr::SchedState s = tr::SchedState::onecycle(1e-2, 400, 0.3, 25.0, 1e4);
  double prev = s.onecycle_lr_at(0);
  int maxima = 0;
  double peak = 0.0;
  for (std::int64_t i = 1; i <= 400; ++i) {
    const double cur = s.onecycle_lr_at(i);
    CHECK(std::abs(cur - prev) < 1e-3); // no jumps
    peak = std::max(peak, cur);
    prev = cur;
  }
  for (std::int64_t i = 1; i < 400; ++i) {
    const double l = s.onecycle_lr_at(i - 1), c = s.onecycle_lr_at(i),
                 r = s.onecycle_lr_at(i + 1);
    if (c > l && c > r) ++maxima;
  }
  CHECK(maxima <= 1);
  CHECK(peak == 1e-2);
  CHECK(s.onecycle_lr_at(0) == doctest::Approx(1e-2 / 25.0));
  CHECK(s.onecycle_lr_at(400) == doctest::Approx(1e-2 / 1e4));
}

TEST_CASE("plateau hand-stepped state machine") {
  tr::SchedState s = tr::SchedState::plateau(1e-3, 0.3, 1);
  tr::schedule_lr(s, 1, 0.90); // first value: becomes best
  CHECK(s.current_lr == 1e-3);
  tr::schedule_lr(s, 2, 0.90); // no improvement -> reduce
  CHECK(s.current_lr == doctest::Approx(3e-4).epsilon(1e-12));
  tr::schedule_lr(s, 3, 0.90); // again -> reduce
  CHECK(s.current_lr == doctest::Approx(9e-5).epsilon(1e-12));

  CHECK_THROWS_AS(tr::schedule_lr(s, 4, std::nullopt), Error);
}

TEST_CASE("plateau lr is non-increasing and a power of the factor") {
  Rng rng(11);
  tr::SchedState s = tr::SchedState::plateau(1e-2, 0.3, 2);
  double prev = s.current_lr;
  int reductions = 0;
  double metric = 0.5;
  for (int epoch = 1; epoch <= 30; ++epoch) {
    if (rng.bernoulli(0.4)) metric += 0.01; // occasional improvement
    const double before = s.current_lr;
    tr::schedule_lr(s, epoch, metric);
    CHECK(s.current_lr <= before);
    if (s.current_lr < before) ++reductions;
    prev = s.current_lr;
  }
  CHECK(prev == doctest::Approx(1e-2 * std::pow(0.3, reductions)).epsilon(1e-9));
}

TEST_CASE("table-1 per-task defaults") {
  tr::TrainConfig super = tr::default_config_for_task("super");
  CHECK(super.scheduler == tr::SchedulerKind::OneCycle);
  CHECK(super.sched_epochs == 14);
  CHECK(super.base_lr == 1e-2);
  CHECK(super.epochs == 15);
  CHECK(super.dropout_p == 0.11);
  CHECK(super.clip_norm == 0.1);
  CHECK(super.weight_decay == 1e-4);

  tr::TrainConfig sub = tr::default_config_for_task("sub");
  CHECK(sub.scheduler == tr::SchedulerKind::Plateau);
  CHECK(sub.plateau_factor == 0.3);
  CHECK(sub.plateau_patience == 1);
  CHECK(sub.base_lr == 1e-3);
  CHECK(sub.epochs == 15);
  CHECK(sub.dropout_p == 0.09);

  CHECK(tr::default_config_for_task("all").sched_epochs == 13);
  CHECK(tr::default_config_for_task("all").dropout_p == 0.0);
  CHECK(tr::default_config_for_task("diag").epochs == 18);
  CHECK(tr::default_config_for_task("form").epochs == 25);
  CHECK(tr::default_config_for_task("rhythm").epochs == 20);
  CHECK_THROWS_AS(tr::default_config_for_task("bogus"), Error);
}

TEST_CASE("single-batch overfit drives the loss below 1e-2") {
  data::Dataset d = small_synth(8, 0.15, 21);
  std::vector<std::size_t> all;
  for (std::size_t i = 0; i < d.records.size(); ++i) all.push_back(i);
  data::Batch batch = data::assemble_batch(d, all);

  md::IncepSEConfig cfg = mini_config();
  cfg.dropout_p = 0.0;
  md::ModelParams m = md::init_params(cfg, 5);
  std::vector<Tensor*> params;
  md::for_each_param(m, [&params](const std::string&, Tensor& t) { params.push_back(&t); });
  tr::OptimState optim = tr::init_optim(params);

  double loss_value = 1.0;
  int steps = 0;
  for (; steps < 500 && loss_value >= 1e-2; ++steps) {
    Tape tape;
    md::watch_params(tape, m);
    Tensor logits = md::model_forward(&tape, batch.signals, m, nn::Mode::Train);
    Tensor loss = tr::bce_with_logits(&tape, logits, batch.labels);
    loss_value = loss.at(0);
    GradientMap gmap = tape.backward(loss);
    std::vector<Tensor> grads;
    for (Tensor* p : params) grads.push_back(gmap.grad(*p));
    tr::adamw_step(params, grads, optim, 1e-3, 0.0);
  }
  INFO("loss " << loss_value << " after " << steps << " steps");
  CHECK(loss_value < 1e-2);
}

TEST_CASE("fit is deterministic and honors the best-checkpoint contract") {
  data::Dataset d = small_synth(40, 0.2, 33);
  tr::TrainConfig cfg;
  cfg.task = "synth";
  cfg.scheduler = tr::SchedulerKind::OneCycle;
  cfg.sched_epochs = 2;
  cfg.epochs = 3;
  cfg.base_lr = 2e-3;
  cfg.batch_size = 16;
  cfg.dropout_p = 0.1;
  cfg.seed = 7;

  tr::FitOptions opts;
  opts.model_config = mini_config();

  opts.out_dir = fresh_dir("fit_a").string();
  tr::TrainReport a = tr::fit(cfg, d, opts);
  opts.out_dir = fresh_dir("fit_b").string();
  tr::TrainReport b = tr::fit(cfg, d, opts);

  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].train_loss == b.rows[i].train_loss);
    CHECK(a.rows[i].val_auroc == b.rows[i].val_auroc);
    CHECK(a.rows[i].lr == b.rows[i].lr);
  }
  CHECK(a.test_auroc == b.test_auroc);
  CHECK(a.best_epoch == b.best_epoch);

  // best val equals the column max; checkpoint file exists
  double best = -1.0;
  for (const auto& r : a.rows) best = std::max(best, r.val_auroc);
  CHECK(a.best_val_auroc == best);
  CHECK(fs::exists(a.checkpoint_path));

  // written reports are byte-identical
  const auto pa = fs::path(fresh_dir("rep")) / "a.csv";
  const auto pb = fs::path(pa).parent_path() / "b.csv";
  tr::write_report(a, pa.string());
  tr::write_report(b, pb.string());
  std::ifstream fa(pa), fb(pb);
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);

  // and round-trip through the reader
  tr::TrainReport back = tr::read_report(pa.string());
  CHECK(back.rows.size() == a.rows.size());
  CHECK(back.best_epoch == a.best_epoch);
  CHECK(back.test_auroc == a.test_auroc);
  CHECK(back.seed == a.seed);
}

TEST_CASE("fit aborts on a non-finite loss with diagnostics") {
  data::Dataset d = small_synth(20, 0.1, 41);
  tr::TrainConfig cfg;
  cfg.scheduler = tr::SchedulerKind::Plateau;
  cfg.base_lr = 1e150; // overflow the conv products within the first epoch
  cfg.epochs = 4;
  cfg.batch_size = 4;
  cfg.clip_norm = 0.0; // disabled
  cfg.weight_decay = 0.0;
  cfg.dropout_p = 0.0;
  cfg.seed = 1;
  tr::FitOptions opts;
  opts.model_config = mini_config();
  opts.out_dir = fresh_dir("fit_blowup").string();
  CHECK_THROWS_WITH_AS(tr::fit(cfg, d, opts), doctest::Contains("non-finite loss"), Error);
}
