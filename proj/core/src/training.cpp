#include "incepse/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "incepse/errors.hpp"
#include "incepse/ops.hpp"

namespace incepse::training {

void TrainConfig::validate() const {
  if (epochs < 1) fail_validation("train config: epochs must be >= 1");
  if (batch_size < 1) fail_validation("train config: batch_size must be >= 1");
  if (base_lr <= 0.0) fail_validation("train config: learning rate must be positive");
  if (dropout_p < 0.0 || dropout_p >= 1.0) fail_validation("train config: dropout must be in [0,1)");
  if (weight_decay < 0.0) fail_validation("train config: weight_decay must be >= 0");
  if (scheduler == SchedulerKind::OneCycle && sched_epochs < 1)
    fail_validation("train config: OneCycle needs sched_epochs >= 1");
  if (scheduler == SchedulerKind::Plateau &&
      (plateau_factor <= 0.0 || plateau_factor >= 1.0 || plateau_patience < 1))
    fail_validation("train config: plateau needs factor in (0,1) and patience >= 1");
}

TrainConfig default_config_for_task(const std::string& task) {
  TrainConfig c;
  c.task = task;
  c.clip_norm = 0.1;
  c.weight_decay = 1e-4;
  c.batch_size = 128;
  if (task == "all") {
    c.scheduler = SchedulerKind::OneCycle;
    c.sched_epochs = 13;
    c.base_lr = 1e-2;
    c.epochs = 15;
    c.dropout_p = 0.0;
  } else if (task == "diag") {
    c.scheduler = SchedulerKind::OneCycle;
    c.sched_epochs = 16;
    c.base_lr = 1e-2;
    c.epochs = 18;
    c.dropout_p = 0.05;
  } else if (task == "sub") {
    c.scheduler = SchedulerKind::Plateau;
    c.plateau_factor = 0.3;
    c.plateau_patience = 1;
    c.base_lr = 1e-3;
    c.epochs = 15;
    c.dropout_p = 0.09;
  } else if (task == "super") {
    c.scheduler = SchedulerKind::OneCycle;
    c.sched_epochs = 14;
    c.base_lr = 1e-2;
    c.epochs = 15;
    c.dropout_p = 0.11;
  } else if (task == "form") {
    c.scheduler = SchedulerKind::OneCycle;
    c.sched_epochs = 16;
    c.base_lr = 1e-2;
    c.epochs = 25;
    c.dropout_p = 0.1;
  } else if (task == "rhythm") {
    c.scheduler = SchedulerKind::OneCycle;
    c.sched_epochs = 16;
    c.base_lr = 1e-2;
    c.epochs = 20;
    c.dropout_p = 0.1;
  } else {
    fail_validation("unknown task '" + task + "' (expected all|diag|sub|super|form|rhythm)");
  }
  return c;
}

Tensor bce_with_logits(Tape* tape, const Tensor& logits, const Tensor& targets) {
  if (!logits.same_shape(targets))
    fail_validation("bce_with_logits: shape mismatch " + shape_to_string(logits.shape()) +
                    " vs " + shape_to_string(targets.shape()));
  const std::int64_t n = logits.size();
  const double* pz = logits.data();
  const double* py = targets.data();
  double sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double y = py[i];
    if (y != 0.0 && y != 1.0) fail_validation("bce_with_logits: targets must be exactly 0 or 1");
    const double z = pz[i];
    sum += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  Tensor loss = Tensor::from_values({1}, {sum / static_cast<double>(n)});

  if (tape != nullptr && tape->tracks(logits)) {
    NodeId iz = logits.node;
    Tensor sz = logits, sy = targets;
    loss.tape_gen = tape->generation();
    loss.node = tape->record({iz}, [iz, sz, sy, n](const Tensor& g, GradSink& sink) {
      const double scale = g.at(0) / static_cast<double>(n);
      Tensor dz = Tensor::zeros(sz.shape());
      double* p = dz.mutable_data();
      const double* pz = sz.data();
      const double* py = sy.data();
      for (std::int64_t i = 0; i < n; ++i) {
        const double z = pz[i];
        const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        p[i] = (s - py[i]) * scale;
      }
      sink.add(iz, std::move(dz));
    });
  }
  return loss;
}

ClipResult clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  if (max_norm <= 0.0) fail_validation("clip_global_norm: max_norm must be positive");
  double sq = 0.0;
  for (const Tensor& g : grads) {
    const double* p = g.data();
    for (std::int64_t i = 0; i < g.size(); ++i) sq += p[i] * p[i];
  }
  ClipResult res;
  res.pre_norm = std::sqrt(sq);
  if (res.pre_norm <= max_norm) return res;
  res.scale = max_norm / res.pre_norm;
  for (Tensor& g : grads) {
    Tensor scaled = Tensor::zeros(g.shape());
    double* ps = scaled.mutable_data();
    const double* p = g.data();
    for (std::int64_t i = 0; i < g.size(); ++i) ps[i] = p[i] * res.scale;
    g = std::move(scaled);
  }
  return res;
}

OptimState init_optim(const std::vector<Tensor*>& params) {
  OptimState st;
  for (const Tensor* p : params) {
    st.m.push_back(Tensor::zeros(p->shape()));
    st.v.push_back(Tensor::zeros(p->shape()));
  }
  return st;
}

void adamw_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                OptimState& state, double lr, double weight_decay) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    fail_validation("adamw_step: parameter/gradient/state count mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& param = *params[i];
    const Tensor& grad = grads[i];
    if (!param.same_shape(grad)) fail_validation("adamw_step: gradient shape mismatch");
    double* pp = param.mutable_data();
    double* pm = state.m[i].mutable_data();
    double* pv = state.v[i].mutable_data();
    const double* pg = grad.data();
    const std::int64_t n = param.size();
    for (std::int64_t k = 0; k < n; ++k) {
      pm[k] = state.beta1 * pm[k] + (1.0 - state.beta1) * pg[k];
      pv[k] = state.beta2 * pv[k] + (1.0 - state.beta2) * pg[k] * pg[k];
      const double mhat = pm[k] / bc1;
      const double vhat = pv[k] / bc2;
      pp[k] -= lr * mhat / (std::sqrt(vhat) + state.eps) + lr * weight_decay * pp[k];
    }
  }
}

SchedState SchedState::onecycle(double max_lr, std::int64_t total_steps, double warmup_frac,
                                double div_factor, double final_div) {
  if (total_steps < 1) fail_validation("onecycle: total_steps must be >= 1");
  SchedState s;
  s.kind = SchedulerKind::OneCycle;
  s.max_lr = max_lr;
  s.total_steps = total_steps;
  s.warmup_frac = warmup_frac;
  s.div_factor = div_factor;
  s.final_div = final_div;
  s.current_lr = s.onecycle_lr_at(0);
  return s;
}

SchedState SchedState::plateau(double lr0, double factor, int patience) {
  SchedState s;
  s.kind = SchedulerKind::Plateau;
  s.current_lr = lr0;
  s.factor = factor;
  s.patience = patience;
  s.best_metric = -std::numeric_limits<double>::infinity();
  return s;
}

double SchedState::onecycle_lr_at(std::int64_t step) const {
  const double start = max_lr / div_factor;
  const double final_lr = max_lr / final_div;
  if (total_steps <= 1) return step <= 0 ? start : final_lr;
  std::int64_t warmup = std::llround(warmup_frac * static_cast<double>(total_steps));
  warmup = std::clamp<std::int64_t>(warmup, 1, total_steps - 1);
  if (step >= total_steps) return final_lr; // hold after the scheduled horizon
  auto cosine = [](double from, double to, double pct) {
    if (pct <= 0.0) return from; // exact endpoints
    if (pct >= 1.0) return to;
    return to + (from - to) * (1.0 + std::cos(std::numbers::pi * pct)) / 2.0;
  };
  if (step <= warmup)
    return cosine(start, max_lr, static_cast<double>(step) / static_cast<double>(warmup));
  return cosine(max_lr, final_lr,
                static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup));
}

double schedule_lr(SchedState& state, std::int64_t epoch_or_step,
                   std::optional<double> val_metric) {
  if (state.kind == SchedulerKind::OneCycle) {
    state.current_lr = state.onecycle_lr_at(epoch_or_step);
    return state.current_lr;
  }
  if (!val_metric.has_value())
    fail_validation("plateau scheduler requires a validation metric");
  if (*val_metric > state.best_metric) {
    state.best_metric = *val_metric;
    state.bad_epochs = 0;
  } else {
    state.bad_epochs += 1;
    if (state.bad_epochs >= state.patience) {
      state.current_lr *= state.factor;
      state.bad_epochs = 0;
    }
  }
  return state.current_lr;
}

metrics::MacroAuroc evaluate_split(model::ModelParams& params, const data::SplitView& split,
                                   int batch_size) {
  const data::Dataset& ds = *split.dataset;
  const std::int64_t n = static_cast<std::int64_t>(split.size());
  const std::int64_t c = ds.task.num_classes();
  Tensor scores = Tensor::zeros({n, c});
  Tensor labels = Tensor::zeros({n, c});
  std::int64_t row = 0;
  for (const auto& idx : data::batch_order(split, batch_size, false, 0, 0)) {
    data::Batch batch = data::assemble_batch(ds, idx);
    Tensor logits = model::model_forward(nullptr, batch.signals, params, nn::Mode::Eval);
    const std::int64_t bn = logits.dim(0);
    for (std::int64_t b = 0; b < bn; ++b)
      for (std::int64_t j = 0; j < c; ++j) {
        scores.mutable_data()[(row + b) * c + j] = logits.at(b, j);
        labels.mutable_data()[(row + b) * c + j] = batch.labels.at(b, j);
      }
    row += bn;
  }
  return metrics::macro_auroc(scores, labels);
}

TrainReport fit(const TrainConfig& config, const data::Dataset& dataset,
                const FitOptions& options) {
  config.validate();
  data::Splits splits = data::split_folds(dataset);

  model::IncepSEConfig mcfg = options.model_config;
  mcfg.input_channels = dataset.leads;
  mcfg.num_classes = dataset.task.num_classes();
  mcfg.dropout_p = config.dropout_p;
  model::ModelParams params = model::init_params(mcfg, config.seed);

  std::vector<Tensor*> param_ptrs;
  model::for_each_param(params, [&param_ptrs](const std::string&, Tensor& t) {
    param_ptrs.push_back(&t);
  });
  OptimState optim = init_optim(param_ptrs);

  const std::int64_t steps_per_epoch =
      (static_cast<std::int64_t>(splits.train.size()) + config.batch_size - 1) /
      config.batch_size;
  SchedState sched =
      config.scheduler == SchedulerKind::OneCycle
          ? SchedState::onecycle(config.base_lr, steps_per_epoch * config.sched_epochs,
                                 config.warmup_frac, config.div_factor, config.final_div)
          : SchedState::plateau(config.base_lr, config.plateau_factor, config.plateau_patience);

  Rng dropout_rng(config.seed ^ 0x5dee3352fbb6b9d5ULL);

  std::filesystem::create_directories(options.out_dir);
  const std::string ckpt_path =
      (std::filesystem::path(options.out_dir) / (options.run_name + ".ckpt")).string();

  TrainReport report;
  report.seed = config.seed;
  report.checkpoint_path = ckpt_path;
  report.best_val_auroc = -1.0;

  std::deque<double> grad_norm_history;
  std::int64_t global_step = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::int64_t loss_rows = 0;
    double epoch_lr = sched.current_lr;
    for (const auto& idx :
         data::batch_order(splits.train, config.batch_size, true, config.seed, epoch)) {
      data::Batch batch = data::assemble_batch(dataset, idx);
      Tape tape;
      model::watch_params(tape, params);
      Tensor logits =
          model::model_forward(&tape, batch.signals, params, nn::Mode::Train, &dropout_rng);
      Tensor loss = bce_with_logits(&tape, logits, batch.labels);
      const double loss_value = loss.at(0);
      if (!std::isfinite(loss_value)) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << " step " << global_step
           << "; recent grad norms:";
        for (double g : grad_norm_history) os << " " << g;
        fail_runtime(os.str());
      }
      loss_sum += loss_value * static_cast<double>(idx.size());
      loss_rows += static_cast<std::int64_t>(idx.size());

      GradientMap gmap = tape.backward(loss);
      std::vector<Tensor> grads;
      grads.reserve(param_ptrs.size());
      for (Tensor* p : param_ptrs) grads.push_back(gmap.grad(*p));

      double step_norm = 0.0;
      if (config.clip_norm > 0.0) {
        ClipResult clip = clip_global_norm(grads, config.clip_norm);
        step_norm = clip.pre_norm;
      } else {
        double sq = 0.0;
        for (const Tensor& g : grads)
          for (std::int64_t i = 0; i < g.size(); ++i) sq += g.data()[i] * g.data()[i];
        step_norm = std::sqrt(sq);
      }
      grad_norm_history.push_back(step_norm);
      if (grad_norm_history.size() > 16) grad_norm_history.pop_front();

      const double lr = config.scheduler == SchedulerKind::OneCycle
                            ? schedule_lr(sched, global_step)
                            : sched.current_lr;
      epoch_lr = lr;
      adamw_step(param_ptrs, grads, optim, lr, config.weight_decay);
      ++global_step;
    }

    const double val_auroc = evaluate_split(params, splits.val, config.batch_size).value;
    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_rows > 0 ? loss_sum / static_cast<double>(loss_rows) : 0.0;
    row.val_auroc = val_auroc;
    row.lr = epoch_lr;
    report.rows.push_back(row);

    if (val_auroc > report.best_val_auroc) {
      report.best_val_auroc = val_auroc;
      report.best_epoch = epoch;
      model::save_checkpoint(params, ckpt_path);
    }
    if (config.scheduler == SchedulerKind::Plateau) schedule_lr(sched, epoch, val_auroc);
  }

  model::ModelParams best = model::load_checkpoint(ckpt_path);
  report.test_auroc = evaluate_split(best, splits.test, config.batch_size).value;
  return report;
}

void write_report(const TrainReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail_runtime("cannot write report: " + path);
  out << "epoch,train_loss,val_auroc,lr\n";
  char line[256];
  for (const EpochRow& r : report.rows) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss,
                  r.val_auroc, r.lr);
    out << line;
  }
  std::snprintf(line, sizeof(line), "summary,%d,%.17g,%llu\n", report.best_epoch,
                report.test_auroc, static_cast<unsigned long long>(report.seed));
  out << line;
}

TrainReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_validation("cannot open report: " + path);
  TrainReport report;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    if (line.rfind("summary,", 0) == 0) {
      unsigned long long seed = 0;
      if (std::sscanf(line.c_str(), "summary,%d,%lf,%llu", &report.best_epoch,
                      &report.test_auroc, &seed) != 3)
        fail_validation("malformed summary line in " + path);
      report.seed = seed;
      continue;
    }
    EpochRow r;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf", &r.epoch, &r.train_loss, &r.val_auroc,
                    &r.lr) != 4)
      fail_validation("malformed report line in " + path + ": " + line);
    report.rows.push_back(r);
  }
  for (const EpochRow& r : report.rows)
    report.best_val_auroc = std::max(report.best_val_auroc, r.val_auroc);
  return report;
}

} // namespace incepse::training
