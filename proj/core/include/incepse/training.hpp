#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "incepse/data.hpp"
#include "incepse/metrics.hpp"
#include "incepse/model.hpp"
#include "incepse/tape.hpp"
#include "incepse/tensor.hpp"

namespace incepse::training {

enum class SchedulerKind { OneCycle, Plateau };

struct TrainConfig {
  std::string task = "super";
  SchedulerKind scheduler = SchedulerKind::OneCycle;
  int sched_epochs = 14;        // OneCycle horizon; lr holds after it
  double plateau_factor = 0.3;
  int plateau_patience = 1;
  double base_lr = 1e-2;        // OneCycle peak / plateau starting lr
  int epochs = 15;
  double dropout_p = 0.11;
  double clip_norm = 0.1;       // <= 0 disables clipping
  double weight_decay = 1e-4;
  int batch_size = 128;
  std::uint64_t seed = 0;
  // OneCycle shape
  double warmup_frac = 0.3;
  double div_factor = 25.0;
  double final_div = 1e4;

  void validate() const;
};

/// Benchmark defaults per task (scheduler, lr, epochs, dropout).
TrainConfig default_config_for_task(const std::string& task);

/// Numerically stable mean binary cross-entropy on raw logits:
/// mean over B*C of max(z,0) - z*y + log(1+exp(-|z|)). Targets must be
/// exactly 0 or 1. Gradient is (sigmoid(z) - y) / (B*C).
Tensor bce_with_logits(Tape* tape, const Tensor& logits, const Tensor& targets);

struct ClipResult {
  double pre_norm = 0.0;
  double scale = 1.0;
};

/// Global L2-norm clipping over a whole gradient set: if the joint norm
/// exceeds max_norm every gradient is scaled by max_norm/norm, preserving
/// direction exactly. Scaled tensors are fresh copies.
ClipResult clip_global_norm(std::vector<Tensor>& grads, double max_norm);

/// Adam moments with bias correction plus decoupled weight decay applied
/// directly to the parameter.
struct OptimState {
  std::vector<Tensor> m; // first moments, parameter order
  std::vector<Tensor> v; // second moments
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

OptimState init_optim(const std::vector<Tensor*>& params);

void adamw_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                OptimState& state, double lr, double weight_decay);

struct SchedState {
  SchedulerKind kind = SchedulerKind::OneCycle;
  // OneCycle
  double max_lr = 1e-2;
  std::int64_t total_steps = 1;
  double warmup_frac = 0.3;
  double div_factor = 25.0;
  double final_div = 1e4;
  // Plateau
  double factor = 0.3;
  int patience = 1;
  double current_lr = 1e-3;
  double best_metric = 0.0;
  int bad_epochs = 0;
  bool seen_metric = false;

  static SchedState onecycle(double max_lr, std::int64_t total_steps, double warmup_frac,
                             double div_factor, double final_div);
  static SchedState plateau(double lr0, double factor, int patience);

  /// Pure OneCycle trajectory: cosine warmup max_lr/div -> max_lr over the
  /// warmup fraction, cosine anneal to max_lr/final_div, then hold.
  double onecycle_lr_at(std::int64_t step) const;
};

/// OneCycle: returns the lr for batch index `epoch_or_step` (no state
/// change). Plateau: consumes the epoch's validation metric (required) and
/// returns the lr for the next epoch.
double schedule_lr(SchedState& state, std::int64_t epoch_or_step,
                   std::optional<double> val_metric = std::nullopt);

struct EpochRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_auroc = 0.0;
  double lr = 0.0;
};

struct TrainReport {
  std::vector<EpochRow> rows;
  int best_epoch = 0;          // 1-based
  double best_val_auroc = 0.0;
  std::string checkpoint_path;
  double test_auroc = 0.0;
  std::uint64_t seed = 0;
};

struct FitOptions {
  std::string out_dir = ".";
  std::string run_name = "run";
  model::IncepSEConfig model_config; // num_classes/dropout overwritten by fit
  bool keep_train_eval = false;      // also compute train-split AUROC per epoch
};

/// Full training run: shuffled train pass (forward, loss, backward, clip,
/// adamw, per-batch lr for OneCycle), validation macro AUROC per epoch,
/// checkpoint on improvement, plateau step after validation, best state
/// restored from its checkpoint for the test metric. Deterministic under
/// (config, seed, single thread).
TrainReport fit(const TrainConfig& config, const data::Dataset& dataset,
                const FitOptions& options);

/// Eval-mode macro AUROC of a model over a split.
metrics::MacroAuroc evaluate_split(model::ModelParams& params, const data::SplitView& split,
                                   int batch_size);

/// Report file: `epoch,train_loss,val_auroc,lr` rows then a
/// `summary,<best_epoch>,<test_auroc>,<seed>` line. Byte-reproducible.
void write_report(const TrainReport& report, const std::string& path);
TrainReport read_report(const std::string& path);

} // namespace incepse::training
