#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "gradcheck.hpp"
#include "incepse/data.hpp"
#include "incepse/errors.hpp"
#include "incepse/metrics.hpp"
#include "incepse/model.hpp"
#include "incepse/ops.hpp"
#include "incepse/signal.hpp"
#include "incepse/training.hpp"

namespace fs = std::filesystem;

namespace incepse::cli {

namespace {

// ---------------------------------------------------------------------------
// key = value config files with [task] sections

using ConfigSections = std::map<std::string, std::map<std::string, std::string>>;

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

ConfigSections parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_validation("cannot open config file: " + path);
  ConfigSections sections;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = t.substr(1, t.size() - 2);
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos)
      fail_validation("config line " + std::to_string(line_no) + " is not key = value: " + t);
    sections[section][trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return sections;
}

double to_double(const std::string& v, const std::string& key) {
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    fail_validation("config key '" + key + "' is not a number: " + v);
  }
}

int to_int(const std::string& v, const std::string& key) {
  try {
    return std::stoi(v);
  } catch (const std::exception&) {
    fail_validation("config key '" + key + "' is not an integer: " + v);
  }
}

// ---------------------------------------------------------------------------
// flag/config resolution

struct CommonArgs {
  std::string config_path;
  std::string task = "super";
  std::string data;
  std::string out = ".";
  std::string mapping = "configs/ptbxl_statements.map";
  std::string checkpoint;
  std::vector<std::uint64_t> seeds;
  // training overrides; NaN / -1 = leave resolved value alone
  double clip_norm = std::nan("");
  double weight_decay = std::nan("");
  int batch_size = -1;
  double lr = std::nan("");
  int epochs = -1;
  double dropout = std::nan("");
  int depth = -1;
  int branch_channels = -1;
  int bottleneck_channels = -1;
};

struct ResolvedRun {
  training::TrainConfig train;
  model::IncepSEConfig model;
};

void apply_config_map(const std::map<std::string, std::string>& kv, ResolvedRun& run) {
  for (const auto& [key, value] : kv) {
    if (key == "scheduler") {
      if (value == "onecycle") run.train.scheduler = training::SchedulerKind::OneCycle;
      else if (value == "plateau") run.train.scheduler = training::SchedulerKind::Plateau;
      else fail_validation("config: unknown scheduler '" + value + "'");
    } else if (key == "sched_epochs") run.train.sched_epochs = to_int(value, key);
    else if (key == "factor") run.train.plateau_factor = to_double(value, key);
    else if (key == "patience") run.train.plateau_patience = to_int(value, key);
    else if (key == "lr") run.train.base_lr = to_double(value, key);
    else if (key == "epochs") run.train.epochs = to_int(value, key);
    else if (key == "dropout") run.train.dropout_p = to_double(value, key);
    else if (key == "clip_norm") run.train.clip_norm = to_double(value, key);
    else if (key == "weight_decay") run.train.weight_decay = to_double(value, key);
    else if (key == "batch_size") run.train.batch_size = to_int(value, key);
    else if (key == "warmup_frac") run.train.warmup_frac = to_double(value, key);
    else if (key == "div_factor") run.train.div_factor = to_double(value, key);
    else if (key == "final_div") run.train.final_div = to_double(value, key);
    else if (key == "depth") run.model.depth = to_int(value, key);
    else if (key == "branch_channels") run.model.branch_channels = to_int(value, key);
    else if (key == "bottleneck_channels") run.model.bottleneck_channels = to_int(value, key);
    else if (key == "se_reduction") run.model.se_reduction = to_int(value, key);
    else if (key == "kernel_sizes") {
      std::stringstream ss(value);
      std::string item;
      std::vector<int> ks;
      while (std::getline(ss, item, ':')) ks.push_back(to_int(item, key));
      if (ks.size() != 3) fail_validation("config: kernel_sizes wants k1:k2:k3");
      run.model.kernel_sizes = {ks[0], ks[1], ks[2]};
    } else fail_validation("config: unknown key '" + key + "'");
  }
}

ResolvedRun resolve_run(const CommonArgs& args) {
  ResolvedRun run;
  run.train = training::default_config_for_task(args.task == "synth" ? "super" : args.task);
  run.train.task = args.task;
  run.model = model::IncepSEConfig{};

  if (!args.config_path.empty()) {
    ConfigSections sections = parse_config_file(args.config_path);
    if (sections.count("")) apply_config_map(sections.at(""), run);
    if (sections.count(args.task)) apply_config_map(sections.at(args.task), run);
  }
  if (!std::isnan(args.clip_norm)) run.train.clip_norm = args.clip_norm;
  if (!std::isnan(args.weight_decay)) run.train.weight_decay = args.weight_decay;
  if (args.batch_size > 0) run.train.batch_size = args.batch_size;
  if (!std::isnan(args.lr)) run.train.base_lr = args.lr;
  if (args.epochs > 0) run.train.epochs = args.epochs;
  if (!std::isnan(args.dropout)) run.train.dropout_p = args.dropout;
  if (args.depth > 0) run.model.depth = args.depth;
  if (args.branch_channels > 0) run.model.branch_channels = args.branch_channels;
  if (args.bottleneck_channels > 0) run.model.bottleneck_channels = args.bottleneck_channels;
  return run;
}

// ---------------------------------------------------------------------------
// dataset resolution: manifest path or synth:... URI

bool is_synth_uri(const std::string& s) { return s.rfind("synth:", 0) == 0; }

data::Dataset resolve_dataset(const std::string& uri_or_path, const CommonArgs& args) {
  if (is_synth_uri(uri_or_path)) {
    data::SynthSpec spec;
    spec.classes = 2;
    spec.imbalance_ratios = {0.9, 0.1};
    spec.num_records = 500;
    spec.noise_sigma = 0.2;
    std::uint64_t seed = 0;
    std::stringstream ss(uri_or_path.substr(6));
    std::string kv;
    while (std::getline(ss, kv, ',')) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) fail_validation("synth spec wants key=value pairs: " + kv);
      const std::string key = trim(kv.substr(0, eq));
      const std::string value = trim(kv.substr(eq + 1));
      if (key == "records") spec.num_records = to_int(value, key);
      else if (key == "classes") spec.classes = to_int(value, key);
      else if (key == "noise") spec.noise_sigma = to_double(value, key);
      else if (key == "leads") spec.leads = to_int(value, key);
      else if (key == "seconds") spec.seconds = to_double(value, key);
      else if (key == "seed") seed = static_cast<std::uint64_t>(std::stoull(value));
      else if (key == "ratios") {
        spec.imbalance_ratios.clear();
        std::stringstream rs(value);
        std::string r;
        while (std::getline(rs, r, ':')) spec.imbalance_ratios.push_back(to_double(r, key));
      } else fail_validation("synth spec: unknown key '" + key + "'");
    }
    if (static_cast<int>(spec.imbalance_ratios.size()) != spec.classes) {
      // default to uniform prevalence when only a class count was given
      spec.imbalance_ratios.assign(static_cast<std::size_t>(spec.classes),
                                   1.0 / spec.classes);
    }
    return data::synth_dataset(spec, seed);
  }
  data::TaskSpec task = data::load_task_spec(args.mapping, args.task);
  return data::load_manifest(uri_or_path, task);
}

// ---------------------------------------------------------------------------
// effective-config echo (reproducibility contract)

void echo_config(const std::string& out_dir, const std::string& command,
                 const CommonArgs& args, const ResolvedRun* run,
                 const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "effective_config.txt", std::ios::trunc);
  if (!out) fail_runtime("cannot write effective config in " + out_dir);
  char buf[256];
  out << "command = " << command << "\n";
  out << "task = " << args.task << "\n";
  if (!args.data.empty()) out << "data = " << args.data << "\n";
  if (!args.checkpoint.empty()) out << "checkpoint = " << args.checkpoint << "\n";
  if (!args.seeds.empty()) {
    out << "seeds =";
    for (auto s : args.seeds) out << " " << s;
    out << "\n";
  }
  if (run != nullptr) {
    const training::TrainConfig& t = run->train;
    out << "scheduler = "
        << (t.scheduler == training::SchedulerKind::OneCycle ? "onecycle" : "plateau") << "\n";
    if (t.scheduler == training::SchedulerKind::OneCycle) {
      out << "sched_epochs = " << t.sched_epochs << "\n";
      std::snprintf(buf, sizeof(buf), "warmup_frac = %.17g\ndiv_factor = %.17g\nfinal_div = %.17g\n",
                    t.warmup_frac, t.div_factor, t.final_div);
      out << buf;
    } else {
      std::snprintf(buf, sizeof(buf), "factor = %.17g\npatience = %d\n", t.plateau_factor,
                    t.plateau_patience);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "lr = %.17g\nepochs = %d\ndropout = %.17g\nclip_norm = %.17g\n"
                  "weight_decay = %.17g\nbatch_size = %d\n",
                  t.base_lr, t.epochs, t.dropout_p, t.clip_norm, t.weight_decay, t.batch_size);
    out << buf;
    const model::IncepSEConfig& m = run->model;
    out << "depth = " << m.depth << "\n";
    out << "branch_channels = " << m.branch_channels << "\n";
    out << "bottleneck_channels = " << m.bottleneck_channels << "\n";
    out << "se_reduction = " << m.se_reduction << "\n";
    out << "kernel_sizes = " << m.kernel_sizes[0] << ":" << m.kernel_sizes[1] << ":"
        << m.kernel_sizes[2] << "\n";
  }
  for (const auto& [k, v] : extra) out << k << " = " << v << "\n";
}

// ---------------------------------------------------------------------------
// seed sweeps (worker threads; each run is internally deterministic)

int worker_count() {
  const char* env = std::getenv("INCEPSE_WORKERS");
  if (env == nullptr) return 1;
  int n = std::atoi(env);
  return std::clamp(n, 1, 16);
}

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  training::TrainReport report;
};

std::vector<SeedResult> run_seeds(const ResolvedRun& base, const data::Dataset& dataset,
                                  const std::vector<std::uint64_t>& seeds,
                                  const std::string& out_dir) {
  std::vector<SeedResult> results(seeds.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      SeedResult& r = results[i];
      r.seed = seeds[i];
      try {
        training::TrainConfig cfg = base.train;
        cfg.seed = seeds[i];
        training::FitOptions opts;
        opts.model_config = base.model;
        opts.out_dir = out_dir;
        opts.run_name = "seed" + std::to_string(seeds[i]);
        r.report = training::fit(cfg, dataset, opts);
        training::write_report(r.report,
                               (fs::path(out_dir) / (opts.run_name + "_report.csv")).string());
        r.ok = true;
      } catch (const std::exception& e) {
        r.error = e.what();
      }
    }
  };
  const int workers = std::min<int>(worker_count(), static_cast<int>(seeds.size()));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return results;
}

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0; // sample standard deviation over runs
  int runs = 0;
};

Aggregate aggregate_of(const std::vector<SeedResult>& results) {
  Aggregate agg;
  double sum = 0.0, sq = 0.0;
  for (const SeedResult& r : results) {
    if (!r.ok) continue;
    sum += r.report.test_auroc;
    sq += r.report.test_auroc * r.report.test_auroc;
    ++agg.runs;
  }
  if (agg.runs == 0) fail_runtime("every seed failed");
  agg.mean = sum / agg.runs;
  if (agg.runs > 1) {
    const double var = (sq - sum * sum / agg.runs) / (agg.runs - 1);
    agg.stddev = std::sqrt(std::max(0.0, var));
  }
  return agg;
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> seeds;
  auto dots = spec.find("..");
  if (dots != std::string::npos) {
    const std::uint64_t lo = std::stoull(spec.substr(0, dots));
    const std::uint64_t hi = std::stoull(spec.substr(dots + 2));
    if (hi < lo) fail_validation("seed range is reversed: " + spec);
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) seeds.push_back(std::stoull(trim(item)));
  if (seeds.empty()) fail_validation("empty seed list");
  return seeds;
}

// ---------------------------------------------------------------------------
// commands

int cmd_preprocess(const CommonArgs& args, double low, double high, int order,
                   bool standardize_flag) {
  signal::BandpassSpec spec;
  spec.low_hz = low;
  spec.high_hz = high;
  spec.order = order;

  data::TaskSpec passthrough;
  passthrough.name = "raw";
  data::Dataset dataset = data::load_manifest(args.data, passthrough);
  spec.fs_hz = dataset.fs_hz;
  signal::BiquadCascade filt = signal::design_bandpass(spec);

  echo_config(args.out, "preprocess", args, nullptr,
              {{"low_hz", std::to_string(low)},
               {"high_hz", std::to_string(high)},
               {"order", std::to_string(order)},
               {"standardize", standardize_flag ? "true" : "false"},
               {"fs_hz", std::to_string(dataset.fs_hz)}});

  signal::filter_dataset(dataset, filt);
  if (standardize_flag) {
    data::Splits splits = data::split_folds(dataset);
    auto stats = signal::standardize(dataset, splits.train);
    signal::write_stats_file(stats, (fs::path(args.out) / "lead_stats.txt").string());
  }
  data::save_dataset(dataset, args.out);
  std::printf("preprocess: %zu records -> %s (band %.3g-%.3g Hz, order %d%s)\n",
              dataset.records.size(), args.out.c_str(), low, high, order,
              standardize_flag ? ", standardized" : "");
  return kExitOk;
}

int cmd_train(const CommonArgs& args) {
  ResolvedRun run = resolve_run(args);
  data::Dataset dataset = resolve_dataset(args.data, args);
  echo_config(args.out, "train", args, &run);

  std::vector<SeedResult> results = run_seeds(run, dataset, args.seeds, args.out);

  std::ofstream agg_file(fs::path(args.out) / "aggregate.csv", std::ios::trunc);
  agg_file << "seed,test_auroc,best_epoch,best_val_auroc\n";
  char buf[256];
  for (const SeedResult& r : results) {
    if (r.ok) {
      std::snprintf(buf, sizeof(buf), "%llu,%.17g,%d,%.17g\n",
                    static_cast<unsigned long long>(r.seed), r.report.test_auroc,
                    r.report.best_epoch, r.report.best_val_auroc);
      agg_file << buf;
      std::printf("seed %llu: test_auroc=%.6f best_epoch=%d\n",
                  static_cast<unsigned long long>(r.seed), r.report.test_auroc,
                  r.report.best_epoch);
    } else {
      agg_file << r.seed << ",failed,,\n";
      std::fprintf(stderr, "seed %llu FAILED: %s\n", static_cast<unsigned long long>(r.seed),
                   r.error.c_str());
    }
  }
  Aggregate agg = aggregate_of(results);
  std::snprintf(buf, sizeof(buf), "aggregate,%.17g,%.17g,%d\n", agg.mean, agg.stddev, agg.runs);
  agg_file << buf;
  std::printf("aggregate over %d runs: mean=%.6f std=%.2e\n", agg.runs, agg.mean, agg.stddev);

  bool any_failed = false;
  for (const SeedResult& r : results) any_failed = any_failed || !r.ok;
  return any_failed ? kExitRuntime : kExitOk;
}

model::ModelParams load_checkpoint_for_task(const CommonArgs& args, const data::Dataset& dataset) {
  model::ModelParams params = model::load_checkpoint(args.checkpoint);
  if (params.config.num_classes != dataset.task.num_classes())
    fail_validation("checkpoint classes [" + std::to_string(params.config.num_classes) +
                    "] do not match task '" + dataset.task.name + "' classes [" +
                    std::to_string(dataset.task.num_classes()) + "]");
  if (params.config.input_channels != dataset.leads)
    fail_validation("checkpoint leads [" + std::to_string(params.config.input_channels) +
                    "] do not match dataset leads [" + std::to_string(dataset.leads) + "]");
  return params;
}

int cmd_evaluate(const CommonArgs& args, const std::string& split_name, int batch_size) {
  data::Dataset dataset = resolve_dataset(args.data, args);
  model::ModelParams params = load_checkpoint_for_task(args, dataset);
  echo_config(args.out, "evaluate", args, nullptr, {{"split", split_name}});

  data::Splits splits = data::split_folds(dataset);
  const data::SplitView* split = nullptr;
  if (split_name == "train") split = &splits.train;
  else if (split_name == "val") split = &splits.val;
  else if (split_name == "test") split = &splits.test;
  else fail_validation("unknown split '" + split_name + "' (expected train|val|test)");

  metrics::MacroAuroc result = training::evaluate_split(params, *split, batch_size);
  std::printf("macro_auroc %.17g\n", result.value);
  std::printf("classes_included %zu\n", result.per_class.size() - result.skipped_classes.size());
  std::printf("skipped_classes");
  for (int c : result.skipped_classes)
    std::printf(" %s", dataset.task.class_names[static_cast<std::size_t>(c)].c_str());
  std::printf("\n");
  return kExitOk;
}

int cmd_predict(const CommonArgs& args, int batch_size) {
  data::Dataset dataset = resolve_dataset(args.data, args);
  model::ModelParams params = load_checkpoint_for_task(args, dataset);
  echo_config(args.out, "predict", args, nullptr);

  const fs::path out_path = fs::path(args.out) / "predictions.csv";
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) fail_runtime("cannot write " + out_path.string());
  out << "record_id";
  for (const std::string& c : dataset.task.class_names) out << "," << c;
  out << "\n";

  data::SplitView all{&dataset, {}};
  for (std::size_t i = 0; i < dataset.records.size(); ++i) all.indices.push_back(i);
  char buf[64];
  for (const auto& idx : data::batch_order(all, batch_size, false, 0, 0)) {
    data::Batch batch = data::assemble_batch(dataset, idx);
    Tensor logits = model::model_forward(nullptr, batch.signals, params, nn::Mode::Eval);
    Tensor probs = ops::sigmoid(nullptr, logits);
    for (std::int64_t b = 0; b < probs.dim(0); ++b) {
      out << dataset.records[idx[static_cast<std::size_t>(b)]].record_id;
      for (std::int64_t c = 0; c < probs.dim(1); ++c) {
        std::snprintf(buf, sizeof(buf), ",%.17g", probs.at(b, c));
        out << buf;
      }
      out << "\n";
    }
  }
  std::printf("predict: %zu records -> %s\n", dataset.records.size(), out_path.string().c_str());
  return kExitOk;
}

struct AblationRow {
  std::string label;
  double clip_norm;
  double weight_decay;
};

int run_ablation(const CommonArgs& args, const std::vector<AblationRow>& rows,
                 const std::string& table_name) {
  ResolvedRun base = resolve_run(args);
  data::Dataset dataset = resolve_dataset(args.data, args);

  std::vector<std::pair<std::string, std::string>> extra;
  for (const AblationRow& row : rows)
    extra.emplace_back("row", row.label);
  echo_config(args.out, table_name, args, &base, extra);

  std::ofstream table(fs::path(args.out) / (table_name + ".csv"), std::ios::trunc);
  table << "setting,test_mean,test_std,runs\n";
  char buf[256];
  bool any_failed = false;
  for (const AblationRow& row : rows) {
    ResolvedRun run = base;
    run.train.clip_norm = row.clip_norm;
    run.train.weight_decay = row.weight_decay;
    const std::string row_dir = (fs::path(args.out) / row.label).string();
    fs::create_directories(row_dir);
    std::vector<SeedResult> results = run_seeds(run, dataset, args.seeds, row_dir);
    for (const SeedResult& r : results)
      if (!r.ok) {
        any_failed = true;
        std::fprintf(stderr, "%s seed %llu FAILED: %s\n", row.label.c_str(),
                     static_cast<unsigned long long>(r.seed), r.error.c_str());
      }
    Aggregate agg = aggregate_of(results);
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%d\n", row.label.c_str(), agg.mean,
                  agg.stddev, agg.runs);
    table << buf;
    std::printf("%-16s mean=%.6f std=%.2e (%d runs)\n", row.label.c_str(), agg.mean, agg.stddev,
                agg.runs);
  }
  return any_failed ? kExitRuntime : kExitOk;
}

int cmd_ablate_clip(const CommonArgs& args, const std::string& values) {
  std::vector<AblationRow> rows;
  std::stringstream ss(values);
  std::string item;
  ResolvedRun base = resolve_run(args);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item == "none") rows.push_back({"no_clip", 0.0, base.train.weight_decay});
    else rows.push_back({"clip_" + item, to_double(item, "clip value"), base.train.weight_decay});
  }
  if (rows.empty()) fail_validation("ablate-clip: empty value list");
  return run_ablation(args, rows, "clip_ablation");
}

int cmd_ablate_stability(const CommonArgs& args) {
  ResolvedRun base = resolve_run(args);
  const double clip = base.train.clip_norm > 0 ? base.train.clip_norm : 0.1;
  const double wd = base.train.weight_decay > 0 ? base.train.weight_decay : 1e-4;
  std::vector<AblationRow> rows = {
      {"clip_and_decay", clip, wd},
      {"decay_only", 0.0, wd},
      {"none", 0.0, 0.0},
  };
  return run_ablation(args, rows, "stability_ablation");
}

} // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"IncepSE: SE-gated inception-style 1D CNN for multi-label "
               "time-series classification"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string seeds_spec = "0";
  std::string split_name = "test";
  std::string clip_values = "none,0.5,0.3,0.1";
  std::string gradcheck_scale = "op";
  double band_low = 1.0, band_high = 45.0;
  int band_order = 3;
  bool no_standardize = false;
  int batch_size_eval = 64;

  auto add_common = [&](CLI::App* cmd, bool with_train_flags) {
    cmd->add_option("--config", args.config_path, "key = value config file with [task] sections");
    cmd->add_option("--task", args.task, "all|diag|sub|super|form|rhythm (or synth)");
    cmd->add_option("--out", args.out, "output directory");
    cmd->add_option("--mapping", args.mapping, "statement-to-class mapping file");
    if (with_train_flags) {
      cmd->add_option("--seed", seeds_spec, "single seed");
      cmd->add_option("--seeds", seeds_spec, "seed list 0,1,2 or range 0..9");
      cmd->add_option("--clip-norm", args.clip_norm, "global gradient norm cap (0 disables)");
      cmd->add_option("--weight-decay", args.weight_decay, "decoupled weight decay");
      cmd->add_option("--batch-size", args.batch_size, "minibatch size");
      cmd->add_option("--lr", args.lr, "base learning rate");
      cmd->add_option("--epochs", args.epochs, "training epochs");
      cmd->add_option("--dropout", args.dropout, "final-layer dropout probability");
      cmd->add_option("--depth", args.depth, "number of IncepSE layers");
      cmd->add_option("--branch-channels", args.branch_channels, "channels per branch");
      cmd->add_option("--bottleneck-channels", args.bottleneck_channels,
                      "bottleneck conv output channels");
    }
  };

  CLI::App* preprocess = app.add_subcommand("preprocess", "bandpass-filter and standardize a dataset");
  preprocess->add_option("--data", args.data, "input manifest")->required();
  preprocess->add_option("--low", band_low, "low cutoff Hz");
  preprocess->add_option("--high", band_high, "high cutoff Hz");
  preprocess->add_option("--order", band_order, "Butterworth order per edge (1..8)");
  preprocess->add_flag("--no-standardize", no_standardize, "skip per-lead z-scoring");
  add_common(preprocess, false);

  CLI::App* train = app.add_subcommand("train", "train one model per seed and aggregate");
  train->add_option("--data", args.data, "manifest path or synth:... spec")->required();
  add_common(train, true);

  CLI::App* evaluate = app.add_subcommand("evaluate", "macro AUROC of a checkpoint on a split");
  evaluate->add_option("--data", args.data, "manifest path or synth:... spec")->required();
  evaluate->add_option("--checkpoint", args.checkpoint, "checkpoint file")->required();
  evaluate->add_option("--split", split_name, "train|val|test");
  evaluate->add_option("--batch-size", batch_size_eval, "inference batch size");
  add_common(evaluate, false);

  CLI::App* predict = app.add_subcommand("predict", "per-record class probabilities");
  predict->add_option("--data", args.data, "manifest path or synth:... spec")->required();
  predict->add_option("--checkpoint", args.checkpoint, "checkpoint file")->required();
  predict->add_option("--batch-size", batch_size_eval, "inference batch size");
  add_common(predict, false);

  CLI::App* ablate_clip = app.add_subcommand("ablate-clip", "sweep gradient-clip values");
  ablate_clip->add_option("--data", args.data, "manifest path or synth:... spec")->required();
  ablate_clip->add_option("--values", clip_values, "comma list, 'none' allowed");
  add_common(ablate_clip, true);

  CLI::App* ablate_stab = app.add_subcommand("ablate-stability",
                                             "clip+decay vs decay-only vs none");
  ablate_stab->add_option("--data", args.data, "manifest path or synth:... spec")->required();
  add_common(ablate_stab, true);

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference verification");
  gradcheck->add_option("--scale", gradcheck_scale, "op|layer|mini");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    args.seeds = parse_seeds(seeds_spec);
    if (preprocess->parsed())
      return cmd_preprocess(args, band_low, band_high, band_order, !no_standardize);
    if (train->parsed()) return cmd_train(args);
    if (evaluate->parsed()) return cmd_evaluate(args, split_name, batch_size_eval);
    if (predict->parsed()) return cmd_predict(args, batch_size_eval);
    if (ablate_clip->parsed()) return cmd_ablate_clip(args, clip_values);
    if (ablate_stab->parsed()) return cmd_ablate_stability(args);
    if (gradcheck->parsed()) return run_gradcheck(gradcheck_scale) ? kExitOk : kExitRuntime;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.kind() == ErrorKind::Validation ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitValidation;
}

} // namespace incepse::cli
