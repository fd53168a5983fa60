#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "incepse/tensor.hpp"

namespace incepse::data {

/// Class layout of one classification task plus the statement-code ->
/// class mapping used at ingestion.
struct TaskSpec {
  std::string name;
  std::vector<std::string> class_names;          // fixed output order
  std::map<std::string, int> statement_to_class; // code -> class index

  int num_classes() const { return static_cast<int>(class_names.size()); }
};

/// Parse one `[task]` section of a mapping file of `statement,class` lines.
/// Class order follows first appearance in the section.
TaskSpec load_task_spec(const std::string& mapping_path, const std::string& task_name);

/// Identity task over explicit class names (synthetic data).
TaskSpec make_identity_task(const std::string& name, const std::vector<std::string>& classes);

struct ECGRecord {
  std::string record_id;
  int fold = 1;                     // 1..10
  std::vector<float> signal;        // lead-major [lead][sample]
  std::vector<std::uint8_t> labels; // multi-hot over task classes
  std::string raw_labels;           // statement codes as ingested, passed through on save
};

struct LeadStats {
  double mean = 0.0;
  double stddev = 1.0;
};

struct Dataset {
  TaskSpec task;
  double fs_hz = 100.0;
  int leads = 12;
  int samples = 1000;
  std::vector<ECGRecord> records;
  std::optional<std::vector<LeadStats>> stats; // set once standardized
  int unknown_statement_count = 0;             // ingestion diagnostic

  const float* record_lead(std::size_t rec, int lead) const {
    return records[rec].signal.data() + static_cast<std::size_t>(lead) * samples;
  }
  float* record_lead(std::size_t rec, int lead) {
    return records[rec].signal.data() + static_cast<std::size_t>(lead) * samples;
  }
};

/// Load a manifest (UTF-8, comma-delimited, header line, optional leading
/// `#leads=..,samples=..,fs=..` pragma) and its raw little-endian float32
/// signal files. Unknown statement codes leave the label bit unset and
/// bump `unknown_statement_count`.
Dataset load_manifest(const std::string& manifest_path, const TaskSpec& task);

/// Write manifest + signal files (+ pragma) so that `load_manifest` with
/// the same task reproduces the dataset exactly.
void save_dataset(const Dataset& d, const std::string& out_dir);

/// View over a dataset: record indices belonging to one split.
struct SplitView {
  const Dataset* dataset = nullptr;
  std::vector<std::size_t> indices;

  std::size_t size() const { return indices.size(); }
};

struct Splits {
  SplitView train; // folds 1..8
  SplitView val;   // fold 9
  SplitView test;  // fold 10
};

/// Benchmark fold protocol; throws if any split comes up empty.
Splits split_folds(const Dataset& d);

struct SynthSpec {
  int num_records = 500;
  int classes = 2;
  std::vector<double> imbalance_ratios; // per-class positive prevalence in (0,1]
  double fs_hz = 100.0;
  double seconds = 10.0;
  int leads = 12;
  double noise_sigma = 0.0;
};

/// Deterministic synthetic multi-label dataset: each class is a fixed
/// waveform family template (sinusoid / gaussian spike train / sawtooth
/// burst at class-specific rates), records mix the templates of their
/// active classes plus white noise. Folds are assigned round-robin 1..10.
Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed);

struct Batch {
  Tensor signals; // [B, leads, samples]
  Tensor labels;  // [B, num_classes]
  std::vector<std::size_t> record_indices;
};

/// Deterministic batch composition for one epoch: a permutation per
/// (seed, epoch) when shuffling, manifest order otherwise; the final
/// partial batch is emitted.
std::vector<std::vector<std::size_t>> batch_order(const SplitView& split, int batch_size,
                                                  bool shuffle, std::uint64_t seed, int epoch);

Batch assemble_batch(const Dataset& d, const std::vector<std::size_t>& record_indices);

} // namespace incepse::data
