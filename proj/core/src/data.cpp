#include "incepse/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "incepse/errors.hpp"
#include "incepse/rng.hpp"

namespace fs = std::filesystem;

namespace incepse::data {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_on(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, delim)) out.push_back(item);
  if (!s.empty() && s.back() == delim) out.push_back("");
  return out;
}

} // namespace

TaskSpec load_task_spec(const std::string& mapping_path, const std::string& task_name) {
  std::ifstream in(mapping_path);
  if (!in) fail_validation("cannot open task mapping file: " + mapping_path);

  TaskSpec spec;
  spec.name = task_name;
  std::map<std::string, int> class_index;
  std::string line;
  bool in_section = false;
  bool found = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      in_section = t.substr(1, t.size() - 2) == task_name;
      found = found || in_section;
      continue;
    }
    if (!in_section) continue;
    auto parts = split_on(t, ',');
    if (parts.size() != 2)
      fail_validation("malformed mapping line " + std::to_string(line_no) + " in " + mapping_path);
    const std::string code = trim(parts[0]);
    const std::string cls = trim(parts[1]);
    if (code.empty() || cls.empty())
      fail_validation("malformed mapping line " + std::to_string(line_no) + " in " + mapping_path);
    auto it = class_index.find(cls);
    int idx;
    if (it == class_index.end()) {
      idx = static_cast<int>(spec.class_names.size());
      spec.class_names.push_back(cls);
      class_index.emplace(cls, idx);
    } else {
      idx = it->second;
    }
    if (spec.statement_to_class.count(code))
      fail_validation("duplicate statement code '" + code + "' in task [" + task_name + "]");
    spec.statement_to_class.emplace(code, idx);
  }
  if (!found) fail_validation("task [" + task_name + "] not found in " + mapping_path);
  if (spec.class_names.empty()) fail_validation("task [" + task_name + "] has no classes");
  return spec;
}

TaskSpec make_identity_task(const std::string& name, const std::vector<std::string>& classes) {
  TaskSpec spec;
  spec.name = name;
  spec.class_names = classes;
  for (std::size_t i = 0; i < classes.size(); ++i)
    spec.statement_to_class.emplace(classes[i], static_cast<int>(i));
  return spec;
}

namespace {

std::vector<float> read_signal_file(const fs::path& path, std::int64_t expected_count,
                                    int row_number) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail_validation("signal file not found: " + path.string() + " (manifest row " +
                    std::to_string(row_number) + ")");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (static_cast<std::int64_t>(bytes.size()) != expected_count * 4)
    fail_validation("signal file " + path.string() + " has " + std::to_string(bytes.size()) +
                    " bytes, expected " + std::to_string(expected_count * 4) +
                    " (manifest row " + std::to_string(row_number) + ")");
  std::vector<float> values(static_cast<std::size_t>(expected_count));
  for (std::int64_t i = 0; i < expected_count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    float v;
    std::memcpy(&v, &bits, 4);
    values[static_cast<std::size_t>(i)] = v;
  }
  return values;
}

void write_signal_file(const fs::path& path, const std::vector<float>& values) {
  std::string bytes;
  bytes.reserve(values.size() * 4);
  for (float v : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_runtime("cannot write signal file: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

Dataset load_manifest(const std::string& manifest_path, const TaskSpec& task) {
  std::ifstream in(manifest_path);
  if (!in) fail_validation("cannot open manifest: " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();

  Dataset d;
  d.task = task;

  std::string line;
  int row = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++row;
    std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      // pragma: #leads=12,samples=1000,fs=100
      for (const std::string& kv : split_on(t.substr(1), ',')) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = trim(kv.substr(0, eq));
        const std::string val = trim(kv.substr(eq + 1));
        if (key == "leads") d.leads = std::stoi(val);
        else if (key == "samples") d.samples = std::stoi(val);
        else if (key == "fs") d.fs_hz = std::stod(val);
      }
      continue;
    }
    if (!header_seen) { // column header line
      header_seen = true;
      continue;
    }
    auto cols = split_on(t, ',');
    if (cols.size() != 4)
      fail_validation("malformed row " + std::to_string(row) + " in " + manifest_path +
                      ": expected 4 columns, got " + std::to_string(cols.size()));
    ECGRecord rec;
    rec.record_id = trim(cols[0]);
    try {
      rec.fold = std::stoi(trim(cols[1]));
    } catch (const std::exception&) {
      fail_validation("bad fold value at row " + std::to_string(row) + " in " + manifest_path);
    }
    if (rec.fold < 1 || rec.fold > 10)
      fail_validation("fold out of range at row " + std::to_string(row) + ": " + trim(cols[1]));
    rec.signal = read_signal_file(base / trim(cols[2]),
                                  static_cast<std::int64_t>(d.leads) * d.samples, row);
    rec.labels.assign(static_cast<std::size_t>(task.num_classes()), 0);
    rec.raw_labels = trim(cols[3]);
    if (!rec.raw_labels.empty()) {
      for (const std::string& code_raw : split_on(rec.raw_labels, ';')) {
        const std::string code = trim(code_raw);
        if (code.empty()) continue;
        auto it = task.statement_to_class.find(code);
        if (it == task.statement_to_class.end()) {
          if (task.num_classes() > 0) ++d.unknown_statement_count;
          continue;
        }
        rec.labels[static_cast<std::size_t>(it->second)] = 1;
      }
    }
    d.records.push_back(std::move(rec));
  }
  if (!header_seen) fail_validation("manifest has no header line: " + manifest_path);
  return d;
}

void save_dataset(const Dataset& d, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path base(out_dir);

  std::string manifest;
  {
    char pragma[128];
    std::snprintf(pragma, sizeof(pragma), "#leads=%d,samples=%d,fs=%.17g\n", d.leads, d.samples,
                  d.fs_hz);
    manifest += pragma;
  }
  manifest += "record_id,fold,signal_file,labels\n";
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const ECGRecord& rec = d.records[i];
    const std::string file = rec.record_id + ".bin";
    write_signal_file(base / file, rec.signal);
    std::string labels = rec.raw_labels;
    if (labels.empty()) { // synthesized records carry only label bits
      for (std::size_t c = 0; c < rec.labels.size(); ++c) {
        if (!rec.labels[c]) continue;
        if (!labels.empty()) labels += ';';
        labels += d.task.class_names[c];
      }
    }
    manifest += rec.record_id + "," + std::to_string(rec.fold) + "," + file + "," + labels + "\n";
  }
  std::ofstream out(base / "manifest.csv", std::ios::trunc);
  if (!out) fail_runtime("cannot write manifest in " + out_dir);
  out << manifest;
}

Splits split_folds(const Dataset& d) {
  Splits s;
  s.train.dataset = s.val.dataset = s.test.dataset = &d;
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const int fold = d.records[i].fold;
    if (fold <= 8) s.train.indices.push_back(i);
    else if (fold == 9) s.val.indices.push_back(i);
    else s.test.indices.push_back(i);
  }
  if (s.train.indices.empty()) fail_validation("empty training split (folds 1-8)");
  if (s.val.indices.empty()) fail_validation("empty validation split (fold 9)");
  if (s.test.indices.empty()) fail_validation("empty test split (fold 10)");
  return s;
}

namespace {

// One fixed clean waveform per class; family cycles with the class index.
std::vector<float> class_template(int cls, int leads, int samples, double fs) {
  std::vector<float> tpl(static_cast<std::size_t>(leads) * samples, 0.0f);
  const int family = cls % 3;
  const int variant = cls / 3;
  const double two_pi = 2.0 * std::numbers::pi;
  for (int l = 0; l < leads; ++l) {
    const double amp = 0.6 + 0.4 * std::sin(two_pi * (l + 1) / std::max(1, leads) + cls);
    const double phase = two_pi * l / std::max(1, leads);
    float* row = tpl.data() + static_cast<std::size_t>(l) * samples;
    if (family == 0) { // sinusoid, class-specific frequency
      const double freq = 2.0 + 1.7 * variant + 0.9 * cls;
      for (int t = 0; t < samples; ++t)
        row[t] = static_cast<float>(amp * std::sin(two_pi * freq * t / fs + phase));
    } else if (family == 1) { // gaussian spike train, class-specific rate
      const double rate = 6.0 + 2.0 * variant + cls; // spikes per record
      const double width = 0.025 * fs;               // ~25 ms
      const double period = samples / rate;
      for (int t = 0; t < samples; ++t) {
        const double nearest = std::round((t - phase) / period) * period + phase;
        const double d = (t - nearest) / width;
        row[t] = static_cast<float>(amp * 1.5 * std::exp(-0.5 * d * d));
      }
    } else { // sawtooth burst gated by a slow envelope
      const double freq = 4.0 + 1.3 * variant + 0.7 * cls;
      const double gate_freq = 0.5 + 0.2 * variant;
      for (int t = 0; t < samples; ++t) {
        const double ph = freq * t / fs + phase / two_pi;
        const double saw = 2.0 * (ph - std::floor(ph + 0.5));
        const double gate = std::sin(two_pi * gate_freq * t / fs) > 0.0 ? 1.0 : 0.0;
        row[t] = static_cast<float>(amp * saw * gate);
      }
    }
  }
  return tpl;
}

} // namespace

Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.classes < 2) fail_validation("synth_dataset: need at least 2 classes");
  if (spec.num_records < 1) fail_validation("synth_dataset: need at least 1 record");
  if (static_cast<int>(spec.imbalance_ratios.size()) != spec.classes)
    fail_validation("synth_dataset: invalid prevalence profile: need one ratio per class (" +
                    std::to_string(spec.classes) + "), got " +
                    std::to_string(spec.imbalance_ratios.size()));
  for (double r : spec.imbalance_ratios)
    if (!(r > 0.0 && r <= 1.0))
      fail_validation("synth_dataset: invalid prevalence profile: ratios must lie in (0,1]");

  const int samples = static_cast<int>(std::lround(spec.fs_hz * spec.seconds));
  Dataset d;
  d.task = make_identity_task("synth", [&] {
    std::vector<std::string> names;
    for (int c = 0; c < spec.classes; ++c) names.push_back("C" + std::to_string(c));
    return names;
  }());
  d.fs_hz = spec.fs_hz;
  d.leads = spec.leads;
  d.samples = samples;

  std::vector<std::vector<float>> templates;
  for (int c = 0; c < spec.classes; ++c)
    templates.push_back(class_template(c, spec.leads, samples, spec.fs_hz));

  Rng rng(seed);
  const std::size_t n = static_cast<std::size_t>(spec.leads) * samples;
  for (int i = 0; i < spec.num_records; ++i) {
    ECGRecord rec;
    char id[32];
    std::snprintf(id, sizeof(id), "synth-%06d", i);
    rec.record_id = id;
    rec.fold = i % 10 + 1;
    rec.labels.assign(static_cast<std::size_t>(spec.classes), 0);
    rec.signal.assign(n, 0.0f);
    for (int c = 0; c < spec.classes; ++c) {
      if (!rng.bernoulli(spec.imbalance_ratios[static_cast<std::size_t>(c)])) continue;
      rec.labels[static_cast<std::size_t>(c)] = 1;
      const float* tpl = templates[static_cast<std::size_t>(c)].data();
      for (std::size_t k = 0; k < n; ++k) rec.signal[k] += tpl[k];
    }
    if (spec.noise_sigma > 0.0)
      for (std::size_t k = 0; k < n; ++k)
        rec.signal[k] += static_cast<float>(rng.normal(0.0, spec.noise_sigma));
    d.records.push_back(std::move(rec));
  }
  return d;
}

std::vector<std::vector<std::size_t>> batch_order(const SplitView& split, int batch_size,
                                                  bool shuffle, std::uint64_t seed, int epoch) {
  if (batch_size < 1) fail_validation("batch_size must be >= 1");
  std::vector<std::size_t> order = split.indices;
  if (shuffle) {
    Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch + 1)));
    rng.shuffle(order);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Batch assemble_batch(const Dataset& d, const std::vector<std::size_t>& record_indices) {
  const std::int64_t B = static_cast<std::int64_t>(record_indices.size());
  const std::int64_t C = d.task.num_classes();
  const std::int64_t n = static_cast<std::int64_t>(d.leads) * d.samples;
  Batch batch;
  batch.record_indices = record_indices;
  batch.signals = Tensor::zeros({B, d.leads, d.samples});
  batch.labels = Tensor::zeros({B, C});
  double* ps = batch.signals.mutable_data();
  double* pl = batch.labels.mutable_data();
  for (std::int64_t b = 0; b < B; ++b) {
    const ECGRecord& rec = d.records[record_indices[static_cast<std::size_t>(b)]];
    for (std::int64_t k = 0; k < n; ++k)
      ps[b * n + k] = static_cast<double>(rec.signal[static_cast<std::size_t>(k)]);
    for (std::int64_t c = 0; c < C; ++c)
      pl[b * C + c] = static_cast<double>(rec.labels[static_cast<std::size_t>(c)]);
  }
  return batch;
}

} // namespace incepse::data
