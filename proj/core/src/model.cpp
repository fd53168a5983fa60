#include "incepse/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "incepse/errors.hpp"
#include "incepse/ops.hpp"

namespace incepse::model {

void IncepSEConfig::validate() const {
  if (input_channels < 1) fail_validation("config: input_channels must be >= 1");
  if (depth < 1) fail_validation("config: depth must be >= 1");
  if (branch_channels < 1 || bottleneck_channels < 1)
    fail_validation("config: channel counts must be >= 1");
  for (int k : kernel_sizes)
    if (k < 1) fail_validation("config: kernel sizes must be >= 1");
  if (pool_branch_kernel < 1 || skip_kernel < 1)
    fail_validation("config: kernel sizes must be >= 1");
  if (se_reduction < 1) fail_validation("config: se_reduction must be >= 1");
  if (last_layer_multiplier < 1 || last_layer_stride < 1)
    fail_validation("config: last-layer multiplier and stride must be >= 1");
  if (dropout_p < 0.0 || dropout_p >= 1.0) fail_validation("config: dropout_p must be in [0,1)");
  if (num_classes < 1) fail_validation("config: num_classes must be >= 1");
}

Tensor se_block(Tape* tape, const Tensor& x, const SEParams& p) {
  Tensor squeezed = nn::global_avg_pool(tape, x);
  Tensor h = nn::linear(tape, squeezed, p.fc1);
  h = ops::relu(tape, h);
  Tensor logits = nn::linear(tape, h, p.fc2);
  Tensor weights = ops::sigmoid(tape, logits);
  return nn::channel_scale(tape, x, weights);
}

Tensor incepse_layer(Tape* tape, const Tensor& x, LayerParams& p, int stride, nn::Mode mode) {
  auto with_stride = [stride](const nn::ConvParams& c) {
    nn::ConvParams s = c;
    s.stride = stride;
    return s;
  };

  Tensor b0 = se_block(tape, nn::conv1d(tape, x, p.bottleneck), p.se);
  Tensor b1 = nn::conv1d(tape, nn::maxpool1d(tape, x, 3, 1), with_stride(p.pool_conv));
  Tensor b2 = nn::conv1d(tape, b0, with_stride(p.branch[0]));
  Tensor b3 = nn::conv1d(tape, b0, with_stride(p.branch[1]));
  Tensor b4 = nn::conv1d(tape, b0, with_stride(p.branch[2]));

  for (const Tensor* t : {&b2, &b3, &b4})
    if (t->dim(2) != b1.dim(2) || t->dim(0) != b1.dim(0))
      fail_validation("incepse_layer: branch length mismatch at concat (stride misconfiguration): " +
                      shape_to_string(b1.shape()) + " vs " + shape_to_string(t->shape()));

  Tensor merged = ops::concat(tape, {b1, b2, b3, b4}, 1);
  merged = ops::relu(tape, nn::batchnorm1d(tape, merged, p.bn, mode));
  Tensor skip = nn::conv1d(tape, x, with_stride(p.skip));
  return ops::add(tape, merged, skip);
}

Tensor model_forward(Tape* tape, const Tensor& x, ModelParams& m, nn::Mode mode,
                     Rng* dropout_rng) {
  const IncepSEConfig& cfg = m.config;
  if (x.rank() != 3 || x.dim(1) != cfg.input_channels)
    fail_validation("model_forward: input must be [B," + std::to_string(cfg.input_channels) +
                    ",L], got " + shape_to_string(x.shape()));
  const int max_kernel = std::max({cfg.kernel_sizes[0], cfg.kernel_sizes[1], cfg.kernel_sizes[2]});
  if (x.dim(2) < max_kernel)
    fail_validation("model_forward: input length " + std::to_string(x.dim(2)) +
                    " shorter than largest kernel " + std::to_string(max_kernel));

  Tensor h = x;
  for (int i = 0; i < cfg.depth; ++i)
    h = incepse_layer(tape, h, m.layers[static_cast<std::size_t>(i)], cfg.layer_stride(i), mode);
  h = nn::dropout(tape, h, cfg.dropout_p, mode, dropout_rng);
  h = nn::global_avg_pool(tape, h);
  return nn::linear(tape, h, m.head);
}

namespace {

Tensor kaiming_uniform(Rng& rng, std::vector<std::int64_t> shape, std::int64_t fan_in) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape));
  double* p = t.mutable_data();
  for (std::int64_t i = 0; i < t.size(); ++i) p[i] = rng.uniform_f32(-bound, bound);
  return t;
}

nn::ConvParams make_conv(Rng& rng, int cout, int cin, int k, bool bias) {
  nn::ConvParams c;
  c.weight = kaiming_uniform(rng, {cout, cin, k}, static_cast<std::int64_t>(cin) * k);
  if (bias) c.bias = Tensor::zeros({cout});
  c.stride = 1;
  return c;
}

nn::LinearParams make_linear(Rng& rng, int out, int in) {
  nn::LinearParams l;
  l.weight = kaiming_uniform(rng, {out, in}, in);
  l.bias = Tensor::zeros({out});
  return l;
}

nn::BatchNormState make_bn(int channels) {
  nn::BatchNormState bn;
  bn.gamma = Tensor::full({channels}, 1.0);
  bn.beta = Tensor::zeros({channels});
  bn.running_mean = Tensor::zeros({channels});
  bn.running_var = Tensor::full({channels}, 1.0);
  return bn;
}

} // namespace

ModelParams init_params(const IncepSEConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ModelParams m;
  m.config = config;
  for (int i = 0; i < config.depth; ++i) {
    const int cin = config.layer_in_channels(i);
    const int bc = config.layer_branch_channels(i);
    const int bneck = config.bottleneck_channels;
    LayerParams lp;
    lp.bottleneck = make_conv(rng, bneck, cin, 1, true);
    lp.se.fc1 = make_linear(rng, config.se_hidden(), bneck);
    lp.se.fc2 = make_linear(rng, bneck, config.se_hidden());
    for (int j = 0; j < 3; ++j)
      lp.branch[static_cast<std::size_t>(j)] =
          make_conv(rng, bc, bneck, config.kernel_sizes[static_cast<std::size_t>(j)], false);
    lp.pool_conv = make_conv(rng, bc, cin, config.pool_branch_kernel, false);
    lp.skip = make_conv(rng, 4 * bc, cin, config.skip_kernel, true);
    lp.bn = make_bn(4 * bc);
    m.layers.push_back(std::move(lp));
  }
  m.head = make_linear(rng, config.num_classes, config.final_channels());
  return m;
}

namespace {

void visit_tensors(ModelParams& m, bool include_running_stats,
                   const std::function<void(const std::string&, Tensor&)>& fn) {
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i) + ".";
    LayerParams& lp = m.layers[i];
    fn(prefix + "bottleneck.weight", lp.bottleneck.weight);
    fn(prefix + "bottleneck.bias", lp.bottleneck.bias);
    fn(prefix + "se.fc1.weight", lp.se.fc1.weight);
    fn(prefix + "se.fc1.bias", lp.se.fc1.bias);
    fn(prefix + "se.fc2.weight", lp.se.fc2.weight);
    fn(prefix + "se.fc2.bias", lp.se.fc2.bias);
    for (std::size_t j = 0; j < 3; ++j)
      fn(prefix + "branch" + std::to_string(j) + ".weight", lp.branch[j].weight);
    fn(prefix + "pool_conv.weight", lp.pool_conv.weight);
    fn(prefix + "skip.weight", lp.skip.weight);
    fn(prefix + "skip.bias", lp.skip.bias);
    fn(prefix + "bn.gamma", lp.bn.gamma);
    fn(prefix + "bn.beta", lp.bn.beta);
    if (include_running_stats) {
      fn(prefix + "bn.running_mean", lp.bn.running_mean);
      fn(prefix + "bn.running_var", lp.bn.running_var);
    }
  }
  fn("head.weight", m.head.weight);
  fn("head.bias", m.head.bias);
}

} // namespace

void for_each_param(ModelParams& m, const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_tensors(m, false, fn);
}

void for_each_tensor(ModelParams& m, const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_tensors(m, true, fn);
}

void watch_params(Tape& tape, ModelParams& m) {
  for_each_param(m, [&tape](const std::string&, Tensor& t) { tape.watch(t); });
}

std::int64_t param_count(const IncepSEConfig& config) {
  ModelParams m = init_params(config, 0);
  std::int64_t n = 0;
  for_each_param(m, [&n](const std::string&, Tensor& t) { n += t.size(); });
  return n;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr char kMagic[12] = {'I', 'N', 'C', 'E', 'P', 'S', 'E', '-', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i32(std::string& buf, std::int32_t v) { put_u32(buf, static_cast<std::uint32_t>(v)); }

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

void put_f64(std::string& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(buf, bits);
}

class Reader {
public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size())
      fail_validation("unexpected end of checkpoint: " + path_);
  }
  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

} // namespace

void save_checkpoint(ModelParams& m, const std::string& path) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put_u32(buf, kVersion);

  const IncepSEConfig& c = m.config;
  put_i32(buf, c.input_channels);
  put_i32(buf, c.depth);
  put_i32(buf, c.branch_channels);
  put_i32(buf, c.bottleneck_channels);
  for (int k : c.kernel_sizes) put_i32(buf, k);
  put_i32(buf, c.pool_branch_kernel);
  put_i32(buf, c.skip_kernel);
  put_i32(buf, c.se_reduction);
  put_i32(buf, c.last_layer_multiplier);
  put_i32(buf, c.last_layer_stride);
  put_i32(buf, c.num_classes);
  put_f64(buf, c.dropout_p);

  std::uint32_t count = 0;
  for_each_tensor(m, [&count](const std::string&, Tensor&) { ++count; });
  put_u32(buf, count);

  for_each_tensor(m, [&buf](const std::string& name, Tensor& t) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    put_u32(buf, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u64(buf, static_cast<std::uint64_t>(d));
    const double* p = t.data();
    for (std::int64_t i = 0; i < t.size(); ++i) put_f32(buf, static_cast<float>(p[i]));
  });

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_runtime("cannot open checkpoint for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) fail_runtime("failed writing checkpoint: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_validation("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(bytes, path);

  if (r.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    fail_validation("not an IncepSE checkpoint: " + path);
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    fail_validation("checkpoint version mismatch: file has " + std::to_string(version) +
                    ", expected " + std::to_string(kVersion));

  IncepSEConfig c;
  c.input_channels = r.i32();
  c.depth = r.i32();
  c.branch_channels = r.i32();
  c.bottleneck_channels = r.i32();
  for (int i = 0; i < 3; ++i) c.kernel_sizes[static_cast<std::size_t>(i)] = r.i32();
  c.pool_branch_kernel = r.i32();
  c.skip_kernel = r.i32();
  c.se_reduction = r.i32();
  c.last_layer_multiplier = r.i32();
  c.last_layer_stride = r.i32();
  c.num_classes = r.i32();
  c.dropout_p = r.f64();
  c.validate();

  ModelParams m = init_params(c, 0);
  const std::uint32_t count = r.u32();
  std::uint32_t expected = 0;
  for_each_tensor(m, [&expected](const std::string&, Tensor&) { ++expected; });
  if (count != expected)
    fail_validation("checkpoint tensor count " + std::to_string(count) + " does not match model (" +
                    std::to_string(expected) + ")");

  for (std::uint32_t rec = 0; rec < count; ++rec) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    const std::uint32_t rank = r.u32();
    if (rank < 1 || rank > 3) fail_validation("checkpoint tensor '" + name + "' has bad rank");
    std::vector<std::int64_t> dims;
    for (std::uint32_t i = 0; i < rank; ++i) dims.push_back(static_cast<std::int64_t>(r.u64()));

    Tensor* target = nullptr;
    for_each_tensor(m, [&](const std::string& n, Tensor& t) {
      if (n == name) target = &t;
    });
    if (target == nullptr) fail_validation("checkpoint has unknown tensor '" + name + "'");
    if (target->shape() != dims)
      fail_validation("checkpoint tensor '" + name + "' shape " + shape_to_string(dims) +
                      " does not match model shape " + shape_to_string(target->shape()));
    double* p = target->mutable_data();
    for (std::int64_t i = 0; i < target->size(); ++i) p[i] = static_cast<double>(r.f32());
  }
  if (!r.at_end()) fail_validation("trailing bytes after checkpoint records: " + path);
  return m;
}

} // namespace incepse::model
