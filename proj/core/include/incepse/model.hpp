#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "incepse/nn.hpp"
#include "incepse/rng.hpp"
#include "incepse/tape.hpp"
#include "incepse/tensor.hpp"

namespace incepse::model {

struct IncepSEConfig {
  int input_channels = 12;
  int depth = 7;
  int branch_channels = 32;
  int bottleneck_channels = 32;
  std::array<int, 3> kernel_sizes = {9, 19, 39};
  int pool_branch_kernel = 3;
  int skip_kernel = 3;
  int se_reduction = 8;
  int last_layer_multiplier = 2;
  int last_layer_stride = 2;
  double dropout_p = 0.0;
  int num_classes = 71;

  void validate() const;

  bool is_last_layer(int layer) const { return layer == depth - 1; }
  int layer_branch_channels(int layer) const {
    return is_last_layer(layer) ? branch_channels * last_layer_multiplier : branch_channels;
  }
  int layer_in_channels(int layer) const {
    return layer == 0 ? input_channels : 4 * branch_channels;
  }
  int layer_out_channels(int layer) const { return 4 * layer_branch_channels(layer); }
  int layer_stride(int layer) const { return is_last_layer(layer) ? last_layer_stride : 1; }
  int se_hidden() const {
    int h = bottleneck_channels / se_reduction;
    return h < 1 ? 1 : h;
  }
  /// Channels entering the classification head (256 for defaults).
  int final_channels() const { return 4 * branch_channels * last_layer_multiplier; }
};

/// Two-linear bottleneck of the SE gate.
struct SEParams {
  nn::LinearParams fc1; // [C/r, C]
  nn::LinearParams fc2; // [C, C/r]
};

struct LayerParams {
  nn::ConvParams bottleneck;             // K=1, with bias
  SEParams se;
  std::array<nn::ConvParams, 3> branch;  // large kernels, no bias (BN follows)
  nn::ConvParams pool_conv;              // K=3 after maxpool, no bias
  nn::ConvParams skip;                   // K=3 projection, with bias
  nn::BatchNormState bn;                 // over the concatenated channels
};

struct ModelParams {
  IncepSEConfig config;
  std::vector<LayerParams> layers;
  nn::LinearParams head;
};

/// Gate a [B,C,L] tensor by per-channel attention weights in (0,1):
/// out = sigmoid(fc2(relu(fc1(avg_pool_t(x))))) * x.
Tensor se_block(Tape* tape, const Tensor& x, const SEParams& p);

/// One IncepSE layer: SE-gated bottleneck feeding three large-kernel
/// branches, a pooling branch, BN+ReLU over their concatenation, plus a
/// convolutional skip projection added to the result. `stride` applies
/// uniformly to the pool-branch conv, the large-kernel convs, and the skip
/// so every path lands on ceil(L/stride).
Tensor incepse_layer(Tape* tape, const Tensor& x, LayerParams& p, int stride, nn::Mode mode);

/// Full network: (depth-1) standard layers, one widened strided final
/// layer, dropout, global average pooling, linear head. Returns raw logits
/// [B, num_classes]; the loss applies the activation.
Tensor model_forward(Tape* tape, const Tensor& x, ModelParams& m, nn::Mode mode,
                     Rng* dropout_rng = nullptr);

/// Kaiming-uniform (fan-in, relu gain) weights drawn in 32-bit precision,
/// zero biases, identity BN. Deterministic per seed.
ModelParams init_params(const IncepSEConfig& config, std::uint64_t seed);

/// Trainable parameters in a fixed traversal order.
void for_each_param(ModelParams& m, const std::function<void(const std::string&, Tensor&)>& fn);
/// Trainables plus BN running statistics (everything a checkpoint carries).
void for_each_tensor(ModelParams& m, const std::function<void(const std::string&, Tensor&)>& fn);

/// Register every trainable parameter as a leaf on `tape`.
void watch_params(Tape& tape, ModelParams& m);

std::int64_t param_count(const IncepSEConfig& config);

/// Versioned binary checkpoint: magic, format version, config block,
/// then per-tensor records with 32-bit little-endian values.
void save_checkpoint(ModelParams& m, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

} // namespace incepse::model
