#pragma once

#include <cstdint>

#include "incepse/rng.hpp"
#include "incepse/tape.hpp"
#include "incepse/tensor.hpp"

namespace incepse::nn {

enum class Mode { Train, Eval };

/// 1D convolution parameters. Padding policy is always same-zero: with
/// stride s the temporal length maps L -> ceil(L/s). `bias` may be left
/// undefined for bias-free convolutions.
struct ConvParams {
  Tensor weight; // [Cout, Cin, K]
  Tensor bias;   // [Cout], optional
  int stride = 1;

  std::int64_t out_channels() const { return weight.dim(0); }
  std::int64_t in_channels() const { return weight.dim(1); }
  std::int64_t kernel() const { return weight.dim(2); }
};

struct BatchNormState {
  Tensor gamma;        // [C]
  Tensor beta;         // [C]
  Tensor running_mean; // [C]
  Tensor running_var;  // [C]
  double momentum = 0.1;
  double eps = 1e-5;
};

struct LinearParams {
  Tensor weight; // [out, in]
  Tensor bias;   // [out]
};

/// Cross-correlation (deep-learning convention, no kernel flip) with
/// same-zero padding: out[b,co,t] = sum_{ci,k} w[co,ci,k] * x[b,ci,t*s+k-pad].
Tensor conv1d(Tape* tape, const Tensor& x, const ConvParams& p);

/// Per-window maximum with -inf padding; gradient routes to the first
/// (leftmost) argmax of each window.
Tensor maxpool1d(Tape* tape, const Tensor& x, int window, int stride = 1);

/// Train mode normalizes per channel over (B,L) with batch statistics and
/// updates the running estimates in `state`; eval mode uses the running
/// statistics only.
Tensor batchnorm1d(Tape* tape, const Tensor& x, BatchNormState& state, Mode mode);

/// x[B,in] -> x W^T + b, [B,out].
Tensor linear(Tape* tape, const Tensor& x, const LinearParams& p);

/// Mean over the temporal axis, [B,C,L] -> [B,C].
Tensor global_avg_pool(Tape* tape, const Tensor& x);

/// Inverted dropout: train mode zeroes elements with probability p and
/// scales survivors by 1/(1-p); eval mode is the identity. The mask is
/// drawn from `rng` (required in train mode when p > 0).
Tensor dropout(Tape* tape, const Tensor& x, double p, Mode mode, Rng* rng);

/// Per-channel rescale: out[b,c,t] = x[b,c,t] * w[b,c]. The one broadcast
/// the SE block needs, kept as an explicit op.
Tensor channel_scale(Tape* tape, const Tensor& x, const Tensor& w);

} // namespace incepse::nn
