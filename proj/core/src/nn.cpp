#include "incepse/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "incepse/errors.hpp"

namespace incepse::nn {

namespace {

bool tracked(Tape* tape, const Tensor& t) { return tape != nullptr && tape->tracks(t); }

void attach(Tape* tape, Tensor& out, std::vector<NodeId> inputs, BackwardFn fn) {
  out.tape_gen = tape->generation();
  out.node = tape->record(std::move(inputs), std::move(fn));
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  return a / b + (a % b > 0 ? 1 : 0);
}

std::int64_t out_length(std::int64_t in_length, int stride) {
  return ceil_div(in_length, stride);
}

// out[b,co,:] += w * x[b,ci, t*s + off] over the valid t range.
void conv_accumulate_row(double* __restrict out, const double* __restrict x, double w,
                         std::int64_t off, int s, std::int64_t L, std::int64_t out_len) {
  std::int64_t t0 = std::max<std::int64_t>(0, ceil_div(-off, s));
  std::int64_t t1 = std::min(out_len, ceil_div(L - off, s));
  if (s == 1) {
    const double* xs = x + off;
    for (std::int64_t t = t0; t < t1; ++t) out[t] += w * xs[t];
  } else {
    for (std::int64_t t = t0; t < t1; ++t) out[t] += w * x[t * s + off];
  }
}

} // namespace

Tensor conv1d(Tape* tape, const Tensor& x, const ConvParams& p) {
  if (x.rank() != 3) fail_validation("conv1d: input must be [B,C,L]");
  const std::int64_t B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  const std::int64_t Cout = p.out_channels(), K = p.kernel();
  const int s = p.stride;
  if (p.in_channels() != Cin)
    fail_validation("conv1d: channel mismatch, weight expects " +
                    std::to_string(p.in_channels()) + " got " + std::to_string(Cin));
  if (s < 1 || K < 1) fail_validation("conv1d: stride and kernel must be >= 1");
  const std::int64_t pad = (K - 1) / 2;
  const std::int64_t Lo = out_length(L, s);
  const bool has_bias = p.bias.defined();

  Tensor out = Tensor::zeros({B, Cout, Lo});
  const double* px = x.data();
  const double* pw = p.weight.data();
  double* po = out.mutable_data();
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t co = 0; co < Cout; ++co) {
      double* orow = po + (b * Cout + co) * Lo;
      if (has_bias) {
        const double bias = p.bias.data()[co];
        for (std::int64_t t = 0; t < Lo; ++t) orow[t] = bias;
      }
      for (std::int64_t ci = 0; ci < Cin; ++ci) {
        const double* xrow = px + (b * Cin + ci) * L;
        const double* wrow = pw + (co * Cin + ci) * K;
        for (std::int64_t k = 0; k < K; ++k)
          conv_accumulate_row(orow, xrow, wrow[k], k - pad, s, L, Lo);
      }
    }
  }

  const bool tx = tracked(tape, x);
  const bool tw = tracked(tape, p.weight);
  const bool tb = has_bias && tracked(tape, p.bias);
  if (tx || tw || tb) {
    NodeId ix = x.node, iw = p.weight.node, ib = has_bias ? p.bias.node : kNoNode;
    Tensor sx = x, sw = p.weight;
    std::vector<NodeId> ins;
    if (tx) ins.push_back(ix);
    if (tw) ins.push_back(iw);
    if (tb) ins.push_back(ib);
    attach(tape, out, std::move(ins),
           [=](const Tensor& g, GradSink& sink) {
             const double* pg = g.data();
             if (tb) {
               Tensor db = Tensor::zeros({Cout});
               double* pdb = db.mutable_data();
               for (std::int64_t b = 0; b < B; ++b)
                 for (std::int64_t co = 0; co < Cout; ++co) {
                   const double* grow = pg + (b * Cout + co) * Lo;
                   double acc = 0.0;
#pragma omp simd reduction(+ : acc)
                   for (std::int64_t t = 0; t < Lo; ++t) acc += grow[t];
                   pdb[co] += acc;
                 }
               sink.add(ib, std::move(db));
             }
             if (tw) {
               Tensor dw = Tensor::zeros(sw.shape());
               double* pdw = dw.mutable_data();
               const double* psx = sx.data();
               for (std::int64_t b = 0; b < B; ++b)
                 for (std::int64_t co = 0; co < Cout; ++co) {
                   const double* grow = pg + (b * Cout + co) * Lo;
                   for (std::int64_t ci = 0; ci < Cin; ++ci) {
                     const double* xrow = psx + (b * Cin + ci) * L;
                     double* dwrow = pdw + (co * Cin + ci) * K;
                     for (std::int64_t k = 0; k < K; ++k) {
                       const std::int64_t off = k - pad;
                       std::int64_t t0 = std::max<std::int64_t>(0, ceil_div(-off, s));
                       std::int64_t t1 = std::min(Lo, ceil_div(L - off, s));
                       double acc = 0.0;
                       if (s == 1) {
                         const double* xs = xrow + off;
#pragma omp simd reduction(+ : acc)
                         for (std::int64_t t = t0; t < t1; ++t) acc += grow[t] * xs[t];
                       } else {
#pragma omp simd reduction(+ : acc)
                         for (std::int64_t t = t0; t < t1; ++t) acc += grow[t] * xrow[t * s + off];
                       }
                       dwrow[k] += acc;
                     }
                   }
                 }
               sink.add(iw, std::move(dw));
             }
             if (tx) {
               Tensor dx = Tensor::zeros(sx.shape());
               double* pdx = dx.mutable_data();
               const double* psw = sw.data();
               for (std::int64_t b = 0; b < B; ++b)
                 for (std::int64_t co = 0; co < Cout; ++co) {
                   const double* grow = pg + (b * Cout + co) * Lo;
                   for (std::int64_t ci = 0; ci < Cin; ++ci) {
                     double* dxrow = pdx + (b * Cin + ci) * L;
                     const double* wrow = psw + (co * Cin + ci) * K;
                     for (std::int64_t k = 0; k < K; ++k) {
                       const double w = wrow[k];
                       const std::int64_t off = k - pad;
                       std::int64_t t0 = std::max<std::int64_t>(0, ceil_div(-off, s));
                       std::int64_t t1 = std::min(Lo, ceil_div(L - off, s));
                       if (s == 1) {
                         double* dxs = dxrow + off;
                         for (std::int64_t t = t0; t < t1; ++t) dxs[t] += w * grow[t];
                       } else {
                         for (std::int64_t t = t0; t < t1; ++t) dxrow[t * s + off] += w * grow[t];
                       }
                     }
                   }
                 }
               sink.add(ix, std::move(dx));
             }
           });
  }
  return out;
}

Tensor maxpool1d(Tape* tape, const Tensor& x, int window, int stride) {
  if (x.rank() != 3) fail_validation("maxpool1d: input must be [B,C,L]");
  if (window < 1 || stride < 1) fail_validation("maxpool1d: window and stride must be >= 1");
  const std::int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::int64_t pad = (window - 1) / 2;
  const std::int64_t Lo = out_length(L, stride);

  Tensor out = Tensor::zeros({B, C, Lo});
  auto argmax = std::make_shared<std::vector<std::int32_t>>(
      static_cast<std::size_t>(B * C * Lo));
  const double* px = x.data();
  double* po = out.mutable_data();
  std::int32_t* pa = argmax->data();
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    const double* xrow = px + bc * L;
    double* orow = po + bc * Lo;
    std::int32_t* arow = pa + bc * Lo;
    for (std::int64_t t = 0; t < Lo; ++t) {
      const std::int64_t start = t * stride - pad;
      double best = -std::numeric_limits<double>::infinity();
      std::int64_t best_i = -1;
      for (int k = 0; k < window; ++k) {
        const std::int64_t ti = start + k;
        if (ti < 0 || ti >= L) continue; // -inf padding
        if (xrow[ti] > best) {
          best = xrow[ti];
          best_i = ti;
        }
      }
      orow[t] = best;
      arow[t] = static_cast<std::int32_t>(best_i);
    }
  }

  if (tracked(tape, x)) {
    NodeId ix = x.node;
    const std::int64_t Lcap = L;
    attach(tape, out, {ix}, [ix, argmax, B, C, Lo, Lcap](const Tensor& g, GradSink& sink) {
      Tensor dx = Tensor::zeros({B, C, Lcap});
      double* pdx = dx.mutable_data();
      const double* pg = g.data();
      const std::int32_t* pa = argmax->data();
      for (std::int64_t bc = 0; bc < B * C; ++bc) {
        double* dxrow = pdx + bc * Lcap;
        const double* grow = pg + bc * Lo;
        const std::int32_t* arow = pa + bc * Lo;
        for (std::int64_t t = 0; t < Lo; ++t) dxrow[arow[t]] += grow[t];
      }
      sink.add(ix, std::move(dx));
    });
  }
  return out;
}

Tensor batchnorm1d(Tape* tape, const Tensor& x, BatchNormState& state, Mode mode) {
  if (x.rank() != 3) fail_validation("batchnorm1d: input must be [B,C,L]");
  const std::int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  if (C != state.gamma.dim(0))
    fail_validation("batchnorm1d: channel mismatch " + std::to_string(C) + " vs " +
                    std::to_string(state.gamma.dim(0)));
  const std::int64_t N = B * L;
  const double* px = x.data();
  const double* pgamma = state.gamma.data();
  const double* pbeta = state.beta.data();

  Tensor out = Tensor::zeros({B, C, L});
  double* po = out.mutable_data();

  Tensor xhat;      // saved for backward
  Tensor inv_std_t; // [C]

  if (mode == Mode::Train) {
    if (N < 2) fail_validation("batchnorm1d: train mode needs B*L >= 2");
    xhat = Tensor::zeros({B, C, L});
    inv_std_t = Tensor::zeros({C});
    double* pxh = xhat.mutable_data();
    double* pinv = inv_std_t.mutable_data();
    double* prm = state.running_mean.mutable_data();
    double* prv = state.running_var.mutable_data();
    for (std::int64_t c = 0; c < C; ++c) {
      double sum = 0.0, sq = 0.0;
      for (std::int64_t b = 0; b < B; ++b) {
        const double* xrow = px + (b * C + c) * L;
#pragma omp simd reduction(+ : sum, sq)
        for (std::int64_t t = 0; t < L; ++t) {
          sum += xrow[t];
          sq += xrow[t] * xrow[t];
        }
      }
      const double mean = sum / static_cast<double>(N);
      double var = sq / static_cast<double>(N) - mean * mean;
      if (var < 0.0) var = 0.0; // fp round-off on constant channels
      const double inv_std = 1.0 / std::sqrt(var + state.eps);
      pinv[c] = inv_std;
      const double g = pgamma[c], be = pbeta[c];
      for (std::int64_t b = 0; b < B; ++b) {
        const double* xrow = px + (b * C + c) * L;
        double* xhrow = pxh + (b * C + c) * L;
        double* orow = po + (b * C + c) * L;
        for (std::int64_t t = 0; t < L; ++t) {
          const double xh = (xrow[t] - mean) * inv_std;
          xhrow[t] = xh;
          orow[t] = g * xh + be;
        }
      }
      const double var_unbiased = var * static_cast<double>(N) / static_cast<double>(N - 1);
      prm[c] = (1.0 - state.momentum) * prm[c] + state.momentum * mean;
      prv[c] = (1.0 - state.momentum) * prv[c] + state.momentum * var_unbiased;
    }
  } else {
    xhat = Tensor::zeros({B, C, L});
    inv_std_t = Tensor::zeros({C});
    double* pxh = xhat.mutable_data();
    double* pinv = inv_std_t.mutable_data();
    const double* prm = state.running_mean.data();
    const double* prv = state.running_var.data();
    for (std::int64_t c = 0; c < C; ++c) {
      const double mean = prm[c];
      const double inv_std = 1.0 / std::sqrt(prv[c] + state.eps);
      pinv[c] = inv_std;
      const double g = pgamma[c], be = pbeta[c];
      for (std::int64_t b = 0; b < B; ++b) {
        const double* xrow = px + (b * C + c) * L;
        double* xhrow = pxh + (b * C + c) * L;
        double* orow = po + (b * C + c) * L;
        for (std::int64_t t = 0; t < L; ++t) {
          const double xh = (xrow[t] - mean) * inv_std;
          xhrow[t] = xh;
          orow[t] = g * xh + be;
        }
      }
    }
  }

  const bool tx = tracked(tape, x);
  const bool tg = tracked(tape, state.gamma);
  const bool tb = tracked(tape, state.beta);
  if (tx || tg || tb) {
    NodeId ix = x.node, ig = state.gamma.node, ib = state.beta.node;
    Tensor sgamma = state.gamma;
    const bool batch_stats = mode == Mode::Train;
    std::vector<NodeId> ins;
    if (tx) ins.push_back(ix);
    if (tg) ins.push_back(ig);
    if (tb) ins.push_back(ib);
    attach(tape, out, std::move(ins),
           [=](const Tensor& g, GradSink& sink) {
             const double* pg = g.data();
             const double* pxh = xhat.data();
             const double* pinv = inv_std_t.data();
             Tensor dgamma = tg ? Tensor::zeros({C}) : Tensor();
             Tensor dbeta = tb ? Tensor::zeros({C}) : Tensor();
             Tensor dx = tx ? Tensor::zeros({B, C, L}) : Tensor();
             for (std::int64_t c = 0; c < C; ++c) {
               double sum_dy = 0.0, sum_dy_xh = 0.0;
               for (std::int64_t b = 0; b < B; ++b) {
                 const double* grow = pg + (b * C + c) * L;
                 const double* xhrow = pxh + (b * C + c) * L;
#pragma omp simd reduction(+ : sum_dy, sum_dy_xh)
                 for (std::int64_t t = 0; t < L; ++t) {
                   sum_dy += grow[t];
                   sum_dy_xh += grow[t] * xhrow[t];
                 }
               }
               if (tg) dgamma.mutable_data()[c] = sum_dy_xh;
               if (tb) dbeta.mutable_data()[c] = sum_dy;
               if (tx) {
                 const double gam = sgamma.data()[c];
                 const double inv_std = pinv[c];
                 if (batch_stats) {
                   const double mean_dy = sum_dy / static_cast<double>(N);
                   const double mean_dy_xh = sum_dy_xh / static_cast<double>(N);
                   for (std::int64_t b = 0; b < B; ++b) {
                     const double* grow = pg + (b * C + c) * L;
                     const double* xhrow = pxh + (b * C + c) * L;
                     double* dxrow = dx.mutable_data() + (b * C + c) * L;
                     for (std::int64_t t = 0; t < L; ++t)
                       dxrow[t] = gam * inv_std * (grow[t] - mean_dy - xhrow[t] * mean_dy_xh);
                   }
                 } else {
                   for (std::int64_t b = 0; b < B; ++b) {
                     const double* grow = pg + (b * C + c) * L;
                     double* dxrow = dx.mutable_data() + (b * C + c) * L;
                     for (std::int64_t t = 0; t < L; ++t) dxrow[t] = gam * inv_std * grow[t];
                   }
                 }
               }
             }
             if (tb) sink.add(ib, std::move(dbeta));
             if (tg) sink.add(ig, std::move(dgamma));
             if (tx) sink.add(ix, std::move(dx));
           });
  }
  return out;
}

Tensor linear(Tape* tape, const Tensor& x, const LinearParams& p) {
  if (x.rank() != 2 || p.weight.rank() != 2 || x.dim(1) != p.weight.dim(1))
    fail_validation("linear: dim mismatch " + shape_to_string(x.shape()) + " vs weight " +
                    shape_to_string(p.weight.shape()));
  const std::int64_t B = x.dim(0), In = x.dim(1), Out = p.weight.dim(0);
  Tensor out = Tensor::zeros({B, Out});
  const double* px = x.data();
  const double* pw = p.weight.data();
  const double* pb = p.bias.defined() ? p.bias.data() : nullptr;
  double* po = out.mutable_data();
  for (std::int64_t i = 0; i < B; ++i) {
    const double* xrow = px + i * In;
    double* orow = po + i * Out;
    for (std::int64_t o = 0; o < Out; ++o) {
      const double* wrow = pw + o * In;
      double acc = pb ? pb[o] : 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::int64_t k = 0; k < In; ++k) acc += xrow[k] * wrow[k];
      orow[o] = acc;
    }
  }

  const bool tx = tracked(tape, x);
  const bool tw = tracked(tape, p.weight);
  const bool tb = p.bias.defined() && tracked(tape, p.bias);
  if (tx || tw || tb) {
    NodeId ix = x.node, iw = p.weight.node, ib = tb ? p.bias.node : kNoNode;
    Tensor sx = x, sw = p.weight;
    std::vector<NodeId> ins;
    if (tx) ins.push_back(ix);
    if (tw) ins.push_back(iw);
    if (tb) ins.push_back(ib);
    attach(tape, out, std::move(ins),
           [=](const Tensor& g, GradSink& sink) {
             const double* pg = g.data();
             if (tb) {
               Tensor db = Tensor::zeros({Out});
               double* pdb = db.mutable_data();
               for (std::int64_t i = 0; i < B; ++i)
                 for (std::int64_t o = 0; o < Out; ++o) pdb[o] += pg[i * Out + o];
               sink.add(ib, std::move(db));
             }
             if (tw) { // dW[o,k] = sum_i dy[i,o] x[i,k]
               Tensor dw = Tensor::zeros({Out, In});
               double* pdw = dw.mutable_data();
               const double* psx = sx.data();
               for (std::int64_t i = 0; i < B; ++i) {
                 const double* grow = pg + i * Out;
                 const double* xrow = psx + i * In;
                 for (std::int64_t o = 0; o < Out; ++o) {
                   const double gv = grow[o];
                   double* dwrow = pdw + o * In;
                   for (std::int64_t k = 0; k < In; ++k) dwrow[k] += gv * xrow[k];
                 }
               }
               sink.add(iw, std::move(dw));
             }
             if (tx) { // dx = dy W
               Tensor dx = Tensor::zeros({B, In});
               double* pdx = dx.mutable_data();
               const double* psw = sw.data();
               for (std::int64_t i = 0; i < B; ++i) {
                 const double* grow = pg + i * Out;
                 double* dxrow = pdx + i * In;
                 for (std::int64_t o = 0; o < Out; ++o) {
                   const double gv = grow[o];
                   const double* wrow = psw + o * In;
                   for (std::int64_t k = 0; k < In; ++k) dxrow[k] += gv * wrow[k];
                 }
               }
               sink.add(ix, std::move(dx));
             }
           });
  }
  return out;
}

Tensor global_avg_pool(Tape* tape, const Tensor& x) {
  if (x.rank() != 3) fail_validation("global_avg_pool: input must be [B,C,L]");
  const std::int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  Tensor out = Tensor::zeros({B, C});
  const double* px = x.data();
  double* po = out.mutable_data();
  const double inv = 1.0 / static_cast<double>(L);
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    const double* xrow = px + bc * L;
    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
    for (std::int64_t t = 0; t < L; ++t) acc += xrow[t];
    po[bc] = acc * inv;
  }

  if (tracked(tape, x)) {
    NodeId ix = x.node;
    attach(tape, out, {ix}, [ix, B, C, L, inv](const Tensor& g, GradSink& sink) {
      Tensor dx = Tensor::zeros({B, C, L});
      double* pdx = dx.mutable_data();
      const double* pg = g.data();
      for (std::int64_t bc = 0; bc < B * C; ++bc) {
        const double gv = pg[bc] * inv;
        double* dxrow = pdx + bc * L;
        for (std::int64_t t = 0; t < L; ++t) dxrow[t] = gv;
      }
      sink.add(ix, std::move(dx));
    });
  }
  return out;
}

Tensor dropout(Tape* tape, const Tensor& x, double p, Mode mode, Rng* rng) {
  if (p < 0.0 || p >= 1.0) fail_validation("dropout: p must be in [0,1)");
  if (mode == Mode::Eval || p == 0.0) return x; // identity, gradient passes through
  if (rng == nullptr) fail_validation("dropout: train mode with p > 0 needs an rng");

  const double keep_scale = 1.0 / (1.0 - p);
  Tensor out = Tensor::zeros(x.shape());
  auto mask = std::make_shared<std::vector<double>>(static_cast<std::size_t>(x.size()));
  const double* px = x.data();
  double* po = out.mutable_data();
  double* pm = mask->data();
  const std::int64_t n = x.size();
  for (std::int64_t i = 0; i < n; ++i) {
    const double m = rng->uniform() < p ? 0.0 : keep_scale;
    pm[i] = m;
    po[i] = px[i] * m;
  }

  if (tracked(tape, x)) {
    NodeId ix = x.node;
    std::vector<std::int64_t> shape = x.shape();
    attach(tape, out, {ix}, [ix, mask, shape](const Tensor& g, GradSink& sink) {
      Tensor dx = Tensor::zeros(shape);
      double* pdx = dx.mutable_data();
      const double* pg = g.data();
      const double* pm = mask->data();
      for (std::int64_t i = 0; i < g.size(); ++i) pdx[i] = pg[i] * pm[i];
      sink.add(ix, std::move(dx));
    });
  }
  return out;
}

Tensor channel_scale(Tape* tape, const Tensor& x, const Tensor& w) {
  if (x.rank() != 3 || w.rank() != 2 || x.dim(0) != w.dim(0) || x.dim(1) != w.dim(1))
    fail_validation("channel_scale: shapes " + shape_to_string(x.shape()) + " and " +
                    shape_to_string(w.shape()) + " are incompatible");
  const std::int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  Tensor out = Tensor::zeros({B, C, L});
  const double* px = x.data();
  const double* pw = w.data();
  double* po = out.mutable_data();
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    const double wv = pw[bc];
    const double* xrow = px + bc * L;
    double* orow = po + bc * L;
    for (std::int64_t t = 0; t < L; ++t) orow[t] = xrow[t] * wv;
  }

  const bool tx = tracked(tape, x), tw = tracked(tape, w);
  if (tx || tw) {
    NodeId ix = x.node, iw = w.node;
    Tensor sx = x, sw = w;
    std::vector<NodeId> ins;
    if (tx) ins.push_back(ix);
    if (tw) ins.push_back(iw);
    attach(tape, out, std::move(ins),
           [=](const Tensor& g, GradSink& sink) {
             const double* pg = g.data();
             if (tx) {
               Tensor dx = Tensor::zeros({B, C, L});
               double* pdx = dx.mutable_data();
               const double* psw = sw.data();
               for (std::int64_t bc = 0; bc < B * C; ++bc) {
                 const double wv = psw[bc];
                 const double* grow = pg + bc * L;
                 double* dxrow = pdx + bc * L;
                 for (std::int64_t t = 0; t < L; ++t) dxrow[t] = grow[t] * wv;
               }
               sink.add(ix, std::move(dx));
             }
             if (tw) {
               Tensor dw = Tensor::zeros({B, C});
               double* pdw = dw.mutable_data();
               const double* psx = sx.data();
               for (std::int64_t bc = 0; bc < B * C; ++bc) {
                 const double* grow = pg + bc * L;
                 const double* xrow = psx + bc * L;
                 double acc = 0.0;
#pragma omp simd reduction(+ : acc)
                 for (std::int64_t t = 0; t < L; ++t) acc += grow[t] * xrow[t];
                 pdw[bc] = acc;
               }
               sink.add(iw, std::move(dw));
             }
           });
  }
  return out;
}

} // namespace incepse::nn
