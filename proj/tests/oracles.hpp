// Independent reference implementations used only by the test suites.
// These stay deliberately naive so they can't share bugs with the library
// kernels they check.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "incepse/rng.hpp"
#include "incepse/tensor.hpp"

namespace oracles {

using incepse::Rng;
using incepse::Tensor;

inline Tensor rand_tensor(Rng& rng, std::vector<std::int64_t> shape, double lo = -1.0,
                          double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  double* p = t.mutable_data();
  for (std::int64_t i = 0; i < t.size(); ++i) p[i] = rng.uniform(lo, hi);
  return t;
}

// Naive O(m*k*n) triple loop.
inline Tensor matmul_naive(const Tensor& a, const Tensor& b) {
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c = Tensor::zeros({m, n});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      c.mutable_data()[i * n + j] = acc;
    }
  return c;
}

// Naive same-zero-padded cross-correlation, O(B*Cout*Cin*Lo*K).
inline Tensor conv1d_naive(const Tensor& x, const Tensor& w, const Tensor& bias, int stride) {
  const std::int64_t B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  const std::int64_t Cout = w.dim(0), K = w.dim(2);
  const std::int64_t pad = (K - 1) / 2;
  const std::int64_t Lo = (L + stride - 1) / stride;
  Tensor out = Tensor::zeros({B, Cout, Lo});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t co = 0; co < Cout; ++co)
      for (std::int64_t t = 0; t < Lo; ++t) {
        double acc = bias.defined() ? bias.at(co) : 0.0;
        for (std::int64_t ci = 0; ci < Cin; ++ci)
          for (std::int64_t k = 0; k < K; ++k) {
            const std::int64_t ti = t * stride + k - pad;
            if (ti < 0 || ti >= L) continue;
            acc += w.at(co, ci, k) * x.at(b, ci, ti);
          }
        out.mutable_data()[(b * Cout + co) * Lo + t] = acc;
      }
  return out;
}

// Windowed maximum with -inf padding.
inline Tensor maxpool1d_naive(const Tensor& x, int window, int stride) {
  const std::int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::int64_t pad = (window - 1) / 2;
  const std::int64_t Lo = (L + stride - 1) / stride;
  Tensor out = Tensor::zeros({B, C, Lo});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t t = 0; t < Lo; ++t) {
        double best = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < window; ++k) {
          const std::int64_t ti = t * stride + k - pad;
          if (ti < 0 || ti >= L) continue;
          best = std::max(best, x.at(b, c, ti));
        }
        out.mutable_data()[(b * C + c) * Lo + t] = best;
      }
  return out;
}

// Exhaustive O(P*N) pairwise comparison, ties worth 1/2.
inline double auroc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// Central finite differences of a scalar-valued closure with respect to one
// tensor, h = 1e-5 (64-bit).
inline Tensor fd_gradient(const std::function<double()>& f, Tensor& t, double h = 1e-5) {
  Tensor g = Tensor::zeros(t.shape());
  double* pt = t.mutable_data();
  double* pg = g.mutable_data();
  for (std::int64_t i = 0; i < t.size(); ++i) {
    const double orig = pt[i];
    pt[i] = orig + h;
    const double fp = f();
    pt[i] = orig - h;
    const double fm = f();
    pt[i] = orig;
    pg[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Relative error with a floor so near-zero gradients compare on an
// absolute scale.
inline double max_rel_err(const Tensor& a, const Tensor& b, double floor_scale = 1e-3) {
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double x = a.at(i), y = b.at(i);
    const double denom = std::max({std::abs(x), std::abs(y), floor_scale});
    worst = std::max(worst, std::abs(x - y) / denom);
  }
  return worst;
}

} // namespace oracles
