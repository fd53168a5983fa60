#include "incepse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "incepse/errors.hpp"

namespace incepse::ops {

namespace {

bool tracked(Tape* tape, const Tensor& t) { return tape != nullptr && tape->tracks(t); }

void attach(Tape* tape, Tensor& out, std::vector<NodeId> inputs, BackwardFn fn) {
  out.tape_gen = tape->generation();
  out.node = tape->record(std::move(inputs), std::move(fn));
}

void maybe_check_finite(const Tensor& t) {
  if (!finite_checks_enabled()) return;
  const double* p = t.data();
  for (std::int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(p[i])) fail_runtime("non-finite value produced by op");
}

double stable_sigmoid(double x) {
  double y;
  if (x >= 0.0) {
    y = 1.0 / (1.0 + std::exp(-x));
  } else {
    double e = std::exp(x);
    y = e / (1.0 + e);
  }
  // keep the (0,1) contract even where fp rounding would saturate
  if (y >= 1.0) y = std::nextafter(1.0, 0.0);
  if (y <= 0.0) y = std::numeric_limits<double>::min();
  return y;
}

} // namespace

Tensor build_tensor(Tape* tape, std::vector<std::int64_t> shape, std::vector<double> values,
                    bool requires_grad) {
  Tensor t = Tensor::from_values(std::move(shape), std::move(values));
  if (requires_grad && tape != nullptr) tape->watch(t);
  t.requires_grad = requires_grad;
  return t;
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    fail_validation("add: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                    shape_to_string(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.mutable_data();
  const std::int64_t n = a.size();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  maybe_check_finite(out);

  const bool ta = tracked(tape, a), tb = tracked(tape, b);
  if (ta || tb) {
    NodeId ia = a.node, ib = b.node;
    std::vector<NodeId> ins;
    if (ta) ins.push_back(ia);
    if (tb) ins.push_back(ib);
    attach(tape, out, std::move(ins), [ta, tb, ia, ib](const Tensor& g, GradSink& sink) {
      if (ta) sink.add(ia, g);
      if (tb) sink.add(ib, g);
    });
  }
  return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    fail_validation("mul: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                    shape_to_string(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.mutable_data();
  const std::int64_t n = a.size();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  maybe_check_finite(out);

  const bool ta = tracked(tape, a), tb = tracked(tape, b);
  if (ta || tb) {
    NodeId ia = a.node, ib = b.node;
    Tensor sa = a, sb = b; // saved forward context
    std::vector<NodeId> ins;
    if (ta) ins.push_back(ia);
    if (tb) ins.push_back(ib);
    attach(tape, out, std::move(ins),
           [ta, tb, ia, ib, sa, sb](const Tensor& g, GradSink& sink) {
             const std::int64_t n = g.size();
             if (ta) {
               Tensor da = Tensor::zeros(sa.shape());
               double* p = da.mutable_data();
               for (std::int64_t i = 0; i < n; ++i) p[i] = g.data()[i] * sb.data()[i];
               sink.add(ia, std::move(da));
             }
             if (tb) {
               Tensor db = Tensor::zeros(sb.shape());
               double* p = db.mutable_data();
               for (std::int64_t i = 0; i < n; ++i) p[i] = g.data()[i] * sa.data()[i];
               sink.add(ib, std::move(db));
             }
           });
  }
  return out;
}

Tensor scale(Tape* tape, const Tensor& a, double factor) {
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  double* po = out.mutable_data();
  const std::int64_t n = a.size();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * factor;
  maybe_check_finite(out);

  if (tracked(tape, a)) {
    NodeId ia = a.node;
    attach(tape, out, {ia}, [ia, factor](const Tensor& g, GradSink& sink) {
      Tensor da = Tensor::zeros(g.shape());
      double* p = da.mutable_data();
      for (std::int64_t i = 0; i < g.size(); ++i) p[i] = g.data()[i] * factor;
      sink.add(ia, std::move(da));
    });
  }
  return out;
}

Tensor relu(Tape* tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  double* po = out.mutable_data();
  const std::int64_t n = a.size();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] > 0.0 ? pa[i] : 0.0;

  if (tracked(tape, a)) {
    NodeId ia = a.node;
    Tensor sa = a;
    attach(tape, out, {ia}, [ia, sa](const Tensor& g, GradSink& sink) {
      Tensor da = Tensor::zeros(sa.shape());
      double* p = da.mutable_data();
      for (std::int64_t i = 0; i < g.size(); ++i)
        p[i] = sa.data()[i] > 0.0 ? g.data()[i] : 0.0;
      sink.add(ia, std::move(da));
    });
  }
  return out;
}

Tensor sigmoid(Tape* tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  double* po = out.mutable_data();
  const std::int64_t n = a.size();
  for (std::int64_t i = 0; i < n; ++i) po[i] = stable_sigmoid(pa[i]);

  if (tracked(tape, a)) {
    NodeId ia = a.node;
    Tensor sy = out; // d/dx sigmoid = y(1-y)
    attach(tape, out, {ia}, [ia, sy](const Tensor& g, GradSink& sink) {
      Tensor da = Tensor::zeros(sy.shape());
      double* p = da.mutable_data();
      for (std::int64_t i = 0; i < g.size(); ++i) {
        double y = sy.data()[i];
        p[i] = g.data()[i] * y * (1.0 - y);
      }
      sink.add(ia, std::move(da));
    });
  }
  return out;
}

namespace {

// C[m,n] += A[m,k] * B[k,n], ikj order so the inner loop is contiguous.
void matmul_kernel(const double* A, const double* B, double* C, std::int64_t m, std::int64_t k,
                   std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t p = 0; p < k; ++p) {
      const double a = A[i * k + p];
      const double* brow = B + p * n;
      double* crow = C + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B^T where Bt is [n,k] (rows of Bt are dotted).
void matmul_bt_kernel(const double* A, const double* Bt, double* C, std::int64_t m,
                      std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    for (std::int64_t j = 0; j < n; ++j) {
      const double* brow = Bt + j * k;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      C[i * n + j] += acc;
    }
  }
}

// C[k,n] += A^T * B where A is [m,k], B is [m,n].
void matmul_at_kernel(const double* A, const double* B, double* C, std::int64_t m,
                      std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    const double* brow = B + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const double a = arow[p];
      double* crow = C + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

} // namespace

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    fail_validation("matmul: incompatible shapes " + shape_to_string(a.shape()) + " x " +
                    shape_to_string(b.shape()));
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  matmul_kernel(a.data(), b.data(), out.mutable_data(), m, k, n);
  maybe_check_finite(out);

  const bool ta = tracked(tape, a), tb = tracked(tape, b);
  if (ta || tb) {
    NodeId ia = a.node, ib = b.node;
    Tensor sa = a, sb = b;
    std::vector<NodeId> ins;
    if (ta) ins.push_back(ia);
    if (tb) ins.push_back(ib);
    attach(tape, out, std::move(ins),
           [ta, tb, ia, ib, sa, sb, m, k, n](const Tensor& g, GradSink& sink) {
             if (ta) { // dA = dC * B^T
               Tensor da = Tensor::zeros({m, k});
               matmul_bt_kernel(g.data(), sb.data(), da.mutable_data(), m, n, k);
               sink.add(ia, std::move(da));
             }
             if (tb) { // dB = A^T * dC
               Tensor db = Tensor::zeros({k, n});
               matmul_at_kernel(sa.data(), g.data(), db.mutable_data(), m, k, n);
               sink.add(ib, std::move(db));
             }
           });
  }
  return out;
}

namespace {

struct ReducePlan {
  std::vector<std::int64_t> out_shape;
  std::vector<std::int64_t> in_dims;
  std::vector<bool> reduced;
  std::int64_t count = 1; // elements folded into each output slot
};

ReducePlan plan_reduce(const Tensor& x, std::vector<int> axes) {
  ReducePlan plan;
  plan.in_dims = x.shape();
  plan.reduced.assign(static_cast<std::size_t>(x.rank()), false);
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  if (axes.empty()) fail_validation("reduce: no axes given");
  for (int ax : axes) {
    if (ax < 0 || ax >= x.rank())
      fail_validation("reduce: invalid axis " + std::to_string(ax) + " for shape " +
                      shape_to_string(x.shape()));
    plan.reduced[static_cast<std::size_t>(ax)] = true;
    plan.count *= x.dim(ax);
  }
  for (int d = 0; d < x.rank(); ++d)
    if (!plan.reduced[static_cast<std::size_t>(d)]) plan.out_shape.push_back(x.dim(d));
  if (plan.out_shape.empty()) plan.out_shape.push_back(1);
  return plan;
}

// Maps each input linear index to its output linear index.
std::int64_t out_index(const ReducePlan& plan, std::int64_t idx) {
  std::int64_t coords[3] = {0, 0, 0};
  const int rank = static_cast<int>(plan.in_dims.size());
  for (int d = rank - 1; d >= 0; --d) {
    coords[d] = idx % plan.in_dims[static_cast<std::size_t>(d)];
    idx /= plan.in_dims[static_cast<std::size_t>(d)];
  }
  std::int64_t out = 0;
  for (int d = 0; d < rank; ++d) {
    if (plan.reduced[static_cast<std::size_t>(d)]) continue;
    out = out * plan.in_dims[static_cast<std::size_t>(d)] + coords[d];
  }
  return out;
}

} // namespace

Tensor reduce(Tape* tape, Reduce kind, const Tensor& x, std::vector<int> axes) {
  ReducePlan plan = plan_reduce(x, std::move(axes));
  Tensor out = Tensor::zeros(plan.out_shape);
  double* po = out.mutable_data();
  const double* px = x.data();
  const std::int64_t n = x.size();
  for (std::int64_t i = 0; i < n; ++i) po[out_index(plan, i)] += px[i];
  if (kind == Reduce::Mean) {
    const double inv = 1.0 / static_cast<double>(plan.count);
    for (std::int64_t i = 0; i < out.size(); ++i) po[i] *= inv;
  }

  if (tracked(tape, x)) {
    NodeId ix = x.node;
    const double w = kind == Reduce::Mean ? 1.0 / static_cast<double>(plan.count) : 1.0;
    attach(tape, out, {ix}, [ix, plan, w](const Tensor& g, GradSink& sink) {
      Tensor dx = Tensor::zeros(plan.in_dims);
      double* p = dx.mutable_data();
      const double* pg = g.data();
      for (std::int64_t i = 0; i < dx.size(); ++i) p[i] = pg[out_index(plan, i)] * w;
      sink.add(ix, std::move(dx));
    });
  }
  return out;
}

Tensor concat(Tape* tape, const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) fail_validation("concat: no parts");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank)
    fail_validation("concat: invalid axis " + std::to_string(axis));
  std::int64_t axis_total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != rank) fail_validation("concat: rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d == axis) continue;
      if (p.dim(d) != parts[0].dim(d))
        fail_validation("concat: incompatible shapes " + shape_to_string(parts[0].shape()) +
                        " vs " + shape_to_string(p.shape()));
    }
    axis_total += p.dim(axis);
  }

  std::vector<std::int64_t> out_shape = parts[0].shape();
  out_shape[static_cast<std::size_t>(axis)] = axis_total;
  Tensor out = Tensor::zeros(out_shape);

  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[static_cast<std::size_t>(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= out_shape[static_cast<std::size_t>(d)];

  const std::int64_t out_row = axis_total * inner;
  std::int64_t axis_off = 0;
  struct PartInfo {
    NodeId node;
    std::int64_t axis_off, axis_len;
    bool tracked;
  };
  std::vector<PartInfo> infos;
  std::vector<NodeId> ins;
  for (const Tensor& p : parts) {
    const std::int64_t len = p.dim(axis);
    const std::int64_t chunk = len * inner;
    for (std::int64_t o = 0; o < outer; ++o)
      std::memcpy(out.mutable_data() + o * out_row + axis_off * inner, p.data() + o * chunk,
                  static_cast<std::size_t>(chunk) * sizeof(double));
    const bool tp = tracked(tape, p);
    infos.push_back(PartInfo{p.node, axis_off, len, tp});
    if (tp) ins.push_back(p.node);
    axis_off += len;
  }

  if (!ins.empty()) {
    attach(tape, out, std::move(ins),
           [infos, axis, outer, inner, out_row](const Tensor& g, GradSink& sink) {
             for (const PartInfo& info : infos) {
               if (!info.tracked) continue;
               std::vector<std::int64_t> shape = g.shape();
               shape[static_cast<std::size_t>(axis)] = info.axis_len;
               Tensor dp = Tensor::zeros(shape);
               const std::int64_t chunk = info.axis_len * inner;
               for (std::int64_t o = 0; o < outer; ++o)
                 std::memcpy(dp.mutable_data() + o * chunk,
                             g.data() + o * out_row + info.axis_off * inner,
                             static_cast<std::size_t>(chunk) * sizeof(double));
               sink.add(info.node, std::move(dp));
             }
           });
  }
  return out;
}

} // namespace incepse::ops
