#pragma once

#include <vector>

#include "incepse/tape.hpp"
#include "incepse/tensor.hpp"

namespace incepse::ops {

/// Build a tensor from raw values. With `requires_grad` and a tape, the
/// tensor is registered as a tape leaf. Throws on shape/value mismatch.
Tensor build_tensor(Tape* tape, std::vector<std::int64_t> shape, std::vector<double> values,
                    bool requires_grad = false);

// Elementwise ops. Binary ops require identical shapes; the only implicit
// broadcast anywhere is the scalar constant in `scale`.
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& a, double factor);
Tensor relu(Tape* tape, const Tensor& a);
Tensor sigmoid(Tape* tape, const Tensor& a);

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);

enum class Reduce { Sum, Mean };

/// Reduce over `axes`. Reduced axes are removed from the shape; reducing
/// every axis yields shape [1].
Tensor reduce(Tape* tape, Reduce kind, const Tensor& x, std::vector<int> axes);

/// Concatenate along `axis`; all other dims must agree.
Tensor concat(Tape* tape, const std::vector<Tensor>& parts, int axis);

} // namespace incepse::ops
