#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace incepse {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

std::int64_t numel(const std::vector<std::int64_t>& shape);
std::string shape_to_string(const std::vector<std::int64_t>& shape);

/// Enable NaN/Inf assertions in tensor-producing ops (debug mode, off by
/// default). Checked at tensor construction and after op kernels.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

/// Dense row-major real tensor, rank 1..3. Values are stored as 64-bit
/// reals. Tensors are immutable once built; `mutable_data` exists for the
/// few single-writer paths (parameter init, optimizer step, checkpoint
/// load) that own their tensors.
///
/// A tensor may carry a tape handle (`node`) identifying it on exactly one
/// tape; `tape_gen` pairs the handle with the issuing tape so handles from
/// discarded tapes are never misread.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::int64_t> shape);
  static Tensor full(std::vector<std::int64_t> shape, double value);
  static Tensor from_values(std::vector<std::int64_t> shape, std::vector<double> values);

  bool defined() const { return storage_ != nullptr; }
  const std::vector<std::int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::int64_t size() const { return storage_ ? static_cast<std::int64_t>(storage_->size()) : 0; }

  const double* data() const { return storage_->data(); }
  double* mutable_data() { return storage_->data(); }
  const std::vector<double>& values() const { return *storage_; }

  double at(std::int64_t i) const { return (*storage_)[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i, std::int64_t j) const {
    return (*storage_)[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return (*storage_)[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }

  /// Deep copy with fresh storage and no tape linkage.
  Tensor clone() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  NodeId node = kNoNode;
  std::uint64_t tape_gen = 0;
  bool requires_grad = false;

private:
  std::vector<std::int64_t> shape_;
  std::shared_ptr<std::vector<double>> storage_;
};

} // namespace incepse
