#include "incepse/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "incepse/errors.hpp"

namespace incepse {

namespace {
std::atomic<bool> g_finite_checks{false};
} // namespace

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }

std::int64_t numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace {
void validate_shape(const std::vector<std::int64_t>& shape) {
  if (shape.empty() || shape.size() > 3)
    fail_validation("tensor rank must be 1..3, got " + shape_to_string(shape));
  for (auto d : shape)
    if (d < 1) fail_validation("tensor dims must be >= 1, got " + shape_to_string(shape));
}

void check_finite(const std::vector<double>& v) {
  if (!finite_checks_enabled()) return;
  for (double x : v)
    if (!std::isfinite(x)) fail_runtime("non-finite value in tensor");
}
} // namespace

Tensor Tensor::zeros(std::vector<std::int64_t> shape) {
  validate_shape(shape);
  Tensor t;
  t.storage_ = std::make_shared<std::vector<double>>(static_cast<std::size_t>(numel(shape)), 0.0);
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
  validate_shape(shape);
  Tensor t;
  t.storage_ =
      std::make_shared<std::vector<double>>(static_cast<std::size_t>(numel(shape)), value);
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::from_values(std::vector<std::int64_t> shape, std::vector<double> values) {
  validate_shape(shape);
  if (numel(shape) != static_cast<std::int64_t>(values.size()))
    fail_validation("length mismatch: shape " + shape_to_string(shape) + " needs " +
                    std::to_string(numel(shape)) + " values, got " +
                    std::to_string(values.size()));
  check_finite(values);
  Tensor t;
  t.storage_ = std::make_shared<std::vector<double>>(std::move(values));
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.storage_ = std::make_shared<std::vector<double>>(*storage_);
  return t;
}

} // namespace incepse
