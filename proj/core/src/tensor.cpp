#include "grokkd/tensor.hpp"

#include <cmath>
#include <sstream>

namespace grokkd {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, std::vector<float> values, bool requires_grad) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d <= 0) throw DimensionError("tensor extent must be positive, got shape " + shape_str(shape_));
  }
  if (shape_numel(shape_) != std::int64_t(values.size())) {
    throw DimensionError("shape " + shape_str(shape_) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  storage_ = std::make_shared<detail::Storage>();
  storage_->value = std::move(values);
  if (requires_grad) set_requires_grad(true);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = std::size_t(shape_numel(shape));
  return Tensor(std::move(shape), std::vector<float>(n, 0.0f), requires_grad);
}

Tensor Tensor::full(Shape shape, float fill) {
  auto n = std::size_t(shape_numel(shape));
  return Tensor(std::move(shape), std::vector<float>(n, fill));
}

Tensor Tensor::scalar(float v) { return Tensor({1}, {v}); }

Tensor& Tensor::set_requires_grad(bool enabled) {
  storage_->requires_grad = enabled;
  if (enabled) storage_->ensure_grad();
  return *this;
}

float* Tensor::grad_data() {
  storage_->ensure_grad();
  return storage_->grad.data();
}

const float* Tensor::grad_data() const { return storage_->grad.data(); }

const std::vector<float>& Tensor::grad() const { return storage_->grad; }

void Tensor::zero_grad() {
  if (storage_) storage_->grad.assign(storage_->value.size(), 0.0f);
}

float Tensor::item() const {
  if (!storage_ || storage_->value.size() != 1) {
    throw ContractError("item() requires a scalar tensor, got shape " + shape_str(shape_));
  }
  return storage_->value[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot view shape " + shape_str(shape_) + " as " + shape_str(shape));
  }
  Tensor t;
  t.storage_ = storage_;
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::detached_copy() const {
  return Tensor(shape_, storage_->value);
}

bool Tensor::all_finite() const {
  for (float v : storage_->value) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace grokkd
