#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "grokkd/errors.hpp"

namespace grokkd {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& shape);
std::int64_t shape_numel(const Shape& shape);

namespace detail {

struct Storage {
  std::vector<float> value;
  std::vector<float> grad;  // same length as value once requires_grad is set
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
  }
};

}  // namespace detail

// Dense row-major f32 tensor. Copies are shallow: they alias the same value
// and gradient storage, which is what the tape relies on.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float fill);
  static Tensor scalar(float v);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return shape_; }
  std::int64_t numel() const { return storage_ ? std::int64_t(storage_->value.size()) : 0; }
  std::int64_t dim(int i) const { return shape_.at(std::size_t(i)); }
  int rank() const { return int(shape_.size()); }

  float* data() { return storage_->value.data(); }
  const float* data() const { return storage_->value.data(); }
  std::vector<float>& values() { return storage_->value; }
  const std::vector<float>& values() const { return storage_->value; }

  bool requires_grad() const { return storage_ && storage_->requires_grad; }
  Tensor& set_requires_grad(bool enabled);
  float* grad_data();
  const float* grad_data() const;
  const std::vector<float>& grad() const;
  void zero_grad();

  // Scalar access; contract-checked.
  float item() const;

  // View with a different shape over the same storage (and gradient).
  Tensor reshaped(Shape shape) const;

  // Same values, fresh storage, no gradient tracking.
  Tensor detached_copy() const;

  bool all_finite() const;

  bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

 private:
  std::shared_ptr<detail::Storage> storage_;
  Shape shape_;
};

}  // namespace grokkd
