#pragma once

#include <functional>
#include <vector>

#include "grokkd/tensor.hpp"

namespace grokkd {

// Records the backward rule of every differentiable operation in execution
// order. Recording order is topological by construction, so backward() is a
// single reverse sweep. One tape per training run; not thread-safe.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(const Tensor& output, BackwardFn fn) {
    outputs_.push_back(output);
    ops_.push_back(std::move(fn));
  }

  // Seeds d(loss)/d(loss) = 1 and replays all recorded rules in reverse.
  // Leaf gradients accumulate across calls; gradients of recorded op outputs
  // are zeroed at the start of every sweep so each call adds exactly one
  // d(loss)/d(leaf) contribution.
  void backward(const Tensor& loss);

  void clear() {
    ops_.clear();
    outputs_.clear();
  }
  std::size_t size() const { return ops_.size(); }

 private:
  std::vector<BackwardFn> ops_;
  std::vector<Tensor> outputs_;
};

}  // namespace grokkd
