#include "grokkd/tape.hpp"

#include "grokkd/errors.hpp"

namespace grokkd {

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_str(loss.defined() ? loss.shape() : Shape{}));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward requires a gradient-tracked loss");
  }
  for (Tensor& out : outputs_) out.zero_grad();
  Tensor seed = loss;  // aliasing handle
  seed.grad_data()[0] += 1.0f;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

}  // namespace grokkd
