#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grokkd/model.hpp"

namespace grokkd {

enum class OptimizerKind { adam, adamw };

std::string optimizer_name(OptimizerKind k);
OptimizerKind optimizer_from_name(const std::string& name);

struct OptimConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled; used by adamw_step only
  double clip_norm = 0.0;     // 0 disables gradient clipping
  std::vector<std::string> decay_exclude;  // parameter names never decayed

  void validate() const;
  bool operator==(const OptimConfig&) const = default;
};

// First/second moment estimates mirroring the parameter tensors, plus the
// bias-correction step counter.
struct AdamState {
  AdamState() = default;
  explicit AdamState(const ModelParams& params);

  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::int64_t step = 0;
};

// Adam with bias correction; ignores weight decay entirely.
void adam_step(ModelParams& params, AdamState& state, const OptimConfig& config);

// Adam plus decoupled decay theta <- theta - lr * weight_decay * theta,
// applied to the pre-update parameter value. With weight_decay = 0 this is
// the exact adam_step code path.
void adamw_step(ModelParams& params, AdamState& state, const OptimConfig& config);

}  // namespace grokkd
