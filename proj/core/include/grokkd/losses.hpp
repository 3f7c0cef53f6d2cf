#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "grokkd/tape.hpp"
#include "grokkd/tensor.hpp"

namespace grokkd {

enum class KdPosition { operator_token, answer, both };

std::string kd_position_name(KdPosition p);
KdPosition kd_position_from_name(const std::string& name);

struct LossConfig {
  double alpha = 0.5;        // KL weight in the blended loss
  double temperature = 2.0;  // softening temperature for distillation
  KdPosition kd_position = KdPosition::operator_token;
  bool scaled_kl = false;  // multiply the KL term by t^2 (off: literal blend)

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

// g(x) = log(x+1) for x >= 0, -log(-x+1) otherwise.
double stablemax_transform(double x);

// softmax(g(x)) over the last axis; finite even for |x| up to 1e30.
Tensor stablemax(const Tensor& logits, Tape* tape);

// Mean over the batch of -log stablemax(logits)[label].
Tensor stablemax_ce(const Tensor& logits, std::span<const std::int32_t> labels, Tape* tape);

// Mean over the batch of KL(softmax(teacher/t) || softmax(student/t)).
// The teacher side is a constant; gradients flow only into student logits.
Tensor kl_distill(const Tensor& teacher_logits, const Tensor& student_logits, double temperature,
                  Tape* tape);

// (1 - alpha) * ce + alpha * kl.
Tensor total_loss(const Tensor& ce, const Tensor& kl, double alpha, Tape* tape);

}  // namespace grokkd
