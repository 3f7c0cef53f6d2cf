#include "grokkd/losses.hpp"

#include <cmath>

#include "grokkd/errors.hpp"
#include "grokkd/ops.hpp"

namespace grokkd {

std::string kd_position_name(KdPosition p) {
  switch (p) {
    case KdPosition::operator_token: return "operator";
    case KdPosition::answer: return "answer";
    case KdPosition::both: return "both";
  }
  return "operator";
}

KdPosition kd_position_from_name(const std::string& name) {
  if (name == "operator") return KdPosition::operator_token;
  if (name == "answer") return KdPosition::answer;
  if (name == "both") return KdPosition::both;
  throw ConfigError("loss.kd_position must be operator, answer or both, got '" + name + "'");
}

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("loss.alpha must lie in [0,1], got " + std::to_string(alpha));
  }
  if (!(temperature > 0.0)) {
    throw ConfigError("loss.temperature must be positive, got " + std::to_string(temperature));
  }
}

double stablemax_transform(double x) {
  return x >= 0.0 ? std::log1p(x) : -std::log1p(-x);
}

Tensor stablemax(const Tensor& logits, Tape* tape) {
  return ops::row_softmax(ops::signed_log1p(logits, tape), 1.0, tape);
}

Tensor stablemax_ce(const Tensor& logits, std::span<const std::int32_t> labels, Tape* tape) {
  Tensor log_probs = ops::row_log_softmax(ops::signed_log1p(logits, tape), 1.0, tape);
  Tensor picked = ops::select_index(log_probs, labels, tape);
  return ops::neg(ops::mean(picked, tape), tape);
}

Tensor kl_distill(const Tensor& teacher_logits, const Tensor& student_logits, double temperature,
                  Tape* tape) {
  if (teacher_logits.shape() != student_logits.shape()) {
    throw DimensionError("kl_distill: teacher shape " + shape_str(teacher_logits.shape()) +
                         " does not match student shape " + shape_str(student_logits.shape()));
  }
  if (student_logits.rank() != 2) {
    throw DimensionError("kl_distill expects [B,K] logits, got " + shape_str(student_logits.shape()));
  }
  const std::int64_t batch = student_logits.dim(0);

  // Teacher side is constant; same code path as the student's log-softmax so
  // that identical logits cancel exactly.
  Tensor q_t = ops::row_softmax(teacher_logits, temperature, nullptr);
  Tensor log_q_t = ops::row_log_softmax(teacher_logits, temperature, nullptr);
  double teacher_term = 0.0;
  {
    const float* q = q_t.data();
    const float* lq = log_q_t.data();
    for (std::int64_t i = 0; i < q_t.numel(); ++i) teacher_term += double(q[i] * lq[i]);
  }

  Tensor log_q_s = ops::row_log_softmax(student_logits, temperature, tape);
  Tensor cross = ops::sum(ops::mul(q_t, log_q_s, tape), tape);
  Tensor kl_sum = ops::sub(Tensor::scalar(float(teacher_term)), cross, tape);
  return ops::scale(kl_sum, 1.0 / double(batch), tape);
}

Tensor total_loss(const Tensor& ce, const Tensor& kl, double alpha, Tape* tape) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ContractError("total_loss alpha must lie in [0,1], got " + std::to_string(alpha));
  }
  return ops::add(ops::scale(ce, 1.0 - alpha, tape), ops::scale(kl, alpha, tape), tape);
}

}  // namespace grokkd
