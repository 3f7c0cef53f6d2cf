#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grokkd/ops.hpp"
#include "grokkd/tape.hpp"
#include "grokkd/tensor.hpp"

namespace grokkd {

// Decoder-only transformer over 4-token sequences [a, b, op, modulus].
// Pre-norm residual blocks, learned positions, no biases on projections,
// no dropout.
struct ModelConfig {
  int n_layers = 1;
  int d_model = 128;
  int n_heads = 4;
  int d_mlp = 512;  // 4 * d_model by default
  int vocab_size = 0;
  int seq_len = 4;
  float init_scale = 0.02f;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

constexpr double kLayerNormEps = 1e-5;
constexpr std::int64_t kOperatorPosition = 2;
constexpr std::int64_t kAnswerPosition = 3;

class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(const ModelConfig& config);  // zero tensors, canonical name order

  const ModelConfig& config() const { return config_; }
  const std::vector<std::pair<std::string, Tensor>>& named() const { return params_; }
  std::vector<std::pair<std::string, Tensor>>& named() { return params_; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::int64_t param_count() const;
  void set_requires_grad(bool enabled);
  void zero_grad();
  ModelParams clone() const;  // deep copy, gradient tracking off

 private:
  ModelConfig config_;
  std::vector<std::pair<std::string, Tensor>> params_;
};

// Seeded N(0, init_scale) for embeddings and projections; layer-norm gains 1,
// biases 0. Same (config, seed) gives bit-identical parameters.
ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

// tokens is row-major [batch x seq_len]; returns logits [batch, seq_len, vocab].
Tensor forward(const ModelParams& params, std::span<const std::int32_t> tokens,
               std::int64_t batch, Tape* tape);

// position must be the operator (2) or answer (3) slot.
Tensor logits_at(const Tensor& logits, std::int64_t position, Tape* tape);

// sqrt of the sum of squares over every parameter entry (f64 accumulation).
double param_l2_norm(const ModelParams& params);

}  // namespace grokkd
