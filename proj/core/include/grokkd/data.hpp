#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grokkd/errors.hpp"

namespace grokkd {

enum class ModOp { add, sub };

std::string mod_op_name(ModOp op);
ModOp mod_op_from_name(const std::string& name);

// One modular-arithmetic distribution: (a op b) mod modulus.
struct TaskSpec {
  ModOp op = ModOp::add;
  int modulus = 0;
  std::string distribution_id;

  // Throws ConfigError unless modulus is a prime >= 2 (trial division).
  void validate() const;

  bool operator==(const TaskSpec&) const = default;
};

// Shared token alphabet. Ids are dense: numerals 0..n_numeric-1, then one
// token per operator (add, sub), then one per modulus in ascending order.
// Teacher and student must use the identical vocabulary so their logit
// spaces align.
class Vocab {
 public:
  Vocab() = default;
  // moduli: every distinct modulus in the experiment (tasks plus any extras).
  static Vocab build(const std::vector<int>& moduli);

  int size() const { return n_numeric_ + 2 + int(moduli_.size()); }
  int n_numeric() const { return n_numeric_; }
  const std::vector<int>& moduli() const { return moduli_; }

  std::int32_t numeral_token(int value) const;
  std::int32_t operator_token(ModOp op) const;
  std::int32_t modulus_token(int modulus) const;
  bool has_modulus(int modulus) const;

  bool operator==(const Vocab& other) const = default;

 private:
  int n_numeric_ = 0;
  std::vector<int> moduli_;  // ascending, unique
};

struct Example {
  std::int32_t a = 0;
  std::int32_t b = 0;
  std::int32_t label = 0;
  ModOp op = ModOp::add;
  std::int32_t modulus = 0;
  std::string distribution_id;
};

// All P^2 ordered pairs, one Example each. Subtraction uses mathematical mod
// (labels always in [0, P)).
std::vector<Example> enumerate_task(const TaskSpec& spec);

struct SplitDataset {
  std::vector<Example> train;
  std::vector<Example> test;
  double fraction = 0.0;
  std::uint64_t seed = 0;
};

// Seeded shuffle, then |train| = floor(f * n) prefix. Deterministic in
// (examples, f, seed). Throws ConfigError when either side would be empty.
SplitDataset split(std::vector<Example> examples, double fraction, std::uint64_t seed);

struct EncodedBatch {
  std::vector<std::int32_t> tokens;  // row-major [B x 4]: a, b, op, modulus
  std::vector<std::int32_t> labels;  // [B]
  std::int64_t batch = 0;
};

EncodedBatch encode_batch(const std::vector<Example>& examples, const Vocab& vocab);

// Teacher view for cross-distribution distillation: same [a, b, op] prefix,
// the position-3 modulus token replaced with the teacher's own.
std::vector<std::int32_t> remap_modulus_token(const std::vector<std::int32_t>& tokens,
                                              const Vocab& vocab, int teacher_modulus);

// Text dump, one line per example: a<TAB>b<TAB>op<TAB>P<TAB>label<TAB>split.
std::string dump_dataset(const TaskSpec& spec, const SplitDataset& dataset);

}  // namespace grokkd
