#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grokkd/data.hpp"
#include "grokkd/model.hpp"

namespace grokkd {

// Run provenance stored in the checkpoint's JSON block. The vocabulary is
// part of the contract: distillation requires teacher and student to share
// the exact token space.
struct CheckpointMeta {
  ModelConfig model;
  std::vector<int> vocab_moduli;
  std::vector<TaskSpec> tasks;
  std::string scenario;

  Vocab vocab() const { return Vocab::build(vocab_moduli); }
};

struct Checkpoint {
  ModelParams params;
  CheckpointMeta meta;
};

// Container layout: "GRKD", version u32 LE, config-JSON length u32 LE,
// config JSON, tensor count u32 LE, then per tensor: name length u16 LE,
// UTF-8 name, rank u8, extents u32 LE each, f32 LE row-major data.
// Round-trips are bit-exact.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> checkpoint_serialize(const ModelParams& params, const CheckpointMeta& meta);
Checkpoint checkpoint_parse(const std::vector<std::uint8_t>& bytes);

void checkpoint_save(const ModelParams& params, const CheckpointMeta& meta, const std::string& path);
Checkpoint checkpoint_load(const std::string& path);

}  // namespace grokkd
