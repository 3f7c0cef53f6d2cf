#include "grokkd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace grokkd {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'G', 'R', 'K', 'D'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v & 0xff));
  out.push_back(std::uint8_t(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t offset = 0;

  void need(std::size_t n, const char* what) const {
    if (offset + n > bytes.size()) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what, offset);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes[offset++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = std::uint16_t(bytes[offset]) | std::uint16_t(bytes[offset + 1]) << 8;
    offset += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[offset + std::size_t(i)]) << (8 * i);
    offset += 4;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes.data() + offset), n);
    offset += n;
    return s;
  }
};

json meta_to_json(const CheckpointMeta& meta) {
  json tasks = json::array();
  for (const TaskSpec& t : meta.tasks) {
    tasks.push_back({{"distribution_id", t.distribution_id},
                     {"modulus", t.modulus},
                     {"operator", mod_op_name(t.op)}});
  }
  return json{{"model",
               {{"n_layers", meta.model.n_layers},
                {"d_model", meta.model.d_model},
                {"n_heads", meta.model.n_heads},
                {"d_mlp", meta.model.d_mlp},
                {"vocab_size", meta.model.vocab_size},
                {"seq_len", meta.model.seq_len},
                {"init_scale", meta.model.init_scale}}},
              {"scenario", meta.scenario},
              {"tasks", tasks},
              {"vocab_moduli", meta.vocab_moduli}};
}

CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta meta;
  const json& m = j.at("model");
  meta.model.n_layers = m.at("n_layers").get<int>();
  meta.model.d_model = m.at("d_model").get<int>();
  meta.model.n_heads = m.at("n_heads").get<int>();
  meta.model.d_mlp = m.at("d_mlp").get<int>();
  meta.model.vocab_size = m.at("vocab_size").get<int>();
  meta.model.seq_len = m.at("seq_len").get<int>();
  meta.model.init_scale = m.at("init_scale").get<float>();
  meta.scenario = j.at("scenario").get<std::string>();
  for (const json& t : j.at("tasks")) {
    TaskSpec spec;
    spec.distribution_id = t.at("distribution_id").get<std::string>();
    spec.modulus = t.at("modulus").get<int>();
    spec.op = mod_op_from_name(t.at("operator").get<std::string>());
    meta.tasks.push_back(std::move(spec));
  }
  meta.vocab_moduli = j.at("vocab_moduli").get<std::vector<int>>();
  return meta;
}

}  // namespace

std::vector<std::uint8_t> checkpoint_serialize(const ModelParams& params, const CheckpointMeta& meta) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);

  const std::string config = meta_to_json(meta).dump();
  put_u32(out, std::uint32_t(config.size()));
  out.insert(out.end(), config.begin(), config.end());

  put_u32(out, std::uint32_t(params.named().size()));
  for (const auto& [name, tensor] : params.named()) {
    put_u16(out, std::uint16_t(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(std::uint8_t(tensor.rank()));
    for (auto d : tensor.shape()) put_u32(out, std::uint32_t(d));
    for (float v : tensor.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint checkpoint_parse(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  const std::string magic = r.str(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw FormatError("bad checkpoint magic (expected GRKD)", 0);
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                          " (this build reads version " + std::to_string(kCheckpointVersion) + ")",
                      4);
  }
  const std::uint32_t config_len = r.u32("config length");
  const std::string config = r.str(config_len, "config JSON");

  CheckpointMeta meta;
  try {
    meta = meta_from_json(nlohmann::json::parse(config));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid checkpoint config JSON: ") + e.what(), 12);
  }

  ModelParams params(meta.model);
  const std::uint32_t count = r.u32("tensor count");
  if (count != params.named().size()) {
    throw FormatError("checkpoint has " + std::to_string(count) + " tensors, config implies " +
                          std::to_string(params.named().size()),
                      r.offset);
  }
  std::vector<bool> seen(params.named().size(), false);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16("tensor name length");
    const std::string name = r.str(name_len, "tensor name");
    const std::uint8_t rank = r.u8("tensor rank");
    Shape shape;
    for (std::uint8_t d = 0; d < rank; ++d) shape.push_back(std::int64_t(r.u32("tensor extent")));

    std::size_t index = params.named().size();
    for (std::size_t p = 0; p < params.named().size(); ++p) {
      if (params.named()[p].first == name) {
        index = p;
        break;
      }
    }
    if (index == params.named().size()) {
      throw FormatError("unknown tensor '" + name + "' in checkpoint", r.offset);
    }
    if (seen[index]) throw FormatError("duplicate tensor '" + name + "' in checkpoint", r.offset);
    seen[index] = true;

    Tensor& dst = params.named()[index].second;
    if (shape != dst.shape()) {
      throw FormatError("tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                            shape_str(dst.shape()),
                        r.offset);
    }
    for (std::int64_t j = 0; j < dst.numel(); ++j) {
      dst.data()[j] = std::bit_cast<float>(r.u32("tensor data"));
    }
  }
  if (r.offset != bytes.size()) {
    throw FormatError("trailing bytes after checkpoint payload", r.offset);
  }
  return Checkpoint{std::move(params), std::move(meta)};
}

void checkpoint_save(const ModelParams& params, const CheckpointMeta& meta, const std::string& path) {
  const std::vector<std::uint8_t> bytes = checkpoint_serialize(params, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint to '" + path + "'");
}

Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_parse(bytes);
}

}  // namespace grokkd
