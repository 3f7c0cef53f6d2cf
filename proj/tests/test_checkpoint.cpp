#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "grokkd/checkpoint.hpp"

using namespace grokkd;

namespace {

CheckpointMeta demo_meta() {
  CheckpointMeta meta;
  meta.model.n_layers = 1;
  meta.model.d_model = 8;
  meta.model.n_heads = 2;
  meta.model.d_mlp = 16;
  meta.model.vocab_size = 10;
  meta.model.init_scale = 0.02f;
  TaskSpec t;
  t.op = ModOp::add;
  t.modulus = 7;
  t.distribution_id = "p1";
  meta.tasks = {t};
  meta.vocab_moduli = {5, 7};
  meta.scenario = "scratch";
  return meta;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  const CheckpointMeta meta = demo_meta();
  ModelParams params = init_model(meta.model, 77);
  const auto bytes = checkpoint_serialize(params, meta);
  CHECK(bytes.size() > 8);
  CHECK(bytes[0] == 'G');
  CHECK(bytes[1] == 'R');
  CHECK(bytes[2] == 'K');
  CHECK(bytes[3] == 'D');

  Checkpoint loaded = checkpoint_parse(bytes);
  CHECK(loaded.meta.model == meta.model);
  CHECK(loaded.meta.vocab_moduli == meta.vocab_moduli);
  CHECK(loaded.meta.scenario == "scratch");
  REQUIRE(loaded.meta.tasks.size() == 1);
  CHECK(loaded.meta.tasks[0].modulus == 7);

  // re-serialization reproduces identical bytes
  const auto again = checkpoint_serialize(loaded.params, loaded.meta);
  CHECK(again == bytes);
}

TEST_CASE("checkpoint file io") {
  const std::string path = (std::filesystem::temp_directory_path() / "grokkd_ck_test.grkd").string();
  const CheckpointMeta meta = demo_meta();
  ModelParams params = init_model(meta.model, 3);
  checkpoint_save(params, meta, path);
  Checkpoint loaded = checkpoint_load(path);
  for (std::size_t i = 0; i < params.named().size(); ++i) {
    CHECK(params.named()[i].second.values() == loaded.params.named()[i].second.values());
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(checkpoint_load(path), IoError);
}

TEST_CASE("checkpoint format errors carry offsets") {
  const CheckpointMeta meta = demo_meta();
  ModelParams params = init_model(meta.model, 1);
  auto bytes = checkpoint_serialize(params, meta);

  // bad magic
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(checkpoint_parse(bad_magic), FormatError);

  // unsupported version
  auto bad_version = bytes;
  bad_version[4] = 2;
  try {
    checkpoint_parse(bad_version);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }

  // truncation at several depths: never a partial model, always an offset
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t(6), std::size_t(2)}) {
    auto truncated = bytes;
    truncated.resize(cut);
    try {
      checkpoint_parse(truncated);
      FAIL("expected FormatError for cut at ", cut);
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
  }

  // trailing garbage is rejected
  auto padded = bytes;
  padded.push_back(0);
  CHECK_THROWS_AS(checkpoint_parse(padded), FormatError);
}
