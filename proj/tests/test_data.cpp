#include <doctest.h>

#include <algorithm>
#include <set>

#include "grokkd/data.hpp"

using namespace grokkd;

namespace {

TaskSpec task(ModOp op, int modulus, const std::string& id) {
  TaskSpec t;
  t.op = op;
  t.modulus = modulus;
  t.distribution_id = id;
  return t;
}

}  // namespace

TEST_CASE("task validation requires primes") {
  CHECK_THROWS_AS(task(ModOp::add, 9, "p1").validate(), ConfigError);
  CHECK_THROWS_AS(task(ModOp::add, 1, "p1").validate(), ConfigError);
  CHECK_NOTHROW(task(ModOp::add, 2, "p1").validate());
  CHECK_NOTHROW(task(ModOp::sub, 113, "p1").validate());
  CHECK_THROWS_AS(task(ModOp::add, 7, "").validate(), ConfigError);
}

TEST_CASE("enumerate_task covers all ordered pairs with correct labels") {
  const auto add113 = enumerate_task(task(ModOp::add, 113, "p1"));
  CHECK(add113.size() == 12769);  // 113^2
  // (5,7) -> 12
  const Example& e = add113[std::size_t(5 * 113 + 7)];
  CHECK(e.a == 5);
  CHECK(e.b == 7);
  CHECK(e.label == 12);

  const auto sub113 = enumerate_task(task(ModOp::sub, 113, "p1"));
  const Example& s = sub113[std::size_t(3 * 113 + 7)];
  CHECK(s.label == 109);  // (3-7) mod 113

  // independent recomputation for every example of a small task, both ops
  for (ModOp op : {ModOp::add, ModOp::sub}) {
    for (const Example& ex : enumerate_task(task(op, 13, "t"))) {
      const int expect = op == ModOp::add ? (ex.a + ex.b) % 13 : ((ex.a - ex.b) % 13 + 13) % 13;
      CHECK(ex.label == expect);
      CHECK(ex.label >= 0);
      CHECK(ex.label < 13);
    }
  }
}

TEST_CASE("split sizes, determinism and partition") {
  auto examples = enumerate_task(task(ModOp::add, 113, "p1"));
  const SplitDataset ds = split(examples, 0.35, 7);
  CHECK(ds.train.size() == 4469);  // floor(0.35 * 12769)
  CHECK(ds.train.size() + ds.test.size() == 12769);

  // partition: every ordered pair appears exactly once
  std::set<std::pair<int, int>> seen;
  for (const Example& e : ds.train) seen.insert({e.a, e.b});
  for (const Example& e : ds.test) seen.insert({e.a, e.b});
  CHECK(seen.size() == 12769);

  // same seed -> identical order; different seed -> different order
  const SplitDataset ds2 = split(enumerate_task(task(ModOp::add, 113, "p1")), 0.35, 7);
  REQUIRE(ds2.train.size() == ds.train.size());
  bool same = true;
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    same = same && ds.train[i].a == ds2.train[i].a && ds.train[i].b == ds2.train[i].b;
  }
  CHECK(same);
  const SplitDataset ds3 = split(enumerate_task(task(ModOp::add, 113, "p1")), 0.35, 8);
  bool differs = false;
  for (std::size_t i = 0; i < ds.train.size() && !differs; ++i) {
    differs = ds.train[i].a != ds3.train[i].a || ds.train[i].b != ds3.train[i].b;
  }
  CHECK(differs);

  // tiny split: 2/2, disjoint
  std::vector<Example> four(enumerate_task(task(ModOp::add, 2, "t")));
  REQUIRE(four.size() == 4);
  const SplitDataset half = split(four, 0.5, 1);
  CHECK(half.train.size() == 2);
  CHECK(half.test.size() == 2);

  CHECK_THROWS_AS(split(four, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split(four, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(split(four, 0.1, 1), ConfigError);  // empty train
}

TEST_CASE("vocab layout is dense, deterministic and shared") {
  const Vocab v = Vocab::build({113, 107});
  CHECK(v.n_numeric() == 113);
  CHECK(v.size() == 113 + 2 + 2);
  CHECK(v.numeral_token(0) == 0);
  CHECK(v.numeral_token(112) == 112);
  CHECK(v.operator_token(ModOp::add) == 113);
  CHECK(v.operator_token(ModOp::sub) == 114);
  CHECK(v.modulus_token(107) == 115);  // ascending modulus order
  CHECK(v.modulus_token(113) == 116);
  CHECK_THROWS_AS(v.numeral_token(113), IndexError);
  CHECK_THROWS_AS(v.modulus_token(41), IndexError);

  // order- and duplicate-insensitive
  CHECK(Vocab::build({107, 113, 107}) == v);
}

TEST_CASE("encode_batch layout and errors") {
  const Vocab v = Vocab::build({113, 107});
  Example e;
  e.a = 5;
  e.b = 7;
  e.op = ModOp::add;
  e.modulus = 113;
  e.label = 12;
  const EncodedBatch enc = encode_batch({e}, v);
  CHECK(enc.batch == 1);
  CHECK(enc.tokens == std::vector<std::int32_t>{5, 7, 113, 116});
  CHECK(enc.labels == std::vector<std::int32_t>{12});

  const EncodedBatch empty = encode_batch({}, v);
  CHECK(empty.batch == 0);
  CHECK(empty.tokens.empty());

  Example bad = e;
  bad.modulus = 41;  // not in vocab
  CHECK_THROWS_AS(encode_batch({bad}, v), IndexError);

  // teacher view: first three tokens unchanged, modulus token remapped
  Example p2 = e;
  p2.modulus = 107;
  const EncodedBatch enc2 = encode_batch({p2}, v);
  const auto remapped = remap_modulus_token(enc2.tokens, v, 113);
  CHECK(remapped[0] == enc2.tokens[0]);
  CHECK(remapped[1] == enc2.tokens[1]);
  CHECK(remapped[2] == enc2.tokens[2]);
  CHECK(remapped[3] == v.modulus_token(113));
}

TEST_CASE("dataset dump format") {
  const TaskSpec t = task(ModOp::sub, 3, "p1");
  const SplitDataset ds = split(enumerate_task(t), 0.5, 3);
  const std::string dump = dump_dataset(t, ds);
  std::size_t lines = std::size_t(std::count(dump.begin(), dump.end(), '\n'));
  CHECK(lines == 9);
  CHECK(dump.find("\tsub\t3\t") != std::string::npos);
  CHECK(dump.find("\ttrain\n") != std::string::npos);
  CHECK(dump.find("\ttest\n") != std::string::npos);
  // first line is the (0,0) pair: 0-0 mod 3 = 0
  CHECK(dump.substr(0, dump.find('\n')).starts_with("0\t0\tsub\t3\t0"));
}
