#include "grokkd/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace grokkd {

std::string mod_op_name(ModOp op) { return op == ModOp::add ? "add" : "sub"; }

ModOp mod_op_from_name(const std::string& name) {
  if (name == "add") return ModOp::add;
  if (name == "sub") return ModOp::sub;
  throw ConfigError("unknown operator '" + name + "' (expected add or sub)");
}

void TaskSpec::validate() const {
  if (modulus < 2) throw ConfigError("modulus must be >= 2, got " + std::to_string(modulus));
  for (int d = 2; std::int64_t(d) * d <= modulus; ++d) {
    if (modulus % d == 0) {
      throw ConfigError("modulus " + std::to_string(modulus) + " is not prime (divisible by " +
                        std::to_string(d) + ")");
    }
  }
  if (distribution_id.empty()) throw ConfigError("task distribution id must not be empty");
}

Vocab Vocab::build(const std::vector<int>& moduli) {
  if (moduli.empty()) throw ConfigError("vocabulary needs at least one modulus");
  Vocab v;
  v.moduli_ = moduli;
  std::sort(v.moduli_.begin(), v.moduli_.end());
  v.moduli_.erase(std::unique(v.moduli_.begin(), v.moduli_.end()), v.moduli_.end());
  v.n_numeric_ = v.moduli_.back();
  return v;
}

std::int32_t Vocab::numeral_token(int value) const {
  if (value < 0 || value >= n_numeric_) {
    throw IndexError("numeral " + std::to_string(value) + " outside vocabulary range [0," +
                     std::to_string(n_numeric_) + ")");
  }
  return value;
}

std::int32_t Vocab::operator_token(ModOp op) const {
  return n_numeric_ + (op == ModOp::add ? 0 : 1);
}

std::int32_t Vocab::modulus_token(int modulus) const {
  for (std::size_t i = 0; i < moduli_.size(); ++i) {
    if (moduli_[i] == modulus) return std::int32_t(n_numeric_ + 2 + int(i));
  }
  throw IndexError("modulus " + std::to_string(modulus) + " has no vocabulary token");
}

bool Vocab::has_modulus(int modulus) const {
  return std::find(moduli_.begin(), moduli_.end(), modulus) != moduli_.end();
}

std::vector<Example> enumerate_task(const TaskSpec& spec) {
  spec.validate();
  const int p = spec.modulus;
  std::vector<Example> out;
  out.reserve(std::size_t(p) * std::size_t(p));
  for (int a = 0; a < p; ++a) {
    for (int b = 0; b < p; ++b) {
      Example e;
      e.a = a;
      e.b = b;
      e.op = spec.op;
      e.modulus = p;
      e.distribution_id = spec.distribution_id;
      const int raw = spec.op == ModOp::add ? a + b : a - b;
      e.label = ((raw % p) + p) % p;
      out.push_back(std::move(e));
    }
  }
  return out;
}

SplitDataset split(std::vector<Example> examples, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("train fraction must lie in (0,1), got " + std::to_string(fraction));
  }
  const std::size_t n = examples.size();
  const auto n_train = std::size_t(std::floor(fraction * double(n)));
  if (n_train == 0 || n_train == n) {
    throw ConfigError("fraction " + std::to_string(fraction) + " leaves an empty train or test split for " +
                      std::to_string(n) + " examples");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  SplitDataset out;
  out.fraction = fraction;
  out.seed = seed;
  out.train.reserve(n_train);
  out.test.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? out.train : out.test;
    dst.push_back(std::move(examples[order[i]]));
  }
  return out;
}

EncodedBatch encode_batch(const std::vector<Example>& examples, const Vocab& vocab) {
  EncodedBatch out;
  out.batch = std::int64_t(examples.size());
  out.tokens.reserve(examples.size() * 4);
  out.labels.reserve(examples.size());
  for (const Example& e : examples) {
    out.tokens.push_back(vocab.numeral_token(e.a));
    out.tokens.push_back(vocab.numeral_token(e.b));
    out.tokens.push_back(vocab.operator_token(e.op));
    out.tokens.push_back(vocab.modulus_token(e.modulus));
    out.labels.push_back(vocab.numeral_token(e.label));
  }
  return out;
}

std::vector<std::int32_t> remap_modulus_token(const std::vector<std::int32_t>& tokens,
                                              const Vocab& vocab, int teacher_modulus) {
  if (tokens.size() % 4 != 0) throw DimensionError("token matrix must be [B x 4]");
  const std::int32_t t = vocab.modulus_token(teacher_modulus);
  std::vector<std::int32_t> out = tokens;
  for (std::size_t i = 3; i < out.size(); i += 4) out[i] = t;
  return out;
}

std::string dump_dataset(const TaskSpec& spec, const SplitDataset& dataset) {
  std::ostringstream os;
  auto emit = [&](const Example& e, const char* split_name) {
    os << e.a << '\t' << e.b << '\t' << mod_op_name(e.op) << '\t' << e.modulus << '\t' << e.label
       << '\t' << split_name << '\n';
  };
  // Enumeration (a-major) order with each pair labeled by its split.
  std::vector<const Example*> by_pair(std::size_t(spec.modulus) * std::size_t(spec.modulus), nullptr);
  std::vector<bool> is_train(by_pair.size(), false);
  for (const Example& e : dataset.train) {
    const auto idx = std::size_t(e.a) * std::size_t(spec.modulus) + std::size_t(e.b);
    by_pair[idx] = &e;
    is_train[idx] = true;
  }
  for (const Example& e : dataset.test) {
    by_pair[std::size_t(e.a) * std::size_t(spec.modulus) + std::size_t(e.b)] = &e;
  }
  for (std::size_t i = 0; i < by_pair.size(); ++i) {
    if (by_pair[i] == nullptr) {
      throw ContractError("dataset does not cover every ordered pair");
    }
    emit(*by_pair[i], is_train[i] ? "train" : "test");
  }
  return os.str();
}

}  // namespace grokkd
