#include "grokkd/model.hpp"

#include <cmath>
#include <random>

namespace grokkd {

void ModelConfig::validate() const {
  if (n_layers < 1) throw ConfigError("model.n_layers must be >= 1");
  if (d_model < 1 || n_heads < 1 || d_mlp < 1) throw ConfigError("model dimensions must be positive");
  if (d_model % n_heads != 0) {
    throw ConfigError("model.d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (vocab_size < 1) throw ConfigError("model.vocab_size must be set before building parameters");
  if (seq_len != 4) throw ConfigError("model.seq_len must be 4 for [a, b, op, modulus] inputs");
  if (!(init_scale >= 0.0f)) throw ConfigError("model.init_scale must be >= 0");
}

ModelParams::ModelParams(const ModelConfig& config) : config_(config) {
  config_.validate();
  const std::int64_t v = config.vocab_size, d = config.d_model, m = config.d_mlp;
  auto push = [&](const std::string& name, Shape shape) {
    params_.emplace_back(name, Tensor::zeros(std::move(shape)));
  };
  push("tok_emb", {v, d});
  push("pos_emb", {config.seq_len, d});
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    push(p + "ln1.gain", {d});
    push(p + "ln1.bias", {d});
    push(p + "attn.wq", {d, d});
    push(p + "attn.wk", {d, d});
    push(p + "attn.wv", {d, d});
    push(p + "attn.wo", {d, d});
    push(p + "ln2.gain", {d});
    push(p + "ln2.bias", {d});
    push(p + "mlp.w_in", {d, m});
    push(p + "mlp.w_out", {m, d});
  }
  push("ln_f.gain", {d});
  push("ln_f.bias", {d});
  push("unembed", {d, v});
}

Tensor& ModelParams::at(const std::string& name) {
  for (auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw ContractError("no parameter named '" + name + "'");
}

const Tensor& ModelParams::at(const std::string& name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw ContractError("no parameter named '" + name + "'");
}

std::int64_t ModelParams::param_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void ModelParams::set_requires_grad(bool enabled) {
  for (auto& [name, t] : params_) t.set_requires_grad(enabled);
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams out(config_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.params_[i].second.values() = params_[i].second.values();
  }
  return out;
}

namespace {

bool is_layer_norm_param(const std::string& name) {
  return name.find("ln") != std::string::npos;
}

}  // namespace

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  ModelParams params(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (auto& [name, t] : params.named()) {
    if (is_layer_norm_param(name)) {
      const float fill = name.ends_with(".gain") ? 1.0f : 0.0f;
      for (auto& v : t.values()) v = fill;
    } else {
      for (auto& v : t.values()) v = normal(rng) * config.init_scale;
    }
  }
  return params;
}

Tensor forward(const ModelParams& params, std::span<const std::int32_t> tokens,
               std::int64_t batch, Tape* tape) {
  const ModelConfig& cfg = params.config();
  const std::int64_t t_len = cfg.seq_len;
  if (std::int64_t(tokens.size()) != batch * t_len) {
    throw DimensionError("forward: token buffer holds " + std::to_string(tokens.size()) +
                         " ids, expected " + std::to_string(batch * t_len));
  }
  if (batch == 0) return Tensor();  // empty logits
  const std::int64_t rows = batch * t_len;
  const std::int64_t d = cfg.d_model;

  std::vector<std::int32_t> pos_ids(static_cast<std::size_t>(rows));
  for (std::int64_t i = 0; i < rows; ++i) pos_ids[std::size_t(i)] = std::int32_t(i % t_len);

  Tensor tok = ops::embedding_lookup(params.at("tok_emb"), tokens, tape);
  Tensor pos = ops::embedding_lookup(params.at("pos_emb"), pos_ids, tape);
  Tensor x = ops::add(tok, pos, tape);  // [rows, d]

  const double att_scale = 1.0 / std::sqrt(double(d / cfg.n_heads));
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Tensor h = ops::layer_norm(x, params.at(p + "ln1.gain"), params.at(p + "ln1.bias"),
                               kLayerNormEps, tape);
    Tensor q = ops::matmul(h, params.at(p + "attn.wq"), tape);
    Tensor k = ops::matmul(h, params.at(p + "attn.wk"), tape);
    Tensor v = ops::matmul(h, params.at(p + "attn.wv"), tape);
    Tensor qh = ops::split_heads(q.reshaped({batch, t_len, d}), cfg.n_heads, tape);
    Tensor kh = ops::split_heads(k.reshaped({batch, t_len, d}), cfg.n_heads, tape);
    Tensor vh = ops::split_heads(v.reshaped({batch, t_len, d}), cfg.n_heads, tape);
    Tensor scores = ops::scale(ops::bmm_nt(qh, kh, tape), att_scale, tape);
    Tensor attn = ops::causal_row_softmax(scores, tape);
    Tensor mixed = ops::bmm(attn, vh, tape);
    Tensor merged = ops::merge_heads(mixed, cfg.n_heads, tape).reshaped({rows, d});
    Tensor att_out = ops::matmul(merged, params.at(p + "attn.wo"), tape);
    x = ops::add(x, att_out, tape);

    Tensor h2 = ops::layer_norm(x, params.at(p + "ln2.gain"), params.at(p + "ln2.bias"),
                                kLayerNormEps, tape);
    Tensor hidden = ops::relu(ops::matmul(h2, params.at(p + "mlp.w_in"), tape), tape);
    Tensor mlp_out = ops::matmul(hidden, params.at(p + "mlp.w_out"), tape);
    x = ops::add(x, mlp_out, tape);
  }

  Tensor xf = ops::layer_norm(x, params.at("ln_f.gain"), params.at("ln_f.bias"), kLayerNormEps, tape);
  Tensor logits = ops::matmul(xf, params.at("unembed"), tape);
  return logits.reshaped({batch, t_len, std::int64_t(cfg.vocab_size)});
}

Tensor logits_at(const Tensor& logits, std::int64_t position, Tape* tape) {
  if (position != kOperatorPosition && position != kAnswerPosition) {
    throw ContractError("logits_at supports the operator (2) or answer (3) position, got " +
                        std::to_string(position));
  }
  return ops::select_position(logits, position, tape);
}

double param_l2_norm(const ModelParams& params) {
  double acc = 0.0;
  for (const auto& [name, t] : params.named()) {
    for (float v : t.values()) acc += double(v) * double(v);
  }
  return std::sqrt(acc);
}

}  // namespace grokkd
