#include "grokkd/optim.hpp"

#include <algorithm>
#include <cmath>

namespace grokkd {

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "adamw"; }

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "adamw") return OptimizerKind::adamw;
  throw ConfigError("optimizer.kind must be adam or adamw, got '" + name + "'");
}

void OptimConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("optimizer.lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("optimizer.beta1 must lie in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("optimizer.beta2 must lie in [0,1)");
  if (!(eps > 0.0)) throw ConfigError("optimizer.eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay must be >= 0");
  if (!(clip_norm >= 0.0)) throw ConfigError("optimizer.clip_norm must be >= 0");
}

AdamState::AdamState(const ModelParams& params) {
  m.reserve(params.named().size());
  v.reserve(params.named().size());
  for (const auto& [name, t] : params.named()) {
    m.emplace_back(std::size_t(t.numel()), 0.0f);
    v.emplace_back(std::size_t(t.numel()), 0.0f);
  }
}

namespace {

void adam_update_impl(ModelParams& params, AdamState& state, const OptimConfig& config,
                      double lambda) {
  auto& named = params.named();
  if (state.m.size() != named.size()) {
    throw ContractError("optimizer state does not match the parameter set");
  }

  for (std::size_t i = 0; i < named.size(); ++i) {
    const Tensor& t = named[i].second;
    const float* g = t.grad().data();
    if (t.grad().size() != t.values().size()) {
      throw ContractError("parameter '" + named[i].first + "' has no gradient buffer");
    }
    for (std::int64_t j = 0; j < t.numel(); ++j) {
      if (!std::isfinite(g[j])) {
        throw NanAbortError("gradient for parameter '" + named[i].first + "'",
                            state.step + 1);
      }
    }
  }

  double clip_scale = 1.0;
  if (config.clip_norm > 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < named.size(); ++i) {
      for (float g : named[i].second.grad()) sq += double(g) * double(g);
    }
    const double norm = std::sqrt(sq);
    if (norm > config.clip_norm) clip_scale = config.clip_norm / norm;
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, double(state.step));

  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensor& t = named[i].second;
    const bool decay_this = lambda != 0.0 &&
                            std::find(config.decay_exclude.begin(), config.decay_exclude.end(),
                                      named[i].first) == config.decay_exclude.end();
    const double decay_factor = decay_this ? 1.0 - config.lr * lambda : 1.0;
    float* theta = t.data();
    const float* g = t.grad().data();
    float* m = state.m[i].data();
    float* v = state.v[i].data();
    for (std::int64_t j = 0; j < t.numel(); ++j) {
      const double gj = double(g[j]) * clip_scale;
      const double mj = config.beta1 * double(m[j]) + (1.0 - config.beta1) * gj;
      const double vj = config.beta2 * double(v[j]) + (1.0 - config.beta2) * gj * gj;
      m[j] = float(mj);
      v[j] = float(vj);
      const double m_hat = mj / bc1;
      const double v_hat = vj / bc2;
      const double theta_pre = double(theta[j]);
      theta[j] = float(theta_pre * decay_factor - config.lr * m_hat / (std::sqrt(v_hat) + config.eps));
    }
  }
}

}  // namespace

void adam_step(ModelParams& params, AdamState& state, const OptimConfig& config) {
  adam_update_impl(params, state, config, 0.0);
}

void adamw_step(ModelParams& params, AdamState& state, const OptimConfig& config) {
  adam_update_impl(params, state, config, config.weight_decay);
}

}  // namespace grokkd
