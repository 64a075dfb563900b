// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include "cellseg/optimizer.hpp"

#include <cmath>

#include "cellseg/common.hpp"

namespace cellseg {

void OptimConfig::validate() const {
  require(lr_max > lr_min && lr_min > 0.0, "learning rate bounds must satisfy lr_max > lr_min > 0");
  require(clip_norm > 0.0, "clip_norm must be positive");
  require(warmup_frac > 0.0 && warmup_frac < 1.0, "warmup_frac must lie strictly inside (0,1)");
  require(accum_steps >= 1, "accum_steps must be at least 1");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
          "adam betas must lie in [0,1)");
  require(adam_eps > 0.0, "adam_eps must be positive");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
}

std::int64_t warmup_steps(const OptimConfig& cfg) {
  return std::llround(cfg.warmup_frac * static_cast<double>(cfg.total_steps));
}

double lr_at(std::int64_t t, const OptimConfig& cfg) {
  cfg.validate();
  require(cfg.total_steps > 0, "schedule requires total_steps > 0");
  require(t >= 0 && t <= cfg.total_steps, "schedule step out of range");
  const std::int64_t warm = warmup_steps(cfg);
  if (t < warm) {
    const double lo = cfg.lr_max / 25.0;
    return lo + (cfg.lr_max - lo) * (static_cast<double>(t) / static_cast<double>(warm));
  }
  if (t == warm) return cfg.lr_max;
  if (t == cfg.total_steps) return cfg.lr_min;
  const double tp = static_cast<double>(t - warm);
  const double span = static_cast<double>(cfg.total_steps - warm);
  constexpr double kPi = 3.14159265358979323846;
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(tp * kPi / span));
}

template <typename T>
void scale_gradients(ParamStore<T>& params, double factor) {
  for (auto& [name, p] : params) {
    if (!p.trainable) continue;
    for (auto& g : p.g) g = static_cast<T>(g * factor);
  }
}

template <typename T>
double clip_gradients(ParamStore<T>& params, double clip_norm) {
  require(clip_norm > 0.0, "clip_norm must be positive");
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (!p.trainable) continue;
    for (const T g : p.g) {
      require(std::isfinite(static_cast<double>(g)), "non-finite gradient in parameter " + name);
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  const double norm = std::sqrt(sq);
  if (norm <= clip_norm) return 1.0;
  const double factor = clip_norm / norm;
  for (auto& [name, p] : params) {
    if (!p.trainable) continue;
    for (auto& g : p.g) g = static_cast<T>(g * factor);
  }
  return factor;
}

template <typename T>
void adamw_step(ParamStore<T>& params, AdamState<T>& state, double lr, const OptimConfig& cfg) {
  cfg.validate();
  require(lr >= 0.0, "learning rate must be non-negative");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    if (!p.trainable) continue;
    std::vector<T>& m = state.m[name];
    std::vector<T>& v = state.v[name];
    if (m.empty()) m.assign(p.size(), T(0));
    if (v.empty()) v.assign(p.size(), T(0));
    require(m.size() == p.size() && v.size() == p.size(),
            "optimizer state shape mismatch for parameter " + name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = static_cast<double>(p.g[i]);
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.adam_eps);
      if (p.decay) update += lr * cfg.weight_decay * static_cast<double>(p.v[i]);
      p.v[i] = static_cast<T>(static_cast<double>(p.v[i]) - update);
    }
  }
}

template void scale_gradients<float>(ParamStore<float>&, double);
template void scale_gradients<double>(ParamStore<double>&, double);
template double clip_gradients<float>(ParamStore<float>&, double);
template double clip_gradients<double>(ParamStore<double>&, double);
template void adamw_step<float>(ParamStore<float>&, AdamState<float>&, double, const OptimConfig&);
template void adamw_step<double>(ParamStore<double>&, AdamState<double>&, double,
                                 const OptimConfig&);

}  // namespace cellseg
