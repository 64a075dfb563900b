// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cellseg/tensor.hpp"

namespace cellseg {

struct OptimConfig {
  double lr_max = 3e-4;
  double lr_min = 3e-7;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 0.5;
  int accum_steps = 2;
  std::int64_t total_steps = 0;
  double warmup_frac = 0.10;

  void validate() const;
};

/// First/second moment slots keyed by parameter name, lazily sized.
template <typename T>
struct AdamState {
  std::int64_t step = 0;
  std::map<std::string, std::vector<T>> m;
  std::map<std::string, std::vector<T>> v;
};

std::int64_t warmup_steps(const OptimConfig& cfg);

/// One-cycle schedule: linear warmup from lr_max/25 to lr_max over the first
/// warmup_frac fraction of steps, then a half-cosine from lr_max down to
/// lr_min. Both phase endpoints are emitted exactly.
double lr_at(std::int64_t t, const OptimConfig& cfg);

/// Divides accumulated gradients by the number of micro-batches.
template <typename T>
void scale_gradients(ParamStore<T>& params, double factor);

/// Global L2 clip over all trainable gradients. Throws (leaving every
/// gradient untouched) if any entry is non-finite, naming the parameter.
/// Returns the applied factor, 1.0 when no clipping happened.
template <typename T>
double clip_gradients(ParamStore<T>& params, double clip_norm);

/// Decoupled-weight-decay adaptive update; parameters flagged decay=false
/// (biases, normalization affines) skip the decay term.
template <typename T>
void adamw_step(ParamStore<T>& params, AdamState<T>& state, double lr, const OptimConfig& cfg);

extern template void scale_gradients<float>(ParamStore<float>&, double);
extern template void scale_gradients<double>(ParamStore<double>&, double);
extern template double clip_gradients<float>(ParamStore<float>&, double);
extern template double clip_gradients<double>(ParamStore<double>&, double);
extern template void adamw_step<float>(ParamStore<float>&, AdamState<float>&, double,
                                       const OptimConfig&);
extern template void adamw_step<double>(ParamStore<double>&, AdamState<double>&, double,
                                        const OptimConfig&);

}  // namespace cellseg
