// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cellseg/layers.hpp"
#include "cellseg/raster.hpp"
#include "cellseg/tensor.hpp"

namespace cellseg {

struct ModelConfig {
  int base_channels = 16;
  int in_channels = 4;
  bool use_scse = true;
  bool use_projection = true;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  void validate() const {
    require(base_channels >= 2 && base_channels % 2 == 0, "base_channels must be even and >= 2");
    require(in_channels == 3 || in_channels == 4, "in_channels must be 3 or 4");
  }
};

/// Depth-2 nested encoder-decoder with a 4-to-3 input projection, one encoder
/// column (X00, X10, X20), nested decoder nodes X01, X11, X02, SCSE after each
/// decoder block, and a 1x1 logit head. Forward/backward are fully manual.
template <typename T>
class Model {
public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }
  std::size_t parameter_count() const { return params_.total_parameters(); }

  /// Train mode uses batch statistics (and updates BN running stats) and
  /// caches activations for backward; eval mode uses running stats, no cache.
  Tensor<T> forward(const Tensor<T>& x, bool train);

  /// Gradient of the last train-mode forward. Accumulates into param grads
  /// and returns the input gradient.
  Tensor<T> backward(const Tensor<T>& dlogits);

  /// Eval-mode 4-to-3 input projection on its own (diagnostic hook).
  Tensor<T> project(const Tensor<T>& x);

private:
  struct Block {
    std::string conv, bn;  // parameter name prefixes
    Tensor<T> in, pre_relu, out;
    BatchNormCache<T> bn_cache;
    ConvScratch<T> scratch;
  };
  struct Scse {
    std::string name;
    Tensor<T> in, out;
    ScseCache<T> cache;
  };

  void add_conv(const std::string& name, int out_c, int in_c, int k);
  void add_bn(const std::string& name, int c);
  void add_block(const std::string& name, int in_c, int out_c);
  void add_scse(const std::string& name, int c);
  void init_params(std::uint64_t seed);

  Tensor<T> block_forward(Block& blk, Tensor<T> x, bool train, bool cache);
  Tensor<T> block_backward(Block& blk, const Tensor<T>& dy);
  Tensor<T> scse_apply(Scse& s, Tensor<T> x, bool cache);
  Tensor<T> scse_unapply(Scse& s, const Tensor<T>& dy);

  ModelConfig cfg_;
  ParamStore<T> params_;
  ConvScratch<T> scratch_;
  bool has_cache_ = false;

  // cached graph state (train-mode forward)
  Tensor<T> input_;
  Block proj1_, enc0_, enc1_, enc2_, dec01_, dec11_, dec02_;
  Scse scse01_, scse11_, scse02_;
  PoolCache<T> pool0_, pool1_;
};

/// (N,1,H,W) logits to per-sample maps and back.
std::vector<LogitMap> tensor_to_logits(const Tensor<float>& t);
std::vector<LogitMap> tensor_to_logits(const Tensor<double>& t);
Tensor<float> logits_to_tensor_f32(const std::vector<LogitMap>& maps);
Tensor<double> logits_to_tensor_f64(const std::vector<LogitMap>& maps);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace cellseg
