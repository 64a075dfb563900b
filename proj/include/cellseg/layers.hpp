// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "cellseg/tensor.hpp"

namespace cellseg {

// Free-function layer kernels with explicit caches. Forward fills the cache,
// backward consumes it and accumulates (+=) into parameter gradients so
// micro-batch accumulation falls out naturally.

/// Zero-padded stride-1 cross-correlation. Weight shape (outC, inC, k, k),
/// bias shape (outC) or empty. im2col scratch grows on demand and is reused.
/// With keep set, forward retains the column matrix for every sample and the
/// next backward consumes it instead of unpacking the input again.
template <typename T>
struct ConvScratch {
  std::vector<T> col;
  std::vector<T> dcol;
  bool keep = false;
  bool cached = false;
  std::size_t cached_per = 0;
  int cached_n = 0;
};

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Param<T>& w, const Param<T>* bias, int pad,
                         ConvScratch<T>& scratch);

/// dx is optional (skipped for the first layer). dw/dbias accumulate.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Param<T>& w, const Tensor<T>& dy, int pad,
                     Tensor<T>* dx, Param<T>& w_out, Param<T>* bias_out,
                     ConvScratch<T>& scratch);

template <typename T>
struct BatchNormCache {
  std::vector<T> mean;     // per channel, batch statistics
  std::vector<T> inv_std;  // 1/sqrt(var + eps)
  Tensor<T> xhat;
};

/// Train mode normalizes with batch statistics and updates running buffers in
/// place; eval mode uses the running buffers and leaves them untouched.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const Param<T>& scale, const Param<T>& shift,
                            Param<T>& run_mean, Param<T>& run_var, bool train, double momentum,
                            double eps, BatchNormCache<T>* cache);

template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& dy, const Param<T>& scale,
                             const BatchNormCache<T>& cache, Param<T>& scale_out,
                             Param<T>& shift_out);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const Tensor<T>& x);

template <typename T>
struct PoolCache {
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// 2x2 max pool, stride 2; ties resolve to the first maximum in scan order.
template <typename T>
Tensor<T> maxpool2_forward(const Tensor<T>& x, PoolCache<T>& cache);

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& dy, const Tensor<T>& x, const PoolCache<T>& cache);

/// Nearest-neighbor 2x upsample; adjoint is a 2x2 sum pool.
template <typename T>
Tensor<T> upsample2_forward(const Tensor<T>& x);

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& dy);

/// Channel concatenation of 2 or 3 tensors with identical N,H,W.
template <typename T>
Tensor<T> concat_forward(const std::vector<const Tensor<T>*>& xs);

template <typename T>
std::vector<Tensor<T>> concat_backward(const Tensor<T>& dy, const std::vector<int>& channels);

template <typename T>
struct ScseCache {
  std::vector<T> gap;       // N x C
  std::vector<T> hidden;    // N x C/r, post ReLU
  std::vector<T> chan_gate; // N x C, post sigmoid
  Tensor<T> spat_logit;     // N x 1 x H x W, pre sigmoid
  Tensor<T> spat_gate;      // N x 1 x H x W
};

/// Concurrent channel and spatial recalibration:
/// sigma(W2 relu(W1 GAP(x))) (.) x + sigma(conv1x1(x)) (.) x.
/// w1: (C/r, C), w2: (C, C/r), spatial weight: (1, C, 1, 1); all with biases.
template <typename T>
Tensor<T> scse_forward(const Tensor<T>& x, const Param<T>& w1, const Param<T>& b1,
                       const Param<T>& w2, const Param<T>& b2, const Param<T>& ws,
                       const Param<T>& bs, ScseCache<T>& cache);

template <typename T>
Tensor<T> scse_backward(const Tensor<T>& dy, const Tensor<T>& x, const Param<T>& w1,
                        const Param<T>& w2, const Param<T>& ws, const ScseCache<T>& cache,
                        Param<T>& w1_out, Param<T>& b1_out, Param<T>& w2_out, Param<T>& b2_out,
                        Param<T>& ws_out, Param<T>& bs_out);

}  // namespace cellseg
