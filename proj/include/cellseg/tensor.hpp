// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "cellseg/common.hpp"

namespace cellseg {

/// Dense NCHW activation tensor.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_),
        data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {
    require(n_ > 0 && c_ > 0 && h_ > 0 && w_ > 0, "tensor dimensions must be positive");
  }

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

  T& at(int i, int ch, int y, int x) {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
  T at(int i, int ch, int y, int x) const {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
};

/// One named parameter (or non-trainable buffer) with its gradient slot.
template <typename T>
struct Param {
  std::vector<int> shape;
  std::vector<T> v;
  std::vector<T> g;
  bool decay = true;      // participates in weight decay
  bool trainable = true;  // participates in optimizer updates and clipping

  std::size_t size() const { return v.size(); }
};

/// Name-ordered parameter collection; iteration order is the canonical
/// serialization and reduction order.
template <typename T>
class ParamStore {
public:
  Param<T>& add(const std::string& name, std::vector<int> shape, bool decay = true,
                bool trainable = true) {
    require(!store_.contains(name), "duplicate parameter name: " + name);
    std::size_t total = 1;
    for (int d : shape) {
      require(d > 0, "parameter dims must be positive: " + name);
      total *= static_cast<std::size_t>(d);
    }
    Param<T> p;
    p.shape = std::move(shape);
    p.v.assign(total, T(0));
    p.g.assign(total, T(0));
    p.decay = decay;
    p.trainable = trainable;
    return store_[name] = std::move(p);
  }

  Param<T>& at(const std::string& name) {
    auto it = store_.find(name);
    require(it != store_.end(), "unknown parameter: " + name);
    return it->second;
  }
  const Param<T>& at(const std::string& name) const {
    auto it = store_.find(name);
    require(it != store_.end(), "unknown parameter: " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return store_.contains(name); }

  void zero_grads() {
    for (auto& [name, p] : store_)
      std::fill(p.g.begin(), p.g.end(), T(0));
  }

  std::size_t total_parameters() const {
    std::size_t total = 0;
    for (const auto& [name, p] : store_)
      if (p.trainable) total += p.size();
    return total;
  }

  auto begin() { return store_.begin(); }
  auto end() { return store_.end(); }
  auto begin() const { return store_.begin(); }
  auto end() const { return store_.end(); }
  std::size_t count() const { return store_.size(); }

private:
  std::map<std::string, Param<T>> store_;
};

/// Row-major C = alpha * op(A) * op(B) + beta * C on contiguous buffers.
/// op(A) is M x K, op(B) is K x N. Backed by BLAS for float/double.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
          const float* b, float beta, float* c);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          const double* b, double beta, double* c);

}  // namespace cellseg
