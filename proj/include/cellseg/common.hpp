// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cellseg {

/// Raised on any contract violation (shape mismatch, bad config, non-finite
/// values where finiteness is required).
class ContractError : public std::runtime_error {
public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

/// I/O failures, always carrying the offending path.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

/// Worker cap from CSK_THREADS (0 or unset = hardware concurrency).
int max_threads();

/// Runs fn(begin, end) over [0, n) split into contiguous blocks, one per
/// worker. Workers write disjoint ranges only; results do not depend on the
/// worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

template <typename T>
bool all_finite(const std::vector<T>& v) {
  for (const T& x : v)
    if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

}  // namespace cellseg
