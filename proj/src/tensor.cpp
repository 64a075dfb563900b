// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include "cellseg/tensor.hpp"

#include <cstdlib>

#include <dlfcn.h>

namespace cellseg {

namespace {

// CBLAS ABI constants; row-major everywhere.
constexpr int kRowMajor = 101;
constexpr int kNoTrans = 111;
constexpr int kTrans = 112;

using sgemm_fn = void (*)(int, int, int, int, int, int, float, const float*, int, const float*,
                          int, float, float*, int);
using dgemm_fn = void (*)(int, int, int, int, int, int, double, const double*, int, const double*,
                          int, double, double*, int);
using set_threads_fn = void (*)(int);

// OpenBLAS picks its kernels from CPUID when the library loads, and falls back
// to a baseline SSE2 kernel when a hypervisor masks the model id. Loading
// lazily lets us pin a core type matching the actually available ISA first; an
// explicit OPENBLAS_CORETYPE in the environment still wins.
struct Blas {
  sgemm_fn sgemm = nullptr;
  dgemm_fn dgemm = nullptr;

  Blas() {
#if defined(__x86_64__) || defined(__i386__)
    if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512bw") &&
        __builtin_cpu_supports("avx512vl") && __builtin_cpu_supports("avx512dq"))
      setenv("OPENBLAS_CORETYPE", "SKYLAKEX", /*overwrite=*/0);
    else if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
      setenv("OPENBLAS_CORETYPE", "HASWELL", /*overwrite=*/0);
#endif
    void* h = dlopen("libopenblas.so.0", RTLD_NOW | RTLD_LOCAL);
    if (!h) h = dlopen("libopenblas.so", RTLD_NOW | RTLD_LOCAL);
    require(h != nullptr, "could not load libopenblas");
    sgemm = reinterpret_cast<sgemm_fn>(dlsym(h, "cblas_sgemm"));
    dgemm = reinterpret_cast<dgemm_fn>(dlsym(h, "cblas_dgemm"));
    require(sgemm != nullptr && dgemm != nullptr, "libopenblas lacks cblas symbols");
    // BLAS threading would make reductions order-dependent; keep it serial so a
    // given seed always reproduces the same bits regardless of host core count.
    auto set_threads = reinterpret_cast<set_threads_fn>(dlsym(h, "openblas_set_num_threads"));
    if (set_threads) set_threads(1);
  }
};

const Blas& blas() {
  static const Blas b;
  return b;
}

int lda_of(bool trans, int rows_notrans, int cols_notrans) {
  return trans ? rows_notrans : cols_notrans;
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
          const float* b, float beta, float* c) {
  blas().sgemm(kRowMajor, trans_a ? kTrans : kNoTrans, trans_b ? kTrans : kNoTrans, m, n, k, alpha,
               a, lda_of(trans_a, m, k), b, lda_of(trans_b, k, n), beta, c, n);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          const double* b, double beta, double* c) {
  blas().dgemm(kRowMajor, trans_a ? kTrans : kNoTrans, trans_b ? kTrans : kNoTrans, m, n, k, alpha,
               a, lda_of(trans_a, m, k), b, lda_of(trans_b, k, n), beta, c, n);
}

}  // namespace cellseg
