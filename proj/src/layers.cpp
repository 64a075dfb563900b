// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include "cellseg/layers.hpp"

#include <algorithm>
#include <cmath>

namespace cellseg {

namespace {

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

/// Unpacks one sample into (inC*k*k) x (H*W), zero padding outside.
template <typename T>
void im2col(const T* x, int in_c, int h, int w, int k, int pad, T* col) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  if (k == 3 && pad == 1) {
    for (int c = 0; c < in_c; ++c) {
      const T* plane = x + static_cast<std::size_t>(c) * hw;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          T* row = col + ((static_cast<std::size_t>(c) * 3 + ky) * 3 + kx) * hw;
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - 1;
            T* dst = row + static_cast<std::size_t>(y) * w;
            if (sy < 0 || sy >= h) {
              std::fill(dst, dst + w, T(0));
            } else {
              const T* src = plane + static_cast<std::size_t>(sy) * w;
              if (kx == 0) {
                dst[0] = T(0);
                std::copy(src, src + (w - 1), dst + 1);
              } else if (kx == 1) {
                std::copy(src, src + w, dst);
              } else {
                std::copy(src + 1, src + w, dst);
                dst[w - 1] = T(0);
              }
            }
          }
        }
    }
    return;
  }
  for (int c = 0; c < in_c; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * hw;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          int sy = y + ky - pad;
          if (sy < 0 || sy >= h) {
            std::fill(row + static_cast<std::size_t>(y) * w, row + (static_cast<std::size_t>(y) + 1) * w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(sy) * w;
          T* dst = row + static_cast<std::size_t>(y) * w;
          for (int xx = 0; xx < w; ++xx) {
            int sx = xx + kx - pad;
            dst[xx] = (sx >= 0 && sx < w) ? src[sx] : T(0);
          }
        }
      }
  }
}

/// Adjoint of im2col: scatter-adds the column matrix back onto the image.
template <typename T>
void col2im_add(const T* col, int in_c, int h, int w, int k, int pad, T* x) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  if (k == 3 && pad == 1) {
    for (int c = 0; c < in_c; ++c) {
      T* plane = x + static_cast<std::size_t>(c) * hw;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const T* row = col + ((static_cast<std::size_t>(c) * 3 + ky) * 3 + kx) * hw;
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= h) continue;
            T* dst = plane + static_cast<std::size_t>(sy) * w;
            const T* src = row + static_cast<std::size_t>(y) * w;
            if (kx == 0) {
              for (int xx = 1; xx < w; ++xx) dst[xx - 1] += src[xx];
            } else if (kx == 1) {
              for (int xx = 0; xx < w; ++xx) dst[xx] += src[xx];
            } else {
              for (int xx = 0; xx + 1 < w; ++xx) dst[xx + 1] += src[xx];
            }
          }
        }
    }
    return;
  }
  for (int c = 0; c < in_c; ++c) {
    T* plane = x + static_cast<std::size_t>(c) * hw;
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          T* dst = plane + static_cast<std::size_t>(sy) * w;
          const T* src = row + static_cast<std::size_t>(y) * w;
          for (int xx = 0; xx < w; ++xx) {
            int sx = xx + kx - pad;
            if (sx >= 0 && sx < w) dst[sx] += src[xx];
          }
        }
      }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Param<T>& w, const Param<T>* bias, int pad,
                         ConvScratch<T>& scratch) {
  require(w.shape.size() == 4, "conv weight must be rank 4");
  const int out_c = w.shape[0], in_c = w.shape[1], k = w.shape[2];
  require(w.shape[3] == k, "conv kernels must be square");
  require(x.c == in_c, "conv input channels mismatch: got " + std::to_string(x.c) + ", weight expects " +
                           std::to_string(in_c));
  const std::size_t hw = x.plane();
  const std::size_t kk = static_cast<std::size_t>(in_c) * k * k;
  const bool direct = (k == 1 && pad == 0);  // columns coincide with the input
  scratch.cached = false;

  Tensor<T> y(x.n, out_c, x.h, x.w);
  if (direct) {
    for (int i = 0; i < x.n; ++i)
      gemm(false, false, out_c, static_cast<int>(hw), static_cast<int>(kk), T(1), w.v.data(),
           x.data.data() + static_cast<std::size_t>(i) * kk * hw, T(0),
           y.data.data() + static_cast<std::size_t>(i) * out_c * hw);
  } else if (scratch.keep) {
    scratch.col.resize(kk * hw * static_cast<std::size_t>(x.n));
    for (int i = 0; i < x.n; ++i) {
      T* coli = scratch.col.data() + static_cast<std::size_t>(i) * kk * hw;
      im2col(x.data.data() + static_cast<std::size_t>(i) * x.c * hw, in_c, x.h, x.w, k, pad, coli);
      gemm(false, false, out_c, static_cast<int>(hw), static_cast<int>(kk), T(1), w.v.data(), coli,
           T(0), y.data.data() + static_cast<std::size_t>(i) * out_c * hw);
    }
    scratch.cached = true;
    scratch.cached_per = kk * hw;
    scratch.cached_n = x.n;
  } else {
    scratch.col.resize(kk * hw);
    for (int i = 0; i < x.n; ++i) {
      im2col(x.data.data() + static_cast<std::size_t>(i) * x.c * hw, in_c, x.h, x.w, k, pad,
             scratch.col.data());
      gemm(false, false, out_c, static_cast<int>(hw), static_cast<int>(kk), T(1), w.v.data(),
           scratch.col.data(), T(0), y.data.data() + static_cast<std::size_t>(i) * out_c * hw);
    }
  }
  if (bias) {
    require(bias->size() == static_cast<std::size_t>(out_c), "conv bias size mismatch");
    for (int i = 0; i < x.n; ++i)
      for (int oc = 0; oc < out_c; ++oc) {
        T* plane = y.data.data() + (static_cast<std::size_t>(i) * out_c + oc) * hw;
        const T b = bias->v[oc];
        for (std::size_t j = 0; j < hw; ++j) plane[j] += b;
      }
  }
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Param<T>& w, const Tensor<T>& dy, int pad,
                     Tensor<T>* dx, Param<T>& w_out, Param<T>* bias_out,
                     ConvScratch<T>& scratch) {
  const int out_c = w.shape[0], in_c = w.shape[1], k = w.shape[2];
  require(dy.n == x.n && dy.c == out_c && dy.h == x.h && dy.w == x.w, "conv dy shape mismatch");
  const std::size_t hw = x.plane();
  const std::size_t kk = static_cast<std::size_t>(in_c) * k * k;
  const bool direct = (k == 1 && pad == 0);

  if (bias_out)
    for (int i = 0; i < x.n; ++i)
      for (int oc = 0; oc < out_c; ++oc) {
        const T* plane = dy.data.data() + (static_cast<std::size_t>(i) * out_c + oc) * hw;
        T acc = T(0);
        for (std::size_t j = 0; j < hw; ++j) acc += plane[j];
        bias_out->g[oc] += acc;
      }

  if (direct) {
    for (int i = 0; i < x.n; ++i) {
      const T* dyi = dy.data.data() + static_cast<std::size_t>(i) * out_c * hw;
      gemm(false, true, out_c, static_cast<int>(kk), static_cast<int>(hw), T(1), dyi,
           x.data.data() + static_cast<std::size_t>(i) * kk * hw, T(1), w_out.g.data());
      if (dx)
        gemm(true, false, static_cast<int>(kk), static_cast<int>(hw), out_c, T(1), w.v.data(), dyi,
             T(1), dx->data.data() + static_cast<std::size_t>(i) * kk * hw);
    }
    return;
  }

  const bool reuse =
      scratch.cached && scratch.cached_per == kk * hw && scratch.cached_n == x.n;
  scratch.cached = false;
  if (!reuse) scratch.col.resize(kk * hw);
  if (dx) scratch.dcol.resize(kk * hw);

  for (int i = 0; i < x.n; ++i) {
    const T* dyi = dy.data.data() + static_cast<std::size_t>(i) * out_c * hw;
    const T* coli;
    if (reuse) {
      coli = scratch.col.data() + static_cast<std::size_t>(i) * kk * hw;
    } else {
      im2col(x.data.data() + static_cast<std::size_t>(i) * x.c * hw, in_c, x.h, x.w, k, pad,
             scratch.col.data());
      coli = scratch.col.data();
    }
    gemm(false, true, out_c, static_cast<int>(kk), static_cast<int>(hw), T(1), dyi, coli, T(1),
         w_out.g.data());
    if (dx) {
      gemm(true, false, static_cast<int>(kk), static_cast<int>(hw), out_c, T(1), w.v.data(), dyi,
           T(0), scratch.dcol.data());
      col2im_add(scratch.dcol.data(), in_c, x.h, x.w, k, pad,
                 dx->data.data() + static_cast<std::size_t>(i) * in_c * hw);
    }
  }
}

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const Param<T>& scale, const Param<T>& shift,
                            Param<T>& run_mean, Param<T>& run_var, bool train, double momentum,
                            double eps, BatchNormCache<T>* cache) {
  const int C = x.c;
  const std::size_t hw = x.plane();
  const std::size_t m = static_cast<std::size_t>(x.n) * hw;
  Tensor<T> y(x.n, C, x.h, x.w);

  std::vector<T> mean(C), inv_std(C);
  if (train) {
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int i = 0; i < x.n; ++i) {
        const T* p = x.data.data() + (static_cast<std::size_t>(i) * C + c) * hw;
        for (std::size_t j = 0; j < hw; ++j) acc += p[j];
      }
      double mu = acc / double(m);
      double var_acc = 0.0;
      for (int i = 0; i < x.n; ++i) {
        const T* p = x.data.data() + (static_cast<std::size_t>(i) * C + c) * hw;
        for (std::size_t j = 0; j < hw; ++j) {
          double d = double(p[j]) - mu;
          var_acc += d * d;
        }
      }
      double var = var_acc / double(m);
      mean[c] = T(mu);
      inv_std[c] = T(1.0 / std::sqrt(var + eps));
      double var_unbiased = m > 1 ? var_acc / double(m - 1) : var;
      run_mean.v[c] = T((1.0 - momentum) * double(run_mean.v[c]) + momentum * mu);
      run_var.v[c] = T((1.0 - momentum) * double(run_var.v[c]) + momentum * var_unbiased);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = run_mean.v[c];
      inv_std[c] = T(1.0 / std::sqrt(double(run_var.v[c]) + eps));
    }
  }

  if (cache) {
    cache->mean = mean;
    cache->inv_std = inv_std;
    cache->xhat = Tensor<T>(x.n, C, x.h, x.w);
  }
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < C; ++c) {
      const T* p = x.data.data() + (static_cast<std::size_t>(i) * C + c) * hw;
      T* q = y.data.data() + (static_cast<std::size_t>(i) * C + c) * hw;
      T* xh = cache ? cache->xhat.data.data() + (static_cast<std::size_t>(i) * C + c) * hw : nullptr;
      const T mu = mean[c], is = inv_std[c], g = scale.v[c], b = shift.v[c];
      for (std::size_t j = 0; j < hw; ++j) {
        T v = (p[j] - mu) * is;
        if (xh) xh[j] = v;
        q[j] = g * v + b;
      }
    }
  return y;
}

template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& dy, const Param<T>& scale,
                             const BatchNormCache<T>& cache, Param<T>& scale_out,
                             Param<T>& shift_out) {
  const int C = dy.c;
  const std::size_t hw = dy.plane();
  const double m = double(dy.n) * double(hw);
  Tensor<T> dx(dy.n, C, dy.h, dy.w);

  for (int c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int i = 0; i < dy.n; ++i) {
      const T* d = dy.data.data() + (static_cast<std::size_t>(i) * C + c) * hw;
      const T* xh = cache.xhat.data.data() + (static_cast<std::size_t>(i) * C + c) * hw;
      for (std::size_t j = 0; j < hw; ++j) {
        sum_dy += d[j];
        sum_dy_xhat += double(d[j]) * double(xh[j]);
      }
    }
    scale_out.g[c] += T(sum_dy_xhat);
    shift_out.g[c] += T(sum_dy);

    const double k = double(scale.v[c]) * double(cache.inv_std[c]) / m;
    for (int i = 0; i < dy.n; ++i) {
      const T* d = dy.data.data() + (static_cast<std::size_t>(i) * C + c) * hw;
      const T* xh = cache.xhat.data.data() + (static_cast<std::size_t>(i) * C + c) * hw;
      T* o = dx.data.data() + (static_cast<std::size_t>(i) * C + c) * hw;
      for (std::size_t j = 0; j < hw; ++j)
        o[j] = T(k * (m * double(d[j]) - sum_dy - double(xh[j]) * sum_dy_xhat));
    }
  }
  return dx;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.n, x.c, x.h, x.w);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const Tensor<T>& x) {
  Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
  for (std::size_t i = 0; i < dy.size(); ++i) dx.data[i] = x.data[i] > T(0) ? dy.data[i] : T(0);
  return dx;
}

template <typename T>
Tensor<T> maxpool2_forward(const Tensor<T>& x, PoolCache<T>& cache) {
  require(x.h % 2 == 0 && x.w % 2 == 0, "maxpool needs even spatial dims");
  const int oh = x.h / 2, ow = x.w / 2;
  Tensor<T> y(x.n, x.c, oh, ow);
  cache.argmax.assign(y.size(), 0);
  std::size_t out_idx = 0;
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox, ++out_idx) {
          T best = x.at(i, c, 2 * oy, 2 * ox);
          int by = 2 * oy, bx = 2 * ox;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              T v = x.at(i, c, 2 * oy + dy, 2 * ox + dx);
              if (v > best) {
                best = v;
                by = 2 * oy + dy;
                bx = 2 * ox + dx;
              }
            }
          y.data[out_idx] = best;
          cache.argmax[out_idx] = static_cast<std::uint32_t>(
              ((static_cast<std::size_t>(i) * x.c + c) * x.h + by) * x.w + bx);
        }
  return y;
}

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& dy, const Tensor<T>& x, const PoolCache<T>& cache) {
  Tensor<T> dx(x.n, x.c, x.h, x.w);
  for (std::size_t j = 0; j < dy.size(); ++j) dx.data[cache.argmax[j]] += dy.data[j];
  return dx;
}

template <typename T>
Tensor<T> upsample2_forward(const Tensor<T>& x) {
  Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c)
      for (int oy = 0; oy < y.h; ++oy)
        for (int ox = 0; ox < y.w; ++ox)
          y.at(i, c, oy, ox) = x.at(i, c, oy / 2, ox / 2);
  return y;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& dy) {
  require(dy.h % 2 == 0 && dy.w % 2 == 0, "upsample adjoint needs even dims");
  Tensor<T> dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
  for (int i = 0; i < dy.n; ++i)
    for (int c = 0; c < dy.c; ++c)
      for (int oy = 0; oy < dy.h; ++oy)
        for (int ox = 0; ox < dy.w; ++ox)
          dx.at(i, c, oy / 2, ox / 2) += dy.at(i, c, oy, ox);
  return dx;
}

template <typename T>
Tensor<T> concat_forward(const std::vector<const Tensor<T>*>& xs) {
  require(!xs.empty(), "concat of nothing");
  int total_c = 0;
  for (const auto* t : xs) {
    require(t->n == xs[0]->n && t->h == xs[0]->h && t->w == xs[0]->w,
            "concat inputs must share N,H,W");
    total_c += t->c;
  }
  Tensor<T> y(xs[0]->n, total_c, xs[0]->h, xs[0]->w);
  const std::size_t hw = y.plane();
  for (int i = 0; i < y.n; ++i) {
    int c0 = 0;
    for (const auto* t : xs) {
      std::copy_n(t->data.data() + static_cast<std::size_t>(i) * t->c * hw,
                  static_cast<std::size_t>(t->c) * hw,
                  y.data.data() + (static_cast<std::size_t>(i) * total_c + c0) * hw);
      c0 += t->c;
    }
  }
  return y;
}

template <typename T>
std::vector<Tensor<T>> concat_backward(const Tensor<T>& dy, const std::vector<int>& channels) {
  std::vector<Tensor<T>> out;
  const std::size_t hw = dy.plane();
  int c0 = 0;
  for (int ch : channels) {
    Tensor<T> part(dy.n, ch, dy.h, dy.w);
    for (int i = 0; i < dy.n; ++i)
      std::copy_n(dy.data.data() + (static_cast<std::size_t>(i) * dy.c + c0) * hw,
                  static_cast<std::size_t>(ch) * hw,
                  part.data.data() + static_cast<std::size_t>(i) * ch * hw);
    c0 += ch;
    out.push_back(std::move(part));
  }
  require(c0 == dy.c, "concat split does not cover all channels");
  return out;
}

template <typename T>
Tensor<T> scse_forward(const Tensor<T>& x, const Param<T>& w1, const Param<T>& b1,
                       const Param<T>& w2, const Param<T>& b2, const Param<T>& ws,
                       const Param<T>& bs, ScseCache<T>& cache) {
  const int C = x.c, Cr = w1.shape[0];
  require(w1.shape[1] == C && w2.shape[0] == C && w2.shape[1] == Cr, "scse gate shapes mismatch");
  require(C >= 2, "scse needs at least 2 channels");
  const std::size_t hw = x.plane();

  cache.gap.assign(static_cast<std::size_t>(x.n) * C, T(0));
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < C; ++c) {
      const T* p = x.data.data() + (static_cast<std::size_t>(i) * C + c) * hw;
      T acc = T(0);
      for (std::size_t j = 0; j < hw; ++j) acc += p[j];
      cache.gap[static_cast<std::size_t>(i) * C + c] = acc / T(hw);
    }

  cache.hidden.assign(static_cast<std::size_t>(x.n) * Cr, T(0));
  for (int i = 0; i < x.n; ++i)
    for (int r = 0; r < Cr; ++r) {
      T acc = b1.v[r];
      for (int c = 0; c < C; ++c)
        acc += w1.v[static_cast<std::size_t>(r) * C + c] * cache.gap[static_cast<std::size_t>(i) * C + c];
      cache.hidden[static_cast<std::size_t>(i) * Cr + r] = acc > T(0) ? acc : T(0);
    }

  cache.chan_gate.assign(static_cast<std::size_t>(x.n) * C, T(0));
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < C; ++c) {
      T acc = b2.v[c];
      for (int r = 0; r < Cr; ++r)
        acc += w2.v[static_cast<std::size_t>(c) * Cr + r] * cache.hidden[static_cast<std::size_t>(i) * Cr + r];
      cache.chan_gate[static_cast<std::size_t>(i) * C + c] = sigmoid(acc);
    }

  cache.spat_logit = Tensor<T>(x.n, 1, x.h, x.w);
  cache.spat_gate = Tensor<T>(x.n, 1, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    T* sl = cache.spat_logit.data.data() + static_cast<std::size_t>(i) * hw;
    for (std::size_t j = 0; j < hw; ++j) sl[j] = bs.v[0];
    for (int c = 0; c < C; ++c) {
      const T* p = x.data.data() + (static_cast<std::size_t>(i) * C + c) * hw;
      const T wc = ws.v[c];
      for (std::size_t j = 0; j < hw; ++j) sl[j] += wc * p[j];
    }
    T* sg = cache.spat_gate.data.data() + static_cast<std::size_t>(i) * hw;
    for (std::size_t j = 0; j < hw; ++j) sg[j] = sigmoid(sl[j]);
  }

  Tensor<T> y(x.n, C, x.h, x.w);
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < C; ++c) {
      const T* p = x.data.data() + (static_cast<std::size_t>(i) * C + c) * hw;
      const T* sg = cache.spat_gate.data.data() + static_cast<std::size_t>(i) * hw;
      T* q = y.data.data() + (static_cast<std::size_t>(i) * C + c) * hw;
      const T cg = cache.chan_gate[static_cast<std::size_t>(i) * C + c];
      for (std::size_t j = 0; j < hw; ++j) q[j] = cg * p[j] + sg[j] * p[j];
    }
  return y;
}

template <typename T>
Tensor<T> scse_backward(const Tensor<T>& dy, const Tensor<T>& x, const Param<T>& w1,
                        const Param<T>& w2, const Param<T>& ws, const ScseCache<T>& cache,
                        Param<T>& w1_out, Param<T>& b1_out, Param<T>& w2_out, Param<T>& b2_out,
                        Param<T>& ws_out, Param<T>& bs_out) {
  const int C = x.c, Cr = w1.shape[0];
  const std::size_t hw = x.plane();
  Tensor<T> dx(x.n, C, x.h, x.w);

  // direct multiplicative paths plus per-(n,c) / per-(n,hw) gate adjoints
  std::vector<T> dchan(static_cast<std::size_t>(x.n) * C, T(0));
  Tensor<T> dspat(x.n, 1, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    T* dsp = dspat.data.data() + static_cast<std::size_t>(i) * hw;
    const T* sg = cache.spat_gate.data.data() + static_cast<std::size_t>(i) * hw;
    for (int c = 0; c < C; ++c) {
      const std::size_t base = (static_cast<std::size_t>(i) * C + c) * hw;
      const T* d = dy.data.data() + base;
      const T* p = x.data.data() + base;
      T* o = dx.data.data() + base;
      const T cg = cache.chan_gate[static_cast<std::size_t>(i) * C + c];
      T acc = T(0);
      for (std::size_t j = 0; j < hw; ++j) {
        acc += d[j] * p[j];
        o[j] = d[j] * (cg + sg[j]);
        dsp[j] += d[j] * p[j];
      }
      dchan[static_cast<std::size_t>(i) * C + c] = acc;
    }
  }

  // channel gate chain: sigmoid -> W2 -> ReLU -> W1 -> GAP
  for (int i = 0; i < x.n; ++i) {
    std::vector<T> dz2(C), dh(Cr, T(0)), dgap(C, T(0));
    for (int c = 0; c < C; ++c) {
      const T cg = cache.chan_gate[static_cast<std::size_t>(i) * C + c];
      dz2[c] = dchan[static_cast<std::size_t>(i) * C + c] * cg * (T(1) - cg);
      b2_out.g[c] += dz2[c];
      for (int r = 0; r < Cr; ++r) {
        w2_out.g[static_cast<std::size_t>(c) * Cr + r] +=
            dz2[c] * cache.hidden[static_cast<std::size_t>(i) * Cr + r];
        dh[r] += w2.v[static_cast<std::size_t>(c) * Cr + r] * dz2[c];
      }
    }
    for (int r = 0; r < Cr; ++r) {
      if (cache.hidden[static_cast<std::size_t>(i) * Cr + r] <= T(0)) continue;
      b1_out.g[r] += dh[r];
      for (int c = 0; c < C; ++c) {
        w1_out.g[static_cast<std::size_t>(r) * C + c] +=
            dh[r] * cache.gap[static_cast<std::size_t>(i) * C + c];
        dgap[c] += w1.v[static_cast<std::size_t>(r) * C + c] * dh[r];
      }
    }
    for (int c = 0; c < C; ++c) {
      const T per_px = dgap[c] / T(hw);
      T* o = dx.data.data() + (static_cast<std::size_t>(i) * C + c) * hw;
      for (std::size_t j = 0; j < hw; ++j) o[j] += per_px;
    }
  }

  // spatial gate chain: sigmoid -> 1x1 conv
  for (int i = 0; i < x.n; ++i) {
    const T* sg = cache.spat_gate.data.data() + static_cast<std::size_t>(i) * hw;
    T* dsp = dspat.data.data() + static_cast<std::size_t>(i) * hw;
    T bacc = T(0);
    for (std::size_t j = 0; j < hw; ++j) {
      dsp[j] *= sg[j] * (T(1) - sg[j]);
      bacc += dsp[j];
    }
    bs_out.g[0] += bacc;
    for (int c = 0; c < C; ++c) {
      const std::size_t base = (static_cast<std::size_t>(i) * C + c) * hw;
      const T* p = x.data.data() + base;
      T* o = dx.data.data() + base;
      const T wc = ws.v[c];
      T wacc = T(0);
      for (std::size_t j = 0; j < hw; ++j) {
        wacc += dsp[j] * p[j];
        o[j] += wc * dsp[j];
      }
      ws_out.g[c] += wacc;
    }
  }
  return dx;
}

#define CELLSEG_INSTANTIATE(T)                                                                    \
  template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Param<T>&, const Param<T>*, int,  \
                                       ConvScratch<T>&);                                          \
  template void conv2d_backward<T>(const Tensor<T>&, const Param<T>&, const Tensor<T>&, int,     \
                                   Tensor<T>*, Param<T>&, Param<T>*, ConvScratch<T>&);           \
  template Tensor<T> batchnorm_forward<T>(const Tensor<T>&, const Param<T>&, const Param<T>&,    \
                                          Param<T>&, Param<T>&, bool, double, double,            \
                                          BatchNormCache<T>*);                                   \
  template Tensor<T> batchnorm_backward<T>(const Tensor<T>&, const Param<T>&,                    \
                                           const BatchNormCache<T>&, Param<T>&, Param<T>&);      \
  template Tensor<T> relu_forward<T>(const Tensor<T>&);                                          \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> maxpool2_forward<T>(const Tensor<T>&, PoolCache<T>&);                       \
  template Tensor<T> maxpool2_backward<T>(const Tensor<T>&, const Tensor<T>&,                    \
                                          const PoolCache<T>&);                                  \
  template Tensor<T> upsample2_forward<T>(const Tensor<T>&);                                     \
  template Tensor<T> upsample2_backward<T>(const Tensor<T>&);                                    \
  template Tensor<T> concat_forward<T>(const std::vector<const Tensor<T>*>&);                    \
  template std::vector<Tensor<T>> concat_backward<T>(const Tensor<T>&, const std::vector<int>&); \
  template Tensor<T> scse_forward<T>(const Tensor<T>&, const Param<T>&, const Param<T>&,         \
                                     const Param<T>&, const Param<T>&, const Param<T>&,          \
                                     const Param<T>&, ScseCache<T>&);                            \
  template Tensor<T> scse_backward<T>(const Tensor<T>&, const Tensor<T>&, const Param<T>&,       \
                                      const Param<T>&, const Param<T>&, const ScseCache<T>&,     \
                                      Param<T>&, Param<T>&, Param<T>&, Param<T>&, Param<T>&,     \
                                      Param<T>&);

CELLSEG_INSTANTIATE(float)
CELLSEG_INSTANTIATE(double)
#undef CELLSEG_INSTANTIATE

}  // namespace cellseg
