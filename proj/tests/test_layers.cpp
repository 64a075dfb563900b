// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include "cellseg/layers.hpp"
#include "cellseg/rng.hpp"
#include "doctest.h"

using namespace cellseg;

namespace {

double rel_err(double a, double f) {
  return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-2});
}

template <typename F>
double fd(F&& eval, double& slot, double h = 1e-5) {
  const double orig = slot;
  slot = orig + h;
  const double up = eval();
  slot = orig - h;
  const double dn = eval();
  slot = orig;
  return (up - dn) / (2.0 * h);
}

Tensor<double> randn(int n, int c, int h, int w, Rng& rng, double scale = 1.0) {
  Tensor<double> t(n, c, h, w);
  for (auto& v : t.data) v = rng.normal() * scale;
  return t;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("gemm matches hand computation in all transpose combinations") {
  // A (2x3), B (3x2), C = A*B
  std::vector<double> a = {1, 2, 3, 4, 5, 6};         // 2x3 row major
  std::vector<double> at = {1, 4, 2, 5, 3, 6};        // 3x2, transpose of a
  std::vector<double> b = {7, 8, 9, 10, 11, 12};      // 3x2 row major
  std::vector<double> bt = {7, 9, 11, 8, 10, 12};     // 2x3, transpose of b
  std::vector<double> want = {58, 64, 139, 154};      // A*B

  std::vector<double> c(4, 0.0);
  gemm(false, false, 2, 2, 3, 1.0, a.data(), b.data(), 0.0, c.data());
  for (int i = 0; i < 4; ++i) CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-14));

  std::fill(c.begin(), c.end(), 0.0);
  gemm(true, false, 2, 2, 3, 1.0, at.data(), b.data(), 0.0, c.data());
  for (int i = 0; i < 4; ++i) CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-14));

  std::fill(c.begin(), c.end(), 0.0);
  gemm(false, true, 2, 2, 3, 1.0, a.data(), bt.data(), 0.0, c.data());
  for (int i = 0; i < 4; ++i) CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-14));

  std::fill(c.begin(), c.end(), 0.0);
  gemm(true, true, 2, 2, 3, 1.0, at.data(), bt.data(), 0.0, c.data());
  for (int i = 0; i < 4; ++i) CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-14));

  // beta accumulation
  gemm(false, false, 2, 2, 3, 1.0, a.data(), b.data(), 1.0, c.data());
  for (int i = 0; i < 4; ++i) CHECK(c[i] == doctest::Approx(2.0 * want[i]).epsilon(1e-14));
}

TEST_CASE("conv2d forward matches direct computation") {
  Rng rng = Rng::stream(11, "test/conv_direct");
  Tensor<double> x = randn(2, 3, 5, 6, rng);
  ParamStore<double> ps;
  Param<double>& w = ps.add("w", {4, 3, 3, 3});
  Param<double>& b = ps.add("b", {4});
  for (auto& v : w.v) v = rng.normal() * 0.4;
  for (auto& v : b.v) v = rng.normal() * 0.1;
  ConvScratch<double> scratch;

  Tensor<double> y = conv2d_forward(x, w, &b, 1, scratch);
  REQUIRE(y.n == 2);
  REQUIRE(y.c == 4);
  REQUIRE(y.h == 5);
  REQUIRE(y.w == 6);
  for (int n = 0; n < 2; ++n)
    for (int oc = 0; oc < 4; ++oc)
      for (int oy = 0; oy < 5; ++oy)
        for (int ox = 0; ox < 6; ++ox) {
          double acc = b.v[oc];
          for (int ic = 0; ic < 3; ++ic)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                int sy = oy + ky - 1, sx = ox + kx - 1;
                if (sy < 0 || sy >= 5 || sx < 0 || sx >= 6) continue;  // zero padding
                acc += x.at(n, ic, sy, sx) * w.v[((oc * 3 + ic) * 3 + ky) * 3 + kx];
              }
          CHECK(y.at(n, oc, oy, ox) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("conv2d 1x1 without padding matches per-pixel matmul") {
  Rng rng = Rng::stream(12, "test/conv_1x1");
  Tensor<double> x = randn(1, 5, 3, 4, rng);
  ParamStore<double> ps;
  Param<double>& w = ps.add("w", {2, 5, 1, 1});
  Param<double>& b = ps.add("b", {2});
  for (auto& v : w.v) v = rng.normal();
  for (auto& v : b.v) v = rng.normal();
  ConvScratch<double> scratch;

  Tensor<double> y = conv2d_forward(x, w, &b, 0, scratch);
  REQUIRE(y.c == 2);
  REQUIRE(y.h == 3);
  for (int oy = 0; oy < 3; ++oy)
    for (int ox = 0; ox < 4; ++ox)
      for (int oc = 0; oc < 2; ++oc) {
        double acc = b.v[oc];
        for (int ic = 0; ic < 5; ++ic) acc += w.v[oc * 5 + ic] * x.at(0, ic, oy, ox);
        CHECK(y.at(0, oc, oy, ox) == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng = Rng::stream(13, "test/conv_fd");
  Tensor<double> x = randn(2, 3, 5, 6, rng);
  ParamStore<double> ps;
  Param<double>& w = ps.add("w", {4, 3, 3, 3});
  Param<double>& b = ps.add("b", {4});
  for (auto& v : w.v) v = rng.normal() * 0.4;
  for (auto& v : b.v) v = rng.normal() * 0.1;
  ConvScratch<double> scratch;

  Tensor<double> y0 = conv2d_forward(x, w, &b, 1, scratch);
  std::vector<double> r(y0.size());
  for (auto& v : r) v = rng.normal();
  auto eval = [&]() {
    Tensor<double> y = conv2d_forward(x, w, &b, 1, scratch);
    return dot(y.data, r);
  };

  Tensor<double> dy = y0;
  dy.data = r;
  Tensor<double> dx(2, 3, 5, 6);
  conv2d_backward(x, w, dy, 1, &dx, w, &b, scratch);

  for (int k = 0; k < 40; ++k) {
    std::size_t i = rng.uniform_int(x.size());
    CHECK(rel_err(dx.data[i], fd(eval, x.data[i])) < 1e-6);
  }
  for (int k = 0; k < 40; ++k) {
    std::size_t i = rng.uniform_int(w.size());
    CHECK(rel_err(w.g[i], fd(eval, w.v[i])) < 1e-6);
  }
  for (std::size_t i = 0; i < b.size(); ++i)
    CHECK(rel_err(b.g[i], fd(eval, b.v[i])) < 1e-6);
}

TEST_CASE("conv2d backward accumulates into existing gradients") {
  Rng rng = Rng::stream(14, "test/conv_accum");
  Tensor<double> x = randn(1, 2, 4, 4, rng);
  ParamStore<double> ps;
  Param<double>& w = ps.add("w", {3, 2, 3, 3});
  Param<double>& b = ps.add("b", {3});
  for (auto& v : w.v) v = rng.normal();
  ConvScratch<double> scratch;
  Tensor<double> dy = randn(1, 3, 4, 4, rng);

  conv2d_backward<double>(x, w, dy, 1, nullptr, w, &b, scratch);
  std::vector<double> once_w = w.g, once_b = b.g;
  conv2d_backward<double>(x, w, dy, 1, nullptr, w, &b, scratch);
  for (std::size_t i = 0; i < w.g.size(); ++i)
    CHECK(w.g[i] == doctest::Approx(2.0 * once_w[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < b.g.size(); ++i)
    CHECK(b.g[i] == doctest::Approx(2.0 * once_b[i]).epsilon(1e-12));
}

TEST_CASE("batchnorm train mode normalizes and updates running statistics") {
  Rng rng = Rng::stream(15, "test/bn_train");
  Tensor<double> x = randn(3, 2, 4, 4, rng, 2.0);
  for (auto& v : x.data) v += 1.5;
  ParamStore<double> ps;
  Param<double>& scale = ps.add("scale", {2});
  Param<double>& shift = ps.add("shift", {2});
  Param<double>& rm = ps.add("rm", {2}, false, false);
  Param<double>& rv = ps.add("rv", {2}, false, false);
  std::fill(scale.v.begin(), scale.v.end(), 1.0);
  std::fill(rv.v.begin(), rv.v.end(), 1.0);

  BatchNormCache<double> cache;
  Tensor<double> y = batchnorm_forward(x, scale, shift, rm, rv, true, 0.1, 1e-5, &cache);

  const int m = 3 * 4 * 4;
  for (int c = 0; c < 2; ++c) {
    double mean = 0.0, var = 0.0, ymean = 0.0, yvar = 0.0;
    for (int n = 0; n < 3; ++n)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          mean += x.at(n, c, i, j);
          ymean += y.at(n, c, i, j);
        }
    mean /= m;
    ymean /= m;
    for (int n = 0; n < 3; ++n)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
          var += (x.at(n, c, i, j) - mean) * (x.at(n, c, i, j) - mean);
          yvar += (y.at(n, c, i, j) - ymean) * (y.at(n, c, i, j) - ymean);
        }
    var /= m;   // biased, used for normalization
    yvar /= m;
    CHECK(std::abs(ymean) < 1e-12);
    CHECK(yvar == doctest::Approx(var / (var + 1e-5)).epsilon(1e-10));
    CHECK(rm.v[c] == doctest::Approx(0.9 * 0.0 + 0.1 * mean).epsilon(1e-12));
    const double unbiased = var * m / (m - 1);
    CHECK(rv.v[c] == doctest::Approx(0.9 * 1.0 + 0.1 * unbiased).epsilon(1e-12));
  }
}

TEST_CASE("batchnorm eval mode applies running statistics exactly") {
  Rng rng = Rng::stream(16, "test/bn_eval");
  Tensor<double> x = randn(2, 3, 2, 2, rng);
  ParamStore<double> ps;
  Param<double>& scale = ps.add("scale", {3});
  Param<double>& shift = ps.add("shift", {3});
  Param<double>& rm = ps.add("rm", {3}, false, false);
  Param<double>& rv = ps.add("rv", {3}, false, false);
  for (int c = 0; c < 3; ++c) {
    scale.v[c] = 0.5 + c;
    shift.v[c] = -0.25 * c;
    rm.v[c] = 0.1 * (c + 1);
    rv.v[c] = 0.5 + 0.3 * c;
  }
  std::vector<double> rm0 = rm.v, rv0 = rv.v;

  Tensor<double> y = batchnorm_forward<double>(x, scale, shift, rm, rv, false, 0.1, 1e-5, nullptr);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          const double want =
              (x.at(n, c, i, j) - rm.v[c]) / std::sqrt(rv.v[c] + 1e-5) * scale.v[c] + shift.v[c];
          CHECK(y.at(n, c, i, j) == doctest::Approx(want).epsilon(1e-12));
        }
  CHECK(rm.v == rm0);  // eval never touches the buffers
  CHECK(rv.v == rv0);
}

TEST_CASE("batchnorm backward matches finite differences") {
  Rng rng = Rng::stream(17, "test/bn_fd");
  Tensor<double> x = randn(2, 3, 3, 4, rng, 1.3);
  ParamStore<double> ps;
  Param<double>& scale = ps.add("scale", {3});
  Param<double>& shift = ps.add("shift", {3});
  Param<double>& rm = ps.add("rm", {3}, false, false);
  Param<double>& rv = ps.add("rv", {3}, false, false);
  for (int c = 0; c < 3; ++c) {
    scale.v[c] = 0.8 + 0.2 * c;
    shift.v[c] = 0.1 * c;
    rv.v[c] = 1.0;
  }

  std::vector<double> r(x.size());
  for (auto& v : r) v = rng.normal();
  auto eval = [&]() {
    std::vector<double> rm0 = rm.v, rv0 = rv.v;
    Tensor<double> y = batchnorm_forward<double>(x, scale, shift, rm, rv, true, 0.1, 1e-5, nullptr);
    rm.v = rm0;  // keep the objective a pure function
    rv.v = rv0;
    return dot(y.data, r);
  };

  BatchNormCache<double> cache;
  Tensor<double> y = batchnorm_forward(x, scale, shift, rm, rv, true, 0.1, 1e-5, &cache);
  Tensor<double> dy = y;
  dy.data = r;
  Tensor<double> dx = batchnorm_backward(dy, scale, cache, scale, shift);

  for (int k = 0; k < 40; ++k) {
    std::size_t i = rng.uniform_int(x.size());
    CHECK(rel_err(dx.data[i], fd(eval, x.data[i])) < 1e-6);
  }
  for (int c = 0; c < 3; ++c) {
    CHECK(rel_err(scale.g[c], fd(eval, scale.v[c])) < 1e-6);
    CHECK(rel_err(shift.g[c], fd(eval, shift.v[c])) < 1e-6);
  }
}

TEST_CASE("relu forward and adjoint") {
  Tensor<double> x(1, 1, 2, 3);
  x.data = {-1.0, 0.0, 2.5, -0.1, 7.0, -3.0};
  Tensor<double> y = relu_forward(x);
  CHECK(y.data == std::vector<double>{0.0, 0.0, 2.5, 0.0, 7.0, 0.0});

  Tensor<double> dy = x;
  dy.data = {10, 20, 30, 40, 50, 60};
  Tensor<double> dx = relu_backward(dy, x);
  // gradient is zero exactly where the pre-activation is not positive
  CHECK(dx.data == std::vector<double>{0.0, 0.0, 30.0, 0.0, 50.0, 0.0});
}

TEST_CASE("maxpool forward picks maxima and ties resolve to scan order") {
  Tensor<double> x(1, 1, 4, 4);
  x.data = {1, 2, 5, 5,
            3, 4, 5, 5,
            9, 9, 0, -1,
            9, 9, -2, 7};
  PoolCache<double> cache;
  Tensor<double> y = maxpool2_forward(x, cache);
  REQUIRE(y.h == 2);
  REQUIRE(y.w == 2);
  CHECK(y.at(0, 0, 0, 0) == 4.0);
  CHECK(y.at(0, 0, 0, 1) == 5.0);
  CHECK(y.at(0, 0, 1, 0) == 9.0);
  CHECK(y.at(0, 0, 1, 1) == 7.0);

  Tensor<double> dy(1, 1, 2, 2);
  dy.data = {1.0, 2.0, 3.0, 4.0};
  Tensor<double> dx = maxpool2_backward(dy, x, cache);
  CHECK(dx.at(0, 0, 1, 1) == 1.0);
  CHECK(dx.at(0, 0, 0, 2) == 2.0);  // tie: first maximum in scan order
  CHECK(dx.at(0, 0, 2, 0) == 3.0);
  CHECK(dx.at(0, 0, 3, 3) == 4.0);
  double total = 0.0;
  for (double v : dx.data) total += v;
  CHECK(total == 10.0);  // routed to exactly one slot each
}

TEST_CASE("maxpool gradient matches finite differences") {
  Rng rng = Rng::stream(18, "test/pool_fd");
  Tensor<double> x = randn(2, 3, 6, 6, rng);
  PoolCache<double> cache;
  Tensor<double> y0 = maxpool2_forward(x, cache);
  std::vector<double> r(y0.size());
  for (auto& v : r) v = rng.normal();
  auto eval = [&]() {
    PoolCache<double> c2;
    Tensor<double> y = maxpool2_forward(x, c2);
    return dot(y.data, r);
  };
  Tensor<double> dy = y0;
  dy.data = r;
  Tensor<double> dx = maxpool2_backward(dy, x, cache);
  for (int k = 0; k < 60; ++k) {
    std::size_t i = rng.uniform_int(x.size());
    CHECK(rel_err(dx.data[i], fd(eval, x.data[i], 1e-7)) < 1e-5);
  }
}

TEST_CASE("upsample is nearest neighbor and backward is its exact adjoint") {
  Tensor<double> x(1, 2, 2, 2);
  x.data = {1, 2, 3, 4, 5, 6, 7, 8};
  Tensor<double> y = upsample2_forward(x);
  REQUIRE(y.h == 4);
  REQUIRE(y.w == 4);
  CHECK(y.at(0, 0, 0, 0) == 1.0);
  CHECK(y.at(0, 0, 0, 1) == 1.0);
  CHECK(y.at(0, 0, 1, 1) == 1.0);
  CHECK(y.at(0, 0, 2, 3) == 4.0);
  CHECK(y.at(0, 1, 3, 2) == 8.0);

  Rng rng = Rng::stream(19, "test/up_adjoint");
  Tensor<double> a = randn(2, 3, 5, 4, rng);
  Tensor<double> u = randn(2, 3, 10, 8, rng);
  Tensor<double> ua = upsample2_forward(a);
  Tensor<double> ub = upsample2_backward(u);
  CHECK(dot(ua.data, u.data) == doctest::Approx(dot(a.data, ub.data)).epsilon(1e-12));
}

TEST_CASE("concat splits back exactly") {
  Rng rng = Rng::stream(20, "test/concat");
  Tensor<double> a = randn(2, 3, 4, 5, rng);
  Tensor<double> b = randn(2, 1, 4, 5, rng);
  Tensor<double> c = randn(2, 4, 4, 5, rng);
  Tensor<double> y = concat_forward<double>({&a, &b, &c});
  REQUIRE(y.c == 8);
  CHECK(y.at(1, 0, 2, 3) == a.at(1, 0, 2, 3));
  CHECK(y.at(1, 3, 2, 3) == b.at(1, 0, 2, 3));
  CHECK(y.at(1, 4, 2, 3) == c.at(1, 0, 2, 3));
  CHECK(y.at(0, 7, 1, 1) == c.at(0, 3, 1, 1));

  std::vector<Tensor<double>> parts = concat_backward(y, {3, 1, 4});
  REQUIRE(parts.size() == 3);
  CHECK(parts[0].data == a.data);
  CHECK(parts[1].data == b.data);
  CHECK(parts[2].data == c.data);
}

TEST_CASE("scse with zero gates is the identity and zero input maps to zero") {
  Rng rng = Rng::stream(21, "test/scse_zero");
  Tensor<double> x = randn(2, 4, 3, 3, rng);
  ParamStore<double> ps;
  Param<double>& w1 = ps.add("w1", {2, 4});
  Param<double>& b1 = ps.add("b1", {2});
  Param<double>& w2 = ps.add("w2", {4, 2});
  Param<double>& b2 = ps.add("b2", {4});
  Param<double>& ws = ps.add("ws", {1, 4, 1, 1});
  Param<double>& bs = ps.add("bs", {1});

  ScseCache<double> cache;
  Tensor<double> y = scse_forward(x, w1, b1, w2, b2, ws, bs, cache);
  CHECK(y.data == x.data);  // 0.5x + 0.5x exactly

  for (auto& v : w1.v) v = rng.normal();
  for (auto& v : b1.v) v = rng.normal();
  for (auto& v : w2.v) v = rng.normal();
  for (auto& v : b2.v) v = rng.normal();
  for (auto& v : ws.v) v = rng.normal();
  for (auto& v : bs.v) v = rng.normal();
  Tensor<double> zero(2, 4, 3, 3);
  Tensor<double> yz = scse_forward(zero, w1, b1, w2, b2, ws, bs, cache);
  for (double v : yz.data) CHECK(v == 0.0);
}

TEST_CASE("scse backward matches finite differences on a 2x4x4x4 tensor") {
  Rng rng = Rng::stream(22, "test/scse_fd");
  Tensor<double> x = randn(2, 4, 4, 4, rng);
  ParamStore<double> ps;
  Param<double>& w1 = ps.add("w1", {2, 4});
  Param<double>& b1 = ps.add("b1", {2});
  Param<double>& w2 = ps.add("w2", {4, 2});
  Param<double>& b2 = ps.add("b2", {4});
  Param<double>& ws = ps.add("ws", {1, 4, 1, 1});
  Param<double>& bs = ps.add("bs", {1});
  for (auto& v : w1.v) v = rng.normal() * 0.7;
  for (auto& v : b1.v) v = rng.normal() * 0.3;
  for (auto& v : w2.v) v = rng.normal() * 0.7;
  for (auto& v : b2.v) v = rng.normal() * 0.3;
  for (auto& v : ws.v) v = rng.normal() * 0.7;
  for (auto& v : bs.v) v = rng.normal() * 0.3;

  ScseCache<double> cache;
  Tensor<double> y0 = scse_forward(x, w1, b1, w2, b2, ws, bs, cache);
  std::vector<double> r(y0.size());
  for (auto& v : r) v = rng.normal();
  auto eval = [&]() {
    ScseCache<double> c2;
    Tensor<double> y = scse_forward(x, w1, b1, w2, b2, ws, bs, c2);
    return dot(y.data, r);
  };

  Tensor<double> dy = y0;
  dy.data = r;
  Tensor<double> dx = scse_backward(dy, x, w1, w2, ws, cache, w1, b1, w2, b2, ws, bs);

  const double tol = 1e-4;  // contract bound; observed error is far smaller
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(rel_err(dx.data[i], fd(eval, x.data[i])) < tol);
  for (std::size_t i = 0; i < w1.size(); ++i)
    CHECK(rel_err(w1.g[i], fd(eval, w1.v[i])) < tol);
  for (std::size_t i = 0; i < b1.size(); ++i)
    CHECK(rel_err(b1.g[i], fd(eval, b1.v[i])) < tol);
  for (std::size_t i = 0; i < w2.size(); ++i)
    CHECK(rel_err(w2.g[i], fd(eval, w2.v[i])) < tol);
  for (std::size_t i = 0; i < b2.size(); ++i)
    CHECK(rel_err(b2.g[i], fd(eval, b2.v[i])) < tol);
  for (std::size_t i = 0; i < ws.size(); ++i)
    CHECK(rel_err(ws.g[i], fd(eval, ws.v[i])) < tol);
  CHECK(rel_err(bs.g[0], fd(eval, bs.v[0])) < tol);
}
