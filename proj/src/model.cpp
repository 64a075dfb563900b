// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include "cellseg/model.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "cellseg/rng.hpp"

namespace cellseg {

namespace {

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  require(dst.same_shape(src), "gradient accumulation shape mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <typename T>
void Model<T>::add_conv(const std::string& name, int out_c, int in_c, int k) {
  params_.add(name + ".weight", {out_c, in_c, k, k}, /*decay=*/true);
  params_.add(name + ".bias", {out_c}, /*decay=*/false);
}

template <typename T>
void Model<T>::add_bn(const std::string& name, int c) {
  params_.add(name + ".scale", {c}, /*decay=*/false);
  params_.add(name + ".shift", {c}, /*decay=*/false);
  params_.add(name + ".run_mean", {c}, /*decay=*/false, /*trainable=*/false);
  params_.add(name + ".run_var", {c}, /*decay=*/false, /*trainable=*/false);
}

template <typename T>
void Model<T>::add_block(const std::string& name, int in_c, int out_c) {
  add_conv(name + ".conv", out_c, in_c, 3);
  add_bn(name + ".bn", out_c);
}

template <typename T>
void Model<T>::add_scse(const std::string& name, int c) {
  const int mid = c / 2;  // squeeze ratio 2
  params_.add(name + ".w1.weight", {mid, c}, /*decay=*/true);
  params_.add(name + ".w1.bias", {mid}, /*decay=*/false);
  params_.add(name + ".w2.weight", {c, mid}, /*decay=*/true);
  params_.add(name + ".w2.bias", {c}, /*decay=*/false);
  params_.add(name + ".spatial.weight", {1, c, 1, 1}, /*decay=*/true);
  params_.add(name + ".spatial.bias", {1}, /*decay=*/false);
}

template <typename T>
void Model<T>::init_params(std::uint64_t seed) {
  for (auto& [name, p] : params_) {
    if (!p.trainable) {
      const T fill = ends_with(name, ".run_var") ? T(1) : T(0);
      std::fill(p.v.begin(), p.v.end(), fill);
    } else if (name.find(".scse.") != std::string::npos) {
      std::fill(p.v.begin(), p.v.end(), T(0));  // gates start as exact identity
    } else if (ends_with(name, ".bn.scale")) {
      std::fill(p.v.begin(), p.v.end(), T(1));
    } else if (ends_with(name, ".weight")) {
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < p.shape.size(); ++d)
        fan_in *= static_cast<std::size_t>(p.shape[d]);
      const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
      Rng rng = Rng::stream(seed, "init/" + name);
      for (auto& v : p.v) v = static_cast<T>(rng.normal() * std_dev);
    } else {
      std::fill(p.v.begin(), p.v.end(), T(0));
    }
  }
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const int b = cfg_.base_channels;
  const int enc_in = cfg_.use_projection ? 3 : cfg_.in_channels;
  if (cfg_.use_projection) {
    add_conv("proj.conv1", 8, cfg_.in_channels, 3);
    add_bn("proj.bn", 8);
    add_conv("proj.conv2", 3, 8, 1);
  }
  add_block("enc0", enc_in, b);
  add_block("enc1", b, 2 * b);
  add_block("enc2", 2 * b, 4 * b);
  add_block("dec01", 3 * b, b);
  add_block("dec11", 6 * b, 2 * b);
  add_block("dec02", 4 * b, b);
  if (cfg_.use_scse) {
    add_scse("dec01.scse", b);
    add_scse("dec11.scse", 2 * b);
    add_scse("dec02.scse", b);
  }
  add_conv("head", 1, b, 1);
  init_params(seed);

  proj1_.conv = "proj.conv1";
  proj1_.bn = "proj.bn";
  enc0_.conv = "enc0.conv";   enc0_.bn = "enc0.bn";
  enc1_.conv = "enc1.conv";   enc1_.bn = "enc1.bn";
  enc2_.conv = "enc2.conv";   enc2_.bn = "enc2.bn";
  dec01_.conv = "dec01.conv"; dec01_.bn = "dec01.bn";
  dec11_.conv = "dec11.conv"; dec11_.bn = "dec11.bn";
  dec02_.conv = "dec02.conv"; dec02_.bn = "dec02.bn";
  scse01_.name = "dec01.scse";
  scse11_.name = "dec11.scse";
  scse02_.name = "dec02.scse";
}

template <typename T>
Tensor<T> Model<T>::block_forward(Block& blk, Tensor<T> x, bool train, bool cache) {
  const Param<T>& w = params_.at(blk.conv + ".weight");
  const Param<T>& b = params_.at(blk.conv + ".bias");
  blk.scratch.keep = cache;
  Tensor<T> pre_bn = conv2d_forward(x, w, &b, /*pad=*/1, blk.scratch);
  Tensor<T> pre_relu = batchnorm_forward(pre_bn, params_.at(blk.bn + ".scale"),
                                         params_.at(blk.bn + ".shift"),
                                         params_.at(blk.bn + ".run_mean"),
                                         params_.at(blk.bn + ".run_var"), train, cfg_.bn_momentum,
                                         cfg_.bn_eps, cache ? &blk.bn_cache : nullptr);
  Tensor<T> out = relu_forward(pre_relu);
  if (cache) {
    blk.in = std::move(x);
    blk.pre_relu = std::move(pre_relu);
    blk.out = out;
  }
  return out;
}

template <typename T>
Tensor<T> Model<T>::block_backward(Block& blk, const Tensor<T>& dy) {
  Tensor<T> dpre_relu = relu_backward(dy, blk.pre_relu);
  Tensor<T> dpre_bn = batchnorm_backward(dpre_relu, params_.at(blk.bn + ".scale"), blk.bn_cache,
                                         params_.at(blk.bn + ".scale"),
                                         params_.at(blk.bn + ".shift"));
  Tensor<T> dx(blk.in.n, blk.in.c, blk.in.h, blk.in.w);
  conv2d_backward(blk.in, params_.at(blk.conv + ".weight"), dpre_bn, /*pad=*/1, &dx,
                  params_.at(blk.conv + ".weight"), &params_.at(blk.conv + ".bias"), blk.scratch);
  return dx;
}

template <typename T>
Tensor<T> Model<T>::scse_apply(Scse& s, Tensor<T> x, bool cache) {
  ScseCache<T> local;
  ScseCache<T>& cc = cache ? s.cache : local;
  Tensor<T> y = scse_forward(x, params_.at(s.name + ".w1.weight"), params_.at(s.name + ".w1.bias"),
                             params_.at(s.name + ".w2.weight"), params_.at(s.name + ".w2.bias"),
                             params_.at(s.name + ".spatial.weight"),
                             params_.at(s.name + ".spatial.bias"), cc);
  if (cache) {
    s.in = std::move(x);
    s.out = y;
  }
  return y;
}

template <typename T>
Tensor<T> Model<T>::scse_unapply(Scse& s, const Tensor<T>& dy) {
  return scse_backward(dy, s.in, params_.at(s.name + ".w1.weight"),
                       params_.at(s.name + ".w2.weight"), params_.at(s.name + ".spatial.weight"),
                       s.cache, params_.at(s.name + ".w1.weight"),
                       params_.at(s.name + ".w1.bias"), params_.at(s.name + ".w2.weight"),
                       params_.at(s.name + ".w2.bias"), params_.at(s.name + ".spatial.weight"),
                       params_.at(s.name + ".spatial.bias"));
}

template <typename T>
Tensor<T> Model<T>::project(const Tensor<T>& x) {
  require(cfg_.use_projection, "model was configured without an input projection");
  require(x.c == cfg_.in_channels, "model input channel count mismatch");
  Tensor<T> h = block_forward(proj1_, x, /*train=*/false, /*cache=*/false);
  return conv2d_forward(h, params_.at("proj.conv2.weight"), &params_.at("proj.conv2.bias"),
                        /*pad=*/0, scratch_);
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& x, bool train) {
  require(x.c == cfg_.in_channels, "model input channel count mismatch");
  require(x.h % 4 == 0 && x.w % 4 == 0, "model input height and width must be divisible by 4");
  require(all_finite(x.data), "model input contains non-finite values");
  const bool cache = train;
  has_cache_ = cache;

  Tensor<T> x00_in;
  if (cfg_.use_projection) {
    if (cache) input_ = x;
    Tensor<T> h = block_forward(proj1_, x, train, cache);
    x00_in = conv2d_forward(h, params_.at("proj.conv2.weight"), &params_.at("proj.conv2.bias"),
                            /*pad=*/0, scratch_);
  } else {
    x00_in = x;
  }

  Tensor<T> x00 = block_forward(enc0_, std::move(x00_in), train, cache);
  Tensor<T> x10 = block_forward(enc1_, maxpool2_forward(x00, pool0_), train, cache);
  Tensor<T> x20 = block_forward(enc2_, maxpool2_forward(x10, pool1_), train, cache);

  Tensor<T> up10 = upsample2_forward(x10);
  Tensor<T> x01 = block_forward(dec01_, concat_forward<T>({&x00, &up10}), train, cache);
  if (cfg_.use_scse) x01 = scse_apply(scse01_, std::move(x01), cache);

  Tensor<T> up20 = upsample2_forward(x20);
  Tensor<T> x11 = block_forward(dec11_, concat_forward<T>({&x10, &up20}), train, cache);
  if (cfg_.use_scse) x11 = scse_apply(scse11_, std::move(x11), cache);

  Tensor<T> up11 = upsample2_forward(x11);
  Tensor<T> x02 = block_forward(dec02_, concat_forward<T>({&x00, &x01, &up11}), train, cache);
  if (cfg_.use_scse) x02 = scse_apply(scse02_, std::move(x02), cache);

  return conv2d_forward(x02, params_.at("head.weight"), &params_.at("head.bias"), /*pad=*/0,
                        scratch_);
}

template <typename T>
Tensor<T> Model<T>::backward(const Tensor<T>& dlogits) {
  require(has_cache_, "backward requires a preceding train-mode forward");
  const int b = cfg_.base_channels;

  const Tensor<T>& head_in = cfg_.use_scse ? scse02_.out : dec02_.out;
  require(dlogits.n == head_in.n && dlogits.c == 1 && dlogits.h == head_in.h &&
              dlogits.w == head_in.w,
          "logit gradient shape mismatch");
  Tensor<T> d02(head_in.n, head_in.c, head_in.h, head_in.w);
  conv2d_backward(head_in, params_.at("head.weight"), dlogits, /*pad=*/0, &d02,
                  params_.at("head.weight"), &params_.at("head.bias"), scratch_);

  if (cfg_.use_scse) d02 = scse_unapply(scse02_, d02);
  std::vector<Tensor<T>> parts02 = concat_backward(block_backward(dec02_, d02), {b, b, 2 * b});

  Tensor<T> d11 = upsample2_backward(parts02[2]);
  if (cfg_.use_scse) d11 = scse_unapply(scse11_, d11);
  std::vector<Tensor<T>> parts11 = concat_backward(block_backward(dec11_, d11), {2 * b, 4 * b});

  Tensor<T> d01 = std::move(parts02[1]);
  if (cfg_.use_scse) d01 = scse_unapply(scse01_, d01);
  std::vector<Tensor<T>> parts01 = concat_backward(block_backward(dec01_, d01), {b, 2 * b});

  Tensor<T> d20 = upsample2_backward(parts11[1]);
  Tensor<T> d10 = maxpool2_backward(block_backward(enc2_, d20), enc1_.out, pool1_);
  accumulate(d10, parts11[0]);
  accumulate(d10, upsample2_backward(parts01[1]));

  Tensor<T> d00 = maxpool2_backward(block_backward(enc1_, d10), enc0_.out, pool0_);
  accumulate(d00, parts02[0]);
  accumulate(d00, parts01[0]);

  Tensor<T> dproj = block_backward(enc0_, d00);
  has_cache_ = false;
  if (!cfg_.use_projection) return dproj;

  Tensor<T> dh(proj1_.out.n, proj1_.out.c, proj1_.out.h, proj1_.out.w);
  conv2d_backward(proj1_.out, params_.at("proj.conv2.weight"), dproj, /*pad=*/0, &dh,
                  params_.at("proj.conv2.weight"), &params_.at("proj.conv2.bias"), scratch_);
  return block_backward(proj1_, dh);
}

template class Model<float>;
template class Model<double>;

namespace {

template <typename T>
std::vector<LogitMap> tensor_to_logits_impl(const Tensor<T>& t) {
  require(t.c == 1, "logit tensor must have a single channel");
  std::vector<LogitMap> maps;
  maps.reserve(static_cast<std::size_t>(t.n));
  for (int i = 0; i < t.n; ++i) {
    LogitMap m(t.h, t.w);
    for (int y = 0; y < t.h; ++y)
      for (int x = 0; x < t.w; ++x) m.at(y, x) = static_cast<double>(t.at(i, 0, y, x));
    maps.push_back(std::move(m));
  }
  return maps;
}

template <typename T>
Tensor<T> logits_to_tensor_impl(const std::vector<LogitMap>& maps) {
  require(!maps.empty(), "logit batch must be non-empty");
  Tensor<T> t(static_cast<int>(maps.size()), 1, maps[0].height, maps[0].width);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    require(maps[i].height == maps[0].height && maps[i].width == maps[0].width,
            "logit batch shapes must match");
    for (int y = 0; y < maps[i].height; ++y)
      for (int x = 0; x < maps[i].width; ++x)
        t.at(static_cast<int>(i), 0, y, x) = static_cast<T>(maps[i].at(y, x));
  }
  return t;
}

}  // namespace

std::vector<LogitMap> tensor_to_logits(const Tensor<float>& t) { return tensor_to_logits_impl(t); }
std::vector<LogitMap> tensor_to_logits(const Tensor<double>& t) { return tensor_to_logits_impl(t); }
Tensor<float> logits_to_tensor_f32(const std::vector<LogitMap>& maps) {
  return logits_to_tensor_impl<float>(maps);
}
Tensor<double> logits_to_tensor_f64(const std::vector<LogitMap>& maps) {
  return logits_to_tensor_impl<double>(maps);
}

}  // namespace cellseg
