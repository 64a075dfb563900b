// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include "cellseg/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "cellseg/common.hpp"

namespace cellseg {

namespace {

// Mirror indexing with edge repetition: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Separable Gaussian blur of one H*W field, reflect boundary.
void gaussian_blur(std::vector<double>& field, int h, int w, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double v = std::exp(-0.5 * (static_cast<double>(i) * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : kernel) v /= sum;

  std::vector<double> tmp(field.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               field[static_cast<std::size_t>(y) * w + reflect_index(x + i, w)];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               tmp[static_cast<std::size_t>(reflect_index(y + i, h)) * w + x];
      }
      field[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
}

void dihedral_dims(int h, int w, Dihedral m, int& oh, int& ow) {
  switch (m) {
    case Dihedral::kIdentity:
    case Dihedral::kHflip:
    case Dihedral::kVflip:
    case Dihedral::kRot180:
      oh = h;
      ow = w;
      return;
    case Dihedral::kRot90:
    case Dihedral::kRot270:
    case Dihedral::kTranspose:
      oh = w;
      ow = h;
      return;
  }
  throw ContractError("unknown dihedral member");
}

// Source pixel of output (y, x); (h, w) is the input size.
void dihedral_source(int h, int w, Dihedral m, int y, int x, int& sy, int& sx) {
  switch (m) {
    case Dihedral::kIdentity: sy = y; sx = x; return;
    case Dihedral::kHflip:    sy = y; sx = w - 1 - x; return;
    case Dihedral::kVflip:    sy = h - 1 - y; sx = x; return;
    case Dihedral::kRot180:   sy = h - 1 - y; sx = w - 1 - x; return;
    case Dihedral::kRot90:    sy = x; sx = w - 1 - y; return;  // counter-clockwise
    case Dihedral::kRot270:   sy = h - 1 - x; sx = y; return;
    case Dihedral::kTranspose: sy = x; sx = y; return;
  }
  throw ContractError("unknown dihedral member");
}

}  // namespace

std::vector<long> component_areas(const BinaryMask& mask) {
  mask.validate();
  const int h = mask.height;
  const int w = mask.width;
  std::vector<std::uint8_t> seen(mask.data.size(), 0);
  std::vector<long> areas;
  std::vector<int> stack;
  for (int start = 0; start < h * w; ++start) {
    if (mask.data[static_cast<std::size_t>(start)] == 0 || seen[static_cast<std::size_t>(start)]) continue;
    long area = 0;
    stack.assign(1, start);
    seen[static_cast<std::size_t>(start)] = 1;
    while (!stack.empty()) {
      int p = stack.back();
      stack.pop_back();
      ++area;
      int py = p / w;
      int px = p % w;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          int ny = py + dy;
          int nx = px + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          int q = ny * w + nx;
          if (mask.data[static_cast<std::size_t>(q)] == 0 || seen[static_cast<std::size_t>(q)]) continue;
          seen[static_cast<std::size_t>(q)] = 1;
          stack.push_back(q);
        }
      }
    }
    areas.push_back(area);
  }
  return areas;
}

SampleWeight complexity_weight(const BinaryMask& mask, int id, const ComplexityConfig& cfg) {
  require(cfg.small_bonus >= 0.0 && cfg.per_component >= 0.0, "complexity bonuses must be non-negative");
  require(cfg.component_cap >= 0, "component cap must be non-negative");
  require(cfg.small_area_base > 0.0 && cfg.reference_side > 0.0, "area scaling must be positive");

  std::vector<long> areas = component_areas(mask);

  SampleWeight out;
  out.id = id;
  out.features.component_count = static_cast<int>(areas.size());
  out.features.has_cells = !areas.empty();
  out.features.pos_ratio = mask.pos_ratio();
  out.weight = 1.0;
  if (areas.empty()) return out;

  long min_area = *std::min_element(areas.begin(), areas.end());
  out.features.min_component_area = min_area;

  double pixels = static_cast<double>(mask.height) * static_cast<double>(mask.width);
  double cutoff = cfg.small_area_base * pixels / (cfg.reference_side * cfg.reference_side);
  if (static_cast<double>(min_area) < cutoff) out.weight += cfg.small_bonus;
  long extra = std::min<long>(static_cast<long>(areas.size()) - 1, cfg.component_cap);
  out.weight += cfg.per_component * static_cast<double>(extra);
  return out;
}

std::vector<int> weighted_draw(const std::vector<SampleWeight>& weights, int n, Rng& rng) {
  require(!weights.empty(), "weighted_draw needs at least one sample");
  require(n >= 0, "draw count must be non-negative");
  std::vector<double> cumulative(weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double w = weights[i].weight;
    require(std::isfinite(w) && w > 0.0, "sample weights must be positive and finite");
    total += w;
    cumulative[i] = total;
  }
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    double u = rng.uniform01() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t idx = static_cast<std::size_t>(it - cumulative.begin());
    if (idx >= weights.size()) idx = weights.size() - 1;
    out[static_cast<std::size_t>(k)] = weights[idx].id;
  }
  return out;
}

Dihedral dihedral_inverse(Dihedral m) {
  switch (m) {
    case Dihedral::kRot90: return Dihedral::kRot270;
    case Dihedral::kRot270: return Dihedral::kRot90;
    default: return m;  // the rest are involutions
  }
}

MultiChannelImage apply_dihedral(const MultiChannelImage& image, Dihedral m) {
  image.validate();
  int oh = 0, ow = 0;
  dihedral_dims(image.height, image.width, m, oh, ow);
  MultiChannelImage out(oh, ow, image.channels);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      int sy = 0, sx = 0;
      dihedral_source(image.height, image.width, m, y, x, sy, sx);
      for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(sy, sx, c);
    }
  }
  return out;
}

BinaryMask apply_dihedral(const BinaryMask& mask, Dihedral m) {
  mask.validate();
  int oh = 0, ow = 0;
  dihedral_dims(mask.height, mask.width, m, oh, ow);
  BinaryMask out(oh, ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      int sy = 0, sx = 0;
      dihedral_source(mask.height, mask.width, m, y, x, sy, sx);
      out.at(y, x) = mask.at(sy, sx);
    }
  }
  return out;
}

LogitMap apply_dihedral(const LogitMap& map, Dihedral m) {
  map.validate();
  int oh = 0, ow = 0;
  dihedral_dims(map.height, map.width, m, oh, ow);
  LogitMap out(oh, ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      int sy = 0, sx = 0;
      dihedral_source(map.height, map.width, m, y, x, sy, sx);
      out.at(y, x) = map.at(sy, sx);
    }
  }
  return out;
}

void AugmentConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  require(prob(p_flip) && prob(p_rot90) && prob(p_elastic) && prob(p_photometric),
          "augmentation probabilities must lie in [0, 1]");
  require(elastic_alpha >= 0.0 && elastic_sigma > 0.0, "elastic parameters out of range");
  require(brightness_contrast_delta >= 0.0 && brightness_contrast_delta < 1.0,
          "photometric delta out of range");
}

std::pair<MultiChannelImage, BinaryMask> augment(const MultiChannelImage& image,
                                                 const BinaryMask& mask,
                                                 const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  image.validate();
  mask.validate();
  require(image.height == mask.height && image.width == mask.width,
          "augment: image and mask sizes differ");

  MultiChannelImage img = image;
  BinaryMask msk = mask;

  // Draw order is part of the contract: hflip, vflip, rot90 (+k), elastic
  // field y then x, photometric contrast then brightness.
  if (rng.bernoulli(cfg.p_flip)) {
    img = apply_dihedral(img, Dihedral::kHflip);
    msk = apply_dihedral(msk, Dihedral::kHflip);
  }
  if (rng.bernoulli(cfg.p_flip)) {
    img = apply_dihedral(img, Dihedral::kVflip);
    msk = apply_dihedral(msk, Dihedral::kVflip);
  }
  if (rng.bernoulli(cfg.p_rot90)) {
    int k = 1 + static_cast<int>(rng.uniform_int(3));
    Dihedral rot = k == 1 ? Dihedral::kRot90 : (k == 2 ? Dihedral::kRot180 : Dihedral::kRot270);
    img = apply_dihedral(img, rot);
    msk = apply_dihedral(msk, rot);
  }

  if (rng.bernoulli(cfg.p_elastic)) {
    const int h = img.height;
    const int w = img.width;
    std::vector<double> fy(static_cast<std::size_t>(h) * w);
    std::vector<double> fx(static_cast<std::size_t>(h) * w);
    for (auto& v : fy) v = rng.uniform(-1.0, 1.0);
    for (auto& v : fx) v = rng.uniform(-1.0, 1.0);
    gaussian_blur(fy, h, w, cfg.elastic_sigma);
    gaussian_blur(fx, h, w, cfg.elastic_sigma);
    const double scale = cfg.elastic_alpha * static_cast<double>(h) / 512.0;

    MultiChannelImage warped(h, w, img.channels);
    BinaryMask warped_mask(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        std::size_t i = static_cast<std::size_t>(y) * w + x;
        double sy = static_cast<double>(y) + scale * fy[i];
        double sx = static_cast<double>(x) + scale * fx[i];

        int y0 = static_cast<int>(std::floor(sy));
        int x0 = static_cast<int>(std::floor(sx));
        double wy = sy - y0;
        double wx = sx - x0;
        int y0r = reflect_index(y0, h);
        int y1r = reflect_index(y0 + 1, h);
        int x0r = reflect_index(x0, w);
        int x1r = reflect_index(x0 + 1, w);
        for (int c = 0; c < img.channels; ++c) {
          double v = (1.0 - wy) * ((1.0 - wx) * img.at(y0r, x0r, c) + wx * img.at(y0r, x1r, c)) +
                     wy * ((1.0 - wx) * img.at(y1r, x0r, c) + wx * img.at(y1r, x1r, c));
          warped.at(y, x, c) = clamp01(v);
        }
        int yn = reflect_index(static_cast<int>(std::lround(sy)), h);
        int xn = reflect_index(static_cast<int>(std::lround(sx)), w);
        warped_mask.at(y, x) = msk.at(yn, xn);
      }
    }
    img = std::move(warped);
    msk = std::move(warped_mask);
  }

  if (rng.bernoulli(cfg.p_photometric)) {
    double c = rng.uniform(-cfg.brightness_contrast_delta, cfg.brightness_contrast_delta);
    double b = rng.uniform(-cfg.brightness_contrast_delta, cfg.brightness_contrast_delta);
    for (auto& v : img.data) v = clamp01(v * (1.0 + c) + b);
  }

  return {std::move(img), std::move(msk)};
}

TtaResult tta_predict(const std::function<LogitMap(const MultiChannelImage&)>& forward,
                      const MultiChannelImage& image) {
  require(static_cast<bool>(forward), "tta_predict needs a forward function");
  image.validate();

  static constexpr Dihedral kAll[7] = {
      Dihedral::kIdentity, Dihedral::kHflip,  Dihedral::kVflip,  Dihedral::kRot180,
      Dihedral::kRot90,    Dihedral::kRot270, Dihedral::kTranspose};
  static constexpr Dihedral kFlipClosed[4] = {Dihedral::kIdentity, Dihedral::kHflip,
                                              Dihedral::kVflip, Dihedral::kRot180};

  const bool square = image.height == image.width;
  const Dihedral* members = square ? kAll : kFlipClosed;
  const int count = square ? 7 : 4;

  TtaResult result;
  result.members = count;
  result.fallback = !square;
  result.probability = MultiChannelImage(image.height, image.width, 1);

  for (int k = 0; k < count; ++k) {
    MultiChannelImage transformed = apply_dihedral(image, members[k]);
    LogitMap logits = forward(transformed);
    require(logits.height == transformed.height && logits.width == transformed.width,
            "tta_predict: forward output size mismatch");
    LogitMap prob(logits.height, logits.width);
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
      double z = logits.data[i];
      require(std::isfinite(z), "tta_predict: non-finite logit");
      prob.data[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
    LogitMap back = apply_dihedral(prob, dihedral_inverse(members[k]));
    for (std::size_t i = 0; i < back.data.size(); ++i) result.probability.data[i] += back.data[i];
  }
  for (auto& v : result.probability.data) v /= static_cast<double>(count);
  return result;
}

}  // namespace cellseg
