// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "cellseg/common.hpp"

namespace cellseg {

/// H×W×C raster in [0,1], row-major, channel-last (data[(y*W + x)*C + c]).
struct MultiChannelImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  MultiChannelImage() = default;
  MultiChannelImage(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {
    require(h > 0 && w > 0 && c > 0, "image dimensions must be positive");
  }

  double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

  void validate() const;
};

/// H×W {0,1} raster, row-major.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {
    require(h > 0 && w > 0, "mask dimensions must be positive");
    require(fill == 0 || fill == 1, "mask values must be 0 or 1");
  }

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }

  std::size_t positive_count() const {
    std::size_t n = 0;
    for (auto v : data) n += v;
    return n;
  }
  double pos_ratio() const {
    return static_cast<double>(positive_count()) / static_cast<double>(data.size());
  }

  void validate() const;
};

/// H×W pre-sigmoid predictions, row-major, finite reals.
struct LogitMap {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  LogitMap() = default;
  LogitMap(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {
    require(h > 0 && w > 0, "logit map dimensions must be positive");
  }

  double& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }

  void validate() const;
};

/// Thresholds at probability 0.5, i.e. logit >= 0.
BinaryMask threshold_logits(const LogitMap& logits);

/// Single-channel [0,1] raster packed as a 1-channel MultiChannelImage.
using GrayImage = MultiChannelImage;

}  // namespace cellseg
