// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include "cellseg/raster.hpp"

#include <cmath>

namespace cellseg {

void MultiChannelImage::validate() const {
  require(height > 0 && width > 0 && channels > 0, "image dimensions must be positive");
  require(data.size() == static_cast<std::size_t>(height) * width * channels,
          "image data length must equal H*W*C");
  for (double v : data)
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0, "image values must be finite and within [0,1]");
}

void BinaryMask::validate() const {
  require(height > 0 && width > 0, "mask dimensions must be positive");
  require(data.size() == static_cast<std::size_t>(height) * width, "mask data length must equal H*W");
  for (auto v : data) require(v == 0 || v == 1, "mask values must be exactly 0 or 1");
}

void LogitMap::validate() const {
  require(height > 0 && width > 0, "logit map dimensions must be positive");
  require(data.size() == static_cast<std::size_t>(height) * width, "logit data length must equal H*W");
  for (double v : data) require(std::isfinite(v), "logit values must be finite");
}

BinaryMask threshold_logits(const LogitMap& logits) {
  BinaryMask mask(logits.height, logits.width);
  for (std::size_t i = 0; i < logits.data.size(); ++i)
    mask.data[i] = logits.data[i] >= 0.0 ? 1 : 0;
  return mask;
}

}  // namespace cellseg
