// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "cellseg/raster.hpp"
#include "cellseg/rng.hpp"

namespace cellseg {

struct SampleFeatures {
  bool has_cells = false;
  int component_count = 0;
  long min_component_area = 0;  // 0 when empty
  double pos_ratio = 0.0;
};

struct SampleWeight {
  int id = 0;
  double weight = 1.0;
  SampleFeatures features;
};

/// Every coefficient of the difficulty heuristic in one place.
struct ComplexityConfig {
  double small_bonus = 0.5;
  double per_component = 0.1;
  int component_cap = 10;
  double small_area_base = 100.0;   // pixels at the reference resolution
  double reference_side = 512.0;
};

/// Areas of the 8-connected components of the positive region.
std::vector<long> component_areas(const BinaryMask& mask);

/// weight = 1 + small_bonus * [min area below the resolution-scaled cutoff]
///            + per_component * min(components - 1, cap)
SampleWeight complexity_weight(const BinaryMask& mask, int id = 0,
                               const ComplexityConfig& cfg = {});

/// n i.i.d. draws with replacement, P(i) proportional to weight.
std::vector<int> weighted_draw(const std::vector<SampleWeight>& weights, int n, Rng& rng);

enum class Dihedral { kIdentity = 0, kHflip, kVflip, kRot180, kRot90, kRot270, kTranspose };

Dihedral dihedral_inverse(Dihedral m);
MultiChannelImage apply_dihedral(const MultiChannelImage& image, Dihedral m);
BinaryMask apply_dihedral(const BinaryMask& mask, Dihedral m);
LogitMap apply_dihedral(const LogitMap& map, Dihedral m);

struct AugmentConfig {
  double p_flip = 0.5;      // horizontal and vertical, drawn independently
  double p_rot90 = 0.5;     // then a uniform choice among 90/180/270
  double p_elastic = 0.3;
  double elastic_alpha = 120.0;  // displacement scale at the 512 px reference
  double elastic_sigma = 9.0;
  double p_photometric = 0.5;
  double brightness_contrast_delta = 0.2;

  void validate() const;
};

/// One augmentation draw; image and mask receive the same geometry. The rng
/// is consumed in a pinned order, so a given stream state fixes the output.
std::pair<MultiChannelImage, BinaryMask> augment(const MultiChannelImage& image,
                                                 const BinaryMask& mask,
                                                 const AugmentConfig& cfg, Rng& rng);

struct TtaResult {
  MultiChannelImage probability;  // single channel, averaged sigmoid outputs
  int members = 0;
  bool fallback = false;  // true when rotations were dropped (non-square input)
};

/// Dihedral test-time augmentation: run the forward on 7 transformed copies
/// (identity, hflip, vflip, rot180, rot90, rot270, transpose), invert each
/// transform on the sigmoid output, average the probability maps. Non-square
/// inputs fall back to the 4 flip-closed members.
TtaResult tta_predict(const std::function<LogitMap(const MultiChannelImage&)>& forward,
                      const MultiChannelImage& image);

}  // namespace cellseg
