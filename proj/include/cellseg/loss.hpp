// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "cellseg/raster.hpp"

namespace cellseg {

struct LossConfig {
  double eps = 1e-7;
  double smooth = 1.0;
  double w_dice = 0.5;
  double w_bce = 0.3;
  double w_tversky = 0.2;
  double alpha_tv = 0.7;
  double beta_tv = 0.3;
  double logit_clamp = 10.0;
  double pos_weight_min = 1.0;
  double pos_weight_max = 50.0;

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double dice_loss = 0.0;
  double bce_loss = 0.0;
  double tversky_loss = 0.0;
  double pos_weight = 1.0;
  /// dL/dlogit per sample, same shapes as the input batch; empty unless
  /// produced by loss_backward.
  std::vector<LogitMap> grad;
};

/// clamp((1 - pos_ratio) / max(pos_ratio, eps), pos_weight_min, pos_weight_max)
/// over the whole batch; an all-background batch lands on the upper clamp.
double adaptive_pos_weight(const std::vector<BinaryMask>& batch_targets, const LossConfig& cfg);

/// Composite loss: w_dice * (1 - mean per-sample soft dice)
///               + w_tversky * (1 - mean per-sample tversky index)
///               + w_bce * positive-weighted BCE (stable log-sum form, raw
///                 logits, mean over all B*H*W elements).
/// Dice/Tversky run on sigmoid(clamp(logits, +-logit_clamp)) clamped to
/// [eps, 1-eps].
LossBreakdown loss_forward(const std::vector<LogitMap>& logits, const std::vector<BinaryMask>& targets,
                           const LossConfig& cfg);

/// Forward plus the exact gradient. The Dice/Tversky paths treat both clamps
/// as graph nodes (zero gradient where they bind); the BCE path differentiates
/// the raw logits.
LossBreakdown loss_backward(const std::vector<LogitMap>& logits, const std::vector<BinaryMask>& targets,
                            const LossConfig& cfg);

}  // namespace cellseg
