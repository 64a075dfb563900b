// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cellseg/common.hpp"

namespace cellseg {

struct EmaConfig {
  double alpha = 0.9;
  double outlier_k = 3.0;
  double outlier_floor = 0.05;

  void validate() const {
    require(alpha >= 0.0 && alpha < 1.0, "ema alpha must lie in [0,1)");
    require(outlier_k > 0.0 && outlier_floor >= 0.0, "outlier thresholds must be positive");
  }
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double raw = 0.0;
  double ema = 0.0;       // value after this epoch's update (unchanged for outliers)
  double residual = 0.0;  // raw minus the pre-update EMA
  bool outlier = false;
};

/// Per-epoch validation metric trace with exponential smoothing and
/// residual-based outlier rejection. Flagged epochs stay recorded but feed
/// neither the EMA nor checkpoint selection.
class ValidationTrace {
public:
  explicit ValidationTrace(EmaConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  /// Ingest one raw validation value in [0,1]; returns the stored record.
  const EpochRecord& ingest(double raw);

  const std::vector<EpochRecord>& records() const { return records_; }
  bool empty() const { return records_.empty(); }
  std::size_t size() const { return records_.size(); }

  /// Epoch (1-based) with the highest EMA among non-outlier epochs;
  /// ties break toward the later epoch.
  int select_best() const;

  /// CSV with header epoch,raw_dice,ema_dice,outlier.
  std::string csv() const;

private:
  EmaConfig cfg_;
  std::vector<EpochRecord> records_;
  double ema_ = 0.0;
  bool has_ema_ = false;
  std::vector<double> clean_residuals_;  // residuals of non-outlier epochs
};

}  // namespace cellseg
