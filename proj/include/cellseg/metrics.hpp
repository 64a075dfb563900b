// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "cellseg/raster.hpp"

namespace cellseg {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;
};

struct MetricReport {
  double dice = 0.0;
  double iou = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  static std::string csv_header() { return "dice,iou,precision,recall,tp,fp,fn,tn"; }
  std::string csv_row() const;
};

ConfusionCounts confusion_counts(const BinaryMask& pred, const BinaryMask& target);

/// (2*tp + smooth) / (2*tp + fp + fn + smooth); empty union with smooth=0 is 1.
double dice_score(const BinaryMask& pred, const BinaryMask& target, double smooth = 0.0);

/// (tp + smooth) / (tp + fp + fn + smooth); empty union with smooth=0 is 1.
double iou_score(const BinaryMask& pred, const BinaryMask& target, double smooth = 0.0);

/// precision = tp/(tp+fp), recall = tp/(tp+fn); empty denominators give 1.
struct PrecisionRecall {
  double precision;
  double recall;
};
PrecisionRecall precision_recall(const BinaryMask& pred, const BinaryMask& target);

MetricReport evaluate_masks(const BinaryMask& pred, const BinaryMask& target);

}  // namespace cellseg
