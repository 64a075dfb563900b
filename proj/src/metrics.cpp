// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include "cellseg/metrics.hpp"

#include <cstdio>

namespace cellseg {

namespace {
void check_same_shape(const BinaryMask& pred, const BinaryMask& target) {
  if (pred.height != target.height || pred.width != target.width) {
    throw ContractError("mask shape mismatch: pred is " + std::to_string(pred.height) + "x" +
                        std::to_string(pred.width) + ", target is " + std::to_string(target.height) +
                        "x" + std::to_string(target.width));
  }
}
}  // namespace

ConfusionCounts confusion_counts(const BinaryMask& pred, const BinaryMask& target) {
  check_same_shape(pred, target);
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    bool p = pred.data[i] != 0;
    bool t = target.data[i] != 0;
    if (p && t)
      ++c.tp;
    else if (p && !t)
      ++c.fp;
    else if (!p && t)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

double dice_score(const BinaryMask& pred, const BinaryMask& target, double smooth) {
  require(smooth >= 0.0, "smooth must be non-negative");
  ConfusionCounts c = confusion_counts(pred, target);
  double denom = 2.0 * c.tp + c.fp + c.fn + smooth;
  if (denom == 0.0) return 1.0;  // both masks empty, no smoothing
  return (2.0 * c.tp + smooth) / denom;
}

double iou_score(const BinaryMask& pred, const BinaryMask& target, double smooth) {
  require(smooth >= 0.0, "smooth must be non-negative");
  ConfusionCounts c = confusion_counts(pred, target);
  double denom = static_cast<double>(c.tp + c.fp + c.fn) + smooth;
  if (denom == 0.0) return 1.0;
  return (c.tp + smooth) / denom;
}

PrecisionRecall precision_recall(const BinaryMask& pred, const BinaryMask& target) {
  ConfusionCounts c = confusion_counts(pred, target);
  PrecisionRecall pr;
  pr.precision = (c.tp + c.fp) == 0 ? 1.0 : static_cast<double>(c.tp) / (c.tp + c.fp);
  pr.recall = (c.tp + c.fn) == 0 ? 1.0 : static_cast<double>(c.tp) / (c.tp + c.fn);
  return pr;
}

MetricReport evaluate_masks(const BinaryMask& pred, const BinaryMask& target) {
  ConfusionCounts c = confusion_counts(pred, target);
  MetricReport r;
  r.tp = c.tp;
  r.fp = c.fp;
  r.fn = c.fn;
  r.tn = c.tn;
  double dice_denom = 2.0 * c.tp + c.fp + c.fn;
  double iou_denom = static_cast<double>(c.tp + c.fp + c.fn);
  r.dice = dice_denom == 0.0 ? 1.0 : 2.0 * c.tp / dice_denom;
  r.iou = iou_denom == 0.0 ? 1.0 : c.tp / iou_denom;
  r.precision = (c.tp + c.fp) == 0 ? 1.0 : static_cast<double>(c.tp) / (c.tp + c.fp);
  r.recall = (c.tp + c.fn) == 0 ? 1.0 : static_cast<double>(c.tp) / (c.tp + c.fn);
  return r;
}

std::string MetricReport::csv_row() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%llu,%llu,%llu,%llu", dice, iou, precision,
                recall, static_cast<unsigned long long>(tp), static_cast<unsigned long long>(fp),
                static_cast<unsigned long long>(fn), static_cast<unsigned long long>(tn));
  return buf;
}

}  // namespace cellseg
