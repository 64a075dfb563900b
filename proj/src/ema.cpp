// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include "cellseg/ema.hpp"

#include <cmath>
#include <cstdio>

namespace cellseg {

const EpochRecord& ValidationTrace::ingest(double raw) {
  require(std::isfinite(raw) && raw >= 0.0 && raw <= 1.0,
          "validation value must lie in [0,1]");
  EpochRecord rec;
  rec.epoch = static_cast<int>(records_.size()) + 1;
  rec.raw = raw;

  if (!has_ema_) {
    ema_ = raw;
    has_ema_ = true;
    rec.ema = raw;
    rec.residual = 0.0;
    clean_residuals_.push_back(0.0);
    records_.push_back(rec);
    return records_.back();
  }

  rec.residual = raw - ema_;
  if (clean_residuals_.size() >= 3) {
    double mean = 0.0;
    for (double r : clean_residuals_) mean += r;
    mean /= static_cast<double>(clean_residuals_.size());
    double var = 0.0;
    for (double r : clean_residuals_) var += (r - mean) * (r - mean);
    var /= static_cast<double>(clean_residuals_.size());
    const double threshold = std::max(cfg_.outlier_floor, cfg_.outlier_k * std::sqrt(var));
    rec.outlier = std::abs(rec.residual) > threshold;
  }

  if (rec.outlier) {
    rec.ema = ema_;  // excluded from the average
  } else {
    ema_ = cfg_.alpha * ema_ + (1.0 - cfg_.alpha) * raw;
    rec.ema = ema_;
    clean_residuals_.push_back(rec.residual);
  }
  records_.push_back(rec);
  return records_.back();
}

int ValidationTrace::select_best() const {
  require(!records_.empty(), "cannot select from an empty trace");
  int best_epoch = -1;
  double best_ema = 0.0;
  for (const EpochRecord& rec : records_) {
    if (rec.outlier) continue;
    if (best_epoch < 0 || rec.ema >= best_ema) {
      best_ema = rec.ema;
      best_epoch = rec.epoch;
    }
  }
  require(best_epoch > 0, "no non-outlier epochs to select from");
  return best_epoch;
}

std::string ValidationTrace::csv() const {
  std::string out = "epoch,raw_dice,ema_dice,outlier\n";
  char buf[96];
  for (const EpochRecord& rec : records_) {
    std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f,%d\n", rec.epoch, rec.raw, rec.ema,
                  rec.outlier ? 1 : 0);
    out += buf;
  }
  return out;
}

}  // namespace cellseg
