// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cellseg/raster.hpp"
#include "cellseg/trainer.hpp"

namespace cellseg {

/// Grayscale error classes, fixed 8-bit levels: TN=0, FN=96, FP=160, TP=255.
/// The four classes partition the raster by construction.
GrayImage error_map(const BinaryMask& pred, const BinaryMask& target);

/// RGB copy of the source with the predicted boundary burned in as pure red.
/// Boundary: positive pixel with at least one 4-neighbor outside the mask
/// (image edges count as outside).
MultiChannelImage boundary_overlay(const MultiChannelImage& image, const BinaryMask& pred);

/// Parses a RunReport::csv() file back into per-epoch stats (confusion counts
/// are not part of the CSV and stay zero).
std::vector<EpochStats> load_run_csv(const std::string& path);

struct FigureBundle {
  std::vector<std::string> files;  // paths written, relative to run_dir
};

/// Renders the figure bundle for a finished run directory: loss/dice/iou
/// curve CSVs from report.csv, a per-image validation table, and boundary
/// overlay + error map PNGs for the top_n best and worst validation images
/// under <run_dir>/figures.
FigureBundle write_figures(const std::string& run_dir, const ModelConfig& model_cfg,
                           bool gabor_on, const SplitData& val_data, int top_n);

}  // namespace cellseg
