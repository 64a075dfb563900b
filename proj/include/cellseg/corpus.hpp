// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cellseg/raster.hpp"

namespace cellseg {

struct CorpusSpec {
  int n_train = 599;
  int n_val = 130;
  int n_test = 100;
  double p_with_cells = 0.40;
  double pos_ratio_lo = 0.001;
  double pos_ratio_hi = 0.20;
  int cell_count_lo = 1;
  int cell_count_hi = 25;
  int image_side = 64;
  std::uint64_t seed = 42;

  void validate() const;
};

enum class Split { kTrain = 0, kVal = 1, kTest = 2 };

const char* split_name(Split split);
int split_size(const CorpusSpec& spec, Split split);

struct Sample {
  MultiChannelImage image;  // RGB
  BinaryMask mask;
};

/// Diagnostics about how a sample was drawn.
struct SampleInfo {
  bool widened = false;   // acceptance window had to be relaxed
  int attempts = 0;       // renders until a layout was accepted (0 for empty)
  double target_ratio = 0.0;
  int drawn_k = 0;
  int layout = -1;        // 0 scattered, 1 cluster, 2 ring
};

/// Deterministic function of (spec.seed, split, index); rendering order or
/// parallelism cannot change the result.
Sample generate_sample(const CorpusSpec& spec, Split split, int index,
                       SampleInfo* info = nullptr);

struct SampleRecord {
  std::string split;
  int id = 0;
  bool has_cells = false;
  double pos_ratio = 0.0;
  int component_count = 0;
};

/// Writes images/<split>_<id>.png, masks/<split>_<id>.png and manifest.csv
/// under out_dir. Regeneration is byte-identical for a fixed spec.
std::vector<SampleRecord> generate_corpus(const CorpusSpec& spec, const std::string& out_dir);

std::string manifest_csv(const std::vector<SampleRecord>& records);
std::vector<SampleRecord> load_manifest(const std::string& path);

}  // namespace cellseg
