// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cellseg/corpus.hpp"
#include "cellseg/ema.hpp"
#include "cellseg/gabor.hpp"
#include "cellseg/loss.hpp"
#include "cellseg/metrics.hpp"
#include "cellseg/model.hpp"
#include "cellseg/optimizer.hpp"
#include "cellseg/raster.hpp"
#include "cellseg/sampling.hpp"

namespace cellseg {

/// Unrecoverable failure inside a run (non-finite values, fatal I/O mid-run).
class TrainError : public std::runtime_error {
public:
  explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 4;
  int accum_steps = 2;  // copied into optimizer.accum_steps at run time
  std::uint64_t seed = 42;
  bool sampler_on = true;
  bool gabor_on = true;
  /// EMA-guarded best-epoch selection; false falls back to raw-dice argmax
  /// with no outlier veto (the unguarded configuration).
  bool ema_selection = true;
  ModelConfig model;
  OptimConfig optimizer;  // total_steps is recomputed from the corpus
  LossConfig loss;
  AugmentConfig augment;
  EmaConfig ema;
  ComplexityConfig complexity;

  void validate() const;
};

struct SplitData {
  std::vector<MultiChannelImage> images;  // RGB as loaded
  std::vector<BinaryMask> masks;
  std::vector<SampleRecord> records;
};

/// Reads data_dir/manifest.csv and loads every image/mask pair of one split.
SplitData load_split(const std::string& data_dir, const std::string& split);

/// RGB+edge stacks. Channel 3 carries the Gabor edge map when gabor_on and
/// zeros otherwise, so the toggle never changes the model's geometry.
std::vector<MultiChannelImage> assemble_inputs(const std::vector<MultiChannelImage>& images,
                                               bool gabor_on, const GaborBank& bank);

struct EpochStats {
  int epoch = 0;          // 1-based
  double train_loss = 0;  // mean composite loss over the epoch's micro-batches
  double lr = 0;          // lr of the epoch's last optimizer step, == lr_at(step)
  MetricReport val;       // aggregated over the validation split
  double ema_dice = 0;
  bool outlier = false;
};

struct RunReport {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;  // 1-based
  double wall_seconds = 0;
  int nan_events = 0;              // 0 in every completed run; aborts otherwise
  std::uint64_t data_digest = 0;   // hash over drawn ids + augmented masks
  std::string config_echo;

  /// Deterministic per-epoch table (wall time deliberately excluded).
  std::string csv() const;
};

/// Full training run. Writes best.cskp (parameters of the selected epoch) and
/// last.cskp (parameters + optimizer state) under out_dir unless it is empty.
RunReport train(const TrainConfig& cfg, const SplitData& train_data, const SplitData& val_data,
                const std::string& out_dir);

struct EvalOptions {
  bool tta = false;
  int batch_size = 4;
};

struct EvalResult {
  MetricReport aggregate;  // metrics from split-wide confusion counts
  std::vector<MetricReport> per_image;
  double mean_dice = 0;  // per-image statistics
  double std_dice = 0;

  std::string csv() const;  // index,dice,iou,precision,recall,tp,fp,fn,tn
};

/// Deterministic split evaluation; inputs are assembled 4-channel stacks.
EvalResult evaluate_model(Model<float>& model, const std::vector<MultiChannelImage>& inputs,
                          const std::vector<BinaryMask>& targets, const EvalOptions& opts = {});

struct AblationCell {
  bool gabor_on = false;
  bool sampler_on = false;
  int best_epoch = 0;
  double best_val_dice = 0;   // raw dice of the selected epoch
  double final_val_dice = 0;
  double test_dice = 0;       // aggregate over the test split
  std::uint64_t data_digest = 0;
};

struct AblationTable {
  std::vector<AblationCell> cells;  // (gabor, sampler) in {0,1}^2, row-major
  std::vector<std::array<double, 4>> per_image_test_dice;  // one column per cell

  std::string csv() const;
  std::string per_image_csv() const;  // paired per-image dice with deltas
};

/// Four paired runs toggling gabor_on and sampler_on under a shared seed.
/// out_dir must be non-empty; each cell trains into out_dir/g<g>_s<s>.
AblationTable ablate(const TrainConfig& base, const SplitData& train_data,
                     const SplitData& val_data, const SplitData& test_data,
                     const std::string& out_dir);

}  // namespace cellseg
