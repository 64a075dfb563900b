// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cellseg/checkpoint.hpp"
#include "cellseg/corpus.hpp"
#include "cellseg/trainer.hpp"
#include "doctest.h"

using namespace cellseg;

namespace {

namespace fs = std::filesystem;

std::vector<unsigned char> slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

CorpusSpec tiny_spec() {
  CorpusSpec spec;
  spec.n_train = 12;
  spec.n_val = 6;
  spec.n_test = 4;
  spec.image_side = 16;
  spec.p_with_cells = 0.7;  // keep positives in every split at this size
  spec.cell_count_hi = 4;
  return spec;
}

SplitData make_split(const CorpusSpec& spec, Split split) {
  SplitData out;
  for (int i = 0; i < split_size(spec, split); ++i) {
    Sample s = generate_sample(spec, split, i);
    out.images.push_back(std::move(s.image));
    out.masks.push_back(std::move(s.mask));
    SampleRecord r;
    r.split = split_name(split);
    r.id = i;
    out.records.push_back(r);
  }
  return out;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.accum_steps = 2;
  cfg.model.base_channels = 4;
  cfg.seed = 42;
  return cfg;
}

}  // namespace

TEST_CASE("smoke run finishes with clean epoch stats") {
  CorpusSpec spec = tiny_spec();
  SplitData train_data = make_split(spec, Split::kTrain);
  SplitData val_data = make_split(spec, Split::kVal);
  TrainConfig cfg = tiny_config();

  RunReport report = train(cfg, train_data, val_data, "");
  REQUIRE(report.epochs.size() == 3);
  CHECK(report.nan_events == 0);
  CHECK(report.best_epoch >= 1);
  CHECK(report.best_epoch <= 3);
  CHECK(report.wall_seconds > 0.0);
  CHECK(!report.config_echo.empty());

  // steps: ceil(12/4)=3 micro-batches, accum 2 -> 2 optimizer steps per epoch.
  OptimConfig opt = cfg.optimizer;
  opt.accum_steps = cfg.accum_steps;
  opt.total_steps = 6;
  for (const EpochStats& e : report.epochs) {
    CHECK(std::isfinite(e.train_loss));
    CHECK(e.train_loss > 0.0);
    CHECK(e.lr == lr_at(2 * e.epoch, opt));  // exact, not approximate
    CHECK(e.val.dice >= 0.0);
    CHECK(e.val.dice <= 1.0);
    CHECK(e.val.tp + e.val.fp + e.val.fn + e.val.tn ==
          static_cast<std::uint64_t>(6 * 16 * 16));
  }
}

TEST_CASE("training is deterministic end to end") {
  CorpusSpec spec = tiny_spec();
  SplitData train_data = make_split(spec, Split::kTrain);
  SplitData val_data = make_split(spec, Split::kVal);
  TrainConfig cfg = tiny_config();

  const fs::path a = "/tmp/cellseg_run_a", b = "/tmp/cellseg_run_b";
  fs::remove_all(a);
  fs::remove_all(b);
  RunReport ra = train(cfg, train_data, val_data, a.string());
  RunReport rb = train(cfg, train_data, val_data, b.string());

  CHECK(ra.csv() == rb.csv());
  CHECK(ra.data_digest == rb.data_digest);
  CHECK(ra.best_epoch == rb.best_epoch);
  CHECK(slurp(a / "best.cskp") == slurp(b / "best.cskp"));
  CHECK(slurp(a / "last.cskp") == slurp(b / "last.cskp"));
  CHECK(slurp(a / "validation_trace.csv") == slurp(b / "validation_trace.csv"));
  fs::remove_all(b);

  // A different seed must actually change the run.
  TrainConfig reseeded = cfg;
  reseeded.seed = 7;
  RunReport rc = train(reseeded, train_data, val_data, "");
  CHECK(rc.csv() != ra.csv());
  fs::remove_all(a);
}

TEST_CASE("gabor toggle leaves the data stream untouched; sampler toggle does not") {
  CorpusSpec spec = tiny_spec();
  SplitData train_data = make_split(spec, Split::kTrain);
  SplitData val_data = make_split(spec, Split::kVal);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;

  TrainConfig no_gabor = cfg;
  no_gabor.gabor_on = false;
  TrainConfig no_sampler = cfg;
  no_sampler.sampler_on = false;

  RunReport base = train(cfg, train_data, val_data, "");
  RunReport gabor_off = train(no_gabor, train_data, val_data, "");
  RunReport sampler_off = train(no_sampler, train_data, val_data, "");

  CHECK(base.data_digest == gabor_off.data_digest);      // identical ids and masks
  CHECK(base.data_digest != sampler_off.data_digest);    // different id sequence
  CHECK(base.csv() != gabor_off.csv());                  // the input channel did change
}

TEST_CASE("checkpointed best epoch reproduces its in-loop validation metrics") {
  CorpusSpec spec = tiny_spec();
  SplitData train_data = make_split(spec, Split::kTrain);
  SplitData val_data = make_split(spec, Split::kVal);
  TrainConfig cfg = tiny_config();

  const fs::path dir = "/tmp/cellseg_run_consistency";
  fs::remove_all(dir);
  RunReport report = train(cfg, train_data, val_data, dir.string());

  Model<float> model(cfg.model, 999);
  load_checkpoint((dir / "best.cskp").string(), model.params());
  GaborBank bank = build_bank();
  std::vector<MultiChannelImage> val4 = assemble_inputs(val_data.images, cfg.gabor_on, bank);
  EvalResult eval = evaluate_model(model, val4, val_data.masks);

  const EpochStats& best = report.epochs[static_cast<std::size_t>(report.best_epoch - 1)];
  CHECK(std::abs(eval.aggregate.dice - best.val.dice) < 1e-9);
  CHECK(eval.aggregate.tp == best.val.tp);
  CHECK(eval.aggregate.fp == best.val.fp);
  CHECK(eval.aggregate.fn == best.val.fn);
  fs::remove_all(dir);
}

TEST_CASE("evaluate_model aggregates per-image counts and is deterministic") {
  CorpusSpec spec = tiny_spec();
  SplitData val_data = make_split(spec, Split::kVal);
  TrainConfig cfg = tiny_config();
  Model<float> model(cfg.model, 5);

  GaborBank bank = build_bank();
  std::vector<MultiChannelImage> val4 = assemble_inputs(val_data.images, true, bank);
  EvalResult a = evaluate_model(model, val4, val_data.masks);
  EvalResult b = evaluate_model(model, val4, val_data.masks);
  CHECK(a.csv() == b.csv());
  REQUIRE(a.per_image.size() == val_data.images.size());

  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double dice_sum = 0.0;
  for (const MetricReport& r : a.per_image) {
    tp += r.tp;
    fp += r.fp;
    fn += r.fn;
    tn += r.tn;
    dice_sum += r.dice;
  }
  CHECK(a.aggregate.tp == tp);
  CHECK(a.aggregate.fp == fp);
  CHECK(a.aggregate.fn == fn);
  CHECK(a.aggregate.tn == tn);
  CHECK(a.mean_dice == doctest::Approx(dice_sum / a.per_image.size()).epsilon(1e-12));

  // Batch size must not matter in eval mode.
  EvalOptions wide;
  wide.batch_size = 6;
  EvalResult c = evaluate_model(model, val4, val_data.masks, wide);
  CHECK(c.csv() == a.csv());
}

TEST_CASE("tta evaluation runs on square inputs and stays in range") {
  CorpusSpec spec = tiny_spec();
  SplitData val_data = make_split(spec, Split::kVal);
  TrainConfig cfg = tiny_config();
  Model<float> model(cfg.model, 5);

  GaborBank bank = build_bank();
  std::vector<MultiChannelImage> val4 = assemble_inputs(val_data.images, true, bank);
  EvalOptions opts;
  opts.tta = true;
  EvalResult a = evaluate_model(model, val4, val_data.masks, opts);
  EvalResult b = evaluate_model(model, val4, val_data.masks, opts);
  CHECK(a.csv() == b.csv());
  CHECK(a.aggregate.dice >= 0.0);
  CHECK(a.aggregate.dice <= 1.0);
}

TEST_CASE("config validation rejects malformed training setups") {
  CorpusSpec spec = tiny_spec();
  SplitData train_data = make_split(spec, Split::kTrain);
  SplitData val_data = make_split(spec, Split::kVal);

  TrainConfig cfg = tiny_config();
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(cfg, train_data, val_data, ""), ContractError);

  cfg = tiny_config();
  cfg.model.in_channels = 3;
  CHECK_THROWS_AS(train(cfg, train_data, val_data, ""), ContractError);

  cfg = tiny_config();
  SplitData broken = train_data;
  broken.masks.pop_back();
  CHECK_THROWS_AS(train(cfg, broken, val_data, ""), ContractError);
}

TEST_CASE("ablation table pairs four runs under one seed") {
  CorpusSpec spec = tiny_spec();
  SplitData train_data = make_split(spec, Split::kTrain);
  SplitData val_data = make_split(spec, Split::kVal);
  SplitData test_data = make_split(spec, Split::kTest);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;

  const fs::path dir = "/tmp/cellseg_ablate";
  fs::remove_all(dir);
  AblationTable table = ablate(cfg, train_data, val_data, test_data, dir.string());

  REQUIRE(table.cells.size() == 4);
  CHECK(!table.cells[0].gabor_on);
  CHECK(!table.cells[0].sampler_on);
  CHECK(table.cells[3].gabor_on);
  CHECK(table.cells[3].sampler_on);

  // Toggling gabor at a fixed sampler setting must not move the data stream.
  CHECK(table.cells[0].data_digest == table.cells[2].data_digest);
  CHECK(table.cells[1].data_digest == table.cells[3].data_digest);
  CHECK(table.cells[0].data_digest != table.cells[1].data_digest);

  REQUIRE(table.per_image_test_dice.size() == test_data.images.size());
  for (const auto& row : table.per_image_test_dice)
    for (double d : row) {
      CHECK(d >= 0.0);
      CHECK(d <= 1.0);
    }

  for (const char* sub : {"g0_s0", "g0_s1", "g1_s0", "g1_s1"}) {
    CHECK(fs::exists(dir / sub / "best.cskp"));
    CHECK(fs::exists(dir / sub / "last.cskp"));
  }

  const std::string csv = table.csv();
  CHECK(csv.rfind("gabor_on,sampler_on,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  const std::string paired = table.per_image_csv();
  CHECK(std::count(paired.begin(), paired.end(), '\n') ==
        static_cast<long>(test_data.images.size()) + 1);
  fs::remove_all(dir);
}

TEST_CASE("load_split reads back a generated corpus directory") {
  CorpusSpec spec = tiny_spec();
  const fs::path dir = "/tmp/cellseg_load_split";
  fs::remove_all(dir);
  generate_corpus(spec, dir.string());

  SplitData val_data = load_split(dir.string(), "val");
  REQUIRE(val_data.images.size() == static_cast<std::size_t>(spec.n_val));
  REQUIRE(val_data.masks.size() == val_data.images.size());
  REQUIRE(val_data.records.size() == val_data.images.size());
  for (std::size_t i = 0; i < val_data.images.size(); ++i) {
    CHECK(val_data.images[i].height == spec.image_side);
    CHECK(val_data.images[i].channels == 3);
    CHECK(val_data.records[i].split == "val");
    Sample s = generate_sample(spec, Split::kVal, static_cast<int>(i));
    CHECK(val_data.masks[i].data == s.mask.data);  // masks survive PNG exactly
  }
  CHECK_THROWS_AS(load_split(dir.string(), "nope"), ContractError);
  fs::remove_all(dir);
}
