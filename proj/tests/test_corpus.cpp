// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cellseg/corpus.hpp"
#include "cellseg/image_io.hpp"
#include "cellseg/sampling.hpp"
#include "doctest.h"

using namespace cellseg;

namespace {

namespace fs = std::filesystem;

std::vector<unsigned char> slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("samples are a pure function of (seed, split, index)") {
  CorpusSpec spec;
  Sample a = generate_sample(spec, Split::kTrain, 7);
  Sample b = generate_sample(spec, Split::kTrain, 7);
  CHECK(a.image.data == b.image.data);
  CHECK(a.mask.data == b.mask.data);

  Sample other_index = generate_sample(spec, Split::kTrain, 8);
  CHECK(a.image.data != other_index.image.data);
  Sample other_split = generate_sample(spec, Split::kVal, 7);
  CHECK(a.image.data != other_split.image.data);

  CorpusSpec reseeded = spec;
  reseeded.seed = 43;
  Sample other_seed = generate_sample(reseeded, Split::kTrain, 7);
  CHECK(a.image.data != other_seed.image.data);
}

TEST_CASE("sample geometry and value ranges") {
  CorpusSpec spec;
  for (int index : {0, 1, 2, 3, 4}) {
    Sample s = generate_sample(spec, Split::kTest, index);
    CHECK(s.image.height == 64);
    CHECK(s.image.width == 64);
    CHECK(s.image.channels == 3);
    CHECK(s.mask.height == 64);
    for (double v : s.image.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    s.mask.validate();
  }
}

TEST_CASE("train split empty fraction sits near 60 percent") {
  CorpusSpec spec;
  int empty = 0;
  for (int i = 0; i < spec.n_train; ++i) {
    Sample s = generate_sample(spec, Split::kTrain, i);
    empty += s.mask.positive_count() == 0 ? 1 : 0;
  }
  double fraction = static_cast<double>(empty) / spec.n_train;
  CHECK(fraction >= 0.56);
  CHECK(fraction <= 0.64);
}

TEST_CASE("every non-empty sample's coverage stays inside the hard band") {
  CorpusSpec spec;
  double coverage_sum = 0.0;
  int with_cells = 0;
  for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) {
    for (int i = 0; i < split_size(spec, split); ++i) {
      SampleInfo info;
      Sample s = generate_sample(spec, split, i, &info);
      double ratio = s.mask.pos_ratio();
      if (s.mask.positive_count() == 0) continue;
      ++with_cells;
      coverage_sum += ratio;
      CHECK(ratio >= spec.pos_ratio_lo);
      CHECK(ratio <= spec.pos_ratio_hi);
      CHECK(info.drawn_k >= spec.cell_count_lo);
      CHECK(info.drawn_k <= spec.cell_count_hi);
      CHECK(static_cast<int>(component_areas(s.mask).size()) <= info.drawn_k);
      CHECK(info.attempts >= 1);
      CHECK((info.layout == 0 || info.layout == 1 || info.layout == 2));
    }
  }
  REQUIRE(with_cells > 0);
  double mean_coverage = coverage_sum / with_cells;
  CHECK(mean_coverage > 0.01);  // log-uniform(0.001, 0.2) has mean ~0.038
  CHECK(mean_coverage < 0.09);
}

TEST_CASE("generate_corpus writes the full tree and a consistent manifest") {
  CorpusSpec spec;
  const fs::path dir = "/tmp/cellseg_corpus_a";
  fs::remove_all(dir);
  std::vector<SampleRecord> records = generate_corpus(spec, dir.string());
  REQUIRE(static_cast<int>(records.size()) == spec.n_train + spec.n_val + spec.n_test);

  int images = 0, masks = 0;
  for (const auto& entry : fs::directory_iterator(dir / "images")) {
    (void)entry;
    ++images;
  }
  for (const auto& entry : fs::directory_iterator(dir / "masks")) {
    (void)entry;
    ++masks;
  }
  CHECK(images == 829);
  CHECK(masks == 829);

  // Manifest rows agree with what sits on disk.
  for (std::size_t i = 0; i < records.size(); i += 97) {
    const SampleRecord& r = records[i];
    char stem[64];
    std::snprintf(stem, sizeof(stem), "%s_%04d.png", r.split.c_str(), r.id);
    BinaryMask mask = read_mask_png((dir / "masks" / stem).string());
    CHECK(mask.pos_ratio() == doctest::Approx(r.pos_ratio).epsilon(1e-12));
    CHECK((mask.positive_count() > 0) == r.has_cells);
    CHECK(static_cast<int>(component_areas(mask).size()) == r.component_count);
    MultiChannelImage image = read_image_png((dir / "images" / stem).string());
    CHECK(image.channels == 3);
    CHECK(image.height == spec.image_side);
  }

  // The loader inverts manifest_csv.
  std::vector<SampleRecord> loaded = load_manifest((dir / "manifest.csv").string());
  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].split == records[i].split);
    CHECK(loaded[i].id == records[i].id);
    CHECK(loaded[i].has_cells == records[i].has_cells);
    CHECK(loaded[i].component_count == records[i].component_count);
    CHECK(std::abs(loaded[i].pos_ratio - records[i].pos_ratio) < 1e-9);
  }
}

TEST_CASE("regeneration is byte-identical") {
  CorpusSpec spec;
  const fs::path a = "/tmp/cellseg_corpus_a";  // produced by the previous case
  const fs::path b = "/tmp/cellseg_corpus_b";
  if (!fs::exists(a / "manifest.csv")) generate_corpus(spec, a.string());
  fs::remove_all(b);
  generate_corpus(spec, b.string());

  CHECK(slurp(a / "manifest.csv") == slurp(b / "manifest.csv"));
  for (const char* stem : {"train_0000", "train_0311", "val_0007", "test_0042"}) {
    std::string name = std::string(stem) + ".png";
    CHECK(slurp(a / "images" / name) == slurp(b / "images" / name));
    CHECK(slurp(a / "masks" / name) == slurp(b / "masks" / name));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("spec validation rejects bad configurations") {
  CorpusSpec spec;
  spec.n_train = 0;
  CHECK_THROWS_AS(spec.validate(), ContractError);
  spec = CorpusSpec{};
  spec.pos_ratio_lo = 0.3;  // above hi
  CHECK_THROWS_AS(spec.validate(), ContractError);
  spec = CorpusSpec{};
  spec.image_side = 30;  // not divisible by 4
  CHECK_THROWS_AS(spec.validate(), ContractError);
  spec = CorpusSpec{};
  CHECK_THROWS_AS(generate_sample(spec, Split::kTest, spec.n_test), ContractError);
}
