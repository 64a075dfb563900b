// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <string>
#include <vector>

#include "cellseg/ema.hpp"
#include "cellseg/rng.hpp"
#include "doctest.h"

using namespace cellseg;

TEST_CASE("ema of a constant sequence is the constant") {
  ValidationTrace trace;
  for (int i = 0; i < 8; ++i) {
    const EpochRecord& rec = trace.ingest(0.7);
    CHECK(rec.ema == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(!rec.outlier);
  }
}

TEST_CASE("ema update rule is alpha*prev + (1-alpha)*raw") {
  ValidationTrace trace;  // alpha 0.9
  trace.ingest(0.9);
  const EpochRecord& rec = trace.ingest(0.8);
  CHECK(rec.ema == doctest::Approx(0.89).epsilon(1e-15));
  CHECK(rec.residual == doctest::Approx(-0.1).epsilon(1e-15));
}

TEST_CASE("alpha zero tracks the raw values exactly") {
  EmaConfig cfg;
  cfg.alpha = 0.0;
  ValidationTrace trace(cfg);
  std::vector<double> raws = {0.3, 0.5, 0.45, 0.52};
  for (double r : raws) CHECK(trace.ingest(r).ema == r);
}

TEST_CASE("ingest rejects values outside [0,1]") {
  ValidationTrace trace;
  CHECK_THROWS_AS(trace.ingest(1.5), ContractError);
  CHECK_THROWS_AS(trace.ingest(-0.1), ContractError);
  CHECK_THROWS_AS(trace.ingest(std::nan("")), ContractError);
  CHECK(trace.empty());
}

TEST_CASE("config validation") {
  EmaConfig bad;
  bad.alpha = 1.0;
  CHECK_THROWS_AS(ValidationTrace{bad}, ContractError);
  bad = EmaConfig{};
  bad.outlier_k = 0.0;
  CHECK_THROWS_AS(ValidationTrace{bad}, ContractError);
}

TEST_CASE("early epochs are never flagged") {
  // Fewer than 3 prior clean residuals: even a large jump passes through.
  ValidationTrace trace;
  trace.ingest(0.5);
  trace.ingest(0.9);
  const EpochRecord& rec = trace.ingest(0.05);
  for (const auto& r : trace.records()) CHECK(!r.outlier);
  CHECK(rec.ema < 0.9);  // it moved the average, it was not rejected
}

TEST_CASE("a crash epoch after a plateau is flagged and never selected") {
  ValidationTrace trace;
  std::vector<double> plateau = {0.80, 0.81, 0.80, 0.82, 0.81, 0.81};
  for (double r : plateau) CHECK(!trace.ingest(r).outlier);
  double ema_before = trace.records().back().ema;

  const EpochRecord& crash = trace.ingest(0.10);
  CHECK(crash.outlier);
  CHECK(crash.ema == ema_before);  // EMA untouched by the outlier
  CHECK(crash.residual == doctest::Approx(0.10 - ema_before).epsilon(1e-12));

  trace.ingest(0.80);  // recovery continues as if nothing happened
  int best = trace.select_best();
  CHECK(best != 7);
  CHECK(best == 6);  // the plateau EMA peaks right before the crash
}

TEST_CASE("outliers leave no trace in later smoothing") {
  std::vector<double> base = {0.70, 0.72, 0.71, 0.73, 0.74, 0.73, 0.75};
  ValidationTrace with_crash;
  ValidationTrace without_crash;
  for (std::size_t i = 0; i < base.size(); ++i) {
    with_crash.ingest(base[i]);
    without_crash.ingest(base[i]);
    if (i == 4) {
      const EpochRecord& rec = with_crash.ingest(0.02);
      CHECK(rec.outlier);
    }
  }
  // Non-outlier records of the crashed trace match the clean trace one-to-one.
  std::vector<const EpochRecord*> clean;
  for (const auto& r : with_crash.records())
    if (!r.outlier) clean.push_back(&r);
  REQUIRE(clean.size() == without_crash.records().size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    CHECK(clean[i]->ema == without_crash.records()[i].ema);
    CHECK(clean[i]->raw == without_crash.records()[i].raw);
  }
}

TEST_CASE("floor dominates the threshold on a flat trace") {
  // All residuals zero, so 3*std is zero and the 0.05 floor decides.
  ValidationTrace flagged;
  for (int i = 0; i < 5; ++i) flagged.ingest(0.5);
  CHECK(flagged.ingest(0.551).outlier);  // |residual| = 0.051 > 0.05

  ValidationTrace passed;
  for (int i = 0; i < 5; ++i) passed.ingest(0.5);
  CHECK(!passed.ingest(0.549).outlier);  // |residual| = 0.049 <= 0.05
}

TEST_CASE("noisy residuals widen the threshold beyond the floor") {
  // Alternating +-0.08 residual-scale noise pushes 3*std above 0.05, so a
  // 0.06 jump that the floor alone would flag is accepted.
  EmaConfig cfg;
  cfg.alpha = 0.0;  // ema == raw, residual == raw step
  ValidationTrace trace(cfg);
  std::vector<double> noisy = {0.50, 0.58, 0.50, 0.58, 0.50, 0.58, 0.50};
  for (double r : noisy) CHECK(!trace.ingest(r).outlier);
  CHECK(!trace.ingest(0.56).outlier);
}

TEST_CASE("ema stays inside the hull of accepted raw values") {
  Rng rng = Rng::stream(7, "ema/hull");
  ValidationTrace trace;
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 200; ++i) {
    double raw = 0.3 + 0.4 * rng.uniform01();
    const EpochRecord& rec = trace.ingest(raw);
    if (!rec.outlier) {
      lo = std::min(lo, raw);
      hi = std::max(hi, raw);
      CHECK(rec.ema >= lo);
      CHECK(rec.ema <= hi);
    }
  }
}

TEST_CASE("select_best prefers the highest ema, later epoch on ties") {
  EmaConfig cfg;
  cfg.alpha = 0.0;
  ValidationTrace trace(cfg);
  trace.ingest(0.6);
  trace.ingest(0.8);
  trace.ingest(0.8);
  trace.ingest(0.7);
  CHECK(trace.select_best() == 3);

  ValidationTrace empty_trace;
  CHECK_THROWS_AS(empty_trace.select_best(), ContractError);
}

TEST_CASE("csv layout is pinned") {
  ValidationTrace trace;
  trace.ingest(0.5);
  trace.ingest(0.6);
  CHECK(trace.csv() ==
        "epoch,raw_dice,ema_dice,outlier\n"
        "1,0.500000000,0.500000000,0\n"
        "2,0.600000000,0.510000000,0\n");
}
