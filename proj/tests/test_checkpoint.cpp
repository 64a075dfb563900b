// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "cellseg/checkpoint.hpp"
#include "cellseg/model.hpp"
#include "cellseg/rng.hpp"
#include "doctest.h"

using namespace cellseg;

namespace {

std::string tmp_path(const std::string& stem) {
  return std::string("/tmp/cellseg_ckpt_") + stem + ".cskp";
}

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

ModelConfig small_cfg() {
  ModelConfig cfg;
  cfg.base_channels = 4;
  return cfg;
}

}  // namespace

TEST_CASE("checkpoint restores every parameter exactly") {
  const std::string path = tmp_path("roundtrip");
  Model<float> a(small_cfg(), 123);
  save_checkpoint(path, a.params());

  Model<float> b(small_cfg(), 999);  // different init, same structure
  load_checkpoint(path, b.params());
  auto ita = a.params().begin();
  auto itb = b.params().begin();
  for (; ita != a.params().end(); ++ita, ++itb) {
    CHECK(ita->first == itb->first);
    CHECK(ita->second.v == itb->second.v);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint serialization is byte deterministic") {
  const std::string p1 = tmp_path("bytes1"), p2 = tmp_path("bytes2");
  Model<float> a(small_cfg(), 5);
  save_checkpoint(p1, a.params());

  Model<float> b(small_cfg(), 77);
  load_checkpoint(p1, b.params());
  save_checkpoint(p2, b.params());
  CHECK(slurp(p1) == slurp(p2));  // save -> load -> save is the identity on bytes
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("optimizer state rides along byte-exactly") {
  const std::string p1 = tmp_path("opt1"), p2 = tmp_path("opt2");
  Model<float> a(small_cfg(), 9);
  AdamState<float> state;
  Rng rng = Rng::stream(9, "test/ckpt_opt");
  OptimConfig cfg;
  cfg.total_steps = 10;
  for (int s = 0; s < 3; ++s) {
    for (auto& [name, p] : a.params())
      for (auto& g : p.g) g = static_cast<float>(rng.normal());
    adamw_step(a.params(), state, 1e-3, cfg);
  }
  save_checkpoint(p1, a.params(), &state);

  Model<float> b(small_cfg(), 1);
  AdamState<float> restored;
  load_checkpoint(p1, b.params(), &restored);
  CHECK(restored.step == 3);
  CHECK(restored.m == state.m);
  CHECK(restored.v == state.v);

  save_checkpoint(p2, b.params(), &restored);
  CHECK(slurp(p1) == slurp(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("checkpoint header layout is pinned") {
  const std::string path = tmp_path("header");
  Model<float> a(small_cfg(), 2);
  save_checkpoint(path, a.params());
  std::vector<unsigned char> bytes = slurp(path);

  REQUIRE(bytes.size() > 12);
  CHECK(bytes[0] == 'C');
  CHECK(bytes[1] == 'S');
  CHECK(bytes[2] == 'K');
  CHECK(bytes[3] == 'P');
  const auto u32 = [&](std::size_t off) {
    return static_cast<std::uint32_t>(bytes[off]) | (bytes[off + 1] << 8) |
           (bytes[off + 2] << 16) | (bytes[off + 3] << 24);
  };
  CHECK(u32(4) == kCheckpointVersion);
  CHECK(u32(8) == a.params().count());
  // first record: u16 name length then the name, alphabetically first
  const std::size_t name_len = bytes[12] | (bytes[13] << 8);
  const std::string first(reinterpret_cast<const char*>(bytes.data()) + 14, name_len);
  CHECK(first == "dec01.bn.run_mean");
  std::remove(path.c_str());
}

TEST_CASE("load without an optimizer slot skips the optimizer section") {
  const std::string path = tmp_path("skipopt");
  Model<float> a(small_cfg(), 3);
  AdamState<float> state;
  OptimConfig cfg;
  for (auto& [name, p] : a.params()) std::fill(p.g.begin(), p.g.end(), 0.01f);
  adamw_step(a.params(), state, 1e-3, cfg);
  save_checkpoint(path, a.params(), &state);

  Model<float> b(small_cfg(), 4);
  load_checkpoint(path, b.params());  // no optimizer requested
  CHECK(b.params().at("head.weight").v == a.params().at("head.weight").v);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint loading rejects malformed or mismatched files") {
  const std::string path = tmp_path("errors");
  Model<float> a(small_cfg(), 6);
  save_checkpoint(path, a.params());

  // structure mismatch: different architecture
  ModelConfig other = small_cfg();
  other.use_scse = false;
  Model<float> b(other, 6);
  CHECK_THROWS_AS(load_checkpoint(path, b.params()), IoError);

  // width mismatch: same record count, different shapes
  ModelConfig wider = small_cfg();
  wider.base_channels = 8;
  Model<float> c(wider, 6);
  CHECK_THROWS_AS(load_checkpoint(path, c.params()), IoError);

  // truncation
  std::vector<unsigned char> bytes = slurp(path);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size() / 2));
  os.close();
  Model<float> d(small_cfg(), 6);
  CHECK_THROWS_AS(load_checkpoint(path, d.params()), IoError);

  // bad magic
  std::ofstream os2(path, std::ios::binary | std::ios::trunc);
  os2.write("JUNKJUNKJUNK", 12);
  os2.close();
  CHECK_THROWS_AS(load_checkpoint(path, d.params()), IoError);

  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint(path, d.params()), IoError);  // missing file
}
