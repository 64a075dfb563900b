// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include "cellseg/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "cellseg/common.hpp"

namespace cellseg {

namespace {

void put_u16le(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  os.write(b, 2);
}

void put_u32le(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_f32le(std::ostream& os, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32le(os, bits);
}

std::uint16_t get_u16le(std::istream& is, const std::string& path) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) throw IoError("truncated checkpoint: " + path);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32le(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated checkpoint: " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float get_f32le(std::istream& is, const std::string& path) {
  const std::uint32_t bits = get_u32le(is, path);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

void put_record(std::ostream& os, const std::string& name, const std::vector<int>& shape,
                const std::vector<float>& payload) {
  require(name.size() <= 0xffff, "checkpoint record name too long: " + name);
  require(shape.size() <= 0xff, "checkpoint record rank too large: " + name);
  put_u16le(os, static_cast<std::uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  os.put(static_cast<char>(shape.size()));
  std::size_t total = 1;
  for (int d : shape) {
    put_u32le(os, static_cast<std::uint32_t>(d));
    total *= static_cast<std::size_t>(d);
  }
  require(total == payload.size(), "checkpoint record payload mismatch: " + name);
  for (float f : payload) put_f32le(os, f);
}

struct Record {
  std::string name;
  std::vector<int> shape;
  std::vector<float> payload;
};

Record get_record(std::istream& is, const std::string& path) {
  Record r;
  const std::uint16_t len = get_u16le(is, path);
  r.name.resize(len);
  if (!is.read(r.name.data(), len)) throw IoError("truncated checkpoint: " + path);
  const int rank = is.get();
  if (rank < 0) throw IoError("truncated checkpoint: " + path);
  std::size_t total = 1;
  for (int i = 0; i < rank; ++i) {
    const std::uint32_t d = get_u32le(is, path);
    if (d == 0) throw IoError("zero dimension in checkpoint record " + r.name + " in " + path);
    r.shape.push_back(static_cast<int>(d));
    total *= d;
  }
  r.payload.resize(total);
  for (std::size_t i = 0; i < total; ++i) r.payload[i] = get_f32le(is, path);
  return r;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                     const AdamState<float>* opt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write("CSKP", 4);
  put_u32le(os, kCheckpointVersion);

  put_u32le(os, static_cast<std::uint32_t>(params.count()));
  for (const auto& [name, p] : params) put_record(os, name, p.shape, p.v);

  if (opt == nullptr) {
    put_u32le(os, 0);
  } else {
    put_u32le(os, static_cast<std::uint32_t>(1 + opt->m.size() + opt->v.size()));
    // steps stay far below 2^24, so a float payload is lossless here
    put_record(os, "adam.step", {1}, {static_cast<float>(opt->step)});
    for (const auto& [name, m] : opt->m)
      put_record(os, "adam.m/" + name, {static_cast<int>(m.size())}, m);
    for (const auto& [name, v] : opt->v)
      put_record(os, "adam.v/" + name, {static_cast<int>(v.size())}, v);
  }
  if (!os) throw IoError("write failed: " + path);
}

void load_checkpoint(const std::string& path, ParamStore<float>& params, AdamState<float>* opt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "CSKP", 4) != 0)
    throw IoError("bad checkpoint magic in " + path);
  const std::uint32_t version = get_u32le(is, path);
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path);

  const std::uint32_t n_params = get_u32le(is, path);
  if (n_params != params.count())
    throw IoError("checkpoint parameter set mismatch in " + path + ": holds " +
                  std::to_string(n_params) + " records, model has " +
                  std::to_string(params.count()));
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < n_params; ++i) {
    Record r = get_record(is, path);
    if (!params.contains(r.name))
      throw IoError("checkpoint carries unknown parameter " + r.name + " in " + path);
    Param<float>& p = params.at(r.name);
    if (r.shape != p.shape)
      throw IoError("checkpoint shape mismatch for parameter " + r.name + " in " + path);
    if (!seen.insert(r.name).second)
      throw IoError("duplicate checkpoint record " + r.name + " in " + path);
    p.v = std::move(r.payload);
  }

  const std::uint32_t n_opt = get_u32le(is, path);
  if (opt != nullptr) {
    opt->step = 0;
    opt->m.clear();
    opt->v.clear();
  }
  for (std::uint32_t i = 0; i < n_opt; ++i) {
    Record r = get_record(is, path);
    if (opt == nullptr) continue;
    if (r.name == "adam.step") {
      require(r.payload.size() == 1, "malformed adam.step record in " + path);
      opt->step = std::llround(static_cast<double>(r.payload[0]));
    } else if (r.name.rfind("adam.m/", 0) == 0) {
      opt->m[r.name.substr(7)] = std::move(r.payload);
    } else if (r.name.rfind("adam.v/", 0) == 0) {
      opt->v[r.name.substr(7)] = std::move(r.payload);
    } else {
      throw IoError("unknown optimizer record " + r.name + " in " + path);
    }
  }
}

}  // namespace cellseg
