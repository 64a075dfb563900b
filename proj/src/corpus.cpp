// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include "cellseg/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cellseg/common.hpp"
#include "cellseg/image_io.hpp"
#include "cellseg/rng.hpp"
#include "cellseg/sampling.hpp"

namespace cellseg {

namespace {

constexpr double kPi = 3.141592653589793238462643383279;
constexpr double kTwoPi = 2.0 * kPi;

double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

struct Cell {
  double cy = 0.0, cx = 0.0;
  double a = 1.0, b = 1.0;  // semi-axes
  double angle = 0.0;
  double amp = 0.5;
  double tint[3] = {1.0, 1.0, 1.0};
};

// Paints the Gaussian brightness profile and ellipse-interior mask bits.
void render_cell(const Cell& cell, MultiChannelImage& image, BinaryMask& mask) {
  const int side = image.height;
  const double cosT = std::cos(cell.angle);
  const double sinT = std::sin(cell.angle);
  const double ext = 1.8 * std::max(cell.a, cell.b);
  int y0 = std::max(0, static_cast<int>(std::floor(cell.cy - ext)));
  int y1 = std::min(side - 1, static_cast<int>(std::ceil(cell.cy + ext)));
  int x0 = std::max(0, static_cast<int>(std::floor(cell.cx - ext)));
  int x1 = std::min(side - 1, static_cast<int>(std::ceil(cell.cx + ext)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double dy = static_cast<double>(y) + 0.5 - cell.cy;
      double dx = static_cast<double>(x) + 0.5 - cell.cx;
      double u = dx * cosT + dy * sinT;
      double v = -dx * sinT + dy * cosT;
      double d2 = (u / cell.a) * (u / cell.a) + (v / cell.b) * (v / cell.b);
      if (d2 <= 1.0) mask.at(y, x) = 1;
      if (d2 <= 3.24) {  // profile reaches to 1.8 radii
        double profile = cell.amp * std::exp(-1.2 * d2);
        for (int c = 0; c < 3; ++c) {
          double bright = image.at(y, x, c) + profile * cell.tint[c];
          image.at(y, x, c) = clamp(bright, 0.0, 1.0);
        }
      }
    }
  }
}

MultiChannelImage render_background(int side, Rng& rng) {
  MultiChannelImage image(side, side, 3);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < 3; ++c) {
        image.at(y, x, c) = clamp(0.12 + 0.03 * rng.normal(), 0.0, 1.0);
      }
    }
  }
  return image;
}

std::string format_ratio(double r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9f", r);
  return std::string(buf);
}

}  // namespace

void CorpusSpec::validate() const {
  require(n_train > 0 && n_val > 0 && n_test > 0, "split sizes must be positive");
  require(p_with_cells > 0.0 && p_with_cells < 1.0, "p_with_cells must lie in (0, 1)");
  require(pos_ratio_lo > 0.0 && pos_ratio_lo < pos_ratio_hi && pos_ratio_hi < 1.0,
          "pos ratio bounds out of range");
  require(cell_count_lo >= 1 && cell_count_lo <= cell_count_hi, "cell count bounds out of range");
  require(image_side >= 16 && image_side % 4 == 0,
          "image side must be at least 16 and divisible by 4");
}

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  throw ContractError("unknown split");
}

int split_size(const CorpusSpec& spec, Split split) {
  switch (split) {
    case Split::kTrain: return spec.n_train;
    case Split::kVal: return spec.n_val;
    case Split::kTest: return spec.n_test;
  }
  throw ContractError("unknown split");
}

Sample generate_sample(const CorpusSpec& spec, Split split, int index, SampleInfo* info) {
  spec.validate();
  require(index >= 0 && index < split_size(spec, split), "sample index out of range");

  const int side = spec.image_side;
  std::string label = std::string("corpus/") + split_name(split);
  Rng rng = Rng::stream(spec.seed, label, static_cast<std::uint64_t>(index));

  SampleInfo local;
  SampleInfo& out_info = info ? *info : local;
  out_info = SampleInfo{};

  Sample sample;
  sample.mask = BinaryMask(side, side);

  bool has_cells = rng.bernoulli(spec.p_with_cells);
  if (!has_cells) {
    sample.image = render_background(side, rng);
    return sample;
  }

  const double target = rng.log_uniform(spec.pos_ratio_lo, spec.pos_ratio_hi);
  const int span = spec.cell_count_hi - spec.cell_count_lo + 1;
  const int k = spec.cell_count_lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(span)));
  const int layout = static_cast<int>(rng.uniform_int(3));
  out_info.target_ratio = target;
  out_info.drawn_k = k;
  out_info.layout = layout;

  const double pixels = static_cast<double>(side) * side;
  const double base_area = target * pixels / static_cast<double>(k);
  const double axis_lo = 0.7;
  const double axis_hi = static_cast<double>(side) / 5.0;

  double tolerance = 1.3;
  for (int attempt = 1;; ++attempt) {
    require(attempt <= 10000, "cell layout rejection did not terminate");
    MultiChannelImage image = render_background(side, rng);
    BinaryMask mask(side, side);
    for (int n = 0; n < k; ++n) {
      Cell cell;
      switch (layout) {
        case 0:  // scattered
          cell.cx = rng.uniform(0.0, static_cast<double>(side));
          cell.cy = rng.uniform(0.0, static_cast<double>(side));
          break;
        case 1:  // cluster
          cell.cx = clamp(side / 2.0 + side / 8.0 * rng.normal(), 0.0, static_cast<double>(side));
          cell.cy = clamp(side / 2.0 + side / 8.0 * rng.normal(), 0.0, static_cast<double>(side));
          break;
        default: {  // ring
          double theta = rng.uniform(0.0, kTwoPi);
          double radius = side / 3.0 + side / 16.0 * rng.normal();
          cell.cx = clamp(side / 2.0 + radius * std::cos(theta), 0.0, static_cast<double>(side));
          cell.cy = clamp(side / 2.0 + radius * std::sin(theta), 0.0, static_cast<double>(side));
          break;
        }
      }
      double area = base_area * std::exp(0.3 * rng.normal());
      double ecc = std::exp(0.2 * rng.normal());
      cell.angle = rng.uniform(0.0, kPi);
      cell.amp = clamp(0.45 + 0.15 * rng.normal(), 0.3, 0.7);
      for (double& t : cell.tint) t = clamp(1.0 + 0.1 * rng.normal(), 0.7, 1.3);
      cell.a = clamp(std::sqrt(area * ecc / kPi), axis_lo, axis_hi);
      cell.b = clamp(std::sqrt(area / (ecc * kPi)), axis_lo, axis_hi);
      render_cell(cell, image, mask);
    }

    double ratio = mask.pos_ratio();
    double window_lo = std::max(spec.pos_ratio_lo, target / tolerance);
    double window_hi = std::min(spec.pos_ratio_hi, target * tolerance);
    if (ratio >= window_lo && ratio <= window_hi) {
      out_info.attempts = attempt;
      sample.image = std::move(image);
      sample.mask = std::move(mask);
      return sample;
    }
    if (attempt % 100 == 0) {
      tolerance *= 2.0;
      out_info.widened = true;
    }
  }
}

std::vector<SampleRecord> generate_corpus(const CorpusSpec& spec, const std::string& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");

  std::vector<SampleRecord> records;
  records.reserve(static_cast<std::size_t>(spec.n_train + spec.n_val + spec.n_test));
  for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) {
    const int count = split_size(spec, split);
    for (int index = 0; index < count; ++index) {
      Sample sample = generate_sample(spec, split, index);
      char stem[64];
      std::snprintf(stem, sizeof(stem), "%s_%04d", split_name(split), index);
      write_image_png((fs::path(out_dir) / "images" / (std::string(stem) + ".png")).string(),
                      sample.image);
      write_mask_png((fs::path(out_dir) / "masks" / (std::string(stem) + ".png")).string(),
                     sample.mask);
      SampleRecord record;
      record.split = split_name(split);
      record.id = index;
      record.component_count = static_cast<int>(component_areas(sample.mask).size());
      record.has_cells = record.component_count > 0;
      record.pos_ratio = sample.mask.pos_ratio();
      records.push_back(std::move(record));
    }
  }

  std::ofstream out(fs::path(out_dir) / "manifest.csv", std::ios::binary);
  require(out.good(), "cannot open manifest.csv for writing");
  out << manifest_csv(records);
  require(out.good(), "failed writing manifest.csv");
  return records;
}

std::string manifest_csv(const std::vector<SampleRecord>& records) {
  std::ostringstream out;
  out << "split,id,has_cells,pos_ratio,component_count\n";
  for (const auto& r : records) {
    out << r.split << ',' << r.id << ',' << (r.has_cells ? 1 : 0) << ','
        << format_ratio(r.pos_ratio) << ',' << r.component_count << '\n';
  }
  return out.str();
}

std::vector<SampleRecord> load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw IoError("cannot open manifest: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "manifest is empty: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "split,id,has_cells,pos_ratio,component_count",
          "unexpected manifest header: " + path);
  std::vector<SampleRecord> records;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    SampleRecord r;
    std::string field;
    require(static_cast<bool>(std::getline(row, r.split, ',')), "bad manifest row: " + line);
    require(static_cast<bool>(std::getline(row, field, ',')), "bad manifest row: " + line);
    r.id = std::stoi(field);
    require(static_cast<bool>(std::getline(row, field, ',')), "bad manifest row: " + line);
    require(field == "0" || field == "1", "bad has_cells flag: " + line);
    r.has_cells = field == "1";
    require(static_cast<bool>(std::getline(row, field, ',')), "bad manifest row: " + line);
    r.pos_ratio = std::stod(field);
    require(static_cast<bool>(std::getline(row, field, ',')), "bad manifest row: " + line);
    r.component_count = std::stoi(field);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace cellseg
