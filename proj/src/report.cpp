// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include "cellseg/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>

#include "cellseg/checkpoint.hpp"
#include "cellseg/common.hpp"
#include "cellseg/image_io.hpp"

namespace cellseg {

namespace {

namespace fs = std::filesystem;

constexpr double kFnLevel = 96.0 / 255.0;
constexpr double kFpLevel = 160.0 / 255.0;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open for writing: " + path.string());
  out << text;
  require(out.good(), "failed writing: " + path.string());
}

}  // namespace

GrayImage error_map(const BinaryMask& pred, const BinaryMask& target) {
  require(pred.height == target.height && pred.width == target.width,
          "error_map: mask sizes differ");
  GrayImage out(pred.height, pred.width, 1);
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i] != 0;
    const bool t = target.data[i] != 0;
    out.data[i] = p ? (t ? 1.0 : kFpLevel) : (t ? kFnLevel : 0.0);
  }
  return out;
}

MultiChannelImage boundary_overlay(const MultiChannelImage& image, const BinaryMask& pred) {
  require(image.channels == 3, "boundary_overlay expects an RGB image");
  require(image.height == pred.height && image.width == pred.width,
          "boundary_overlay: sizes differ");
  MultiChannelImage out = image;
  for (int y = 0; y < pred.height; ++y) {
    for (int x = 0; x < pred.width; ++x) {
      if (pred.at(y, x) == 0) continue;
      const bool edge = y == 0 || pred.at(y - 1, x) == 0 || y == pred.height - 1 ||
                        pred.at(y + 1, x) == 0 || x == 0 || pred.at(y, x - 1) == 0 ||
                        x == pred.width - 1 || pred.at(y, x + 1) == 0;
      if (edge) {
        out.at(y, x, 0) = 1.0;
        out.at(y, x, 1) = 0.0;
        out.at(y, x, 2) = 0.0;
      }
    }
  }
  return out;
}

std::vector<EpochStats> load_run_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw IoError("cannot open run report: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "run report is empty: " + path);
  require(line.rfind("epoch,train_loss,lr,", 0) == 0, "unexpected run report header: " + path);
  std::vector<EpochStats> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochStats e;
    int outlier = 0;
    int got = std::sscanf(line.c_str(), "%d,%le,%le,%lf,%lf,%lf,%lf,%lf,%d", &e.epoch,
                          &e.train_loss, &e.lr, &e.val.dice, &e.val.iou, &e.val.precision,
                          &e.val.recall, &e.ema_dice, &outlier);
    require(got == 9, "bad run report row: " + line);
    e.outlier = outlier != 0;
    out.push_back(e);
  }
  require(!out.empty(), "run report has no epochs: " + path);
  return out;
}

FigureBundle write_figures(const std::string& run_dir, const ModelConfig& model_cfg,
                           bool gabor_on, const SplitData& val_data, int top_n) {
  require(top_n >= 1, "top_n must be >= 1");
  require(!val_data.images.empty() && val_data.images.size() == val_data.masks.size(),
          "val split images/masks mismatch");

  const fs::path run(run_dir);
  const fs::path figures = run / "figures";
  fs::create_directories(figures);
  FigureBundle bundle;
  auto record = [&](const fs::path& p) { bundle.files.push_back(fs::relative(p, run).string()); };

  // Curve CSVs straight from the run report.
  std::vector<EpochStats> epochs = load_run_csv((run / "report.csv").string());
  char buf[256];
  std::string loss_csv = "epoch,train_loss,lr\n";
  std::string dice_csv = "epoch,val_dice,ema_dice,outlier\n";
  std::string iou_csv = "epoch,val_iou,val_precision,val_recall\n";
  for (const EpochStats& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.9e,%.9e\n", e.epoch, e.train_loss, e.lr);
    loss_csv += buf;
    std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f,%d\n", e.epoch, e.val.dice, e.ema_dice,
                  e.outlier ? 1 : 0);
    dice_csv += buf;
    std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f,%.9f\n", e.epoch, e.val.iou, e.val.precision,
                  e.val.recall);
    iou_csv += buf;
  }
  write_text(figures / "curve_loss.csv", loss_csv);
  record(figures / "curve_loss.csv");
  write_text(figures / "curve_dice.csv", dice_csv);
  record(figures / "curve_dice.csv");
  write_text(figures / "curve_iou.csv", iou_csv);
  record(figures / "curve_iou.csv");

  // Re-evaluate the selected checkpoint on the validation split.
  Model<float> model(model_cfg, 0);
  load_checkpoint((run / "best.cskp").string(), model.params());
  const GaborBank bank = build_bank();
  std::vector<MultiChannelImage> val4 = assemble_inputs(val_data.images, gabor_on, bank);
  EvalResult eval = evaluate_model(model, val4, val_data.masks);
  write_text(figures / "val_per_image.csv", eval.csv());
  record(figures / "val_per_image.csv");

  // Rank by per-image dice; ties resolve by index so output sets are stable.
  std::vector<std::size_t> order(eval.per_image.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return eval.per_image[a].dice < eval.per_image[b].dice;
  });
  const std::size_t n = order.size();
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(top_n), n);
  std::vector<std::pair<std::size_t, const char*>> picks;
  for (std::size_t k = 0; k < take; ++k) picks.emplace_back(order[k], "worst");
  for (std::size_t k = 0; k < take; ++k) picks.emplace_back(order[n - 1 - k], "best");

  for (const auto& [idx, tag] : picks) {
    const int id =
        idx < val_data.records.size() ? val_data.records[idx].id : static_cast<int>(idx);
    Tensor<float> x(1, val4[idx].channels, val4[idx].height, val4[idx].width);
    for (int c = 0; c < val4[idx].channels; ++c)
      for (int y = 0; y < val4[idx].height; ++y)
        for (int xx = 0; xx < val4[idx].width; ++xx)
          x.at(0, c, y, xx) = static_cast<float>(val4[idx].at(y, xx, c));
    Tensor<float> out = model.forward(x, false);
    BinaryMask pred = threshold_logits(tensor_to_logits(out)[0]);

    std::snprintf(buf, sizeof(buf), "%s_val_%04d_errormap.png", tag, id);
    fs::path err_path = figures / buf;
    write_image_png(err_path.string(), error_map(pred, val_data.masks[idx]));
    record(err_path);

    std::snprintf(buf, sizeof(buf), "%s_val_%04d_overlay.png", tag, id);
    fs::path ovl_path = figures / buf;
    write_image_png(ovl_path.string(), boundary_overlay(val_data.images[idx], pred));
    record(ovl_path);
  }
  return bundle;
}

}  // namespace cellseg
