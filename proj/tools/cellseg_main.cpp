// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
//
// cellseg: one binary, nine subcommands covering the full pipeline from
// corpus synthesis through training, evaluation, ablation, and figures.
//
// Exit codes: 0 success, 1 usage error (bad flag or config file), 2 runtime
// failure (missing data, contract violation, training abort).
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cellseg/checkpoint.hpp"
#include "cellseg/corpus.hpp"
#include "cellseg/gabor.hpp"
#include "cellseg/image_io.hpp"
#include "cellseg/loss.hpp"
#include "cellseg/report.hpp"
#include "cellseg/sampling.hpp"
#include "cellseg/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using cellseg::ContractError;
using json = nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

bool json_flag(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  return v.get<int>() != 0;
}

// One flat schema shared by train, ablate, eval, and loss-eval, so a single
// config file can drive the whole pipeline. Keys mirror the run report echo.
void apply_train_json(const json& j, cellseg::TrainConfig& cfg) {
  for (const auto& [key, val] : j.items()) {
    if (key == "epochs") cfg.epochs = val.get<int>();
    else if (key == "batch_size") cfg.batch_size = val.get<int>();
    else if (key == "accum_steps") cfg.accum_steps = val.get<int>();
    else if (key == "seed") cfg.seed = val.get<std::uint64_t>();
    else if (key == "sampler_on") cfg.sampler_on = json_flag(val);
    else if (key == "gabor_on") cfg.gabor_on = json_flag(val);
    else if (key == "ema_selection") cfg.ema_selection = json_flag(val);
    else if (key == "base_channels") cfg.model.base_channels = val.get<int>();
    else if (key == "in_channels") cfg.model.in_channels = val.get<int>();
    else if (key == "use_scse") cfg.model.use_scse = json_flag(val);
    else if (key == "use_projection") cfg.model.use_projection = json_flag(val);
    else if (key == "lr_max") cfg.optimizer.lr_max = val.get<double>();
    else if (key == "lr_min") cfg.optimizer.lr_min = val.get<double>();
    else if (key == "weight_decay") cfg.optimizer.weight_decay = val.get<double>();
    else if (key == "clip_norm") cfg.optimizer.clip_norm = val.get<double>();
    else if (key == "warmup_frac") cfg.optimizer.warmup_frac = val.get<double>();
    else if (key == "w_dice") cfg.loss.w_dice = val.get<double>();
    else if (key == "w_bce") cfg.loss.w_bce = val.get<double>();
    else if (key == "w_tversky") cfg.loss.w_tversky = val.get<double>();
    else if (key == "logit_clamp") cfg.loss.logit_clamp = val.get<double>();
    else if (key == "pos_weight_max") cfg.loss.pos_weight_max = val.get<double>();
    else if (key == "p_flip") cfg.augment.p_flip = val.get<double>();
    else if (key == "p_rot90") cfg.augment.p_rot90 = val.get<double>();
    else if (key == "p_elastic") cfg.augment.p_elastic = val.get<double>();
    else if (key == "p_photometric") cfg.augment.p_photometric = val.get<double>();
    else if (key == "ema_alpha") cfg.ema.alpha = val.get<double>();
    else throw UsageError("unknown config key: " + key);
  }
}

void apply_corpus_json(const json& j, cellseg::CorpusSpec& spec) {
  for (const auto& [key, val] : j.items()) {
    if (key == "n_train") spec.n_train = val.get<int>();
    else if (key == "n_val") spec.n_val = val.get<int>();
    else if (key == "n_test") spec.n_test = val.get<int>();
    else if (key == "image_side") spec.image_side = val.get<int>();
    else if (key == "seed") spec.seed = val.get<std::uint64_t>();
    else if (key == "p_with_cells") spec.p_with_cells = val.get<double>();
    else if (key == "pos_ratio_lo") spec.pos_ratio_lo = val.get<double>();
    else if (key == "pos_ratio_hi") spec.pos_ratio_hi = val.get<double>();
    else if (key == "cell_count_lo") spec.cell_count_lo = val.get<int>();
    else if (key == "cell_count_hi") spec.cell_count_hi = val.get<int>();
    else throw UsageError("unknown config key: " + key);
  }
}

json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is.good()) throw UsageError("cannot open config file: " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw UsageError("config file " + path + ": " + e.what());
  }
}

// The config file must be applied before CLI11 assigns flag values, so that
// explicit flags override it. Scan argv by hand for the path.
std::string find_config_arg(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return "";
}

std::string find_subcommand(int argc, char** argv) {
  for (int i = 1; i < argc; ++i)
    if (argv[i][0] != '-') return argv[i];
  return "";
}

void echo_line(const std::string& key, const std::string& value) {
  std::cerr << key << "=" << value << "\n";
}

cellseg::SplitData load_named_split(const std::string& data_dir, const std::string& split) {
  std::cerr << "loading split '" << split << "' from " << data_dir << "\n";
  return cellseg::load_split(data_dir, split);
}

std::string digest_hex(std::uint64_t digest) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw cellseg::IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out.good()) throw cellseg::IoError("failed writing: " + path.string());
}

json report_json(const cellseg::RunReport& report) {
  json j;
  j["epochs"] = static_cast<int>(report.epochs.size());
  j["best_epoch"] = report.best_epoch;
  j["nan_events"] = report.nan_events;
  j["wall_seconds"] = report.wall_seconds;
  j["data_digest"] = digest_hex(report.data_digest);
  json cfg = json::object();
  std::istringstream echo(report.config_echo);
  std::string line;
  while (std::getline(echo, line)) {
    const std::size_t eq = line.find('=');
    if (eq != std::string::npos) cfg[line.substr(0, eq)] = line.substr(eq + 1);
  }
  j["config"] = cfg;
  return j;
}

int run_generate(const cellseg::CorpusSpec& spec, const std::string& out_dir) {
  std::cerr << "resolved config:\n";
  echo_line("n_train", std::to_string(spec.n_train));
  echo_line("n_val", std::to_string(spec.n_val));
  echo_line("n_test", std::to_string(spec.n_test));
  echo_line("image_side", std::to_string(spec.image_side));
  echo_line("seed", std::to_string(spec.seed));
  echo_line("p_with_cells", fmt("%.12g", spec.p_with_cells));
  echo_line("pos_ratio_lo", fmt("%.12g", spec.pos_ratio_lo));
  echo_line("pos_ratio_hi", fmt("%.12g", spec.pos_ratio_hi));
  echo_line("cell_count_lo", std::to_string(spec.cell_count_lo));
  echo_line("cell_count_hi", std::to_string(spec.cell_count_hi));

  std::vector<cellseg::SampleRecord> records = cellseg::generate_corpus(spec, out_dir);
  int with_cells = 0;
  for (const auto& r : records) with_cells += r.has_cells ? 1 : 0;
  std::cout << "wrote " << records.size() << " samples to " << out_dir << " ("
            << with_cells << " with cells, "
            << records.size() - static_cast<std::size_t>(with_cells) << " empty)\n";
  std::cout << "manifest: " << (fs::path(out_dir) / "manifest.csv").string() << "\n";
  return 0;
}

int run_enhance(const std::string& input, const std::string& output) {
  std::cerr << "resolved config:\n";
  echo_line("input", input);
  echo_line("output", output);

  cellseg::MultiChannelImage img = cellseg::read_raster_any(input);
  cellseg::GaborBank bank = cellseg::build_bank();
  echo_line("bank_kernels", std::to_string(bank.kernels.size()));
  cellseg::GrayImage edges = cellseg::edge_map(img, bank);
  cellseg::write_image_png(output, edges);
  std::cout << "wrote " << output << " (" << edges.width << "x" << edges.height << ")\n";
  return 0;
}

int run_weights(const std::string& data_dir, const std::string& split,
                const std::string& out_csv) {
  std::cerr << "resolved config:\n";
  echo_line("data", data_dir);
  echo_line("split", split);

  cellseg::SplitData data = load_named_split(data_dir, split);
  std::ostringstream csv;
  csv << "id,weight,has_cells,component_count,min_component_area,pos_ratio\n";
  double total = 0.0;
  char buf[160];
  for (std::size_t i = 0; i < data.masks.size(); ++i) {
    const int id = i < data.records.size() ? data.records[i].id : static_cast<int>(i);
    cellseg::SampleWeight w = cellseg::complexity_weight(data.masks[i], id);
    total += w.weight;
    std::snprintf(buf, sizeof(buf), "%d,%.9f,%d,%d,%lld,%.9f\n", w.id, w.weight,
                  w.features.has_cells ? 1 : 0, w.features.component_count,
                  static_cast<long long>(w.features.min_component_area),
                  w.features.pos_ratio);
    csv << buf;
  }
  if (out_csv.empty()) {
    std::cout << csv.str();
  } else {
    write_text(out_csv, csv.str());
    std::cout << "wrote " << out_csv << "\n";
  }
  std::cerr << "samples=" << data.masks.size()
            << " mean_weight=" << fmt("%.9f", total / std::max<std::size_t>(1, data.masks.size()))
            << "\n";
  return 0;
}

int run_schedule(const cellseg::OptimConfig& opt, bool csv, const std::string& out_csv) {
  std::cerr << "resolved config:\n";
  echo_line("total_steps", std::to_string(opt.total_steps));
  echo_line("lr_max", fmt("%.12g", opt.lr_max));
  echo_line("lr_min", fmt("%.12g", opt.lr_min));
  echo_line("warmup_frac", fmt("%.12g", opt.warmup_frac));
  echo_line("warmup_steps", std::to_string(cellseg::warmup_steps(opt)));

  if (csv) {
    std::ostringstream table;
    table << "step,lr\n";
    char buf[64];
    for (std::int64_t step = 1; step <= opt.total_steps; ++step) {
      std::snprintf(buf, sizeof(buf), "%lld,%.9e\n", static_cast<long long>(step),
                    cellseg::lr_at(step, opt));
      table << buf;
    }
    if (out_csv.empty())
      std::cout << table.str();
    else {
      write_text(out_csv, table.str());
      std::cout << "wrote " << out_csv << "\n";
    }
  } else {
    const std::int64_t warm = cellseg::warmup_steps(opt);
    std::cout << "lr(1)=" << fmt("%.9e", cellseg::lr_at(1, opt)) << "\n";
    if (warm >= 1 && warm <= opt.total_steps)
      std::cout << "lr(" << warm << ")=" << fmt("%.9e", cellseg::lr_at(warm, opt))
                << "  (end of warmup)\n";
    std::cout << "lr(" << opt.total_steps << ")="
              << fmt("%.9e", cellseg::lr_at(opt.total_steps, opt)) << "  (final)\n";
  }
  return 0;
}

int run_loss_eval(const std::string& logits_path, const std::string& targets_path,
                  const cellseg::LossConfig& loss_cfg) {
  std::cerr << "resolved config:\n";
  echo_line("logits", logits_path);
  echo_line("targets", targets_path);
  echo_line("w_dice", fmt("%.12g", loss_cfg.w_dice));
  echo_line("w_bce", fmt("%.12g", loss_cfg.w_bce));
  echo_line("w_tversky", fmt("%.12g", loss_cfg.w_tversky));
  echo_line("logit_clamp", fmt("%.12g", loss_cfg.logit_clamp));
  echo_line("pos_weight_max", fmt("%.12g", loss_cfg.pos_weight_max));

  cellseg::MultiChannelImage raw = cellseg::read_raster_any(logits_path);
  cellseg::require(raw.channels == 1, "logits raster must have one channel");
  cellseg::LogitMap logits(raw.height, raw.width);
  logits.data.assign(raw.data.begin(), raw.data.end());
  cellseg::BinaryMask target = cellseg::read_mask_png(targets_path);

  cellseg::LossBreakdown b =
      cellseg::loss_forward({logits}, {target}, loss_cfg);
  std::cout << "total,dice_loss,bce_loss,tversky_loss,pos_weight\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%.12e,%.12e,%.12e,%.12e,%.12e\n", b.total, b.dice_loss,
                b.bce_loss, b.tversky_loss, b.pos_weight);
  std::cout << buf;
  return 0;
}

int run_train(const cellseg::TrainConfig& cfg, const std::string& data_dir,
              const std::string& out_dir) {
  cellseg::SplitData train_data = load_named_split(data_dir, "train");
  cellseg::SplitData val_data = load_named_split(data_dir, "val");

  cellseg::RunReport report = cellseg::train(cfg, train_data, val_data, out_dir);
  std::cerr << "resolved config:\n" << report.config_echo;

  write_text(fs::path(out_dir) / "report.csv", report.csv());
  write_text(fs::path(out_dir) / "report.json", report_json(report).dump(2) + "\n");

  const cellseg::EpochStats& best =
      report.epochs[static_cast<std::size_t>(report.best_epoch - 1)];
  std::cout << "best_epoch=" << report.best_epoch << " val_dice=" << fmt("%.9f", best.val.dice)
            << " ema_dice=" << fmt("%.9f", best.ema_dice) << "\n";
  std::cout << "nan_events=" << report.nan_events
            << " wall_seconds=" << fmt("%.3f", report.wall_seconds) << "\n";
  std::cout << "wrote " << (fs::path(out_dir) / "report.csv").string() << ", report.json, "
            << "best.cskp, last.cskp, validation_trace.csv\n";
  return 0;
}

int run_eval(const cellseg::TrainConfig& cfg, const std::string& data_dir,
             const std::string& split, const std::string& ckpt, bool tta, int batch,
             const std::string& out_csv) {
  std::cerr << "resolved config:\n";
  echo_line("data", data_dir);
  echo_line("split", split);
  echo_line("ckpt", ckpt);
  echo_line("tta", tta ? "1" : "0");
  echo_line("batch_size", std::to_string(batch));
  echo_line("base_channels", std::to_string(cfg.model.base_channels));
  echo_line("gabor_on", cfg.gabor_on ? "1" : "0");

  cellseg::SplitData data = load_named_split(data_dir, split);
  cellseg::Model<float> model(cfg.model, 0);
  cellseg::load_checkpoint(ckpt, model.params());
  cellseg::GaborBank bank = cellseg::build_bank();
  std::vector<cellseg::MultiChannelImage> inputs =
      cellseg::assemble_inputs(data.images, cfg.gabor_on, bank);

  cellseg::EvalOptions opts;
  opts.tta = tta;
  opts.batch_size = batch;
  cellseg::EvalResult result = cellseg::evaluate_model(model, inputs, data.masks, opts);

  std::cout << cellseg::MetricReport::csv_header() << "\n"
            << result.aggregate.csv_row() << "\n";
  std::cout << "mean_dice=" << fmt("%.9f", result.mean_dice)
            << " std_dice=" << fmt("%.9f", result.std_dice) << " images=" << result.per_image.size()
            << "\n";
  if (!out_csv.empty()) {
    write_text(out_csv, result.csv());
    std::cout << "wrote " << out_csv << "\n";
  }
  return 0;
}

int run_ablate(const cellseg::TrainConfig& cfg, const std::string& data_dir,
               const std::string& out_dir) {
  cellseg::SplitData train_data = load_named_split(data_dir, "train");
  cellseg::SplitData val_data = load_named_split(data_dir, "val");
  cellseg::SplitData test_data = load_named_split(data_dir, "test");

  std::cerr << "resolved config:\n";
  echo_line("epochs", std::to_string(cfg.epochs));
  echo_line("batch_size", std::to_string(cfg.batch_size));
  echo_line("accum_steps", std::to_string(cfg.accum_steps));
  echo_line("seed", std::to_string(cfg.seed));
  echo_line("base_channels", std::to_string(cfg.model.base_channels));

  cellseg::AblationTable table =
      cellseg::ablate(cfg, train_data, val_data, test_data, out_dir);
  write_text(fs::path(out_dir) / "ablation.csv", table.csv());
  write_text(fs::path(out_dir) / "ablation_per_image.csv", table.per_image_csv());
  std::cout << table.csv();
  std::cout << "wrote " << (fs::path(out_dir) / "ablation.csv").string()
            << " and ablation_per_image.csv\n";
  return 0;
}

int run_report(const std::string& run_dir, const std::string& data_dir, int top_n) {
  const fs::path meta_path = fs::path(run_dir) / "report.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in.good())
    throw cellseg::IoError("cannot open " + meta_path.string() + " (is this a train output dir?)");
  json meta;
  try {
    meta = json::parse(meta_in);
  } catch (const json::exception& e) {
    throw cellseg::IoError("bad report.json: " + std::string(e.what()));
  }
  const json& cfg_obj = meta.at("config");
  cellseg::ModelConfig model_cfg;
  model_cfg.base_channels = std::stoi(cfg_obj.at("base_channels").get<std::string>());
  model_cfg.in_channels = std::stoi(cfg_obj.at("in_channels").get<std::string>());
  model_cfg.use_scse = cfg_obj.at("use_scse").get<std::string>() == "1";
  model_cfg.use_projection = cfg_obj.at("use_projection").get<std::string>() == "1";
  const bool gabor_on = cfg_obj.at("gabor_on").get<std::string>() == "1";

  std::cerr << "resolved config:\n";
  echo_line("run", run_dir);
  echo_line("data", data_dir);
  echo_line("top_n", std::to_string(top_n));
  echo_line("base_channels", std::to_string(model_cfg.base_channels));
  echo_line("gabor_on", gabor_on ? "1" : "0");

  cellseg::SplitData val_data = load_named_split(data_dir, "val");
  cellseg::FigureBundle bundle =
      cellseg::write_figures(run_dir, model_cfg, gabor_on, val_data, top_n);
  for (const std::string& rel : bundle.files) std::cout << "wrote " << rel << "\n";
  std::cout << bundle.files.size() << " figure files under " << run_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cellseg: synthetic microscopy segmentation pipeline"};
  app.require_subcommand(1);

  cellseg::CorpusSpec spec;
  cellseg::TrainConfig train_cfg;
  cellseg::OptimConfig sched_opt;
  std::string data_dir, out_dir, out_csv, input_path, ckpt_path, run_dir;
  std::string split = "test", config_path;
  bool tta = false, sched_csv = false;
  int top_n = 8, eval_batch = 4;

  // The config file (if any) is applied to the structs before parse so that
  // explicit flags override its values.
  try {
    const std::string pre_config = find_config_arg(argc, argv);
    const std::string sub = find_subcommand(argc, argv);
    if (!pre_config.empty()) {
      const json j = load_json_file(pre_config);
      if (sub == "generate")
        apply_corpus_json(j, spec);
      else
        apply_train_json(j, train_cfg);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  CLI::App* generate = app.add_subcommand("generate", "Synthesize a corpus with manifest");
  generate->add_option("--out", out_dir, "Output directory")->required();
  generate->add_option("--config", config_path, "JSON config file");
  generate->add_option("--n-train", spec.n_train, "Training images");
  generate->add_option("--n-val", spec.n_val, "Validation images");
  generate->add_option("--n-test", spec.n_test, "Test images");
  generate->add_option("--side", spec.image_side, "Image side in pixels");
  generate->add_option("--seed", spec.seed, "Corpus seed");
  generate->add_option("--p-cells", spec.p_with_cells, "Probability a sample has cells");
  generate->add_option("--ratio-lo", spec.pos_ratio_lo, "Lower positive-ratio bound");
  generate->add_option("--ratio-hi", spec.pos_ratio_hi, "Upper positive-ratio bound");
  generate->add_option("--count-lo", spec.cell_count_lo, "Minimum cell count");
  generate->add_option("--count-hi", spec.cell_count_hi, "Maximum cell count");

  CLI::App* enhance = app.add_subcommand("enhance", "Write the oriented edge map of an image");
  enhance->add_option("--input", input_path, "Input PNG or CSK1 raster")->required();
  enhance->add_option("--out", out_csv, "Output PNG path")->required();

  CLI::App* weights = app.add_subcommand("weights", "Complexity sampling weights for a split");
  weights->add_option("--data", data_dir, "Corpus directory")->required();
  weights->add_option("--split", split, "Split name (train/val/test)");
  weights->add_option("--out", out_csv, "Write CSV here instead of stdout");

  CLI::App* schedule = app.add_subcommand("schedule", "Inspect the one-cycle learning rate");
  schedule->add_option("--total", sched_opt.total_steps, "Total optimizer steps")->required();
  schedule->add_option("--lr-max", sched_opt.lr_max, "Peak learning rate");
  schedule->add_option("--lr-min", sched_opt.lr_min, "Final learning rate");
  schedule->add_option("--warmup", sched_opt.warmup_frac, "Warmup fraction");
  schedule->add_flag("--csv", sched_csv, "Emit step,lr rows for every step");
  schedule->add_option("--out", out_csv, "Write the CSV here instead of stdout");

  CLI::App* loss_eval = app.add_subcommand("loss-eval", "Composite loss on a logits/mask pair");
  loss_eval->add_option("--logits", input_path, "Logits raster (CSK1 or PNG)")->required();
  loss_eval->add_option("--targets", ckpt_path, "Target mask PNG")->required();
  loss_eval->add_option("--config", config_path, "JSON config file");
  loss_eval->add_option("--w-dice", train_cfg.loss.w_dice, "Dice weight");
  loss_eval->add_option("--w-bce", train_cfg.loss.w_bce, "BCE weight");
  loss_eval->add_option("--w-tversky", train_cfg.loss.w_tversky, "Tversky weight");
  loss_eval->add_option("--logit-clamp", train_cfg.loss.logit_clamp, "Symmetric logit clamp");
  loss_eval->add_option("--pos-weight-max", train_cfg.loss.pos_weight_max, "pos_weight cap");

  CLI::App* train_cmd = app.add_subcommand("train", "Train on a corpus directory");
  train_cmd->add_option("--data", data_dir, "Corpus directory")->required();
  train_cmd->add_option("--out", out_dir, "Run output directory")->required();
  train_cmd->add_option("--config", config_path, "JSON config file");
  train_cmd->add_option("--epochs", train_cfg.epochs, "Training epochs");
  train_cmd->add_option("--batch", train_cfg.batch_size, "Micro-batch size");
  train_cmd->add_option("--accum", train_cfg.accum_steps, "Micro-batches per optimizer step");
  train_cmd->add_option("--seed", train_cfg.seed, "Run seed");
  train_cmd->add_option("--base-channels", train_cfg.model.base_channels, "Encoder width");
  train_cmd->add_option("--lr-max", train_cfg.optimizer.lr_max, "Peak learning rate");
  train_cmd->add_option("--lr-min", train_cfg.optimizer.lr_min, "Final learning rate");
  train_cmd->add_option("--weight-decay", train_cfg.optimizer.weight_decay, "AdamW decay");
  train_cmd->add_option("--clip", train_cfg.optimizer.clip_norm, "Global gradient norm clip");
  train_cmd->add_option("--warmup", train_cfg.optimizer.warmup_frac, "Warmup fraction");
  train_cmd->add_option("--logit-clamp", train_cfg.loss.logit_clamp, "Symmetric logit clamp");
  train_cmd->add_option("--pos-weight-max", train_cfg.loss.pos_weight_max, "pos_weight cap");
  train_cmd->add_option("--ema-alpha", train_cfg.ema.alpha, "Validation EMA decay");
  train_cmd->add_flag("--sampler,!--no-sampler", train_cfg.sampler_on, "Complexity sampling");
  train_cmd->add_flag("--gabor,!--no-gabor", train_cfg.gabor_on, "Edge-map input channel");
  train_cmd->add_flag("--ema-selection,!--no-ema-selection", train_cfg.ema_selection,
                      "EMA-guarded checkpoint selection");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval_cmd->add_option("--data", data_dir, "Corpus directory")->required();
  eval_cmd->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  eval_cmd->add_option("--split", split, "Split name (train/val/test)");
  eval_cmd->add_option("--config", config_path, "JSON config file");
  eval_cmd->add_option("--base-channels", train_cfg.model.base_channels, "Encoder width");
  eval_cmd->add_option("--batch", eval_batch, "Evaluation batch size");
  eval_cmd->add_option("--out", out_csv, "Per-image metrics CSV path");
  eval_cmd->add_flag("--tta", tta, "Average flips and rotations");
  eval_cmd->add_flag("--gabor,!--no-gabor", train_cfg.gabor_on, "Edge-map input channel");

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "2x2 gabor/sampler ablation grid");
  ablate_cmd->add_option("--data", data_dir, "Corpus directory")->required();
  ablate_cmd->add_option("--out", out_dir, "Output directory")->required();
  ablate_cmd->add_option("--config", config_path, "JSON config file");
  ablate_cmd->add_option("--epochs", train_cfg.epochs, "Training epochs per cell");
  ablate_cmd->add_option("--batch", train_cfg.batch_size, "Micro-batch size");
  ablate_cmd->add_option("--accum", train_cfg.accum_steps, "Micro-batches per optimizer step");
  ablate_cmd->add_option("--seed", train_cfg.seed, "Run seed");
  ablate_cmd->add_option("--base-channels", train_cfg.model.base_channels, "Encoder width");
  ablate_cmd->add_option("--lr-max", train_cfg.optimizer.lr_max, "Peak learning rate");

  CLI::App* report_cmd = app.add_subcommand("report", "Figures and curves for a finished run");
  report_cmd->add_option("--run", run_dir, "Train output directory")->required();
  report_cmd->add_option("--data", data_dir, "Corpus directory")->required();
  report_cmd->add_option("--top", top_n, "Panels per best/worst list");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (generate->parsed()) return run_generate(spec, out_dir);
    if (enhance->parsed()) return run_enhance(input_path, out_csv);
    if (weights->parsed()) return run_weights(data_dir, split, out_csv);
    if (schedule->parsed()) return run_schedule(sched_opt, sched_csv, out_csv);
    if (loss_eval->parsed()) return run_loss_eval(input_path, ckpt_path, train_cfg.loss);
    if (train_cmd->parsed()) return run_train(train_cfg, data_dir, out_dir);
    if (eval_cmd->parsed())
      return run_eval(train_cfg, data_dir, split, ckpt_path, tta, eval_batch, out_csv);
    if (ablate_cmd->parsed()) return run_ablate(train_cfg, data_dir, out_dir);
    if (report_cmd->parsed()) return run_report(run_dir, data_dir, top_n);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
