// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include "cellseg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cellseg/checkpoint.hpp"
#include "cellseg/common.hpp"
#include "cellseg/image_io.hpp"
#include "cellseg/rng.hpp"

namespace cellseg {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kFnvBasis = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void digest_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void digest_u32(std::uint64_t& h, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  digest_bytes(h, b, 4);
}

MetricReport report_from_counts(const ConfusionCounts& c) {
  MetricReport r;
  r.tp = c.tp;
  r.fp = c.fp;
  r.fn = c.fn;
  r.tn = c.tn;
  const double tp = static_cast<double>(c.tp);
  const double fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn);
  r.dice = (2.0 * tp + fp + fn) == 0.0 ? 1.0 : 2.0 * tp / (2.0 * tp + fp + fn);
  r.iou = (tp + fp + fn) == 0.0 ? 1.0 : tp / (tp + fp + fn);
  r.precision = (tp + fp) == 0.0 ? 1.0 : tp / (tp + fp);
  r.recall = (tp + fn) == 0.0 ? 1.0 : tp / (tp + fn);
  return r;
}

std::string echo_config(const TrainConfig& cfg, const OptimConfig& opt) {
  std::ostringstream out;
  out << "epochs=" << cfg.epochs << "\nbatch_size=" << cfg.batch_size
      << "\naccum_steps=" << cfg.accum_steps << "\nseed=" << cfg.seed
      << "\nsampler_on=" << (cfg.sampler_on ? 1 : 0) << "\ngabor_on=" << (cfg.gabor_on ? 1 : 0)
      << "\nema_selection=" << (cfg.ema_selection ? 1 : 0)
      << "\nbase_channels=" << cfg.model.base_channels << "\nin_channels=" << cfg.model.in_channels
      << "\nuse_scse=" << (cfg.model.use_scse ? 1 : 0)
      << "\nuse_projection=" << (cfg.model.use_projection ? 1 : 0);
  char buf[64];
  auto num = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "\n%s=%.12g", key, v);
    out << buf;
  };
  num("lr_max", opt.lr_max);
  num("lr_min", opt.lr_min);
  num("weight_decay", opt.weight_decay);
  num("clip_norm", opt.clip_norm);
  num("warmup_frac", opt.warmup_frac);
  out << "\ntotal_steps=" << opt.total_steps;
  num("w_dice", cfg.loss.w_dice);
  num("w_bce", cfg.loss.w_bce);
  num("w_tversky", cfg.loss.w_tversky);
  num("logit_clamp", cfg.loss.logit_clamp);
  num("pos_weight_max", cfg.loss.pos_weight_max);
  num("p_flip", cfg.augment.p_flip);
  num("p_rot90", cfg.augment.p_rot90);
  num("p_elastic", cfg.augment.p_elastic);
  num("p_photometric", cfg.augment.p_photometric);
  num("ema_alpha", cfg.ema.alpha);
  out << "\n";
  return out.str();
}

std::vector<int> shuffled_identity(int n, Rng& rng) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
  }
  return ids;
}

void fill_batch_slot(Tensor<float>& x, int slot, const MultiChannelImage& img) {
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int xx = 0; xx < img.width; ++xx)
        x.at(slot, c, y, xx) = static_cast<float>(img.at(y, xx, c));
}

[[noreturn]] void nan_abort(const std::string& what, int epoch, std::int64_t step,
                            const std::string& config_echo, const std::string& out_dir) {
  std::ostringstream msg;
  msg << "non-finite value at epoch " << epoch << ", optimizer step " << step << ": " << what;
  if (!out_dir.empty()) {
    std::ofstream dump(fs::path(out_dir) / "nan_dump.txt", std::ios::binary);
    dump << msg.str() << "\n\nresolved config:\n" << config_echo;
  }
  throw TrainError(msg.str());
}

/// Eval-mode metrics over a split, micro-aggregated confusion counts.
MetricReport validate_split(Model<float>& model, const std::vector<MultiChannelImage>& inputs,
                            const std::vector<BinaryMask>& targets, int batch_size, int epoch,
                            const std::string& config_echo, const std::string& out_dir) {
  ConfusionCounts total;
  const int n = static_cast<int>(inputs.size());
  for (int pos = 0; pos < n; pos += batch_size) {
    const int bsz = std::min(batch_size, n - pos);
    const auto& first = inputs[static_cast<std::size_t>(pos)];
    Tensor<float> x(bsz, first.channels, first.height, first.width);
    for (int j = 0; j < bsz; ++j) fill_batch_slot(x, j, inputs[static_cast<std::size_t>(pos + j)]);
    Tensor<float> out = model.forward(x, false);
    if (!all_finite(out.data)) nan_abort("validation logits", epoch, -1, config_echo, out_dir);
    std::vector<LogitMap> maps = tensor_to_logits(out);
    for (int j = 0; j < bsz; ++j) {
      BinaryMask pred = threshold_logits(maps[static_cast<std::size_t>(j)]);
      ConfusionCounts c = confusion_counts(pred, targets[static_cast<std::size_t>(pos + j)]);
      total.tp += c.tp;
      total.fp += c.fp;
      total.fn += c.fn;
      total.tn += c.tn;
    }
  }
  return report_from_counts(total);
}

}  // namespace

void TrainConfig::validate() const {
  require(epochs >= 1, "epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(accum_steps >= 1, "accum_steps must be >= 1");
  model.validate();
  loss.validate();
  augment.validate();
  ema.validate();
  // optimizer.total_steps is derived from the corpus, so only the rest of the
  // optimizer config is checked here (a placeholder total would reject).
  require(optimizer.lr_max > optimizer.lr_min && optimizer.lr_min > 0.0, "lr range invalid");
  require(optimizer.clip_norm > 0.0, "clip_norm must be positive");
}

SplitData load_split(const std::string& data_dir, const std::string& split) {
  std::vector<SampleRecord> all = load_manifest((fs::path(data_dir) / "manifest.csv").string());
  SplitData out;
  for (const SampleRecord& r : all) {
    if (r.split != split) continue;
    char stem[64];
    std::snprintf(stem, sizeof(stem), "%s_%04d.png", r.split.c_str(), r.id);
    out.images.push_back(read_image_png((fs::path(data_dir) / "images" / stem).string()));
    out.masks.push_back(read_mask_png((fs::path(data_dir) / "masks" / stem).string()));
    out.records.push_back(r);
  }
  require(!out.images.empty(), "split not present in manifest: " + split);
  return out;
}

std::vector<MultiChannelImage> assemble_inputs(const std::vector<MultiChannelImage>& images,
                                               bool gabor_on, const GaborBank& bank) {
  std::vector<MultiChannelImage> out(images.size());
  parallel_for(images.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const MultiChannelImage& img = images[i];
      require(img.channels == 3, "assemble_inputs expects RGB images");
      if (gabor_on) {
        out[i] = assemble_4ch(img, edge_map(img, bank));
      } else {
        GrayImage zeros(img.height, img.width, 1);
        out[i] = assemble_4ch(img, zeros);
      }
    }
  });
  return out;
}

std::string RunReport::csv() const {
  std::string out = "epoch,train_loss,lr,val_dice,val_iou,val_precision,val_recall,ema_dice,outlier\n";
  char buf[256];
  for (const EpochStats& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.9e,%.9e,%.9f,%.9f,%.9f,%.9f,%.9f,%d\n", e.epoch,
                  e.train_loss, e.lr, e.val.dice, e.val.iou, e.val.precision, e.val.recall,
                  e.ema_dice, e.outlier ? 1 : 0);
    out += buf;
  }
  return out;
}

RunReport train(const TrainConfig& cfg, const SplitData& train_data, const SplitData& val_data,
                const std::string& out_dir) {
  cfg.validate();
  require(cfg.model.in_channels == 4, "trainer assembles 4-channel inputs");
  require(!train_data.images.empty() && train_data.images.size() == train_data.masks.size(),
          "train split images/masks mismatch");
  require(!val_data.images.empty() && val_data.images.size() == val_data.masks.size(),
          "val split images/masks mismatch");

  const auto t0 = std::chrono::steady_clock::now();
  if (!out_dir.empty()) fs::create_directories(out_dir);

  const GaborBank bank = build_bank();
  const std::vector<MultiChannelImage> train4 = assemble_inputs(train_data.images, cfg.gabor_on, bank);
  const std::vector<MultiChannelImage> val4 = assemble_inputs(val_data.images, cfg.gabor_on, bank);

  const int n = static_cast<int>(train4.size());
  std::vector<SampleWeight> weights(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    weights[static_cast<std::size_t>(i)] =
        complexity_weight(train_data.masks[static_cast<std::size_t>(i)], i, cfg.complexity);

  const int micro_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int steps_per_epoch = (micro_per_epoch + cfg.accum_steps - 1) / cfg.accum_steps;
  OptimConfig opt = cfg.optimizer;
  opt.accum_steps = cfg.accum_steps;
  opt.total_steps = static_cast<std::int64_t>(cfg.epochs) * steps_per_epoch;
  opt.validate();

  Model<float> model(cfg.model, cfg.seed);
  AdamState<float> state;
  ValidationTrace trace(cfg.ema);

  RunReport report;
  report.config_echo = echo_config(cfg, opt);
  std::uint64_t digest = kFnvBasis;

  std::int64_t gstep = 0;
  int best_epoch = 0;
  double best_key = -1.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng sampler_rng = Rng::stream(cfg.seed, "sampler", static_cast<std::uint64_t>(epoch));
    std::vector<int> ids = cfg.sampler_on ? weighted_draw(weights, n, sampler_rng)
                                          : shuffled_identity(n, sampler_rng);
    for (int id : ids) digest_u32(digest, static_cast<std::uint32_t>(id));

    model.params().zero_grads();
    int in_group = 0;
    double loss_sum = 0.0;
    int micro_count = 0;
    double last_lr = 0.0;

    for (int pos = 0; pos < n; pos += cfg.batch_size) {
      const int bsz = std::min(cfg.batch_size, n - pos);
      const auto& first = train4[static_cast<std::size_t>(ids[static_cast<std::size_t>(pos)])];
      Tensor<float> x(bsz, 4, first.height, first.width);
      std::vector<BinaryMask> targets;
      targets.reserve(static_cast<std::size_t>(bsz));
      for (int j = 0; j < bsz; ++j) {
        const int id = ids[static_cast<std::size_t>(pos + j)];
        Rng arng = Rng::stream(cfg.seed, "augment",
                               (static_cast<std::uint64_t>(epoch) << 32) |
                                   static_cast<std::uint64_t>(pos + j));
        auto [aug_img, aug_mask] = augment(train4[static_cast<std::size_t>(id)],
                                           train_data.masks[static_cast<std::size_t>(id)],
                                           cfg.augment, arng);
        fill_batch_slot(x, j, aug_img);
        digest_bytes(digest, aug_mask.data.data(), aug_mask.data.size());
        targets.push_back(std::move(aug_mask));
      }

      Tensor<float> logits = model.forward(x, true);
      if (!all_finite(logits.data))
        nan_abort("training logits", epoch, gstep, report.config_echo, out_dir);
      LossBreakdown lb = loss_backward(tensor_to_logits(logits), targets, cfg.loss);
      loss_sum += lb.total;
      ++micro_count;
      model.backward(logits_to_tensor_f32(lb.grad));

      ++in_group;
      if (in_group == cfg.accum_steps || pos + bsz >= n) {
        scale_gradients(model.params(), 1.0 / in_group);
        try {
          clip_gradients(model.params(), opt.clip_norm);
        } catch (const ContractError& e) {
          nan_abort(e.what(), epoch, gstep, report.config_echo, out_dir);
        }
        ++gstep;
        last_lr = lr_at(gstep, opt);
        adamw_step(model.params(), state, last_lr, opt);
        model.params().zero_grads();
        in_group = 0;
      }
    }

    MetricReport val = validate_split(model, val4, val_data.masks, cfg.batch_size, epoch,
                                      report.config_echo, out_dir);
    const EpochRecord& rec = trace.ingest(val.dice);

    EpochStats es;
    es.epoch = epoch;
    es.train_loss = loss_sum / micro_count;
    es.lr = last_lr;
    es.val = val;
    es.ema_dice = rec.ema;
    es.outlier = rec.outlier;
    report.epochs.push_back(es);

    bool improved;
    double key;
    if (cfg.ema_selection) {
      key = rec.ema;
      improved = !rec.outlier && (best_epoch == 0 || key >= best_key);
    } else {
      key = val.dice;
      improved = best_epoch == 0 || key >= best_key;
    }
    if (improved) {
      best_key = key;
      best_epoch = epoch;
      if (!out_dir.empty()) save_checkpoint((fs::path(out_dir) / "best.cskp").string(), model.params());
    }
  }

  report.best_epoch = best_epoch;
  if (cfg.ema_selection)
    require(best_epoch == trace.select_best(), "selection out of sync with the ema guard");
  report.data_digest = digest;
  if (!out_dir.empty()) {
    save_checkpoint((fs::path(out_dir) / "last.cskp").string(), model.params(), &state);
    std::ofstream trace_csv(fs::path(out_dir) / "validation_trace.csv", std::ios::binary);
    trace_csv << trace.csv();
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

EvalResult evaluate_model(Model<float>& model, const std::vector<MultiChannelImage>& inputs,
                          const std::vector<BinaryMask>& targets, const EvalOptions& opts) {
  require(inputs.size() == targets.size() && !inputs.empty(), "eval split images/masks mismatch");
  require(opts.batch_size >= 1, "batch_size must be >= 1");

  EvalResult result;
  result.per_image.resize(inputs.size());
  ConfusionCounts total;

  auto account = [&](std::size_t i, const BinaryMask& pred) {
    MetricReport r = evaluate_masks(pred, targets[i]);
    total.tp += r.tp;
    total.fp += r.fp;
    total.fn += r.fn;
    total.tn += r.tn;
    result.per_image[i] = r;
  };

  if (opts.tta) {
    auto forward = [&](const MultiChannelImage& img) {
      Tensor<float> x(1, img.channels, img.height, img.width);
      fill_batch_slot(x, 0, img);
      Tensor<float> out = model.forward(x, false);
      require(all_finite(out.data), "non-finite logits during evaluation");
      return tensor_to_logits(out)[0];
    };
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      TtaResult tta = tta_predict(forward, inputs[i]);
      BinaryMask pred(tta.probability.height, tta.probability.width);
      for (std::size_t k = 0; k < tta.probability.data.size(); ++k)
        pred.data[k] = tta.probability.data[k] >= 0.5 ? 1 : 0;
      account(i, pred);
    }
  } else {
    const int n = static_cast<int>(inputs.size());
    for (int pos = 0; pos < n; pos += opts.batch_size) {
      const int bsz = std::min(opts.batch_size, n - pos);
      const auto& first = inputs[static_cast<std::size_t>(pos)];
      Tensor<float> x(bsz, first.channels, first.height, first.width);
      for (int j = 0; j < bsz; ++j) fill_batch_slot(x, j, inputs[static_cast<std::size_t>(pos + j)]);
      Tensor<float> out = model.forward(x, false);
      require(all_finite(out.data), "non-finite logits during evaluation");
      std::vector<LogitMap> maps = tensor_to_logits(out);
      for (int j = 0; j < bsz; ++j)
        account(static_cast<std::size_t>(pos + j), threshold_logits(maps[static_cast<std::size_t>(j)]));
    }
  }

  result.aggregate = report_from_counts(total);
  double sum = 0.0;
  for (const MetricReport& r : result.per_image) sum += r.dice;
  result.mean_dice = sum / static_cast<double>(result.per_image.size());
  double var = 0.0;
  for (const MetricReport& r : result.per_image)
    var += (r.dice - result.mean_dice) * (r.dice - result.mean_dice);
  result.std_dice = std::sqrt(var / static_cast<double>(result.per_image.size()));
  return result;
}

std::string EvalResult::csv() const {
  std::string out = "index," + MetricReport::csv_header() + "\n";
  for (std::size_t i = 0; i < per_image.size(); ++i)
    out += std::to_string(i) + "," + per_image[i].csv_row() + "\n";
  return out;
}

AblationTable ablate(const TrainConfig& base, const SplitData& train_data,
                     const SplitData& val_data, const SplitData& test_data,
                     const std::string& out_dir) {
  require(!out_dir.empty(), "ablate needs an output directory");
  require(!test_data.images.empty() && test_data.images.size() == test_data.masks.size(),
          "test split images/masks mismatch");

  const GaborBank bank = build_bank();
  AblationTable table;
  table.per_image_test_dice.assign(test_data.images.size(), {0.0, 0.0, 0.0, 0.0});

  int column = 0;
  for (int g = 0; g <= 1; ++g) {
    for (int s = 0; s <= 1; ++s, ++column) {
      TrainConfig cfg = base;
      cfg.gabor_on = g == 1;
      cfg.sampler_on = s == 1;
      const std::string sub =
          (fs::path(out_dir) / ("g" + std::to_string(g) + "_s" + std::to_string(s))).string();
      RunReport run = train(cfg, train_data, val_data, sub);

      Model<float> model(cfg.model, cfg.seed);
      load_checkpoint((fs::path(sub) / "best.cskp").string(), model.params());
      std::vector<MultiChannelImage> test4 = assemble_inputs(test_data.images, cfg.gabor_on, bank);
      EvalResult eval = evaluate_model(model, test4, test_data.masks);

      AblationCell cell;
      cell.gabor_on = cfg.gabor_on;
      cell.sampler_on = cfg.sampler_on;
      cell.best_epoch = run.best_epoch;
      cell.best_val_dice = run.epochs[static_cast<std::size_t>(run.best_epoch - 1)].val.dice;
      cell.final_val_dice = run.epochs.back().val.dice;
      cell.test_dice = eval.aggregate.dice;
      cell.data_digest = run.data_digest;
      table.cells.push_back(cell);
      for (std::size_t i = 0; i < eval.per_image.size(); ++i)
        table.per_image_test_dice[i][static_cast<std::size_t>(column)] = eval.per_image[i].dice;
    }
  }
  return table;
}

std::string AblationTable::csv() const {
  std::string out = "gabor_on,sampler_on,best_epoch,best_val_dice,final_val_dice,test_dice,data_digest\n";
  char buf[192];
  for (const AblationCell& c : cells) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.9f,%.9f,%.9f,%016llx\n", c.gabor_on ? 1 : 0,
                  c.sampler_on ? 1 : 0, c.best_epoch, c.best_val_dice, c.final_val_dice,
                  c.test_dice, static_cast<unsigned long long>(c.data_digest));
    out += buf;
  }
  return out;
}

std::string AblationTable::per_image_csv() const {
  // Columns follow the cell order g0_s0, g0_s1, g1_s0, g1_s1; the deltas pair
  // gabor against no-gabor at a fixed sampler setting.
  std::string out =
      "index,dice_g0_s0,dice_g0_s1,dice_g1_s0,dice_g1_s1,delta_gabor_s0,delta_gabor_s1\n";
  char buf[224];
  for (std::size_t i = 0; i < per_image_test_dice.size(); ++i) {
    const auto& d = per_image_test_dice[i];
    std::snprintf(buf, sizeof(buf), "%zu,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f\n", i, d[0], d[1], d[2],
                  d[3], d[2] - d[0], d[3] - d[1]);
    out += buf;
  }
  return out;
}

}  // namespace cellseg
