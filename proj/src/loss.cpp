// Copyright (c) 2026 the cellseg authors
// SPDX-License-Identifier: Apache-2.0
#include "cellseg/loss.hpp"

#include <cmath>

namespace cellseg {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// log(1 + exp(x)) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

struct SampleStats {
  double tp = 0.0;      // sum p*t
  double fp = 0.0;      // sum p*(1-t)
  double fn = 0.0;      // sum (1-p)*t
  double usum = 0.0;    // sum p + sum t
  double dice = 0.0;
  double tversky = 0.0;
};

void check_batch(const std::vector<LogitMap>& logits, const std::vector<BinaryMask>& targets) {
  require(!logits.empty(), "batch must be nonempty");
  require(logits.size() == targets.size(), "logit/target batch sizes differ: " +
                                               std::to_string(logits.size()) + " vs " +
                                               std::to_string(targets.size()));
  for (std::size_t i = 0; i < logits.size(); ++i) {
    require(logits[i].height == targets[i].height && logits[i].width == targets[i].width,
            "sample " + std::to_string(i) + " shape mismatch: logits " +
                std::to_string(logits[i].height) + "x" + std::to_string(logits[i].width) +
                ", target " + std::to_string(targets[i].height) + "x" +
                std::to_string(targets[i].width));
    require(logits[i].height == logits[0].height && logits[i].width == logits[0].width,
            "all batch samples must share one shape");
    for (double v : logits[i].data) require(std::isfinite(v), "non-finite logit input");
  }
}

}  // namespace

void LossConfig::validate() const {
  require(eps > 0.0 && smooth >= 0.0, "eps must be positive, smooth non-negative");
  require(w_dice >= 0.0 && w_bce >= 0.0 && w_tversky >= 0.0, "loss weights must be non-negative");
  require(std::abs(w_dice + w_bce + w_tversky - 1.0) < 1e-12, "loss weights must sum to 1");
  require(alpha_tv > 0.0 && beta_tv > 0.0, "tversky trade-offs must be positive");
  require(logit_clamp > 0.0, "logit clamp must be positive");
  require(pos_weight_min >= 0.0 && pos_weight_max >= pos_weight_min, "bad pos_weight bounds");
}

double adaptive_pos_weight(const std::vector<BinaryMask>& batch_targets, const LossConfig& cfg) {
  cfg.validate();
  require(!batch_targets.empty(), "batch must be nonempty");
  double positives = 0.0;
  double total = 0.0;
  for (const BinaryMask& mask : batch_targets) {
    positives += static_cast<double>(mask.positive_count());
    total += static_cast<double>(mask.data.size());
  }
  double pos_ratio = std::max(positives / total, cfg.eps);
  double w = (1.0 - pos_ratio) / pos_ratio;
  return std::min(std::max(w, cfg.pos_weight_min), cfg.pos_weight_max);
}

namespace {

/// Shared forward machinery; fills per-sample stats and the clamped
/// probabilities when a gradient pass needs them.
LossBreakdown forward_impl(const std::vector<LogitMap>& logits, const std::vector<BinaryMask>& targets,
                           const LossConfig& cfg, std::vector<SampleStats>* stats_out,
                           std::vector<std::vector<double>>* probs_out) {
  cfg.validate();
  check_batch(logits, targets);
  std::size_t batch = logits.size();
  std::size_t pixels = logits[0].data.size();

  double pos_weight = adaptive_pos_weight(targets, cfg);

  double dice_sum = 0.0;
  double tversky_sum = 0.0;
  double bce_sum = 0.0;
  if (stats_out) stats_out->resize(batch);
  if (probs_out) probs_out->resize(batch);

  for (std::size_t i = 0; i < batch; ++i) {
    const auto& x = logits[i].data;
    const auto& t = targets[i].data;
    SampleStats s;
    if (probs_out) (*probs_out)[i].resize(pixels);
    for (std::size_t j = 0; j < pixels; ++j) {
      double xc = std::min(std::max(x[j], -cfg.logit_clamp), cfg.logit_clamp);
      double p = sigmoid(xc);
      p = std::min(std::max(p, cfg.eps), 1.0 - cfg.eps);
      if (probs_out) (*probs_out)[i][j] = p;
      double tv = static_cast<double>(t[j]);
      s.tp += p * tv;
      s.fp += p * (1.0 - tv);
      s.fn += (1.0 - p) * tv;
      s.usum += p + tv;
      // BCE on raw logits: t=1 contributes pos_weight*softplus(-x), t=0 softplus(x).
      bce_sum += t[j] ? pos_weight * softplus(-x[j]) : softplus(x[j]);
    }
    s.dice = (2.0 * s.tp + cfg.smooth) / (s.usum + cfg.smooth);
    s.tversky = (s.tp + cfg.smooth) / (s.tp + cfg.alpha_tv * s.fp + cfg.beta_tv * s.fn + cfg.smooth);
    dice_sum += s.dice;
    tversky_sum += s.tversky;
    if (stats_out) (*stats_out)[i] = s;
  }

  LossBreakdown out;
  out.pos_weight = pos_weight;
  out.dice_loss = 1.0 - dice_sum / static_cast<double>(batch);
  out.tversky_loss = 1.0 - tversky_sum / static_cast<double>(batch);
  out.bce_loss = bce_sum / (static_cast<double>(batch) * static_cast<double>(pixels));
  out.total = cfg.w_dice * out.dice_loss + cfg.w_bce * out.bce_loss + cfg.w_tversky * out.tversky_loss;
  require(std::isfinite(out.total), "loss diverged to a non-finite value");
  return out;
}

}  // namespace

LossBreakdown loss_forward(const std::vector<LogitMap>& logits, const std::vector<BinaryMask>& targets,
                           const LossConfig& cfg) {
  return forward_impl(logits, targets, cfg, nullptr, nullptr);
}

LossBreakdown loss_backward(const std::vector<LogitMap>& logits, const std::vector<BinaryMask>& targets,
                            const LossConfig& cfg) {
  std::vector<SampleStats> stats;
  std::vector<std::vector<double>> probs;
  LossBreakdown out = forward_impl(logits, targets, cfg, &stats, &probs);

  std::size_t batch = logits.size();
  std::size_t pixels = logits[0].data.size();
  double inv_batch = 1.0 / static_cast<double>(batch);
  double inv_elems = 1.0 / (static_cast<double>(batch) * static_cast<double>(pixels));

  out.grad.resize(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto& x = logits[i].data;
    const auto& t = targets[i].data;
    const SampleStats& s = stats[i];
    LogitMap g(logits[i].height, logits[i].width);

    double dice_denom = s.usum + cfg.smooth;
    double dice_num = 2.0 * s.tp + cfg.smooth;
    double tv_denom = s.tp + cfg.alpha_tv * s.fp + cfg.beta_tv * s.fn + cfg.smooth;
    double tv_num = s.tp + cfg.smooth;

    for (std::size_t j = 0; j < pixels; ++j) {
      double tv = static_cast<double>(t[j]);
      double p = probs[i][j];

      // d(dice_i)/dp_j = (2 t_j * denom - num) / denom^2  (d usum/dp_j = 1)
      double ddice_dp = (2.0 * tv * dice_denom - dice_num) / (dice_denom * dice_denom);
      // d(tversky_i)/dp_j with dTP=t, dFP=1-t, dFN=-t
      double ddenom_dp = tv + cfg.alpha_tv * (1.0 - tv) - cfg.beta_tv * tv;
      double dtv_dp = (tv * tv_denom - tv_num * ddenom_dp) / (tv_denom * tv_denom);

      // Through sigmoid and both clamps (zero once either clamp binds).
      double dp_dx = 0.0;
      if (std::abs(x[j]) < cfg.logit_clamp && p > cfg.eps && p < 1.0 - cfg.eps)
        dp_dx = p * (1.0 - p);

      double grad_overlap =
          (-cfg.w_dice * ddice_dp - cfg.w_tversky * dtv_dp) * inv_batch * dp_dx;

      // BCE path on the raw logit.
      double sig_raw = sigmoid(x[j]);
      double grad_bce = t[j] ? out.pos_weight * (sig_raw - 1.0) : sig_raw;
      grad_bce *= cfg.w_bce * inv_elems;

      g.data[j] = grad_overlap + grad_bce;
    }
    require(all_finite(g.data), "non-finite loss gradient");
    out.grad[i] = std::move(g);
  }
  return out;
}

}  // namespace cellseg
