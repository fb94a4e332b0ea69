#pragma once

#include <cmath>
#include <cstdint>

#include "procns/common.hpp"
#include "procns/losses.hpp"
#include "procns/prototypes.hpp"

namespace procns {

enum class Stage { Init, Main };

inline const char* stage_name(Stage s) { return s == Stage::Init ? "init" : "main"; }

struct TrainConfig {
  double lambda1 = 0.1, lambda2 = 0.5, lambda3 = 0.1, lambda4 = 0.01;
  double alpha = 0.8;
  int init_epochs = 10;
  int main_epochs = 90;
  int batch_size = 4;
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double poly_power = 0.9;
  uint64_t seed = 1234;
  double grad_clip_norm = 10.0;  // 0 disables clipping
  bool use_prsa = true;
  bool use_anpm = true;
  bool use_noise_loss = true;
  bool use_init_prsa = true;
  bool use_ema = true;
  bool use_refined_for_masks = false;
  PrototypeGranularity prototype_granularity = PrototypeGranularity::SampleWise;
  int checkpoint_every = 0;  // 0: stage-final checkpoints only
  AffinityConfig affinity;

  // Ablation switches zero a term out entirely; zeroed terms are never
  // evaluated, so the reduced runs match their baselines bitwise.
  double lambda_init_prsa() const { return use_init_prsa ? lambda1 : 0.0; }
  double lambda_main_prsa() const { return use_prsa ? lambda3 : 0.0; }
  double lambda_noise() const { return use_noise_loss ? lambda4 : 0.0; }

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0)
      throw ConfigError("train: all lambda weights must be >= 0");
    if (!(alpha > 0 && alpha <= 1)) throw ConfigError("train.alpha must be in (0,1]");
    if (init_epochs < 1) throw ConfigError("train.init_epochs must be >= 1");
    if (main_epochs < 0) throw ConfigError("train.main_epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (lr0 <= 0) throw ConfigError("train.lr0 must be > 0");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train.momentum must be in [0,1)");
    if (weight_decay < 0) throw ConfigError("train.weight_decay must be >= 0");
    if (poly_power <= 0) throw ConfigError("train.poly_power must be > 0");
    if (grad_clip_norm < 0) throw ConfigError("train.grad_clip_norm must be >= 0");
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
    if (!use_anpm && lambda_noise() > 0)
      throw ConfigError("train.lambda4 > 0 requires use_anpm (no noisy regions exist to supervise)");
    affinity.validate();
  }
};

inline double lr_schedule(int64_t iter, int64_t max_iter, double lr0, double power) {
  require(max_iter > 0 && iter >= 0 && iter <= max_iter, "lr_schedule: iteration out of range");
  return lr0 * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), power);
}

}  // namespace procns
