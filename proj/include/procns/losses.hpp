#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "procns/image.hpp"
#include "procns/ops.hpp"
#include "procns/prototypes.hpp"

namespace procns {

struct AffinityConfig {
  double sigma_l = 6.0;
  double sigma_v = 0.1;
  int radius = 5;
  enum class Mode { ClassMatched, Literal } mode = Mode::ClassMatched;

  void validate() const {
    if (sigma_l <= 0 || sigma_v <= 0) throw ConfigError("affinity bandwidths must be positive");
    if (radius < 1) throw ConfigError("affinity.radius must be >= 1");
  }
};

// Gaussian kernel over spatial distance and intensity difference. Intensity
// distance generalizes to multi-channel images as the mean squared channel
// difference.
template <class T>
double low_level_weight(int im, int jm, int in_, int jn, std::span<const T> vm, std::span<const T> vn,
                        const AffinityConfig& cfg) {
  double dl2 = static_cast<double>(im - in_) * (im - in_) + static_cast<double>(jm - jn) * (jm - jn);
  double dv2 = 0;
  for (size_t c = 0; c < vm.size(); ++c) {
    double d = static_cast<double>(vm[c]) - static_cast<double>(vn[c]);
    dv2 += d * d;
  }
  dv2 /= static_cast<double>(vm.size());
  return std::exp(-dl2 / (2.0 * cfg.sigma_l * cfg.sigma_l) - dv2 / (2.0 * cfg.sigma_v * cfg.sigma_v));
}

// A_low[m] = sum of low-level weights to every window neighbor of m. Depends
// only on the image, so callers cache it per sample. Expects the z-scored
// image, channels-first.
template <class T>
std::vector<T> compute_a_low(const std::vector<T>& image, int Cimg, int H, int W, const AffinityConfig& cfg) {
  require(static_cast<int64_t>(image.size()) == static_cast<int64_t>(Cimg) * H * W, "compute_a_low: size mismatch");
  int64_t hw = static_cast<int64_t>(H) * W;
  std::vector<T> alow(static_cast<size_t>(hw), T(0));
  std::vector<T> vm(static_cast<size_t>(Cimg)), vn(static_cast<size_t>(Cimg));
  int r = cfg.radius;
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      for (int c = 0; c < Cimg; ++c) vm[static_cast<size_t>(c)] = image[static_cast<size_t>(c * hw + i * W + j)];
      double s = 0;
      for (int di = -r; di <= r; ++di) {
        int ni = i + di;
        if (ni < 0 || ni >= H) continue;
        for (int dj = -r; dj <= r; ++dj) {
          if (di == 0 && dj == 0) continue;
          int nj = j + dj;
          if (nj < 0 || nj >= W) continue;
          for (int c = 0; c < Cimg; ++c) vn[static_cast<size_t>(c)] = image[static_cast<size_t>(c * hw + ni * W + nj)];
          s += low_level_weight<T>(i, j, ni, nj, vm, vn, cfg);
        }
      }
      alow[static_cast<size_t>(i * W + j)] = static_cast<T>(s);
    }
  }
  return alow;
}

// Affinity loss given a cached A_low field and the refined prediction.
template <class T>
Tensor<T> prsa_loss_from_phat(const std::vector<T>& a_low, const Tensor<T>& p_hat, const AffinityConfig& cfg) {
  require(p_hat.shape().size() == 3, "prsa_loss expects p_hat [C,H,W]");
  int H = p_hat.dim(1), W = p_hat.dim(2);
  require(static_cast<int64_t>(a_low.size()) == static_cast<int64_t>(H) * W, "prsa_loss: a_low size mismatch");
  T inv = T(-1) / static_cast<T>(static_cast<int64_t>(H) * W);
  auto a_high = window_sum_exclude_center(p_hat, cfg.radius);
  if (cfg.mode == AffinityConfig::Mode::ClassMatched)
    return scale(sum_all(mul(mul_spatial(a_high, a_low), p_hat)), inv);
  auto alow_t = Tensor<T>::from_data({H, W}, a_low);
  return scale(sum_all(mul(mul(channel_sum(a_high), channel_sum(p_hat)), alow_t)), inv);
}

// Full PRSA entry point: refines the prediction internally from logits and the
// relation map, then applies the affinity objective.
template <class T>
Tensor<T> prsa_loss(const std::vector<T>& zscored_image, int Cimg, const Tensor<T>& logits,
                    const Tensor<T>& relation, const AffinityConfig& cfg) {
  auto a_low = compute_a_low(zscored_image, Cimg, logits.dim(1), logits.dim(2), cfg);
  return prsa_loss_from_phat(a_low, refine_prediction(logits, relation), cfg);
}

// Partial cross-entropy: mean over labeled pixels of -log p at the labeled
// class. Unlabeled pixels (all-zero class vectors) contribute nothing.
template <class T>
Tensor<T> pce_loss(const Tensor<T>& prob, const ClassMask& label, T eps_log = T(1e-12)) {
  require(prob.shape().size() == 3, "pce_loss expects prob [C,H,W]");
  require(prob.dim(0) == label.C && prob.dim(1) == label.H && prob.dim(2) == label.W,
          "pce_loss: prob " + shape_str(prob.shape()) + " vs label " + shape_str({label.C, label.H, label.W}));
  int64_t hw = label.plane_size();
  auto entries = std::make_shared<std::vector<int64_t>>();
  int64_t labeled_pixels = 0;
  for (int64_t m = 0; m < hw; ++m) {
    bool any = false;
    for (int c = 0; c < label.C; ++c) {
      if (label.v[static_cast<size_t>(c * hw + m)]) {
        entries->push_back(c * hw + m);
        any = true;
      }
    }
    labeled_pixels += any;
  }
  if (labeled_pixels == 0) throw ZeroLabeledError("pce_loss: no labeled pixel in sample");
  auto pd = prob.data();
  double s = 0;
  for (auto e : *entries) s -= std::log(static_cast<double>(pd[e]) + static_cast<double>(eps_log));
  T val = static_cast<T>(s / static_cast<double>(labeled_pixels));
  auto pp = prob.node();
  T invn = T(1) / static_cast<T>(labeled_pixels);
  return detail::make_op<T>({}, {val}, {pp}, [pp, entries, invn, eps_log](detail::Node<T>& self) {
    auto g = pp->grad_span();
    T go = self.grad[0];
    for (auto e : *entries) g[static_cast<size_t>(e)] -= go * invn / (pp->value[static_cast<size_t>(e)] + eps_log);
  });
}

// Soft Dice against a constant target; zero when both sides are identically
// zero (empty noisy region).
template <class T>
Tensor<T> soft_dice_loss(const Tensor<T>& p, const std::vector<T>& y, T eps = T(1e-8)) {
  require(static_cast<int64_t>(y.size()) == p.size(), "soft_dice_loss: size mismatch");
  auto pd = p.data();
  double I = 0, P = 0, Y = 0;
  for (size_t i = 0; i < y.size(); ++i) {
    I += static_cast<double>(pd[i]) * y[i];
    P += pd[i];
    Y += y[i];
  }
  bool empty = (P == 0.0 && Y == 0.0);
  double S = P + Y + static_cast<double>(eps);
  T val = empty ? T(0) : static_cast<T>(1.0 - 2.0 * I / S);
  auto pp = p.node();
  auto ys = std::make_shared<std::vector<T>>(y);
  return detail::make_op<T>({}, {val}, {pp}, [pp, ys, I, S, empty](detail::Node<T>& self) {
    if (empty) return;
    auto g = pp->grad_span();
    T go = self.grad[0];
    for (size_t i = 0; i < g.size(); ++i) {
      double yi = (*ys)[i];
      g[i] += go * static_cast<T>((2.0 * I - 2.0 * yi * S) / (S * S));
    }
  });
}

// Eq.-style alias for the noisy-region supervision.
template <class T>
Tensor<T> noise_dice_loss(const Tensor<T>& p_noisy, const std::vector<T>& y_soft, T eps = T(1e-8)) {
  return soft_dice_loss(p_noisy, y_soft, eps);
}

}  // namespace procns
