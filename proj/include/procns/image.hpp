#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "procns/common.hpp"
#include "procns/tensor.hpp"

namespace procns {

// Per-pixel class index; 255 marks an unlabeled pixel. This is also the PNG
// on-disk encoding shared by sparse labels, pseudo-labels, and snapshots.
constexpr uint8_t kUnlabeled = 255;

struct LabelMap {
  int H = 0, W = 0;
  std::vector<uint8_t> idx;

  LabelMap() = default;
  LabelMap(int h, int w, uint8_t fill = kUnlabeled) : H(h), W(w), idx(static_cast<size_t>(h) * w, fill) {}

  uint8_t& at(int i, int j) { return idx[static_cast<size_t>(i) * W + j]; }
  uint8_t at(int i, int j) const { return idx[static_cast<size_t>(i) * W + j]; }
  int64_t size() const { return static_cast<int64_t>(H) * W; }

  int64_t labeled_count() const {
    int64_t n = 0;
    for (auto v : idx) n += (v != kUnlabeled);
    return n;
  }

  bool operator==(const LabelMap& o) const { return H == o.H && W == o.W && idx == o.idx; }
};

// {0,1}-valued C×H×W tensor. One-hot labels have at most one 1 per pixel
// (all-zero = unlabeled); region masks may set several channels.
struct ClassMask {
  int C = 0, H = 0, W = 0;
  std::vector<uint8_t> v;

  ClassMask() = default;
  ClassMask(int c, int h, int w) : C(c), H(h), W(w), v(static_cast<size_t>(c) * h * w, 0) {}

  uint8_t& at(int c, int i, int j) { return v[(static_cast<size_t>(c) * H + i) * W + j]; }
  uint8_t at(int c, int i, int j) const { return v[(static_cast<size_t>(c) * H + i) * W + j]; }
  int64_t plane_size() const { return static_cast<int64_t>(H) * W; }

  bool operator==(const ClassMask& o) const { return C == o.C && H == o.H && W == o.W && v == o.v; }
};

inline ClassMask label_to_onehot(const LabelMap& lab, int num_classes) {
  ClassMask m(num_classes, lab.H, lab.W);
  for (int64_t p = 0; p < lab.size(); ++p) {
    uint8_t c = lab.idx[static_cast<size_t>(p)];
    if (c == kUnlabeled) continue;
    require(c < num_classes, "label index " + std::to_string(c) + " exceeds class count");
    m.v[static_cast<size_t>(c) * lab.size() + p] = 1;
  }
  return m;
}

inline LabelMap onehot_to_label(const ClassMask& m) {
  LabelMap lab(m.H, m.W);
  int64_t hw = m.plane_size();
  for (int64_t p = 0; p < hw; ++p) {
    int hits = 0;
    for (int c = 0; c < m.C; ++c) {
      if (m.v[static_cast<size_t>(c) * hw + p]) {
        lab.idx[static_cast<size_t>(p)] = static_cast<uint8_t>(c);
        ++hits;
      }
    }
    require(hits <= 1, "onehot_to_label: pixel with multiple set channels");
  }
  return lab;
}

// Argmax over the class channel of a C×H×W probability buffer; ties go to the
// lowest class index.
template <class T>
LabelMap argmax_label(const std::vector<T>& prob, int C, int H, int W) {
  require(static_cast<int64_t>(prob.size()) == static_cast<int64_t>(C) * H * W, "argmax_label: size mismatch");
  LabelMap lab(H, W);
  int64_t hw = static_cast<int64_t>(H) * W;
  for (int64_t p = 0; p < hw; ++p) {
    int best = 0;
    T bv = prob[static_cast<size_t>(p)];
    for (int c = 1; c < C; ++c) {
      T t = prob[static_cast<size_t>(c * hw + p)];
      if (t > bv) {
        bv = t;
        best = c;
      }
    }
    lab.idx[static_cast<size_t>(p)] = static_cast<uint8_t>(best);
  }
  return lab;
}

// Grayscale or multi-channel image, channels-first, values in [0,1].
struct Image {
  int C = 0, H = 0, W = 0;
  std::vector<float> v;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.f) : C(c), H(h), W(w), v(static_cast<size_t>(c) * h * w, fill) {}

  float& at(int c, int i, int j) { return v[(static_cast<size_t>(c) * H + i) * W + j]; }
  float at(int c, int i, int j) const { return v[(static_cast<size_t>(c) * H + i) * W + j]; }
};

// Per-image z-score normalization, applied before the network and before
// intensity differences in the affinity kernel.
template <class T>
std::vector<T> zscore(const Image& img) {
  double mu = 0.0;
  for (float x : img.v) mu += x;
  mu /= static_cast<double>(img.v.size());
  double var = 0.0;
  for (float x : img.v) {
    double d = x - mu;
    var += d * d;
  }
  var /= static_cast<double>(img.v.size());
  double is = 1.0 / std::sqrt(var + 1e-8);
  std::vector<T> out(img.v.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>((img.v[i] - mu) * is);
  return out;
}

}  // namespace procns
