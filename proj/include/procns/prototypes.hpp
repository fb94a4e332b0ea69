#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "procns/image.hpp"
#include "procns/ops.hpp"

namespace procns {

enum class PrototypeGranularity { SampleWise, BatchWise };

// Plain cosine with the documented zero guard for tiny norms.
template <class T>
T cosine_similarity(std::span<const T> a, std::span<const T> b, T eps = T(1e-8)) {
  require(a.size() == b.size(), "cosine_similarity: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < static_cast<double>(eps) || nb < static_cast<double>(eps)) return T(0);
  return static_cast<T>(dot / (na * nb));
}

// Mean embedding over the pixels labeled with class_id; nullopt when none.
template <class T>
std::optional<Tensor<T>> masked_average_pool(const Tensor<T>& embed, const ClassMask& label, int class_id) {
  require(embed.shape().size() == 3, "masked_average_pool expects [D,H,W]");
  require(embed.dim(1) == label.H && embed.dim(2) == label.W,
          "masked_average_pool: embedding " + shape_str(embed.shape()) + " vs label " +
              shape_str({label.C, label.H, label.W}));
  require(class_id >= 0 && class_id < label.C, "masked_average_pool: class id out of range");
  int64_t hw = label.plane_size();
  std::vector<uint8_t> mask(label.v.begin() + class_id * hw, label.v.begin() + (class_id + 1) * hw);
  int64_t count = 0;
  for (auto m : mask) count += m;
  if (count == 0) return std::nullopt;
  return scale(masked_sum(embed, mask), T(1) / static_cast<T>(count));
}

// Previous-epoch EMA prototypes used as fallback for classes absent from the
// whole batch; zero vectors before a class has ever been seen.
template <class T>
class PrototypeMemory {
 public:
  PrototypeMemory() = default;
  PrototypeMemory(int num_classes, int d_high, int d_low, T decay = T(0.9))
      : C_(num_classes), dh_(d_high), dl_(d_low), decay_(decay) {
    mem_high_.assign(static_cast<size_t>(C_), {});
    mem_low_.assign(static_cast<size_t>(C_), {});
    acc_high_.assign(static_cast<size_t>(C_), std::vector<T>(static_cast<size_t>(dh_), T(0)));
    acc_low_.assign(static_cast<size_t>(C_), std::vector<T>(static_cast<size_t>(dl_), T(0)));
    acc_count_.assign(static_cast<size_t>(C_), 0);
  }

  bool has(int c) const { return !mem_high_[static_cast<size_t>(c)].empty(); }
  const std::vector<T>& high(int c) const { return mem_high_[static_cast<size_t>(c)]; }
  const std::vector<T>& low(int c) const { return mem_low_[static_cast<size_t>(c)]; }

  void accumulate(int c, std::span<const T> h, std::span<const T> l) {
    auto& ah = acc_high_[static_cast<size_t>(c)];
    auto& al = acc_low_[static_cast<size_t>(c)];
    for (size_t i = 0; i < ah.size(); ++i) ah[i] += h[i];
    for (size_t i = 0; i < al.size(); ++i) al[i] += l[i];
    acc_count_[static_cast<size_t>(c)]++;
  }

  void end_epoch() {
    for (int c = 0; c < C_; ++c) {
      auto n = acc_count_[static_cast<size_t>(c)];
      if (n == 0) continue;
      auto& ah = acc_high_[static_cast<size_t>(c)];
      auto& al = acc_low_[static_cast<size_t>(c)];
      auto& mh = mem_high_[static_cast<size_t>(c)];
      auto& ml = mem_low_[static_cast<size_t>(c)];
      if (mh.empty()) {
        mh.assign(ah.size(), T(0));
        ml.assign(al.size(), T(0));
        for (size_t i = 0; i < ah.size(); ++i) mh[i] = ah[i] / static_cast<T>(n);
        for (size_t i = 0; i < al.size(); ++i) ml[i] = al[i] / static_cast<T>(n);
      } else {
        for (size_t i = 0; i < ah.size(); ++i) mh[i] = decay_ * mh[i] + (T(1) - decay_) * ah[i] / static_cast<T>(n);
        for (size_t i = 0; i < al.size(); ++i) ml[i] = decay_ * ml[i] + (T(1) - decay_) * al[i] / static_cast<T>(n);
      }
      std::fill(ah.begin(), ah.end(), T(0));
      std::fill(al.begin(), al.end(), T(0));
      acc_count_[static_cast<size_t>(c)] = 0;
    }
  }

 private:
  int C_ = 0, dh_ = 0, dl_ = 0;
  T decay_ = T(0.9);
  std::vector<std::vector<T>> mem_high_, mem_low_;
  std::vector<std::vector<T>> acc_high_, acc_low_;
  std::vector<int> acc_count_;
};

template <class T>
struct PrototypeSet {
  int C = 0;
  Tensor<T> deep;                             // [C, d_h], shared across the batch
  std::vector<Tensor<T>> shallow;             // per sample [C, d_l]
  std::vector<Tensor<T>> concat;              // per sample [C, d_h + d_l]
  std::vector<std::vector<uint8_t>> present;  // [B][C]
};

// Multi-scale prototypes: deep pools class pixels across the whole batch
// (weighted by per-sample pixel counts), shallow pools within each sample.
// Embeddings must already be upsampled to label resolution.
template <class T>
PrototypeSet<T> build_prototypes(const std::vector<Tensor<T>>& highs, const std::vector<Tensor<T>>& lows,
                                 const std::vector<ClassMask>& labels,
                                 PrototypeGranularity granularity = PrototypeGranularity::SampleWise,
                                 PrototypeMemory<T>* memory = nullptr) {
  size_t B = labels.size();
  require(highs.size() == B && lows.size() == B, "build_prototypes: batch size mismatch");
  require(B > 0, "build_prototypes: empty batch");
  int C = labels[0].C;
  int dh = highs[0].dim(0), dl = lows[0].dim(0);
  int64_t hw = labels[0].plane_size();

  PrototypeSet<T> set;
  set.C = C;
  set.present.assign(B, std::vector<uint8_t>(static_cast<size_t>(C), 0));

  std::vector<std::vector<std::vector<uint8_t>>> masks(B);  // [i][c] -> plane mask
  std::vector<std::vector<int64_t>> counts(B, std::vector<int64_t>(static_cast<size_t>(C), 0));
  for (size_t i = 0; i < B; ++i) {
    require(labels[i].C == C && labels[i].plane_size() == hw, "build_prototypes: label shape mismatch");
    require(highs[i].dim(1) == labels[i].H && highs[i].dim(2) == labels[i].W,
            "build_prototypes: embeddings not at label resolution");
    masks[i].resize(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c) {
      auto& m = masks[i][static_cast<size_t>(c)];
      m.assign(labels[i].v.begin() + c * hw, labels[i].v.begin() + (c + 1) * hw);
      for (auto b : m) counts[i][static_cast<size_t>(c)] += b;
      set.present[i][static_cast<size_t>(c)] = counts[i][static_cast<size_t>(c)] > 0;
    }
  }

  // Batch-pooled vectors per class at each tap, with per-epoch memory fallback.
  std::vector<Tensor<T>> deep_rows(static_cast<size_t>(C));
  std::vector<Tensor<T>> batch_low_rows(static_cast<size_t>(C));
  for (int c = 0; c < C; ++c) {
    int64_t total = 0;
    Tensor<T> hsum, lsum;
    for (size_t i = 0; i < B; ++i) {
      if (!counts[i][static_cast<size_t>(c)]) continue;
      auto hs = masked_sum(highs[i], masks[i][static_cast<size_t>(c)]);
      auto ls = masked_sum(lows[i], masks[i][static_cast<size_t>(c)]);
      hsum = hsum.defined() ? add(hsum, hs) : hs;
      lsum = lsum.defined() ? add(lsum, ls) : ls;
      total += counts[i][static_cast<size_t>(c)];
    }
    if (total > 0) {
      deep_rows[static_cast<size_t>(c)] = scale(hsum, T(1) / static_cast<T>(total));
      batch_low_rows[static_cast<size_t>(c)] = scale(lsum, T(1) / static_cast<T>(total));
      if (memory)
        memory->accumulate(c, deep_rows[static_cast<size_t>(c)].data(), batch_low_rows[static_cast<size_t>(c)].data());
    } else if (memory && memory->has(c)) {
      deep_rows[static_cast<size_t>(c)] = Tensor<T>::from_data({dh}, memory->high(c));
      batch_low_rows[static_cast<size_t>(c)] = Tensor<T>::from_data({dl}, memory->low(c));
    } else {
      deep_rows[static_cast<size_t>(c)] = Tensor<T>::zeros({dh});
      batch_low_rows[static_cast<size_t>(c)] = Tensor<T>::zeros({dl});
    }
  }
  set.deep = stack_rows(deep_rows);

  for (size_t i = 0; i < B; ++i) {
    std::vector<Tensor<T>> srow(static_cast<size_t>(C)), crow(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c) {
      Tensor<T> s;
      if (granularity == PrototypeGranularity::BatchWise) {
        s = batch_low_rows[static_cast<size_t>(c)];
      } else if (counts[i][static_cast<size_t>(c)] > 0) {
        s = scale(masked_sum(lows[i], masks[i][static_cast<size_t>(c)]),
                  T(1) / static_cast<T>(counts[i][static_cast<size_t>(c)]));
      } else {
        s = batch_low_rows[static_cast<size_t>(c)];  // class absent here: batch-level fallback
      }
      srow[static_cast<size_t>(c)] = s;
      crow[static_cast<size_t>(c)] = concat_vec(deep_rows[static_cast<size_t>(c)], s);
    }
    set.shallow.push_back(stack_rows(srow));
    set.concat.push_back(stack_rows(crow));
  }
  return set;
}

// Per-pixel relation vector: ReLU of cosine similarity to each class
// prototype, L1-normalized over classes. Gradients flow into both the pixel
// embeddings and the prototypes.
template <class T>
Tensor<T> relation_map(const Tensor<T>& embeds, const Tensor<T>& protos, T eps_norm = T(1e-8),
                       T eps_l1 = T(1e-8)) {
  require(embeds.shape().size() == 3, "relation_map expects embeds [D,H,W]");
  require(protos.shape().size() == 2, "relation_map expects protos [C,D]");
  int D = embeds.dim(0), H = embeds.dim(1), W = embeds.dim(2);
  int C = protos.dim(0);
  require(protos.dim(1) == D, "relation_map: embedding dim mismatch");
  int64_t hw = static_cast<int64_t>(H) * W;

  auto ed = embeds.data();
  auto pd = protos.data();
  std::vector<double> proto_norm(static_cast<size_t>(C));
  for (int c = 0; c < C; ++c) {
    double n = 0;
    for (int d = 0; d < D; ++d) n += static_cast<double>(pd[c * D + d]) * pd[c * D + d];
    proto_norm[static_cast<size_t>(c)] = std::sqrt(n);
  }

  auto sims = std::make_shared<std::vector<T>>(static_cast<size_t>(C * hw));
  auto fnorm = std::make_shared<std::vector<double>>(static_cast<size_t>(hw));
  auto pnorm = std::make_shared<std::vector<double>>(proto_norm);
  std::vector<T> out(static_cast<size_t>(C * hw));

  for (int64_t m = 0; m < hw; ++m) {
    double nf = 0;
    for (int d = 0; d < D; ++d) {
      double x = ed[d * hw + m];
      nf += x * x;
    }
    nf = std::sqrt(nf);
    (*fnorm)[static_cast<size_t>(m)] = nf;
    double S = 0;
    for (int c = 0; c < C; ++c) {
      double s = 0;
      if (nf >= static_cast<double>(eps_norm) && proto_norm[static_cast<size_t>(c)] >= static_cast<double>(eps_norm)) {
        double dot = 0;
        for (int d = 0; d < D; ++d) dot += static_cast<double>(ed[d * hw + m]) * pd[c * D + d];
        s = dot / (nf * proto_norm[static_cast<size_t>(c)]);
      }
      (*sims)[static_cast<size_t>(c * hw + m)] = static_cast<T>(s);
      if (s > 0) S += s;
    }
    for (int c = 0; c < C; ++c) {
      double u = std::max(0.0, static_cast<double>((*sims)[static_cast<size_t>(c * hw + m)]));
      out[static_cast<size_t>(c * hw + m)] = static_cast<T>(u / (S + static_cast<double>(eps_l1)));
    }
  }

  auto pe = embeds.node(), pp = protos.node();
  return detail::make_op<T>(
      {C, H, W}, std::move(out), {pe, pp},
      [pe, pp, sims, fnorm, pnorm, C, D, hw, eps_norm, eps_l1](detail::Node<T>& self) {
        for (int64_t m = 0; m < hw; ++m) {
          double nf = (*fnorm)[static_cast<size_t>(m)];
          double S = 0, gdotu = 0;
          for (int c = 0; c < C; ++c) {
            double u = std::max(0.0, static_cast<double>((*sims)[static_cast<size_t>(c * hw + m)]));
            S += u;
            gdotu += static_cast<double>(self.grad[static_cast<size_t>(c * hw + m)]) * u;
          }
          double denom = S + static_cast<double>(eps_l1);
          for (int c = 0; c < C; ++c) {
            double s = (*sims)[static_cast<size_t>(c * hw + m)];
            if (s <= 0) continue;  // ReLU gate
            double nz = (*pnorm)[static_cast<size_t>(c)];
            if (nf < static_cast<double>(eps_norm) || nz < static_cast<double>(eps_norm)) continue;
            double gu = static_cast<double>(self.grad[static_cast<size_t>(c * hw + m)]) / denom -
                        gdotu / (denom * denom);
            if (gu == 0.0) continue;
            if (pe->requires_grad) {
              auto ge = pe->grad_span();
              for (int d = 0; d < D; ++d) {
                double fd = pe->value[static_cast<size_t>(d * hw + m)];
                double zd = pp->value[static_cast<size_t>(c * D + d)];
                ge[d * hw + m] += static_cast<T>(gu * (zd / (nf * nz) - s * fd / (nf * nf)));
              }
            }
            if (pp->requires_grad) {
              auto gp = pp->grad_span();
              for (int d = 0; d < D; ++d) {
                double fd = pe->value[static_cast<size_t>(d * hw + m)];
                double zd = pp->value[static_cast<size_t>(c * D + d)];
                gp[c * D + d] += static_cast<T>(gu * (fd / (nf * nz) - s * zd / (nz * nz)));
              }
            }
          }
        }
      });
}

// Prototype-refined prediction: softmax of logits modulated by the relation.
template <class T>
Tensor<T> refine_prediction(const Tensor<T>& logits, const Tensor<T>& relation) {
  require(logits.shape() == relation.shape(), "refine_prediction: shape mismatch");
  return softmax_channels(mul(logits, relation));
}

}  // namespace procns
