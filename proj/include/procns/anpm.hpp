#pragma once

#include <vector>

#include "procns/image.hpp"
#include "procns/ops.hpp"

namespace procns {

struct RegionMasks {
  ClassMask reliable;  // M_r: one-hot prediction AND previous label
  ClassMask noisy;     // M_n: symmetric difference
};

// Set-algebra noise perception: agreement between the one-hot prediction and
// the previous denoised label is reliable, disagreement is noisy. Argmax ties
// break to the lowest class index.
template <class T>
RegionMasks extract_masks(const std::vector<T>& pred, const ClassMask& prev) {
  int64_t hw = prev.plane_size();
  require(static_cast<int64_t>(pred.size()) == static_cast<int64_t>(prev.C) * hw, "extract_masks: size mismatch");
  RegionMasks out{ClassMask(prev.C, prev.H, prev.W), ClassMask(prev.C, prev.H, prev.W)};
  for (int64_t m = 0; m < hw; ++m) {
    int best = 0;
    T bv = pred[static_cast<size_t>(m)];
    for (int c = 1; c < prev.C; ++c) {
      T t = pred[static_cast<size_t>(c * hw + m)];
      if (t > bv) {
        bv = t;
        best = c;
      }
    }
    for (int c = 0; c < prev.C; ++c) {
      uint8_t o = (c == best) ? 1 : 0;
      uint8_t y = prev.v[static_cast<size_t>(c * hw + m)];
      out.reliable.v[static_cast<size_t>(c * hw + m)] = o & y;
      out.noisy.v[static_cast<size_t>(c * hw + m)] = o ^ y;
    }
  }
  return out;
}

// Label support only shrinks: keep a label entry only where it was judged
// reliable.
inline ClassMask update_denoised_label(const ClassMask& m_r, const ClassMask& prev) {
  require(m_r.C == prev.C && m_r.H == prev.H && m_r.W == prev.W, "update_denoised_label: shape mismatch");
  ClassMask out(prev.C, prev.H, prev.W);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = m_r.v[i] & prev.v[i];
  return out;
}

template <class T>
struct ReassignResult {
  Tensor<T> p_noisy;      // gradient-carrying masked prediction
  std::vector<T> y_soft;  // constant target: masked refined prediction
};

// Masked-region reassignment: the raw prediction restricted to noisy entries
// is supervised by the refined prediction there, which acts as a constant
// target.
template <class T>
ReassignResult<T> reassign_noisy(const ClassMask& m_n, const Tensor<T>& p, const Tensor<T>& p_hat) {
  require(p.shape() == p_hat.shape(), "reassign_noisy: prediction shape mismatch");
  require(p.size() == static_cast<int64_t>(m_n.v.size()), "reassign_noisy: mask shape mismatch");
  ReassignResult<T> out;
  out.p_noisy = mask_mul(p, m_n.v);
  out.y_soft.assign(static_cast<size_t>(p.size()), T(0));
  auto hd = p_hat.data();
  for (size_t i = 0; i < out.y_soft.size(); ++i)
    if (m_n.v[i]) out.y_soft[i] = hd[i];
  return out;
}

}  // namespace procns
