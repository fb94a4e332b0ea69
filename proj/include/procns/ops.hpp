#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "procns/tensor.hpp"

namespace procns {

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto n = a.size();
  std::vector<T> out(static_cast<size_t>(n));
  auto da = a.data(), db = b.data();
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = da[i] + db[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {pa, pb}, [pa, pb](detail::Node<T>& self) {
    if (pa->requires_grad) {
      auto g = pa->grad_span();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      auto g = pb->grad_span();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch");
  auto n = a.size();
  std::vector<T> out(static_cast<size_t>(n));
  auto da = a.data(), db = b.data();
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = da[i] - db[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {pa, pb}, [pa, pb](detail::Node<T>& self) {
    if (pa->requires_grad) {
      auto g = pa->grad_span();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      auto g = pb->grad_span();
      for (size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  auto n = a.size();
  std::vector<T> out(static_cast<size_t>(n));
  auto da = a.data(), db = b.data();
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = da[i] * db[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {pa, pb}, [pa, pb](detail::Node<T>& self) {
    if (pa->requires_grad) {
      auto g = pa->grad_span();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      auto g = pb->grad_span();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  auto n = a.size();
  std::vector<T> out(static_cast<size_t>(n));
  auto da = a.data();
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = da[i] * s;
  auto pa = a.node();
  return detail::make_op<T>(a.shape(), std::move(out), {pa}, [pa, s](detail::Node<T>& self) {
    auto g = pa->grad_span();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  auto n = a.size();
  std::vector<T> out(static_cast<size_t>(n));
  auto da = a.data();
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = da[i] > T(0) ? da[i] : T(0);
  auto pa = a.node();
  return detail::make_op<T>(a.shape(), std::move(out), {pa}, [pa](detail::Node<T>& self) {
    auto g = pa->grad_span();
    for (size_t i = 0; i < g.size(); ++i)
      if (pa->value[i] > T(0)) g[i] += self.grad[i];
  });
}

// Softmax over the leading (class) axis of a [C,H,W] tensor.
template <class T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  require(x.shape().size() == 3, "softmax_channels expects [C,H,W]");
  int C = x.dim(0);
  int64_t hw = x.size() / C;
  std::vector<T> out(static_cast<size_t>(x.size()));
  auto dx = x.data();
  for (int64_t m = 0; m < hw; ++m) {
    T mx = dx[m];
    for (int c = 1; c < C; ++c) mx = std::max(mx, dx[c * hw + m]);
    T sum = T(0);
    for (int c = 0; c < C; ++c) {
      T e = std::exp(dx[c * hw + m] - mx);
      out[static_cast<size_t>(c * hw + m)] = e;
      sum += e;
    }
    for (int c = 0; c < C; ++c) out[static_cast<size_t>(c * hw + m)] /= sum;
  }
  auto px = x.node();
  auto saved = std::make_shared<std::vector<T>>(out);
  return detail::make_op<T>(x.shape(), std::move(out), {px}, [px, saved, C, hw](detail::Node<T>& self) {
    auto g = px->grad_span();
    const auto& y = *saved;
    for (int64_t m = 0; m < hw; ++m) {
      T dot = T(0);
      for (int c = 0; c < C; ++c) dot += self.grad[static_cast<size_t>(c * hw + m)] * y[static_cast<size_t>(c * hw + m)];
      for (int c = 0; c < C; ++c) {
        auto i = static_cast<size_t>(c * hw + m);
        g[i] += y[i] * (self.grad[i] - dot);
      }
    }
  });
}

// [C,H,W] -> [H,W], summing over classes.
template <class T>
Tensor<T> channel_sum(const Tensor<T>& x) {
  require(x.shape().size() == 3, "channel_sum expects [C,H,W]");
  int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  int64_t hw = static_cast<int64_t>(H) * W;
  std::vector<T> out(static_cast<size_t>(hw), T(0));
  auto dx = x.data();
  for (int c = 0; c < C; ++c)
    for (int64_t m = 0; m < hw; ++m) out[static_cast<size_t>(m)] += dx[c * hw + m];
  auto px = x.node();
  return detail::make_op<T>({H, W}, std::move(out), {px}, [px, C, hw](detail::Node<T>& self) {
    auto g = px->grad_span();
    for (int c = 0; c < C; ++c)
      for (int64_t m = 0; m < hw; ++m) g[c * hw + m] += self.grad[static_cast<size_t>(m)];
  });
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T s = T(0);
  for (auto v : x.data()) s += v;
  auto px = x.node();
  return detail::make_op<T>({}, {s}, {px}, [px](detail::Node<T>& self) {
    auto g = px->grad_span();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

// Concatenate [Ci,H,W] tensors along the channel axis.
template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "concat_channels: empty input");
  int H = parts[0].dim(1), W = parts[0].dim(2);
  int Ctot = 0;
  for (auto& p : parts) {
    require(p.shape().size() == 3 && p.dim(1) == H && p.dim(2) == W, "concat_channels: spatial mismatch");
    Ctot += p.dim(0);
  }
  int64_t hw = static_cast<int64_t>(H) * W;
  std::vector<T> out(static_cast<size_t>(Ctot * hw));
  std::vector<std::shared_ptr<detail::Node<T>>> parents;
  std::vector<int> offsets;
  int off = 0;
  for (auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.begin() + static_cast<int64_t>(off) * hw);
    parents.push_back(p.node());
    offsets.push_back(off);
    off += p.dim(0);
  }
  auto pcopy = parents;
  return detail::make_op<T>({Ctot, H, W}, std::move(out), std::move(parents),
                            [pcopy, offsets, hw](detail::Node<T>& self) {
                              for (size_t k = 0; k < pcopy.size(); ++k) {
                                if (!pcopy[k]->requires_grad) continue;
                                auto g = pcopy[k]->grad_span();
                                int64_t base = static_cast<int64_t>(offsets[k]) * hw;
                                for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[static_cast<size_t>(base) + i];
                              }
                            });
}

// Concatenate 1-D vectors.
template <class T>
Tensor<T> concat_vec(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape().size() == 1 && b.shape().size() == 1, "concat_vec expects 1-D tensors");
  int na = a.dim(0), nb = b.dim(0);
  std::vector<T> out(static_cast<size_t>(na + nb));
  std::copy(a.data().begin(), a.data().end(), out.begin());
  std::copy(b.data().begin(), b.data().end(), out.begin() + na);
  auto pa = a.node(), pb = b.node();
  return detail::make_op<T>({na + nb}, std::move(out), {pa, pb}, [pa, pb, na, nb](detail::Node<T>& self) {
    if (pa->requires_grad) {
      auto g = pa->grad_span();
      for (int i = 0; i < na; ++i) g[i] += self.grad[static_cast<size_t>(i)];
    }
    if (pb->requires_grad) {
      auto g = pb->grad_span();
      for (int i = 0; i < nb; ++i) g[i] += self.grad[static_cast<size_t>(na + i)];
    }
  });
}

// Stack N vectors of equal length D into [N,D].
template <class T>
Tensor<T> stack_rows(const std::vector<Tensor<T>>& rows) {
  require(!rows.empty(), "stack_rows: empty input");
  int D = rows[0].dim(0);
  std::vector<T> out;
  out.reserve(rows.size() * static_cast<size_t>(D));
  std::vector<std::shared_ptr<detail::Node<T>>> parents;
  for (auto& r : rows) {
    require(r.shape().size() == 1 && r.dim(0) == D, "stack_rows: length mismatch");
    out.insert(out.end(), r.data().begin(), r.data().end());
    parents.push_back(r.node());
  }
  auto pcopy = parents;
  return detail::make_op<T>({static_cast<int>(rows.size()), D}, std::move(out), std::move(parents),
                            [pcopy, D](detail::Node<T>& self) {
                              for (size_t k = 0; k < pcopy.size(); ++k) {
                                if (!pcopy[k]->requires_grad) continue;
                                auto g = pcopy[k]->grad_span();
                                for (int i = 0; i < D; ++i) g[i] += self.grad[k * static_cast<size_t>(D) + static_cast<size_t>(i)];
                              }
                            });
}

// Multiply every channel of x[C,H,W] by a fixed spatial weight field w[H*W].
template <class T>
Tensor<T> mul_spatial(const Tensor<T>& x, std::vector<T> w) {
  require(x.shape().size() == 3, "mul_spatial expects [C,H,W]");
  int C = x.dim(0);
  int64_t hw = x.size() / C;
  require(static_cast<int64_t>(w.size()) == hw, "mul_spatial: weight size mismatch");
  std::vector<T> out(static_cast<size_t>(x.size()));
  auto dx = x.data();
  for (int c = 0; c < C; ++c)
    for (int64_t m = 0; m < hw; ++m) out[static_cast<size_t>(c * hw + m)] = dx[c * hw + m] * w[static_cast<size_t>(m)];
  auto px = x.node();
  auto ws = std::make_shared<std::vector<T>>(std::move(w));
  return detail::make_op<T>(x.shape(), std::move(out), {px}, [px, ws, C, hw](detail::Node<T>& self) {
    auto g = px->grad_span();
    for (int c = 0; c < C; ++c)
      for (int64_t m = 0; m < hw; ++m)
        g[c * hw + m] += self.grad[static_cast<size_t>(c * hw + m)] * (*ws)[static_cast<size_t>(m)];
  });
}

// Elementwise product with a fixed {0,1} mask of identical layout.
template <class T>
Tensor<T> mask_mul(const Tensor<T>& x, const std::vector<uint8_t>& mask) {
  require(static_cast<int64_t>(mask.size()) == x.size(), "mask_mul: mask size mismatch");
  std::vector<T> out(static_cast<size_t>(x.size()));
  auto dx = x.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = mask[i] ? dx[i] : T(0);
  auto px = x.node();
  auto ms = std::make_shared<std::vector<uint8_t>>(mask);
  return detail::make_op<T>(x.shape(), std::move(out), {px}, [px, ms](detail::Node<T>& self) {
    auto g = px->grad_span();
    for (size_t i = 0; i < g.size(); ++i)
      if ((*ms)[i]) g[i] += self.grad[i];
  });
}

// Sum of embedding vectors over masked pixels: x[D,H,W], mask[H*W] -> [D].
template <class T>
Tensor<T> masked_sum(const Tensor<T>& x, const std::vector<uint8_t>& mask) {
  require(x.shape().size() == 3, "masked_sum expects [D,H,W]");
  int D = x.dim(0);
  int64_t hw = x.size() / D;
  require(static_cast<int64_t>(mask.size()) == hw, "masked_sum: mask size mismatch");
  std::vector<T> out(static_cast<size_t>(D), T(0));
  auto dx = x.data();
  for (int d = 0; d < D; ++d) {
    T s = T(0);
    for (int64_t m = 0; m < hw; ++m)
      if (mask[static_cast<size_t>(m)]) s += dx[d * hw + m];
    out[static_cast<size_t>(d)] = s;
  }
  auto px = x.node();
  auto ms = std::make_shared<std::vector<uint8_t>>(mask);
  return detail::make_op<T>({D}, std::move(out), {px}, [px, ms, D, hw](detail::Node<T>& self) {
    auto g = px->grad_span();
    for (int d = 0; d < D; ++d) {
      T gd = self.grad[static_cast<size_t>(d)];
      for (int64_t m = 0; m < hw; ++m)
        if ((*ms)[static_cast<size_t>(m)]) g[d * hw + m] += gd;
    }
  });
}

namespace detail {

// Sliding-window sums via a summed-area table; windows truncate at borders.
// Excludes the center pixel. Linear and self-adjoint, so backward reapplies it.
template <class T>
void window_sum_exclude_center(const T* in, T* out, int C, int H, int W, int radius) {
  std::vector<double> sat(static_cast<size_t>((H + 1) * (W + 1)));
  for (int c = 0; c < C; ++c) {
    const T* plane = in + static_cast<int64_t>(c) * H * W;
    T* oplane = out + static_cast<int64_t>(c) * H * W;
    for (int j = 0; j <= W; ++j) sat[static_cast<size_t>(j)] = 0.0;
    for (int i = 1; i <= H; ++i) {
      sat[static_cast<size_t>(i * (W + 1))] = 0.0;
      for (int j = 1; j <= W; ++j) {
        sat[static_cast<size_t>(i * (W + 1) + j)] = static_cast<double>(plane[(i - 1) * W + (j - 1)]) +
                                                    sat[static_cast<size_t>((i - 1) * (W + 1) + j)] +
                                                    sat[static_cast<size_t>(i * (W + 1) + j - 1)] -
                                                    sat[static_cast<size_t>((i - 1) * (W + 1) + j - 1)];
      }
    }
    for (int i = 0; i < H; ++i) {
      int r0 = std::max(0, i - radius), r1 = std::min(H - 1, i + radius);
      for (int j = 0; j < W; ++j) {
        int c0 = std::max(0, j - radius), c1 = std::min(W - 1, j + radius);
        double s = sat[static_cast<size_t>((r1 + 1) * (W + 1) + c1 + 1)] -
                   sat[static_cast<size_t>(r0 * (W + 1) + c1 + 1)] -
                   sat[static_cast<size_t>((r1 + 1) * (W + 1) + c0)] +
                   sat[static_cast<size_t>(r0 * (W + 1) + c0)];
        oplane[i * W + j] = static_cast<T>(s - static_cast<double>(plane[i * W + j]));
      }
    }
  }
}

}  // namespace detail

// out[c,m] = sum of x[c,n] over the (2r+1)^2 window around m, excluding m.
template <class T>
Tensor<T> window_sum_exclude_center(const Tensor<T>& x, int radius) {
  require(x.shape().size() == 3, "window_sum_exclude_center expects [C,H,W]");
  require(radius >= 1, "window radius must be >= 1");
  int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  std::vector<T> out(static_cast<size_t>(x.size()));
  detail::window_sum_exclude_center(x.data().data(), out.data(), C, H, W, radius);
  auto px = x.node();
  return detail::make_op<T>(x.shape(), std::move(out), {px}, [px, C, H, W, radius](detail::Node<T>& self) {
    std::vector<T> gin(self.grad.size());
    detail::window_sum_exclude_center(self.grad.data(), gin.data(), C, H, W, radius);
    auto g = px->grad_span();
    for (size_t i = 0; i < g.size(); ++i) g[i] += gin[i];
  });
}

}  // namespace procns
