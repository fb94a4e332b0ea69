#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>

#include "procns/tensor.hpp"

namespace procns {

namespace detail {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// col is [Cin*k*k, H*W]; same-padding with zeros, stride 1.
template <class T>
void im2col(const T* x, T* col, int Cin, int H, int W, int k) {
  int pad = k / 2;
  int64_t hw = static_cast<int64_t>(H) * W;
  for (int c = 0; c < Cin; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = col + (static_cast<int64_t>(c) * k * k + ki * k + kj) * hw;
        const T* plane = x + static_cast<int64_t>(c) * hw;
        for (int i = 0; i < H; ++i) {
          int si = i + ki - pad;
          if (si < 0 || si >= H) {
            std::fill(row + static_cast<int64_t>(i) * W, row + static_cast<int64_t>(i + 1) * W, T(0));
            continue;
          }
          for (int j = 0; j < W; ++j) {
            int sj = j + kj - pad;
            row[static_cast<int64_t>(i) * W + j] = (sj < 0 || sj >= W) ? T(0) : plane[static_cast<int64_t>(si) * W + sj];
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* col, T* gx, int Cin, int H, int W, int k) {
  int pad = k / 2;
  int64_t hw = static_cast<int64_t>(H) * W;
  for (int c = 0; c < Cin; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = col + (static_cast<int64_t>(c) * k * k + ki * k + kj) * hw;
        T* plane = gx + static_cast<int64_t>(c) * hw;
        for (int i = 0; i < H; ++i) {
          int si = i + ki - pad;
          if (si < 0 || si >= H) continue;
          for (int j = 0; j < W; ++j) {
            int sj = j + kj - pad;
            if (sj < 0 || sj >= W) continue;
            plane[static_cast<int64_t>(si) * W + sj] += row[static_cast<int64_t>(i) * W + j];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Same-padded stride-1 convolution: x[Cin,H,W], w[Cout,Cin,k,k], b[Cout] -> [Cout,H,W].
// The im2col buffer is rebuilt in backward instead of being kept alive.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require(x.shape().size() == 3 && w.shape().size() == 4, "conv2d expects x[Cin,H,W], w[Cout,Cin,k,k]");
  int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  int Cout = w.dim(0), k = w.dim(2);
  require(w.dim(1) == Cin && w.dim(3) == k, "conv2d: weight shape mismatch");
  require(k % 2 == 1, "conv2d: kernel size must be odd");
  require(b.shape().size() == 1 && b.dim(0) == Cout, "conv2d: bias shape mismatch");
  int64_t hw = static_cast<int64_t>(H) * W;
  int64_t kk = static_cast<int64_t>(Cin) * k * k;

  std::vector<T> col(static_cast<size_t>(kk * hw));
  detail::im2col(x.data().data(), col.data(), Cin, H, W, k);
  std::vector<T> out(static_cast<size_t>(Cout * hw));
  {
    Eigen::Map<const detail::MatRM<T>> Wm(w.data().data(), Cout, kk);
    Eigen::Map<const detail::MatRM<T>> Cm(col.data(), kk, hw);
    Eigen::Map<detail::MatRM<T>> Om(out.data(), Cout, hw);
    Om.noalias() = Wm * Cm;
    for (int o = 0; o < Cout; ++o) Om.row(o).array() += b.data()[o];
  }

  auto px = x.node(), pw = w.node(), pb = b.node();
  return detail::make_op<T>({Cout, H, W}, std::move(out), {px, pw, pb},
                            [px, pw, pb, Cin, H, W, Cout, k, hw, kk](detail::Node<T>& self) {
                              Eigen::Map<const detail::MatRM<T>> Gm(self.grad.data(), Cout, hw);
                              if (pb->requires_grad) {
                                auto gb = pb->grad_span();
                                for (int o = 0; o < Cout; ++o) gb[o] += Gm.row(o).sum();
                              }
                              if (pw->requires_grad) {
                                std::vector<T> col(static_cast<size_t>(kk * hw));
                                detail::im2col(px->value.data(), col.data(), Cin, H, W, k);
                                Eigen::Map<const detail::MatRM<T>> Cm(col.data(), kk, hw);
                                auto gw = pw->grad_span();
                                Eigen::Map<detail::MatRM<T>> Gw(gw.data(), Cout, kk);
                                Gw.noalias() += Gm * Cm.transpose();
                              }
                              if (px->requires_grad) {
                                std::vector<T> gcol(static_cast<size_t>(kk * hw));
                                Eigen::Map<const detail::MatRM<T>> Wm(pw->value.data(), Cout, kk);
                                Eigen::Map<detail::MatRM<T>> Gc(gcol.data(), kk, hw);
                                Gc.noalias() = Wm.transpose() * Gm;
                                auto gx = px->grad_span();
                                detail::col2im(gcol.data(), gx.data(), Cin, H, W, k);
                              }
                            });
}

// 2x2 max pooling, stride 2. Ties go to the first index in scan order.
template <class T>
Tensor<T> maxpool2(const Tensor<T>& x) {
  require(x.shape().size() == 3, "maxpool2 expects [C,H,W]");
  int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  require(H % 2 == 0 && W % 2 == 0, "maxpool2: spatial dims must be even, got " + shape_str(x.shape()));
  int Ho = H / 2, Wo = W / 2;
  int64_t ohw = static_cast<int64_t>(Ho) * Wo;
  std::vector<T> out(static_cast<size_t>(C * ohw));
  auto idx = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(C * ohw));
  auto dx = x.data();
  for (int c = 0; c < C; ++c) {
    const T* plane = dx.data() + static_cast<int64_t>(c) * H * W;
    for (int i = 0; i < Ho; ++i) {
      for (int j = 0; j < Wo; ++j) {
        int best = (2 * i) * W + 2 * j;
        T bv = plane[best];
        int cand[3] = {(2 * i) * W + 2 * j + 1, (2 * i + 1) * W + 2 * j, (2 * i + 1) * W + 2 * j + 1};
        for (int q : cand)
          if (plane[q] > bv) {
            bv = plane[q];
            best = q;
          }
        out[static_cast<size_t>(c * ohw + i * Wo + j)] = bv;
        (*idx)[static_cast<size_t>(c * ohw + i * Wo + j)] = best;
      }
    }
  }
  auto px = x.node();
  return detail::make_op<T>({C, Ho, Wo}, std::move(out), {px}, [px, idx, C, H, W, ohw](detail::Node<T>& self) {
    auto g = px->grad_span();
    for (int c = 0; c < C; ++c) {
      T* gplane = g.data() + static_cast<int64_t>(c) * H * W;
      for (int64_t m = 0; m < ohw; ++m)
        gplane[(*idx)[static_cast<size_t>(c * ohw + m)]] += self.grad[static_cast<size_t>(c * ohw + m)];
    }
  });
}

namespace detail {

// Half-pixel sample coordinate with edge clamp.
inline void bilinear_axis(int out_i, int in_n, int out_n, int& lo, int& hi, double& frac) {
  double src = (out_i + 0.5) * static_cast<double>(in_n) / out_n - 0.5;
  if (src < 0.0) src = 0.0;
  if (src > in_n - 1.0) src = in_n - 1.0;
  lo = static_cast<int>(std::floor(src));
  hi = std::min(lo + 1, in_n - 1);
  frac = src - lo;
}

}  // namespace detail

// Bilinear resize of [C,H,W] to [C,Ho,Wo], half-pixel centers, clamped edges.
template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int Ho, int Wo) {
  require(x.shape().size() == 3, "bilinear_resize expects [C,H,W]");
  int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  require(Ho >= 1 && Wo >= 1, "bilinear_resize: bad target size");
  int64_t ohw = static_cast<int64_t>(Ho) * Wo;
  std::vector<T> out(static_cast<size_t>(C * ohw));
  auto dx = x.data();
  for (int i = 0; i < Ho; ++i) {
    int r0, r1;
    double fi;
    detail::bilinear_axis(i, H, Ho, r0, r1, fi);
    for (int j = 0; j < Wo; ++j) {
      int c0, c1;
      double fj;
      detail::bilinear_axis(j, W, Wo, c0, c1, fj);
      for (int c = 0; c < C; ++c) {
        const T* p = dx.data() + static_cast<int64_t>(c) * H * W;
        double top = (1.0 - fj) * p[r0 * W + c0] + fj * p[r0 * W + c1];
        double bot = (1.0 - fj) * p[r1 * W + c0] + fj * p[r1 * W + c1];
        out[static_cast<size_t>(c * ohw + static_cast<int64_t>(i) * Wo + j)] = static_cast<T>((1.0 - fi) * top + fi * bot);
      }
    }
  }
  auto px = x.node();
  return detail::make_op<T>({C, Ho, Wo}, std::move(out), {px}, [px, C, H, W, Ho, Wo, ohw](detail::Node<T>& self) {
    auto g = px->grad_span();
    for (int i = 0; i < Ho; ++i) {
      int r0, r1;
      double fi;
      detail::bilinear_axis(i, H, Ho, r0, r1, fi);
      for (int j = 0; j < Wo; ++j) {
        int c0, c1;
        double fj;
        detail::bilinear_axis(j, W, Wo, c0, c1, fj);
        for (int c = 0; c < C; ++c) {
          T* gp = g.data() + static_cast<int64_t>(c) * H * W;
          T go = self.grad[static_cast<size_t>(c * ohw + static_cast<int64_t>(i) * Wo + j)];
          gp[r0 * W + c0] += static_cast<T>((1.0 - fi) * (1.0 - fj)) * go;
          gp[r0 * W + c1] += static_cast<T>((1.0 - fi) * fj) * go;
          gp[r1 * W + c0] += static_cast<T>(fi * (1.0 - fj)) * go;
          gp[r1 * W + c1] += static_cast<T>(fi * fj) * go;
        }
      }
    }
  });
}

// Per-channel normalization over spatial dims with learned affine terms.
template <class T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  require(x.shape().size() == 3, "instance_norm expects [C,H,W]");
  int C = x.dim(0);
  int64_t hw = x.size() / C;
  require(gamma.dim(0) == C && beta.dim(0) == C, "instance_norm: affine shape mismatch");
  std::vector<T> out(static_cast<size_t>(x.size()));
  auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(C));
  auto invstd = std::make_shared<std::vector<T>>(static_cast<size_t>(C));
  auto dx = x.data();
  for (int c = 0; c < C; ++c) {
    const T* p = dx.data() + c * hw;
    double mu = 0.0;
    for (int64_t m = 0; m < hw; ++m) mu += p[m];
    mu /= static_cast<double>(hw);
    double var = 0.0;
    for (int64_t m = 0; m < hw; ++m) {
      double d = p[m] - mu;
      var += d * d;
    }
    var /= static_cast<double>(hw);
    T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    (*mean)[static_cast<size_t>(c)] = static_cast<T>(mu);
    (*invstd)[static_cast<size_t>(c)] = is;
    T gc = gamma.data()[c], bc = beta.data()[c];
    for (int64_t m = 0; m < hw; ++m)
      out[static_cast<size_t>(c * hw + m)] = (p[m] - static_cast<T>(mu)) * is * gc + bc;
  }
  auto px = x.node(), pg = gamma.node(), pb = beta.node();
  return detail::make_op<T>(x.shape(), std::move(out), {px, pg, pb},
                            [px, pg, pb, mean, invstd, C, hw](detail::Node<T>& self) {
                              for (int c = 0; c < C; ++c) {
                                const T* xv = px->value.data() + c * hw;
                                const T* go = self.grad.data() + c * hw;
                                T mu = (*mean)[static_cast<size_t>(c)], is = (*invstd)[static_cast<size_t>(c)];
                                double gsum = 0.0, gxhat = 0.0;
                                for (int64_t m = 0; m < hw; ++m) {
                                  double xh = (xv[m] - mu) * is;
                                  gsum += go[m];
                                  gxhat += go[m] * xh;
                                }
                                if (pg->requires_grad) pg->grad_span()[c] += static_cast<T>(gxhat);
                                if (pb->requires_grad) pb->grad_span()[c] += static_cast<T>(gsum);
                                if (px->requires_grad) {
                                  auto gx = px->grad_span();
                                  T gc = pg->value[static_cast<size_t>(c)];
                                  double mg = gsum / static_cast<double>(hw);
                                  double mgx = gxhat / static_cast<double>(hw);
                                  for (int64_t m = 0; m < hw; ++m) {
                                    double xh = (xv[m] - mu) * is;
                                    gx[c * hw + m] += static_cast<T>(gc * is * (go[m] - mg - xh * mgx));
                                  }
                                }
                              }
                            });
}

}  // namespace procns
