#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "procns/common.hpp"

namespace procns {

using BinMask = std::vector<uint8_t>;  // H*W, row-major, {0,1}

enum class ErosionKernel { Cross, Square };

inline int64_t mask_area(const BinMask& m) {
  int64_t a = 0;
  for (auto v : m) a += (v != 0);
  return a;
}

// Out-of-bounds counts as background, so erosion shrinks from image borders.
inline BinMask erode(const BinMask& m, int H, int W, ErosionKernel kernel, int ksize = 3) {
  require(ksize >= 1 && ksize % 2 == 1, "erosion kernel size must be odd");
  int r = ksize / 2;
  BinMask out(static_cast<size_t>(H) * W, 0);
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      if (!m[static_cast<size_t>(i) * W + j]) continue;
      bool keep = true;
      for (int di = -r; di <= r && keep; ++di) {
        for (int dj = -r; dj <= r && keep; ++dj) {
          if (kernel == ErosionKernel::Cross && di != 0 && dj != 0) continue;
          int ni = i + di, nj = j + dj;
          if (ni < 0 || ni >= H || nj < 0 || nj >= W || !m[static_cast<size_t>(ni) * W + nj]) keep = false;
        }
      }
      if (keep) out[static_cast<size_t>(i) * W + j] = 1;
    }
  }
  return out;
}

// Labels start at 1; 0 is background. Returns the number of components.
inline int connected_components(const BinMask& m, int H, int W, std::vector<int32_t>& labels,
                                int connectivity = 4) {
  require(connectivity == 4 || connectivity == 8, "connectivity must be 4 or 8");
  labels.assign(static_cast<size_t>(H) * W, 0);
  int count = 0;
  std::vector<int64_t> stack;
  const int dx4[4] = {1, -1, 0, 0}, dy4[4] = {0, 0, 1, -1};
  const int dx8[8] = {1, -1, 0, 0, 1, 1, -1, -1}, dy8[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  int nn = connectivity;
  const int* dx = connectivity == 4 ? dx4 : dx8;
  const int* dy = connectivity == 4 ? dy4 : dy8;
  for (int64_t p = 0; p < static_cast<int64_t>(H) * W; ++p) {
    if (!m[static_cast<size_t>(p)] || labels[static_cast<size_t>(p)]) continue;
    ++count;
    stack.push_back(p);
    labels[static_cast<size_t>(p)] = count;
    while (!stack.empty()) {
      int64_t q = stack.back();
      stack.pop_back();
      int i = static_cast<int>(q / W), j = static_cast<int>(q % W);
      for (int k = 0; k < nn; ++k) {
        int ni = i + dx[k], nj = j + dy[k];
        if (ni < 0 || ni >= H || nj < 0 || nj >= W) continue;
        int64_t np = static_cast<int64_t>(ni) * W + nj;
        if (m[static_cast<size_t>(np)] && !labels[static_cast<size_t>(np)]) {
          labels[static_cast<size_t>(np)] = count;
          stack.push_back(np);
        }
      }
    }
  }
  return count;
}

struct Rect {
  int r0 = 0, c0 = 0, h = 0, w = 0;
  int64_t area() const { return static_cast<int64_t>(h) * w; }
  bool empty() const { return h <= 0 || w <= 0; }
};

// Exact maximum-area axis-aligned rectangle inside the mask, via the
// largest-rectangle-in-histogram scan. First maximum in scan order wins.
inline Rect largest_inscribed_rect(const BinMask& m, int H, int W) {
  Rect best;
  std::vector<int> heights(static_cast<size_t>(W) + 1, 0);
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j)
      heights[static_cast<size_t>(j)] = m[static_cast<size_t>(i) * W + j] ? heights[static_cast<size_t>(j)] + 1 : 0;
    heights[static_cast<size_t>(W)] = 0;
    std::vector<int> stack;
    for (int j = 0; j <= W; ++j) {
      while (!stack.empty() && heights[static_cast<size_t>(stack.back())] > heights[static_cast<size_t>(j)]) {
        int h = heights[static_cast<size_t>(stack.back())];
        stack.pop_back();
        int left = stack.empty() ? 0 : stack.back() + 1;
        int w = j - left;
        if (static_cast<int64_t>(h) * w > best.area()) best = {i - h + 1, left, h, w};
      }
      stack.push_back(j);
    }
  }
  return best;
}

namespace detail {

// Crossing number A(p): 0->1 transitions around the 8-neighborhood in the
// order N, NE, E, SE, S, SW, W, NW (cyclic).
inline int crossing_number(const BinMask& m, int H, int W, int i, int j) {
  auto get = [&](int a, int b) -> int {
    if (a < 0 || a >= H || b < 0 || b >= W) return 0;
    return m[static_cast<size_t>(a) * W + b] ? 1 : 0;
  };
  int p[8] = {get(i - 1, j),     get(i - 1, j + 1), get(i, j + 1),     get(i + 1, j + 1),
              get(i + 1, j),     get(i + 1, j - 1), get(i, j - 1),     get(i - 1, j - 1)};
  int a = 0;
  for (int k = 0; k < 8; ++k) a += (p[k] == 0 && p[(k + 1) % 8] == 1);
  return a;
}

inline int neighbor_count(const BinMask& m, int H, int W, int i, int j) {
  int b = 0;
  for (int di = -1; di <= 1; ++di)
    for (int dj = -1; dj <= 1; ++dj) {
      if (!di && !dj) continue;
      int ni = i + di, nj = j + dj;
      if (ni < 0 || ni >= H || nj < 0 || nj >= W) continue;
      b += m[static_cast<size_t>(ni) * W + nj] ? 1 : 0;
    }
  return b;
}

inline bool in_full_2x2(const BinMask& m, int H, int W, int i, int j) {
  auto get = [&](int a, int b) -> bool {
    return a >= 0 && a < H && b >= 0 && b < W && m[static_cast<size_t>(a) * W + b];
  };
  for (int di = -1; di <= 0; ++di)
    for (int dj = -1; dj <= 0; ++dj)
      if (get(i + di, j + dj) && get(i + di + 1, j + dj) && get(i + di, j + dj + 1) &&
          get(i + di + 1, j + dj + 1))
        return true;
  return false;
}

}  // namespace detail

// Two-subiteration morphological thinning followed by a cleanup sweep that
// removes residual 2x2 blocks where deletion keeps local connectivity.
inline BinMask thin_skeleton(const BinMask& input, int H, int W) {
  BinMask m = input;
  auto get = [&](int i, int j) -> int {
    if (i < 0 || i >= H || j < 0 || j >= W) return 0;
    return m[static_cast<size_t>(i) * W + j] ? 1 : 0;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (int sub = 0; sub < 2; ++sub) {
      std::vector<int64_t> kill;
      for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
          if (!m[static_cast<size_t>(i) * W + j]) continue;
          int B = detail::neighbor_count(m, H, W, i, j);
          if (B < 2 || B > 6) continue;
          if (detail::crossing_number(m, H, W, i, j) != 1) continue;
          int p2 = get(i - 1, j), p4 = get(i, j + 1), p6 = get(i + 1, j), p8 = get(i, j - 1);
          if (sub == 0) {
            if (p2 * p4 * p6 != 0 || p4 * p6 * p8 != 0) continue;
          } else {
            if (p2 * p4 * p8 != 0 || p2 * p6 * p8 != 0) continue;
          }
          kill.push_back(static_cast<int64_t>(i) * W + j);
        }
      }
      if (!kill.empty()) changed = true;
      for (auto p : kill) m[static_cast<size_t>(p)] = 0;
    }
  }
  // Sequential cleanup: drop pixels completing a 2x2 block when their crossing
  // number permits removal without splitting the local skeleton.
  changed = true;
  while (changed) {
    changed = false;
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        if (!m[static_cast<size_t>(i) * W + j]) continue;
        if (!detail::in_full_2x2(m, H, W, i, j)) continue;
        if (detail::crossing_number(m, H, W, i, j) != 1) continue;
        m[static_cast<size_t>(i) * W + j] = 0;
        changed = true;
      }
  }
  return m;
}

inline void gaussian_blur(std::vector<float>& plane, int H, int W, double sigma) {
  if (sigma <= 0) return;
  int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<size_t>(2 * r + 1));
  double s = 0;
  for (int i = -r; i <= r; ++i) {
    k[static_cast<size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    s += k[static_cast<size_t>(i + r)];
  }
  for (auto& x : k) x /= s;
  std::vector<float> tmp(plane.size());
  auto clampi = [](int x, int n) { return x < 0 ? 0 : (x >= n ? n - 1 : x); };
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double acc = 0;
      for (int d = -r; d <= r; ++d) acc += k[static_cast<size_t>(d + r)] * plane[static_cast<size_t>(i) * W + clampi(j + d, W)];
      tmp[static_cast<size_t>(i) * W + j] = static_cast<float>(acc);
    }
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double acc = 0;
      for (int d = -r; d <= r; ++d) acc += k[static_cast<size_t>(d + r)] * tmp[static_cast<size_t>(clampi(i + d, H)) * W + j];
      plane[static_cast<size_t>(i) * W + j] = static_cast<float>(acc);
    }
}

namespace detail {

// 1-D squared-distance transform (lower envelope of parabolas).
inline void dt1d(const std::vector<double>& f, std::vector<double>& d) {
  int n = static_cast<int>(f.size());
  d.assign(static_cast<size_t>(n), 0.0);
  std::vector<int> v(static_cast<size_t>(n), 0);
  std::vector<double> z(static_cast<size_t>(n) + 1, 0.0);
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double sden = 2.0 * q - 2.0 * v[static_cast<size_t>(k)];
    double s = (f[static_cast<size_t>(q)] + static_cast<double>(q) * q -
                (f[static_cast<size_t>(v[static_cast<size_t>(k)])] +
                 static_cast<double>(v[static_cast<size_t>(k)]) * v[static_cast<size_t>(k)])) /
               sden;
    while (s <= z[static_cast<size_t>(k)]) {
      --k;
      sden = 2.0 * q - 2.0 * v[static_cast<size_t>(k)];
      s = (f[static_cast<size_t>(q)] + static_cast<double>(q) * q -
           (f[static_cast<size_t>(v[static_cast<size_t>(k)])] +
            static_cast<double>(v[static_cast<size_t>(k)]) * v[static_cast<size_t>(k)])) /
          sden;
    }
    ++k;
    v[static_cast<size_t>(k)] = q;
    z[static_cast<size_t>(k)] = s;
    z[static_cast<size_t>(k) + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<size_t>(k) + 1] < q) ++k;
    double dq = q - v[static_cast<size_t>(k)];
    d[static_cast<size_t>(q)] = dq * dq + f[static_cast<size_t>(v[static_cast<size_t>(k)])];
  }
}

}  // namespace detail

// Squared Euclidean distance to the nearest ON pixel; infinity when the mask
// is empty.
inline std::vector<double> edt_squared(const BinMask& m, int H, int W) {
  const double INF = 1e18;
  std::vector<double> g(static_cast<size_t>(H) * W);
  std::vector<double> col(static_cast<size_t>(H)), out(static_cast<size_t>(H));
  for (int j = 0; j < W; ++j) {
    for (int i = 0; i < H; ++i) col[static_cast<size_t>(i)] = m[static_cast<size_t>(i) * W + j] ? 0.0 : INF;
    detail::dt1d(col, out);
    for (int i = 0; i < H; ++i) g[static_cast<size_t>(i) * W + j] = out[static_cast<size_t>(i)];
  }
  std::vector<double> row(static_cast<size_t>(W)), res(static_cast<size_t>(W));
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) row[static_cast<size_t>(j)] = g[static_cast<size_t>(i) * W + j];
    detail::dt1d(row, res);
    for (int j = 0; j < W; ++j) g[static_cast<size_t>(i) * W + j] = res[static_cast<size_t>(j)];
  }
  return g;
}

inline void stamp_disk(BinMask& m, int H, int W, int ci, int cj, double radius) {
  int r = static_cast<int>(std::ceil(radius));
  for (int i = std::max(0, ci - r); i <= std::min(H - 1, ci + r); ++i)
    for (int j = std::max(0, cj - r); j <= std::min(W - 1, cj + r); ++j) {
      double d2 = static_cast<double>(i - ci) * (i - ci) + static_cast<double>(j - cj) * (j - cj);
      if (d2 <= radius * radius) m[static_cast<size_t>(i) * W + j] = 1;
    }
}

}  // namespace procns
