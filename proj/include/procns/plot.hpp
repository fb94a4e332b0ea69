#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "procns/png_io.hpp"

namespace procns {

namespace detail {

// 3x5 bitmap glyphs for digits plus '.', '-', enough for axis tick labels.
inline const uint16_t* glyph_rows(char c) {
  static const uint16_t digits[12][5] = {
      {0b111, 0b101, 0b101, 0b101, 0b111},  // 0
      {0b010, 0b110, 0b010, 0b010, 0b111},  // 1
      {0b111, 0b001, 0b111, 0b100, 0b111},  // 2
      {0b111, 0b001, 0b111, 0b001, 0b111},  // 3
      {0b101, 0b101, 0b111, 0b001, 0b001},  // 4
      {0b111, 0b100, 0b111, 0b001, 0b111},  // 5
      {0b111, 0b100, 0b111, 0b101, 0b111},  // 6
      {0b111, 0b001, 0b010, 0b010, 0b010},  // 7
      {0b111, 0b101, 0b111, 0b101, 0b111},  // 8
      {0b111, 0b101, 0b111, 0b001, 0b111},  // 9
      {0b000, 0b000, 0b000, 0b000, 0b010},  // .
      {0b000, 0b000, 0b111, 0b000, 0b000},  // -
  };
  if (c >= '0' && c <= '9') return digits[c - '0'];
  if (c == '.') return digits[10];
  if (c == '-') return digits[11];
  return nullptr;
}

}  // namespace detail

class Plot {
 public:
  Plot(int width = 640, int height = 400) : W_(width), H_(height), pix_(static_cast<size_t>(W_) * H_ * 3, 255) {}

  void set_pixel(int i, int j, uint8_t r, uint8_t g, uint8_t b) {
    if (i < 0 || i >= H_ || j < 0 || j >= W_) return;
    size_t p = (static_cast<size_t>(i) * W_ + j) * 3;
    pix_[p] = r;
    pix_[p + 1] = g;
    pix_[p + 2] = b;
  }

  void draw_text(int i, int j, const std::string& s, uint8_t r = 0, uint8_t g = 0, uint8_t b = 0) {
    for (char c : s) {
      const uint16_t* rows = detail::glyph_rows(c);
      if (rows)
        for (int y = 0; y < 5; ++y)
          for (int x = 0; x < 3; ++x)
            if (rows[y] & (1 << (2 - x))) set_pixel(i + y, j + x, r, g, b);
      j += 4;
    }
  }

  void draw_line(double i0, double j0, double i1, double j1, uint8_t r, uint8_t g, uint8_t b) {
    int steps = static_cast<int>(std::max(std::abs(i1 - i0), std::abs(j1 - j0))) + 1;
    for (int s = 0; s <= steps; ++s) {
      double t = static_cast<double>(s) / steps;
      set_pixel(static_cast<int>(std::lround(i0 + t * (i1 - i0))), static_cast<int>(std::lround(j0 + t * (j1 - j0))),
                r, g, b);
    }
  }

  // Line chart of one or more named series over a shared x grid.
  void line_chart(const std::vector<double>& xs, const std::vector<std::vector<double>>& series) {
    if (xs.empty() || series.empty()) return;
    double xmin = *std::min_element(xs.begin(), xs.end()), xmax = *std::max_element(xs.begin(), xs.end());
    double ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
      for (double v : s) {
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
      }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    int m = 40;  // margin for axes and labels
    auto px = [&](double x) { return m + (x - xmin) / (xmax - xmin) * (W_ - 2 * m); };
    auto py = [&](double y) { return H_ - m - (y - ymin) / (ymax - ymin) * (H_ - 2 * m); };
    draw_line(H_ - m, m, H_ - m, W_ - m, 0, 0, 0);
    draw_line(m, m, H_ - m, m, 0, 0, 0);
    for (int t = 0; t <= 4; ++t) {
      double yv = ymin + t * (ymax - ymin) / 4;
      double xv = xmin + t * (xmax - xmin) / 4;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.2f", yv);
      draw_text(static_cast<int>(py(yv)) - 2, 2, buf);
      std::snprintf(buf, sizeof(buf), "%.0f", xv);
      draw_text(H_ - m + 6, static_cast<int>(px(xv)) - 4, buf);
      draw_line(py(yv), m - 3, py(yv), m, 0, 0, 0);
      draw_line(H_ - m, px(xv), H_ - m + 3, px(xv), 0, 0, 0);
    }
    const uint8_t colors[4][3] = {{30, 80, 200}, {200, 60, 40}, {30, 150, 60}, {150, 60, 180}};
    for (size_t s = 0; s < series.size(); ++s) {
      const auto& col = colors[s % 4];
      for (size_t k = 1; k < series[s].size(); ++k)
        draw_line(py(series[s][k - 1]), px(xs[k - 1]), py(series[s][k]), px(xs[k]), col[0], col[1], col[2]);
    }
  }

  void save(const std::string& path) const { write_png_rgb(path, pix_.data(), H_, W_); }

 private:
  int W_, H_;
  std::vector<uint8_t> pix_;
};

}  // namespace procns
