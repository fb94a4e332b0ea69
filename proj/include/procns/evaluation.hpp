#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "procns/image.hpp"
#include "procns/morphology.hpp"
#include "procns/plot.hpp"
#include "procns/png_io.hpp"

namespace procns {

// Dice coefficient; two empty masks count as perfect agreement.
inline double dsc(const BinMask& a, const BinMask& b) {
  require(a.size() == b.size(), "dsc: size mismatch");
  int64_t na = 0, nb = 0, inter = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    na += a[i] != 0;
    nb += b[i] != 0;
    inter += (a[i] && b[i]);
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

// Boundary pixels: foreground with at least one background 4-neighbor; the
// image border counts as background.
inline BinMask boundary_pixels(const BinMask& m, int H, int W) {
  BinMask out(m.size(), 0);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      if (!m[static_cast<size_t>(i) * W + j]) continue;
      bool edge = i == 0 || i == H - 1 || j == 0 || j == W - 1;
      if (!edge) {
        edge = !m[static_cast<size_t>(i - 1) * W + j] || !m[static_cast<size_t>(i + 1) * W + j] ||
               !m[static_cast<size_t>(i) * W + j - 1] || !m[static_cast<size_t>(i) * W + j + 1];
      }
      if (edge) out[static_cast<size_t>(i) * W + j] = 1;
    }
  return out;
}

inline double percentile_linear(std::vector<double> v, double q) {
  require(!v.empty(), "percentile of empty set");
  std::sort(v.begin(), v.end());
  double rank = q * (static_cast<double>(v.size()) - 1.0);
  size_t lo = static_cast<size_t>(std::floor(rank));
  double frac = rank - static_cast<double>(lo);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

// 95th percentile of pooled symmetric boundary-to-boundary distances. Returns
// the image diagonal when either mask is empty.
inline double hd95(const BinMask& a, const BinMask& b, int H, int W) {
  require(a.size() == b.size() && static_cast<int64_t>(a.size()) == static_cast<int64_t>(H) * W,
          "hd95: size mismatch");
  if (mask_area(a) == 0 || mask_area(b) == 0)
    return std::sqrt(static_cast<double>(H) * H + static_cast<double>(W) * W);
  BinMask ba = boundary_pixels(a, H, W), bb = boundary_pixels(b, H, W);
  auto da = edt_squared(ba, H, W);  // distance to nearest boundary pixel of a
  auto db = edt_squared(bb, H, W);
  std::vector<double> pooled;
  for (int64_t p = 0; p < static_cast<int64_t>(a.size()); ++p) {
    if (ba[static_cast<size_t>(p)]) pooled.push_back(std::sqrt(db[static_cast<size_t>(p)]));
    if (bb[static_cast<size_t>(p)]) pooled.push_back(std::sqrt(da[static_cast<size_t>(p)]));
  }
  return percentile_linear(std::move(pooled), 0.95);
}

struct MetricRow {
  std::string id;
  int cls = 0;
  double dsc = 0, hd95 = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::map<int, double> class_dsc, class_hd95;
  double mean_dsc = 0, mean_hd95 = 0;
};

inline BinMask label_class_mask(const LabelMap& lab, int cls) {
  BinMask m(static_cast<size_t>(lab.size()), 0);
  for (int64_t p = 0; p < lab.size(); ++p) m[static_cast<size_t>(p)] = lab.idx[static_cast<size_t>(p)] == cls;
  return m;
}

// One-vs-rest metrics per foreground class, averaged over rows.
inline MetricReport evaluate_predictions(const std::vector<std::string>& ids,
                                         const std::vector<LabelMap>& preds, const std::vector<LabelMap>& gts,
                                         int num_classes) {
  require(ids.size() == preds.size() && ids.size() == gts.size(), "evaluate_predictions: length mismatch");
  MetricReport rep;
  std::map<int, std::pair<double, int>> acc_d, acc_h;
  for (size_t k = 0; k < ids.size(); ++k) {
    require(preds[k].H == gts[k].H && preds[k].W == gts[k].W, "evaluate_predictions: shape mismatch at " + ids[k]);
    for (int c = 1; c < num_classes; ++c) {
      MetricRow row;
      row.id = ids[k];
      row.cls = c;
      BinMask pm = label_class_mask(preds[k], c), gm = label_class_mask(gts[k], c);
      row.dsc = dsc(pm, gm);
      row.hd95 = hd95(pm, gm, preds[k].H, preds[k].W);
      rep.rows.push_back(row);
      acc_d[c].first += row.dsc;
      acc_d[c].second++;
      acc_h[c].first += row.hd95;
      acc_h[c].second++;
    }
  }
  double sd = 0, sh = 0;
  int n = 0;
  for (auto& [c, v] : acc_d) {
    rep.class_dsc[c] = v.first / v.second;
    rep.class_hd95[c] = acc_h[c].first / acc_h[c].second;
    sd += v.first;
    sh += acc_h[c].first;
    n += v.second;
  }
  if (n) {
    rep.mean_dsc = sd / n;
    rep.mean_hd95 = sh / n;
  }
  return rep;
}

inline void write_metrics_csv(const std::string& path, const MetricReport& rep) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write metrics CSV: " + path);
  f << "sample_id,class,dsc,hd95\n";
  char buf[64];
  for (const auto& r : rep.rows) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f", r.dsc, r.hd95);
    f << r.id << "," << r.cls << "," << buf << "\n";
  }
}

// Pixelwise disagreement rendering: correct background black, correct
// foreground green, false positives red, false negatives blue, and yellow
// where both are foreground but the classes differ.
inline std::vector<uint8_t> error_map(const LabelMap& pred, const LabelMap& gt) {
  require(pred.H == gt.H && pred.W == gt.W, "error_map: shape mismatch");
  std::vector<uint8_t> rgb(static_cast<size_t>(pred.size()) * 3, 0);
  for (int64_t p = 0; p < pred.size(); ++p) {
    uint8_t pv = pred.idx[static_cast<size_t>(p)], gv = gt.idx[static_cast<size_t>(p)];
    bool pf = pv != 0 && pv != kUnlabeled, gf = gv != 0 && gv != kUnlabeled;
    uint8_t r = 0, g = 0, b = 0;
    if (pv == gv) {
      if (gf) g = 200;
    } else if (pf && gf) {
      r = 220;
      g = 200;
    } else if (pf) {
      r = 220;
    } else {
      b = 220;
    }
    rgb[static_cast<size_t>(p) * 3] = r;
    rgb[static_cast<size_t>(p) * 3 + 1] = g;
    rgb[static_cast<size_t>(p) * 3 + 2] = b;
  }
  return rgb;
}

inline void write_error_map(const std::string& path, const LabelMap& pred, const LabelMap& gt) {
  auto rgb = error_map(pred, gt);
  write_png_rgb(path, rgb.data(), pred.H, pred.W);
}

struct NoiseReportEntry {
  int epoch = 0;
  double mean_dsc = 0;
};

// Mean DSC of denoised-label snapshots against dense ground truth, per epoch.
// Snapshot layout: <dir>/epoch_NNNN/<id>.png; epoch_0000 holds the initial
// pseudo-labels.
inline std::vector<NoiseReportEntry> noise_suppression_report(
    const std::string& snapshots_dir, const std::map<std::string, LabelMap>& gt, int num_classes,
    const std::string& out_csv = "", const std::string& out_png = "",
    std::vector<std::string>* warnings = nullptr) {
  namespace fs = std::filesystem;
  if (!fs::exists(snapshots_dir)) throw DataError("snapshot directory not found: " + snapshots_dir);
  std::vector<std::pair<int, fs::path>> epochs;
  for (const auto& e : fs::directory_iterator(snapshots_dir)) {
    std::string name = e.path().filename().string();
    if (name.rfind("epoch_", 0) == 0) epochs.emplace_back(std::stoi(name.substr(6)), e.path());
  }
  if (epochs.empty()) throw DataError("no epoch snapshots under " + snapshots_dir);
  std::sort(epochs.begin(), epochs.end());

  std::vector<NoiseReportEntry> out;
  for (auto& [ep, dir] : epochs) {
    double sum = 0;
    int n = 0;
    for (const auto& [id, gtlab] : gt) {
      fs::path p = dir / (id + ".png");
      if (!fs::exists(p)) {
        if (warnings) warnings->push_back("missing snapshot " + p.string());
        continue;
      }
      PngGray png = read_png_gray(p.string());
      LabelMap lab{png.H, png.W};
      lab.idx = png.pix;
      for (int c = 1; c < num_classes; ++c) {
        sum += dsc(label_class_mask(lab, c), label_class_mask(gtlab, c));
        ++n;
      }
    }
    if (n == 0) {
      if (warnings) warnings->push_back("epoch " + std::to_string(ep) + ": no overlapping samples, skipped");
      continue;
    }
    out.push_back({ep, sum / n});
  }

  if (!out_csv.empty()) {
    std::ofstream f(out_csv);
    if (!f) throw DataError("cannot write noise report CSV: " + out_csv);
    f << "epoch,denoised_label_dsc\n";
    char buf[32];
    for (const auto& e : out) {
      std::snprintf(buf, sizeof(buf), "%.6f", e.mean_dsc);
      f << e.epoch << "," << buf << "\n";
    }
  }
  if (!out_png.empty() && !out.empty()) {
    std::vector<double> xs, ys;
    for (const auto& e : out) {
      xs.push_back(e.epoch);
      ys.push_back(e.mean_dsc);
    }
    Plot plot;
    plot.line_chart(xs, {ys});
    plot.save(out_png);
  }
  return out;
}

}  // namespace procns
