#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "procns/image.hpp"
#include "procns/morphology.hpp"
#include "procns/png_io.hpp"
#include "procns/rng.hpp"

namespace procns {

enum class SparseMode { PointSides, PointCenter, Scribble, Block };

struct SparseGenConfig {
  SparseMode mode = SparseMode::Scribble;
  int contraction = 2;
  double brush_sigma = 2.0;
  ErosionKernel erosion_kernel = ErosionKernel::Cross;
  int erosion_kernel_size = 3;
  int erosion_iters = 2;
  double target_area_fraction = 0.5;
  bool annotate_background = true;

  void validate() const {
    if (contraction < 0) throw ConfigError("sparse_gen.contraction must be >= 0");
    if (brush_sigma <= 0) throw ConfigError("sparse_gen.brush_sigma must be > 0");
    if (erosion_kernel_size < 1 || erosion_kernel_size % 2 == 0)
      throw ConfigError("sparse_gen.erosion_kernel_size must be odd and >= 1");
    if (erosion_iters < 0) throw ConfigError("sparse_gen.erosion_iters must be >= 0");
    if (!(target_area_fraction > 0 && target_area_fraction <= 1))
      throw ConfigError("sparse_gen.target_area_fraction must be in (0,1]");
  }
};

struct GenWarnings {
  std::vector<std::string> messages;
  void add(const std::string& m) { messages.push_back(m); }
};

namespace detail {

inline BinMask class_mask(const LabelMap& dense, int cls) {
  BinMask m(static_cast<size_t>(dense.size()), 0);
  for (int64_t p = 0; p < dense.size(); ++p) m[static_cast<size_t>(p)] = dense.idx[static_cast<size_t>(p)] == cls;
  return m;
}

inline void paint(LabelMap& out, const BinMask& pixels, int cls) {
  for (int64_t p = 0; p < out.size(); ++p)
    if (pixels[static_cast<size_t>(p)]) out.idx[static_cast<size_t>(p)] = static_cast<uint8_t>(cls);
}

// Brush: discrete Gaussian truncated at 3 sigma, binarized at half its peak,
// which is a disk of radius sigma*sqrt(2 ln 2). Clipped to the class region.
inline void stamp_brush(LabelMap& out, const BinMask& region, int H, int W, int ci, int cj, double sigma,
                        int cls) {
  double radius = std::min(sigma * std::sqrt(2.0 * std::log(2.0)), 3.0 * sigma);
  BinMask stamp(static_cast<size_t>(H) * W, 0);
  stamp_disk(stamp, H, W, ci, cj, radius);
  for (size_t p = 0; p < stamp.size(); ++p)
    if (stamp[p] && region[p]) out.idx[p] = static_cast<uint8_t>(cls);
}

// Erode a region; steps that would empty it are skipped (previous result kept).
inline BinMask erode_guarded(const BinMask& region, int H, int W, const SparseGenConfig& cfg, int iters,
                             GenWarnings* warn, int cls) {
  BinMask cur = region;
  for (int k = 0; k < iters; ++k) {
    BinMask next = erode(cur, H, W, cfg.erosion_kernel, cfg.erosion_kernel_size);
    if (mask_area(next) == 0) {
      if (warn)
        warn->add("class " + std::to_string(cls) + ": erosion iteration " + std::to_string(k + 1) +
                  " would empty the region; kept previous result");
      return cur;
    }
    cur = std::move(next);
  }
  return cur;
}

inline BinMask invert(const BinMask& m) {
  BinMask out(m.size());
  for (size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 0 : 1;
  return out;
}

inline BinMask scribble_region(const BinMask& region, int H, int W, const SparseGenConfig& cfg,
                               GenWarnings* warn, int cls) {
  BinMask eroded = erode_guarded(region, H, W, cfg, cfg.erosion_iters, warn, cls);
  BinMask skel = thin_skeleton(eroded, H, W);
  if (mask_area(skel) == 0 && mask_area(eroded) > 0) {
    // Degenerate residual: fall back to the deepest interior pixel.
    auto d = edt_squared(invert(eroded), H, W);
    int64_t best = 0;
    for (int64_t p = 1; p < static_cast<int64_t>(d.size()); ++p)
      if (eroded[static_cast<size_t>(p)] &&
          (!eroded[static_cast<size_t>(best)] || d[static_cast<size_t>(p)] > d[static_cast<size_t>(best)]))
        best = p;
    skel.assign(eroded.size(), 0);
    skel[static_cast<size_t>(best)] = 1;
  }
  return skel;
}

}  // namespace detail

// Point annotations: per connected component, the maximum inscribed rectangle
// is contracted inward and the rectangle center (POINT_CENTER) or the four
// side midpoints (POINT_SIDES) receive a Gaussian brush stamp.
inline LabelMap gen_points(const LabelMap& dense, int num_classes, const SparseGenConfig& cfg,
                           GenWarnings* warn = nullptr) {
  cfg.validate();
  LabelMap out(dense.H, dense.W);
  for (int cls = 1; cls < num_classes; ++cls) {
    BinMask region = detail::class_mask(dense, cls);
    if (mask_area(region) == 0) {
      if (warn) warn->add("class " + std::to_string(cls) + ": empty region, no points");
      continue;
    }
    std::vector<int32_t> comp;
    int ncomp = connected_components(region, dense.H, dense.W, comp, 8);
    for (int k = 1; k <= ncomp; ++k) {
      BinMask cm(region.size(), 0);
      for (size_t p = 0; p < cm.size(); ++p) cm[p] = comp[p] == k;
      Rect r = largest_inscribed_rect(cm, dense.H, dense.W);
      r.r0 += cfg.contraction;
      r.c0 += cfg.contraction;
      r.h -= 2 * cfg.contraction;
      r.w -= 2 * cfg.contraction;
      if (r.empty()) {
        if (warn)
          warn->add("class " + std::to_string(cls) + " component " + std::to_string(k) +
                    ": too small for inscribed rectangle after contraction; skipped");
        continue;
      }
      int mi = r.r0 + (r.h - 1) / 2, mj = r.c0 + (r.w - 1) / 2;
      if (cfg.mode == SparseMode::PointCenter) {
        detail::stamp_brush(out, cm, dense.H, dense.W, mi, mj, cfg.brush_sigma, cls);
      } else {
        detail::stamp_brush(out, cm, dense.H, dense.W, r.r0, mj, cfg.brush_sigma, cls);
        detail::stamp_brush(out, cm, dense.H, dense.W, r.r0 + r.h - 1, mj, cfg.brush_sigma, cls);
        detail::stamp_brush(out, cm, dense.H, dense.W, mi, r.c0, cfg.brush_sigma, cls);
        detail::stamp_brush(out, cm, dense.H, dense.W, mi, r.c0 + r.w - 1, cfg.brush_sigma, cls);
      }
    }
  }
  if (cfg.annotate_background) {
    BinMask bg = detail::class_mask(dense, 0);
    if (mask_area(bg) > 0)
      detail::paint(out, detail::scribble_region(bg, dense.H, dense.W, cfg, warn, 0), 0);
  }
  return out;
}

// Scribbles: erosion followed by skeletonization, per class.
inline LabelMap gen_scribbles(const LabelMap& dense, int num_classes, const SparseGenConfig& cfg,
                              GenWarnings* warn = nullptr) {
  cfg.validate();
  LabelMap out(dense.H, dense.W);
  int start = cfg.annotate_background ? 0 : 1;
  for (int cls = start; cls < num_classes; ++cls) {
    BinMask region = detail::class_mask(dense, cls);
    if (mask_area(region) == 0) {
      if (warn && cls > 0) warn->add("class " + std::to_string(cls) + ": empty region, no scribble");
      continue;
    }
    detail::paint(out, detail::scribble_region(region, dense.H, dense.W, cfg, warn, cls), cls);
  }
  return out;
}

// Blocks: iterated erosion from the region edges; the output is the last
// iterate whose area is still >= target_area_fraction of the original.
inline LabelMap gen_blocks(const LabelMap& dense, int num_classes, const SparseGenConfig& cfg,
                           GenWarnings* warn = nullptr) {
  cfg.validate();
  LabelMap out(dense.H, dense.W);
  int start = cfg.annotate_background ? 0 : 1;
  for (int cls = start; cls < num_classes; ++cls) {
    BinMask region = detail::class_mask(dense, cls);
    int64_t a0 = mask_area(region);
    if (a0 == 0) continue;
    if (a0 < 4) {
      detail::paint(out, region, cls);
      continue;
    }
    double threshold = cfg.target_area_fraction * static_cast<double>(a0);
    BinMask cur = region;
    while (true) {
      BinMask next = erode(cur, dense.H, dense.W, cfg.erosion_kernel, cfg.erosion_kernel_size);
      int64_t a = mask_area(next);
      if (a == 0) {
        if (warn)
          warn->add("class " + std::to_string(cls) + ": erosion would empty region; kept smallest block");
        break;
      }
      if (static_cast<double>(a) < threshold) break;
      cur = std::move(next);
    }
    detail::paint(out, cur, cls);
  }
  return out;
}

inline LabelMap gen_sparse(const LabelMap& dense, int num_classes, const SparseGenConfig& cfg,
                           GenWarnings* warn = nullptr) {
  switch (cfg.mode) {
    case SparseMode::PointSides:
    case SparseMode::PointCenter:
      return gen_points(dense, num_classes, cfg, warn);
    case SparseMode::Scribble:
      return gen_scribbles(dense, num_classes, cfg, warn);
    case SparseMode::Block:
      return gen_blocks(dense, num_classes, cfg, warn);
  }
  throw ConfigError("unknown sparse mode");
}

struct AnnotationStats {
  double proportion = 0.0;  // labeled sparse pixels / labeled dense pixels
  std::vector<int64_t> sparse_counts, dense_counts;
};

inline AnnotationStats annotation_stats(const LabelMap& sparse, const LabelMap& dense, int num_classes) {
  require(sparse.H == dense.H && sparse.W == dense.W, "annotation_stats: shape mismatch");
  AnnotationStats st;
  st.sparse_counts.assign(static_cast<size_t>(num_classes), 0);
  st.dense_counts.assign(static_cast<size_t>(num_classes), 0);
  for (int64_t p = 0; p < dense.size(); ++p) {
    uint8_t d = dense.idx[static_cast<size_t>(p)];
    uint8_t s = sparse.idx[static_cast<size_t>(p)];
    if (d != kUnlabeled) st.dense_counts[d]++;
    if (s != kUnlabeled) st.sparse_counts[s]++;
  }
  int64_t ds = 0, ss = 0;
  for (int c = 0; c < num_classes; ++c) {
    ds += st.dense_counts[static_cast<size_t>(c)];
    ss += st.sparse_counts[static_cast<size_t>(c)];
  }
  st.proportion = ds > 0 ? static_cast<double>(ss) / static_cast<double>(ds) : 0.0;
  return st;
}

// ---------------------------------------------------------------------------
// Synthetic dataset generation
// ---------------------------------------------------------------------------

struct SyntheticDatasetConfig {
  int num_samples = 200;
  int image_size = 64;
  std::vector<std::string> shapes = {"disk"};
  double boundary_blur_sigma = 2.5;
  double noise_std = 0.08;
  int num_classes = 2;
  double full_label_fraction = 0.0;
  double test_fraction = 0.2;
  uint64_t seed = 1234;

  void validate() const {
    if (num_samples < 1) throw ConfigError("dataset.num_samples must be >= 1");
    if (image_size < 16 || image_size % 16 != 0)
      throw ConfigError("dataset.image_size must be a positive multiple of 16");
    if (num_classes < 2) throw ConfigError("dataset.num_classes must be >= 2");
    if (shapes.empty()) throw ConfigError("dataset.shapes must not be empty");
    for (const auto& s : shapes)
      if (s != "disk" && s != "ellipse" && s != "blob")
        throw ConfigError("dataset.shapes entries must be disk|ellipse|blob, got '" + s + "'");
    if (!(full_label_fraction >= 0 && full_label_fraction <= 1))
      throw ConfigError("dataset.full_label_fraction must be in [0,1]");
    if (!(test_fraction >= 0 && test_fraction < 1)) throw ConfigError("dataset.test_fraction must be in [0,1)");
    if (boundary_blur_sigma < 0) throw ConfigError("dataset.boundary_blur_sigma must be >= 0");
    if (noise_std < 0) throw ConfigError("dataset.noise_std must be >= 0");
  }
};

namespace detail {

inline void rasterize_shape(LabelMap& lab, const std::string& shape, int cls, Rng& rng) {
  int S = lab.H;
  double rmin = 0.125 * S, rmax = 0.3 * S;
  double r0 = rng.uniform(rmin, rmax);
  double ci = rng.uniform(r0 + 1, S - 1 - r0 - 1);
  double cj = rng.uniform(r0 + 1, S - 1 - r0 - 1);
  if (shape == "disk") {
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j)
        if ((i - ci) * (i - ci) + (j - cj) * (j - cj) <= r0 * r0) lab.at(i, j) = static_cast<uint8_t>(cls);
    return;
  }
  if (shape == "ellipse") {
    double b = rng.uniform(rmin, r0);
    double th = rng.uniform(0, 3.14159265358979323846);
    double ct = std::cos(th), st = std::sin(th);
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j) {
        double u = (i - ci) * ct + (j - cj) * st;
        double v = -(i - ci) * st + (j - cj) * ct;
        if (u * u / (r0 * r0) + v * v / (b * b) <= 1.0) lab.at(i, j) = static_cast<uint8_t>(cls);
      }
    return;
  }
  // blob: disk with a radial sinusoidal perturbation
  double p0 = rng.uniform(0, 6.2831853), p1 = rng.uniform(0, 6.2831853);
  for (int i = 0; i < S; ++i)
    for (int j = 0; j < S; ++j) {
      double di = i - ci, dj = j - cj;
      double rr = std::sqrt(di * di + dj * dj);
      double phi = std::atan2(dj, di);
      double rb = r0 * (1.0 + 0.22 * std::sin(3 * phi + p0) + 0.12 * std::sin(5 * phi + p1));
      if (rr <= rb) lab.at(i, j) = static_cast<uint8_t>(cls);
    }
}

}  // namespace detail

struct SyntheticSample {
  std::string id;
  Image image;
  LabelMap dense;
  LabelMap sparse;
};

// Blurred-shape images: distinct per-class intensities, Gaussian-smoothed
// boundaries to make them ambiguous, additive noise.
inline SyntheticSample make_synthetic_sample(const SyntheticDatasetConfig& cfg, const SparseGenConfig& sparse_cfg,
                                             int index, GenWarnings* warn = nullptr) {
  int S = cfg.image_size;
  char idbuf[16];
  std::snprintf(idbuf, sizeof(idbuf), "s%04d", index);
  SyntheticSample smp;
  smp.id = idbuf;
  auto rng = rng_stream(cfg.seed, "sample_" + smp.id);

  LabelMap lab(S, S, 0);
  for (int cls = 1; cls < cfg.num_classes; ++cls) {
    const auto& shape = cfg.shapes[rng.below(static_cast<uint32_t>(cfg.shapes.size()))];
    detail::rasterize_shape(lab, shape, cls, rng);
  }
  smp.dense = lab;

  Image img(1, S, S);
  for (int64_t p = 0; p < lab.size(); ++p) {
    int cls = lab.idx[static_cast<size_t>(p)];
    img.v[static_cast<size_t>(p)] =
        cls == 0 ? 0.3f : static_cast<float>(0.3 + 0.45 * cls / (cfg.num_classes - 1));
  }
  gaussian_blur(img.v, S, S, cfg.boundary_blur_sigma);
  for (auto& x : img.v) {
    x += static_cast<float>(rng.normal(0.0, cfg.noise_std));
    x = std::min(1.0f, std::max(0.0f, x));
  }
  smp.image = std::move(img);
  smp.sparse = gen_sparse(smp.dense, cfg.num_classes, sparse_cfg, warn);
  return smp;
}

// Writes images/, labels_full/, labels_sparse/ and manifest.json under out_dir.
inline void gen_synthetic_dataset(const SyntheticDatasetConfig& cfg, const SparseGenConfig& sparse_cfg,
                                  const std::string& out_dir, GenWarnings* warn = nullptr) {
  cfg.validate();
  sparse_cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"", "/images", "/labels_full", "/labels_sparse"}) {
    fs::create_directories(out_dir + sub, ec);
    if (ec) throw DataError("cannot create dataset directory " + out_dir + sub + ": " + ec.message());
  }

  int n_full = static_cast<int>(std::floor(cfg.full_label_fraction * cfg.num_samples));
  int n_test = static_cast<int>(std::llround(cfg.test_fraction * cfg.num_samples));
  std::vector<std::string> train_ids, test_ids;

  for (int k = 0; k < cfg.num_samples; ++k) {
    SyntheticSample smp = make_synthetic_sample(cfg, sparse_cfg, k, warn);
    if (k < n_full) smp.sparse = smp.dense;  // dense labels stand in as "sparse"
    std::vector<uint8_t> pix(smp.image.v.size());
    for (size_t p = 0; p < pix.size(); ++p)
      pix[p] = static_cast<uint8_t>(std::lround(smp.image.v[p] * 255.0f));
    write_png_gray(out_dir + "/images/" + smp.id + ".png", pix.data(), cfg.image_size, cfg.image_size);
    write_png_gray(out_dir + "/labels_full/" + smp.id + ".png", smp.dense.idx.data(), cfg.image_size,
                   cfg.image_size);
    write_png_gray(out_dir + "/labels_sparse/" + smp.id + ".png", smp.sparse.idx.data(), cfg.image_size,
                   cfg.image_size);
    (k >= cfg.num_samples - n_test ? test_ids : train_ids).push_back(smp.id);
  }

  nlohmann::json manifest;
  std::vector<std::string> class_names;
  for (int c = 0; c < cfg.num_classes; ++c) class_names.push_back("class" + std::to_string(c));
  manifest["format_version"] = 1;
  manifest["num_classes"] = cfg.num_classes;
  manifest["class_names"] = class_names;
  manifest["split"] = {{"train", train_ids}, {"test", test_ids}};
  manifest["generator"] = {{"num_samples", cfg.num_samples},
                           {"image_size", cfg.image_size},
                           {"shapes", cfg.shapes},
                           {"boundary_blur_sigma", cfg.boundary_blur_sigma},
                           {"noise_std", cfg.noise_std},
                           {"num_classes", cfg.num_classes},
                           {"full_label_fraction", cfg.full_label_fraction},
                           {"test_fraction", cfg.test_fraction},
                           {"seed", cfg.seed}};
  const char* mode_name = sparse_cfg.mode == SparseMode::PointSides    ? "point_sides"
                          : sparse_cfg.mode == SparseMode::PointCenter ? "point_center"
                          : sparse_cfg.mode == SparseMode::Scribble    ? "scribble"
                                                                       : "block";
  manifest["sparse_gen"] = {{"mode", mode_name},
                            {"contraction", sparse_cfg.contraction},
                            {"brush_sigma", sparse_cfg.brush_sigma},
                            {"erosion_kernel", sparse_cfg.erosion_kernel == ErosionKernel::Cross ? "cross" : "square"},
                            {"erosion_kernel_size", sparse_cfg.erosion_kernel_size},
                            {"erosion_iters", sparse_cfg.erosion_iters},
                            {"target_area_fraction", sparse_cfg.target_area_fraction},
                            {"annotate_background", sparse_cfg.annotate_background}};
  std::ofstream mf(out_dir + "/manifest.json");
  if (!mf) throw DataError("cannot write manifest: " + out_dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
}

}  // namespace procns
