#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "procns/image.hpp"
#include "procns/png_io.hpp"
#include "procns/rng.hpp"

namespace procns {

struct Sample {
  std::string id;
  Image image;
  LabelMap sparse;
  LabelMap dense;
  bool has_dense = false;
};

struct Dataset {
  int num_classes = 0;
  std::vector<std::string> class_names;
  std::vector<Sample> train, test;
  uint64_t manifest_hash = 0;

  const Sample* find_train(const std::string& id) const {
    for (const auto& s : train)
      if (s.id == id) return &s;
    return nullptr;
  }
};

namespace detail {

inline LabelMap load_label_png(const std::string& path, int num_classes) {
  PngGray png = read_png_gray(path);
  LabelMap lab{png.H, png.W};
  lab.idx = std::move(png.pix);
  for (auto v : lab.idx)
    if (v != kUnlabeled && v >= num_classes)
      throw DataError("label value " + std::to_string(v) + " out of range in " + path);
  return lab;
}

inline Image load_image_png(const std::string& path) {
  PngGray png = read_png_gray(path);
  Image im;
  im.C = 1;
  im.H = png.H;
  im.W = png.W;
  im.v.resize(png.pix.size());
  for (size_t i = 0; i < png.pix.size(); ++i) im.v[i] = static_cast<float>(png.pix[i]) / 255.0f;
  return im;
}

}  // namespace detail

// Loads a dataset directory: manifest.json plus images/, labels_sparse/ and
// (optionally) labels_full/. Dense labels are required for test samples.
inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::string mpath = dir + "/manifest.json";
  std::ifstream mf(mpath);
  if (!mf) throw DataError("cannot open manifest: " + mpath);
  std::stringstream ss;
  ss << mf.rdbuf();
  std::string mbytes = ss.str();

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mbytes);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + mpath + ": " + e.what());
  }
  if (!manifest.contains("format_version") || manifest["format_version"].get<int>() != 1)
    throw DataError("unsupported manifest format_version in " + mpath);
  if (!manifest.contains("num_classes") || !manifest.contains("split"))
    throw DataError("manifest missing num_classes or split: " + mpath);

  Dataset ds;
  ds.manifest_hash = fnv1a64(mbytes);
  ds.num_classes = manifest["num_classes"].get<int>();
  if (ds.num_classes < 2 || ds.num_classes > 254)
    throw DataError("num_classes must be in [2,254], got " + std::to_string(ds.num_classes));
  if (manifest.contains("class_names"))
    ds.class_names = manifest["class_names"].get<std::vector<std::string>>();
  else
    for (int c = 0; c < ds.num_classes; ++c) ds.class_names.push_back("class" + std::to_string(c));

  auto load_split = [&](const char* key, bool require_dense) {
    std::vector<Sample> out;
    for (const auto& idj : manifest["split"][key]) {
      Sample s;
      s.id = idj.get<std::string>();
      std::string ipath = dir + "/images/" + s.id + ".png";
      if (!fs::exists(ipath)) throw DataError("missing image: " + ipath);
      s.image = detail::load_image_png(ipath);
      std::string spath = dir + "/labels_sparse/" + s.id + ".png";
      if (fs::exists(spath)) {
        s.sparse = detail::load_label_png(spath, ds.num_classes);
        if (s.sparse.H != s.image.H || s.sparse.W != s.image.W)
          throw DataError("sparse label shape mismatch for " + s.id);
      } else if (!require_dense) {
        throw DataError("missing sparse label: " + spath);
      }
      std::string fpath = dir + "/labels_full/" + s.id + ".png";
      if (fs::exists(fpath)) {
        s.dense = detail::load_label_png(fpath, ds.num_classes);
        if (s.dense.H != s.image.H || s.dense.W != s.image.W)
          throw DataError("dense label shape mismatch for " + s.id);
        s.has_dense = true;
      } else if (require_dense) {
        throw DataError("missing dense label for test sample: " + fpath);
      }
      out.push_back(std::move(s));
    }
    return out;
  };
  ds.train = load_split("train", false);
  ds.test = load_split("test", true);
  if (ds.train.empty()) throw DataError("dataset has no training samples: " + dir);
  return ds;
}

// Replaces the sparse supervision of matching train samples with labels read
// from an external directory of <id>.png files.
inline void apply_external_pseudo_labels(Dataset& ds, const std::string& label_dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> missing;
  for (auto& s : ds.train) {
    std::string p = label_dir + "/" + s.id + ".png";
    if (!fs::exists(p)) {
      missing.push_back(s.id);
      continue;
    }
    LabelMap lab = detail::load_label_png(p, ds.num_classes);
    if (lab.H != s.image.H || lab.W != s.image.W)
      throw DataError("pseudo-label shape mismatch for " + s.id);
    s.sparse = std::move(lab);
  }
  if (!missing.empty())
    throw MissingSampleError("pseudo-label directory " + label_dir + " is missing samples", missing);
}

}  // namespace procns
