#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "procns/backbone.hpp"
#include "procns/sparse_gen.hpp"
#include "procns/train_config.hpp"

namespace procns {

struct EvalConfig {
  bool write_error_maps = true;
  bool noise_report = false;
};

struct AppConfig {
  SyntheticDatasetConfig dataset;
  NetworkConfig network;
  TrainConfig train;  // train.affinity is populated from the affinity section
  SparseGenConfig sparse_gen;
  EvalConfig eval;

  void validate() const {
    dataset.validate();
    network.validate();
    train.validate();
    sparse_gen.validate();
  }
};

namespace detail {

inline int levenshtein(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= b.size(); ++j) {
      int sub = prev[j - 1] + (a[i - 1] != b[j - 1]);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::string suggest(const std::string& key, const std::vector<std::string>& known) {
  int best = 1 << 30;
  std::string who;
  for (const auto& k : known) {
    int d = levenshtein(key, k);
    if (d < best) {
      best = d;
      who = k;
    }
  }
  if (!who.empty() && best <= std::max<int>(2, static_cast<int>(key.size()) / 2))
    return "; did you mean '" + who + "'?";
  return "";
}

inline void check_keys(const YAML::Node& node, const std::string& section,
                       const std::vector<std::string>& known) {
  if (!node) return;
  if (!node.IsMap()) throw ConfigError("section '" + section + "' must be a mapping");
  for (const auto& kv : node) {
    std::string key = kv.first.as<std::string>();
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown key '" + section + "." + key + "'" + suggest(key, known));
  }
}

template <class T>
void get_field(const YAML::Node& node, const std::string& section, const char* key, T& out) {
  if (!node) return;
  YAML::Node v = node[key];
  if (!v) return;
  try {
    out = v.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("cannot parse value for '" + section + "." + std::string(key) + "'");
  }
}

template <class E>
void get_enum(const YAML::Node& node, const std::string& section, const char* key, E& out,
              const std::vector<std::pair<std::string, E>>& values) {
  if (!node) return;
  YAML::Node v = node[key];
  if (!v) return;
  std::string s;
  try {
    s = v.as<std::string>();
  } catch (const YAML::Exception&) {
    throw ConfigError("cannot parse value for '" + section + "." + std::string(key) + "'");
  }
  std::vector<std::string> names;
  for (const auto& [name, e] : values) {
    if (s == name) {
      out = e;
      return;
    }
    names.push_back(name);
  }
  std::string allowed;
  for (const auto& n : names) allowed += (allowed.empty() ? "" : "|") + n;
  throw ConfigError("'" + section + "." + std::string(key) + "' must be one of {" + allowed + "}, got '" + s +
                    "'" + suggest(s, names));
}

inline const std::vector<std::pair<std::string, SparseMode>>& sparse_mode_names() {
  static const std::vector<std::pair<std::string, SparseMode>> v = {
      {"point_sides", SparseMode::PointSides},
      {"point_center", SparseMode::PointCenter},
      {"scribble", SparseMode::Scribble},
      {"block", SparseMode::Block}};
  return v;
}

inline const std::vector<std::pair<std::string, ErosionKernel>>& kernel_names() {
  static const std::vector<std::pair<std::string, ErosionKernel>> v = {{"cross", ErosionKernel::Cross},
                                                                       {"square", ErosionKernel::Square}};
  return v;
}

inline const std::vector<std::pair<std::string, AffinityConfig::Mode>>& affinity_mode_names() {
  static const std::vector<std::pair<std::string, AffinityConfig::Mode>> v = {
      {"class_matched", AffinityConfig::Mode::ClassMatched}, {"literal", AffinityConfig::Mode::Literal}};
  return v;
}

inline const std::vector<std::pair<std::string, PrototypeGranularity>>& granularity_names() {
  static const std::vector<std::pair<std::string, PrototypeGranularity>> v = {
      {"sample_wise", PrototypeGranularity::SampleWise}, {"batch_wise", PrototypeGranularity::BatchWise}};
  return v;
}

template <class E>
std::string enum_name(E e, const std::vector<std::pair<std::string, E>>& values) {
  for (const auto& [name, v] : values)
    if (v == e) return name;
  return "?";
}

}  // namespace detail

inline AppConfig load_config_node(const YAML::Node& root) {
  AppConfig cfg;
  if (root && !root.IsNull()) {
    if (!root.IsMap()) throw ConfigError("config root must be a mapping of sections");
    static const std::vector<std::string> sections = {"dataset", "network", "train",
                                                      "affinity", "sparse_gen", "eval"};
    for (const auto& kv : root) {
      std::string key = kv.first.as<std::string>();
      if (std::find(sections.begin(), sections.end(), key) == sections.end())
        throw ConfigError("unknown section '" + key + "'" + detail::suggest(key, sections));
    }

    YAML::Node d = root["dataset"];
    detail::check_keys(d, "dataset",
                       {"num_samples", "image_size", "shapes", "boundary_blur_sigma", "noise_std",
                        "num_classes", "full_label_fraction", "test_fraction", "seed"});
    detail::get_field(d, "dataset", "num_samples", cfg.dataset.num_samples);
    detail::get_field(d, "dataset", "image_size", cfg.dataset.image_size);
    detail::get_field(d, "dataset", "shapes", cfg.dataset.shapes);
    detail::get_field(d, "dataset", "boundary_blur_sigma", cfg.dataset.boundary_blur_sigma);
    detail::get_field(d, "dataset", "noise_std", cfg.dataset.noise_std);
    detail::get_field(d, "dataset", "num_classes", cfg.dataset.num_classes);
    detail::get_field(d, "dataset", "full_label_fraction", cfg.dataset.full_label_fraction);
    detail::get_field(d, "dataset", "test_fraction", cfg.dataset.test_fraction);
    detail::get_field(d, "dataset", "seed", cfg.dataset.seed);

    YAML::Node n = root["network"];
    detail::check_keys(n, "network",
                       {"in_channels", "num_classes", "base_width", "depth", "tap_encoder", "tap_decoder"});
    detail::get_field(n, "network", "in_channels", cfg.network.in_channels);
    detail::get_field(n, "network", "num_classes", cfg.network.num_classes);
    detail::get_field(n, "network", "base_width", cfg.network.base_width);
    detail::get_field(n, "network", "depth", cfg.network.depth);
    detail::get_field(n, "network", "tap_encoder", cfg.network.tap_encoder);
    detail::get_field(n, "network", "tap_decoder", cfg.network.tap_decoder);

    YAML::Node t = root["train"];
    detail::check_keys(t, "train", {"lambda1",      "lambda2",        "lambda3",
                                    "lambda4",      "alpha",          "init_epochs",
                                    "main_epochs",  "batch_size",     "lr0",
                                    "momentum",     "weight_decay",   "poly_power",
                                    "seed",         "grad_clip_norm", "use_prsa",
                                    "use_anpm",     "use_noise_loss", "use_init_prsa",
                                    "use_ema",      "use_refined_for_masks",
                                    "prototype_granularity",          "checkpoint_every"});
    detail::get_field(t, "train", "lambda1", cfg.train.lambda1);
    detail::get_field(t, "train", "lambda2", cfg.train.lambda2);
    detail::get_field(t, "train", "lambda3", cfg.train.lambda3);
    detail::get_field(t, "train", "lambda4", cfg.train.lambda4);
    detail::get_field(t, "train", "alpha", cfg.train.alpha);
    detail::get_field(t, "train", "init_epochs", cfg.train.init_epochs);
    detail::get_field(t, "train", "main_epochs", cfg.train.main_epochs);
    detail::get_field(t, "train", "batch_size", cfg.train.batch_size);
    detail::get_field(t, "train", "lr0", cfg.train.lr0);
    detail::get_field(t, "train", "momentum", cfg.train.momentum);
    detail::get_field(t, "train", "weight_decay", cfg.train.weight_decay);
    detail::get_field(t, "train", "poly_power", cfg.train.poly_power);
    detail::get_field(t, "train", "seed", cfg.train.seed);
    detail::get_field(t, "train", "grad_clip_norm", cfg.train.grad_clip_norm);
    detail::get_field(t, "train", "use_prsa", cfg.train.use_prsa);
    detail::get_field(t, "train", "use_anpm", cfg.train.use_anpm);
    detail::get_field(t, "train", "use_noise_loss", cfg.train.use_noise_loss);
    detail::get_field(t, "train", "use_init_prsa", cfg.train.use_init_prsa);
    detail::get_field(t, "train", "use_ema", cfg.train.use_ema);
    detail::get_field(t, "train", "use_refined_for_masks", cfg.train.use_refined_for_masks);
    detail::get_enum(t, "train", "prototype_granularity", cfg.train.prototype_granularity,
                     detail::granularity_names());
    detail::get_field(t, "train", "checkpoint_every", cfg.train.checkpoint_every);

    YAML::Node a = root["affinity"];
    detail::check_keys(a, "affinity", {"sigma_l", "sigma_v", "radius", "mode"});
    detail::get_field(a, "affinity", "sigma_l", cfg.train.affinity.sigma_l);
    detail::get_field(a, "affinity", "sigma_v", cfg.train.affinity.sigma_v);
    detail::get_field(a, "affinity", "radius", cfg.train.affinity.radius);
    detail::get_enum(a, "affinity", "mode", cfg.train.affinity.mode, detail::affinity_mode_names());

    YAML::Node s = root["sparse_gen"];
    detail::check_keys(s, "sparse_gen",
                       {"mode", "contraction", "brush_sigma", "erosion_kernel", "erosion_kernel_size",
                        "erosion_iters", "target_area_fraction", "annotate_background"});
    detail::get_enum(s, "sparse_gen", "mode", cfg.sparse_gen.mode, detail::sparse_mode_names());
    detail::get_field(s, "sparse_gen", "contraction", cfg.sparse_gen.contraction);
    detail::get_field(s, "sparse_gen", "brush_sigma", cfg.sparse_gen.brush_sigma);
    detail::get_enum(s, "sparse_gen", "erosion_kernel", cfg.sparse_gen.erosion_kernel, detail::kernel_names());
    detail::get_field(s, "sparse_gen", "erosion_kernel_size", cfg.sparse_gen.erosion_kernel_size);
    detail::get_field(s, "sparse_gen", "erosion_iters", cfg.sparse_gen.erosion_iters);
    detail::get_field(s, "sparse_gen", "target_area_fraction", cfg.sparse_gen.target_area_fraction);
    detail::get_field(s, "sparse_gen", "annotate_background", cfg.sparse_gen.annotate_background);

    YAML::Node e = root["eval"];
    detail::check_keys(e, "eval", {"write_error_maps", "noise_report"});
    detail::get_field(e, "eval", "write_error_maps", cfg.eval.write_error_maps);
    detail::get_field(e, "eval", "noise_report", cfg.eval.noise_report);
  }
  cfg.validate();
  return cfg;
}

inline AppConfig load_config_string(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed YAML: ") + e.what());
  }
  return load_config_node(root);
}

inline AppConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return load_config_string(ss.str());
}

inline std::string serialize_config(const AppConfig& cfg) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  e << YAML::Key << "dataset" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "num_samples" << YAML::Value << cfg.dataset.num_samples;
  e << YAML::Key << "image_size" << YAML::Value << cfg.dataset.image_size;
  e << YAML::Key << "shapes" << YAML::Value << YAML::Flow << cfg.dataset.shapes;
  e << YAML::Key << "boundary_blur_sigma" << YAML::Value << cfg.dataset.boundary_blur_sigma;
  e << YAML::Key << "noise_std" << YAML::Value << cfg.dataset.noise_std;
  e << YAML::Key << "num_classes" << YAML::Value << cfg.dataset.num_classes;
  e << YAML::Key << "full_label_fraction" << YAML::Value << cfg.dataset.full_label_fraction;
  e << YAML::Key << "test_fraction" << YAML::Value << cfg.dataset.test_fraction;
  e << YAML::Key << "seed" << YAML::Value << cfg.dataset.seed;
  e << YAML::EndMap;
  e << YAML::Key << "network" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "in_channels" << YAML::Value << cfg.network.in_channels;
  e << YAML::Key << "num_classes" << YAML::Value << cfg.network.num_classes;
  e << YAML::Key << "base_width" << YAML::Value << cfg.network.base_width;
  e << YAML::Key << "depth" << YAML::Value << cfg.network.depth;
  e << YAML::Key << "tap_encoder" << YAML::Value << cfg.network.tap_encoder;
  e << YAML::Key << "tap_decoder" << YAML::Value << cfg.network.tap_decoder;
  e << YAML::EndMap;
  e << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "lambda1" << YAML::Value << cfg.train.lambda1;
  e << YAML::Key << "lambda2" << YAML::Value << cfg.train.lambda2;
  e << YAML::Key << "lambda3" << YAML::Value << cfg.train.lambda3;
  e << YAML::Key << "lambda4" << YAML::Value << cfg.train.lambda4;
  e << YAML::Key << "alpha" << YAML::Value << cfg.train.alpha;
  e << YAML::Key << "init_epochs" << YAML::Value << cfg.train.init_epochs;
  e << YAML::Key << "main_epochs" << YAML::Value << cfg.train.main_epochs;
  e << YAML::Key << "batch_size" << YAML::Value << cfg.train.batch_size;
  e << YAML::Key << "lr0" << YAML::Value << cfg.train.lr0;
  e << YAML::Key << "momentum" << YAML::Value << cfg.train.momentum;
  e << YAML::Key << "weight_decay" << YAML::Value << cfg.train.weight_decay;
  e << YAML::Key << "poly_power" << YAML::Value << cfg.train.poly_power;
  e << YAML::Key << "seed" << YAML::Value << cfg.train.seed;
  e << YAML::Key << "grad_clip_norm" << YAML::Value << cfg.train.grad_clip_norm;
  e << YAML::Key << "use_prsa" << YAML::Value << cfg.train.use_prsa;
  e << YAML::Key << "use_anpm" << YAML::Value << cfg.train.use_anpm;
  e << YAML::Key << "use_noise_loss" << YAML::Value << cfg.train.use_noise_loss;
  e << YAML::Key << "use_init_prsa" << YAML::Value << cfg.train.use_init_prsa;
  e << YAML::Key << "use_ema" << YAML::Value << cfg.train.use_ema;
  e << YAML::Key << "use_refined_for_masks" << YAML::Value << cfg.train.use_refined_for_masks;
  e << YAML::Key << "prototype_granularity" << YAML::Value
    << detail::enum_name(cfg.train.prototype_granularity, detail::granularity_names());
  e << YAML::Key << "checkpoint_every" << YAML::Value << cfg.train.checkpoint_every;
  e << YAML::EndMap;
  e << YAML::Key << "affinity" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "sigma_l" << YAML::Value << cfg.train.affinity.sigma_l;
  e << YAML::Key << "sigma_v" << YAML::Value << cfg.train.affinity.sigma_v;
  e << YAML::Key << "radius" << YAML::Value << cfg.train.affinity.radius;
  e << YAML::Key << "mode" << YAML::Value
    << detail::enum_name(cfg.train.affinity.mode, detail::affinity_mode_names());
  e << YAML::EndMap;
  e << YAML::Key << "sparse_gen" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "mode" << YAML::Value << detail::enum_name(cfg.sparse_gen.mode, detail::sparse_mode_names());
  e << YAML::Key << "contraction" << YAML::Value << cfg.sparse_gen.contraction;
  e << YAML::Key << "brush_sigma" << YAML::Value << cfg.sparse_gen.brush_sigma;
  e << YAML::Key << "erosion_kernel" << YAML::Value
    << detail::enum_name(cfg.sparse_gen.erosion_kernel, detail::kernel_names());
  e << YAML::Key << "erosion_kernel_size" << YAML::Value << cfg.sparse_gen.erosion_kernel_size;
  e << YAML::Key << "erosion_iters" << YAML::Value << cfg.sparse_gen.erosion_iters;
  e << YAML::Key << "target_area_fraction" << YAML::Value << cfg.sparse_gen.target_area_fraction;
  e << YAML::Key << "annotate_background" << YAML::Value << cfg.sparse_gen.annotate_background;
  e << YAML::EndMap;
  e << YAML::Key << "eval" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "write_error_maps" << YAML::Value << cfg.eval.write_error_maps;
  e << YAML::Key << "noise_report" << YAML::Value << cfg.eval.noise_report;
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

}  // namespace procns
