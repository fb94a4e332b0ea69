#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "procns/config.hpp"
#include "procns/dataset.hpp"
#include "procns/evaluation.hpp"
#include "procns/sparse_gen.hpp"
#include "procns/trainer.hpp"

namespace fs = std::filesystem;
using namespace procns;

namespace {

std::string iso_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void append_manifest(const std::string& run_dir, nlohmann::json record) {
  record["time"] = iso_now();
  std::ofstream f(run_dir + "/manifest.jsonl", std::ios::app);
  if (!f) throw DataError("cannot append to " + run_dir + "/manifest.jsonl");
  f << record.dump() << "\n";
}

std::string runs_root() {
  if (const char* env = std::getenv("PROCNS_RUNS_DIR")) return env;
  return "runs";
}

std::string fresh_run_dir(const std::string& explicit_dir, const std::string& hint) {
  if (!explicit_dir.empty()) return explicit_dir;
  std::string base = runs_root() + "/" + hint;
  std::string dir = base;
  for (int k = 2; fs::exists(dir); ++k) dir = base + "-" + std::to_string(k);
  return dir;
}

void apply_ablation(TrainConfig& cfg, const std::string& list) {
  if (list.empty()) return;
  std::stringstream ss(list);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "no-prsa")
      cfg.use_prsa = false;
    else if (tok == "no-anpm")
      cfg.use_anpm = false;
    else if (tok == "no-noise")
      cfg.use_noise_loss = false;
    else if (tok == "no-init-prsa")
      cfg.use_init_prsa = false;
    else if (tok == "no-ema")
      cfg.use_ema = false;
    else
      throw ConfigError("unknown ablation flag '" + tok +
                        "' (expected no-prsa|no-anpm|no-noise|no-init-prsa|no-ema)");
  }
}

void print_warnings(const GenWarnings& warn) {
  for (const auto& m : warn.messages) std::cerr << "warning: " << m << "\n";
}

std::map<std::string, LabelMap> read_label_dir(const std::string& dir, const Dataset& ds) {
  std::map<std::string, LabelMap> out;
  std::vector<std::string> missing;
  for (const auto& s : ds.train) {
    std::string p = dir + "/" + s.id + ".png";
    if (!fs::exists(p)) {
      missing.push_back(s.id);
      continue;
    }
    PngGray png = read_png_gray(p);
    LabelMap lab{png.H, png.W};
    lab.idx = std::move(png.pix);
    out[s.id] = std::move(lab);
  }
  if (!missing.empty()) throw MissingSampleError("pseudo-label directory " + dir + " is missing samples", missing);
  return out;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
  AppConfig cfg = config_path.empty() ? AppConfig{} : load_config(config_path);
  GenWarnings warn;
  gen_synthetic_dataset(cfg.dataset, cfg.sparse_gen, out_dir, &warn);
  print_warnings(warn);
  Dataset ds = load_dataset(out_dir);
  std::cout << "wrote " << ds.train.size() << " train / " << ds.test.size() << " test samples to " << out_dir
            << " (manifest hash " << ds.manifest_hash << ")\n";
  return 0;
}

int cmd_gen_sparse(const std::string& config_path, const std::string& data_dir, const std::string& out_dir) {
  AppConfig cfg = config_path.empty() ? AppConfig{} : load_config(config_path);
  Dataset ds = load_dataset(data_dir);
  fs::create_directories(out_dir);
  GenWarnings warn;
  double prop_sum = 0;
  int n = 0;
  auto emit = [&](const Sample& s) {
    if (!s.has_dense) {
      warn.add("sample " + s.id + " has no dense label; skipped");
      return;
    }
    LabelMap sparse = gen_sparse(s.dense, ds.num_classes, cfg.sparse_gen, &warn);
    write_png_gray(out_dir + "/" + s.id + ".png", sparse.idx.data(), sparse.H, sparse.W);
    prop_sum += annotation_stats(sparse, s.dense, ds.num_classes).proportion;
    ++n;
  };
  for (const auto& s : ds.train) emit(s);
  print_warnings(warn);
  if (n == 0) throw DataError("no samples with dense labels in " + data_dir);
  std::printf("wrote %d sparse labels to %s (mean annotation proportion %.4f)\n", n, out_dir.c_str(),
              prop_sum / n);
  return 0;
}

void run_eval_outputs(const UNet<float>& net, const Dataset& ds, const AppConfig& cfg,
                      const std::string& out_dir, const std::string& snapshots_dir, bool noise_report) {
  fs::create_directories(out_dir);
  MetricReport rep = evaluate_model(net, ds.test, ds.num_classes);
  write_metrics_csv(out_dir + "/metrics.csv", rep);
  std::printf("test samples: %zu  mean DSC %.4f  mean HD95 %.3f\n", rep.rows.size() / std::max<size_t>(1, ds.num_classes - 1),
              rep.mean_dsc, rep.mean_hd95);
  for (const auto& [c, v] : rep.class_dsc)
    std::printf("  class %d (%s): DSC %.4f  HD95 %.3f\n", c,
                c < static_cast<int>(ds.class_names.size()) ? ds.class_names[c].c_str() : "?", v,
                rep.class_hd95.at(c));

  if (cfg.eval.write_error_maps) {
    fs::create_directories(out_dir + "/error_maps");
    for (const auto& s : ds.test) {
      if (!s.has_dense) continue;
      LabelMap pred = predict_label(net, s.image);
      write_error_map(out_dir + "/error_maps/" + s.id + ".png", pred, s.dense);
    }
  }

  if (noise_report) {
    if (snapshots_dir.empty() || !fs::exists(snapshots_dir))
      throw DataError("noise report requested but no snapshot directory at " +
                      (snapshots_dir.empty() ? std::string("<none>") : snapshots_dir));
    std::map<std::string, LabelMap> gt;
    for (const auto& s : ds.train)
      if (s.has_dense) gt[s.id] = s.dense;
    if (gt.empty()) throw DataError("noise report requires dense labels for train samples");
    std::vector<std::string> warnings;
    auto entries = noise_suppression_report(snapshots_dir, gt, ds.num_classes, out_dir + "/noise_report.csv",
                                            out_dir + "/noise_report.png", &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    std::printf("noise report: %zu epochs, first DSC %.4f, last DSC %.4f\n", entries.size(),
                entries.front().mean_dsc, entries.back().mean_dsc);
  }
}

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& run_dir_arg,
              const std::string& stage, const std::string& pseudo_dir, const std::string& resume_ckpt,
              const std::string& ablation) {
  AppConfig cfg = config_path.empty() ? AppConfig{} : load_config(config_path);
  apply_ablation(cfg.train, ablation);
  cfg.train.validate();
  if (stage != "init" && stage != "main" && stage != "full")
    throw ConfigError("--stage must be init|main|full, got '" + stage + "'");
  if (stage == "main" && pseudo_dir.empty())
    throw ConfigError("--stage main requires --pseudo-labels DIR (or run --stage full)");

  Dataset ds = load_dataset(data_dir);
  cfg.network.num_classes = ds.num_classes;

  std::string run_dir = fresh_run_dir(run_dir_arg, "run-" + stage + "-seed" + std::to_string(cfg.train.seed));
  Trainer tr(ds, cfg.network, cfg.train, run_dir);
  {
    std::ofstream f(run_dir + "/config.yaml");
    f << serialize_config(cfg);
  }
  append_manifest(run_dir, {{"event", "train_start"},
                            {"stage", stage},
                            {"data_dir", data_dir},
                            {"dataset_manifest_hash", ds.manifest_hash},
                            {"seed", cfg.train.seed},
                            {"config", "config.yaml"}});

  if (!resume_ckpt.empty()) {
    tr.resume(resume_ckpt);
    append_manifest(run_dir, {{"event", "resume"}, {"checkpoint", resume_ckpt}});
  }
  if (!pseudo_dir.empty()) {
    tr.set_initial_labels(read_label_dir(pseudo_dir, ds));
    append_manifest(run_dir, {{"event", "external_pseudo_labels"}, {"dir", pseudo_dir}});
  }

  if (stage == "init") {
    tr.run_initialization();
    append_manifest(run_dir, {{"event", "artifact"}, {"path", "checkpoints/init.ckpt"}});
    append_manifest(run_dir, {{"event", "artifact"}, {"path", "pseudo_labels"}});
  } else if (stage == "main") {
    tr.run_main();
    append_manifest(run_dir, {{"event", "artifact"}, {"path", "checkpoints/final.ckpt"}});
    append_manifest(run_dir, {{"event", "artifact"}, {"path", "snapshots"}});
  } else {
    tr.run_full();
    append_manifest(run_dir, {{"event", "artifact"}, {"path", "checkpoints/init.ckpt"}});
    append_manifest(run_dir, {{"event", "artifact"}, {"path", "checkpoints/final.ckpt"}});
    append_manifest(run_dir, {{"event", "artifact"}, {"path", "pseudo_labels"}});
    append_manifest(run_dir, {{"event", "artifact"}, {"path", "snapshots"}});
  }
  append_manifest(run_dir, {{"event", "artifact"}, {"path", "logs.jsonl"}});

  run_eval_outputs(tr.net(), ds, cfg, run_dir + "/eval", run_dir + "/snapshots", cfg.eval.noise_report);
  append_manifest(run_dir, {{"event", "artifact"}, {"path", "eval"}});
  std::cout << "run dir: " << run_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& run_dir, const std::string& ckpt_arg, const std::string& config_path,
             const std::string& data_dir, const std::string& out_arg, bool noise_report) {
  std::string config_file = config_path, ckpt = ckpt_arg, snapshots;
  if (!run_dir.empty()) {
    if (config_file.empty()) config_file = run_dir + "/config.yaml";
    if (ckpt.empty()) {
      ckpt = run_dir + "/checkpoints/final.ckpt";
      if (!fs::exists(ckpt)) {
        std::string alt = run_dir + "/checkpoints/init.ckpt";
        if (fs::exists(alt))
          ckpt = alt;
        else
          throw DataError("missing checkpoint: expected " + ckpt);
      }
    }
    snapshots = run_dir + "/snapshots";
  }
  if (ckpt.empty()) throw ConfigError("eval requires --run DIR or --checkpoint FILE");
  if (!fs::exists(ckpt)) throw DataError("missing checkpoint: expected " + ckpt);
  AppConfig cfg = config_file.empty() ? AppConfig{} : load_config(config_file);

  Dataset ds = load_dataset(data_dir);
  cfg.network.num_classes = ds.num_classes;
  cfg.network.validate();
  UNet<float> net(cfg.network, cfg.train.seed);
  net.load(ckpt);

  std::string out_dir = out_arg.empty() ? (run_dir.empty() ? "eval_out" : run_dir + "/eval") : out_arg;
  run_eval_outputs(net, ds, cfg, out_dir, snapshots, noise_report || cfg.eval.noise_report);
  std::cout << "eval outputs in " << out_dir << "\n";
  return 0;
}

int cmd_export_pseudo(const std::string& run_dir, const std::string& out_dir, int epoch) {
  std::string src;
  if (epoch < 0) {
    src = run_dir + "/pseudo_labels";
  } else {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "/snapshots/epoch_%04d", epoch);
    src = run_dir + buf;
  }
  if (!fs::exists(src)) throw DataError("no labels to export at " + src);
  fs::create_directories(out_dir);
  int n = 0;
  for (const auto& e : fs::directory_iterator(src)) {
    if (e.path().extension() != ".png") continue;
    fs::copy_file(e.path(), fs::path(out_dir) / e.path().filename(), fs::copy_options::overwrite_existing);
    ++n;
  }
  if (n == 0) throw DataError("no label PNGs found in " + src);
  std::cout << "exported " << n << " label files to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly-supervised segmentation trainer with prototype-refined affinity and noise masking"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, run_dir, stage = "full", pseudo_dir, resume_ckpt, ablation;
  std::string ckpt;
  int epoch = -1;
  bool noise_report = false;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic sparse-labeled dataset");
  synth->add_option("--config", config_path, "YAML config (dataset + sparse_gen sections)");
  synth->add_option("--out", out_dir, "Output dataset directory")->required();

  auto* gen = app.add_subcommand("gen-sparse", "Re-generate sparse labels from dense labels");
  gen->add_option("--config", config_path, "YAML config (sparse_gen section)");
  gen->add_option("--data", data_dir, "Dataset directory")->required();
  gen->add_option("--out", out_dir, "Output directory for sparse label PNGs")->required();

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config_path, "YAML config");
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--run", run_dir, "Run directory (default: $PROCNS_RUNS_DIR or ./runs)");
  train->add_option("--stage", stage, "init|main|full (default full)");
  train->add_option("--pseudo-labels", pseudo_dir, "External pseudo-label directory (plugin mode)");
  train->add_option("--resume", resume_ckpt, "Checkpoint to start from");
  train->add_option("--ablation", ablation, "Comma list: no-prsa,no-anpm,no-noise,no-init-prsa,no-ema");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("--run", run_dir, "Run directory (checkpoint + config + snapshots)");
  eval->add_option("--checkpoint", ckpt, "Checkpoint file (alternative to --run)");
  eval->add_option("--config", config_path, "YAML config (required with --checkpoint)");
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--out", out_dir, "Output directory");
  eval->add_flag("--noise-report", noise_report, "Emit per-epoch denoised-label DSC CSV + plot");

  auto* expp = app.add_subcommand("export-pseudo", "Export pseudo/denoised labels from a run");
  expp->add_option("--run", run_dir, "Run directory")->required();
  expp->add_option("--out", out_dir, "Output directory")->required();
  expp->add_option("--epoch", epoch, "Snapshot epoch to export (default: initial pseudo-labels)");

  try {
    app.parse(argc, argv);
    if (*synth) return cmd_synth(config_path, out_dir);
    if (*gen) return cmd_gen_sparse(config_path, data_dir, out_dir);
    if (*train) return cmd_train(config_path, data_dir, run_dir, stage, pseudo_dir, resume_ckpt, ablation);
    if (*eval) return cmd_eval(run_dir, ckpt, config_path, data_dir, out_dir, noise_report);
    if (*expp) return cmd_export_pseudo(run_dir, out_dir, epoch);
  } catch (const CLI::ParseError& e) {
    int r = app.exit(e);
    return r == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
