#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "procns/anpm.hpp"
#include "procns/backbone.hpp"
#include "procns/dataset.hpp"
#include "procns/evaluation.hpp"
#include "procns/losses.hpp"
#include "procns/prototypes.hpp"
#include "procns/pseudo_init.hpp"
#include "procns/train_config.hpp"

namespace procns {

struct EpochLog {
  int epoch = 0;  // global epoch index across stages
  Stage stage = Stage::Init;
  double lr = 0;
  double loss_total = 0, loss_pce1 = 0, loss_pce2 = 0, loss_prsa = 0, loss_noise = 0;
  double denoised_label_dsc = -1;   // -1: not measured
  double noisy_pixel_fraction = -1;
};

template <class T>
LabelMap predict_label(const UNet<T>& net, const Image& img) {
  auto z = zscore<T>(img);
  auto x = Tensor<T>::from_data({img.C, img.H, img.W}, std::move(z), false);
  auto prob = softmax_channels(net.forward(x).logits);
  std::vector<T> v(prob.data().begin(), prob.data().end());
  return argmax_label<T>(v, prob.dim(0), img.H, img.W);
}

template <class T>
MetricReport evaluate_model(const UNet<T>& net, const std::vector<Sample>& samples, int num_classes) {
  std::vector<std::string> ids;
  std::vector<LabelMap> preds, gts;
  for (const auto& s : samples) {
    if (!s.has_dense) continue;
    ids.push_back(s.id);
    preds.push_back(predict_label(net, s.image));
    gts.push_back(s.dense);
  }
  return evaluate_predictions(ids, preds, gts, num_classes);
}

class Trainer {
 public:
  using T = float;

  Trainer(const Dataset& ds, const NetworkConfig& ncfg, const TrainConfig& tcfg, std::string run_dir)
      : ds_(&ds),
        ncfg_(ncfg),
        cfg_(tcfg),
        run_dir_(std::move(run_dir)),
        net_(ncfg, tcfg.seed),
        buffer_(static_cast<T>(tcfg.alpha)) {
    ncfg_.validate();
    cfg_.validate();
    if (ncfg_.num_classes != ds.num_classes)
      throw ConfigError("network.num_classes = " + std::to_string(ncfg_.num_classes) +
                        " does not match dataset num_classes = " + std::to_string(ds.num_classes));
    for (const auto& s : ds.train)
      if (s.sparse.labeled_count() == 0)
        throw ZeroLabeledError("sample " + s.id + " has no labeled pixel");
    for (const auto& s : ds.train) {
      Prep p;
      p.zimg = zscore<T>(s.image);
      p.sparse_oh = label_to_onehot(s.sparse, ncfg_.num_classes);
      prep_.push_back(std::move(p));
    }
    for (auto& p : net_.params()) vel_.emplace_back(static_cast<size_t>(p.size()), T(0));
    namespace fs = std::filesystem;
    fs::create_directories(run_dir_);
    fs::create_directories(run_dir_ + "/checkpoints");
  }

  UNet<T>& net() { return net_; }
  const UNet<T>& net() const { return net_; }
  const std::vector<EpochLog>& logs() const { return logs_; }
  const std::map<std::string, LabelMap>& pseudo_labels() const { return pseudo_; }
  const std::string& run_dir() const { return run_dir_; }

  const std::map<std::string, ClassMask>& denoised_labels() const { return denoised_; }

  // Plugin entry: external pseudo-labels become the Main stage's initial
  // denoised labels; an external checkpoint may replace the weights.
  void set_initial_labels(const std::map<std::string, LabelMap>& labels) {
    std::vector<std::string> missing;
    for (const auto& s : ds_->train)
      if (!labels.count(s.id)) missing.push_back(s.id);
    if (!missing.empty()) throw MissingSampleError("initial pseudo-labels incomplete", missing);
    pseudo_.clear();
    for (const auto& s : ds_->train) {
      const LabelMap& lab = labels.at(s.id);
      if (lab.H != s.image.H || lab.W != s.image.W)
        throw DataError("pseudo-label shape mismatch for " + s.id);
      pseudo_[s.id] = lab;
    }
  }

  void resume(const std::string& checkpoint_path) { net_.load(checkpoint_path); }

  void run_initialization() {
    if (max_iter_ == 0) max_iter_ = global_iter_ + static_cast<int64_t>(cfg_.init_epochs) * iters_per_epoch();
    const double l1 = cfg_.lambda_init_prsa();
    for (int e = 0; e < cfg_.init_epochs; ++e) {
      EpochLog log;
      log.epoch = global_epoch_;
      log.stage = Stage::Init;
      log.lr = lr_schedule(global_iter_, max_iter_, cfg_.lr0, cfg_.poly_power);
      run_epoch(Stage::Init, e, l1, 0, 0, 0, log);
      if (cfg_.use_ema || e + 1 == cfg_.init_epochs) {
        for (size_t i = 0; i < prep_.size(); ++i) {
          auto prob = forward_prob_values(i);
          if (cfg_.use_ema)
            buffer_.update(ds_->train[i].id, prob, ncfg_.num_classes, ds_->train[i].image.H,
                           ds_->train[i].image.W, e);
          else
            pseudo_[ds_->train[i].id] =
                argmax_label<T>(prob, ncfg_.num_classes, ds_->train[i].image.H, ds_->train[i].image.W);
        }
      }
      append_log(log);
      maybe_checkpoint();
      ++global_epoch_;
    }
    if (cfg_.use_ema) {
      std::vector<std::string> ids;
      for (const auto& s : ds_->train) ids.push_back(s.id);
      pseudo_ = buffer_.finalize(ids);
    }
    namespace fs = std::filesystem;
    fs::create_directories(run_dir_ + "/pseudo_labels");
    for (const auto& [id, lab] : pseudo_)
      write_png_gray(run_dir_ + "/pseudo_labels/" + id + ".png", lab.idx.data(), lab.H, lab.W);
    net_.save(run_dir_ + "/checkpoints/init.ckpt", global_epoch_, "init", cfg_.seed);
  }

  void run_main() {
    if (pseudo_.empty()) throw DataError("main stage requires initial pseudo-labels (run init or supply them)");
    if (max_iter_ == 0 || global_iter_ >= max_iter_)
      max_iter_ = global_iter_ + static_cast<int64_t>(cfg_.main_epochs) * iters_per_epoch();
    const double l2 = cfg_.lambda2, l3 = cfg_.lambda_main_prsa(), l4 = cfg_.lambda_noise();

    denoised_.clear();
    masks_.clear();
    for (const auto& s : ds_->train) denoised_[s.id] = label_to_onehot(pseudo_.at(s.id), ncfg_.num_classes);
    write_snapshot(0);

    for (int e = 0; e < cfg_.main_epochs; ++e) {
      EpochLog log;
      log.epoch = global_epoch_;
      log.stage = Stage::Main;
      log.lr = lr_schedule(global_iter_, max_iter_, cfg_.lr0, cfg_.poly_power);
      run_epoch(Stage::Main, e, 0, l2, l3, l4 > 0 && !masks_.empty() ? l4 : 0, log);
      if (cfg_.use_anpm) update_labels_end_of_epoch(e + 1, log);
      append_log(log);
      maybe_checkpoint();
      ++global_epoch_;
    }
    net_.save(run_dir_ + "/checkpoints/final.ckpt", global_epoch_, "main", cfg_.seed);
  }

  void run_full() {
    max_iter_ = static_cast<int64_t>(cfg_.init_epochs + cfg_.main_epochs) * iters_per_epoch();
    run_initialization();
    run_main();
  }

 private:
  struct Prep {
    std::vector<T> zimg;
    ClassMask sparse_oh;
    std::vector<T> a_low;
    bool a_low_ready = false;
  };

  int64_t iters_per_epoch() const {
    int64_t n = static_cast<int64_t>(ds_->train.size());
    return (n + cfg_.batch_size - 1) / cfg_.batch_size;
  }

  Tensor<T> input_tensor(size_t i) const {
    const auto& s = ds_->train[i];
    return Tensor<T>::from_data({s.image.C, s.image.H, s.image.W}, prep_[i].zimg, false);
  }

  const std::vector<T>& a_low(size_t i) {
    if (!prep_[i].a_low_ready) {
      const auto& s = ds_->train[i];
      prep_[i].a_low = compute_a_low<T>(prep_[i].zimg, s.image.C, s.image.H, s.image.W, cfg_.affinity);
      prep_[i].a_low_ready = true;
    }
    return prep_[i].a_low;
  }

  std::vector<T> forward_prob_values(size_t i) const {
    auto prob = softmax_channels(net_.forward(input_tensor(i)).logits);
    return std::vector<T>(prob.data().begin(), prob.data().end());
  }

  // One optimization epoch. Exactly the terms with nonzero weight are
  // evaluated, so zero-weight configurations match their reduced baselines
  // bitwise.
  void run_epoch(Stage stage, int stage_epoch, double l1, double l2, double l3, double l4, EpochLog& log) {
    std::vector<size_t> order(prep_.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto rng = rng_stream(cfg_.seed, std::string("shuffle_") + stage_name(stage) + "_" + std::to_string(stage_epoch));
    rng.shuffle(order.begin(), order.end());

    double sum_pce1 = 0, sum_pce2 = 0, sum_prsa = 0, sum_noise = 0;
    const size_t N = order.size();

    for (size_t b0 = 0; b0 < N; b0 += static_cast<size_t>(cfg_.batch_size)) {
      size_t b1 = std::min(N, b0 + static_cast<size_t>(cfg_.batch_size));
      size_t B = b1 - b0;

      std::vector<ForwardResult<T>> fwd(B);
      std::vector<Tensor<T>> probs(B);
      for (size_t k = 0; k < B; ++k) {
        fwd[k] = net_.forward(input_tensor(order[b0 + k]));
        probs[k] = softmax_channels(fwd[k].logits);
      }

      bool need_phat = l1 > 0 || l3 > 0 || l4 > 0;
      std::vector<Tensor<T>> phat(B);
      if (need_phat) {
        std::vector<Tensor<T>> highs(B), lows(B);
        std::vector<ClassMask> labels(B);
        for (size_t k = 0; k < B; ++k) {
          const auto& s = ds_->train[order[b0 + k]];
          highs[k] = upsample_to(fwd[k].embed_high, s.image.H, s.image.W);
          lows[k] = upsample_to(fwd[k].embed_low, s.image.H, s.image.W);
          labels[k] = stage == Stage::Init ? prep_[order[b0 + k]].sparse_oh
                                           : denoised_.at(s.id);
        }
        auto protos =
            build_prototypes(highs, lows, labels, cfg_.prototype_granularity, current_memory(stage));
        for (size_t k = 0; k < B; ++k) {
          auto embeds = concat_channels<T>({highs[k], lows[k]});
          auto rel = relation_map(embeds, protos.concat[k]);
          phat[k] = refine_prediction(fwd[k].logits, rel);
        }
      }

      Tensor<T> total;
      bool have_total = false;
      for (size_t k = 0; k < B; ++k) {
        size_t i = order[b0 + k];
        const auto& s = ds_->train[i];
        auto pce1 = pce_loss(probs[k], prep_[i].sparse_oh);
        sum_pce1 += pce1.item();
        Tensor<T> li = pce1;
        if (l2 > 0) {
          const ClassMask& dl = denoised_.at(s.id);
          bool any = false;
          for (auto v : dl.v)
            if (v) {
              any = true;
              break;
            }
          if (any) {
            auto pce2 = pce_loss(probs[k], dl);
            sum_pce2 += pce2.item();
            li = add(li, scale(pce2, static_cast<T>(l2)));
          }
        }
        double lp = stage == Stage::Init ? l1 : l3;
        if (lp > 0) {
          auto pr = prsa_loss_from_phat(a_low(i), phat[k], cfg_.affinity);
          sum_prsa += pr.item();
          li = add(li, scale(pr, static_cast<T>(lp)));
        }
        if (l4 > 0) {
          auto it = masks_.find(s.id);
          if (it != masks_.end()) {
            auto re = reassign_noisy(it->second, probs[k], phat[k].detach());
            auto nd = soft_dice_loss(re.p_noisy, re.y_soft);
            sum_noise += nd.item();
            li = add(li, scale(nd, static_cast<T>(l4)));
          }
        }
        total = have_total ? add(total, li) : li;
        have_total = true;
      }
      total = scale(total, static_cast<T>(1.0 / static_cast<double>(B)));
      net_.zero_grad();
      total.backward();
      sgd_step(lr_schedule(global_iter_, max_iter_, cfg_.lr0, cfg_.poly_power));
      ++global_iter_;
    }

    double n = static_cast<double>(N);
    log.loss_pce1 = sum_pce1 / n;
    log.loss_pce2 = sum_pce2 / n;
    log.loss_prsa = sum_prsa / n;
    log.loss_noise = sum_noise / n;
    double lp = stage == Stage::Init ? l1 : l3;
    log.loss_total = log.loss_pce1 + l2 * log.loss_pce2 + lp * log.loss_prsa + l4 * log.loss_noise;
  }

  PrototypeMemory<T>* current_memory(Stage stage) {
    int dh = ncfg_.enc_width(ncfg_.tap_encoder);
    int dl = ncfg_.dec_width(ncfg_.tap_decoder);
    if (!memory_) memory_ = std::make_unique<PrototypeMemory<T>>(ncfg_.num_classes, dh, dl);
    (void)stage;
    return memory_.get();
  }

  // End of Main epoch t: judge the current predictions against the frozen
  // labels, shrink the labels, and stash the noisy masks for epoch t+1.
  void update_labels_end_of_epoch(int snapshot_index, EpochLog& log) {
    const int C = ncfg_.num_classes;
    double dsc_sum = 0;
    int64_t dsc_n = 0;
    int64_t noisy = 0, pixels = 0;
    for (size_t i = 0; i < prep_.size(); ++i) {
      const auto& s = ds_->train[i];
      std::vector<T> pred = cfg_.use_refined_for_masks ? refined_prob_values(i) : forward_prob_values(i);
      const ClassMask& prev = denoised_.at(s.id);
      auto rm = extract_masks(pred, prev);
      denoised_[s.id] = update_denoised_label(rm.reliable, prev);
      masks_[s.id] = rm.noisy;

      int64_t hw = prev.plane_size();
      for (int64_t m = 0; m < hw; ++m) {
        bool any = false;
        for (int c = 0; c < C; ++c) any |= rm.noisy.v[static_cast<size_t>(c) * hw + m] != 0;
        noisy += any;
      }
      pixels += hw;

      if (s.has_dense) {
        const ClassMask& cur = denoised_.at(s.id);
        for (int c = 1; c < C; ++c) {
          BinMask pm(static_cast<size_t>(hw)), gm(static_cast<size_t>(hw));
          for (int64_t m = 0; m < hw; ++m) {
            pm[static_cast<size_t>(m)] = cur.v[static_cast<size_t>(c) * hw + m];
            gm[static_cast<size_t>(m)] = s.dense.idx[static_cast<size_t>(m)] == c;
          }
          dsc_sum += dsc(pm, gm);
          ++dsc_n;
        }
      }
    }
    write_snapshot(snapshot_index);
    if (dsc_n) log.denoised_label_dsc = dsc_sum / static_cast<double>(dsc_n);
    log.noisy_pixel_fraction = static_cast<double>(noisy) / static_cast<double>(pixels);
  }

  std::vector<T> refined_prob_values(size_t i) {
    const auto& s = ds_->train[i];
    auto fr = net_.forward(input_tensor(i));
    auto high = upsample_to(fr.embed_high, s.image.H, s.image.W);
    auto low = upsample_to(fr.embed_low, s.image.H, s.image.W);
    auto protos = build_prototypes<T>({high}, {low}, {denoised_.at(s.id)}, cfg_.prototype_granularity);
    auto rel = relation_map(concat_channels<T>({high, low}), protos.concat[0]);
    auto ph = refine_prediction(fr.logits, rel);
    return std::vector<T>(ph.data().begin(), ph.data().end());
  }

  void write_snapshot(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "epoch_%04d", index);
    std::string dir = run_dir_ + "/snapshots/" + buf;
    std::filesystem::create_directories(dir);
    for (const auto& s : ds_->train) {
      LabelMap lab = onehot_to_label(denoised_.at(s.id));
      write_png_gray(dir + "/" + s.id + ".png", lab.idx.data(), lab.H, lab.W);
    }
  }

  void sgd_step(double lr) {
    auto& params = net_.params();
    if (cfg_.grad_clip_norm > 0) {
      double sq = 0;
      for (auto& p : params) {
        auto g = p.grad();
        for (auto x : g) sq += static_cast<double>(x) * x;
      }
      double norm = std::sqrt(sq);
      if (norm > cfg_.grad_clip_norm) {
        T s = static_cast<T>(cfg_.grad_clip_norm / norm);
        for (auto& p : params) {
          auto g = p.grad();
          for (auto& x : g) x *= s;
        }
      }
    }
    for (size_t t = 0; t < params.size(); ++t) {
      auto w = params[t].data();
      auto g = params[t].grad();
      auto& v = vel_[t];
      const T mu = static_cast<T>(cfg_.momentum), wd = static_cast<T>(cfg_.weight_decay),
              step = static_cast<T>(lr);
      for (size_t j = 0; j < v.size(); ++j) {
        T gj = g[j] + wd * w[j];
        v[j] = mu * v[j] + gj;
        w[j] -= step * v[j];
      }
    }
  }

  void append_log(const EpochLog& log) {
    logs_.push_back(log);
    nlohmann::json j = {{"epoch", log.epoch},
                        {"stage", stage_name(log.stage)},
                        {"lr", log.lr},
                        {"loss_total", log.loss_total},
                        {"loss_pce1", log.loss_pce1},
                        {"loss_pce2", log.loss_pce2},
                        {"loss_prsa", log.loss_prsa},
                        {"loss_noise", log.loss_noise}};
    if (log.denoised_label_dsc >= 0) j["denoised_label_dsc"] = log.denoised_label_dsc;
    if (log.noisy_pixel_fraction >= 0) j["noisy_pixel_fraction"] = log.noisy_pixel_fraction;
    std::ofstream f(run_dir_ + "/logs.jsonl", std::ios::app);
    if (!f) throw DataError("cannot append to " + run_dir_ + "/logs.jsonl");
    f << j.dump() << "\n";
  }

  void maybe_checkpoint() {
    if (cfg_.checkpoint_every <= 0 || (global_epoch_ + 1) % cfg_.checkpoint_every != 0) return;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "epoch_%04d.ckpt", global_epoch_);
    net_.save(run_dir_ + "/checkpoints/" + buf, global_epoch_, "periodic", cfg_.seed);
  }

  const Dataset* ds_;
  NetworkConfig ncfg_;
  TrainConfig cfg_;
  std::string run_dir_;
  UNet<T> net_;
  PredictionBuffer<T> buffer_;
  std::vector<Prep> prep_;
  std::vector<std::vector<T>> vel_;
  std::map<std::string, LabelMap> pseudo_;
  std::map<std::string, ClassMask> denoised_;
  std::map<std::string, ClassMask> masks_;
  std::unique_ptr<PrototypeMemory<T>> memory_;
  std::vector<EpochLog> logs_;
  int global_epoch_ = 0;
  int64_t global_iter_ = 0;
  int64_t max_iter_ = 0;
};

}  // namespace procns
