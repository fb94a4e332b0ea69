#pragma once

#include <map>
#include <string>
#include <vector>

#include "procns/image.hpp"

namespace procns {

// Per-sample EMA of softmax predictions across Initialization epochs. The
// first update for a sample seeds the average with its prediction.
template <class T>
class PredictionBuffer {
 public:
  explicit PredictionBuffer(T alpha = T(0.8)) : alpha_(alpha) {
    if (!(alpha > T(0) && alpha <= T(1))) throw ConfigError("ema alpha must be in (0,1]");
  }

  T alpha() const { return alpha_; }

  void update(const std::string& id, const std::vector<T>& p, int C, int H, int W, int epoch) {
    require(static_cast<int64_t>(p.size()) == static_cast<int64_t>(C) * H * W, "PredictionBuffer: size mismatch");
    auto it = entries_.find(id);
    if (it == entries_.end()) {
      entries_[id] = Entry{C, H, W, p, epoch};
      return;
    }
    Entry& e = it->second;
    require(e.C == C && e.H == H && e.W == W, "PredictionBuffer: shape changed for sample " + id);
    for (size_t i = 0; i < p.size(); ++i) e.p[i] = alpha_ * p[i] + (T(1) - alpha_) * e.p[i];
    e.last_epoch = epoch;
  }

  bool has(const std::string& id) const { return entries_.count(id) > 0; }

  const std::vector<T>& ema(const std::string& id) const {
    auto it = entries_.find(id);
    require(it != entries_.end(), "PredictionBuffer: unknown sample " + id);
    return it->second.p;
  }

  LabelMap pseudo_label(const std::string& id) const {
    auto it = entries_.find(id);
    require(it != entries_.end(), "PredictionBuffer: unknown sample " + id);
    const Entry& e = it->second;
    return argmax_label(e.p, e.C, e.H, e.W);
  }

  // Argmax labels at the end of the stage; every id must have been updated.
  std::map<std::string, LabelMap> finalize(const std::vector<std::string>& required_ids) const {
    std::vector<std::string> missing;
    for (const auto& id : required_ids)
      if (!entries_.count(id)) missing.push_back(id);
    if (!missing.empty()) {
      std::string msg = "pseudo-label finalize: samples never updated:";
      for (const auto& id : missing) msg += " " + id;
      throw MissingSampleError(msg, missing);
    }
    std::map<std::string, LabelMap> out;
    for (const auto& id : required_ids) out[id] = pseudo_label(id);
    return out;
  }

 private:
  struct Entry {
    int C, H, W;
    std::vector<T> p;
    int last_epoch;
  };
  T alpha_;
  std::map<std::string, Entry> entries_;
};

}  // namespace procns
