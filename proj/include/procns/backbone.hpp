#pragma once

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "procns/conv_ops.hpp"
#include "procns/ops.hpp"
#include "procns/rng.hpp"

namespace procns {

struct NetworkConfig {
  int in_channels = 1;
  int num_classes = 2;
  int base_width = 16;
  int depth = 4;
  int tap_encoder = 3;
  int tap_decoder = 3;

  void validate() const {
    if (num_classes < 2) throw ConfigError("network.num_classes must be >= 2");
    if (in_channels < 1) throw ConfigError("network.in_channels must be >= 1");
    if (base_width < 1) throw ConfigError("network.base_width must be >= 1");
    if (depth < 2) throw ConfigError("network.depth must be >= 2");
    if (tap_encoder < 1 || tap_encoder > depth)
      throw ConfigError("network.tap_encoder must lie in [1, depth]");
    if (tap_decoder < 1 || tap_decoder > depth)
      throw ConfigError("network.tap_decoder must lie in [1, depth]");
  }

  // Channel width of encoder block k (k=0 is the stem).
  int enc_width(int k) const { return base_width << k; }
  // Channel width of decoder block k (k=1..depth), i.e. base*2^(depth-k).
  int dec_width(int k) const { return base_width << (depth - k); }
};

template <class T>
struct ForwardResult {
  Tensor<T> logits;      // [C,H,W]
  Tensor<T> embed_high;  // encoder tap, [d_h, H/2^tap_e, W/2^tap_e]
  Tensor<T> embed_low;   // decoder tap, [d_l, H/2^(depth-tap_d), ...]
};

namespace detail {

template <class T>
struct ConvBlock {
  Tensor<T> w1, b1, g1, be1, w2, b2, g2, be2;

  void init(int cin, int cout, Rng& rng) {
    auto he = [&](int fan_in, std::vector<int> shape) {
      int64_t n = 1;
      for (int d : shape) n *= d;
      std::vector<T> v(static_cast<size_t>(n));
      double std = std::sqrt(2.0 / fan_in);
      for (auto& x : v) x = static_cast<T>(rng.normal(0.0, std));
      return Tensor<T>::from_data(std::move(shape), std::move(v), true);
    };
    w1 = he(cin * 9, {cout, cin, 3, 3});
    b1 = Tensor<T>::zeros({cout}, true);
    g1 = Tensor<T>::filled({cout}, T(1), true);
    be1 = Tensor<T>::zeros({cout}, true);
    w2 = he(cout * 9, {cout, cout, 3, 3});
    b2 = Tensor<T>::zeros({cout}, true);
    g2 = Tensor<T>::filled({cout}, T(1), true);
    be2 = Tensor<T>::zeros({cout}, true);
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    auto h = relu(instance_norm(conv2d(x, w1, b1), g1, be1));
    return relu(instance_norm(conv2d(h, w2, b2), g2, be2));
  }

  void collect(std::vector<Tensor<T>>& out) {
    for (auto* t : {&w1, &b1, &g1, &be1, &w2, &b2, &g2, &be2}) out.push_back(*t);
  }
};

}  // namespace detail

template <class T>
class UNet {
 public:
  explicit UNet(NetworkConfig cfg, uint64_t seed = 1) : cfg_(cfg) {
    cfg_.validate();
    auto rng = rng_stream(seed, "weight_init");
    stem_.init(cfg_.in_channels, cfg_.base_width, rng);
    enc_.resize(static_cast<size_t>(cfg_.depth));
    for (int k = 1; k <= cfg_.depth; ++k) enc_[static_cast<size_t>(k - 1)].init(cfg_.enc_width(k - 1), cfg_.enc_width(k), rng);
    dec_.resize(static_cast<size_t>(cfg_.depth));
    for (int k = 1; k <= cfg_.depth; ++k) {
      int up_in = (k == 1) ? cfg_.enc_width(cfg_.depth) : cfg_.dec_width(k - 1);
      int skip = cfg_.enc_width(cfg_.depth - k);
      dec_[static_cast<size_t>(k - 1)].init(up_in + skip, cfg_.dec_width(k), rng);
    }
    std::vector<T> hv(static_cast<size_t>(cfg_.num_classes) * cfg_.base_width);
    double std = std::sqrt(2.0 / cfg_.base_width);
    for (auto& x : hv) x = static_cast<T>(rng.normal(0.0, std));
    head_w_ = Tensor<T>::from_data({cfg_.num_classes, cfg_.base_width, 1, 1}, std::move(hv), true);
    head_b_ = Tensor<T>::zeros({cfg_.num_classes}, true);
    stem_.collect(params_);
    for (auto& b : enc_) b.collect(params_);
    for (auto& b : dec_) b.collect(params_);
    params_.push_back(head_w_);
    params_.push_back(head_b_);
  }

  ForwardResult<T> forward(const Tensor<T>& image) const {
    require(image.shape().size() == 3 && image.dim(0) == cfg_.in_channels,
            "forward expects [" + std::to_string(cfg_.in_channels) + ",H,W], got " + shape_str(image.shape()));
    int H = image.dim(1), W = image.dim(2);
    int div = 1 << cfg_.depth;
    require(H % div == 0 && W % div == 0,
            "spatial dims " + shape_str({H, W}) + " not divisible by 2^depth = " + std::to_string(div));
    std::vector<Tensor<T>> e;
    e.push_back(stem_.forward(image));
    for (int k = 1; k <= cfg_.depth; ++k) e.push_back(enc_[static_cast<size_t>(k - 1)].forward(maxpool2(e.back())));
    ForwardResult<T> res;
    res.embed_high = e[static_cast<size_t>(cfg_.tap_encoder)];
    Tensor<T> d = e.back();
    for (int k = 1; k <= cfg_.depth; ++k) {
      auto up = bilinear_resize(d, d.dim(1) * 2, d.dim(2) * 2);
      d = dec_[static_cast<size_t>(k - 1)].forward(concat_channels<T>({up, e[static_cast<size_t>(cfg_.depth - k)]}));
      if (k == cfg_.tap_decoder) res.embed_low = d;
    }
    res.logits = conv2d(d, head_w_, head_b_);
    return res;
  }

  const NetworkConfig& config() const { return cfg_; }
  std::vector<Tensor<T>>& params() { return params_; }
  const std::vector<Tensor<T>>& params() const { return params_; }

  int64_t param_count() const {
    int64_t n = 0;
    for (auto& p : params_) n += p.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void save(const std::string& path, int epoch, const std::string& stage, uint64_t seed) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write checkpoint: " + path);
    const char magic[8] = {'P', 'C', 'N', 'S', 'W', '0', '0', '1'};
    f.write(magic, 8);
    int32_t n = static_cast<int32_t>(params_.size());
    f.write(reinterpret_cast<const char*>(&n), 4);
    for (const auto& p : params_) {
      int32_t nd = static_cast<int32_t>(p.shape().size());
      f.write(reinterpret_cast<const char*>(&nd), 4);
      for (int d : p.shape()) {
        int32_t dd = d;
        f.write(reinterpret_cast<const char*>(&dd), 4);
      }
      for (auto x : p.data()) {
        double v = static_cast<double>(x);
        f.write(reinterpret_cast<const char*>(&v), 8);
      }
    }
    nlohmann::json manifest = {{"config",
                                {{"in_channels", cfg_.in_channels},
                                 {"num_classes", cfg_.num_classes},
                                 {"base_width", cfg_.base_width},
                                 {"depth", cfg_.depth},
                                 {"tap_encoder", cfg_.tap_encoder},
                                 {"tap_decoder", cfg_.tap_decoder}}},
                               {"epoch", epoch},
                               {"stage", stage},
                               {"rng_seed", seed}};
    std::ofstream mf(path + ".json");
    mf << manifest.dump(2) << "\n";
  }

  void load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::string(magic, 8) != "PCNSW001") throw DataError("not a checkpoint file: " + path);
    int32_t n = 0;
    f.read(reinterpret_cast<char*>(&n), 4);
    if (n != static_cast<int32_t>(params_.size()))
      throw DataError("incompatible checkpoint shape: expected " + std::to_string(params_.size()) +
                      " tensors, file has " + std::to_string(n));
    for (auto& p : params_) {
      int32_t nd = 0;
      f.read(reinterpret_cast<char*>(&nd), 4);
      std::vector<int> shape(static_cast<size_t>(nd));
      for (auto& d : shape) {
        int32_t dd = 0;
        f.read(reinterpret_cast<char*>(&dd), 4);
        d = dd;
      }
      if (shape != p.shape())
        throw DataError("incompatible checkpoint shape: tensor " + shape_str(shape) + " vs expected " +
                        shape_str(p.shape()));
      auto dst = p.data();
      for (size_t i = 0; i < dst.size(); ++i) {
        double v = 0;
        f.read(reinterpret_cast<char*>(&v), 8);
        dst[i] = static_cast<T>(v);
      }
    }
    if (!f) throw DataError("truncated checkpoint: " + path);
  }

 private:
  NetworkConfig cfg_;
  detail::ConvBlock<T> stem_;
  std::vector<detail::ConvBlock<T>> enc_, dec_;
  Tensor<T> head_w_, head_b_;
  std::vector<Tensor<T>> params_;
};

// Bilinear upsampling of an embedding tap to the label resolution.
template <class T>
Tensor<T> upsample_to(const Tensor<T>& embedding, int H, int W) {
  require(embedding.shape().size() == 3, "upsample_to expects [D,h,w]");
  require(H >= embedding.dim(1) && W >= embedding.dim(2), "upsample_to: target smaller than source");
  return bilinear_resize(embedding, H, W);
}

}  // namespace procns
