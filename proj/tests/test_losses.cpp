#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "procns/losses.hpp"
#include "procns/ops.hpp"
#include "procns/prototypes.hpp"
#include "procns/rng.hpp"

using namespace procns;

namespace {

// All-pairs reference: scans every pixel pair and tests window membership
// instead of sliding windows, then applies the loss formula directly.
template <class T>
double naive_prsa(const std::vector<T>& image, int Cimg, const std::vector<T>& phat, int C, int H, int W,
                  const AffinityConfig& cfg) {
  int64_t hw = static_cast<int64_t>(H) * W;
  std::vector<double> alow(static_cast<size_t>(hw), 0.0);
  std::vector<double> ahigh(static_cast<size_t>(C) * hw, 0.0);
  std::vector<T> vm(static_cast<size_t>(Cimg)), vn(static_cast<size_t>(Cimg));
  for (int64_t m = 0; m < hw; ++m) {
    int im = static_cast<int>(m / W), jm = static_cast<int>(m % W);
    for (int c = 0; c < Cimg; ++c) vm[static_cast<size_t>(c)] = image[static_cast<size_t>(c * hw + m)];
    for (int64_t n = 0; n < hw; ++n) {
      if (n == m) continue;
      int in_ = static_cast<int>(n / W), jn = static_cast<int>(n % W);
      if (std::abs(in_ - im) > cfg.radius || std::abs(jn - jm) > cfg.radius) continue;
      for (int c = 0; c < Cimg; ++c) vn[static_cast<size_t>(c)] = image[static_cast<size_t>(c * hw + n)];
      alow[static_cast<size_t>(m)] += low_level_weight<T>(im, jm, in_, jn, vm, vn, cfg);
      for (int c = 0; c < C; ++c)
        ahigh[static_cast<size_t>(c * hw + m)] += static_cast<double>(phat[static_cast<size_t>(c * hw + n)]);
    }
  }
  double total = 0;
  for (int64_t m = 0; m < hw; ++m) {
    if (cfg.mode == AffinityConfig::Mode::ClassMatched) {
      for (int c = 0; c < C; ++c)
        total += ahigh[static_cast<size_t>(c * hw + m)] * alow[static_cast<size_t>(m)] *
                 static_cast<double>(phat[static_cast<size_t>(c * hw + m)]);
    } else {
      double sh = 0, sp = 0;
      for (int c = 0; c < C; ++c) {
        sh += ahigh[static_cast<size_t>(c * hw + m)];
        sp += static_cast<double>(phat[static_cast<size_t>(c * hw + m)]);
      }
      total += sh * alow[static_cast<size_t>(m)] * sp;
    }
  }
  return -total / static_cast<double>(hw);
}

template <class T>
std::vector<T> softmax_cols(const std::vector<T>& logits, int C, int64_t hw) {
  std::vector<T> p(logits.size());
  for (int64_t m = 0; m < hw; ++m) {
    double mx = logits[static_cast<size_t>(m)];
    for (int c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(logits[static_cast<size_t>(c * hw + m)]));
    double s = 0;
    for (int c = 0; c < C; ++c) s += std::exp(static_cast<double>(logits[static_cast<size_t>(c * hw + m)]) - mx);
    for (int c = 0; c < C; ++c)
      p[static_cast<size_t>(c * hw + m)] =
          static_cast<T>(std::exp(static_cast<double>(logits[static_cast<size_t>(c * hw + m)]) - mx) / s);
  }
  return p;
}

ClassMask mask_of(int C, int H, int W, const std::vector<uint8_t>& planes) {
  ClassMask m(C, H, W);
  m.v = planes;
  return m;
}

AffinityConfig omega_one() {
  AffinityConfig cfg;
  cfg.sigma_l = 1e9;
  cfg.sigma_v = 1e9;
  cfg.radius = 5;
  return cfg;
}

}  // namespace

TEST_CASE("low level weight oracles") {
  AffinityConfig cfg;  // sigma_l 6, sigma_v 0.1
  std::vector<float> same = {0.3f}, far_v = {0.4f};
  CHECK(low_level_weight<float>(0, 0, 0, 0, same, same, cfg) == Catch::Approx(1.0));
  CHECK(low_level_weight<float>(0, 0, 0, 0, same, far_v, cfg) == Catch::Approx(std::exp(-0.5)));
  CHECK(low_level_weight<float>(0, 0, 0, 1, same, same, cfg) == Catch::Approx(std::exp(-1.0 / 72.0)));
  // Both penalties multiply.
  CHECK(low_level_weight<float>(0, 0, 0, 1, same, far_v, cfg) ==
        Catch::Approx(std::exp(-1.0 / 72.0 - 0.5)));
}

TEST_CASE("low level weight generalizes to channel means") {
  AffinityConfig cfg;
  std::vector<float> a = {0.0f, 0.0f}, b = {0.1f, 0.1f};
  // Mean squared channel difference = 0.01 -> same as the scalar case.
  CHECK(low_level_weight<float>(0, 0, 0, 0, a, b, cfg) == Catch::Approx(std::exp(-0.5)));
}

TEST_CASE("a_low on a 1x2 constant image") {
  AffinityConfig cfg;
  std::vector<float> img = {0.7f, 0.7f};
  auto alow = compute_a_low(img, 1, 1, 2, cfg);
  REQUIRE(alow.size() == 2);
  CHECK(alow[0] == Catch::Approx(std::exp(-1.0 / 72.0)));
  CHECK(alow[1] == Catch::Approx(std::exp(-1.0 / 72.0)));
}

TEST_CASE("a_low on a 1x1 image is zero") {
  std::vector<float> img = {0.5f};
  AffinityConfig cfg;
  auto alow = compute_a_low(img, 1, 1, 1, cfg);
  REQUIRE(alow.size() == 1);
  CHECK(alow[0] == 0.0f);
  auto phat = Tensor<float>::from_data({2, 1, 1}, {0.5f, 0.5f});
  CHECK(prsa_loss_from_phat(alow, phat, cfg).item() == 0.0f);
}

TEST_CASE("a_low window truncates at borders") {
  // 3x3 constant image, radius 1: corner has 3 neighbors, center 8.
  AffinityConfig cfg = omega_one();
  cfg.radius = 1;
  std::vector<float> img(9, 0.2f);
  auto alow = compute_a_low(img, 1, 3, 3, cfg);
  CHECK(alow[0] == Catch::Approx(3.0));
  CHECK(alow[1] == Catch::Approx(5.0));
  CHECK(alow[4] == Catch::Approx(8.0));
}

TEST_CASE("class-matched loss on the 1x2 uniform instance is -0.5") {
  AffinityConfig cfg = omega_one();
  std::vector<float> img = {0.3f, 0.3f};
  auto alow = compute_a_low(img, 1, 1, 2, cfg);
  auto phat = Tensor<float>::from_data({2, 1, 2}, {0.5f, 0.5f, 0.5f, 0.5f});
  CHECK(prsa_loss_from_phat(alow, phat, cfg).item() == Catch::Approx(-0.5));
}

TEST_CASE("literal mode sums classes before multiplying") {
  AffinityConfig cfg = omega_one();
  cfg.mode = AffinityConfig::Mode::Literal;
  std::vector<float> img = {0.3f, 0.3f};
  auto alow = compute_a_low(img, 1, 1, 2, cfg);
  auto phat = Tensor<float>::from_data({2, 1, 2}, {0.5f, 0.5f, 0.5f, 0.5f});
  // Each pixel: (sum_c A_high = 1) * (A_low = 1) * (sum_c p = 1) -> loss -1.
  CHECK(prsa_loss_from_phat(alow, phat, cfg).item() == Catch::Approx(-1.0));
}

TEST_CASE("constant one-hot prediction minimizes the class-matched loss") {
  AffinityConfig cfg = omega_one();
  cfg.radius = 1;
  std::vector<float> img(4, 0.1f);
  auto alow = compute_a_low(img, 1, 2, 2, cfg);
  for (float v : alow) CHECK(v == Catch::Approx(3.0));

  auto loss_of = [&](const std::vector<float>& pv) {
    return prsa_loss_from_phat(alow, Tensor<float>::from_data({2, 2, 2}, pv), cfg).item();
  };
  // All mass on class 0 everywhere: A_high = 3, A_low = 3 -> -(1/4)*4*9 = -9.
  std::vector<float> onehot = {1, 1, 1, 1, 0, 0, 0, 0};
  float best = loss_of(onehot);
  CHECK(best == Catch::Approx(-9.0));

  std::vector<float> uniform = {0.5f, 0.5f, 0.5f, 0.5f, 0.5f, 0.5f, 0.5f, 0.5f};
  CHECK(loss_of(uniform) > best);
  std::vector<float> flipped = {1, 1, 1, 0, 0, 0, 0, 1};
  CHECK(loss_of(flipped) > best);

  Rng rng(3, 0);
  for (int t = 0; t < 50; ++t) {
    std::vector<float> pv(8);
    for (int m = 0; m < 4; ++m) {
      float a = static_cast<float>(rng.uniform());
      pv[static_cast<size_t>(m)] = a;
      pv[static_cast<size_t>(4 + m)] = 1.f - a;
    }
    REQUIRE(loss_of(pv) >= best - 1e-5f);
  }
}

TEST_CASE("windowed loss matches the all-pairs oracle") {
  Rng rng(1234, 0);
  for (int trial = 0; trial < 120; ++trial) {
    int H = 1 + rng.below(8), W = 1 + rng.below(8);
    int C = 2 + rng.below(2);
    int64_t hw = static_cast<int64_t>(H) * W;
    AffinityConfig cfg;
    cfg.radius = 1 + rng.below(5);
    cfg.mode = trial % 2 ? AffinityConfig::Mode::Literal : AffinityConfig::Mode::ClassMatched;
    std::vector<double> img(static_cast<size_t>(hw));
    for (auto& x : img) x = rng.normal(0.0, 1.0);
    std::vector<double> logits(static_cast<size_t>(C) * hw);
    for (auto& x : logits) x = rng.normal(0.0, 2.0);
    auto phat = softmax_cols(logits, C, hw);

    auto alow = compute_a_low(img, 1, H, W, cfg);
    auto fast = prsa_loss_from_phat(alow, Tensor<double>::from_data({C, H, W}, phat), cfg).item();
    auto slow = naive_prsa(img, 1, phat, C, H, W, cfg);
    REQUIRE(fast == Catch::Approx(slow).epsilon(1e-9).margin(1e-6));
  }
}

TEST_CASE("prsa loss is translation invariant in the interior") {
  // Blob and its window support stay clear of the borders in both placements.
  int H = 12, W = 12;
  AffinityConfig cfg;
  cfg.radius = 2;
  auto place = [&](int r0, int c0) {
    std::vector<float> img(static_cast<size_t>(H) * W, 0.0f);
    std::vector<float> pv(static_cast<size_t>(2) * H * W);
    for (int64_t m = 0; m < static_cast<int64_t>(H) * W; ++m) {
      pv[static_cast<size_t>(m)] = 0.5f;
      pv[static_cast<size_t>(H * W + m)] = 0.5f;
    }
    for (int i = r0; i < r0 + 2; ++i)
      for (int j = c0; j < c0 + 2; ++j) {
        img[static_cast<size_t>(i) * W + j] = 1.5f;
        pv[static_cast<size_t>(i) * W + j] = 0.9f;
        pv[static_cast<size_t>(H * W + i * W + j)] = 0.1f;
      }
    auto alow = compute_a_low(img, 1, H, W, cfg);
    return prsa_loss_from_phat(alow, Tensor<float>::from_data({2, H, W}, pv), cfg).item();
  };
  CHECK(place(4, 4) == Catch::Approx(place(6, 5)).epsilon(1e-6));
}

TEST_CASE("a_low pair weights are symmetric") {
  Rng rng(9, 0);
  AffinityConfig cfg;
  for (int t = 0; t < 200; ++t) {
    std::vector<float> vm = {static_cast<float>(rng.normal(0, 1))};
    std::vector<float> vn = {static_cast<float>(rng.normal(0, 1))};
    int im = rng.below(8), jm = rng.below(8), in_ = rng.below(8), jn = rng.below(8);
    REQUIRE(low_level_weight<float>(im, jm, in_, jn, vm, vn, cfg) ==
            Catch::Approx(low_level_weight<float>(in_, jn, im, jm, vn, vm, cfg)));
  }
}

TEST_CASE("affinity config validation") {
  AffinityConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.sigma_l = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.radius = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("pce loss oracles") {
  // One labeled pixel with probability 1 on its class.
  auto p1 = Tensor<float>::from_data({2, 1, 2}, {1.f, 0.5f, 0.f, 0.5f});
  auto lab1 = mask_of(2, 1, 2, {1, 0, 0, 0});
  CHECK(pce_loss(p1, lab1).item() == Catch::Approx(0.0).margin(1e-6));

  auto lab_half = mask_of(2, 1, 2, {0, 1, 0, 0});
  CHECK(pce_loss(p1, lab_half).item() == Catch::Approx(-std::log(0.5)));  // 0.6931

  // Two labeled pixels at probs 1.0 and 0.5 -> mean of the two terms.
  auto lab_both = mask_of(2, 1, 2, {1, 1, 0, 0});
  CHECK(pce_loss(p1, lab_both).item() == Catch::Approx(-std::log(0.5) / 2.0));  // 0.3466
}

TEST_CASE("pce loss ignores unlabeled pixels bitwise") {
  auto lab = mask_of(2, 2, 2, {1, 0, 0, 0, 0, 0, 0, 1});
  std::vector<float> pv = {0.7f, 0.2f, 0.9f, 0.4f, 0.3f, 0.8f, 0.1f, 0.6f};
  auto base = pce_loss(Tensor<float>::from_data({2, 2, 2}, pv), lab).item();
  // Scramble every unlabeled pixel; labeled entries untouched.
  std::vector<float> pv2 = pv;
  pv2[1] = 0.01f;
  pv2[2] = 0.99f;
  pv2[5] = 0.42f;
  pv2[6] = 0.05f;
  auto scrambled = pce_loss(Tensor<float>::from_data({2, 2, 2}, pv2), lab).item();
  CHECK(base == scrambled);  // bitwise
}

TEST_CASE("pce loss requires a labeled pixel") {
  auto p = Tensor<float>::from_data({2, 1, 1}, {0.5f, 0.5f});
  auto lab = mask_of(2, 1, 1, {0, 0});
  CHECK_THROWS_AS(pce_loss(p, lab), ZeroLabeledError);
}

TEST_CASE("soft dice oracles") {
  auto p_eq = Tensor<float>::from_data({1, 1, 3}, {1.f, 0.f, 1.f});
  CHECK(soft_dice_loss(p_eq, {1.f, 0.f, 1.f}).item() == Catch::Approx(0.0).margin(1e-6));

  auto p_disjoint = Tensor<float>::from_data({1, 1, 2}, {1.f, 0.f});
  CHECK(soft_dice_loss(p_disjoint, {0.f, 1.f}).item() == Catch::Approx(1.0).margin(1e-6));

  auto p_half = Tensor<float>::from_data({1, 1, 1}, {0.5f});
  CHECK(soft_dice_loss(p_half, {1.f}).item() == Catch::Approx(1.0 / 3.0).margin(1e-6));
}

TEST_CASE("soft dice of two empty inputs is zero with zero gradient") {
  auto p = Tensor<float>::from_data({1, 1, 2}, {0.f, 0.f}, true);
  auto loss = noise_dice_loss(p, {0.f, 0.f});
  CHECK(loss.item() == 0.0f);
  loss.backward();
  for (auto g : p.grad()) CHECK(g == 0.0f);
}

TEST_CASE("soft dice stays in the unit interval") {
  Rng rng(19, 0);
  for (int t = 0; t < 200; ++t) {
    int n = 1 + rng.below(12);
    std::vector<float> pv(static_cast<size_t>(n)), yv(static_cast<size_t>(n));
    for (auto& x : pv) x = static_cast<float>(rng.uniform());
    for (auto& x : yv) x = static_cast<float>(rng.uniform());
    auto v = soft_dice_loss(Tensor<float>::from_data({1, 1, n}, pv), yv).item();
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
}

TEST_CASE("grad: prsa loss wrt logits in both modes") {
  Rng rng(2024, 0);
  for (auto mode : {AffinityConfig::Mode::ClassMatched, AffinityConfig::Mode::Literal}) {
    AffinityConfig cfg;
    cfg.radius = 1;
    cfg.mode = mode;
    int C = 2, H = 3, W = 3;
    std::vector<double> img(static_cast<size_t>(H) * W);
    for (auto& x : img) x = rng.normal(0.0, 1.0);
    auto alow = compute_a_low(img, 1, H, W, cfg);
    auto logits = Tensor<double>::from_data({C, H, W}, random_values(static_cast<size_t>(C) * H * W, rng));
    std::vector<Tensor<double>> leaves = {logits};
    auto res = gradcheck(leaves, [&]() {
      return prsa_loss_from_phat(alow, softmax_channels(logits), cfg);
    });
    CHECK(res.max_rel < 1e-4);
  }
}

TEST_CASE("grad: full prsa path through the relation map") {
  Rng rng(77, 0);
  int C = 2, H = 3, W = 3;
  AffinityConfig cfg;
  cfg.radius = 1;
  std::vector<double> img(static_cast<size_t>(H) * W);
  for (auto& x : img) x = rng.normal(0.0, 1.0);
  auto logits = Tensor<double>::from_data({C, H, W}, random_values(static_cast<size_t>(C) * H * W, rng));
  auto relation =
      Tensor<double>::from_data({C, H, W}, random_values(static_cast<size_t>(C) * H * W, rng, 0.1, 0.9));
  std::vector<Tensor<double>> leaves = {logits, relation};
  auto res = gradcheck(leaves, [&]() { return prsa_loss(img, 1, logits, relation, cfg); });
  CHECK(res.max_rel < 1e-4);
}

TEST_CASE("grad: pce loss") {
  Rng rng(5, 0);
  int C = 2, H = 3, W = 3;
  auto prob = Tensor<double>::from_data({C, H, W}, random_values(static_cast<size_t>(C) * H * W, rng, 0.1, 0.9));
  auto lab = mask_of(C, H, W, {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 0, 0, 0, 1, 0, 0, 0});
  std::vector<Tensor<double>> leaves = {prob};
  auto res = gradcheck(leaves, [&]() { return pce_loss(prob, lab); });
  CHECK(res.max_rel < 1e-4);
}

TEST_CASE("grad: soft dice loss") {
  Rng rng(6, 0);
  int n = 9;
  auto p = Tensor<double>::from_data({1, 3, 3}, random_values(static_cast<size_t>(n), rng, 0.1, 0.9));
  std::vector<double> y = {1, 0, 1, 0, 0, 1, 0, 1, 0};
  std::vector<Tensor<double>> leaves = {p};
  auto res = gradcheck(leaves, [&]() { return soft_dice_loss(p, y); });
  CHECK(res.max_rel < 1e-4);
}
