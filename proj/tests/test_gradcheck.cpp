#include <catch2/catch_amalgamated.hpp>

#include "gradcheck.hpp"
#include "procns/conv_ops.hpp"
#include "procns/ops.hpp"
#include "procns/rng.hpp"

using namespace procns;

namespace {

Tensor<double> rand_tensor(std::vector<int> shape, Rng& rng, double lo = -1, double hi = 1) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return Tensor<double>::from_data(std::move(shape), random_values(static_cast<size_t>(n), rng, lo, hi));
}

// Projects an arbitrary tensor to a scalar with fixed random coefficients so
// every output coordinate influences the loss.
Tensor<double> project(const Tensor<double>& y, Rng& rng) {
  auto coeff = rand_tensor(y.shape(), rng);
  return sum_all(mul(y, coeff));
}

constexpr double kTol = 1e-4;

}  // namespace

TEST_CASE("grad: elementwise chain") {
  Rng rng(101, 0);
  std::vector<Tensor<double>> leaves = {rand_tensor({3, 2, 2}, rng), rand_tensor({3, 2, 2}, rng)};
  Rng prng(102, 0);
  auto coeff = rand_tensor({3, 2, 2}, prng);
  auto res = gradcheck(leaves, [&] {
    auto y = mul(add(leaves[0], leaves[1]), sub(leaves[0], scale(leaves[1], 0.7)));
    return sum_all(mul(y, coeff));
  });
  CHECK(res.max_rel < kTol);
}

TEST_CASE("grad: relu away from the kink") {
  Rng rng(103, 0);
  auto vals = random_values_nonzero(12, rng);
  std::vector<Tensor<double>> leaves = {Tensor<double>::from_data({3, 2, 2}, vals)};
  Rng prng(104, 0);
  auto coeff = rand_tensor({3, 2, 2}, prng);
  auto res = gradcheck(leaves, [&] { return sum_all(mul(relu(leaves[0]), coeff)); });
  CHECK(res.max_rel < kTol);
}

TEST_CASE("grad: softmax_channels") {
  Rng rng(105, 0);
  std::vector<Tensor<double>> leaves = {rand_tensor({3, 2, 2}, rng, -2, 2)};
  Rng prng(106, 0);
  auto coeff = rand_tensor({3, 2, 2}, prng);
  auto res = gradcheck(leaves, [&] { return sum_all(mul(softmax_channels(leaves[0]), coeff)); });
  CHECK(res.max_rel < kTol);
}

TEST_CASE("grad: reductions") {
  Rng rng(107, 0);
  std::vector<Tensor<double>> leaves = {rand_tensor({2, 3, 3}, rng)};
  Rng prng(108, 0);
  auto coeff = rand_tensor({3, 3}, prng);
  auto res = gradcheck(leaves, [&] { return sum_all(mul(channel_sum(leaves[0]), coeff)); });
  CHECK(res.max_rel < kTol);
}

TEST_CASE("grad: concat and stack") {
  Rng rng(109, 0);
  std::vector<Tensor<double>> leaves = {rand_tensor({1, 2, 2}, rng), rand_tensor({2, 2, 2}, rng),
                                        rand_tensor({3}, rng), rand_tensor({2}, rng)};
  Rng prng(110, 0);
  auto c1 = rand_tensor({3, 2, 2}, prng);
  auto c2 = rand_tensor({5}, prng);
  auto res = gradcheck(leaves, [&] {
    auto a = concat_channels<double>({leaves[0], leaves[1]});
    auto b = concat_vec(leaves[2], leaves[3]);
    return add(sum_all(mul(a, c1)), sum_all(mul(b, c2)));
  });
  CHECK(res.max_rel < kTol);

  std::vector<Tensor<double>> rows = {rand_tensor({4}, rng), rand_tensor({4}, rng), rand_tensor({4}, rng)};
  auto c3 = rand_tensor({3, 4}, prng);
  auto res2 = gradcheck(rows, [&] { return sum_all(mul(stack_rows(rows), c3)); });
  CHECK(res2.max_rel < kTol);
}

TEST_CASE("grad: spatial weighting and masking") {
  Rng rng(111, 0);
  std::vector<Tensor<double>> leaves = {rand_tensor({2, 3, 3}, rng)};
  Rng prng(112, 0);
  auto w = random_values(9, prng, 0.1, 1.0);
  std::vector<uint8_t> mask = {1, 0, 1, 1, 0, 0, 1, 1, 0};
  std::vector<uint8_t> full_mask(18);
  for (int c = 0; c < 2; ++c)
    for (int m = 0; m < 9; ++m) full_mask[static_cast<size_t>(c * 9 + m)] = mask[static_cast<size_t>(m)] ^ (c ? 1 : 0);
  auto c1 = rand_tensor({2, 3, 3}, prng);
  auto c2 = rand_tensor({2}, prng);
  auto res = gradcheck(leaves, [&] {
    auto a = mul_spatial(leaves[0], w);
    auto b = mask_mul(leaves[0], full_mask);
    auto s = masked_sum(leaves[0], mask);
    return add(add(sum_all(mul(a, c1)), sum_all(mul(b, c1))), sum_all(mul(s, c2)));
  });
  CHECK(res.max_rel < kTol);
}

TEST_CASE("grad: window sum excluding center") {
  Rng rng(113, 0);
  for (auto [H, W, r] : {std::tuple{3, 5, 1}, std::tuple{4, 4, 2}, std::tuple{2, 7, 5}}) {
    std::vector<Tensor<double>> leaves = {rand_tensor({2, H, W}, rng)};
    Rng prng(114, 0);
    auto coeff = rand_tensor({2, H, W}, prng);
    auto res = gradcheck(leaves, [&] { return sum_all(mul(window_sum_exclude_center(leaves[0], r), coeff)); });
    CHECK(res.max_rel < kTol);
  }
}

TEST_CASE("grad: conv2d wrt input, weight, bias") {
  Rng rng(115, 0);
  std::vector<Tensor<double>> leaves = {rand_tensor({2, 4, 4}, rng), rand_tensor({3, 2, 3, 3}, rng),
                                        rand_tensor({3}, rng)};
  Rng prng(116, 0);
  auto coeff = rand_tensor({3, 4, 4}, prng);
  auto res = gradcheck(leaves, [&] { return sum_all(mul(conv2d(leaves[0], leaves[1], leaves[2]), coeff)); });
  CHECK(res.max_rel < kTol);
}

TEST_CASE("grad: maxpool with well-separated values") {
  Rng rng(117, 0);
  std::vector<double> vals(16);
  std::vector<int> order(16);
  for (int i = 0; i < 16; ++i) order[static_cast<size_t>(i)] = i;
  rng.shuffle(order.begin(), order.end());
  for (int i = 0; i < 16; ++i) vals[static_cast<size_t>(i)] = 0.05 * order[static_cast<size_t>(i)];
  std::vector<Tensor<double>> leaves = {Tensor<double>::from_data({1, 4, 4}, vals)};
  Rng prng(118, 0);
  auto coeff = rand_tensor({1, 2, 2}, prng);
  auto res = gradcheck(leaves, [&] { return sum_all(mul(maxpool2(leaves[0]), coeff)); });
  CHECK(res.max_rel < kTol);
}

TEST_CASE("grad: bilinear resize up and down") {
  Rng rng(119, 0);
  for (auto [Ho, Wo] : {std::pair{6, 7}, std::pair{2, 2}, std::pair{3, 3}}) {
    std::vector<Tensor<double>> leaves = {rand_tensor({2, 3, 3}, rng)};
    Rng prng(120, 0);
    auto coeff = rand_tensor({2, Ho, Wo}, prng);
    auto res = gradcheck(leaves, [&] { return sum_all(mul(bilinear_resize(leaves[0], Ho, Wo), coeff)); });
    CHECK(res.max_rel < kTol);
  }
}

TEST_CASE("grad: instance norm wrt input and affine") {
  Rng rng(121, 0);
  std::vector<Tensor<double>> leaves = {rand_tensor({2, 3, 3}, rng, -2, 2), rand_tensor({2}, rng, 0.5, 1.5),
                                        rand_tensor({2}, rng)};
  Rng prng(122, 0);
  auto coeff = rand_tensor({2, 3, 3}, prng);
  auto res = gradcheck(leaves, [&] {
    return sum_all(mul(instance_norm(leaves[0], leaves[1], leaves[2]), coeff));
  });
  CHECK(res.max_rel < kTol);
}
