#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "procns/rng.hpp"
#include "procns/sparse_gen.hpp"

using namespace procns;
namespace fs = std::filesystem;

namespace {

LabelMap square_label(int S, int r0, int c0, int side, int cls) {
  LabelMap lab(S, S, 0);
  for (int i = r0; i < r0 + side; ++i)
    for (int j = c0; j < c0 + side; ++j) lab.at(i, j) = static_cast<uint8_t>(cls);
  return lab;
}

LabelMap random_blob_label(Rng& rng, int S, int num_classes) {
  LabelMap lab(S, S, 0);
  for (int cls = 1; cls < num_classes; ++cls) {
    BinMask m(static_cast<size_t>(S) * S, 0);
    int nb = 1 + rng.below(2);
    for (int b = 0; b < nb; ++b)
      stamp_disk(m, S, S, 2 + rng.below(S - 4), 2 + rng.below(S - 4), 2.0 + 3.0 * rng.uniform());
    for (int64_t p = 0; p < lab.size(); ++p)
      if (m[static_cast<size_t>(p)]) lab.idx[static_cast<size_t>(p)] = static_cast<uint8_t>(cls);
  }
  return lab;
}

// Sparse labels may only repeat the dense label or stay unlabeled.
void require_subset(const LabelMap& sparse, const LabelMap& dense) {
  for (int64_t p = 0; p < dense.size(); ++p) {
    uint8_t s = sparse.idx[static_cast<size_t>(p)];
    if (s == kUnlabeled) continue;
    REQUIRE(static_cast<int>(s) == static_cast<int>(dense.idx[static_cast<size_t>(p)]));
  }
}

double brush_radius(double sigma) { return std::min(sigma * std::sqrt(2.0 * std::log(2.0)), 3.0 * sigma); }

}  // namespace

TEST_CASE("point-center on a centered square hits the square center") {
  auto dense = square_label(9, 2, 2, 5, 1);
  SparseGenConfig cfg;
  cfg.mode = SparseMode::PointCenter;
  cfg.contraction = 0;
  cfg.annotate_background = false;
  auto sparse = gen_points(dense, 2, cfg);

  // The inscribed rectangle is the 5x5 square itself; its center is (4,4).
  CHECK(sparse.at(4, 4) == 1);
  double r = brush_radius(cfg.brush_sigma);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) {
      bool in_brush = (i - 4) * (i - 4) + (j - 4) * (j - 4) <= r * r;
      bool in_square = dense.at(i, j) == 1;
      uint8_t expect = (in_brush && in_square) ? 1 : kUnlabeled;
      REQUIRE(sparse.at(i, j) == expect);
    }
}

TEST_CASE("point-sides on a full-image mask stamps four midpoints") {
  LabelMap dense(11, 11, 1);
  SparseGenConfig cfg;
  cfg.mode = SparseMode::PointSides;
  cfg.contraction = 1;
  cfg.annotate_background = false;
  auto sparse = gen_points(dense, 2, cfg);

  // Full rect contracted by 1: rows/cols 1..9, so h = w = 9, midline at 5.
  CHECK(sparse.at(1, 5) == 1);
  CHECK(sparse.at(9, 5) == 1);
  CHECK(sparse.at(5, 1) == 1);
  CHECK(sparse.at(5, 9) == 1);
  require_subset(sparse, dense);
  CHECK(sparse.labeled_count() > 0);
  CHECK(sparse.labeled_count() < dense.size());
}

TEST_CASE("points warn when a class is absent or too small") {
  GenWarnings warn;
  LabelMap empty(9, 9, 0);
  SparseGenConfig cfg;
  cfg.mode = SparseMode::PointCenter;
  cfg.annotate_background = false;
  auto sparse = gen_points(empty, 2, cfg, &warn);
  CHECK(sparse.labeled_count() == 0);
  REQUIRE_FALSE(warn.messages.empty());
  CHECK(warn.messages[0].find("empty region") != std::string::npos);

  // A 2x2 component vanishes under the default contraction of 2.
  GenWarnings warn2;
  auto tiny = square_label(9, 3, 3, 2, 1);
  auto sp2 = gen_points(tiny, 2, cfg, &warn2);
  CHECK(sp2.labeled_count() == 0);
  REQUIRE_FALSE(warn2.messages.empty());
  CHECK(warn2.messages[0].find("too small") != std::string::npos);
}

TEST_CASE("each component receives its own point annotation") {
  LabelMap dense(16, 16, 0);
  for (int i = 1; i <= 6; ++i)
    for (int j = 1; j <= 6; ++j) dense.at(i, j) = 1;
  for (int i = 9; i <= 14; ++i)
    for (int j = 9; j <= 14; ++j) dense.at(i, j) = 1;
  SparseGenConfig cfg;
  cfg.mode = SparseMode::PointCenter;
  cfg.contraction = 1;
  cfg.annotate_background = false;
  auto sparse = gen_points(dense, 2, cfg);
  bool first = false, second = false;
  for (int i = 1; i <= 6; ++i)
    for (int j = 1; j <= 6; ++j) first |= sparse.at(i, j) == 1;
  for (int i = 9; i <= 14; ++i)
    for (int j = 9; j <= 14; ++j) second |= sparse.at(i, j) == 1;
  CHECK(first);
  CHECK(second);
}

TEST_CASE("scribble of a single-pixel region is that pixel") {
  LabelMap dense(7, 7, 0);
  dense.at(3, 3) = 1;
  SparseGenConfig cfg;
  cfg.annotate_background = false;
  auto sparse = gen_scribbles(dense, 2, cfg);
  CHECK(sparse.at(3, 3) == 1);
  CHECK(sparse.labeled_count() == 1);
}

TEST_CASE("disk scribble stays two pixels clear of the boundary") {
  int S = 32;
  LabelMap dense(S, S, 0);
  BinMask disk(static_cast<size_t>(S) * S, 0);
  stamp_disk(disk, S, S, 15, 15, 10.0);
  for (int64_t p = 0; p < dense.size(); ++p)
    if (disk[static_cast<size_t>(p)]) dense.idx[static_cast<size_t>(p)] = 1;

  SparseGenConfig cfg;  // cross kernel, 2 erosion iterations
  cfg.annotate_background = false;
  auto sparse = gen_scribbles(dense, 2, cfg);
  REQUIRE(sparse.labeled_count() > 0);

  // Distance from each scribble pixel to the nearest background pixel.
  BinMask bg(static_cast<size_t>(S) * S, 0);
  for (size_t p = 0; p < bg.size(); ++p) bg[p] = disk[p] ? 0 : 1;
  auto d2 = edt_squared(bg, S, S);
  for (int64_t p = 0; p < dense.size(); ++p)
    if (sparse.idx[static_cast<size_t>(p)] == 1) {
      REQUIRE(disk[static_cast<size_t>(p)] == 1);
      REQUIRE(d2[static_cast<size_t>(p)] >= 4.0);
    }
}

TEST_CASE("scribbles are 8-connected thin per class") {
  Rng rng(321, 0);
  SparseGenConfig cfg;
  for (int trial = 0; trial < 25; ++trial) {
    int S = 16;
    auto dense = random_blob_label(rng, S, 3);
    auto sparse = gen_scribbles(dense, 3, cfg);
    for (int cls = 0; cls < 3; ++cls) {
      for (int i = 0; i + 1 < S; ++i)
        for (int j = 0; j + 1 < S; ++j) {
          bool full = sparse.at(i, j) == cls && sparse.at(i, j + 1) == cls &&
                      sparse.at(i + 1, j) == cls && sparse.at(i + 1, j + 1) == cls;
          REQUIRE_FALSE(full);
        }
    }
  }
}

TEST_CASE("blocks follow the erosion area schedule") {
  // 10x10 square, 3x3 square kernel: areas 100 -> 64 -> 36 -> 16 -> 4 -> 0.
  auto dense = square_label(14, 2, 2, 10, 1);
  SparseGenConfig cfg;
  cfg.mode = SparseMode::Block;
  cfg.erosion_kernel = ErosionKernel::Square;
  cfg.annotate_background = false;

  cfg.target_area_fraction = 0.64;
  auto b64 = gen_blocks(dense, 2, cfg);
  CHECK(b64.labeled_count() == 64);  // the 8x8 erosion result
  for (int i = 3; i <= 10; ++i)
    for (int j = 3; j <= 10; ++j) REQUIRE(b64.at(i, j) == 1);

  cfg.target_area_fraction = 0.01;
  GenWarnings warn;
  auto bmin = gen_blocks(dense, 2, cfg, &warn);
  CHECK(bmin.labeled_count() == 4);  // smallest nonempty erosion result
  REQUIRE_FALSE(warn.messages.empty());
  CHECK(warn.messages[0].find("kept smallest block") != std::string::npos);

  cfg.target_area_fraction = 1.0;
  auto bid = gen_blocks(dense, 2, cfg);
  CHECK(bid.labeled_count() == 100);  // identity
  require_subset(bid, dense);
}

TEST_CASE("blocks leave regions under four pixels unchanged") {
  LabelMap dense(8, 8, 0);
  dense.at(2, 2) = 1;
  dense.at(2, 3) = 1;
  dense.at(3, 2) = 1;
  SparseGenConfig cfg;
  cfg.mode = SparseMode::Block;
  cfg.target_area_fraction = 0.3;
  cfg.annotate_background = false;
  auto sparse = gen_blocks(dense, 2, cfg);
  CHECK(sparse.at(2, 2) == 1);
  CHECK(sparse.at(2, 3) == 1);
  CHECK(sparse.at(3, 2) == 1);
  CHECK(sparse.labeled_count() == 3);
}

TEST_CASE("every mode produces a subset of the dense label") {
  Rng rng(777, 0);
  SparseMode modes[] = {SparseMode::PointSides, SparseMode::PointCenter, SparseMode::Scribble,
                        SparseMode::Block};
  for (int trial = 0; trial < 250; ++trial) {
    auto dense = random_blob_label(rng, 16, 2 + rng.below(2));
    int num_classes = 3;
    SparseGenConfig cfg;
    cfg.mode = modes[trial % 4];
    cfg.contraction = rng.below(3);
    cfg.target_area_fraction = 0.2 + 0.8 * rng.uniform();
    cfg.annotate_background = trial % 2 == 0;
    auto sparse = gen_sparse(dense, num_classes, cfg);
    require_subset(sparse, dense);
  }
}

TEST_CASE("generators are deterministic") {
  Rng rng(5150, 0);
  auto dense = random_blob_label(rng, 16, 3);
  for (auto mode : {SparseMode::PointCenter, SparseMode::Scribble, SparseMode::Block}) {
    SparseGenConfig cfg;
    cfg.mode = mode;
    auto a = gen_sparse(dense, 3, cfg);
    auto b = gen_sparse(dense, 3, cfg);
    REQUIRE(a == b);
  }
}

TEST_CASE("annotation stats oracles") {
  auto dense = square_label(8, 1, 1, 4, 1);
  auto st_full = annotation_stats(dense, dense, 2);
  CHECK(st_full.proportion == Catch::Approx(1.0));
  CHECK(st_full.dense_counts[1] == 16);

  LabelMap empty(8, 8);
  auto st_empty = annotation_stats(empty, dense, 2);
  CHECK(st_empty.proportion == 0.0);

  LabelMap two(8, 8);
  two.at(2, 2) = 1;
  two.at(0, 0) = 0;
  auto st = annotation_stats(two, dense, 2);
  CHECK(st.proportion == Catch::Approx(2.0 / 64.0));
  CHECK(st.sparse_counts[0] == 1);
  CHECK(st.sparse_counts[1] == 1);
}

TEST_CASE("default scribbles land in the expected annotation band") {
  SyntheticDatasetConfig dcfg;
  SparseGenConfig scfg;  // scribble mode by default
  double sum = 0;
  int n = 30;
  for (int k = 0; k < n; ++k) {
    auto smp = make_synthetic_sample(dcfg, scfg, k);
    sum += annotation_stats(smp.sparse, smp.dense, dcfg.num_classes).proportion;
  }
  double mean = sum / n;
  CHECK(mean > 0.02);
  CHECK(mean < 0.20);
}

TEST_CASE("synthetic samples are deterministic and labeled consistently") {
  SyntheticDatasetConfig dcfg;
  dcfg.image_size = 32;
  SparseGenConfig scfg;
  auto a = make_synthetic_sample(dcfg, scfg, 7);
  auto b = make_synthetic_sample(dcfg, scfg, 7);
  CHECK(a.id == "s0007");
  CHECK(a.image.v == b.image.v);
  CHECK(a.dense == b.dense);
  CHECK(a.sparse == b.sparse);
  require_subset(a.sparse, a.dense);

  dcfg.seed = 99;
  auto c = make_synthetic_sample(dcfg, scfg, 7);
  CHECK(a.dense.idx != c.dense.idx);
}

TEST_CASE("dataset generation on disk is deterministic with the right cardinality") {
  auto base = fs::temp_directory_path() / ("sparse_gen_test_" + std::to_string(::getpid()));
  auto d1 = (base / "run1").string(), d2 = (base / "run2").string();
  SyntheticDatasetConfig dcfg;
  dcfg.num_samples = 6;
  dcfg.image_size = 32;
  dcfg.test_fraction = 0.0;
  SparseGenConfig scfg;
  gen_synthetic_dataset(dcfg, scfg, d1);
  gen_synthetic_dataset(dcfg, scfg, d2);

  for (const char* sub : {"images", "labels_full", "labels_sparse"}) {
    int count = 0;
    for (const auto& e : fs::directory_iterator(fs::path(d1) / sub)) {
      ++count;
      std::ifstream f1(e.path(), std::ios::binary);
      std::ifstream f2(fs::path(d2) / sub / e.path().filename(), std::ios::binary);
      REQUIRE(f2.good());
      std::vector<char> b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
      std::vector<char> b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
      REQUIRE(b1 == b2);
    }
    CHECK(count == 6);
  }
  fs::remove_all(base);
}

TEST_CASE("full label fraction promotes the leading samples") {
  auto dir = (fs::temp_directory_path() / ("sparse_gen_full_" + std::to_string(::getpid()))).string();
  SyntheticDatasetConfig dcfg;
  dcfg.num_samples = 10;
  dcfg.image_size = 32;
  dcfg.full_label_fraction = 0.33;
  dcfg.test_fraction = 0.0;
  SparseGenConfig scfg;
  gen_synthetic_dataset(dcfg, scfg, dir);

  // floor(0.33 * 10) = 3 samples must carry their dense label as sparse.
  int full = 0;
  for (int k = 0; k < 10; ++k) {
    char id[16];
    std::snprintf(id, sizeof(id), "s%04d", k);
    std::ifstream fd(dir + "/labels_full/" + std::string(id) + ".png", std::ios::binary);
    std::ifstream fs_(dir + "/labels_sparse/" + std::string(id) + ".png", std::ios::binary);
    std::vector<char> bd((std::istreambuf_iterator<char>(fd)), std::istreambuf_iterator<char>());
    std::vector<char> bs((std::istreambuf_iterator<char>(fs_)), std::istreambuf_iterator<char>());
    if (bd == bs) ++full;
  }
  CHECK(full == 3);
  fs::remove_all(dir);
}

TEST_CASE("config validation rejects out-of-range fields") {
  SparseGenConfig cfg;
  cfg.contraction = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.erosion_kernel_size = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.target_area_fraction = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  SyntheticDatasetConfig dcfg;
  dcfg.image_size = 30;  // not a multiple of 16
  CHECK_THROWS_AS(dcfg.validate(), ConfigError);
  dcfg = {};
  dcfg.shapes = {"triangle"};
  CHECK_THROWS_AS(dcfg.validate(), ConfigError);
  dcfg = {};
  dcfg.num_samples = 200;  // default matches the minimal-config contract
  CHECK_NOTHROW(dcfg.validate());
  CHECK(SyntheticDatasetConfig{}.num_samples == 200);
}
