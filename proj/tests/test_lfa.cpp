#include <doctest.h>

#include <cmath>

#include "pct3d/grad_check.hpp"
#include "pct3d/lfa.hpp"
#include "support/test_util.hpp"

using namespace pct3d;
using namespace pct3d::testutil;

TEST_CASE("fuse_feature: widths and exact coordinate block") {
  RandomStream rng(41);
  const int s = 7;
  Tensor f = rand_const(rng, {s, 64});
  Tensor p = rand_const(rng, {s, 3});
  Tensor c = fuse_feature(f, p);
  CHECK(c.shape() == Shape{s, 67});
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < 3; ++j) CHECK(c.at2(i, 64 + j) == p.at2(i, j));
  }
  // degenerate: no features yet -> coordinates pass through
  Tensor bare = fuse_feature(Tensor{}, p);
  for (std::int64_t i = 0; i < p.size(); ++i) CHECK(bare.at(i) == p.at(i));

  CHECK_THROWS_AS(fuse_feature(rand_const(rng, {s + 1, 64}), p), ShapeError);
}

TEST_CASE("edge_features: width 2C+6, self row, per-block structure") {
  RandomStream rng(42);
  const int n = 10, c = 64;
  Tensor feats = rand_const(rng, {n, c});
  Tensor coords = rand_const(rng, {n, 3});
  const std::vector<int> centers{2, 5};
  const std::vector<int> nbrs{2, 7, 5, 0};  // k=2, self-inclusion first
  Tensor edge = edge_features(feats, coords, centers, nbrs, 2);
  CHECK(edge.shape() == Shape{2, 2, 2 * c + 6});

  // self-neighbor row: zero differences then C_i
  for (int j = 0; j < c; ++j) CHECK(edge.at(j) == 0.0);
  for (int j = 0; j < 3; ++j) CHECK(edge.at(c + j) == 0.0);
  for (int j = 0; j < c; ++j) CHECK(edge.at(c + 3 + j) == feats.at2(2, j));
  for (int j = 0; j < 3; ++j) CHECK(edge.at(2 * c + 3 + j) == coords.at2(2, j));

  // generic row: differences then the center fusion
  const std::int64_t row = ((std::int64_t)1 * 2 + 1) * (2 * c + 6);  // center 5, nbr 0
  for (int j = 0; j < c; ++j) {
    CHECK(edge.at(row + j) == doctest::Approx(feats.at2(0, j) - feats.at2(5, j)));
  }
  for (int j = 0; j < 3; ++j) {
    CHECK(edge.at(row + c + j) ==
          doctest::Approx(coords.at2(0, j) - coords.at2(5, j)));
  }
}

TEST_CASE("edge_features: translation moves only the C_i coordinate block") {
  RandomStream rng(43);
  const int n = 8, c = 5;
  Tensor feats = rand_const(rng, {n, c});
  Tensor coords = rand_const(rng, {n, 3});
  std::vector<double> shifted(coords.data(), coords.data() + coords.size());
  for (std::size_t i = 0; i < shifted.size(); i += 3) {
    shifted[i] += 10.0;
    shifted[i + 1] -= 4.0;
    shifted[i + 2] += 0.5;
  }
  Tensor coords2 = Tensor::from_data({n, 3}, std::move(shifted));

  const std::vector<int> centers{1, 6};
  const std::vector<int> nbrs{1, 3, 6, 4};
  Tensor e1 = edge_features(feats, coords, centers, nbrs, 2);
  Tensor e2 = edge_features(feats, coords2, centers, nbrs, 2);
  const int width = 2 * c + 6;
  for (int r = 0; r < 4; ++r) {
    const std::int64_t base = static_cast<std::int64_t>(r) * width;
    // feature differences and the F_i block are untouched bit for bit
    for (int j = 0; j < c; ++j) CHECK(e1.at(base + j) == e2.at(base + j));
    for (int j = c + 3; j < 2 * c + 3; ++j) CHECK(e1.at(base + j) == e2.at(base + j));
    // coordinate differences cancel the shift (up to rounding)
    for (int j = c; j < c + 3; ++j) {
      CHECK(e2.at(base + j) == doctest::Approx(e1.at(base + j)).epsilon(1e-12));
    }
    // the raw P_i block shifts with the translation
    CHECK(e2.at(base + 2 * c + 3) == doctest::Approx(e1.at(base + 2 * c + 3) + 10.0));
    CHECK(e2.at(base + 2 * c + 4) == doctest::Approx(e1.at(base + 2 * c + 4) - 4.0));
    CHECK(e2.at(base + 2 * c + 5) == doctest::Approx(e1.at(base + 2 * c + 5) + 0.5));
  }
}

TEST_CASE("graph_conv_scale: k=1 pooling identity, duplicates, max oracle") {
  RandomStream rng(44);
  ForwardCtx ctx{nullptr, RunMode::kTrain, nullptr};

  GraphConvScale gc(6, 4);
  gc.init(rng);
  Tensor edge1 = rand_const(rng, {5, 1, 6});
  auto [nset1, l1] = gc.forward(edge1, ctx);
  CHECK(nset1.shape() == Shape{5, 1, 4});
  for (std::int64_t i = 0; i < l1.size(); ++i) CHECK(l1.at(i) == nset1.at(i));

  // duplicating every neighbor leaves the pooled feature (and the batch
  // statistics) unchanged
  std::vector<double> dup;
  for (int i = 0; i < 5; ++i) {
    const double* row = edge1.data() + static_cast<std::int64_t>(i) * 6;
    dup.insert(dup.end(), row, row + 6);
    dup.insert(dup.end(), row, row + 6);
  }
  Tensor edge2 = Tensor::from_data({5, 2, 6}, std::move(dup));
  auto [nset2, l2] = gc.forward(edge2, ctx);
  for (std::int64_t i = 0; i < l1.size(); ++i)
    CHECK(l1.at(i) == doctest::Approx(l2.at(i)).epsilon(1e-12));

  // pooled value equals an exhaustive per-channel max over the returned set
  Tensor edge3 = rand_const(rng, {4, 6, 6});
  auto [nset3, l3] = gc.forward(edge3, ctx);
  for (int i = 0; i < 4; ++i) {
    for (int c = 0; c < 4; ++c) {
      double best = -1e300;
      for (int j = 0; j < 6; ++j)
        best = std::max(best, nset3.at((static_cast<std::int64_t>(i) * 6 + j) * 4 + c));
      CHECK(l3.at2(i, c) == best);
    }
  }
}

TEST_CASE("lfa_block: default-config shape law at N=1024") {
  RandomStream rng(45);
  LfaBlock block(64, {{8, 64}, {16, 128}, {32, 256}}, false);
  block.init(rng);
  CHECK(block.out_width() == 448);

  std::vector<PointMatrix> coords{rand_points(rng, 1024)};
  Tensor feats = rand_const(rng, {1024, 64});
  ForwardCtx ctx{nullptr, RunMode::kTrain, nullptr};
  LfaResult res = block.forward(feats, coords, ctx);
  CHECK(res.s == 256);
  CHECK(res.features.shape() == Shape{256, 448});
  REQUIRE(res.scales.size() == 3);
  CHECK(res.scales[2].nset.shape() == Shape{256, 32, 256});
  CHECK(res.coords[0].rows() == 256);
}

TEST_CASE("lfa_block: single-scale config degenerates to plain edge conv") {
  RandomStream rng(46);
  LfaBlock block(5, {{4, 12}}, false);
  block.init(rng);
  CHECK(block.out_width() == 12);
  std::vector<PointMatrix> coords{rand_points(rng, 32)};
  Tensor feats = rand_const(rng, {32, 5});
  ForwardCtx ctx{nullptr, RunMode::kTrain, nullptr};
  LfaResult res = block.forward(feats, coords, ctx);
  CHECK(res.features.shape() == Shape{8, 12});
  CHECK(res.scales.size() == 1);
}

TEST_CASE("lfa_block: rejects bad scale order and too few points") {
  CHECK_THROWS_AS(LfaBlock(5, {{8, 16}, {4, 32}}, false), ConfigError);
  CHECK_THROWS_AS(LfaBlock(5, {{4, 32}, {8, 16}}, false), ConfigError);

  RandomStream rng(47);
  LfaBlock block(5, {{4, 8}, {8, 16}}, false);
  block.init(rng);
  std::vector<PointMatrix> coords{rand_points(rng, 24)};  // 24 < 4*8
  Tensor feats = rand_const(rng, {24, 5});
  ForwardCtx ctx{nullptr, RunMode::kTrain, nullptr};
  CHECK_THROWS_AS(block.forward(feats, coords, ctx), ConfigError);
}

TEST_CASE("lfa_block: gradient of sum(F_L) w.r.t. conv parameters") {
  RandomStream rng(48);
  LfaBlock block(3, {{2, 3}, {3, 4}, {4, 5}}, false);
  block.init(rng);
  ParamRegistry reg;
  block.register_into(reg, "lfa");

  const PointMatrix pts = rand_points(rng, 32);
  const std::vector<double> fdata = rand_vec(rng, 32 * 3);
  std::vector<PointMatrix> coords{pts};
  auto program = [&](Tape& t) {
    ForwardCtx ctx{&t, RunMode::kTrain, nullptr};
    Tensor feats = t.leaf({32, 3}, fdata, false);
    return sum_all(block.forward(feats, coords, ctx).features);
  };
  const auto res = grad_check(program, reg.params, 1e-5, 12);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("lfa_block: mlp variant has fewer parameters, degenerate patches") {
  LfaBlock graph(10, {{2, 4}, {3, 8}}, false);
  LfaBlock mlp(10, {{2, 4}, {3, 8}}, true);
  ParamRegistry rg, rm;
  graph.register_into(rg, "g");
  mlp.register_into(rm, "m");
  auto count = [](const ParamRegistry& r) {
    std::int64_t s = 0;
    for (auto& [n, p] : r.params) s += p->size();
    return s;
  };
  CHECK(count(rg) > count(rm));  // conv input 2C+6 vs C+3

  RandomStream rng(49);
  mlp.init(rng);
  std::vector<PointMatrix> coords{rand_points(rng, 16)};
  Tensor feats = rand_const(rng, {16, 10});
  ForwardCtx ctx{nullptr, RunMode::kTrain, nullptr};
  LfaResult res = mlp.forward(feats, coords, ctx);
  CHECK(res.features.shape() == Shape{4, 12});
  CHECK(res.scales[0].nset.shape() == Shape{4, 1, 4});
}

TEST_CASE("lfa_block: batched forward slices rows per sample") {
  RandomStream rng(50);
  LfaBlock block(4, {{2, 5}}, false);
  block.init(rng);
  std::vector<PointMatrix> coords{rand_points(rng, 16), rand_points(rng, 16)};
  Tensor feats = rand_const(rng, {32, 4});
  ForwardCtx ctx{nullptr, RunMode::kTrain, nullptr};
  LfaResult res = block.forward(feats, coords, ctx);
  CHECK(res.s == 4);
  CHECK(res.features.shape() == Shape{8, 5});
  CHECK(res.coords.size() == 2);
  CHECK(res.sampled_idx[1].size() == 4);
}
