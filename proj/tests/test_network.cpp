#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pct3d/checkpoint.hpp"
#include "pct3d/grad_check.hpp"
#include "pct3d/network.hpp"
#include "support/test_util.hpp"

using namespace pct3d;
using namespace pct3d::testutil;

namespace {

Dataset make_clouds(int n_points, int count, std::uint64_t seed,
                    ShapeClass shape = ShapeClass::kSphere) {
  SynthConfig cfg;
  cfg.classes = {shape};
  cfg.n_points = n_points;
  cfg.samples_per_class = count;
  cfg.seed = seed;
  return synth_shapes(cfg);
}

// Two-module encoder that stays differentiable at 32 input points. CSA needs
// at least 8 sampled points, which a 32-point cloud cannot give module 2, so
// the global block runs point-patch attention only.
ModelConfig tiny_two_module_config() {
  ModelConfig cfg;
  cfg.task = Task::kClassification;
  cfg.input_points = 32;
  cfg.in_channels = 6;
  cfg.stem_width = 4;
  cfg.modules.resize(2);
  cfg.modules[0].scales = {{2, 3}, {3, 4}};
  cfg.modules[1].scales = {{2, 6}};
  cfg.head_width1 = 8;
  cfg.head_width2 = 6;
  cfg.num_classes = 4;
  cfg.use_csa = false;
  cfg.pos_hidden = 4;
  cfg.dropout = 0.5;
  return cfg;
}

}  // namespace

TEST_CASE("stem: projection shape, determinism, gradient at n=8") {
  Model model(tiny_two_module_config());
  model.init_params(71);
  RandomStream rng(72);
  Tensor x = rand_const(rng, {8, 6});
  ForwardCtx ctx;
  Tensor h1 = model.stem_forward(x, ctx);
  Tensor h2 = model.stem_forward(x, ctx);
  CHECK(h1.shape() == Shape{8, 4});
  for (std::int64_t i = 0; i < h1.size(); ++i) CHECK(h1.at(i) == h2.at(i));

  std::vector<std::pair<std::string, Parameter*>> stem_params;
  for (auto& [name, p] : model.registry().params) {
    if (name.rfind("stem.", 0) == 0) {
      fill_param(*p, rng, -0.6, 0.6);
      stem_params.emplace_back(name, p);
    }
  }
  Tensor probe = rand_const(rng, {8, 4});
  auto program = [&](Tape& t) {
    ForwardCtx tctx{&t, RunMode::kTrain, nullptr};
    return probe_loss(model.stem_forward(x, tctx), probe);
  };
  CHECK(grad_check(program, stem_params, 1e-5, 10).max_rel_err < 1e-6);
}

TEST_CASE("encode: classification default walks 1024 -> 256 -> 64 points") {
  ModelConfig cfg = ModelConfig::classification_default();
  CHECK(cfg.point_counts() == std::vector<int>{1024, 256, 64});
  Model model(cfg);
  model.init_params(73);

  const Dataset ds = make_clouds(1024, 1, 74);
  std::vector<const PointCloud*> batch{&ds.samples[0]};
  ForwardCtx ctx;
  EncoderOut enc = model.encode(batch, ctx);
  REQUIRE(enc.levels.size() == 2);
  CHECK(enc.stem_features.shape() == Shape{1024, 64});
  CHECK(enc.levels[0].s == 256);
  CHECK(enc.levels[0].features.shape() == Shape{256, 448});
  CHECK(enc.levels[1].s == 64);
  CHECK(enc.levels[1].features.shape() == Shape{64, 896});
  CHECK(enc.global_feature.shape() == Shape{1, 448 + 896});

  Tensor logits = model.classify(enc, ctx);
  CHECK(logits.shape() == Shape{1, 40});

  // eval-mode forward is deterministic bit for bit
  EncoderOut enc2 = model.encode(batch, ctx);
  Tensor logits2 = model.classify(enc2, ctx);
  for (std::int64_t i = 0; i < logits.size(); ++i)
    CHECK(logits.at(i) == logits2.at(i));
}

TEST_CASE("encode/segment: segmentation default walks 2048 -> 512 -> 128 -> 32") {
  ModelConfig cfg = ModelConfig::segmentation_default();
  CHECK(cfg.point_counts() == std::vector<int>{2048, 512, 128, 32});
  Model model(cfg);
  model.init_params(75);

  const Dataset ds = make_clouds(2048, 1, 76, ShapeClass::kCube);
  std::vector<const PointCloud*> batch{&ds.samples[0]};
  ForwardCtx ctx;
  EncoderOut enc = model.encode(batch, ctx);
  REQUIRE(enc.levels.size() == 3);
  CHECK(enc.levels[0].s == 512);
  CHECK(enc.levels[1].s == 128);
  CHECK(enc.levels[2].s == 32);

  Tensor logits = model.segment(enc, ctx);
  CHECK(logits.shape() == Shape{2048, 50});

  CHECK_THROWS_AS(model.classify(enc, ctx), ContractError);
}

TEST_CASE("multi-level ablation shrinks the head input") {
  ModelConfig cfg = ModelConfig::classification_default();
  cfg.multi_level_global = false;
  CHECK(cfg.global_width() == 896);
  Model model(cfg);
  model.init_params(77);
  const Dataset ds = make_clouds(1024, 1, 78);
  std::vector<const PointCloud*> batch{&ds.samples[0]};
  ForwardCtx ctx;
  EncoderOut enc = model.encode(batch, ctx);
  CHECK(enc.global_feature.shape() == Shape{1, 896});
  CHECK(model.classify(enc, ctx).shape() == Shape{1, 40});
}

TEST_CASE("param_count: hand value, MB convention, checkpoint oracle") {
  // single linear 64 -> 128 with bias
  LinearLayer lin(64, 128);
  ParamRegistry reg;
  lin.register_into(reg, "lin");
  std::int64_t count = 0;
  for (auto& [n, p] : reg.params) count += p->size();
  CHECK(count == 8320);

  ModelConfig cfg = ModelConfig::toy_classification();
  Model model(cfg);
  model.init_params(79);
  CHECK(model.param_count() > 0);
  CHECK(model.param_megabytes() ==
        doctest::Approx(model.param_count() * 4.0 / (1 << 20)).epsilon(1e-12));

  // independent oracle: walk the checkpoint file, skip running statistics
  const auto path =
      (std::filesystem::temp_directory_path() / "pct3d_params.ckpt").string();
  save_checkpoint(path, model.registry());
  std::int64_t walked = 0;
  for (const CheckpointEntry& e : read_checkpoint_entries(path)) {
    const auto ends_with = [&](const char* suffix) {
      const std::string s(suffix);
      return e.name.size() >= s.size() &&
             e.name.compare(e.name.size() - s.size(), s.size(), s) == 0;
    };
    if (ends_with(".running_mean") || ends_with(".running_var")) continue;
    std::int64_t n = 1;
    for (int ext : e.extents) n *= ext;
    walked += n;
  }
  CHECK(walked == model.param_count());
}

TEST_CASE("ablation parameter ordering matches the structural expectation") {
  ModelConfig full = ModelConfig::classification_default();
  ModelConfig no_csa = full;
  no_csa.use_csa = false;
  ModelConfig no_gfl = full;
  no_gfl.use_gfl = false;
  ModelConfig no_ppsa = full;
  no_ppsa.use_ppsa = false;

  const std::int64_t c_full = Model(full).param_count();
  const std::int64_t c_no_csa = Model(no_csa).param_count();
  const std::int64_t c_no_gfl = Model(no_gfl).param_count();
  const std::int64_t c_no_ppsa = Model(no_ppsa).param_count();

  CHECK(c_full > c_no_csa);
  CHECK(c_no_csa > c_no_gfl);
  CHECK(c_no_ppsa < c_full);
}

TEST_CASE("end-to-end gradient check: two-module encoder on 32 points") {
  ModelConfig cfg = tiny_two_module_config();
  Model model(cfg);
  model.init_params(80);
  RandomStream rng(81);
  for (auto& [name, p] : model.registry().params) fill_param(*p, rng, -0.5, 0.5);

  const Dataset ds = make_clouds(32, 2, 82);
  std::vector<const PointCloud*> batch{&ds.samples[0], &ds.samples[1]};
  const std::vector<int> labels{0, 2};
  auto program = [&](Tape& t) {
    ForwardCtx ctx{&t, RunMode::kTrain, nullptr};  // rng null: dropout off
    return cross_entropy(model.forward(batch, ctx), labels);
  };
  const auto res = grad_check(program, model.registry().params, 1e-5, 6);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("segmentation decoder gradient on a 64-point toy config") {
  ModelConfig cfg;
  cfg.task = Task::kSegmentation;
  cfg.input_points = 64;
  cfg.in_channels = 6;
  cfg.stem_width = 4;
  cfg.modules.resize(2);
  cfg.modules[0].scales = {{2, 3}, {3, 4}};
  cfg.modules[1].scales = {{2, 6}};
  cfg.num_parts = 6;
  cfg.num_classes = 1;
  cfg.use_csa = false;
  cfg.pos_hidden = 4;
  cfg.decoder_widths = {6, 5};
  Model model(cfg);
  model.init_params(83);
  RandomStream rng(84);
  for (auto& [name, p] : model.registry().params) fill_param(*p, rng, -0.5, 0.5);

  const Dataset ds = make_clouds(64, 1, 85, ShapeClass::kCube);
  std::vector<const PointCloud*> batch{&ds.samples[0]};
  auto program = [&](Tape& t) {
    ForwardCtx ctx{&t, RunMode::kTrain, nullptr};
    return cross_entropy(model.forward(batch, ctx), ds.samples[0].point_labels);
  };
  const auto res = grad_check(program, model.registry().params, 1e-5, 5);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("model config: validation failures name the offending field") {
  ModelConfig cfg = ModelConfig::classification_default();
  cfg.in_channels = 4;
  CHECK_THROWS_WITH_AS(cfg.validate(), "in_channels must be 3 or 6", ConfigError);

  ModelConfig seg = ModelConfig::segmentation_default();
  seg.num_parts = 0;
  CHECK_THROWS_AS(seg.validate(), ConfigError);

  ModelConfig small = ModelConfig::toy_classification();
  small.input_points = 32;  // module k=12 needs >= 48 points
  CHECK_THROWS_AS(small.validate(), ConfigError);
}

TEST_CASE("model config file round-trips and rejects unknown keys") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "pct3d_cfg";
  fs::create_directories(dir);
  const ModelConfig cfg = ModelConfig::toy_segmentation();
  {
    std::ofstream out(dir / "toy.cfg");
    write_model_config(cfg, out);
  }
  const ModelConfig back = load_model_config((dir / "toy.cfg").string());
  CHECK(back.task == cfg.task);
  CHECK(back.input_points == cfg.input_points);
  CHECK(back.num_parts == cfg.num_parts);
  CHECK(back.modules.size() == cfg.modules.size());
  CHECK(back.modules[1].scales[2].k == cfg.modules[1].scales[2].k);
  CHECK(back.decoder_widths == cfg.decoder_widths);

  {
    std::ofstream out(dir / "bad.cfg");
    out << "task = classification\nnot_a_key = 3\n";
  }
  CHECK_THROWS_AS(load_model_config((dir / "bad.cfg").string()), ConfigError);
}

TEST_CASE("interpolate_stacked keeps per-sample geometry separate") {
  RandomStream rng(86);
  std::vector<PointMatrix> src{rand_points(rng, 5), rand_points(rng, 5)};
  std::vector<PointMatrix> tgt{src[0], src[1]};  // targets sit on the sources
  Tensor feats = rand_const(rng, {10, 3});
  Tensor out = interpolate_stacked(tgt, src, feats);
  for (std::int64_t i = 0; i < feats.size(); ++i) CHECK(out.at(i) == feats.at(i));
}
