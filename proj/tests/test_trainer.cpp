#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pct3d/trainer.hpp"
#include "support/test_util.hpp"

using namespace pct3d;
using namespace pct3d::testutil;
namespace fs = std::filesystem;

namespace {

fs::path tmp(const char* name) {
  const fs::path dir = fs::temp_directory_path() / "pct3d_trainer";
  fs::create_directories(dir);
  return dir / name;
}

ModelConfig mini_config() {
  ModelConfig cfg;
  cfg.task = Task::kClassification;
  cfg.input_points = 16;
  cfg.in_channels = 6;
  cfg.stem_width = 4;
  cfg.modules.resize(1);
  cfg.modules[0].scales = {{2, 4}, {4, 8}};
  cfg.head_width1 = 8;
  cfg.head_width2 = 8;
  cfg.num_classes = 2;
  cfg.use_csa = false;  // 16/4 = 4 sampled points, below the CSA minimum
  cfg.pos_hidden = 4;
  cfg.dropout = 0.0;  // keeps the one-step loss comparison noise-free
  return cfg;
}

Dataset mini_dataset(std::uint64_t seed) {
  SynthConfig sc;
  sc.classes = {ShapeClass::kSphere, ShapeClass::kCube};
  sc.n_points = 16;
  sc.samples_per_class = 8;
  sc.seed = seed;
  return synth_shapes(sc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cross_entropy closed forms") {
  Tensor uniform = Tensor::full({3, 4}, 1.25);
  Tensor loss = cross_entropy(uniform, {0, 1, 3});
  CHECK(loss.scalar_value() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Tensor margin = Tensor::from_data({1, 3}, {500.0, 0.0, -200.0});
  CHECK(cross_entropy(margin, {0}).scalar_value() < 1e-8);

  CHECK_THROWS_AS(cross_entropy(uniform, {0, 4, 1}), ValueError);
  CHECK_THROWS_AS(cross_entropy(uniform, {0, 1}), ShapeError);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_lr(0, 250) == 0.01);
  CHECK(cosine_lr(250, 250) == 0.0);
  CHECK(std::abs(cosine_lr(125, 250) - 0.005) < 1e-12);
  CHECK(cosine_lr(300, 250) == 0.0);  // past the horizon clamps
  // non-increasing across the whole schedule
  double prev = 1.0;
  for (int t = 0; t <= 250; ++t) {
    const double lr = cosine_lr(t, 250);
    CHECK(lr <= prev + 1e-18);
    prev = lr;
  }
}

TEST_CASE("sgd_step closed-form updates") {
  SgdConfig sgd;
  sgd.momentum = 0.9;
  sgd.weight_decay = 1e-4;

  // zero gradient, zero velocity: pure decay shrink
  Parameter p({2});
  p.values() = {2.0, -3.0};
  ParamRegistry reg;
  reg.add("p", &p);
  sgd_step(reg, 0.01, sgd);
  CHECK(p.values()[0] == doctest::Approx(2.0 * (1.0 - 0.01 * 1e-4)).epsilon(1e-15));
  CHECK(p.values()[1] == doctest::Approx(-3.0 * (1.0 - 0.01 * 1e-4)).epsilon(1e-15));

  // momentum 0, decay 0: plain gradient descent
  Parameter q({1});
  q.values() = {1.0};
  q.grad() = {0.25};
  ParamRegistry reg2;
  reg2.add("q", &q);
  SgdConfig plain;
  plain.momentum = 0.0;
  plain.weight_decay = 0.0;
  sgd_step(reg2, 0.1, plain);
  CHECK(q.values()[0] == doctest::Approx(1.0 - 0.1 * 0.25).epsilon(1e-15));

  // two steps with constant gradient: displacement lr*g*(1 + 1.9)
  Parameter r({1});
  r.values() = {0.0};
  ParamRegistry reg3;
  reg3.add("r", &r);
  SgdConfig mom;
  mom.momentum = 0.9;
  mom.weight_decay = 0.0;
  const double g = 0.5, lr = 0.01;
  r.grad() = {g};
  sgd_step(reg3, lr, mom);
  r.grad() = {g};
  sgd_step(reg3, lr, mom);
  CHECK(r.values()[0] == doctest::Approx(-lr * g * (1.0 + 1.9)).epsilon(1e-12));
}

TEST_CASE("sgd momentum drives a quadratic to its minimum") {
  Parameter p({3});
  p.values() = {5.0, -7.0, 2.5};
  const std::vector<double> target{1.0, 2.0, -0.5};
  ParamRegistry reg;
  reg.add("p", &p);
  SgdConfig sgd;
  sgd.momentum = 0.9;
  sgd.weight_decay = 0.0;
  int steps = 0;
  for (; steps < 500; ++steps) {
    for (int i = 0; i < 3; ++i) p.grad()[i] = p.values()[i] - target[i];
    sgd_step(reg, 0.1, sgd);
    double err = 0.0;
    for (int i = 0; i < 3; ++i) err = std::max(err, std::abs(p.values()[i] - target[i]));
    if (err < 1e-6) break;
  }
  CHECK(steps < 500);
}

TEST_CASE("classification metrics: perfect, degenerate, confusion identities") {
  MetricsReport perfect = classification_metrics({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
  CHECK(perfect.oa == 1.0);
  CHECK(perfect.macc == 1.0);

  // all predictions class 0 on balanced truth
  MetricsReport lazy = classification_metrics({0, 0, 1, 1}, {0, 0, 0, 0}, 2);
  CHECK(lazy.oa == 0.5);
  CHECK(lazy.macc == 0.5);

  // macc only averages classes present in the ground truth
  MetricsReport partial = classification_metrics({0, 0, 2}, {0, 1, 2}, 3);
  CHECK(partial.oa == doctest::Approx(2.0 / 3.0));
  CHECK(partial.macc == doctest::Approx((0.5 + 1.0) / 2.0));
}

TEST_CASE("segmentation metrics match a hand-computed 3-sample case") {
  const std::vector<std::vector<int>> truth{
      {0, 0, 1, 1}, {2, 2, 2, 2}, {0, 1, 2, 0}};
  const std::vector<std::vector<int>> pred{
      {0, 1, 1, 1}, {2, 2, 0, 0}, {0, 1, 2, 0}};
  MetricsReport r = segmentation_metrics(truth, pred, 3);

  // hand computation:
  //   sample 1: IoU(0) = 1/2, IoU(1) = 2/3            -> mean 7/12
  //   sample 2: IoU(0) = 0/2, IoU(2) = 2/4            -> mean 1/4
  //   sample 3: all parts exact                        -> mean 1
  CHECK(r.inst_miou == doctest::Approx((7.0 / 12 + 0.25 + 1.0) / 3.0).epsilon(1e-12));
  // global: IoU(0) = 3/6, IoU(1) = 3/4, IoU(2) = 3/5
  CHECK(r.per_class_iou[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.per_class_iou[1] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(r.per_class_iou[2] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(r.cat_miou == doctest::Approx((0.5 + 0.75 + 0.6) / 3.0).epsilon(1e-12));
  CHECK(r.cat_miou != r.inst_miou);
  CHECK(r.oa == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(r.macc == doctest::Approx((0.75 + 1.0 + 0.6) / 3.0).epsilon(1e-12));

  // invariant to sample order
  const std::vector<std::vector<int>> truth2{truth[2], truth[0], truth[1]};
  const std::vector<std::vector<int>> pred2{pred[2], pred[0], pred[1]};
  MetricsReport r2 = segmentation_metrics(truth2, pred2, 3);
  CHECK(r2.inst_miou == r.inst_miou);
  CHECK(r2.cat_miou == r.cat_miou);
  CHECK(r2.oa == r.oa);
}

TEST_CASE("metrics JSON carries the task-appropriate fields") {
  MetricsReport cls = classification_metrics({0, 1}, {0, 1}, 2);
  const std::string cj = cls.to_json();
  CHECK(cj.find("\"oa\":1") != std::string::npos);
  CHECK(cj.find("cat_miou") == std::string::npos);

  MetricsReport seg = segmentation_metrics({{0, 1}}, {{0, 1}}, 2);
  const std::string sj = seg.to_json();
  CHECK(sj.find("\"inst_miou\":1") != std::string::npos);
  CHECK(sj.find("\"per_class_iou\":[1,1]") != std::string::npos);
}

TEST_CASE("train: one epoch reduces the loss in at least 8 of 10 seeds") {
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Model model(mini_config());
    model.init_params(seed);
    const Dataset ds = mini_dataset(seed + 100);
    TrainOptions opt;
    opt.epochs = 2;
    opt.batch_size = 16;
    opt.seed = seed;
    const TrainResult res = train(model, ds, opt);
    if (res.log[1].loss < res.log[0].loss) ++improved;
  }
  CHECK(improved >= 8);
}

TEST_CASE("train: identical seeds give bit-identical checkpoints and logs") {
  const auto ck1 = tmp("run1.ckpt").string(), ck2 = tmp("run2.ckpt").string();
  const auto lg1 = tmp("run1.csv").string(), lg2 = tmp("run2.csv").string();
  for (int run = 0; run < 2; ++run) {
    Model model(mini_config());
    model.init_params(7);
    const Dataset ds = mini_dataset(300);
    TrainOptions opt;
    opt.epochs = 3;
    opt.batch_size = 8;
    opt.seed = 7;
    opt.checkpoint_path = run == 0 ? ck1 : ck2;
    opt.log_csv_path = run == 0 ? lg1 : lg2;
    train(model, ds, opt);
  }
  CHECK(slurp(ck1) == slurp(ck2));
  CHECK(slurp(lg1) == slurp(lg2));
  CHECK(slurp(lg1).substr(0, 17) == "epoch,lr,loss,oa\n");
}

TEST_CASE("train: logged lr follows the closed-form schedule") {
  Model model(mini_config());
  model.init_params(8);
  const Dataset ds = mini_dataset(301);
  TrainOptions opt;
  opt.epochs = 5;
  opt.batch_size = 8;
  opt.seed = 8;
  const TrainResult res = train(model, ds, opt);
  REQUIRE(res.log.size() == 5);
  for (int e = 0; e < 5; ++e) {
    CHECK(res.log[e].lr == cosine_lr(e, 5));
    CHECK(res.log[e].epoch == e);
  }
}

TEST_CASE("train + eval: checkpoint reproduces the logged accuracy exactly") {
  const auto ck = tmp("repro.ckpt").string();
  Model model(mini_config());
  model.init_params(9);
  const Dataset ds = mini_dataset(302);
  TrainOptions opt;
  opt.epochs = 4;
  opt.batch_size = 16;
  opt.seed = 9;
  opt.checkpoint_path = ck;
  const TrainResult res = train(model, ds, opt);

  Model fresh(mini_config());
  load_checkpoint(ck, fresh.registry());
  const MetricsReport rep = evaluate(fresh, ds);
  CHECK(rep.oa == res.best_oa);

  CHECK_THROWS_AS(train(model, Dataset{}, opt), ValueError);
}
