#include "pct3d/gradcheck_suite.hpp"

#include "pct3d/geometry.hpp"
#include "pct3d/gfl.hpp"
#include "pct3d/lfa.hpp"
#include "pct3d/network.hpp"

namespace pct3d {

namespace {

std::vector<double> draw(RandomStream& rng, std::int64_t n, double lo = -1.0,
                         double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

PointMatrix draw_points(RandomStream& rng, int n) {
  PointMatrix p(n, 3);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) p(i, c) = rng.uniform(-1.0, 1.0);
  return p;
}

void randomize(ParamRegistry& reg, RandomStream& rng) {
  for (auto& [name, p] : reg.params)
    for (auto& v : p->values()) v = rng.uniform(-0.6, 0.6);
}

Tensor probe_sum(const Tensor& y, const Tensor& probe) {
  return sum_all(mul(y, probe));
}

BlockCheck check_stem(RandomStream& rng) {
  LbrLayer l1(6, 8), l2(8, 8);
  ParamRegistry reg;
  l1.register_into(reg, "stem.lbr1");
  l2.register_into(reg, "stem.lbr2");
  randomize(reg, rng);
  Tensor x = Tensor::from_data({8, 6}, draw(rng, 48));
  Tensor probe = Tensor::from_data({8, 8}, draw(rng, 64));
  auto program = [&](Tape& t) {
    ForwardCtx ctx{&t, RunMode::kTrain, nullptr};
    return probe_sum(l2.forward(l1.forward(x, ctx), ctx), probe);
  };
  return {"stem", grad_check(program, reg.params, 1e-5, 10, rng.next_u64()).max_rel_err};
}

BlockCheck check_edge_conv(RandomStream& rng) {
  const int n = 12, c = 4, k = 3, d = 6;
  GraphConvScale conv(2 * c + 6, d);
  ParamRegistry reg;
  conv.register_into(reg, "edge_conv");
  randomize(reg, rng);
  Parameter feats({n, c});
  for (auto& v : feats.values()) v = rng.uniform(-1.0, 1.0);
  reg.add("feats", &feats);

  Tensor coords = Tensor::from_data({n, 3}, draw(rng, n * 3));
  const std::vector<int> centers{0, 3, 7, 10};
  std::vector<int> nbrs;
  for (int i = 0; i < 4 * k; ++i) nbrs.push_back(static_cast<int>(rng.next_u64() % n));
  Tensor probe = Tensor::from_data({4, d}, draw(rng, 4 * d));
  auto program = [&](Tape& t) {
    ForwardCtx ctx{&t, RunMode::kTrain, nullptr};
    Tensor edge = edge_features(feats.use(&t), coords, centers, nbrs, k);
    auto [nset, pooled] = conv.forward(edge, ctx);
    return probe_sum(pooled, probe);
  };
  return {"edge_features+graph_conv",
          grad_check(program, reg.params, 1e-5, 10, rng.next_u64()).max_rel_err};
}

BlockCheck check_ppsa(RandomStream& rng) {
  const int s = 4, k = 3, d = 8;
  PpsaBlock blk(d, 8, false);
  ParamRegistry reg;
  blk.register_into(reg, "ppsa");
  randomize(reg, rng);
  Parameter fl({s, d}), nset({s, k * d});
  for (auto& v : fl.values()) v = rng.uniform(-1.0, 1.0);
  for (auto& v : nset.values()) v = rng.uniform(-1.0, 1.0);
  reg.add("fl", &fl);
  reg.add("nset", &nset);
  const PointMatrix coords = draw_points(rng, s);
  Tensor probe = Tensor::from_data({s, d}, draw(rng, s * d));
  auto program = [&](Tape& t) {
    ForwardCtx ctx{&t, RunMode::kTrain, nullptr};
    std::vector<PatchSlice> patches{{k, d, nset.use(&t)}};
    return probe_sum(blk.forward(fl.use(&t), coords, patches, ctx), probe);
  };
  return {"ppsa", grad_check(program, reg.params, 1e-5, 10, rng.next_u64()).max_rel_err};
}

BlockCheck check_csa(RandomStream& rng, CsaMode mode, const char* name) {
  const int s = 8, d = 6;
  CsaBlock blk(d, s, mode);
  ParamRegistry reg;
  blk.register_into(reg, "csa");
  randomize(reg, rng);
  Parameter fl({s, d});
  for (auto& v : fl.values()) v = rng.uniform(-1.0, 1.0);
  reg.add("fl", &fl);
  const PointMatrix coords = draw_points(rng, s);
  Tensor probe = Tensor::from_data({s, d}, draw(rng, s * d));
  auto program = [&](Tape& t) {
    ForwardCtx ctx{&t, RunMode::kTrain, nullptr};
    return probe_sum(blk.forward(fl.use(&t), coords, ctx), probe);
  };
  return {name, grad_check(program, reg.params, 1e-5, 10, rng.next_u64()).max_rel_err};
}

BlockCheck check_gfl(RandomStream& rng) {
  const int s = 8, d = 16;
  GflBlock::Options opt;
  opt.pos_hidden = 8;
  GflBlock blk(d, s, opt);
  ParamRegistry reg;
  blk.register_into(reg, "gfl");
  randomize(reg, rng);
  Parameter fl({s, d}), n1({s, 2 * 6}), n2({s, 3 * 10});
  for (auto& v : fl.values()) v = rng.uniform(-1.0, 1.0);
  for (auto& v : n1.values()) v = rng.uniform(-1.0, 1.0);
  for (auto& v : n2.values()) v = rng.uniform(-1.0, 1.0);
  reg.add("fl", &fl);
  reg.add("n1", &n1);
  reg.add("n2", &n2);
  std::vector<PointMatrix> coords{draw_points(rng, s)};
  Tensor probe = Tensor::from_data({s, d}, draw(rng, s * d));
  auto program = [&](Tape& t) {
    ForwardCtx ctx{&t, RunMode::kTrain, nullptr};
    std::vector<LfaResult::ScaleOut> scales{
        {2, 6, reshape(n1.use(&t), {s, 2, 6})},
        {3, 10, reshape(n2.use(&t), {s, 3, 10})}};
    return probe_sum(blk.forward(fl.use(&t), coords, scales, ctx), probe);
  };
  return {"gfl_block",
          grad_check(program, reg.params, 1e-5, 8, rng.next_u64()).max_rel_err};
}

BlockCheck check_head(RandomStream& rng) {
  const int b = 4, g = 10;
  LbrLayer h1(g, 8), h2(8, 6);
  LinearLayer out(6, 4);
  ParamRegistry reg;
  h1.register_into(reg, "head.lbr1");
  h2.register_into(reg, "head.lbr2");
  out.register_into(reg, "head.out");
  randomize(reg, rng);
  Parameter global({b, g});
  for (auto& v : global.values()) v = rng.uniform(-1.0, 1.0);
  reg.add("global", &global);
  const std::vector<int> labels{0, 2, 1, 3};
  auto program = [&](Tape& t) {
    ForwardCtx ctx{&t, RunMode::kTrain, nullptr};
    Tensor h = h2.forward(h1.forward(global.use(&t), ctx), ctx);
    return cross_entropy(out.forward(h, ctx), labels);
  };
  return {"classify_head",
          grad_check(program, reg.params, 1e-5, 10, rng.next_u64()).max_rel_err};
}

BlockCheck check_decoder(RandomStream& rng) {
  // two propagation stages over hand-built levels:
  //   deepest (4 pts, 6 ch) -> mid (8 pts, skip 5 ch) -> input (16 pts, stem 4 ch)
  LbrLayer s1a(6 + 5, 6), s1b(6, 6);
  LbrLayer s2(6 + 4, 5);
  LinearLayer out(5, 3);
  ParamRegistry reg;
  s1a.register_into(reg, "decoder.stage1.lbr1");
  s1b.register_into(reg, "decoder.stage1.lbr2");
  s2.register_into(reg, "decoder.stage2.lbr1");
  out.register_into(reg, "decoder.out");
  randomize(reg, rng);
  Parameter deep({4, 6}), skip({8, 5}), stem({16, 4});
  for (auto& v : deep.values()) v = rng.uniform(-1.0, 1.0);
  for (auto& v : skip.values()) v = rng.uniform(-1.0, 1.0);
  for (auto& v : stem.values()) v = rng.uniform(-1.0, 1.0);
  reg.add("deep", &deep);
  reg.add("skip", &skip);
  reg.add("stem", &stem);

  const PointMatrix deep_pts = draw_points(rng, 4);
  const PointMatrix mid_pts = draw_points(rng, 8);
  const PointMatrix in_pts = draw_points(rng, 16);
  std::vector<int> labels(16);
  for (auto& l : labels) l = static_cast<int>(rng.next_u64() % 3);

  auto program = [&](Tape& t) {
    ForwardCtx ctx{&t, RunMode::kTrain, nullptr};
    Tensor up1 = interpolate_idw(mid_pts, deep_pts, deep.use(&t));
    Tensor h = s1b.forward(
        s1a.forward(concat({up1, skip.use(&t)}, 1), ctx), ctx);
    Tensor up2 = interpolate_idw(in_pts, mid_pts, h);
    Tensor h2 = s2.forward(concat({up2, stem.use(&t)}, 1), ctx);
    return cross_entropy(out.forward(h2, ctx), labels);
  };
  return {"segment_decoder",
          grad_check(program, reg.params, 1e-5, 8, rng.next_u64()).max_rel_err};
}

}  // namespace

std::vector<BlockCheck> run_gradient_suite(std::uint64_t seed) {
  RandomStream rng(seed);
  std::vector<BlockCheck> out;
  out.push_back(check_stem(rng));
  out.push_back(check_edge_conv(rng));
  out.push_back(check_ppsa(rng));
  out.push_back(check_csa(rng, CsaMode::kLinearPoint, "csa_linear_point"));
  out.push_back(check_csa(rng, CsaMode::kFpsSubsample, "csa_fps_subsample"));
  out.push_back(check_gfl(rng));
  out.push_back(check_head(rng));
  out.push_back(check_decoder(rng));
  return out;
}

}  // namespace pct3d
