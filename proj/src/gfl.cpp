#include "pct3d/gfl.hpp"

#include <cmath>
#include <string>

namespace pct3d {

PositionEncoder::PositionEncoder(int hidden) : l1(3, hidden), l2(hidden, 1) {}

void PositionEncoder::register_into(ParamRegistry& reg, const std::string& prefix) {
  l1.register_into(reg, prefix + ".l1");
  l2.register_into(reg, prefix + ".l2");
}

void PositionEncoder::init(RandomStream& rng) {
  l1.init(rng);
  l2.init(rng);
}

Tensor PositionEncoder::bias(const PointMatrix& coords, ForwardCtx& ctx) {
  const int s = static_cast<int>(coords.rows());
  std::vector<double> diffs(static_cast<std::size_t>(s) * s * 3);
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < s; ++j) {
      const Eigen::RowVector3d d = coords.row(i) - coords.row(j);
      const std::size_t base = (static_cast<std::size_t>(i) * s + j) * 3;
      diffs[base] = d.x();
      diffs[base + 1] = d.y();
      diffs[base + 2] = d.z();
    }
  }
  Tensor x = Tensor::from_data({s * s, 3}, std::move(diffs));
  Tensor h = l2.forward(relu(l1.forward(x, ctx)), ctx);
  return reshape(h, {s, s});
}

PpsaBlock::PpsaBlock(int width, int pos_hidden, bool standard_value)
    : wq({width, width}),
      wk({width, width}),
      pos(pos_hidden),
      width(width),
      standard_value(standard_value) {
  if (standard_value) wv.emplace(Shape{width, width});
}

void PpsaBlock::register_into(ParamRegistry& reg, const std::string& prefix) {
  reg.add(prefix + ".wq", &wq);
  reg.add(prefix + ".wk", &wk);
  if (wv) reg.add(prefix + ".wv", &*wv);
  pos.register_into(reg, prefix + ".pos");
}

void PpsaBlock::init(RandomStream& rng) {
  init_linear_weight(wq, rng);
  init_linear_weight(wk, rng);
  if (wv) init_linear_weight(*wv, rng);
  pos.init(rng);
}

Tensor PpsaBlock::attention_map(const Tensor& point_feats,
                                const PointMatrix& coords, ForwardCtx& ctx) {
  if (point_feats.rank() != 2 || point_feats.extent(1) != width) {
    throw ShapeError("ppsa: features are not s x d");
  }
  Tensor q = matmul(point_feats, wq.use(ctx.tape));
  Tensor k = matmul(point_feats, wk.use(ctx.tape));
  Tensor logits = scale(matmul(q, transpose2d(k)), 1.0 / std::sqrt(width));
  return softmax(add(logits, pos.bias(coords, ctx)), 1);
}

Tensor PpsaBlock::forward(const Tensor& point_feats, const PointMatrix& coords,
                          const std::vector<PatchSlice>& patches,
                          ForwardCtx& ctx) {
  Tensor attn = attention_map(point_feats, coords, ctx);
  const int s = point_feats.extent(0);
  if (standard_value) {
    return matmul(attn, matmul(point_feats, wv->use(ctx.tape)));
  }
  int total = 0;
  for (const PatchSlice& p : patches) total += p.d;
  if (total != width) {
    throw ConfigError("ppsa: patch widths sum to " + std::to_string(total) +
                      ", expected " + std::to_string(width));
  }
  std::vector<Tensor> outs;
  outs.reserve(patches.size());
  for (const PatchSlice& p : patches) {
    Tensor attended = matmul(attn, p.flat);  // s x (k*d)
    Tensor pooled = max_reduce(reshape(attended, {s, p.k, p.d}), 1);
    outs.push_back(reshape(pooled, {s, p.d}));
  }
  return outs.size() == 1 ? outs[0] : concat(outs, 1);
}

CsaBlock::CsaBlock(int width, int points, CsaMode mode)
    : wv({width, width}),
      width(width),
      points(points),
      reduced(points / 8),
      mode(mode) {
  if (points < 8) {
    throw ConfigError("csa: needs at least 8 points per sample, got " +
                      std::to_string(points));
  }
  if (mode == CsaMode::kLinearPoint) {
    rk.emplace(Shape{points, reduced});
    rq.emplace(Shape{points, reduced});
  }
}

void CsaBlock::register_into(ParamRegistry& reg, const std::string& prefix) {
  reg.add(prefix + ".wv", &wv);
  if (rk) reg.add(prefix + ".rk", &*rk);
  if (rq) reg.add(prefix + ".rq", &*rq);
}

void CsaBlock::init(RandomStream& rng) {
  init_linear_weight(wv, rng);
  if (rk) init_linear_weight(*rk, rng);
  if (rq) init_linear_weight(*rq, rng);
}

Tensor CsaBlock::affinity(const Tensor& point_feats, const PointMatrix& coords,
                          ForwardCtx& ctx) {
  if (point_feats.rank() != 2 || point_feats.extent(0) != points ||
      point_feats.extent(1) != width) {
    throw ShapeError("csa: features are not s x d");
  }
  Tensor k, q;
  if (mode == CsaMode::kLinearPoint) {
    k = matmul(transpose2d(rk->use(ctx.tape)), point_feats);
    q = matmul(transpose2d(rq->use(ctx.tape)), point_feats);
  } else {
    const SampleResult sr = farthest_point_sample(coords, reduced);
    k = gather_rows(point_feats, sr.indices);
    q = k;
  }
  Tensor sim = matmul(transpose2d(k), q);  // d x d
  Tensor row_max = max_reduce(sim, 1);     // d x 1
  Tensor expanded = matmul(row_max, Tensor::full({1, width}, 1.0));
  // Row max minus similarity: zero for each row's most similar channel,
  // larger for dissimilar ones; column softmax makes it stochastic.
  return softmax(sub(expanded, sim), 0);
}

Tensor CsaBlock::forward(const Tensor& point_feats, const PointMatrix& coords,
                         ForwardCtx& ctx) {
  Tensor a = affinity(point_feats, coords, ctx);
  return matmul(matmul(point_feats, wv.use(ctx.tape)), a);
}

GflBlock::GflBlock(int width, int points, const Options& opt)
    : lbr(width, width), width(width), points(points) {
  if (!opt.use_ppsa && !opt.use_csa) {
    throw ConfigError("gfl: at least one attention branch must be enabled");
  }
  if (opt.use_ppsa) ppsa.emplace(width, opt.pos_hidden, opt.standard_psa);
  if (opt.use_csa) csa.emplace(width, points, opt.csa_mode);
}

void GflBlock::register_into(ParamRegistry& reg, const std::string& prefix) {
  if (ppsa) ppsa->register_into(reg, prefix + ".ppsa");
  if (csa) csa->register_into(reg, prefix + ".csa");
  lbr.register_into(reg, prefix + ".lbr");
}

void GflBlock::init(RandomStream& rng) {
  if (ppsa) ppsa->init(rng);
  if (csa) csa->init(rng);
  lbr.init(rng);
}

Tensor GflBlock::forward(const Tensor& point_feats,
                         const std::vector<PointMatrix>& coords,
                         const std::vector<LfaResult::ScaleOut>& scales,
                         ForwardCtx& ctx) {
  const int batch = static_cast<int>(coords.size());
  if (point_feats.extent(0) != batch * points) {
    throw ShapeError("gfl: stacked features are not (B*s) x d");
  }
  std::vector<Tensor> fused;
  fused.reserve(batch);
  for (int b = 0; b < batch; ++b) {
    Tensor fl = slice_rows(point_feats, b * points, (b + 1) * points);
    Tensor fg;
    if (ppsa) {
      std::vector<PatchSlice> patches;
      if (!ppsa->standard_value) {
        patches.reserve(scales.size());
        for (const auto& sc : scales) {
          Tensor flat = reshape(sc.nset, {batch * points, sc.k * sc.d});
          patches.push_back(
              {sc.k, sc.d, slice_rows(flat, b * points, (b + 1) * points)});
        }
      }
      fg = ppsa->forward(fl, coords[b], patches, ctx);
    }
    if (csa) {
      Tensor fc = csa->forward(fl, coords[b], ctx);
      fg = fg.empty() ? std::move(fc) : add(fg, fc);
    }
    fused.push_back(std::move(fg));
  }
  Tensor global = fused.size() == 1 ? fused[0] : concat(fused, 0);
  return add(point_feats, lbr.forward(global, ctx));
}

}  // namespace pct3d
