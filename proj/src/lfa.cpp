#include "pct3d/lfa.hpp"

#include <string>

namespace pct3d {

Tensor fuse_feature(const Tensor& feats, const Tensor& coords) {
  if (feats.empty()) return coords;  // no semantic features yet
  if (feats.rank() != 2 || coords.rank() != 2 ||
      feats.extent(0) != coords.extent(0)) {
    throw ShapeError("fuse_feature: row counts differ");
  }
  return concat({feats, coords}, 1);
}

Tensor edge_features(const Tensor& feats, const Tensor& coords,
                     const std::vector<int>& center_idx,
                     const std::vector<int>& neighbor_idx, int k) {
  if (feats.rank() != 2 || coords.rank() != 2 || coords.extent(1) != 3) {
    throw ShapeError("edge_features: feats must be RxC, coords Rx3");
  }
  if (neighbor_idx.size() != center_idx.size() * static_cast<std::size_t>(k)) {
    throw ShapeError("edge_features: neighbor table is not centers x k");
  }
  const int s = static_cast<int>(center_idx.size());
  const int c = feats.extent(1);
  std::vector<int> center_rep(neighbor_idx.size());
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < k; ++j)
      center_rep[static_cast<std::size_t>(i) * k + j] = center_idx[i];

  Tensor f_ngb = gather_rows(feats, neighbor_idx);
  Tensor f_ctr = gather_rows(feats, center_rep);
  Tensor p_ngb = gather_rows(coords, neighbor_idx);
  Tensor p_ctr = gather_rows(coords, std::move(center_rep));
  Tensor edge = concat(
      {sub(f_ngb, f_ctr), sub(p_ngb, p_ctr), std::move(f_ctr), std::move(p_ctr)}, 1);
  return reshape(edge, {s, k, 2 * c + 6});
}

GraphConvScale::GraphConvScale(int in_width, int out_width)
    : conv(in_width, out_width), bn(out_width) {}

void GraphConvScale::register_into(ParamRegistry& reg, const std::string& prefix) {
  conv.register_into(reg, prefix + ".conv");
  bn.register_into(reg, prefix + ".bn");
}

void GraphConvScale::init(RandomStream& rng) {
  conv.init(rng);
  bn.init(rng);
}

std::pair<Tensor, Tensor> GraphConvScale::forward(const Tensor& edge,
                                                  ForwardCtx& ctx) {
  if (edge.rank() != 3) throw ShapeError("graph_conv: edge tensor must be rank 3");
  const int s = edge.extent(0), k = edge.extent(1);
  Tensor flat = reshape(edge, {s * k, edge.extent(2)});
  Tensor h = relu(bn.forward(conv.forward(flat, ctx), ctx));
  const int d = h.extent(1);
  Tensor nset = reshape(h, {s, k, d});
  Tensor pooled = reshape(max_reduce(nset, 1), {s, d});
  return {std::move(nset), std::move(pooled)};
}

LfaBlock::LfaBlock(int in_channels, std::vector<ScaleSpec> scales,
                   bool mlp_variant)
    : in_channels_(in_channels),
      scales_(std::move(scales)),
      mlp_variant_(mlp_variant) {
  if (scales_.empty()) throw ConfigError("lfa: at least one scale required");
  for (std::size_t m = 1; m < scales_.size(); ++m) {
    if (scales_[m].k <= scales_[m - 1].k || scales_[m].d <= scales_[m - 1].d) {
      throw ConfigError("lfa: scale k's and d's must be strictly increasing");
    }
  }
  const int in_width = mlp_variant_ ? in_channels_ + 3 : 2 * in_channels_ + 6;
  for (const ScaleSpec& sc : scales_) convs_.emplace_back(in_width, sc.d);
}

void LfaBlock::register_into(ParamRegistry& reg, const std::string& prefix) {
  for (std::size_t m = 0; m < convs_.size(); ++m) {
    convs_[m].register_into(reg, prefix + ".scale" + std::to_string(m + 1));
  }
}

void LfaBlock::init(RandomStream& rng) {
  for (auto& c : convs_) c.init(rng);
}

int LfaBlock::out_width() const {
  int w = 0;
  for (const ScaleSpec& sc : scales_) w += sc.d;
  return w;
}

LfaResult LfaBlock::forward(const Tensor& parent_feats,
                            const std::vector<PointMatrix>& parent_coords,
                            ForwardCtx& ctx) {
  const int batch = static_cast<int>(parent_coords.size());
  if (batch == 0) throw ValueError("lfa: empty batch");
  const int n = static_cast<int>(parent_coords[0].rows());
  for (const auto& pc : parent_coords) {
    if (pc.rows() != n) throw ContractError("lfa: ragged batch");
  }
  if (parent_feats.extent(0) != batch * n ||
      parent_feats.extent(1) != in_channels_) {
    throw ShapeError("lfa: stacked features are not (B*N) x C");
  }
  const int k_max = scales_.back().k;
  if (n < 4 * k_max) {
    throw ConfigError("lfa: point count " + std::to_string(n) +
                      " below 4*k_max = " + std::to_string(4 * k_max));
  }
  const int s = n / 4;

  LfaResult out;
  out.s = s;
  out.coords.reserve(batch);
  out.sampled_idx.reserve(batch);
  std::vector<int> centers(static_cast<std::size_t>(batch) * s);
  for (int b = 0; b < batch; ++b) {
    SampleResult sr = farthest_point_sample(parent_coords[b], s);
    PointMatrix sampled(s, 3);
    for (int i = 0; i < s; ++i) {
      sampled.row(i) = parent_coords[b].row(sr.indices[i]);
      centers[static_cast<std::size_t>(b) * s + i] = b * n + sr.indices[i];
    }
    out.coords.push_back(std::move(sampled));
    out.sampled_idx.push_back(std::move(sr.indices));
  }

  const Tensor coords_stacked = stack_coords(parent_coords);
  std::vector<Tensor> pooled;
  if (mlp_variant_) {
    Tensor ci = fuse_feature(gather_rows(parent_feats, centers),
                             gather_rows(coords_stacked, centers));
    for (std::size_t m = 0; m < scales_.size(); ++m) {
      Tensor h = relu(convs_[m].bn.forward(convs_[m].conv.forward(ci, ctx), ctx));
      out.scales.push_back(
          {1, scales_[m].d, reshape(h, {batch * s, 1, scales_[m].d})});
      pooled.push_back(std::move(h));
    }
  } else {
    for (std::size_t m = 0; m < scales_.size(); ++m) {
      const int k = scales_[m].k;
      std::vector<int> neighbors(static_cast<std::size_t>(batch) * s * k);
      for (int b = 0; b < batch; ++b) {
        const KnnResult nn = knn(out.coords[b], parent_coords[b], k);
        for (int i = 0; i < s; ++i)
          for (int j = 0; j < k; ++j)
            neighbors[(static_cast<std::size_t>(b) * s + i) * k + j] =
                b * n + nn.idx(i, j);
      }
      Tensor edge =
          edge_features(parent_feats, coords_stacked, centers, neighbors, k);
      auto [nset, l] = convs_[m].forward(edge, ctx);
      out.scales.push_back({k, scales_[m].d, std::move(nset)});
      pooled.push_back(std::move(l));
    }
  }
  out.features = pooled.size() == 1 ? pooled[0] : concat(pooled, 1);
  return out;
}

}  // namespace pct3d
