#pragma once

#include <vector>

#include "pct3d/geometry.hpp"
#include "pct3d/layers.hpp"

namespace pct3d {

// One kNN scale: neighborhood size and graph-convolution output width.
struct ScaleSpec {
  int k = 0;
  int d = 0;
};

// Per-point feature/coordinate fusion: rows of feats and coords concatenated
// channel-wise, features first.
Tensor fuse_feature(const Tensor& feats, const Tensor& coords);

// Edge features for one scale: per center i and neighbor j,
// concat(F_ij - F_i, P_ij - P_i, F_i, P_i), giving 2C+6 channels. Index
// vectors address rows of the stacked feats/coords; neighbor_idx is
// center-major with k entries per center.
Tensor edge_features(const Tensor& feats, const Tensor& coords,
                     const std::vector<int>& center_idx,
                     const std::vector<int>& neighbor_idx, int k);

// Shared 1x1 convolution (per-edge linear + BN + ReLU) followed by a max
// over the neighbor axis. Returns both the transformed neighborhood set and
// the pooled per-point feature.
struct GraphConvScale {
  GraphConvScale(int in_width, int out_width);
  void register_into(ParamRegistry& reg, const std::string& prefix);
  void init(RandomStream& rng);
  // edge: {S, k, in_width} -> nset {S, k, out_width}, pooled {S, out_width}
  std::pair<Tensor, Tensor> forward(const Tensor& edge, ForwardCtx& ctx);

  LinearLayer conv;
  BatchNormLayer bn;
};

struct LfaResult {
  Tensor features;  // (B*s) x (d1+...+dm)
  std::vector<PointMatrix> coords;            // per-sample sampled coords
  std::vector<std::vector<int>> sampled_idx;  // per-sample FPS indices
  struct ScaleOut {
    int k = 0;
    int d = 0;
    Tensor nset;  // {B*s, k, d}, the Value source for point-patch attention
  };
  std::vector<ScaleOut> scales;
  int s = 0;  // sampled points per sample
};

// FPS downsampling to N/4 points plus multi-scale kNN graph convolution.
// The standard variant convolves edge features; the mlp variant maps the
// fused center feature alone through the same widths.
class LfaBlock {
 public:
  LfaBlock(int in_channels, std::vector<ScaleSpec> scales, bool mlp_variant);
  void register_into(ParamRegistry& reg, const std::string& prefix);
  void init(RandomStream& rng);

  LfaResult forward(const Tensor& parent_feats,
                    const std::vector<PointMatrix>& parent_coords,
                    ForwardCtx& ctx);

  int out_width() const;
  const std::vector<ScaleSpec>& scales() const { return scales_; }

 private:
  int in_channels_;
  std::vector<ScaleSpec> scales_;
  bool mlp_variant_;
  std::vector<GraphConvScale> convs_;
};

}  // namespace pct3d
