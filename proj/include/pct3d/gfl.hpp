#pragma once

#include <optional>
#include <vector>

#include "pct3d/lfa.hpp"

namespace pct3d {

enum class CsaMode { kLinearPoint, kFpsSubsample };

// Learned relative-position encoding: a two-layer map of p_i - p_j to a
// scalar bias per point pair.
struct PositionEncoder {
  explicit PositionEncoder(int hidden);
  void register_into(ParamRegistry& reg, const std::string& prefix);
  void init(RandomStream& rng);
  Tensor bias(const PointMatrix& coords, ForwardCtx& ctx);  // s x s

  LinearLayer l1;  // 3 -> hidden
  LinearLayer l2;  // hidden -> 1
};

// Per-sample neighborhood feature set of one scale, flattened to s x (k*d).
struct PatchSlice {
  int k = 0;
  int d = 0;
  Tensor flat;
};

// Point-Patch Self-Attention. Attention weights are standard scaled dot
// product with position bias; the Value entries are whole neighborhood sets,
// and the attended patches are max-pooled per point. The standard_value
// variant attends over the point features themselves instead.
class PpsaBlock {
 public:
  PpsaBlock(int width, int pos_hidden, bool standard_value);
  void register_into(ParamRegistry& reg, const std::string& prefix);
  void init(RandomStream& rng);

  Tensor forward(const Tensor& point_feats, const PointMatrix& coords,
                 const std::vector<PatchSlice>& patches, ForwardCtx& ctx);
  // Attention map only (softmax((Q K^T)/sqrt(d) + B)), for inspection/tests.
  Tensor attention_map(const Tensor& point_feats, const PointMatrix& coords,
                       ForwardCtx& ctx);

  Parameter wq;  // d x d
  Parameter wk;  // d x d
  std::optional<Parameter> wv;  // standard-attention value projection
  PositionEncoder pos;
  int width;
  bool standard_value;
};

// Channel-wise Self-Attention with an affinity matrix that emphasizes
// dissimilar channels. The point axis of K/Q is reduced to floor(s/8) rows,
// either by learned maps or by FPS subsampling.
class CsaBlock {
 public:
  CsaBlock(int width, int points, CsaMode mode);
  void register_into(ParamRegistry& reg, const std::string& prefix);
  void init(RandomStream& rng);

  Tensor forward(const Tensor& point_feats, const PointMatrix& coords,
                 ForwardCtx& ctx);
  // Column-stochastic affinity matrix (d x d), for inspection/tests.
  Tensor affinity(const Tensor& point_feats, const PointMatrix& coords,
                  ForwardCtx& ctx);

  Parameter wv;  // d x d
  std::optional<Parameter> rk, rq;  // s x floor(s/8), linear_point mode
  int width;
  int points;
  int reduced;
  CsaMode mode;
};

// Dual-attention global block: element-wise fusion of the two attention
// outputs and a residual LBR on top of the local features.
class GflBlock {
 public:
  struct Options {
    bool use_ppsa = true;
    bool use_csa = true;
    bool standard_psa = false;
    CsaMode csa_mode = CsaMode::kLinearPoint;
    int pos_hidden = 32;
  };

  GflBlock(int width, int points, const Options& opt);
  void register_into(ParamRegistry& reg, const std::string& prefix);
  void init(RandomStream& rng);

  // point_feats: (B*s) x d stacked; attention runs per sample.
  Tensor forward(const Tensor& point_feats,
                 const std::vector<PointMatrix>& coords,
                 const std::vector<LfaResult::ScaleOut>& scales,
                 ForwardCtx& ctx);

  std::optional<PpsaBlock> ppsa;
  std::optional<CsaBlock> csa;
  LbrLayer lbr;
  int width;
  int points;
};

}  // namespace pct3d
