#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pct3d/config.hpp"
#include "pct3d/dataio.hpp"
#include "pct3d/gfl.hpp"
#include "pct3d/lfa.hpp"

namespace pct3d {

struct EncoderOut {
  int batch = 0;
  Tensor stem_features;  // (B*n) x stem_width
  std::vector<PointMatrix> input_coords;
  struct Level {
    Tensor features;  // (B*s) x width
    std::vector<PointMatrix> coords;
    int s = 0;
    int width = 0;
  };
  std::vector<Level> levels;
  Tensor global_feature;  // B x global_width
};

// The assembled network: stem MLP, stacked LFA+GFL modules, multi-level
// global feature, and a classification head or segmentation decoder
// depending on the configured task.
class Model {
 public:
  explicit Model(ModelConfig cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  void init_params(std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry& registry() { return reg_; }
  const ParamRegistry& registry() const { return reg_; }

  // Two stacked LBR layers projecting raw per-point channels.
  Tensor stem_forward(const Tensor& x, ForwardCtx& ctx);
  EncoderOut encode(const std::vector<const PointCloud*>& batch,
                    ForwardCtx& ctx);
  // B x num_classes logits from the multi-level global feature.
  Tensor classify(const EncoderOut& enc, ForwardCtx& ctx);
  // (B*n) x num_parts logits after feature propagation to every input point.
  Tensor segment(const EncoderOut& enc, ForwardCtx& ctx);

  // Convenience: encode + task head.
  Tensor forward(const std::vector<const PointCloud*>& batch, ForwardCtx& ctx);

  std::int64_t param_count() const;
  double param_megabytes() const;  // 32-bit convention: count * 4 / 2^20

  struct BenchEntry {
    std::string block;
    double total_ms = 0.0;
  };
  std::vector<BenchEntry> benchmark(const PointCloud& cloud, int repeats);

 private:
  Tensor input_features(const std::vector<const PointCloud*>& batch) const;

  ModelConfig cfg_;
  ParamRegistry reg_;

  std::optional<LbrLayer> stem1_, stem2_;
  struct Module {
    LfaBlock lfa;
    std::unique_ptr<GflBlock> gfl;
    int width = 0;
  };
  std::vector<Module> modules_;

  std::optional<LbrLayer> head1_, head2_;
  std::optional<LinearLayer> head_out_;

  struct FpStage {
    LbrLayer l1;
    std::optional<LbrLayer> l2;  // absent on the final stage
  };
  std::vector<FpStage> fp_stages_;
  std::optional<LinearLayer> seg_out_;
};

// Batched 3-NN inverse-distance interpolation over per-sample geometry;
// source_feats rows are the stacked per-sample source points.
Tensor interpolate_stacked(const std::vector<PointMatrix>& target,
                           const std::vector<PointMatrix>& source,
                           const Tensor& source_feats);

}  // namespace pct3d
