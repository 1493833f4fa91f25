#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pct3d/gfl.hpp"
#include "pct3d/lfa.hpp"

namespace pct3d {

enum class Task { kClassification, kSegmentation };

struct ModuleSpec {
  std::vector<ScaleSpec> scales;  // ascending k and d
};

// Every dimension the architecture leaves open, serializable as a flat
// key=value file.
struct ModelConfig {
  Task task = Task::kClassification;
  int input_points = 1024;
  int in_channels = 6;  // 3, or 6 with normals
  int stem_width = 64;
  std::vector<ModuleSpec> modules;
  int head_width1 = 512;
  int head_width2 = 256;
  int num_classes = 40;
  int num_parts = 0;
  CsaMode csa_mode = CsaMode::kLinearPoint;
  double dropout = 0.5;
  int pos_hidden = 32;
  std::vector<int> decoder_widths = {256, 128, 128};
  // ablation switches
  bool use_gfl = true;
  bool use_csa = true;
  bool use_ppsa = true;
  bool standard_psa = false;
  bool multi_level_global = true;
  bool mlp_lfa = false;

  static ModelConfig classification_default();
  static ModelConfig segmentation_default();
  static ModelConfig toy_classification();
  static ModelConfig toy_segmentation();

  void validate() const;  // throws ConfigError
  // Points entering each stage: [N, N/4, N/16, ...], one entry per module
  // plus the input count.
  std::vector<int> point_counts() const;
  int module_out_width(std::size_t module_index) const;
  int global_width() const;
};

ModelConfig load_model_config(const std::string& path);
void write_model_config(const ModelConfig& cfg, std::ostream& os);

}  // namespace pct3d
