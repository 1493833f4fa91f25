#pragma once

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "pct3d/checkpoint.hpp"
#include "pct3d/network.hpp"

namespace pct3d {

// lr(t) = lr_min + (lr0 - lr_min) * (1 + cos(pi t / T)) / 2, clamped to
// lr_min past T.
double cosine_lr(int epoch, int total_epochs, double lr0 = 0.01,
                 double lr_min = 0.0);

struct SgdConfig {
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// Velocity-form momentum with decay folded into the gradient:
// g' = g + wd*theta; v <- m*v + g'; theta <- theta - lr*v.
void sgd_step(ParamRegistry& reg, double lr, const SgdConfig& cfg);
void zero_grads(ParamRegistry& reg);

struct TrainOptions {
  int epochs = 200;
  int batch_size = 16;
  std::uint64_t seed = 1;
  SgdConfig sgd;
  std::string checkpoint_path;  // empty: do not save
  std::string log_csv_path;     // empty: do not write
  std::ostream* progress = nullptr;
  int progress_every = 25;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double oa = 0.0;  // eval-mode accuracy over the training set
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_loss = std::numeric_limits<double>::infinity();
  double best_oa = 0.0;
  double final_oa = 0.0;
};

// Deterministic given the seed: shuffling, dropout and the saved checkpoint
// (best epoch by mean train loss) all derive from it.
TrainResult train(Model& model, const Dataset& data, const TrainOptions& opt);

struct MetricsReport {
  Task task = Task::kClassification;
  double oa = 0.0;
  double macc = 0.0;
  double cat_miou = 0.0;
  double inst_miou = 0.0;
  std::vector<double> per_class_iou;
  std::string to_json() const;
};

MetricsReport evaluate(Model& model, const Dataset& data);

// Metric arithmetic on plain label vectors (what evaluate() feeds after the
// forward passes).
MetricsReport classification_metrics(const std::vector<int>& truth,
                                     const std::vector<int>& pred,
                                     int num_classes);
MetricsReport segmentation_metrics(
    const std::vector<std::vector<int>>& truth_per_sample,
    const std::vector<std::vector<int>>& pred_per_sample, int num_parts);

// Argmax class per row of a logits block.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace pct3d
