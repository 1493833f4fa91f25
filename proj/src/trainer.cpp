#include "pct3d/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "pct3d/ops.hpp"

namespace pct3d {

double cosine_lr(int epoch, int total_epochs, double lr0, double lr_min) {
  if (epoch < 0 || total_epochs < 1) throw ValueError("cosine_lr: bad epoch/total");
  if (epoch >= total_epochs) return lr_min;
  return lr_min + 0.5 * (lr0 - lr_min) *
                      (1.0 + std::cos(EIGEN_PI * epoch / total_epochs));
}

void zero_grads(ParamRegistry& reg) {
  for (auto& [name, p] : reg.params) p->zero_grad();
}

void sgd_step(ParamRegistry& reg, double lr, const SgdConfig& cfg) {
  for (auto& [name, p] : reg.params) {
    std::vector<double>& theta = p->values();
    std::vector<double>& g = p->grad();
    std::vector<double>& v = p->velocity();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double adjusted = g[i] + cfg.weight_decay * theta[i];
      v[i] = cfg.momentum * v[i] + adjusted;
      theta[i] -= lr * v[i];
    }
  }
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const int rows = logits.extent(0), cols = logits.extent(1);
  std::vector<int> out(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    int best = 0;
    for (int c = 1; c < cols; ++c) {
      if (logits.at2(r, c) > logits.at2(r, best)) best = c;
    }
    out[r] = best;
  }
  return out;
}

namespace {

std::vector<int> batch_labels(const Model& model,
                              const std::vector<const PointCloud*>& batch) {
  std::vector<int> labels;
  if (model.config().task == Task::kClassification) {
    for (const PointCloud* pc : batch) {
      if (pc->class_label < 0) throw ValueError("sample has no class label");
      labels.push_back(pc->class_label);
    }
  } else {
    for (const PointCloud* pc : batch) {
      if (!pc->has_point_labels()) throw ValueError("sample has no point labels");
      labels.insert(labels.end(), pc->point_labels.begin(), pc->point_labels.end());
    }
  }
  return labels;
}

// Eval-mode accuracy over the whole set (classification: per sample;
// segmentation: per point).
double eval_accuracy(Model& model, const Dataset& data, int batch_size) {
  std::int64_t correct = 0, total = 0;
  for (std::size_t begin = 0; begin < data.samples.size(); begin += batch_size) {
    const std::size_t end = std::min(data.samples.size(),
                                     begin + static_cast<std::size_t>(batch_size));
    std::vector<const PointCloud*> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&data.samples[i]);
    ForwardCtx ctx;  // eval, no tape
    Tensor logits = model.forward(batch, ctx);
    const std::vector<int> pred = argmax_rows(logits);
    const std::vector<int> truth = batch_labels(model, batch);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      correct += pred[i] == truth[i];
    }
    total += static_cast<std::int64_t>(pred.size());
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

}  // namespace

TrainResult train(Model& model, const Dataset& data, const TrainOptions& opt) {
  if (data.samples.empty()) throw ValueError("train: empty dataset");
  if (opt.epochs < 1) throw ValueError("train: epochs must be >= 1");
  if (opt.batch_size < 1) throw ValueError("train: batch_size must be >= 1");

  RandomStream shuffle_rng(opt.seed);
  RandomStream dropout_rng(opt.seed ^ 0xd1ce5eedULL);

  TrainResult result;
  std::vector<CheckpointEntry> best_snapshot;
  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, opt.epochs, opt.sgd.lr0);
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::int64_t seen = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t end = std::min(
          order.size(), begin + static_cast<std::size_t>(opt.batch_size));
      std::vector<const PointCloud*> batch;
      for (std::size_t i = begin; i < end; ++i)
        batch.push_back(&data.samples[order[i]]);

      Tape tape;
      ForwardCtx ctx{&tape, RunMode::kTrain, &dropout_rng};
      Tensor logits = model.forward(batch, ctx);
      Tensor loss = cross_entropy(logits, batch_labels(model, batch));
      zero_grads(model.registry());
      tape.backward(loss);
      sgd_step(model.registry(), lr, opt.sgd);

      loss_sum += loss.scalar_value() * static_cast<double>(batch.size());
      seen += static_cast<std::int64_t>(batch.size());
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.loss = loss_sum / static_cast<double>(seen);
    entry.oa = eval_accuracy(model, data, opt.batch_size);
    result.log.push_back(entry);

    if (entry.loss < result.best_loss) {
      result.best_loss = entry.loss;
      result.best_epoch = epoch;
      result.best_oa = entry.oa;
      best_snapshot = snapshot_entries(model.registry());
    }
    if (opt.progress && (epoch % opt.progress_every == 0 || epoch + 1 == opt.epochs)) {
      *opt.progress << "epoch " << epoch << " lr " << lr << " loss " << entry.loss
                    << " oa " << entry.oa << '\n';
    }
  }
  result.final_oa = result.log.back().oa;

  if (!opt.checkpoint_path.empty()) {
    write_checkpoint(opt.checkpoint_path, best_snapshot);
  }
  if (!opt.log_csv_path.empty()) {
    std::ofstream csv(opt.log_csv_path);
    if (!csv) throw ValueError("cannot write log '" + opt.log_csv_path + "'");
    csv << "epoch,lr,loss,oa\n";
    char buf[160];
    for (const EpochLog& e : result.log) {
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.lr,
                    e.loss, e.oa);
      csv << buf;
    }
  }
  return result;
}

MetricsReport classification_metrics(const std::vector<int>& truth,
                                     const std::vector<int>& pred,
                                     int num_classes) {
  if (truth.size() != pred.size()) {
    throw ContractError("classification_metrics: length mismatch");
  }
  std::vector<std::int64_t> confusion(
      static_cast<std::size_t>(num_classes) * num_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes) {
      throw ValueError("class label " + std::to_string(truth[i]) +
                       " outside configured range");
    }
    confusion[static_cast<std::size_t>(truth[i]) * num_classes + pred[i]] += 1;
  }
  std::int64_t total = 0, diag = 0;
  double recall_sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::int64_t row = 0;
    for (int p = 0; p < num_classes; ++p)
      row += confusion[static_cast<std::size_t>(c) * num_classes + p];
    diag += confusion[static_cast<std::size_t>(c) * num_classes + c];
    total += row;
    if (row > 0) {
      recall_sum +=
          static_cast<double>(confusion[static_cast<std::size_t>(c) * num_classes + c]) /
          static_cast<double>(row);
      ++present;
    }
  }
  MetricsReport report;
  report.task = Task::kClassification;
  report.oa = total ? static_cast<double>(diag) / static_cast<double>(total) : 0.0;
  report.macc = present ? recall_sum / present : 0.0;
  return report;
}

MetricsReport segmentation_metrics(
    const std::vector<std::vector<int>>& truth_per_sample,
    const std::vector<std::vector<int>>& pred_per_sample, int num_parts) {
  if (truth_per_sample.size() != pred_per_sample.size()) {
    throw ContractError("segmentation_metrics: sample count mismatch");
  }
  std::vector<std::int64_t> inter(static_cast<std::size_t>(num_parts), 0);
  std::vector<std::int64_t> uni(static_cast<std::size_t>(num_parts), 0);
  std::vector<std::int64_t> gt_count(static_cast<std::size_t>(num_parts), 0);
  std::vector<std::int64_t> correct_per_part(static_cast<std::size_t>(num_parts), 0);
  std::int64_t correct = 0, total = 0;
  double inst_sum = 0.0;
  std::int64_t inst_n = 0;

  for (std::size_t si = 0; si < truth_per_sample.size(); ++si) {
    const auto& truth = truth_per_sample[si];
    const auto& pred = pred_per_sample[si];
    if (truth.size() != pred.size()) {
      throw ContractError("segmentation_metrics: point count mismatch");
    }
    std::vector<std::int64_t> s_inter(static_cast<std::size_t>(num_parts), 0);
    std::vector<std::int64_t> s_union(static_cast<std::size_t>(num_parts), 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const int t = truth[i];
      const int p = pred[i];
      if (t < 0 || t >= num_parts) {
        throw ValueError("part label " + std::to_string(t) +
                         " outside configured range");
      }
      ++total;
      ++gt_count[t];
      if (t == p) {
        ++correct;
        ++correct_per_part[t];
        ++s_inter[t];
        ++s_union[t];
      } else {
        ++s_union[t];
        ++s_union[p];
      }
    }
    double sample_iou = 0.0;
    int sample_parts = 0;
    for (int c = 0; c < num_parts; ++c) {
      inter[c] += s_inter[c];
      uni[c] += s_union[c];
      if (s_union[c] > 0) {
        sample_iou += static_cast<double>(s_inter[c]) / static_cast<double>(s_union[c]);
        ++sample_parts;
      }
    }
    if (sample_parts > 0) {
      inst_sum += sample_iou / sample_parts;
      ++inst_n;
    }
  }

  MetricsReport report;
  report.task = Task::kSegmentation;
  report.oa = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  double recall_sum = 0.0;
  int recall_n = 0;
  double cat_sum = 0.0;
  int cat_n = 0;
  report.per_class_iou.assign(static_cast<std::size_t>(num_parts), 1.0);
  for (int c = 0; c < num_parts; ++c) {
    if (uni[c] > 0) {
      report.per_class_iou[c] =
          static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
    }
    if (gt_count[c] > 0) {
      recall_sum += static_cast<double>(correct_per_part[c]) /
                    static_cast<double>(gt_count[c]);
      ++recall_n;
      cat_sum += report.per_class_iou[c];
      ++cat_n;
    }
  }
  report.macc = recall_n ? recall_sum / recall_n : 0.0;
  report.cat_miou = cat_n ? cat_sum / cat_n : 0.0;
  report.inst_miou = inst_n ? inst_sum / static_cast<double>(inst_n) : 0.0;
  return report;
}

MetricsReport evaluate(Model& model, const Dataset& data) {
  if (data.samples.empty()) throw ValueError("evaluate: empty dataset");
  const Task task = model.config().task;

  if (task == Task::kClassification) {
    std::vector<int> truth, pred;
    for (std::size_t begin = 0; begin < data.samples.size(); begin += 16) {
      const std::size_t end = std::min(data.samples.size(), begin + 16);
      std::vector<const PointCloud*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&data.samples[i]);
      ForwardCtx ctx;
      Tensor logits = model.forward(batch, ctx);
      const std::vector<int> p = argmax_rows(logits);
      pred.insert(pred.end(), p.begin(), p.end());
      for (const PointCloud* pc : batch) truth.push_back(pc->class_label);
    }
    return classification_metrics(truth, pred, model.config().num_classes);
  }

  std::vector<std::vector<int>> truth, pred;
  for (std::size_t begin = 0; begin < data.samples.size(); begin += 16) {
    const std::size_t end = std::min(data.samples.size(), begin + 16);
    std::vector<const PointCloud*> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&data.samples[i]);
    ForwardCtx ctx;
    Tensor logits = model.forward(batch, ctx);
    const std::vector<int> flat = argmax_rows(logits);
    std::size_t row = 0;
    for (const PointCloud* pc : batch) {
      truth.push_back(pc->point_labels);
      pred.emplace_back(flat.begin() + row, flat.begin() + row + pc->point_count());
      row += static_cast<std::size_t>(pc->point_count());
    }
  }
  return segmentation_metrics(truth, pred, model.config().num_parts);
}

std::string MetricsReport::to_json() const {
  std::ostringstream os;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return std::string(buf);
  };
  os << "{\"task\":\""
     << (task == Task::kClassification ? "classification" : "segmentation")
     << "\",\"oa\":" << num(oa) << ",\"macc\":" << num(macc);
  if (task == Task::kSegmentation) {
    os << ",\"cat_miou\":" << num(cat_miou) << ",\"inst_miou\":" << num(inst_miou);
    os << ",\"per_class_iou\":[";
    for (std::size_t i = 0; i < per_class_iou.size(); ++i) {
      os << (i ? "," : "") << num(per_class_iou[i]);
    }
    os << ']';
  }
  os << '}';
  return os.str();
}

}  // namespace pct3d
