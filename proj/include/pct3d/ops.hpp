#pragma once

#include <vector>

#include "pct3d/common.hpp"
#include "pct3d/tensor.hpp"

namespace pct3d {

// Per-channel running statistics for batch normalization.
struct BnStats {
  explicit BnStats(int channels)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = 1e-5;
  double momentum = 0.1;
};

// All operations are free functions over value tensors. Mixing tracked and
// constant operands is allowed; gradients only flow into tracked inputs.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x (m x n) plus a length-n bias row.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double c);
// Row-wise scaling by a constant weight vector (length = extent 0).
Tensor scale_rows(const Tensor& x, std::vector<double> weights);

Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);
// Max along `axis`; the axis is kept with extent 1. Gradient routes to the
// argmax position, ties to the lowest index.
Tensor max_reduce(const Tensor& x, int axis);

Tensor concat(const std::vector<Tensor>& parts, int axis);
// Gathers slices along axis 0. Backward scatter-adds.
Tensor gather_rows(const Tensor& x, std::vector<int> idx);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum_all(const Tensor& x);

// Inverted dropout; call only in train mode.
Tensor dropout(const Tensor& x, double p, RandomStream& rng);

// x is (rows x channels); statistics are per channel over all rows. Train
// mode uses batch statistics and updates the running ones, eval mode applies
// the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BnStats& stats, RunMode mode);

// Mean over rows of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace pct3d
