#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "pct3d/common.hpp"

namespace pct3d {

using Shape = std::vector<int>;

std::int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;
class Parameter;

// Dense row-major array of 64-bit reals, optionally tracked on a Tape.
// Values are treated as immutable once an operation has produced them;
// mutable_data() exists for leaf construction only.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor scalar_const(double value);
  // Untracked constant sharing existing storage (no copy).
  static Tensor constant_view(Shape shape,
                              std::shared_ptr<std::vector<double>> data);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const;
  std::int64_t size() const {
    return data_ ? static_cast<std::int64_t>(data_->size()) : 0;
  }
  bool empty() const { return !data_; }

  const double* data() const { return data_->data(); }
  double* mutable_data() { return data_->data(); }
  std::shared_ptr<const std::vector<double>> storage() const { return data_; }

  double at(std::int64_t flat) const { return (*data_)[flat]; }
  double at2(int r, int c) const { return (*data_)[(std::int64_t)r * shape_[1] + c]; }
  double scalar_value() const;

  bool on_tape() const { return node_ >= 0; }
  int node() const { return node_; }
  Tape* tape() const { return tape_; }

  // Same storage and tape node under a new shape (sizes must agree).
  Tensor reshaped(Shape shape) const;

 private:
  friend class Tape;
  std::shared_ptr<std::vector<double>> data_;
  Shape shape_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Reverse-mode tape. Nodes are appended in execution order, which is already
// a topological order, so backward() is a single reverse sweep from the loss
// node. Gradient buffers are allocated lazily; a node whose buffer was never
// touched did not contribute to the loss.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(Shape shape, std::vector<double> data, bool requires_grad);

  // Op plumbing -------------------------------------------------------------
  int new_node(std::int64_t size, bool needs_grad);
  void set_backward(int node, std::function<void(Tape&)> fn);
  Tensor attach(Shape shape, std::shared_ptr<std::vector<double>> data,
                int node);
  bool node_needs_grad(int node) const { return nodes_[node].needs_grad; }

  // Gradient of `node` flowing in from above; nullptr when the node was not
  // reached by the sweep.
  const std::vector<double>* grad_read(int node) const;
  // Accumulation buffer for an input node; nullptr when no gradient is
  // wanted there (constants or untracked subgraphs).
  double* grad_accum(int node, std::int64_t size);

  // Runs the reverse sweep and adds leaf gradients into registered
  // parameters.
  void backward(const Tensor& loss);

  void register_parameter(Parameter* p, int node);
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::function<void(Tape&)> backward;
    std::vector<double> grad;
    std::int64_t size = 0;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<Parameter*, int>> params_;
};

// A learnable value: master weights plus persistent gradient and momentum
// buffers. Mutated only between forward/backward phases.
class Parameter {
 public:
  explicit Parameter(Shape shape);

  const Shape& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(values_->size()); }

  std::vector<double>& values() { return *values_; }
  const std::vector<double>& values() const { return *values_; }
  std::vector<double>& grad() { return grad_; }
  const std::vector<double>& grad() const { return grad_; }
  std::vector<double>& velocity() { return velocity_; }

  void zero_grad();

  // Places the parameter on a tape as a tracked leaf; with tape == nullptr
  // returns an untracked constant view (shared storage, no copy).
  Tensor use(Tape* tape);

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> values_;
  std::vector<double> grad_;
  std::vector<double> velocity_;
};

void ensure_finite(const double* data, std::int64_t n, const char* op_name);

}  // namespace pct3d
