#include "pct3d/tensor.hpp"

#include <cmath>
#include <sstream>

namespace pct3d {

std::int64_t shape_size(const Shape& shape) {
  std::int64_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void ensure_finite(const double* data, std::int64_t n, const char* op_name) {
  for (std::int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(data[i])) {
      throw NumericError(std::string(op_name) + " produced a non-finite value");
    }
  }
}

int Tensor::extent(int axis) const {
  if (axis < 0 || axis >= rank()) throw BoundsError("axis out of range");
  return shape_[axis];
}

double Tensor::scalar_value() const {
  if (size() != 1) throw ContractError("tensor is not a scalar");
  return (*data_)[0];
}

Tensor Tensor::zeros(Shape shape) {
  const std::int64_t n = shape_size(shape);
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(n, 0.0);
  return t;
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (auto& v : *t.data_) v = value;
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  if (shape_size(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("data length does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(std::move(data));
  return t;
}

Tensor Tensor::scalar_const(double value) {
  return from_data({1}, {value});
}

Tensor Tensor::constant_view(Shape shape,
                             std::shared_ptr<std::vector<double>> data) {
  if (shape_size(shape) != static_cast<std::int64_t>(data->size())) {
    throw ShapeError("storage length does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != size()) {
    throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                     " changes element count");
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tape::leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  Tensor t = Tensor::from_data(std::move(shape), std::move(data));
  t.tape_ = this;
  t.node_ = new_node(t.size(), requires_grad);
  return t;
}

int Tape::new_node(std::int64_t size, bool needs_grad) {
  Node n;
  n.size = size;
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::set_backward(int node, std::function<void(Tape&)> fn) {
  nodes_[node].backward = std::move(fn);
}

Tensor Tape::attach(Shape shape, std::shared_ptr<std::vector<double>> data,
                    int node) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  t.tape_ = this;
  t.node_ = node;
  return t;
}

const std::vector<double>* Tape::grad_read(int node) const {
  const Node& n = nodes_[node];
  return n.grad.empty() ? nullptr : &n.grad;
}

double* Tape::grad_accum(int node, std::int64_t size) {
  if (node < 0) return nullptr;
  Node& n = nodes_[node];
  if (!n.needs_grad) return nullptr;
  if (n.grad.empty()) n.grad.assign(static_cast<std::size_t>(size), 0.0);
  return n.grad.data();
}

void Tape::backward(const Tensor& loss) {
  if (!loss.on_tape() || loss.tape() != this) {
    throw ContractError("loss is not on this tape");
  }
  if (loss.size() != 1) throw ContractError("loss must be a scalar");
  grad_accum(loss.node(), 1);
  nodes_[loss.node()].grad[0] = 1.0;
  for (int i = loss.node(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this);
  }
  for (auto& [param, node] : params_) {
    const std::vector<double>* g = grad_read(node);
    if (!g) continue;
    std::vector<double>& acc = param->grad();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += (*g)[i];
  }
}

void Tape::register_parameter(Parameter* p, int node) {
  params_.emplace_back(p, node);
}

Parameter::Parameter(Shape shape)
    : shape_(std::move(shape)),
      values_(std::make_shared<std::vector<double>>(shape_size(shape_), 0.0)),
      grad_(values_->size(), 0.0),
      velocity_(values_->size(), 0.0) {}

void Parameter::zero_grad() {
  std::fill(grad_.begin(), grad_.end(), 0.0);
}

Tensor Parameter::use(Tape* tape) {
  if (!tape) return Tensor::constant_view(shape_, values_);
  Tensor t = tape->leaf(shape_, *values_, true);
  tape->register_parameter(this, t.node());
  return t;
}

}  // namespace pct3d
