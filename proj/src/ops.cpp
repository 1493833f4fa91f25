#include "pct3d/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace pct3d {

namespace {

using ConstStorage = std::shared_ptr<const std::vector<double>>;
using MatMap = Eigen::Map<const RowMatrix>;
using MutMatMap = Eigen::Map<RowMatrix>;

// Shared plumbing for building an op result: finds the common tape, decides
// whether gradients are needed, and attaches the backward closure.
struct OpBuilder {
  Tape* tape = nullptr;
  bool needs = false;

  void scan(const Tensor& t) {
    if (!t.on_tape()) return;
    if (tape && tape != t.tape()) {
      throw ContractError("operands live on different tapes");
    }
    tape = t.tape();
    if (tape->node_needs_grad(t.node())) needs = true;
  }

  template <class MakeBackward>
  Tensor finish(Shape shape, std::vector<double> data, const char* name,
                MakeBackward&& make_backward) {
    ensure_finite(data.data(), static_cast<std::int64_t>(data.size()), name);
    auto storage = std::make_shared<std::vector<double>>(std::move(data));
    if (!tape) return Tensor::constant_view(std::move(shape), storage);
    const int node = tape->new_node(static_cast<std::int64_t>(storage->size()), needs);
    if (needs) tape->set_backward(node, make_backward(node));
    return tape->attach(std::move(shape), storage, node);
  }
};

void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

// (outer, n, inner) decomposition around `axis`.
struct AxisSplit {
  std::int64_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis, const char* op) {
  if (axis < 0 || axis >= static_cast<int>(shape.size())) {
    throw BoundsError(std::string(op) + ": axis out of range");
  }
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (b.extent(0) != k) {
    throw ShapeError("matmul: inner extents disagree, " + shape_str(a.shape()) +
                     " by " + shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  {
    MatMap A(a.data(), m, k), B(b.data(), k, n);
    MutMatMap C(out.data(), m, n);
    C.noalias() = A * B;
  }
  OpBuilder ob;
  ob.scan(a);
  ob.scan(b);
  ConstStorage sa = a.storage(), sb = b.storage();
  const int na = a.node(), nb = b.node();
  return ob.finish({m, n}, std::move(out), "matmul", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      MatMap G(g->data(), m, n);
      if (double* ga = t.grad_accum(na, static_cast<std::int64_t>(m) * k)) {
        MutMatMap(ga, m, k).noalias() += G * MatMap(sb->data(), k, n).transpose();
      }
      if (double* gb = t.grad_accum(nb, static_cast<std::int64_t>(k) * n)) {
        MutMatMap(gb, k, n).noalias() += MatMap(sa->data(), m, k).transpose() * G;
      }
    };
  });
}

Tensor transpose2d(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const int m = x.extent(0), n = x.extent(1);
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  MutMatMap(out.data(), n, m) = MatMap(x.data(), m, n).transpose();
  OpBuilder ob;
  ob.scan(x);
  const int nx = x.node();
  return ob.finish({n, m}, std::move(out), "transpose", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      if (double* gx = t.grad_accum(nx, static_cast<std::int64_t>(m) * n)) {
        MutMatMap(gx, m, n).noalias() += MatMap(g->data(), n, m).transpose();
      }
    };
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = a.at(i) + b.at(i);
  OpBuilder ob;
  ob.scan(a);
  ob.scan(b);
  const int na = a.node(), nb = b.node();
  return ob.finish(a.shape(), std::move(out), "add", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      if (double* ga = t.grad_accum(na, n))
        for (std::int64_t i = 0; i < n; ++i) ga[i] += (*g)[i];
      if (double* gb = t.grad_accum(nb, n))
        for (std::int64_t i = 0; i < n; ++i) gb[i] += (*g)[i];
    };
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = a.at(i) - b.at(i);
  OpBuilder ob;
  ob.scan(a);
  ob.scan(b);
  const int na = a.node(), nb = b.node();
  return ob.finish(a.shape(), std::move(out), "sub", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      if (double* ga = t.grad_accum(na, n))
        for (std::int64_t i = 0; i < n; ++i) ga[i] += (*g)[i];
      if (double* gb = t.grad_accum(nb, n))
        for (std::int64_t i = 0; i < n; ++i) gb[i] -= (*g)[i];
    };
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const std::int64_t n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = a.at(i) * b.at(i);
  OpBuilder ob;
  ob.scan(a);
  ob.scan(b);
  ConstStorage sa = a.storage(), sb = b.storage();
  const int na = a.node(), nb = b.node();
  return ob.finish(a.shape(), std::move(out), "mul", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      if (double* ga = t.grad_accum(na, n))
        for (std::int64_t i = 0; i < n; ++i) ga[i] += (*g)[i] * (*sb)[i];
      if (double* gb = t.grad_accum(nb, n))
        for (std::int64_t i = 0; i < n; ++i) gb[i] += (*g)[i] * (*sa)[i];
    };
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_bias");
  const int m = x.extent(0), n = x.extent(1);
  if (bias.size() != n) {
    throw ShapeError("add_bias: bias length " + std::to_string(bias.size()) +
                     " != column count " + std::to_string(n));
  }
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c)
      out[static_cast<std::size_t>(r) * n + c] = x.at(static_cast<std::int64_t>(r) * n + c) + bias.at(c);
  OpBuilder ob;
  ob.scan(x);
  ob.scan(bias);
  const int nx = x.node(), nb = bias.node();
  return ob.finish({m, n}, std::move(out), "add_bias", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      if (double* gx = t.grad_accum(nx, static_cast<std::int64_t>(m) * n)) {
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(m) * n; ++i) gx[i] += (*g)[i];
      }
      if (double* gb = t.grad_accum(nb, n)) {
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < n; ++c) gb[c] += (*g)[static_cast<std::size_t>(r) * n + c];
      }
    };
  });
}

Tensor scale(const Tensor& x, double c) {
  const std::int64_t n = x.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = x.at(i) * c;
  OpBuilder ob;
  ob.scan(x);
  const int nx = x.node();
  return ob.finish(x.shape(), std::move(out), "scale", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      if (double* gx = t.grad_accum(nx, n))
        for (std::int64_t i = 0; i < n; ++i) gx[i] += (*g)[i] * c;
    };
  });
}

Tensor scale_rows(const Tensor& x, std::vector<double> weights) {
  require_rank(x, 2, "scale_rows");
  const int m = x.extent(0), n = x.extent(1);
  if (static_cast<int>(weights.size()) != m) {
    throw ShapeError("scale_rows: weight count != row count");
  }
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c)
      out[static_cast<std::size_t>(r) * n + c] = weights[r] * x.at(static_cast<std::int64_t>(r) * n + c);
  OpBuilder ob;
  ob.scan(x);
  const int nx = x.node();
  auto w = std::make_shared<std::vector<double>>(std::move(weights));
  return ob.finish({m, n}, std::move(out), "scale_rows", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      if (double* gx = t.grad_accum(nx, static_cast<std::int64_t>(m) * n)) {
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < n; ++c)
            gx[static_cast<std::size_t>(r) * n + c] += (*w)[r] * (*g)[static_cast<std::size_t>(r) * n + c];
      }
    };
  });
}

Tensor relu(const Tensor& x) {
  const std::int64_t n = x.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = x.at(i) > 0.0 ? x.at(i) : 0.0;
  OpBuilder ob;
  ob.scan(x);
  ConstStorage sx = x.storage();
  const int nx = x.node();
  return ob.finish(x.shape(), std::move(out), "relu", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      if (double* gx = t.grad_accum(nx, n)) {
        for (std::int64_t i = 0; i < n; ++i)
          if ((*sx)[i] > 0.0) gx[i] += (*g)[i];
      }
    };
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "softmax");
  const std::int64_t n = x.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t i = 0; i < s.inner; ++i) {
      const std::int64_t base = o * s.n * s.inner + i;
      double mx = x.at(base);
      for (std::int64_t a = 1; a < s.n; ++a)
        mx = std::max(mx, x.at(base + a * s.inner));
      double denom = 0.0;
      for (std::int64_t a = 0; a < s.n; ++a)
        denom += std::exp(x.at(base + a * s.inner) - mx);
      for (std::int64_t a = 0; a < s.n; ++a)
        out[base + a * s.inner] = std::exp(x.at(base + a * s.inner) - mx) / denom;
    }
  }
  OpBuilder ob;
  ob.scan(x);
  const int nx = x.node();
  auto sy = std::make_shared<std::vector<double>>(out);
  return ob.finish(x.shape(), std::move(out), "softmax", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      double* gx = t.grad_accum(nx, n);
      if (!gx) return;
      for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t i = 0; i < s.inner; ++i) {
          const std::int64_t base = o * s.n * s.inner + i;
          double dot = 0.0;
          for (std::int64_t a = 0; a < s.n; ++a) {
            const std::int64_t p = base + a * s.inner;
            dot += (*g)[p] * (*sy)[p];
          }
          for (std::int64_t a = 0; a < s.n; ++a) {
            const std::int64_t p = base + a * s.inner;
            gx[p] += (*sy)[p] * ((*g)[p] - dot);
          }
        }
      }
    };
  });
}

Tensor max_reduce(const Tensor& x, int axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "max_reduce");
  Shape out_shape = x.shape();
  out_shape[axis] = 1;
  std::vector<double> out(static_cast<std::size_t>(s.outer * s.inner));
  auto argmax = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(s.outer * s.inner));
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t i = 0; i < s.inner; ++i) {
      const std::int64_t base = o * s.n * s.inner + i;
      double best = x.at(base);
      std::int64_t best_a = 0;
      for (std::int64_t a = 1; a < s.n; ++a) {
        const double v = x.at(base + a * s.inner);
        if (v > best) {  // strict: ties keep the lowest index
          best = v;
          best_a = a;
        }
      }
      out[o * s.inner + i] = best;
      (*argmax)[o * s.inner + i] = base + best_a * s.inner;
    }
  }
  OpBuilder ob;
  ob.scan(x);
  const int nx = x.node();
  const std::int64_t xn = x.size();
  return ob.finish(std::move(out_shape), std::move(out), "max_reduce", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      if (double* gx = t.grad_accum(nx, xn)) {
        for (std::size_t i = 0; i < argmax->size(); ++i)
          gx[(*argmax)[i]] += (*g)[i];
      }
    };
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ValueError("concat: no parts");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank) throw BoundsError("concat: axis out of range");
  Shape out_shape = parts[0].shape();
  std::int64_t total_axis = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d != axis && p.shape()[d] != out_shape[d]) {
        throw ShapeError("concat: extent mismatch on axis " + std::to_string(d) +
                         ": " + shape_str(p.shape()) + " vs " + shape_str(out_shape));
      }
    }
    total_axis += p.shape()[axis];
  }
  out_shape[axis] = static_cast<int>(total_axis);

  const AxisSplit so = split_axis(out_shape, axis, "concat");
  std::vector<double> out(static_cast<std::size_t>(shape_size(out_shape)));
  std::vector<std::int64_t> offsets(parts.size());
  std::int64_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    offsets[p] = off;
    const std::int64_t pn = parts[p].shape()[axis];
    for (std::int64_t o = 0; o < so.outer; ++o) {
      const double* src = parts[p].data() + o * pn * so.inner;
      double* dst = out.data() + (o * so.n + off) * so.inner;
      std::copy(src, src + pn * so.inner, dst);
    }
    off += pn;
  }

  OpBuilder ob;
  for (const Tensor& p : parts) ob.scan(p);
  std::vector<int> in_nodes(parts.size());
  std::vector<std::int64_t> in_axis_n(parts.size()), in_sizes(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) {
    in_nodes[p] = parts[p].node();
    in_axis_n[p] = parts[p].shape()[axis];
    in_sizes[p] = parts[p].size();
  }
  return ob.finish(std::move(out_shape), std::move(out), "concat", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      for (std::size_t p = 0; p < in_nodes.size(); ++p) {
        double* gp = t.grad_accum(in_nodes[p], in_sizes[p]);
        if (!gp) continue;
        for (std::int64_t o = 0; o < so.outer; ++o) {
          const double* src = g->data() + (o * so.n + offsets[p]) * so.inner;
          double* dst = gp + o * in_axis_n[p] * so.inner;
          for (std::int64_t i = 0; i < in_axis_n[p] * so.inner; ++i) dst[i] += src[i];
        }
      }
    };
  });
}

Tensor gather_rows(const Tensor& x, std::vector<int> idx) {
  if (x.rank() < 1) throw ShapeError("gather_rows: rank-0 input");
  const int rows = x.extent(0);
  const std::int64_t row_len = x.size() / rows;
  for (int i : idx) {
    if (i < 0 || i >= rows) {
      throw BoundsError("gather_rows: index " + std::to_string(i) +
                        " out of range [0," + std::to_string(rows) + ")");
    }
  }
  Shape out_shape = x.shape();
  out_shape[0] = static_cast<int>(idx.size());
  std::vector<double> out(static_cast<std::size_t>(idx.size() * row_len));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const double* src = x.data() + static_cast<std::int64_t>(idx[r]) * row_len;
    std::copy(src, src + row_len, out.data() + r * row_len);
  }
  OpBuilder ob;
  ob.scan(x);
  const int nx = x.node();
  const std::int64_t xn = x.size();
  auto sidx = std::make_shared<std::vector<int>>(std::move(idx));
  return ob.finish(std::move(out_shape), std::move(out), "gather_rows", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      if (double* gx = t.grad_accum(nx, xn)) {
        for (std::size_t r = 0; r < sidx->size(); ++r) {
          double* dst = gx + static_cast<std::int64_t>((*sidx)[r]) * row_len;
          const double* src = g->data() + r * row_len;
          for (std::int64_t i = 0; i < row_len; ++i) dst[i] += src[i];
        }
      }
    };
  });
}

Tensor reshape(const Tensor& x, Shape shape) { return x.reshaped(std::move(shape)); }

Tensor sum_all(const Tensor& x) {
  const std::int64_t n = x.size();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) acc += x.at(i);
  OpBuilder ob;
  ob.scan(x);
  const int nx = x.node();
  return ob.finish({1}, {acc}, "sum_all", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      if (double* gx = t.grad_accum(nx, n))
        for (std::int64_t i = 0; i < n; ++i) gx[i] += (*g)[0];
    };
  });
}

Tensor dropout(const Tensor& x, double p, RandomStream& rng) {
  if (p < 0.0 || p >= 1.0) throw ValueError("dropout: p must be in [0,1)");
  const std::int64_t n = x.size();
  auto mask = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::int64_t i = 0; i < n; ++i)
    (*mask)[i] = rng.uniform() < p ? 0.0 : keep_scale;
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[i] = x.at(i) * (*mask)[i];
  OpBuilder ob;
  ob.scan(x);
  const int nx = x.node();
  return ob.finish(x.shape(), std::move(out), "dropout", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      if (double* gx = t.grad_accum(nx, n))
        for (std::int64_t i = 0; i < n; ++i) gx[i] += (*g)[i] * (*mask)[i];
    };
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BnStats& stats, RunMode mode) {
  require_rank(x, 2, "batch_norm");
  const int rows = x.extent(0), ch = x.extent(1);
  if (gamma.size() != ch || beta.size() != ch ||
      static_cast<int>(stats.running_mean.size()) != ch) {
    throw ShapeError("batch_norm: channel count mismatch");
  }
  std::vector<double> mean(ch, 0.0), var(ch, 0.0);
  if (mode == RunMode::kTrain) {
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < ch; ++c) mean[c] += x.at2(r, c);
    for (int c = 0; c < ch; ++c) mean[c] /= rows;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < ch; ++c) {
        const double d = x.at2(r, c) - mean[c];
        var[c] += d * d;
      }
    for (int c = 0; c < ch; ++c) var[c] /= rows;
    // Running update uses the unbiased variance, normalization the biased one.
    for (int c = 0; c < ch; ++c) {
      const double unbiased = rows > 1 ? var[c] * rows / (rows - 1) : var[c];
      stats.running_mean[c] =
          (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * mean[c];
      stats.running_var[c] =
          (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
    }
  } else {
    mean = stats.running_mean;
    var = stats.running_var;
  }
  auto inv_std = std::make_shared<std::vector<double>>(ch);
  for (int c = 0; c < ch; ++c) (*inv_std)[c] = 1.0 / std::sqrt(var[c] + stats.eps);
  auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows) * ch);
  std::vector<double> out(static_cast<std::size_t>(rows) * ch);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < ch; ++c) {
      const double h = (x.at2(r, c) - mean[c]) * (*inv_std)[c];
      (*xhat)[static_cast<std::size_t>(r) * ch + c] = h;
      out[static_cast<std::size_t>(r) * ch + c] = gamma.at(c) * h + beta.at(c);
    }
  }
  OpBuilder ob;
  ob.scan(x);
  ob.scan(gamma);
  ob.scan(beta);
  ConstStorage sgamma = gamma.storage();
  const int nx = x.node(), ng = gamma.node(), nb = beta.node();
  const bool batch_stats = mode == RunMode::kTrain;
  return ob.finish({rows, ch}, std::move(out), "batch_norm", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      if (double* gg = t.grad_accum(ng, ch)) {
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < ch; ++c)
            gg[c] += (*g)[static_cast<std::size_t>(r) * ch + c] *
                     (*xhat)[static_cast<std::size_t>(r) * ch + c];
      }
      if (double* gb = t.grad_accum(nb, ch)) {
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < ch; ++c) gb[c] += (*g)[static_cast<std::size_t>(r) * ch + c];
      }
      double* gx = t.grad_accum(nx, static_cast<std::int64_t>(rows) * ch);
      if (!gx) return;
      if (!batch_stats) {
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < ch; ++c)
            gx[static_cast<std::size_t>(r) * ch + c] +=
                (*g)[static_cast<std::size_t>(r) * ch + c] * (*sgamma)[c] * (*inv_std)[c];
        return;
      }
      // Batch statistics contribute through the mean and variance.
      std::vector<double> sum_gh(ch, 0.0), sum_ghh(ch, 0.0);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < ch; ++c) {
          const std::size_t p = static_cast<std::size_t>(r) * ch + c;
          const double gh = (*g)[p] * (*sgamma)[c];
          sum_gh[c] += gh;
          sum_ghh[c] += gh * (*xhat)[p];
        }
      }
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < ch; ++c) {
          const std::size_t p = static_cast<std::size_t>(r) * ch + c;
          const double gh = (*g)[p] * (*sgamma)[c];
          gx[p] += (*inv_std)[c] *
                   (gh - sum_gh[c] / rows - (*xhat)[p] * sum_ghh[c] / rows);
        }
      }
    };
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  require_rank(logits, 2, "cross_entropy");
  const int b = logits.extent(0), ncls = logits.extent(1);
  if (static_cast<int>(labels.size()) != b) {
    throw ShapeError("cross_entropy: label count != batch size");
  }
  for (int y : labels) {
    if (y < 0 || y >= ncls)
      throw ValueError("cross_entropy: label " + std::to_string(y) + " out of range");
  }
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(b) * ncls);
  double loss = 0.0;
  for (int r = 0; r < b; ++r) {
    double mx = logits.at2(r, 0);
    for (int c = 1; c < ncls; ++c) mx = std::max(mx, logits.at2(r, c));
    double denom = 0.0;
    for (int c = 0; c < ncls; ++c) denom += std::exp(logits.at2(r, c) - mx);
    const double lse = mx + std::log(denom);
    loss += lse - logits.at2(r, labels[r]);
    for (int c = 0; c < ncls; ++c)
      (*probs)[static_cast<std::size_t>(r) * ncls + c] = std::exp(logits.at2(r, c) - mx) / denom;
  }
  loss /= b;
  OpBuilder ob;
  ob.scan(logits);
  const int nl = logits.node();
  auto slabels = std::make_shared<std::vector<int>>(labels);
  return ob.finish({1}, {loss}, "cross_entropy", [=](int node) {
    return [=](Tape& t) {
      const std::vector<double>* g = t.grad_read(node);
      if (!g) return;
      if (double* gl = t.grad_accum(nl, static_cast<std::int64_t>(b) * ncls)) {
        const double gs = (*g)[0] / b;
        for (int r = 0; r < b; ++r) {
          for (int c = 0; c < ncls; ++c) {
            const std::size_t p = static_cast<std::size_t>(r) * ncls + c;
            gl[p] += gs * ((*probs)[p] - (c == (*slabels)[r] ? 1.0 : 0.0));
          }
        }
      }
    };
  });
}

}  // namespace pct3d
