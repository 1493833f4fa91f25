#pragma once

#include <vector>

#include "pct3d/ops.hpp"
#include "pct3d/tensor.hpp"

namespace pct3d::testutil {

inline std::vector<double> rand_vec(RandomStream& rng, std::int64_t n,
                                    double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline Tensor rand_const(RandomStream& rng, Shape shape, double lo = -1.0,
                         double hi = 1.0) {
  const std::int64_t n = shape_size(shape);
  return Tensor::from_data(std::move(shape), rand_vec(rng, n, lo, hi));
}

inline void fill_param(Parameter& p, RandomStream& rng, double lo = -1.0,
                       double hi = 1.0) {
  for (auto& v : p.values()) v = rng.uniform(lo, hi);
}

// Scalar probe sum(y * probe): turns a tensor-valued program into the scalar
// loss finite differences need.
inline Tensor probe_loss(const Tensor& y, const Tensor& probe) {
  return sum_all(mul(y, probe));
}

inline PointMatrix rand_points(RandomStream& rng, int n, double lo = -1.0,
                               double hi = 1.0) {
  PointMatrix pts(n, 3);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) pts(i, c) = rng.uniform(lo, hi);
  return pts;
}

}  // namespace pct3d::testutil
