#pragma once

#include <array>
#include <vector>

#include "pct3d/common.hpp"
#include "pct3d/tensor.hpp"

namespace pct3d {

struct SampleResult {
  std::vector<int> indices;       // selection order, distinct
  std::vector<double> min_dists;  // per input point, distance to selected set
};

// Greedy farthest-first subset of m points. The seed is the point farthest
// from the centroid; every tie breaks toward the lowest index.
SampleResult farthest_point_sample(PointsRef points, int m);

struct KnnResult {
  int query_count = 0;
  int k = 0;
  std::vector<int> neighbor_idx;        // query_count * k, row-major
  std::vector<double> neighbor_sqdist;  // ascending within each row
  int idx(int q, int j) const { return neighbor_idx[static_cast<std::size_t>(q) * k + j]; }
  double sqdist(int q, int j) const {
    return neighbor_sqdist[static_cast<std::size_t>(q) * k + j];
  }
};

// Exact brute-force k nearest neighbors by squared Euclidean distance,
// distance ties broken by the lower reference index.
KnnResult knn(PointsRef query, PointsRef reference, int k);

struct IdwWeights {
  std::vector<std::array<int, 3>> idx;   // 3 nearest sources per target
  std::vector<std::array<double, 3>> w;  // convex weights (sum to 1)
};

// Inverse-squared-distance weights over the 3 nearest sources. A target
// sitting on a source (distance < 1e-10) copies that source exactly.
IdwWeights idw_weights(PointsRef target, PointsRef source);

// Differentiable 3-NN feature interpolation; weights are constants, the
// gradient flows into source_feats only.
Tensor interpolate_idw(PointsRef target, PointsRef source,
                       const Tensor& source_feats);

}  // namespace pct3d
