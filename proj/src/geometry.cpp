#include "pct3d/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pct3d/ops.hpp"

namespace pct3d {

SampleResult farthest_point_sample(PointsRef points, int m) {
  const int n = static_cast<int>(points.rows());
  if (m < 1 || m > n) {
    throw ValueError("farthest_point_sample: m=" + std::to_string(m) +
                     " outside [1," + std::to_string(n) + "]");
  }
  if (!points.allFinite()) {
    throw ValueError("farthest_point_sample: non-finite coordinates");
  }

  const Eigen::RowVector3d centroid = points.colwise().mean();
  int seed = 0;
  double best = -1.0;
  for (int i = 0; i < n; ++i) {
    const double d2 = (points.row(i) - centroid).squaredNorm();
    if (d2 > best) {
      best = d2;
      seed = i;
    }
  }

  SampleResult out;
  out.indices.reserve(static_cast<std::size_t>(m));
  out.indices.push_back(seed);
  std::vector<char> selected(static_cast<std::size_t>(n), 0);
  selected[seed] = 1;
  std::vector<double> min_sq(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    min_sq[i] = (points.row(i) - points.row(seed)).squaredNorm();

  for (int picked = 1; picked < m; ++picked) {
    int next = -1;
    double far = -1.0;
    for (int i = 0; i < n; ++i) {
      if (selected[i]) continue;
      if (min_sq[i] > far) {
        far = min_sq[i];
        next = i;
      }
    }
    out.indices.push_back(next);
    selected[next] = 1;
    for (int i = 0; i < n; ++i) {
      const double d2 = (points.row(i) - points.row(next)).squaredNorm();
      if (d2 < min_sq[i]) min_sq[i] = d2;
    }
  }

  out.min_dists.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.min_dists[i] = std::sqrt(min_sq[i]);
  return out;
}

KnnResult knn(PointsRef query, PointsRef reference, int k) {
  const int s = static_cast<int>(query.rows());
  const int n = static_cast<int>(reference.rows());
  if (k < 1 || k > n) {
    throw ValueError("knn: k=" + std::to_string(k) + " outside [1," +
                     std::to_string(n) + "]");
  }
  KnnResult out;
  out.query_count = s;
  out.k = k;
  out.neighbor_idx.resize(static_cast<std::size_t>(s) * k);
  out.neighbor_sqdist.resize(static_cast<std::size_t>(s) * k);

  std::vector<double> d2(static_cast<std::size_t>(n));
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int q = 0; q < s; ++q) {
    for (int i = 0; i < n; ++i)
      d2[i] = (reference.row(i) - query.row(q)).squaredNorm();
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](int a, int b) {
                        if (d2[a] != d2[b]) return d2[a] < d2[b];
                        return a < b;
                      });
    for (int j = 0; j < k; ++j) {
      out.neighbor_idx[static_cast<std::size_t>(q) * k + j] = order[j];
      out.neighbor_sqdist[static_cast<std::size_t>(q) * k + j] = d2[order[j]];
    }
  }
  return out;
}

IdwWeights idw_weights(PointsRef target, PointsRef source) {
  if (source.rows() < 3) {
    throw ValueError("idw_weights: need at least 3 source points");
  }
  const KnnResult nn = knn(target, source, 3);
  const int t = static_cast<int>(target.rows());
  IdwWeights out;
  out.idx.resize(static_cast<std::size_t>(t));
  out.w.resize(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) {
    out.idx[i] = {nn.idx(i, 0), nn.idx(i, 1), nn.idx(i, 2)};
    const double d0 = std::sqrt(nn.sqdist(i, 0));
    if (d0 < 1e-10) {
      out.w[i] = {1.0, 0.0, 0.0};
      continue;
    }
    double inv[3], total = 0.0;
    for (int j = 0; j < 3; ++j) {
      inv[j] = 1.0 / nn.sqdist(i, j);
      total += inv[j];
    }
    out.w[i] = {inv[0] / total, inv[1] / total, inv[2] / total};
  }
  return out;
}

Tensor interpolate_idw(PointsRef target, PointsRef source,
                       const Tensor& source_feats) {
  if (source_feats.rank() != 2 || source_feats.extent(0) != source.rows()) {
    throw ShapeError("interpolate_idw: source_feats rows != source count");
  }
  const IdwWeights iw = idw_weights(target, source);
  const int t = static_cast<int>(target.rows());
  Tensor acc;
  for (int j = 0; j < 3; ++j) {
    std::vector<int> idx(static_cast<std::size_t>(t));
    std::vector<double> w(static_cast<std::size_t>(t));
    for (int i = 0; i < t; ++i) {
      idx[i] = iw.idx[i][j];
      w[i] = iw.w[i][j];
    }
    Tensor term = scale_rows(gather_rows(source_feats, std::move(idx)), std::move(w));
    acc = j == 0 ? term : add(acc, term);
  }
  return acc;
}

}  // namespace pct3d
