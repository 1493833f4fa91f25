#pragma once

// Brute-force reference implementations. These stay deliberately independent
// of the library kernels they check: plain loops, no Eigen products, no tape.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "pct3d/common.hpp"

namespace pct3d::oracle {

inline double sqdist(const PointMatrix& a, int i, const PointMatrix& b, int j) {
  double s = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double d = a(i, c) - b(j, c);
    s += d * d;
  }
  return s;
}

// Greedy farthest-first selection, recomputing every distance from scratch
// at each step.
inline std::vector<int> fps(const PointMatrix& pts, int m) {
  const int n = static_cast<int>(pts.rows());
  double cx = 0, cy = 0, cz = 0;
  for (int i = 0; i < n; ++i) {
    cx += pts(i, 0);
    cy += pts(i, 1);
    cz += pts(i, 2);
  }
  cx /= n;
  cy /= n;
  cz /= n;
  int seed = 0;
  double best = -1.0;
  for (int i = 0; i < n; ++i) {
    const double dx = pts(i, 0) - cx, dy = pts(i, 1) - cy, dz = pts(i, 2) - cz;
    const double d2 = dx * dx + dy * dy + dz * dz;
    if (d2 > best) {
      best = d2;
      seed = i;
    }
  }
  std::vector<int> sel{seed};
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  taken[seed] = 1;
  while (static_cast<int>(sel.size()) < m) {
    int arg = -1;
    double far = -1.0;
    for (int i = 0; i < n; ++i) {
      if (taken[i]) continue;
      double dmin = std::numeric_limits<double>::infinity();
      for (int j : sel) dmin = std::min(dmin, sqdist(pts, i, pts, j));
      if (dmin > far) {
        far = dmin;
        arg = i;
      }
    }
    sel.push_back(arg);
    taken[arg] = 1;
  }
  return sel;
}

// Exhaustive sort of all reference points by (distance, index).
inline std::vector<int> knn_row(const PointMatrix& ref,
                                const PointMatrix& query, int q, int k) {
  const int n = static_cast<int>(ref.rows());
  std::vector<double> d(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) d[i] = sqdist(ref, i, query, q);
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (d[a] != d[b]) return d[a] < d[b];
    return a < b;
  });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

// Point-patch attention pooling: given the attention map M (s x s) and the
// neighborhood sets N (s x k x d, row-major), computes per point the
// attended patch sum_j M[i][j] * N_j and max-pools it over k.
inline std::vector<double> ppsa_pool(const std::vector<double>& m,
                                     const std::vector<double>& nset, int s,
                                     int k, int d) {
  std::vector<double> out(static_cast<std::size_t>(s) * d,
                          -std::numeric_limits<double>::infinity());
  for (int i = 0; i < s; ++i) {
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < d; ++c) {
        double acc = 0.0;
        for (int j = 0; j < s; ++j) {
          acc += m[static_cast<std::size_t>(i) * s + j] *
                 nset[(static_cast<std::size_t>(j) * k + r) * d + c];
        }
        double& slot = out[static_cast<std::size_t>(i) * d + c];
        slot = std::max(slot, acc);
      }
    }
  }
  return out;
}

// Full channel attention pipeline from reduced K/Q (m x d), features
// (s x d) and the value weights (d x d).
inline std::vector<double> csa(const std::vector<double>& k_red,
                               const std::vector<double>& q_red, int m,
                               const std::vector<double>& fl, int s,
                               const std::vector<double>& wv, int d) {
  // M_C = K^T Q
  std::vector<double> mc(static_cast<std::size_t>(d) * d, 0.0);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      for (int r = 0; r < m; ++r)
        mc[static_cast<std::size_t>(a) * d + b] +=
            k_red[static_cast<std::size_t>(r) * d + a] *
            q_red[static_cast<std::size_t>(r) * d + b];
  // D = rowmax - M_C, column softmax
  std::vector<double> dmat(static_cast<std::size_t>(d) * d);
  for (int a = 0; a < d; ++a) {
    double rmax = mc[static_cast<std::size_t>(a) * d];
    for (int b = 1; b < d; ++b)
      rmax = std::max(rmax, mc[static_cast<std::size_t>(a) * d + b]);
    for (int b = 0; b < d; ++b)
      dmat[static_cast<std::size_t>(a) * d + b] =
          rmax - mc[static_cast<std::size_t>(a) * d + b];
  }
  std::vector<double> ac(static_cast<std::size_t>(d) * d);
  for (int b = 0; b < d; ++b) {
    double cmax = dmat[b];
    for (int a = 1; a < d; ++a)
      cmax = std::max(cmax, dmat[static_cast<std::size_t>(a) * d + b]);
    double denom = 0.0;
    for (int a = 0; a < d; ++a)
      denom += std::exp(dmat[static_cast<std::size_t>(a) * d + b] - cmax);
    for (int a = 0; a < d; ++a)
      ac[static_cast<std::size_t>(a) * d + b] =
          std::exp(dmat[static_cast<std::size_t>(a) * d + b] - cmax) / denom;
  }
  // V = F_L W_V, F_C = V A_C
  std::vector<double> v(static_cast<std::size_t>(s) * d, 0.0);
  for (int i = 0; i < s; ++i)
    for (int b = 0; b < d; ++b)
      for (int a = 0; a < d; ++a)
        v[static_cast<std::size_t>(i) * d + b] +=
            fl[static_cast<std::size_t>(i) * d + a] *
            wv[static_cast<std::size_t>(a) * d + b];
  std::vector<double> fc(static_cast<std::size_t>(s) * d, 0.0);
  for (int i = 0; i < s; ++i)
    for (int b = 0; b < d; ++b)
      for (int a = 0; a < d; ++a)
        fc[static_cast<std::size_t>(i) * d + b] +=
            v[static_cast<std::size_t>(i) * d + a] *
            ac[static_cast<std::size_t>(a) * d + b];
  return fc;
}

}  // namespace pct3d::oracle
