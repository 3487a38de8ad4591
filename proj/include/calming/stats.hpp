#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "calming/linalg.hpp"
#include "calming/rng.hpp"

namespace calming {

inline Vec col_mean(const Mat& x) { return x.colwise().mean().transpose(); }

inline Mat sample_cov(const Mat& x) {
  const Mat c = x.rowwise() - x.colwise().mean();
  return (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

// Effective sample size of one series with Geyer's initial monotone sequence estimator.
inline double ess_1d(const Vec& x) {
  const Eigen::Index n = x.size();
  if (n < 4) return static_cast<double>(n);
  const Vec c = x.array() - x.mean();
  const double c0 = c.squaredNorm() / n;
  if (c0 <= 0) return static_cast<double>(n);
  auto acf = [&](Eigen::Index k) { return c.head(n - k).dot(c.tail(n - k)) / (n * c0); };
  double sum = 0, prev = std::numeric_limits<double>::infinity();
  const Eigen::Index max_lag = std::min<Eigen::Index>(n / 2 - 1, 20000);
  for (Eigen::Index m = 0; 2 * m + 1 <= max_lag; ++m) {
    double pair = (m == 0 ? 1.0 : acf(2 * m)) + acf(2 * m + 1);
    if (pair <= 0) break;
    pair = std::min(pair, prev);
    prev = pair;
    sum += pair;
  }
  const double tau = std::max(2 * sum - 1, 1e-8);
  return std::min(static_cast<double>(n) / tau, static_cast<double>(n) * std::log10(static_cast<double>(n)));
}

// Potential scale reduction per coordinate; chains given as equally long blocks.
inline Vec gelman_rubin(const std::vector<Mat>& chains) {
  const std::size_t m = chains.size();
  const Eigen::Index n = chains.front().rows(), d = chains.front().cols();
  Vec out(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Vec means(m), vars(m);
    for (std::size_t c = 0; c < m; ++c) {
      const Vec col = chains[c].col(j);
      means[c] = col.mean();
      vars[c] = (col.array() - means[c]).square().sum() / (n - 1);
    }
    const double W = vars.mean();
    const double B = n * (means.array() - means.mean()).square().sum() / (m - 1);
    const double var_plus = (n - 1.0) / n * W + B / n;
    out[j] = std::sqrt(var_plus / W);
  }
  return out;
}

inline double quantile(std::vector<double> v, double prob) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const double pos = prob * (v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

// Two-sample energy-distance permutation test; returns the p-value.
inline double energy_test_pvalue(const Mat& x, const Mat& y, int n_perm, std::uint64_t seed) {
  const Eigen::Index nx = x.rows(), ny = y.rows(), n = nx + ny;
  Mat z(n, x.cols());
  z << x, y;
  Mat dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) dist(i, j) = (z.row(i) - z.row(j)).norm();
  auto stat = [&](const std::vector<Eigen::Index>& idx) {
    double sxy = 0, sxx = 0, syy = 0;
    for (Eigen::Index i = 0; i < nx; ++i)
      for (Eigen::Index j = 0; j < ny; ++j) sxy += dist(idx[i], idx[nx + j]);
    for (Eigen::Index i = 0; i < nx; ++i)
      for (Eigen::Index j = 0; j < nx; ++j) sxx += dist(idx[i], idx[j]);
    for (Eigen::Index i = 0; i < ny; ++i)
      for (Eigen::Index j = 0; j < ny; ++j) syy += dist(idx[nx + i], idx[nx + j]);
    return 2 * sxy / (nx * ny) - sxx / (nx * nx) - syy / (ny * ny);
  };
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const double observed = stat(idx);
  Rng rng(seed);
  int exceed = 0;
  for (int k = 0; k < n_perm; ++k) {
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    if (stat(idx) >= observed) ++exceed;
  }
  return (exceed + 1.0) / (n_perm + 1.0);
}

}  // namespace calming
