#pragma once

#include <cstdint>
#include <vector>

#include "calming/calming_core.hpp"
#include "calming/rng.hpp"

namespace calming {

enum class Metric { euclidean, D, D_G };

struct DeltaOptions {
  int n_points = 64;
  int n_dirs = 256;
  int hill_steps = 20;
  std::uint64_t seed = 12345;
};

// m-th derivative (m = 3, 4) of t -> (lambda/2) ||g + t beta - A(f + t alpha)||^2 at t = 0.
inline double structural_derivative(const ExtendedPoint& v, const Vec& u, int m, double lambda,
                                    const ForwardModel& model) {
  const auto p = model.dim_in();
  const Vec alpha = u.head(p), beta = u.tail(u.size() - p);
  const Vec resid = v.g - model.apply(v.f);
  const Vec slope = beta - model.dir_deriv(v.f, alpha, 1);
  const Vec d2 = model.dir_deriv(v.f, alpha, 2);
  const Vec d3 = model.dir_deriv(v.f, alpha, 3);
  double raw;
  if (m == 3) {
    raw = -6 * slope.dot(d2) - 2 * resid.dot(d3);
  } else if (m == 4) {
    const Vec d4 = model.dir_deriv(v.f, alpha, 4);
    raw = 6 * d2.squaredNorm() - 8 * slope.dot(d3) - 2 * resid.dot(d4);
  } else {
    throw InvalidArgument("structural_derivative: m must be 3 or 4");
  }
  return 0.5 * lambda * raw;
}

// Inverse metric matrix mapping the unit ball onto {u : ||M u|| <= 1}.
inline Mat metric_inverse(const ExtendedPoint& center, double sigma, const PriorSpec& prior,
                          const ForwardModel& model, Metric metric) {
  const auto d = model.dim_in() + model.dim_out();
  if (metric == Metric::euclidean) return Mat::Identity(d, d);
  const bool pen = metric == Metric::D_G;
  return spd_inv_sqrt(hessian_blocks(center, sigma, prior, model, pen).assembled(), "metric_inverse");
}

// Monte Carlo lower estimate of sup |d^m_u (lambda/2)||g - A(f)||^2| over points in the metric ball
// of radius r around `center` and directions on the metric sphere of radius r. Directions are
// processed in blocks of 64; each block's best pair is refined by hill climbing, so the result is
// non-decreasing in n_dirs (for multiples of 64) under a fixed seed.
inline double delta_m_estimate(const ExtendedPoint& center, double r, int m, double sigma, const PriorSpec& prior,
                               const ForwardModel& model, Metric metric, const DeltaOptions& opt = {}) {
  if (!(r > 0.0)) throw InvalidArgument("delta_m_estimate: r must be positive");
  if (m != 3 && m != 4) throw InvalidArgument("delta_m_estimate: m must be 3 or 4");
  if (model.is_linear()) return 0.0;
  const auto p = model.dim_in(), q = model.dim_out(), d = p + q;
  const Mat Minv = metric_inverse(center, sigma, prior, model, metric);
  const Vec c = center.stacked();

  std::vector<ExtendedPoint> pts;
  pts.push_back(center);
  for (int i = 1; i < opt.n_points; ++i) {
    Rng rng(opt.seed, 1, static_cast<std::uint64_t>(i));
    pts.push_back(ExtendedPoint::split(c + Minv * (r * rng.ball(d)), p));
  }
  std::vector<Vec> dirs;  // unit-sphere coordinates
  for (int j = 0; j < opt.n_dirs; ++j) {
    Rng rng(opt.seed, 2, static_cast<std::uint64_t>(j));
    dirs.push_back(rng.sphere(d));
  }
  auto eval = [&](const ExtendedPoint& v, const Vec& w) {
    return std::abs(structural_derivative(v, Minv * (r * w), m, prior.lambda, model));
  };

  double best = 0;
  constexpr int kBlock = 64;
  for (int b0 = 0; b0 < opt.n_dirs; b0 += kBlock) {
    double bb = -1;
    std::size_t bi = 0;
    Vec bw;
    for (int j = b0; j < std::min(opt.n_dirs, b0 + kBlock); ++j)
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double val = eval(pts[i], dirs[j]);
        if (val > bb) {
          bb = val;
          bi = i;
          bw = dirs[j];
        }
      }
    Rng rng(opt.seed, 3, static_cast<std::uint64_t>(b0));
    double step = 0.3;
    for (int s = 0; s < opt.hill_steps; ++s) {
      Vec cand = bw + step * rng.normal_vec(d);
      cand.normalize();
      const double val = eval(pts[bi], cand);
      if (val > bb) {
        bb = val;
        bw = cand;
      } else {
        step *= 0.5;
      }
    }
    best = std::max(best, bb);
  }
  return best;
}

}  // namespace calming
