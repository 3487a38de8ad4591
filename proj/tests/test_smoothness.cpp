#include <gtest/gtest.h>

#include <cmath>

#include "calming/rng.hpp"
#include "calming/smoothness.hpp"

using namespace calming;

namespace {
Vec v1(double a) { return Vec::Constant(1, a); }
Mat m1(double a) { return Mat::Constant(1, 1, a); }

PriorSpec prior_for(const ForwardModel& m, double lam) {
  const auto p = m.dim_in(), q = m.dim_out();
  return {Vec::Zero(p), Mat::Identity(p, p), Vec::Zero(q), Mat::Identity(q, q), lam};
}

// m-th derivative at 0 of t -> (lam/2)||g + t beta - A(f + t alpha)||^2 by central differences
double fd_structural(const ExtendedPoint& v, const Vec& u, int m, double lam, const ForwardModel& model) {
  const auto p = model.dim_in();
  auto phi = [&](double t) {
    const Vec r = v.g + t * u.tail(u.size() - p) - model.apply(v.f + t * u.head(p));
    return 0.5 * lam * r.squaredNorm();
  };
  const double h = 1e-2;
  if (m == 3) return (phi(2 * h) - 2 * phi(h) + 2 * phi(-h) - phi(-2 * h)) / (2 * h * h * h);
  return (phi(2 * h) - 4 * phi(h) + 6 * phi(0) - 4 * phi(-h) + phi(-2 * h)) / (h * h * h * h);
}
}  // namespace

TEST(Structural, LinearModelVanishes) {
  Mat A(2, 3);
  A << 1, 2, 0, -1, 0.5, 3;
  LinearModel model(A);
  const auto prior = prior_for(model, 1.0);
  Rng rng(1);
  const ExtendedPoint v{rng.normal_vec(3), rng.normal_vec(2)};
  const Vec u = rng.normal_vec(5);
  EXPECT_EQ(structural_derivative(v, u, 3, 1.0, model), 0.0);
  EXPECT_EQ(structural_derivative(v, u, 4, 1.0, model), 0.0);
  for (auto metric : {Metric::euclidean, Metric::D, Metric::D_G}) {
    EXPECT_EQ(delta_m_estimate(v, 0.5, 3, 1.0, prior, model, metric), 0.0);
    EXPECT_EQ(delta_m_estimate(v, 0.5, 4, 1.0, prior, model, metric), 0.0);
  }
}

TEST(Structural, ExpScalarExample) {
  ExpComposedModel model(m1(1));
  const ExtendedPoint v{v1(0), v1(1)};
  Vec u(2);
  u << 1, 0;
  EXPECT_NEAR(structural_derivative(v, u, 3, 2.0, model), 6.0, 1e-12);
  EXPECT_NEAR(fd_structural(v, u, 3, 2.0, model), 6.0, 1e-3);
  const auto prior = prior_for(model, 2.0);
  // the estimate is a sup over directions of radius r; at r = 1 the direction (1, 0) is admissible
  DeltaOptions opt;
  opt.n_points = 1;
  EXPECT_GE(delta_m_estimate(v, 1.0, 3, 1.0, prior, model, Metric::euclidean, opt), 6.0 * 0.95);
}

TEST(Structural, MatchesFiniteDifferences) {
  Mat K(3, 2);
  K << 0.5, 0.2, -0.3, 0.4, 0.1, 0.6;
  ExpComposedModel model(K);
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    const ExtendedPoint v{0.3 * rng.normal_vec(2), rng.normal_vec(3)};
    const Vec u = rng.normal_vec(5) * 0.5;
    for (int m : {3, 4}) {
      const double exact = structural_derivative(v, u, m, 1.5, model);
      EXPECT_NEAR(fd_structural(v, u, m, 1.5, model), exact, 1e-3 * (1 + std::abs(exact)));
    }
  }
}

TEST(DeltaEstimate, ScalesAsPower) {
  Mat K(2, 2);
  K << 0.5, 0.2, -0.3, 0.4;
  ExpComposedModel model(K);
  // sigma = 0.01 makes the D_G ball of radius 0.4 small in the Euclidean sense
  const double sigma = 0.01;
  const auto prior = prior_for(model, 1 / (sigma * sigma));
  const ExtendedPoint c{Vec::Zero(2), model.apply(Vec::Zero(2))};
  for (int m : {3, 4}) {
    const double a = delta_m_estimate(c, 0.1, m, sigma, prior, model, Metric::D_G);
    const double b = delta_m_estimate(c, 0.2, m, sigma, prior, model, Metric::D_G);
    const double d = delta_m_estimate(c, 0.4, m, sigma, prior, model, Metric::D_G);
    const double slope = (std::log(d) - std::log(a)) / std::log(4.0);
    EXPECT_NEAR(slope, m, 0.1) << "m=" << m;
    EXPECT_LE(a, b);
    EXPECT_LE(b, d);
  }
}

TEST(DeltaEstimate, MonotoneInDirections) {
  Mat K(2, 2);
  K << 0.5, 0.2, -0.3, 0.4;
  ExpComposedModel model(K);
  const auto prior = prior_for(model, 1.0);
  const ExtendedPoint c{Vec::Zero(2), Vec::Zero(2)};
  double prev = 0;
  for (int nd : {64, 128, 256, 512}) {
    DeltaOptions opt;
    opt.n_dirs = nd;
    const double v = delta_m_estimate(c, 0.5, 3, 1.0, prior, model, Metric::D, opt);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(DeltaEstimate, Deterministic) {
  ExpComposedModel model(Mat::Identity(2, 2));
  const auto prior = prior_for(model, 1.0);
  const ExtendedPoint c{Vec::Zero(2), Vec::Zero(2)};
  EXPECT_EQ(delta_m_estimate(c, 0.3, 4, 1.0, prior, model, Metric::D_G),
            delta_m_estimate(c, 0.3, 4, 1.0, prior, model, Metric::D_G));
  EXPECT_THROW(delta_m_estimate(c, 0.0, 3, 1.0, prior, model, Metric::D_G), InvalidArgument);
  EXPECT_THROW(delta_m_estimate(c, 0.3, 2, 1.0, prior, model, Metric::D_G), InvalidArgument);
}
