#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "calming/forward_model.hpp"
#include "calming/rng.hpp"

using namespace calming;

namespace {
Vec vec(std::initializer_list<double> v) {
  Vec out(v.size());
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}
Mat mat1(double a) { return Mat::Constant(1, 1, a); }
}  // namespace

TEST(Apply, IdentityLinear) {
  LinearModel m(Mat::Identity(2, 2));
  EXPECT_EQ(m.apply(vec({1, 2})), vec({1, 2}));
}

TEST(Apply, ExpAtZero) {
  ExpComposedModel m(mat1(1));
  EXPECT_DOUBLE_EQ(m.apply(vec({0}))[0], 1.0);
}

TEST(Apply, DiagonalPower) {
  DiagonalPowerModel m(3, 4, 1);
  const Vec y = m.apply(Vec::Ones(3));
  EXPECT_NEAR(y[0], 2.0, 1e-15);
  EXPECT_NEAR(y[1], 1.0, 1e-15);
  EXPECT_NEAR(y[2], 2.0 / 3.0, 1e-15);
  // a_j^2 non-increasing
  const Mat& A = m.matrix();
  for (int j = 1; j < 3; ++j) EXPECT_LE(A(j, j), A(j - 1, j - 1));
}

TEST(Apply, DimensionMismatchIsContractError) {
  LinearModel m(Mat::Identity(2, 2));
  EXPECT_THROW(m.apply(vec({1, 2, 3})), ContractError);
}

TEST(Apply, OverflowNamesIndex) {
  ExpComposedModel m(Mat::Identity(2, 2));
  try {
    m.apply(vec({0, 1000}));
    FAIL() << "expected overflow";
  } catch (const NumericOverflow& e) {
    EXPECT_EQ(e.index, 1);
  }
}

TEST(Apply, Deterministic) {
  Rng rng(3);
  ExpComposedModel m(Mat::Random(3, 4));
  const Vec f = rng.normal_vec(4);
  const Vec a = m.apply(f), b = m.apply(f);
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), sizeof(double) * a.size()));
}

TEST(Jacobian, LinearIsMatrix) {
  Mat M(2, 3);
  M << 1, 2, 3, 4, 5, 6;
  LinearModel m(M);
  EXPECT_EQ(m.jacobian(vec({7, 8, 9})), M);
}

TEST(Jacobian, ExpScalar) {
  ExpComposedModel m(mat1(2));
  EXPECT_DOUBLE_EQ(m.jacobian(vec({0}))(0, 0), 2.0);
}

TEST(Jacobian, ExpDiagAgainstFiniteDifferences) {
  ExpComposedModel m(Mat::Identity(2, 2));
  const Vec f = vec({std::log(2.0), 0});
  const Mat J = m.jacobian(f);
  Mat expect = Mat::Zero(2, 2);
  expect(0, 0) = 2;
  expect(1, 1) = 1;
  EXPECT_LT((J - expect).norm(), 1e-14);
  const double h = 1e-6;
  Mat fd(2, 2);
  for (int k = 0; k < 2; ++k) {
    Vec e = Vec::Zero(2);
    e[k] = h;
    fd.col(k) = (m.apply(f + e) - m.apply(f - e)) / (2 * h);
  }
  EXPECT_LT((fd - J).norm() / J.norm(), 1e-6);
}

TEST(DirDeriv, LinearHigherOrdersVanish) {
  LinearModel m(Mat::Random(3, 2));
  for (int order = 2; order <= 4; ++order) EXPECT_EQ(m.dir_deriv(vec({1, -1}), vec({0.3, 2}), order), Vec::Zero(3));
}

TEST(DirDeriv, ExpThirdOrder) {
  ExpComposedModel m(mat1(1));
  EXPECT_NEAR(m.dir_deriv(vec({0}), vec({2}), 3)[0], 8.0, 1e-14);
  EXPECT_LT(fd_check(m, vec({0}), vec({2}), 3, 1e-2), 1e-4);
}

TEST(DirDeriv, ExpFourthOrder) {
  ExpComposedModel m(mat1(1));
  EXPECT_NEAR(m.dir_deriv(vec({1}), vec({1}), 4)[0], std::exp(1.0), 1e-14);
  EXPECT_LT(fd_check(m, vec({1}), vec({1}), 4, 1e-2), 1e-3);
}

TEST(DirDeriv, OrderOutOfRange) {
  ExpComposedModel m(mat1(1));
  EXPECT_THROW(m.dir_deriv(vec({0}), vec({1}), 0), InvalidArgument);
  EXPECT_THROW(m.dir_deriv(vec({0}), vec({1}), 5), InvalidArgument);
}

TEST(DirDeriv, FirstOrderIsJacobianTimesDirection) {
  Rng rng(11);
  ExpComposedModel m(Mat::Random(4, 3));
  for (int i = 0; i < 20; ++i) {
    const Vec f = rng.normal_vec(3), a = rng.normal_vec(3);
    const Vec d = m.dir_deriv(f, a, 1), ja = m.jacobian(f) * a;
    EXPECT_LE((d - ja).norm(), 1e-12 * std::max(1.0, ja.norm()));
  }
}

TEST(FdCheck, Examples) {
  LinearModel lin(Mat::Random(3, 3));
  EXPECT_LT(fd_check(lin, Vec::Ones(3), vec({1, 0, -1}), 1, 1e-3), 1e-12);
  ExpComposedModel ex(Mat::Random(2, 3));
  EXPECT_LT(fd_check(ex, vec({0.1, -0.2, 0.3}), vec({1, 0.5, -1}), 2, 1e-4), 1e-6);
  EXPECT_LT(fd_check(ex, vec({0.1, -0.2, 0.3}), vec({1, 0.5, -1}), 4, 1e-2), 1e-3);
  EXPECT_THROW(fd_check(ex, Vec::Zero(3), Vec::Ones(3), 1, 0.0), InvalidArgument);
}

TEST(FdCheck, ToleranceTableOnRandomPairs) {
  const double tol[] = {1e-8, 1e-6, 1e-4, 1e-3};
  const double step[] = {1e-5, 1e-4, 1e-2, 1e-2};
  Rng rng(2024);
  ExpComposedModel ex(Mat::Random(3, 3));
  DiagonalPowerModel dp(3, 2, 0.5);
  LinearModel lin(Mat::Random(2, 3));
  const ForwardModel* models[] = {&ex, &dp, &lin};
  for (const ForwardModel* m : models)
    for (int i = 0; i < 50; ++i) {
      Vec f(3), a(3);
      for (int k = 0; k < 3; ++k) {
        f[k] = 2 * rng.uniform() - 1;
        a[k] = 2 * rng.uniform() - 1;
      }
      for (int order = 1; order <= 4; ++order)
        EXPECT_LE(fd_check(*m, f, a, order, step[order - 1]), tol[order - 1]) << m->kind() << " m=" << order;
    }
}

TEST(DirDeriv, LinearityAndHomogeneity) {
  Rng rng(5);
  ExpComposedModel m(Mat::Random(3, 3));
  for (int i = 0; i < 20; ++i) {
    const Vec f = rng.normal_vec(3) * 0.5, a = rng.normal_vec(3), b = rng.normal_vec(3);
    const double s = 0.7, t = -1.3;
    const Vec lhs = m.dir_deriv(f, s * a + t * b, 1);
    const Vec rhs = s * m.dir_deriv(f, a, 1) + t * m.dir_deriv(f, b, 1);
    EXPECT_LE((lhs - rhs).norm(), 1e-12 * std::max(1.0, rhs.norm()));
    const double c = 1.7;
    for (int order = 1; order <= 4; ++order) {
      const Vec x = m.dir_deriv(f, c * a, order), y = std::pow(c, order) * m.dir_deriv(f, a, order);
      EXPECT_LE((x - y).norm(), 1e-10 * y.norm());
    }
  }
}
