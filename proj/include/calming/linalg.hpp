#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "calming/errors.hpp"

namespace calming {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline void check_finite(const Vec& v, const std::string& where) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i])) throw NumericOverflow(where, static_cast<long>(i));
}

inline void check_finite(const Mat& m, const std::string& where) {
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (!std::isfinite(m.data()[i])) throw NumericOverflow(where, static_cast<long>(i));
}

inline void require_dim(Eigen::Index got, Eigen::Index want, const std::string& what) {
  if (got != want)
    throw ContractError(what + ": expected dimension " + std::to_string(want) + ", got " +
                        std::to_string(got));
}

inline double min_eig(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(s), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double max_eig(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(s), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

// Largest singular value.
inline double op_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

inline constexpr double kEigFloor = 1e-12;

// Eigendecomposition of a symmetric matrix that must be positive definite up to the
// relative floor kEigFloor * lambda_max.
struct SpdEig {
  Vec values;
  Mat vectors;

  SpdEig(const Mat& s, const std::string& where) {
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(s));
    values = es.eigenvalues();
    vectors = es.eigenvectors();
    const double top = values.size() ? values(values.size() - 1) : 0.0;
    const double bottom = values.size() ? values(0) : 0.0;
    if (!(top > 0.0) || bottom <= kEigFloor * top) throw SingularityError(where, bottom);
  }

  Mat apply_fn(double (*fn)(double)) const {
    Vec d = values.unaryExpr([fn](double v) { return fn(v); });
    return vectors * d.asDiagonal() * vectors.transpose();
  }
  Mat inverse() const { return apply_fn([](double v) { return 1.0 / v; }); }
  Mat sqrt() const { return apply_fn([](double v) { return std::sqrt(v); }); }
  Mat inv_sqrt() const { return apply_fn([](double v) { return 1.0 / std::sqrt(v); }); }
};

inline Mat spd_inverse(const Mat& s, const std::string& where = "spd_inverse") {
  return SpdEig(s, where).inverse();
}
inline Mat spd_sqrt(const Mat& s, const std::string& where = "spd_sqrt") {
  return SpdEig(s, where).sqrt();
}
inline Mat spd_inv_sqrt(const Mat& s, const std::string& where = "spd_inv_sqrt") {
  return SpdEig(s, where).inv_sqrt();
}

// Square root of a positive semidefinite matrix; small negative eigenvalues are clipped.
inline Mat psd_sqrt(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(s));
  Vec d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace calming
