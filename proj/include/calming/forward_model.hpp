#pragma once

#include <cmath>
#include <memory>
#include <string>

#include "calming/linalg.hpp"

namespace calming {

// Forward operator A: R^p -> R^q with exact directional derivatives up to order 4.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;

  virtual Eigen::Index dim_in() const = 0;
  virtual Eigen::Index dim_out() const = 0;
  virtual bool is_linear() const { return false; }
  virtual std::string kind() const = 0;

  Vec apply(const Vec& f) const {
    check_input(f, "apply");
    Vec y = apply_impl(f);
    check_finite(y, kind() + " apply");
    return y;
  }

  Mat jacobian(const Vec& f) const {
    check_input(f, "jacobian");
    Mat j = jacobian_impl(f);
    check_finite(j, kind() + " jacobian");
    return j;
  }

  // m-th derivative of t -> A(f + t*alpha) at t = 0.
  Vec dir_deriv(const Vec& f, const Vec& alpha, int m) const {
    if (m < 1 || m > 4) throw InvalidArgument("dir_deriv: order must be in 1..4, got " + std::to_string(m));
    check_input(f, "dir_deriv");
    require_dim(alpha.size(), dim_in(), "dir_deriv direction");
    Vec d = dir_deriv_impl(f, alpha, m);
    check_finite(d, kind() + " dir_deriv");
    return d;
  }

 protected:
  virtual Vec apply_impl(const Vec& f) const = 0;
  virtual Mat jacobian_impl(const Vec& f) const = 0;
  virtual Vec dir_deriv_impl(const Vec& f, const Vec& alpha, int m) const = 0;

 private:
  void check_input(const Vec& f, const char* what) const {
    require_dim(f.size(), dim_in(), std::string(what) + " input");
    for (Eigen::Index i = 0; i < f.size(); ++i)
      if (!std::isfinite(f[i]))
        throw ContractError(std::string(what) + ": non-finite input at index " + std::to_string(i));
  }
};

using ModelPtr = std::shared_ptr<const ForwardModel>;

class LinearModel : public ForwardModel {
 public:
  explicit LinearModel(Mat a) : a_(std::move(a)) {
    if (a_.rows() == 0 || a_.cols() == 0) throw InvalidArgument("LinearModel: empty matrix");
    check_finite(a_, "LinearModel matrix");
  }

  Eigen::Index dim_in() const override { return a_.cols(); }
  Eigen::Index dim_out() const override { return a_.rows(); }
  bool is_linear() const override { return true; }
  std::string kind() const override { return "linear"; }
  const Mat& matrix() const { return a_; }

 protected:
  Vec apply_impl(const Vec& f) const override { return a_ * f; }
  Mat jacobian_impl(const Vec&) const override { return a_; }
  Vec dir_deriv_impl(const Vec&, const Vec& alpha, int m) const override {
    if (m == 1) return a_ * alpha;
    return Vec::Zero(a_.rows());
  }

 private:
  Mat a_;
};

// Diagonal operator with a_j^2 = L * j^(-2 alpha), j = 1..p.
class DiagonalPowerModel : public LinearModel {
 public:
  DiagonalPowerModel(Eigen::Index p, double L, double alpha) : LinearModel(build(p, L, alpha)), L_(L), alpha_(alpha) {}

  std::string kind() const override { return "diagonal_power"; }
  double amplitude() const { return L_; }
  double decay() const { return alpha_; }

 private:
  static Mat build(Eigen::Index p, double L, double alpha) {
    if (p < 1) throw InvalidArgument("DiagonalPowerModel: p must be positive");
    if (!(L > 0.0)) throw InvalidArgument("DiagonalPowerModel: L must be positive");
    if (!(alpha >= 0.0)) throw InvalidArgument("DiagonalPowerModel: alpha must be nonnegative");
    Vec d(p);
    for (Eigen::Index j = 0; j < p; ++j) d[j] = std::sqrt(L) * std::pow(static_cast<double>(j + 1), -alpha);
    return d.asDiagonal();
  }
  double L_, alpha_;
};

// A(f) = K exp(f), exponential taken componentwise.
class ExpComposedModel : public ForwardModel {
 public:
  explicit ExpComposedModel(Mat k) : k_(std::move(k)) {
    if (k_.rows() == 0 || k_.cols() == 0) throw InvalidArgument("ExpComposedModel: empty matrix");
    check_finite(k_, "ExpComposedModel matrix");
  }

  Eigen::Index dim_in() const override { return k_.cols(); }
  Eigen::Index dim_out() const override { return k_.rows(); }
  std::string kind() const override { return "exp_composed"; }
  const Mat& matrix() const { return k_; }

 protected:
  Vec apply_impl(const Vec& f) const override { return k_ * expf(f); }
  Mat jacobian_impl(const Vec& f) const override { return k_ * expf(f).asDiagonal(); }
  Vec dir_deriv_impl(const Vec& f, const Vec& alpha, int m) const override {
    Vec w = alpha.array().pow(m) * expf(f).array();
    return k_ * w;
  }

 private:
  Vec expf(const Vec& f) const {
    Vec e = f.array().exp();
    check_finite(e, "exp_composed exp(f)");
    return e;
  }
  Mat k_;
};

// Relative error (unit floor on the denominator) between dir_deriv and a central
// finite-difference stencil of order m; m = 3, 4 use one Richardson refinement.
inline double fd_check(const ForwardModel& model, const Vec& f, const Vec& alpha, int m, double h) {
  if (!(h > 0.0)) throw InvalidArgument("fd_check: step must be positive");
  const Vec exact = model.dir_deriv(f, alpha, m);
  auto phi = [&](double t) { return model.apply(f + t * alpha); };
  auto stencil = [&](double s) -> Vec {
    switch (m) {
      case 1: return (phi(s) - phi(-s)) / (2 * s);
      case 2: return (phi(s) - 2 * phi(0) + phi(-s)) / (s * s);
      case 3: return (phi(2 * s) - 2 * phi(s) + 2 * phi(-s) - phi(-2 * s)) / (2 * s * s * s);
      default: return (phi(2 * s) - 4 * phi(s) + 6 * phi(0) - 4 * phi(-s) + phi(-2 * s)) / (s * s * s * s);
    }
  };
  Vec fd = stencil(h);
  if (m >= 3) fd = (4.0 * stencil(h / 2) - fd) / 3.0;
  return (fd - exact).norm() / std::max(exact.norm(), 1.0);
}

}  // namespace calming
