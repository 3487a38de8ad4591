#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "calming/forward_model.hpp"

namespace calming {

// Double Gaussian prior f ~ N(f0, Gsq^-1), g ~ N(g0, Gammasq^-1) plus the structural weight lambda.
struct PriorSpec {
  Vec f0;
  Mat Gsq;
  Vec g0;
  Mat Gammasq;
  double lambda = 1.0;

  void validate(Eigen::Index p, Eigen::Index q) const {
    require_dim(f0.size(), p, "prior.f0");
    require_dim(g0.size(), q, "prior.g0");
    if (Gsq.rows() != p || Gsq.cols() != p) throw ContractError("prior.Gsq: expected p x p");
    if (Gammasq.rows() != q || Gammasq.cols() != q) throw ContractError("prior.Gammasq: expected q x q");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidArgument("prior.lambda must be positive");
    if ((Gsq - Gsq.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + Gsq.cwiseAbs().maxCoeff()))
      throw InvalidArgument("prior.Gsq must be symmetric");
    if ((Gammasq - Gammasq.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + Gammasq.cwiseAbs().maxCoeff()))
      throw InvalidArgument("prior.Gammasq must be symmetric");
    if (!(min_eig(Gsq) > 0.0)) throw InvalidArgument("prior.Gsq must be positive definite");
    if (min_eig(Gammasq) < -1e-12 * (1.0 + max_eig(Gammasq)))
      throw InvalidArgument("prior.Gammasq must be positive semidefinite");
  }
};

struct ExtendedPoint {
  Vec f;
  Vec g;

  Vec stacked() const {
    Vec v(f.size() + g.size());
    v << f, g;
    return v;
  }
  static ExtendedPoint split(const Vec& v, Eigen::Index p) {
    return {v.head(p), v.tail(v.size() - p)};
  }
};

struct Elasticity {
  Vec delta;  // g - A(f)
};

inline Elasticity elasticity(const ExtendedPoint& u, const ForwardModel& model) {
  return {u.g - model.apply(u.f)};
}

// Blocks of the negative Hessian of L_G. `cross` is the q x p (g, f) block, equal to -lambda J(f);
// the assembled matrix is [[Fblock, cross^T], [cross, Gblock]].
struct HessianBlocks {
  Mat Fblock;
  Mat cross;
  Mat Gblock;
  bool penalized = true;

  Mat assembled() const {
    const auto p = Fblock.rows(), q = Gblock.rows();
    Mat h(p + q, p + q);
    h << Fblock, cross.transpose(), cross, Gblock;
    return h;
  }
};

struct InverseBlocks {
  Mat ff_inv;
  Mat gg_inv;
  Mat fg;  // p x q

  Mat assembled() const {
    const auto p = ff_inv.rows(), q = gg_inv.rows();
    Mat h(p + q, p + q);
    h << ff_inv, fg, fg.transpose(), gg_inv;
    return h;
  }
};

struct NoiseEnvelope {
  Mat S;
  double g_exp = std::numeric_limits<double>::infinity();
  double nu0 = 1.0;
};

namespace detail {
inline void check_setup(const ExtendedPoint& u, const Vec* Y, double sigma, const PriorSpec& prior,
                        const ForwardModel& model) {
  const auto p = model.dim_in(), q = model.dim_out();
  require_dim(u.f.size(), p, "point f");
  require_dim(u.g.size(), q, "point g");
  if (Y) require_dim(Y->size(), q, "data Y");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("sigma must be positive");
  prior.validate(p, q);
}
}  // namespace detail

inline double loglik(const ExtendedPoint& u, const Vec& Y, double sigma, const PriorSpec& prior,
                     const ForwardModel& model) {
  detail::check_setup(u, &Y, sigma, prior, model);
  const Vec d = u.g - model.apply(u.f);
  const Vec df = u.f - prior.f0, dg = u.g - prior.g0;
  const double val = -(Y - u.g).squaredNorm() / (2 * sigma * sigma) - 0.5 * prior.lambda * d.squaredNorm() -
                     0.5 * df.dot(prior.Gsq * df) - 0.5 * dg.dot(prior.Gammasq * dg);
  if (!std::isfinite(val)) throw NumericOverflow("loglik", 0);
  return val;
}

struct Gradient {
  Vec df;
  Vec dg;
  Vec stacked() const {
    Vec v(df.size() + dg.size());
    v << df, dg;
    return v;
  }
  double norm() const { return std::sqrt(df.squaredNorm() + dg.squaredNorm()); }
};

inline Gradient grad(const ExtendedPoint& u, const Vec& Y, double sigma, const PriorSpec& prior,
                     const ForwardModel& model) {
  detail::check_setup(u, &Y, sigma, prior, model);
  const Vec Af = model.apply(u.f);
  const Mat J = model.jacobian(u.f);
  Gradient gr;
  gr.df = -prior.lambda * J.transpose() * (Af - u.g) - prior.Gsq * (u.f - prior.f0);
  gr.dg = (Y - u.g) / (sigma * sigma) + prior.lambda * (Af - u.g) - prior.Gammasq * (u.g - prior.g0);
  return gr;
}

// sum_k w_k * Hess A_k(f), assembled by polarization of second directional derivatives.
inline Mat weighted_model_hessian(const Vec& f, const Vec& w, const ForwardModel& model) {
  const auto p = model.dim_in();
  Mat out = Mat::Zero(p, p);
  if (model.is_linear()) return out;
  for (Eigen::Index i = 0; i < p; ++i) {
    Vec ei = Vec::Unit(p, i);
    out(i, i) = w.dot(model.dir_deriv(f, ei, 2));
    for (Eigen::Index j = i + 1; j < p; ++j) {
      Vec ej = Vec::Unit(p, j);
      const double v = 0.25 * w.dot(model.dir_deriv(f, ei + ej, 2) - model.dir_deriv(f, ei - ej, 2));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

namespace detail {
inline HessianBlocks blocks_from(const Vec& f, const Vec* delta, double sigma, const PriorSpec& prior,
                                 const ForwardModel& model, bool penalized) {
  const auto q = model.dim_out();
  const Mat J = model.jacobian(f);
  const double lam = prior.lambda;
  HessianBlocks h;
  h.penalized = penalized;
  h.Fblock = lam * J.transpose() * J;
  if (delta) h.Fblock -= lam * weighted_model_hessian(f, *delta, model);
  h.Gblock = (1.0 / (sigma * sigma) + lam) * Mat::Identity(q, q);
  if (penalized) {
    h.Fblock += prior.Gsq;
    h.Gblock += prior.Gammasq;
  }
  h.Fblock = symmetrize(h.Fblock);
  h.cross = -lam * J;
  return h;
}
}  // namespace detail

inline HessianBlocks hessian_blocks(const ExtendedPoint& u, double sigma, const PriorSpec& prior,
                                    const ForwardModel& model, bool penalized = true) {
  detail::check_setup(u, nullptr, sigma, prior, model);
  const Vec delta = u.g - model.apply(u.f);
  return detail::blocks_from(u.f, &delta, sigma, prior, model, penalized);
}

// Hessian blocks with the elasticity term dropped (local linearization of the model).
inline HessianBlocks breve_hessian(const Vec& f, double sigma, const PriorSpec& prior, const ForwardModel& model,
                                   bool penalized = true) {
  detail::check_setup({f, Vec::Zero(model.dim_out())}, nullptr, sigma, prior, model);
  return detail::blocks_from(f, nullptr, sigma, prior, model, penalized);
}

// Block inverse through the Schur complement of the (g, g) block.
inline InverseBlocks invert_blocks(const HessianBlocks& h) {
  SpdEig whole(h.assembled(), "invert_blocks");
  (void)whole;
  const Mat Hinv = spd_inverse(h.Gblock, "invert_blocks Gblock");
  const Mat CtHinv = h.cross.transpose() * Hinv;  // p x q
  InverseBlocks inv;
  inv.ff_inv = spd_inverse(h.Fblock - CtHinv * h.cross, "invert_blocks Schur complement");
  inv.fg = -inv.ff_inv * CtHinv;
  inv.gg_inv = symmetrize(Hinv + CtHinv.transpose() * inv.ff_inv * CtHinv);
  return inv;
}

enum class GammaMode { pushforward, linear_pullback };

inline Mat coordinate_gamma(const ForwardModel& model, const Vec& f0, const Mat& Gsq, GammaMode mode) {
  const Mat J = model.jacobian(f0);
  if (mode == GammaMode::pushforward) return symmetrize(J * Gsq * J.transpose());
  if (J.rows() != J.cols()) throw ContractError("linear_pullback: jacobian must be square");
  Eigen::JacobiSVD<Mat> svd(J);
  const Vec sv = svd.singularValues();
  if (!(sv(sv.size() - 1) > kEigFloor * sv(0))) throw SingularityError("linear_pullback jacobian", sv(sv.size() - 1));
  const Mat Jinv = J.inverse();
  return symmetrize(Jinv.transpose() * Gsq * Jinv);
}

struct GGCondition {
  double lhs1, rhs1, lhs2, rhs2, C_hat;
};

// Both sides of the prior coordination condition; `at` is the evaluation point for the
// trace side (normally the population optimum).
inline GGCondition check_gg_condition(const ForwardModel& model, const Vec& fstar, const PriorSpec& prior,
                                      double sigma, const ExtendedPoint& at) {
  prior.validate(model.dim_in(), model.dim_out());
  const Vec Af0 = model.apply(prior.f0);
  if ((prior.g0 - Af0).norm() > 1e-10 * (1.0 + Af0.norm()))
    throw ContractError("check_gg_condition: requires g0 = A(f0)");
  GGCondition c{};
  const Vec r1 = model.apply(fstar) - prior.g0;
  const Vec r2 = fstar - prior.f0;
  c.lhs1 = r1.dot(prior.Gammasq * r1);
  c.rhs1 = r2.dot(prior.Gsq * r2);
  const auto q = model.dim_out();
  c.lhs2 = spd_inverse(sigma * sigma * prior.Gammasq + Mat::Identity(q, q)).trace();
  const HessianBlocks pen = hessian_blocks(at, sigma, prior, model, true);
  const HessianBlocks raw = hessian_blocks(at, sigma, prior, model, false);
  c.rhs2 = (spd_inverse(pen.Fblock, "check_gg_condition Fblock") * raw.Fblock).trace();
  auto ratio = [](double l, double r) {
    if (l <= 0.0) return 0.0;
    if (r <= 0.0) return std::numeric_limits<double>::infinity();
    return l / r;
  };
  c.C_hat = std::max(ratio(c.lhs1, c.rhs1), ratio(c.lhs2, c.rhs2));
  return c;
}

struct SandwichMargins {
  double min_eig_lower;  // IF_G^-1 - 1/2 block
  double min_eig_upper;  // 2 block - IF_G^-1
  // Same margins restricted to the diagonal blocks.
  double ff_lower, ff_upper, gg_lower, gg_upper;
};

inline SandwichMargins block_sandwich_check(const ForwardModel& model, const PriorSpec& prior, double sigma) {
  if (!model.is_linear()) throw InvalidArgument("block_sandwich_check: linear model required");
  if (std::abs(prior.lambda * sigma * sigma - 1.0) > 1e-12)
    throw InvalidArgument("block_sandwich_check: requires lambda = sigma^-2");
  const auto p = model.dim_in(), q = model.dim_out();
  const ExtendedPoint any{prior.f0, prior.g0};
  const HessianBlocks h = hessian_blocks(any, sigma, prior, model, true);
  const Mat full_inv = spd_inverse(h.assembled(), "block_sandwich_check");
  const Mat Finv = spd_inverse(h.Fblock), Hinv = spd_inverse(h.Gblock);
  Mat blk = Mat::Zero(p + q, p + q);
  blk.topLeftCorner(p, p) = Finv;
  blk.bottomRightCorner(q, q) = Hinv;
  SandwichMargins m{};
  m.min_eig_lower = min_eig(full_inv - 0.5 * blk);
  m.min_eig_upper = min_eig(2.0 * blk - full_inv);
  m.ff_lower = min_eig(full_inv.topLeftCorner(p, p) - 0.5 * Finv);
  m.ff_upper = min_eig(2.0 * Finv - full_inv.topLeftCorner(p, p));
  m.gg_lower = min_eig(full_inv.bottomRightCorner(q, q) - 0.5 * Hinv);
  m.gg_upper = min_eig(2.0 * Hinv - full_inv.bottomRightCorner(q, q));
  return m;
}

}  // namespace calming
