#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "calming/calming_core.hpp"
#include "calming/smoothness.hpp"
#include "calming/toolkit.hpp"

namespace calming {

struct PmleOptions {
  int max_iter = 500;
  double rel_tol = 1e-10;   // on ||step|| / max(1, ||upsilon||)
  double grad_tol = 1e-8;   // on ||grad|| / (1 + |L_G|)
  int max_halvings = 30;
  bool second_order = false;  // f-step with the elasticity term
  std::optional<ExtendedPoint> start;
};

struct PmleResult {
  ExtendedPoint upsilon_hat;
  int iterations = 0;
  bool converged = false;
  double final_grad_norm = 0;
  std::vector<double> trace;
};

// Exact maximizer of L_G over g for fixed f.
inline Vec g_step(const Vec& f, const Vec& Y, double sigma, const PriorSpec& prior, const ForwardModel& model) {
  const auto q = model.dim_out();
  require_dim(Y.size(), q, "g_step data");
  const double s2 = 1.0 / (sigma * sigma);
  const Mat H = (s2 + prior.lambda) * Mat::Identity(q, q) + prior.Gammasq;
  const Vec rhs = s2 * Y + prior.lambda * model.apply(f) + prior.Gammasq * prior.g0;
  return H.llt().solve(rhs);
}

// Newton-type ascent step in f for fixed g.
inline Vec f_step(const Vec& f_prev, const Vec& g_tilde, const PriorSpec& prior, const ForwardModel& model,
                  bool include_second_order = false, double damping = 1.0) {
  const Vec Af = model.apply(f_prev);
  const Mat J = model.jacobian(f_prev);
  Mat F = prior.Gsq + prior.lambda * J.transpose() * J;
  if (include_second_order) F -= prior.lambda * weighted_model_hessian(f_prev, g_tilde - Af, model);
  const Vec gradf = prior.lambda * J.transpose() * (g_tilde - Af) - prior.Gsq * (f_prev - prior.f0);
  return f_prev + damping * (spd_inverse(F, "f_step") * gradf);
}

namespace detail {
inline double safe_loglik(const ExtendedPoint& u, const Vec& Y, double sigma, const PriorSpec& prior,
                          const ForwardModel& model) {
  try {
    return loglik(u, Y, sigma, prior, model);
  } catch (const NumericOverflow&) {
    return -std::numeric_limits<double>::infinity();
  }
}
inline bool small_step(const Vec& step, const Vec& at, double tol) {
  return step.norm() <= tol * std::max(1.0, at.norm());
}
}  // namespace detail

// Block coordinate ascent: exact g-step, then a backtracked f-step.
inline PmleResult alternate(const Vec& Y, double sigma, const PriorSpec& prior, const ForwardModel& model,
                            const PmleOptions& opt = {}) {
  prior.validate(model.dim_in(), model.dim_out());
  ExtendedPoint u = opt.start ? *opt.start : ExtendedPoint{prior.f0, model.apply(prior.f0)};
  PmleResult res;
  double L = loglik(u, Y, sigma, prior, model);
  res.trace.push_back(L);
  for (int it = 1; it <= opt.max_iter; ++it) {
    const Vec before = u.stacked();
    u.g = g_step(u.f, Y, sigma, prior, model);
    L = loglik(u, Y, sigma, prior, model);
    res.trace.push_back(L);

    const Vec dir = f_step(u.f, u.g, prior, model, opt.second_order, 1.0) - u.f;
    double t = 1.0;
    for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
      const ExtendedPoint trial{u.f + t * dir, u.g};
      const double Lt = detail::safe_loglik(trial, Y, sigma, prior, model);
      if (Lt >= L) {
        u = trial;
        L = Lt;
        break;
      }
    }
    res.trace.push_back(L);
    res.iterations = it;
    const double gn = grad(u, Y, sigma, prior, model).norm();
    res.final_grad_norm = gn;
    if (detail::small_step(u.stacked() - before, u.stacked(), opt.rel_tol) || gn < opt.grad_tol * (1 + std::abs(L))) {
      res.converged = true;
      break;
    }
  }
  res.upsilon_hat = u;
  return res;
}

// Damped Newton ascent on the full extended parameter. Falls back to the linearized Hessian when
// the full one is not positive definite.
inline PmleResult joint_newton(const Vec& Y, double sigma, const PriorSpec& prior, const ForwardModel& model,
                               const PmleOptions& opt = {}) {
  prior.validate(model.dim_in(), model.dim_out());
  const auto p = model.dim_in();
  ExtendedPoint u = opt.start ? *opt.start : ExtendedPoint{prior.f0, model.apply(prior.f0)};
  PmleResult res;
  double L = loglik(u, Y, sigma, prior, model);
  res.trace.push_back(L);
  int polish = 0;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const Vec gvec = grad(u, Y, sigma, prior, model).stacked();
    Mat Hinv;
    try {
      Hinv = spd_inverse(hessian_blocks(u, sigma, prior, model, true).assembled(), "joint_newton");
    } catch (const SingularityError&) {
      Hinv = spd_inverse(breve_hessian(u.f, sigma, prior, model, true).assembled(), "joint_newton breve");
    }
    const Vec dir = Hinv * gvec;
    double t = 1.0;
    Vec step = Vec::Zero(dir.size());
    for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
      const ExtendedPoint trial = ExtendedPoint::split(u.stacked() + t * dir, p);
      const double Lt = detail::safe_loglik(trial, Y, sigma, prior, model);
      if (Lt >= L) {
        step = t * dir;
        u = trial;
        L = Lt;
        break;
      }
    }
    res.trace.push_back(L);
    res.iterations = it;
    const double gn = grad(u, Y, sigma, prior, model).norm();
    res.final_grad_norm = gn;
    const bool done = detail::small_step(step, u.stacked(), opt.rel_tol) || gn < opt.grad_tol * (1 + std::abs(L));
    if (done) {
      res.converged = true;
      // a couple of extra full steps cost little and bring quadratic convergence to round-off
      if (++polish > 2 || detail::small_step(step, u.stacked(), 1e-15)) break;
    }
  }
  res.upsilon_hat = u;
  return res;
}

// Maximizer of the expected log-likelihood: noiseless data Y = A(f*).
inline PmleResult population_optimum(const Vec& fstar, double sigma, const PriorSpec& prior,
                                     const ForwardModel& model, const PmleOptions& opt = {}) {
  return joint_newton(model.apply(fstar), sigma, prior, model, opt);
}

struct ConcentrationReport {
  double r_G = 0;
  double rho = 0;
  double z_val = 0;
  double delta3G = 0;
  double effective_dim_p_eps = 0;
  double lambda_eps = 0;
  double v_eps = 0;
};

// Radius of the concentration set around the population optimum.
inline ConcentrationReport concentration_radius(const ExtendedPoint& ustar, double sigma, const PriorSpec& prior,
                                                const ForwardModel& model, const NoiseEnvelope& noise, double x,
                                                const DeltaOptions& dopt = {}) {
  if (!(x > 0.0)) throw InvalidArgument("concentration_radius: x must be positive");
  const auto q = model.dim_out();
  const Mat S = noise.S.size() ? noise.S : Mat::Identity(q, q);
  require_dim(S.rows(), q, "noise S");
  const InverseBlocks inv = invert_blocks(hessian_blocks(ustar, sigma, prior, model, true));
  const Mat B = symmetrize(S * inv.gg_inv * S) / (sigma * sigma);
  const QuadFormStats st = QuadFormStats::of(B);
  ConcentrationReport rep;
  rep.effective_dim_p_eps = st.p_tr;
  rep.lambda_eps = st.lam;
  rep.v_eps = st.v;
  rep.z_val = std::isinf(noise.g_exp) ? z_gauss(st, x).value : z_nongauss_form(st, x, noise.g_exp).value;
  double rho = 0;
  for (int k = 0; k < 8; ++k) {
    const double r = rep.z_val / (1 - rho);
    const double d3 = delta_m_estimate(ustar, r, 3, sigma, prior, model, Metric::D_G, dopt);
    rho = std::max(3 * d3 / (r * r), 0.0);
    if (rho > 0.5) throw ConcentrationUnverifiable(rho, d3);
  }
  rep.rho = rho;
  rep.r_G = rep.z_val / (1 - rho);
  rep.delta3G = delta_m_estimate(ustar, rep.r_G, 3, sigma, prior, model, Metric::D_G, dopt);
  return rep;
}

struct FisherResidual {
  double lhs_sq;       // ||D_G(u_hat - u*) - D_G^-1 grad zeta||^2
  double bound;        // 4 delta3G(r_G)
  double deviation;    // ||D_G(u_hat - u*)||
  double excess_gap;   // |L_G(u_hat) - L_G(u*) - ||D_G^-1 grad zeta||^2 / 2|
  double excess_bound; // delta3G(r_G)
};

// eps is the standardized noise: Y = A(f*) + sigma * eps.
inline FisherResidual fisher_residual(const ExtendedPoint& uhat, const ExtendedPoint& ustar, double sigma,
                                      const PriorSpec& prior, const ForwardModel& model, const Vec& eps,
                                      const Vec& Y, const ConcentrationReport& conc) {
  const auto p = model.dim_in(), q = model.dim_out();
  require_dim(eps.size(), q, "fisher_residual noise");
  const SpdEig eig(hessian_blocks(ustar, sigma, prior, model, true).assembled(), "fisher_residual");
  const Mat DG = eig.sqrt(), DGinv = eig.inv_sqrt();
  Vec gz = Vec::Zero(p + q);
  gz.tail(q) = eps / sigma;
  const Vec score = DGinv * gz;
  const Vec dev = DG * (uhat.stacked() - ustar.stacked());
  FisherResidual out{};
  out.lhs_sq = (dev - score).squaredNorm();
  out.bound = 4 * conc.delta3G;
  out.deviation = dev.norm();
  out.excess_gap = std::abs(loglik(uhat, Y, sigma, prior, model) - loglik(ustar, Y, sigma, prior, model) -
                            0.5 * score.squaredNorm());
  out.excess_bound = conc.delta3G;
  return out;
}

struct LossDecomposition {
  double stochastic;  // ||Q(f_hat - f*_G)||
  double bias;        // ||Q(f*_G - f*)||
  double bound;       // ||Q breveF^-1 Q'||^(1/2) ||G(f* - f0)|| + z(B_QG, x); constant taken as 1
  double z_QG;
  bool up_to_constant = true;
};

// B_{Q|G} = sigma^-2 Q fg S^2 fg' Q' at the population optimum.
inline Mat b_QG(const Mat& Q, const ExtendedPoint& ustar, double sigma, const PriorSpec& prior,
                const ForwardModel& model, const Mat& S) {
  const InverseBlocks inv = invert_blocks(hessian_blocks(ustar, sigma, prior, model, true));
  return symmetrize(Q * inv.fg * S * S * inv.fg.transpose() * Q.transpose()) / (sigma * sigma);
}

inline LossDecomposition loss_decomposition(const Mat& Q, const ExtendedPoint& uhat, const ExtendedPoint& ustar,
                                            const Vec& fstar, double sigma, const PriorSpec& prior,
                                            const ForwardModel& model, const Mat& S, double x) {
  LossDecomposition out{};
  out.stochastic = (Q * (uhat.f - ustar.f)).norm();
  out.bias = (Q * (ustar.f - fstar)).norm();
  const Mat Sm = S.size() ? S : Mat::Identity(model.dim_out(), model.dim_out());
  out.z_QG = z_gauss(QuadFormStats::of(b_QG(Q, ustar, sigma, prior, model, Sm)), x).value;
  const Mat Fb = breve_hessian(ustar.f, sigma, prior, model, true).Fblock;
  const Vec df = fstar - prior.f0;
  out.bound = std::sqrt(op_norm(Q * spd_inverse(Fb) * Q.transpose())) * std::sqrt(df.dot(prior.Gsq * df)) + out.z_QG;
  return out;
}

}  // namespace calming
