#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "calming/linalg.hpp"
#include "calming/rng.hpp"

namespace calming {

// Moments of a PSD matrix B used by the quadratic-form quantiles.
struct QuadFormStats {
  double p_tr = 0;  // tr B
  double v = 0;     // sqrt(tr B^2)
  double lam = 0;   // ||B||_op

  static QuadFormStats of(const Mat& B) {
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(B), Eigen::EigenvaluesOnly);
    const Vec ev = es.eigenvalues().cwiseMax(0.0);
    return {ev.sum(), ev.norm(), ev.size() ? ev.maxCoeff() : 0.0};
  }
  static QuadFormStats identity(double p) { return {p, std::sqrt(p), 1.0}; }
};

struct ZValue {
  double value;       // z(B, x)
  double simplified;  // sqrt(p) + sqrt(2 lam x), an upper bound for value
};

inline ZValue z_gauss(const QuadFormStats& s, double x) {
  if (!(x >= 0.0)) throw InvalidArgument("z_gauss: x must be nonnegative");
  return {std::sqrt(s.p_tr + 2 * s.v * std::sqrt(x) + 2 * s.lam * x), std::sqrt(s.p_tr) + std::sqrt(2 * s.lam * x)};
}

struct Chi2Bounds {
  double upper_sq;    // p + 2 sqrt(px) + 2x
  double upper_norm;  // sqrt(p) + sqrt(2x)
  double lower_sq;    // p - 2 sqrt(px)
};

inline Chi2Bounds chi2_bounds(int p, double x) {
  if (p < 1) throw InvalidArgument("chi2_bounds: p must be >= 1");
  if (!(x >= 0.0)) throw InvalidArgument("chi2_bounds: x must be nonnegative");
  const double r = std::sqrt(p * x);
  return {p + 2 * r + 2 * x, std::sqrt(static_cast<double>(p)) + std::sqrt(2 * x), p - 2 * r};
}

struct NonGaussParams {
  double g_exp;
  double x_c;
  double z_c;
  double g_c;
};

// Break point of the sub-exponential quantile for a vector with p components.
inline NonGaussParams nongauss_params(double p, double g_exp) {
  const double a = std::sqrt(p) / g_exp;
  const double s = 0.5 + a + a * a;
  return {g_exp, g_exp * g_exp / 4, g_exp * std::sqrt(s), g_exp * std::sqrt(s) / (1 + a)};
}

// Same for a quadratic form <B xi, xi>.
inline NonGaussParams nongauss_params(const QuadFormStats& s, double g_exp) {
  const double zc2 = s.p_tr + s.v * g_exp + s.lam * g_exp * g_exp / 2;
  const double gc = std::sqrt(s.p_tr / s.lam + g_exp * s.v / s.lam + g_exp * g_exp / 2) / (1 + s.v / (s.lam * g_exp));
  return {g_exp, g_exp * g_exp / 4, std::sqrt(zc2), gc};
}

inline double z_nongauss(double p, double x, double g_exp) {
  if (!(x >= 0.0)) throw InvalidArgument("z_nongauss: x must be nonnegative");
  if (!(0.3 * g_exp >= std::sqrt(p)))
    throw InvalidArgument("z_nongauss: requires 0.3 g >= sqrt(p)");
  if (std::isinf(g_exp)) return std::sqrt(p + 2 * std::sqrt(p * x) + 2 * x);
  const NonGaussParams c = nongauss_params(p, g_exp);
  if (x <= c.x_c) return std::sqrt(p + 2 * std::sqrt(p * x) + 2 * x);
  return c.z_c + 2 * (x - c.x_c) / c.g_c;
}

struct ZNonGaussForm {
  double value;
  double simplified;       // first branch capped by sqrt(p) + sqrt(2 lam x)
  bool hyp_statement;      // 0.3 g >= sqrt(p / lam), the gating version
  bool hyp_prelude;        // 0.3 g >= sqrt(p)
};

inline ZNonGaussForm z_nongauss_form(const QuadFormStats& s, double x, double g_exp) {
  if (!(x >= 0.0)) throw InvalidArgument("z_nongauss_form: x must be nonnegative");
  if (!(s.lam > 0.0)) throw InvalidArgument("z_nongauss_form: B must be nonzero");
  ZNonGaussForm out{};
  out.hyp_statement = 0.3 * g_exp >= std::sqrt(s.p_tr / s.lam);
  out.hyp_prelude = 0.3 * g_exp >= std::sqrt(s.p_tr);
  if (!out.hyp_statement) throw InvalidArgument("z_nongauss_form: requires 0.3 g >= sqrt(p / lambda)");
  const ZValue gz = z_gauss(s, x);
  if (std::isinf(g_exp)) return {gz.value, gz.simplified, true, true};
  const NonGaussParams c = nongauss_params(s, g_exp);
  if (x <= c.x_c) {
    out.value = gz.value;
    out.simplified = gz.simplified;
  } else {
    out.value = c.z_c + 2 * s.lam * (x - c.x_c) / c.g_c;
    out.simplified = out.value;
  }
  return out;
}

// Probability attached to the sub-exponential quantiles: 2e^-x + 8.4 e^-x_c 1(x < x_c).
inline double nongauss_prob_bound(double x, double g_exp) {
  if (std::isinf(g_exp)) return 2 * std::exp(-x);
  const double xc = g_exp * g_exp / 4;
  return 2 * std::exp(-x) + (x < xc ? 8.4 * std::exp(-xc) : 0.0);
}

// Upper bound on f(x+u) - f(x) - <grad f(x), u> at metric radius r > r0.
inline double concavity_tail(double r0, double r, double delta3_r0) {
  if (!(r0 > 0.0) || !(r > r0)) throw InvalidArgument("concavity_tail: requires r > r0 > 0");
  return -(r * r0 - r0 * r0 / 2) * (1 - 3 * delta3_r0 / (r0 * r0));
}

struct GaussIntegralBound {
  double r0_required;
  double numerator_bound;    // constant reported as 1
  double denominator_bound;
  bool up_to_constant = true;
};

inline GaussIntegralBound gauss_integral_bound(double p_tau, double x, double C0) {
  if (!(C0 > 0.5 && C0 <= 1.0)) throw InvalidArgument("gauss_integral_bound: requires 1/2 < C0 <= 1");
  if (!(x > 0.0)) throw InvalidArgument("gauss_integral_bound: requires x > 0");
  const double e = std::exp(-(p_tau + x) / 2);
  return {(2 * std::sqrt(p_tau) + std::sqrt(x)) / C0, e, 1 - e, true};
}

struct SpectrumPair {
  std::vector<double> lam_xi;
  std::vector<double> lam_eta;
  Vec a_shift;
};

struct GaussComparison {
  double bound;
  bool frobenius_applicable;  // 3 ||Sigma||^2 <= ||Sigma||_F^2 for both laws
  double frobenius_bound;     // NaN when not applicable
  bool up_to_constant = true;
};

inline GaussComparison gaussian_comparison(const SpectrumPair& sp) {
  auto tails = [](const std::vector<double>& l, const char* name) {
    for (std::size_t j = 0; j < l.size(); ++j) {
      if (!(l[j] >= 0.0)) throw InvalidArgument(std::string("gaussian_comparison: negative eigenvalue in ") + name);
      if (j > 0 && l[j] > l[j - 1]) throw InvalidArgument(std::string("gaussian_comparison: ") + name + " not non-increasing");
    }
    double s1 = 0, s2 = 0;
    for (std::size_t j = 0; j < l.size(); ++j) {
      s1 += l[j] * l[j];
      if (j >= 1) s2 += l[j] * l[j];
    }
    if (!(s2 > 0.0)) throw DegenerateSpectrum(std::string("gaussian_comparison: Lambda_2 = 0 for ") + name);
    return std::pair{std::sqrt(s1), std::sqrt(s2)};
  };
  auto [l1x, l2x] = tails(sp.lam_xi, "lam_xi");
  auto [l1e, l2e] = tails(sp.lam_eta, "lam_eta");
  const std::size_t n = std::max(sp.lam_xi.size(), sp.lam_eta.size());
  double l1diff = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double a = j < sp.lam_xi.size() ? sp.lam_xi[j] : 0.0;
    const double b = j < sp.lam_eta.size() ? sp.lam_eta[j] : 0.0;
    l1diff += std::abs(a - b);
  }
  const double shift = l1diff + sp.a_shift.squaredNorm();
  GaussComparison out{};
  out.bound = (1 / std::sqrt(l1x * l2x) + 1 / std::sqrt(l1e * l2e)) * shift;
  const double topx = sp.lam_xi.front(), tope = sp.lam_eta.front();
  out.frobenius_applicable = 3 * topx * topx <= l1x * l1x && 3 * tope * tope <= l1e * l1e;
  out.frobenius_bound = out.frobenius_applicable ? (1 / l1x + 1 / l1e) * shift : std::numeric_limits<double>::quiet_NaN();
  out.up_to_constant = true;
  return out;
}

// ---------------------------------------------------------------------------------------------
// Taylor-expansion checkers.

// A smooth function with value, gradient, Hessian and directional derivatives of order 1..4.
struct SmoothFn {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> grad;
  std::function<Mat(const Vec&)> hess;
  std::function<double(const Vec&, const Vec&, int)> dir;
};

// f(x) = b'x - x'Hx/2 + (eps/6) sum_r (a_r'x)^3, with the rows of `a` as the a_r.
inline SmoothFn cubic_fn(const Mat& H, const Vec& b, const Mat& a, double eps) {
  SmoothFn fn;
  fn.value = [=](const Vec& x) {
    const Vec ax = a * x;
    return b.dot(x) - 0.5 * x.dot(H * x) + eps / 6 * ax.array().cube().sum();
  };
  fn.grad = [=](const Vec& x) {
    const Vec ax = a * x;
    return Vec(b - H * x + eps / 2 * a.transpose() * ax.cwiseAbs2());
  };
  fn.hess = [=](const Vec& x) {
    const Vec ax = a * x;
    return Mat(-H + eps * a.transpose() * ax.asDiagonal() * a);
  };
  fn.dir = [=](const Vec& x, const Vec& u, int m) {
    const Vec ax = a * x, au = a * u;
    switch (m) {
      case 1: return (b - H * x + eps / 2 * a.transpose() * ax.cwiseAbs2()).dot(u);
      case 2: return -u.dot(H * u) + eps * (ax.array() * au.array().square()).sum();
      case 3: return eps * au.array().cube().sum();
      default: return 0.0;
    }
  };
  return fn;
}

enum class TaylorVariant { sym_exp, one_sided, grad_cont, hess_cont, ellipse_grad, integral };

struct TaylorOptions {
  Vec w;                 // second direction for grad_cont / hess_cont; defaults to u
  Mat Q;                 // ellipse_grad shape; defaults to identity
  double r = 0;          // ellipse_grad radius; defaults to ||Qu||
  double box = 0;        // integral: A = [-box, box]^d; defaults to max |u_i|
  int nodes = 64;        // quadrature nodes per axis
};

struct TaylorCheck {
  double lhs;
  double rhs;
  bool holds;
  double delta3;
  double delta4;
  bool hypothesis_ok;  // delta3, delta4 <= 1 on the checked set
};

namespace detail {

// Gauss-Legendre nodes and weights on [-1, 1] by the Golub-Welsch eigenvalue method.
inline std::pair<Vec, Vec> gauss_legendre(int n) {
  Mat T = Mat::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    T(k, k - 1) = b;
    T(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(T);
  Vec w = 2.0 * es.eigenvectors().row(0).transpose().cwiseAbs2();
  return {es.eigenvalues(), w};
}

// Directions on the boundary of {v : ||Q v|| <= r}.
inline std::vector<Vec> boundary_dirs(const Mat& Qinv, double r, Eigen::Index d) {
  std::vector<Vec> out;
  if (d == 1) {
    out.push_back(Qinv * Vec::Constant(1, r));
    out.push_back(Qinv * Vec::Constant(1, -r));
  } else if (d == 2) {
    for (int k = 0; k < 720; ++k) {
      const double t = 2 * std::numbers::pi * k / 720;
      Vec s(2);
      s << std::cos(t), std::sin(t);
      out.push_back(Qinv * (r * s));
    }
  } else {
    Rng rng(0x7a11u);
    for (int k = 0; k < 4096; ++k) out.push_back(Qinv * (r * rng.sphere(d)));
  }
  return out;
}

inline double sup_dir(const SmoothFn& f, const std::vector<Vec>& pts, const std::vector<Vec>& dirs, int m) {
  double best = 0;
  for (const auto& x : pts)
    for (const auto& v : dirs) best = std::max(best, std::abs(f.dir(x, v, m)));
  return best;
}

}  // namespace detail

// Evaluates both sides of one Taylor-type inequality. delta_m is (1/m!) sup |f^(m)(x', v)| over
// the set each variant needs: the segment x + [-1,1]u for the exponential variants, the box
// spanned by u and w with directions in the ball of radius max(|u|,|w|) for the gradient and
// Hessian variants, the ellipse {|Qv| <= r} for ellipse_grad, and x + A for the integral.
inline TaylorCheck taylor_lemma_check(const SmoothFn& f, const Vec& x, const Vec& u, TaylorVariant which,
                                      TaylorOptions opt = {}) {
  const Eigen::Index d = x.size();
  require_dim(u.size(), d, "taylor_lemma_check direction");
  const Vec w = opt.w.size() ? opt.w : u;
  std::vector<Vec> pts, dirs;
  double rhs_scale = 1.0;

  switch (which) {
    case TaylorVariant::sym_exp:
    case TaylorVariant::one_sided:
      for (int k = -100; k <= 100; ++k) pts.push_back(x + (k / 100.0) * u);
      dirs = {u};
      break;
    case TaylorVariant::grad_cont:
    case TaylorVariant::hess_cont: {
      for (int i = -10; i <= 10; ++i)
        for (int j = -10; j <= 10; ++j) pts.push_back(x + (i / 10.0) * u + (j / 10.0) * w);
      dirs = detail::boundary_dirs(Mat::Identity(d, d), std::max(u.norm(), w.norm()), d);
      break;
    }
    case TaylorVariant::ellipse_grad: {
      const Mat Q = opt.Q.size() ? opt.Q : Mat::Identity(d, d);
      const double r = opt.r > 0 ? opt.r : (Q * u).norm();
      if ((Q * u).norm() > r * (1 + 1e-12)) throw InvalidArgument("ellipse_grad: u outside the ellipse");
      for (int k = -20; k <= 20; ++k) pts.push_back(x + (k / 20.0) * u);
      dirs = detail::boundary_dirs(Q.inverse(), r, d);
      rhs_scale = 1.0 / r;
      break;
    }
    case TaylorVariant::integral: {
      if (d > 2) throw InvalidArgument("taylor_lemma_check integral: dimension must be <= 2");
      const double a = opt.box > 0 ? opt.box : u.cwiseAbs().maxCoeff();
      const int g = 15;
      for (int i = 0; i <= g; ++i)
        for (int j = 0; j <= (d == 2 ? g : 0); ++j) {
          Vec v(d);
          v(0) = a * (2.0 * i / g - 1);
          if (d == 2) v(1) = a * (2.0 * j / g - 1);
          dirs.push_back(v);
        }
      for (int k = -10; k <= 10; ++k)
        for (const auto& v : dirs) pts.push_back(x + (k / 10.0) * v);
      break;
    }
  }

  TaylorCheck out{};
  if (which == TaylorVariant::integral) {
    // the sup pairs each direction with points along its own segment
    double s3 = 0, s4 = 0;
    for (const auto& v : dirs)
      for (int k = -10; k <= 10; ++k) {
        const Vec xp = x + (k / 10.0) * v;
        s3 = std::max(s3, std::abs(f.dir(xp, v, 3)));
        s4 = std::max(s4, std::abs(f.dir(xp, v, 4)));
      }
    out.delta3 = s3 / 6;
    out.delta4 = s4 / 24;
  } else {
    out.delta3 = detail::sup_dir(f, pts, dirs, 3) / 6;
    out.delta4 = detail::sup_dir(f, pts, dirs, 4) / 24;
  }
  out.hypothesis_ok = out.delta3 <= 1 && out.delta4 <= 1;
  const double diamond = 4 * out.delta3 * out.delta3 + 4 * out.delta4;

  const double fx = f.value(x);
  switch (which) {
    case TaylorVariant::sym_exp: {
      const double f1 = f.dir(x, u, 1), f2 = f.dir(x, u, 2);
      const double a = f.value(x + u) - fx - f1, b = f.value(x - u) - fx + f1;
      out.lhs = std::abs(0.5 * (std::exp(a) + std::exp(b)) - std::exp(f2 / 2));
      out.rhs = std::exp(f2 / 2) * diamond;
      break;
    }
    case TaylorVariant::one_sided: {
      const double f1 = f.dir(x, u, 1), f2 = f.dir(x, u, 2);
      out.lhs = std::abs(std::exp(f.value(x + u) - fx - f1) - std::exp(f2 / 2));
      out.rhs = out.delta3 * std::exp(f2 / 2);
      break;
    }
    case TaylorVariant::grad_cont:
      out.lhs = std::abs(w.dot(f.grad(x + u) - f.grad(x) - f.hess(x) * u));
      out.rhs = 3 * out.delta3;
      break;
    case TaylorVariant::hess_cont: {
      // quadratic form evaluated at w/2, the normalization under which the constant 3 is derived
      const Vec wh = 0.5 * w;
      out.lhs = std::abs(wh.dot((f.hess(x + u) - f.hess(x)) * wh));
      out.rhs = 3 * out.delta3;
      break;
    }
    case TaylorVariant::ellipse_grad: {
      const Mat Q = opt.Q.size() ? opt.Q : Mat::Identity(d, d);
      out.lhs = (Q.inverse() * (f.grad(x + u) - f.grad(x) - f.hess(x) * u)).norm();
      out.rhs = 3 * rhs_scale * out.delta3;
      break;
    }
    case TaylorVariant::integral: {
      const double a = opt.box > 0 ? opt.box : u.cwiseAbs().maxCoeff();
      auto [nodes, weights] = detail::gauss_legendre(opt.nodes);
      const Vec g0 = f.grad(x);
      double I1 = 0, I2 = 0;
      const int n2 = d == 2 ? opt.nodes : 1;
      for (int i = 0; i < opt.nodes; ++i)
        for (int j = 0; j < n2; ++j) {
          Vec v(d);
          v(0) = a * nodes(i);
          double wt = a * weights(i);
          if (d == 2) {
            v(1) = a * nodes(j);
            wt *= a * weights(j);
          }
          I1 += wt * std::exp(f.value(x + v) - fx - g0.dot(v));
          I2 += wt * std::exp(f.dir(x, v, 2) / 2);
        }
      out.lhs = std::abs(I1 - I2);
      out.rhs = diamond * I2;
      break;
    }
  }
  out.holds = out.lhs <= out.rhs + 1e-12;
  return out;
}

}  // namespace calming
