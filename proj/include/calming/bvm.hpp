#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "calming/parallel.hpp"
#include "calming/posterior.hpp"
#include "calming/smoothness.hpp"

namespace calming {

// tr{IF(v) IF_G(v)^-1}; the breve variant drops the elasticity term from both matrices.
inline double effective_dimension(const ExtendedPoint& u, double sigma, const PriorSpec& prior,
                                  const ForwardModel& model, bool use_breve = false) {
  const Mat IF = use_breve ? breve_hessian(u.f, sigma, prior, model, false).assembled()
                           : hessian_blocks(u, sigma, prior, model, false).assembled();
  const Mat IFG = use_breve ? breve_hessian(u.f, sigma, prior, model, true).assembled()
                            : hessian_blocks(u, sigma, prior, model, true).assembled();
  return (IF * spd_inverse(IFG, "effective_dimension")).trace();
}

struct SmoothnessReport {
  double r0 = 0;
  double delta3 = 0;
  double delta4 = 0;
  double diamond = 0;  // 4 delta3^2 + 4 delta4
  double C0 = 1;       // 1 - 3 delta3 / r0^2
  int n_points = 0;
  int n_dirs = 0;
  bool diamond_ok = true;  // diamond <= 1/2
  bool C0_ok = true;       // C0 >= 1/2

  bool hypotheses_ok() const { return diamond_ok && C0_ok; }
};

inline SmoothnessReport diamond(double r0, double delta3, double delta4, int n_points = 0, int n_dirs = 0) {
  if (!(r0 > 0)) throw InvalidArgument("diamond: r0 must be positive");
  SmoothnessReport s;
  s.r0 = r0;
  s.delta3 = delta3;
  s.delta4 = delta4;
  s.diamond = 4 * delta3 * delta3 + 4 * delta4;
  s.C0 = 1 - 3 * delta3 / (r0 * r0);
  s.n_points = n_points;
  s.n_dirs = n_dirs;
  s.diamond_ok = s.diamond <= 0.5;
  s.C0_ok = s.C0 >= 0.5;
  return s;
}

// Estimates delta3 and delta4 on the D_G ball of radius r0 around `center`.
inline SmoothnessReport diamond(double r0, const ExtendedPoint& center, double sigma, const PriorSpec& prior,
                                const ForwardModel& model, const DeltaOptions& opt = {}) {
  const double d3 = delta_m_estimate(center, r0, 3, sigma, prior, model, Metric::D_G, opt);
  const double d4 = delta_m_estimate(center, r0, 4, sigma, prior, model, Metric::D_G, opt);
  return diamond(r0, d3, d4, opt.n_points, opt.n_dirs);
}

// Bound on the posterior mass outside the local ellipsoid.
inline double rho_bound(double diamond_r0, double x, double p_G_tilde) {
  if (!(diamond_r0 < 1)) throw InvalidArgument("rho_bound: diamond >= 1 makes the bound vacuous");
  const double e = std::exp(-(p_G_tilde + x) / 2);
  return e / ((1 - e) * (1 - diamond_r0));
}

inline bool r0_hypothesis(double C0, double r0, double p_G, double x) {
  return C0 * r0 >= 2 * std::sqrt(p_G) + std::sqrt(x);
}

struct BvmReport {
  double p_G_tilde = 0;
  double rho_r0 = 0;
  double lower_factor = 1;  // (1 - diamond) / (1 + diamond + rho)
  double upper_factor = 1;  // (1 + diamond) / ((1 - diamond)(1 - e^-x))
  double x = 0;
  SmoothnessReport smooth;
  bool r0_ok = true;  // C0 r0 >= 2 sqrt(p_G) + sqrt(x)
  bool up_to_constant = true;

  bool hypotheses_ok() const { return smooth.hypotheses_ok() && r0_ok; }
};

inline BvmReport bvm_report(const SmoothnessReport& s, double p_G_tilde, double x) {
  BvmReport b;
  b.smooth = s;
  b.p_G_tilde = p_G_tilde;
  b.x = x;
  b.rho_r0 = rho_bound(s.diamond, x, p_G_tilde);
  b.lower_factor = (1 - s.diamond) / (1 + s.diamond + b.rho_r0);
  b.upper_factor = (1 + s.diamond) / ((1 - s.diamond) * (1 - std::exp(-x)));
  b.r0_ok = r0_hypothesis(s.C0, s.r0, p_G_tilde, x);
  return b;
}

// Full report at the pMLE: r0 solves C0(r0) r0 = 2 sqrt(p_G) + sqrt(x) by fixed-point iteration.
inline BvmReport bvm_report(const ExtendedPoint& uhat, double sigma, const PriorSpec& prior,
                            const ForwardModel& model, double x, const DeltaOptions& opt = {}) {
  if (!(x > 0)) throw InvalidArgument("bvm_report: x must be positive");
  const double pG = effective_dimension(uhat, sigma, prior, model);
  const double target = 2 * std::sqrt(pG) + std::sqrt(x);
  double r0 = target;
  SmoothnessReport s = diamond(r0, uhat, sigma, prior, model, opt);
  for (int k = 0; k < 20 && s.C0 > 0.05; ++k) {
    const double next = target / s.C0;
    if (std::abs(next - r0) <= 1e-6 * r0) break;
    r0 = next;
    s = diamond(r0, uhat, sigma, prior, model, opt);
  }
  if (s.diamond >= 1) {
    BvmReport b;
    b.smooth = s;
    b.p_G_tilde = pG;
    b.x = x;
    b.rho_r0 = std::numeric_limits<double>::infinity();
    b.lower_factor = 0;
    b.upper_factor = std::numeric_limits<double>::infinity();
    b.r0_ok = r0_hypothesis(s.C0, s.r0, pG, x);
    return b;
  }
  return bvm_report(s, pG, x);
}

using SetPredicate = std::function<bool(const Vec&)>;

struct SandwichResult {
  double post_p = 0;
  double gauss_p = 0;
  double lower = 0;
  double upper = 1;
  double mc_se = 0;
  bool contained = true;  // post_p in [lower - 3 se, upper + 3 se]
};

// Empirical posterior and Gaussian probabilities of a centrally symmetric set of centered draws.
inline SandwichResult sandwich_probability(const SetPredicate& in_set, const SampleSet& post, const SampleSet& gauss,
                                           const Vec& center, const BvmReport& report) {
  auto frac = [&](const Mat& draws) {
    long hits = 0;
    for (Eigen::Index i = 0; i < draws.rows(); ++i)
      if (in_set(draws.row(i).transpose() - center)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(draws.rows());
  };
  SandwichResult r;
  r.post_p = frac(post.draws);
  r.gauss_p = frac(gauss.draws);
  r.lower = report.lower_factor * r.gauss_p - report.rho_r0;
  r.upper = report.upper_factor * r.gauss_p + report.rho_r0;
  const double n_post = std::max(1.0, std::min(post.ess_min, static_cast<double>(post.draws.rows())));
  const double se_post = std::sqrt(r.post_p * (1 - r.post_p) / n_post);
  const double se_gauss = std::sqrt(r.gauss_p * (1 - r.gauss_p) / gauss.draws.rows());
  r.mc_se = std::hypot(se_post, se_gauss);
  r.contained = r.post_p >= r.lower - 3 * r.mc_se && r.post_p <= r.upper + 3 * r.mc_se;
  return r;
}

// Nested family of centered symmetric sets {v : stat(v) <= t} over a list of thresholds.
struct NestedFamily {
  std::function<double(const Vec&)> stat;
  std::vector<double> thresholds;
};

// Ellipsoids ||cov^-1/2 v|| <= r at chi quantiles and coordinate boxes max |v_i| / sd_i <= t at
// probability levels (k + 0.5) / n for k = 0..n-1 under N(0, cov).
inline std::vector<NestedFamily> default_family(const Mat& cov, int n_balls = 50, int n_boxes = 50) {
  const auto d = cov.rows();
  const Mat W = spd_inv_sqrt(cov, "default_family");
  const Vec sd = cov.diagonal().array().sqrt();
  NestedFamily balls{[W](const Vec& v) { return (W * v).norm(); }, {}};
  const boost::math::chi_squared chi(static_cast<double>(d));
  for (int k = 0; k < n_balls; ++k) balls.thresholds.push_back(std::sqrt(quantile(chi, (k + 0.5) / n_balls)));
  NestedFamily boxes{[sd](const Vec& v) { return (v.array().abs() / sd.array()).maxCoeff(); }, {}};
  const boost::math::normal nrm;
  for (int k = 0; k < n_boxes; ++k) {
    const double prob = std::pow((k + 0.5) / n_boxes, 1.0 / static_cast<double>(d));
    boxes.thresholds.push_back(quantile(nrm, (1 + prob) / 2));
  }
  return {balls, boxes};
}

// max over the family of |P_post(A) - P_gauss(A)|; rows are already centered draws.
inline double symmetric_set_discrepancy(const Mat& post, const Mat& gauss, const std::vector<NestedFamily>& family) {
  auto stats = [](const Mat& x, const NestedFamily& fam) {
    std::vector<double> s(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) s[i] = fam.stat(x.row(i).transpose());
    std::sort(s.begin(), s.end());
    return s;
  };
  auto cdf = [](const std::vector<double>& s, double t) {
    return static_cast<double>(std::upper_bound(s.begin(), s.end(), t) - s.begin()) / static_cast<double>(s.size());
  };
  double worst = 0;
  for (const auto& fam : family) {
    const auto a = stats(post, fam), b = stats(gauss, fam);
    for (double t : fam.thresholds) worst = std::max(worst, std::abs(cdf(a, t) - cdf(b, t)));
  }
  return worst;
}

// f-block discrepancy of two sample sets centered at `center`, default family built from `cov_f`.
inline double symmetric_set_discrepancy(const SampleSet& post, const SampleSet& gauss, const Vec& center_f,
                                        const Mat& cov_f) {
  const Mat a = post.f_block().rowwise() - center_f.transpose();
  const Mat b = gauss.f_block().rowwise() - center_f.transpose();
  return symmetric_set_discrepancy(a, b, default_family(cov_f));
}

inline double null_band(double n) { return 3 * std::sqrt(std::log(100.0) / n); }

// Empirical (1 - alpha) quantile of ||Q ff_sqrt_inv gamma||.
inline double credible_radius(const Mat& Q, const Mat& ff_sqrt_inv, double alpha, long n_mc, std::uint64_t seed) {
  if (!(alpha > 0 && alpha < 1)) throw InvalidArgument("credible_radius: alpha must lie in (0,1)");
  if (n_mc < 1) throw InvalidArgument("credible_radius: n_mc must be positive");
  const Mat M = Q * ff_sqrt_inv;
  Rng rng(seed, 0xc4edULL);
  std::vector<double> norms(n_mc);
  for (long i = 0; i < n_mc; ++i) norms[i] = (M * rng.normal_vec(M.cols())).norm();
  return quantile(std::move(norms), 1 - alpha);
}

struct CoverageResult {
  double coverage = 0;
  double miscoverage = 0;
  double binomial_se = 0;
  double bias_ratio = 0;  // ||Q breveIF_G^-1 Q'|| ||G(f* - f0)||^2 / tr(B_QG)
  double r_alpha = 0;
  int n_rep = 0;
};

// Frequentist coverage of the credible ellipsoid {f : ||Q(f - f_hat)|| <= r_alpha} around the pMLE.
// Noise is standard Gaussian; radii come from the pMLE Hessian of each replication.
inline CoverageResult coverage_experiment(const Vec& fstar, double sigma, const PriorSpec& prior,
                                          const ForwardModel& model, const Mat& Q, double alpha, int n_rep,
                                          std::uint64_t seed, long n_mc = 20000) {
  if (n_rep < 100) throw InvalidArgument("coverage_experiment: n_rep must be >= 100");
  const Vec Af = model.apply(fstar);
  const auto q = model.dim_out();
  auto radius_at = [&](const ExtendedPoint& u, std::uint64_t s) {
    const InverseBlocks inv = invert_blocks(hessian_blocks(u, sigma, prior, model, true));
    return credible_radius(Q, spd_sqrt(inv.ff_inv), alpha, n_mc, s);
  };
  const bool lin = model.is_linear();
  const double r_lin = lin ? radius_at({prior.f0, prior.g0}, seed) : 0.0;

  std::vector<char> hit(n_rep, 0);
  parallel_for(static_cast<std::size_t>(n_rep), [&](std::size_t i) {
    Rng rng(seed, static_cast<std::uint64_t>(i), 0xc0feULL);
    const Vec Y = Af + sigma * rng.normal_vec(q);
    const ExtendedPoint uhat = joint_newton(Y, sigma, prior, model).upsilon_hat;
    const double r = lin ? r_lin : radius_at(uhat, derive_seed(seed, i, 7));
    hit[i] = (Q * (uhat.f - fstar)).norm() <= r;
  });

  CoverageResult out;
  out.n_rep = n_rep;
  out.r_alpha = r_lin;
  out.coverage = static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / n_rep;
  out.miscoverage = 1 - out.coverage;
  out.binomial_se = std::sqrt((1 - alpha) * alpha / n_rep);

  const ExtendedPoint ustar = population_optimum(fstar, sigma, prior, model).upsilon_hat;
  const Mat brev_ff = invert_blocks(breve_hessian(ustar.f, sigma, prior, model, true)).ff_inv;
  const Vec df = fstar - prior.f0;
  const double trB = b_QG(Q, ustar, sigma, prior, model, Mat::Identity(q, q)).trace();
  out.bias_ratio = op_norm(Q * brev_ff * Q.transpose()) * df.dot(prior.Gsq * df) / trB;
  return out;
}

}  // namespace calming
