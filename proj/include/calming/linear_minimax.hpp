#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "calming/calming_core.hpp"
#include "calming/parallel.hpp"
#include "calming/rng.hpp"

namespace calming {

// Linear inverse problem Y = A f + sigma eps with smoothness class ||G f||^2 <= M.
struct LinearProblem {
  Mat A;
  Mat Gsq;
  double sigma = 1;
  double M = 1;
  Mat Q;  // target map; empty means identity

  Eigen::Index p() const { return A.cols(); }
  Mat target() const { return Q.size() ? Q : Mat::Identity(p(), p()); }
  Mat F_mu(double mu) const { return symmetrize(A.transpose() * A / (sigma * sigma) + mu * Gsq); }
  void validate() const {
    require_dim(Gsq.rows(), p(), "LinearProblem Gsq");
    require_dim(Gsq.cols(), p(), "LinearProblem Gsq");
    if (Q.size()) require_dim(Q.cols(), p(), "LinearProblem Q");
    if (!(sigma > 0) || !(M > 0)) throw InvalidArgument("LinearProblem: sigma and M must be positive");
  }
};

inline Vec pmle_linear(const Vec& Y, const LinearProblem& prob, double mu) {
  prob.validate();
  require_dim(Y.size(), prob.A.rows(), "pmle_linear data");
  const SpdEig F(prob.F_mu(mu), "pmle_linear F_mu");
  return F.inverse() * (prob.A.transpose() * Y) / (prob.sigma * prob.sigma);
}

namespace detail {
struct TraceNorm {
  double tr;
  double norm;
};
inline TraceNorm q_finv_q(const LinearProblem& prob, double mu) {
  const Mat Q = prob.target();
  const Mat X = symmetrize(Q * spd_inverse(prob.F_mu(mu), "F_mu") * Q.transpose());
  return {X.trace(), max_eig(X)};
}
}  // namespace detail

// Solves M mu ||Q F_mu^-1 Q'|| = tr(Q F_mu^-1 Q') by bisection on log mu over [1e-8, 1e12].
inline double select_mu(const LinearProblem& prob) {
  prob.validate();
  auto h = [&](double lmu) {
    const double mu = std::exp(lmu);
    const auto tn = detail::q_finv_q(prob, mu);
    return (prob.M * mu * tn.norm - tn.tr) / tn.tr;
  };
  double lo = std::log(1e-8), hi = std::log(1e12);
  double hlo = h(lo), hhi = h(hi);
  if (!(hlo < 0 && hhi > 0)) throw BracketExhausted("select_mu: no sign change on [1e-8, 1e12]");
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double hm = h(mid);
    if (std::abs(hm) < 1e-13 || hi - lo < 1e-15) break;
    (hm < 0 ? lo : hi) = mid;
  }
  return std::exp(mid);
}

inline double select_mu_residual(const LinearProblem& prob, double mu) {
  const auto tn = detail::q_finv_q(prob, mu);
  return std::abs(prob.M * mu * tn.norm - tn.tr) / tn.tr;
}

struct RateReport {
  long J = 0;
  double mu = 0;
  double rate = 0;          // M g_J^-2
  double tr_F_mu_inv = 0;   // tr(Q F_mu^-1 Q')
  double risk_bound = 0;    // 3 tr(Q F_mu^-1 Q')
  double prob_bound = 0;    // exp(-M mu / 2)
  double J_closed_form = 0;
  double rate_closed_form = 0;
};

inline RateReport risk_bound(const LinearProblem& prob, double mu) {
  RateReport r;
  r.mu = mu;
  r.tr_F_mu_inv = detail::q_finv_q(prob, mu).tr;
  r.risk_bound = 3 * r.tr_F_mu_inv;
  r.prob_bound = std::exp(-prob.M * mu / 2);
  return r;
}

// Diagonal sequence model g_j^2 = j^(2s), a_j^2 = L j^(-2 alpha). J is the smallest index with
// J g_J^2 >= M sigma^-2 a_J^2.
inline RateReport sequence_rate(double s, double alpha, double L, double M, double sigma_sq, long p_max) {
  if (!(s > 0.5)) throw InvalidArgument("sequence_rate: s must exceed 1/2");
  if (!(L > 0) || !(M > 0) || !(sigma_sq > 0) || p_max < 1) throw InvalidArgument("sequence_rate: bad parameters");
  const double e = 2 * s + 2 * alpha + 1;
  const double target = M * L / sigma_sq;
  long J = 0;
  for (long j = 1; j <= p_max; ++j) {
    // j g_j^2 / a_j^2 = j^(2s + 2alpha + 1) / L; relative slack absorbs rounding in sigma_sq
    if (std::pow(static_cast<double>(j), e) >= target * (1 - 1e-12)) {
      J = j;
      break;
    }
  }
  if (J == 0) throw TruncationError("sequence_rate: J exceeds p_max = " + std::to_string(p_max));
  RateReport r;
  r.J = J;
  r.mu = static_cast<double>(J) / M;
  r.rate = M * std::pow(static_cast<double>(J), -2 * s);
  r.J_closed_form = std::pow(target, 1 / e);
  r.rate_closed_form = M * std::pow(target, -2 * s / e);
  double tr = 0;
  for (long j = 1; j <= p_max; ++j) {
    const double jj = static_cast<double>(j);
    tr += 1 / (L * std::pow(jj, -2 * alpha) / sigma_sq + r.mu * std::pow(jj, 2 * s));
  }
  r.tr_F_mu_inv = tr;
  r.risk_bound = 3 * tr;
  r.prob_bound = std::exp(-M * r.mu / 2);
  return r;
}

// Diagonal LinearProblem for the sequence model truncated at p.
inline LinearProblem sequence_problem(double s, double alpha, double L, double M, double sigma_sq, long p) {
  LinearProblem prob;
  Vec a(p), g(p);
  for (long j = 0; j < p; ++j) {
    const double jj = static_cast<double>(j + 1);
    a[j] = std::sqrt(L) * std::pow(jj, -alpha);
    g[j] = std::pow(jj, 2 * s);
  }
  prob.A = a.asDiagonal();
  prob.Gsq = g.asDiagonal();
  prob.sigma = std::sqrt(sigma_sq);
  prob.M = M;
  return prob;
}

struct AjValue {
  double value = 0;
  bool singular = false;
};

// a_j^2 = 1 / ||(A_j' A_j)^-1|| with A_j = A restricted to the span of the j smallest eigenvectors of Gsq.
inline AjValue noncommutative_aj(const Mat& A, const Mat& Gsq, long j) {
  if (j < 1 || j > A.cols()) throw InvalidArgument("noncommutative_aj: j out of range");
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(Gsq));
  const Mat Aj = A * es.eigenvectors().leftCols(j);
  const double lo = min_eig(symmetrize(Aj.transpose() * Aj));
  const double hi = max_eig(symmetrize(Aj.transpose() * Aj));
  if (!(lo > kEigFloor * std::max(hi, 1.0))) return {0.0, true};
  return {lo, false};
}

struct BlockRegularity {
  double lower_margin;  // min eig(F^-1 - C^-1 block^-1)
  double upper_margin;  // min eig(C block^-1 - F^-1)
  double C_hat;
};

// Smallest C >= 1 with C^-1 block(F_J, F_Jc)^-1 <= F^-1 <= C block(F_J, F_Jc)^-1 in the eigenbasis of Gsq.
// Computed from the extreme generalized eigenvalues rather than by search.
inline BlockRegularity block_regularity_check(const LinearProblem& prob, double mu, long J) {
  prob.validate();
  const auto p = prob.p();
  if (J < 1 || J >= p) throw InvalidArgument("block_regularity_check: need 1 <= J < p");
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(prob.Gsq));
  const Mat V = es.eigenvectors();
  const Mat F = symmetrize(V.transpose() * prob.F_mu(mu) * V);
  Mat blk = Mat::Zero(p, p);
  blk.topLeftCorner(J, J) = F.topLeftCorner(J, J);
  blk.bottomRightCorner(p - J, p - J) = F.bottomRightCorner(p - J, p - J);
  const Mat Finv = spd_inverse(F, "block_regularity F"), Binv = spd_inverse(blk, "block_regularity block");
  const Mat Bh = spd_sqrt(blk);
  const Mat K = symmetrize(Bh * Finv * Bh);
  const double C = std::max({1.0, max_eig(K), 1 / min_eig(K)});
  return {min_eig(symmetrize(Finv - Binv / C)), min_eig(symmetrize(C * Binv - Finv)), C};
}

// C_hat in tr(F^-1 / ||F^-1||) <= C tr(F^-2 / ||F^-2||).
inline double lower_bound_hypothesis(const LinearProblem& prob, double mu) {
  const Mat Fi = spd_inverse(prob.F_mu(mu), "lower_bound_hypothesis");
  const Mat Fi2 = Fi * Fi;
  return (Fi.trace() / max_eig(Fi)) / (Fi2.trace() / max_eig(symmetrize(Fi2)));
}

struct MinimaxMc {
  double worst_risk = 0;      // max over boundary functions of mean ||Q(f_mu - f)||^2
  double risk_at_zero = 0;
  double trace = 0;           // tr(Q F_mu^-1 Q')
  double worst_exceed = 0;    // max over boundary functions of P(loss^2 > 3 tr)
  double exceed_se = 0;
  std::vector<double> risks;  // per boundary function
};

// Boundary functions with ||G f||^2 = M: top right singular directions of Q F_mu^-1 G plus the
// smallest eigenvectors of Gsq, up to n_funcs in total.
inline std::vector<Vec> boundary_functions(const LinearProblem& prob, double mu, int n_funcs = 20) {
  const auto p = prob.p();
  const Mat G = spd_sqrt(prob.Gsq, "boundary G"), Ginv = spd_inv_sqrt(prob.Gsq, "boundary G");
  const Mat K = prob.target() * spd_inverse(prob.F_mu(mu)) * G;
  Eigen::JacobiSVD<Mat> svd(K, Eigen::ComputeThinV);
  std::vector<Vec> out;
  const long n_svd = std::min<long>(n_funcs / 2, svd.matrixV().cols());
  for (long k = 0; k < n_svd; ++k) out.push_back(std::sqrt(prob.M) * Ginv * svd.matrixV().col(k));
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(prob.Gsq));
  for (long k = 0; k < p && static_cast<long>(out.size()) < n_funcs; ++k)
    out.push_back(std::sqrt(prob.M / es.eigenvalues()[k]) * es.eigenvectors().col(k));
  return out;
}

inline MinimaxMc minimax_mc(const LinearProblem& prob, double mu, int n_rep, std::uint64_t seed, int n_funcs = 20) {
  if (n_rep < 100) throw InvalidArgument("minimax_mc: n_rep must be >= 100");
  prob.validate();
  const auto q = prob.A.rows();
  const Mat Q = prob.target();
  const Mat S = spd_inverse(prob.F_mu(mu), "minimax_mc") * prob.A.transpose() / (prob.sigma * prob.sigma);
  const Mat QS = Q * S;
  MinimaxMc out;
  out.trace = detail::q_finv_q(prob, mu).tr;
  const double thr = 3 * out.trace;

  // Common noise for all functions; only the deterministic part Q(S A - I) f changes.
  Mat noise(n_rep, Q.rows());
  for (int i = 0; i < n_rep; ++i) {
    Rng rng(seed, static_cast<std::uint64_t>(i));
    noise.row(i) = (prob.sigma * (QS * rng.normal_vec(q))).transpose();
  }
  auto stats = [&](const Vec& f) {
    const Vec bias = Q * (S * (prob.A * f) - f);
    double mean = 0;
    long exceed = 0;
    for (int i = 0; i < n_rep; ++i) {
      const double l = (noise.row(i).transpose() + bias).squaredNorm();
      mean += l;
      if (l > thr) ++exceed;
    }
    return std::pair{mean / n_rep, static_cast<double>(exceed) / n_rep};
  };
  out.risk_at_zero = stats(Vec::Zero(prob.p())).first;
  for (const Vec& f : boundary_functions(prob, mu, n_funcs)) {
    const auto [risk, ex] = stats(f);
    out.risks.push_back(risk);
    out.worst_risk = std::max(out.worst_risk, risk);
    out.worst_exceed = std::max(out.worst_exceed, ex);
  }
  const double pb = std::exp(-prob.M * mu / 2);
  out.exceed_se = std::sqrt(pb * (1 - pb) / n_rep);
  return out;
}

// Profile of the linear calming problem in f: a ridge problem with data weight W = lambda sigma^-2 H^-1,
// H = (sigma^-2 + lambda) I + Gamma^2, and penalty G^2 + lambda A' Gamma^2 H^-1 A around f0.
// Requires g0 = A f0. The calming f-estimate is offset + pmle_linear(Y, problem, 1).
struct CalmingRidge {
  LinearProblem problem;
  Vec Y;
  Vec offset;
};

inline CalmingRidge calming_equivalent_problem(const Mat& A, double sigma, const PriorSpec& prior, const Vec& Y) {
  const auto p = A.cols(), q = A.rows();
  prior.validate(p, q);
  if ((prior.g0 - A * prior.f0).norm() > 1e-10 * (1 + prior.g0.norm()))
    throw ContractError("calming_equivalent_problem: requires g0 = A f0");
  const double s2 = 1 / (sigma * sigma), lam = prior.lambda;
  const Mat H = (s2 + lam) * Mat::Identity(q, q) + prior.Gammasq;
  const Mat Hinv = spd_inverse(H, "calming_equivalent H");
  const Mat Wh = spd_sqrt(lam * s2 * Hinv);
  CalmingRidge out;
  // sigma^-2 A'' A'' = A' W A with A'' = sigma W^(1/2) A
  out.problem.A = sigma * Wh * A;
  out.problem.Gsq = symmetrize(prior.Gsq + lam * A.transpose() * prior.Gammasq * Hinv * A);
  out.problem.sigma = sigma;
  out.problem.M = 1;
  out.Y = sigma * Wh * (Y - A * prior.f0);
  out.offset = prior.f0;
  return out;
}

}  // namespace calming
