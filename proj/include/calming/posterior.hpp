#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "calming/parallel.hpp"
#include "calming/pmle.hpp"
#include "calming/stats.hpp"

namespace calming {

struct ChainConfig {
  long n_samples = 10000;  // iterations per chain, burn-in included
  long burn_in = 1000;
  long thinning = 1;
  double target_accept = 0.234;
  std::uint64_t master_seed = 1;
  int n_chains = 1;

  void validate() const {
    if (n_samples < 1 || burn_in < 0 || burn_in >= n_samples) throw InvalidArgument("ChainConfig: need 0 <= burn_in < n_samples");
    if (thinning < 1) throw InvalidArgument("ChainConfig: thinning must be >= 1");
    if (n_chains < 1) throw InvalidArgument("ChainConfig: n_chains must be >= 1");
    if (!(target_accept > 0 && target_accept < 1)) throw InvalidArgument("ChainConfig: target_accept in (0,1)");
  }
};

struct SampleSet {
  Mat draws;  // one row per draw: f_1..f_p, g_1..g_q
  double accept_rate = 1.0;
  double ess_min = 0;
  Eigen::Index p = 0;
  std::vector<Eigen::Index> chain_lengths;  // retained rows per chain, in order

  Vec mean() const { return col_mean(draws); }
  Mat cov() const { return sample_cov(draws); }
  Mat f_block() const { return draws.leftCols(p); }
};

struct GaussianPosterior {
  ExtendedPoint mean;
  Mat cov;
};

// Linear models have a constant Hessian, so the calming posterior is exactly Gaussian.
inline GaussianPosterior exact_gaussian_posterior(const Vec& Y, double sigma, const PriorSpec& prior,
                                                  const ForwardModel& model) {
  if (!model.is_linear()) throw InvalidArgument("exact_gaussian_posterior: linear model required");
  const ExtendedPoint base{prior.f0, prior.g0};
  const Mat H = hessian_blocks(base, sigma, prior, model, true).assembled();
  const Mat cov = spd_inverse(H, "exact_gaussian_posterior");
  const Vec mean = base.stacked() + cov * grad(base, Y, sigma, prior, model).stacked();
  return {ExtendedPoint::split(mean, model.dim_in()), cov};
}

namespace detail {
struct ChainOut {
  Mat kept;
  long accepted = 0;
  long proposed = 0;
};

inline ChainOut run_chain(const Vec& Y, double sigma, const PriorSpec& prior, const ForwardModel& model,
                          const ChainConfig& cfg, const Mat& chol, const Vec& start, int chain) {
  const auto p = model.dim_in();
  const auto d = start.size();
  Rng rng(cfg.master_seed, static_cast<std::uint64_t>(chain));
  Vec cur = start;
  double lcur = loglik(ExtendedPoint::split(cur, p), Y, sigma, prior, model);
  double log_scale = std::log(2.38 / std::sqrt(static_cast<double>(d)));
  ChainOut out;
  const long n_keep = (cfg.n_samples - cfg.burn_in) / cfg.thinning;
  out.kept.resize(n_keep, d);
  long row = 0;
  for (long t = 0; t < cfg.n_samples; ++t) {
    const Vec prop = cur + std::exp(log_scale) * (chol * rng.normal_vec(d));
    const double lprop = safe_loglik(ExtendedPoint::split(prop, p), Y, sigma, prior, model);
    const bool acc = std::log(rng.uniform()) < lprop - lcur;
    if (acc) {
      cur = prop;
      lcur = lprop;
    }
    if (t < cfg.burn_in) {
      // Robbins-Monro adaptation of the proposal scale, frozen after burn-in
      log_scale += ((acc ? 1.0 : 0.0) - cfg.target_accept) / std::pow(t + 1.0, 0.6);
      continue;
    }
    ++out.proposed;
    if (acc) ++out.accepted;
    if ((t - cfg.burn_in) % cfg.thinning == cfg.thinning - 1 && row < n_keep) out.kept.row(row++) = cur.transpose();
  }
  out.kept.conservativeResize(row, d);
  return out;
}
}  // namespace detail

// Preconditioned random-walk Metropolis over the extended parameter. Without a preconditioner the
// inverse penalized Hessian at the pMLE is used; chains start at the pMLE.
inline SampleSet mcmc_sample(const Vec& Y, double sigma, const PriorSpec& prior, const ForwardModel& model,
                             const ChainConfig& cfg, std::optional<Mat> precond = std::nullopt) {
  cfg.validate();
  prior.validate(model.dim_in(), model.dim_out());
  const auto d = model.dim_in() + model.dim_out();
  const PmleResult fit = joint_newton(Y, sigma, prior, model);
  Mat P;
  if (precond) {
    P = *precond;
    require_dim(P.rows(), d, "precond");
    SpdEig check(P, "mcmc_sample precond");
  } else {
    try {
      P = spd_inverse(hessian_blocks(fit.upsilon_hat, sigma, prior, model, true).assembled());
    } catch (const SingularityError&) {
      P = spd_inverse(breve_hessian(fit.upsilon_hat.f, sigma, prior, model, true).assembled());
    }
  }
  const Mat chol = Eigen::LLT<Mat>(symmetrize(P)).matrixL();
  const Vec start = fit.upsilon_hat.stacked();

  std::vector<detail::ChainOut> outs(cfg.n_chains);
  parallel_for(static_cast<std::size_t>(cfg.n_chains), [&](std::size_t c) {
    outs[c] = detail::run_chain(Y, sigma, prior, model, cfg, chol, start, static_cast<int>(c));
  });

  SampleSet s;
  s.p = model.dim_in();
  long total = 0, acc = 0, prop = 0;
  for (const auto& o : outs) {
    total += o.kept.rows();
    acc += o.accepted;
    prop += o.proposed;
  }
  if (acc == 0)
    throw SamplerStuck("mcmc_sample: no proposal accepted after burn-in (" + std::to_string(prop) +
                       " proposals); check the preconditioner scale");
  s.draws.resize(total, d);
  long r = 0;
  for (const auto& o : outs) {
    s.draws.middleRows(r, o.kept.rows()) = o.kept;
    s.chain_lengths.push_back(o.kept.rows());
    r += o.kept.rows();
  }
  s.accept_rate = prop ? static_cast<double>(acc) / prop : 0.0;
  s.ess_min = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < d; ++j) {
    double e = 0;
    long off = 0;
    for (const auto& o : outs) {
      e += ess_1d(s.draws.col(j).segment(off, o.kept.rows()));
      off += o.kept.rows();
    }
    s.ess_min = std::min(s.ess_min, e);
  }
  return s;
}

// Per-chain slices of a multi-chain sample set.
inline std::vector<Mat> split_chains(const SampleSet& s) {
  std::vector<Mat> out;
  long off = 0;
  for (auto len : s.chain_lengths) {
    out.push_back(s.draws.middleRows(off, len));
    off += len;
  }
  return out;
}

// iid draws from N(u_hat, IF_G(u_hat)^-1) through the symmetric inverse square root.
inline SampleSet gaussian_reference(const ExtendedPoint& uhat, double sigma, const PriorSpec& prior,
                                    const ForwardModel& model, long n, std::uint64_t seed) {
  const Mat root = spd_inv_sqrt(hessian_blocks(uhat, sigma, prior, model, true).assembled(), "gaussian_reference");
  const auto d = root.rows();
  Rng rng(seed, 0x9a055ULL);
  SampleSet s;
  s.p = model.dim_in();
  s.draws.resize(n, d);
  const Vec c = uhat.stacked();
  for (long i = 0; i < n; ++i) s.draws.row(i) = (c + root * rng.normal_vec(d)).transpose();
  s.accept_rate = 1.0;
  s.ess_min = static_cast<double>(n);
  s.chain_lengths = {n};
  return s;
}

enum class CenterKind { posterior_mean, map };

struct SequentialStep {
  ExtendedPoint center;
  SampleSet samples;
  PriorSpec prior;  // prior used at this step
};

// Sequential Bayes: each step uses fresh data and the prior recentered at (f_k, A(f_k)).
inline std::vector<SequentialStep> sequential_bayes(const std::function<Vec(int)>& data_source, double sigma,
                                                    const PriorSpec& prior0, const ForwardModel& model, int K,
                                                    const ChainConfig& cfg,
                                                    CenterKind center = CenterKind::posterior_mean) {
  std::vector<SequentialStep> out;
  PriorSpec prior = prior0;
  for (int k = 0; k < K; ++k) {
    const Vec Y = data_source(k);
    ChainConfig ck = cfg;
    ck.master_seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(k), 0x5e9ULL);
    SequentialStep step;
    step.prior = prior;
    step.samples = mcmc_sample(Y, sigma, prior, model, ck);
    if (center == CenterKind::map)
      step.center = joint_newton(Y, sigma, prior, model).upsilon_hat;
    else
      step.center = ExtendedPoint::split(step.samples.mean(), model.dim_in());
    prior.f0 = step.center.f;
    prior.g0 = model.apply(step.center.f);
    out.push_back(std::move(step));
  }
  return out;
}

}  // namespace calming
