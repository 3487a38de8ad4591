#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>

#include "calming/bvm.hpp"
#include "calming/experiment.hpp"
#include "calming/linear_minimax.hpp"
#include "calming/pmle.hpp"
#include "calming/posterior.hpp"
#include "calming/toolkit.hpp"

namespace calming {

namespace detail {
inline std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

inline Vec observe(const ExperimentConfig& c) {
  return generate_data(*c.model, c.fstar, c.sigma, c.noise, derive_seed(c.seed, 0, 0xdada), c.df, c.S);
}

inline ResultRecord record_for(const ExperimentConfig& c) {
  ResultRecord r;
  r.pipeline = c.pipeline;
  r.seed = c.seed;
  r.inputs_hash = inputs_hash(c.raw, c.seed);
  return r;
}
}  // namespace detail

inline ResultRecord run_pmle(const ExperimentConfig& c, const std::filesystem::path&) {
  ResultRecord r = detail::record_for(c);
  const Vec Y = detail::observe(c);
  PmleOptions opt;
  opt.max_iter = static_cast<int>(cfg::integer_or(c.raw.value("pmle", json::object()), "pmle", "max_iter", 500));
  const PmleResult nw = joint_newton(Y, c.sigma, c.prior, *c.model, opt);
  const PmleResult alt = alternate(Y, c.sigma, c.prior, *c.model, opt);
  r.metrics["loglik"] = nw.trace.back();
  r.metrics["newton_iterations"] = nw.iterations;
  r.metrics["alternate_iterations"] = alt.iterations;
  r.metrics["final_grad_norm"] = nw.final_grad_norm;
  r.metrics["solver_gap"] = (nw.upsilon_hat.stacked() - alt.upsilon_hat.stacked()).norm();
  r.metrics["effective_dimension"] = effective_dimension(nw.upsilon_hat, c.sigma, c.prior, *c.model);
  if (c.model->is_linear()) {
    const GaussianPosterior gp = exact_gaussian_posterior(Y, c.sigma, c.prior, *c.model);
    r.metrics["closed_form_gap"] = (gp.mean.stacked() - nw.upsilon_hat.stacked()).norm();
    r.extra["f_closed_form"] = detail::to_std(gp.mean.f);
  }
  r.extra["f_hat"] = detail::to_std(nw.upsilon_hat.f);
  r.extra["g_hat"] = detail::to_std(nw.upsilon_hat.g);
  r.flags["converged"] = nw.converged;
  return r;
}

inline ResultRecord run_sample(const ExperimentConfig& c, const std::filesystem::path& out) {
  ResultRecord r = detail::record_for(c);
  const Vec Y = detail::observe(c);
  const SampleSet s = mcmc_sample(Y, c.sigma, c.prior, *c.model, c.chain);
  write_draws_csv(out / "draws.csv", s);
  r.artifacts.push_back("draws.csv");
  r.metrics["accept_rate"] = s.accept_rate;
  r.metrics["ess_min"] = s.ess_min;
  r.metrics["n_draws"] = static_cast<double>(s.draws.rows());
  if (c.chain.n_chains > 1) {
    const Vec rhat = gelman_rubin(split_chains(s));
    r.metrics["rhat_max"] = rhat.maxCoeff();
    r.flags["rhat_below_1.05"] = rhat.maxCoeff() < 1.05;
  }
  r.extra["posterior"] = sample_summary(s);
  r.flags["ess_at_least_100"] = s.ess_min >= 100;
  return r;
}

inline ResultRecord run_bvm_check(const ExperimentConfig& c, const std::filesystem::path& out) {
  ResultRecord r = detail::record_for(c);
  const json sec = c.raw.value("bvm", json::object());
  const double n = 1 / (c.sigma * c.sigma);
  const double x = cfg::number_or(sec, "bvm", "x", 2 * std::log(std::max(n, 2.0)));
  DeltaOptions dopt;
  dopt.n_points = static_cast<int>(cfg::integer_or(sec, "bvm", "n_points", dopt.n_points));
  dopt.n_dirs = static_cast<int>(cfg::integer_or(sec, "bvm", "n_dirs", dopt.n_dirs));
  dopt.seed = derive_seed(c.seed, 0, 0xde17a);

  const Vec Y = detail::observe(c);
  const ExtendedPoint uhat = joint_newton(Y, c.sigma, c.prior, *c.model).upsilon_hat;
  const BvmReport rep = bvm_report(uhat, c.sigma, c.prior, *c.model, x, dopt);
  const SampleSet post = mcmc_sample(Y, c.sigma, c.prior, *c.model, c.chain);
  const SampleSet ref = gaussian_reference(uhat, c.sigma, c.prior, *c.model, post.draws.rows(),
                                           derive_seed(c.seed, 0, 0x9e7));
  write_draws_csv(out / "draws.csv", post);
  r.artifacts.push_back("draws.csv");
  const Mat ff = invert_blocks(hessian_blocks(uhat, c.sigma, c.prior, *c.model, true)).ff_inv;
  const double disc = symmetric_set_discrepancy(post, ref, uhat.f, ff);
  const double band = null_band(std::min(post.ess_min, static_cast<double>(post.draws.rows())));

  r.metrics["p_G_tilde"] = rep.p_G_tilde;
  r.metrics["r0"] = rep.smooth.r0;
  r.metrics["delta3"] = rep.smooth.delta3;
  r.metrics["delta4"] = rep.smooth.delta4;
  r.metrics["diamond"] = rep.smooth.diamond;
  r.metrics["C0"] = rep.smooth.C0;
  r.metrics["rho_r0"] = rep.rho_r0;
  r.metrics["lower_factor"] = rep.lower_factor;
  r.metrics["upper_factor"] = rep.upper_factor;
  r.metrics["x"] = x;
  r.metrics["discrepancy"] = disc;
  r.metrics["null_band"] = band;
  r.metrics["accept_rate"] = post.accept_rate;
  r.metrics["ess_min"] = post.ess_min;
  r.flags["diamond_le_half"] = rep.smooth.diamond_ok;
  r.flags["C0_ge_half"] = rep.smooth.C0_ok;
  r.flags["C0_r0_ge_2sqrt_pG_plus_sqrt_x"] = rep.r0_ok;
  r.extra["delta_convention"] = "delta_m includes the lambda/2 factor of the structural term";
  r.extra["up_to_constant"] = rep.up_to_constant;
  return r;
}

inline ResultRecord run_minimax_rate(const ExperimentConfig& c, const std::filesystem::path& out) {
  ResultRecord r = detail::record_for(c);
  const json& sec = cfg::at(c.raw, "", "minimax");
  const double s = cfg::number(cfg::at(sec, "minimax", "s"), "minimax.s");
  const double alpha = cfg::number_or(sec, "minimax", "alpha", 0.0);
  const double L = cfg::number_or(sec, "minimax", "L", 1.0);
  const double M = cfg::number_or(sec, "minimax", "M", 1.0);
  const long p_max = cfg::integer_or(sec, "minimax", "p_max", 10000);
  const Vec grid = cfg::vector(cfg::at(sec, "minimax", "sigma_sq"), "minimax.sigma_sq", -1);
  std::ofstream csv(out / "rates.csv");
  csv << "sigma_sq,J,mu,rate,tr\n";
  bool closed_ok = true;
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    RateReport rr;
    try {
      rr = sequence_rate(s, alpha, L, M, grid[k], p_max);
    } catch (const InvalidArgument& e) {
      throw ConfigError("minimax", e.what());
    }
    csv << fmt_double(grid[k]) << "," << rr.J << "," << fmt_double(rr.mu) << "," << fmt_double(rr.rate) << ","
        << fmt_double(rr.tr_F_mu_inv) << "\n";
    const std::string key = "sigma_sq[" + std::to_string(k) + "]";
    r.metrics[key + ".J"] = static_cast<double>(rr.J);
    r.metrics[key + ".rate"] = rr.rate;
    r.metrics[key + ".J_closed_form"] = rr.J_closed_form;
    closed_ok = closed_ok && rr.J >= rr.J_closed_form * (1 - 1e-12) && rr.J - 1 < rr.J_closed_form;
  }
  r.artifacts.push_back("rates.csv");
  r.flags["scan_matches_closed_form"] = closed_ok;
  return r;
}

// One calculator call of the form {"op": name, ...}.
inline json evaluate_bound(const json& q, const std::string& path) {
  const std::string op = cfg::string_or(q, path, "op", "");
  auto num = [&](const char* k) { return cfg::number(cfg::at(q, path, k), cfg::join(path, k)); };
  auto num_or = [&](const char* k, double d) { return cfg::number_or(q, path, k, d); };
  json o;
  o["op"] = op;
  try {
    if (op == "z_gauss") {
      const double p = num("p");
      const QuadFormStats st{p, num_or("v", std::sqrt(p)), num_or("lam", 1.0)};
      const ZValue z = z_gauss(st, num("x"));
      o["value"] = z.value;
      o["simplified"] = z.simplified;
    } else if (op == "chi2_bounds") {
      const Chi2Bounds b = chi2_bounds(static_cast<int>(num("p")), num("x"));
      o["upper_sq"] = b.upper_sq;
      o["upper_norm"] = b.upper_norm;
      o["lower_sq"] = b.lower_sq;
    } else if (op == "z_nongauss") {
      o["value"] = z_nongauss(num("p"), num("x"), num("g"));
    } else if (op == "z_nongauss_form") {
      const double p = num("p");
      const ZNonGaussForm z = z_nongauss_form({p, num_or("v", std::sqrt(p)), num_or("lam", 1.0)}, num("x"), num("g"));
      o["value"] = z.value;
      o["hyp_prelude"] = z.hyp_prelude;
    } else if (op == "nongauss_prob_bound") {
      o["value"] = nongauss_prob_bound(num("x"), num("g"));
    } else if (op == "gauss_integral_bound") {
      const GaussIntegralBound b = gauss_integral_bound(num("p_tau"), num("x"), num("C0"));
      o["r0_required"] = b.r0_required;
      o["numerator_bound"] = b.numerator_bound;
      o["denominator_bound"] = b.denominator_bound;
      o["up_to_constant"] = true;
    } else if (op == "rho_bound") {
      o["value"] = rho_bound(num_or("diamond", 0.0), num("x"), num("p_G"));
    } else if (op == "concavity_tail") {
      o["value"] = concavity_tail(num("r0"), num("r"), num("delta3"));
    } else {
      throw ConfigError(cfg::join(path, "op"), "unknown bound '" + op + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
  return o;
}

inline ResultRecord run_bounds(const ExperimentConfig& c, const std::filesystem::path&) {
  ResultRecord r = detail::record_for(c);
  const json& sec = cfg::at(c.raw, "", "bounds");
  const json list = sec.is_array() ? sec : json::array({sec});
  json results = json::array();
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string path = sec.is_array() ? "bounds[" + std::to_string(i) + "]" : "bounds";
    const json o = evaluate_bound(list[i], path);
    for (const auto& [k, v] : o.items())
      if (v.is_number()) r.metrics[std::to_string(i) + "." + o["op"].get<std::string>() + "." + k] = v.get<double>();
    results.push_back(o);
  }
  r.extra["results"] = results;
  return r;
}

inline ResultRecord run_coverage(const ExperimentConfig& c, const std::filesystem::path&) {
  ResultRecord r = detail::record_for(c);
  const json sec = c.raw.value("coverage", json::object());
  const double alpha = cfg::number_or(sec, "coverage", "alpha", 0.1);
  const int n_rep = static_cast<int>(cfg::integer_or(sec, "coverage", "n_rep", 500));
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("coverage.alpha", "must lie in (0,1)");
  if (n_rep < 100) throw ConfigError("coverage.n_rep", "must be at least 100");
  const auto p = c.model->dim_in();
  const Mat Q = sec.contains("Q") ? cfg::matrix(sec.at("Q"), "coverage.Q", c.base_dir) : Mat::Identity(p, p);
  if (Q.cols() != p) throw ConfigError("coverage.Q", "must have p columns");
  const CoverageResult cr = coverage_experiment(c.fstar, c.sigma, c.prior, *c.model, Q, alpha, n_rep, c.seed);
  r.metrics["coverage"] = cr.coverage;
  r.metrics["miscoverage"] = cr.miscoverage;
  r.metrics["binomial_se"] = cr.binomial_se;
  r.metrics["bias_ratio"] = cr.bias_ratio;
  r.metrics["r_alpha"] = cr.r_alpha;
  r.flags["coverage_ge_nominal_minus_3se"] = cr.coverage >= 1 - alpha - 3 * cr.binomial_se;
  return r;
}

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline const std::vector<std::string>& pipeline_names() {
  static const std::vector<std::string> names{"pmle", "sample", "bvm-check", "minimax-rate", "bounds", "coverage"};
  return names;
}

// Runs the configured pipeline and writes summary.json and metrics.csv (plus pipeline artifacts) to `out`.
inline ResultRecord run_pipeline(const ExperimentConfig& c, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  ResultRecord r;
  if (c.pipeline == "pmle") r = run_pmle(c, out);
  else if (c.pipeline == "sample") r = run_sample(c, out);
  else if (c.pipeline == "bvm-check") r = run_bvm_check(c, out);
  else if (c.pipeline == "minimax-rate") r = run_minimax_rate(c, out);
  else if (c.pipeline == "bounds") r = run_bounds(c, out);
  else if (c.pipeline == "coverage") r = run_coverage(c, out);
  else throw ConfigError("pipeline", "unknown pipeline '" + c.pipeline + "'");
  r.artifacts.push_back("metrics.csv");
  write_metrics_csv(out / "metrics.csv", r);
  write_summary(out / "summary.json", r, utc_timestamp());
  return r;
}

}  // namespace calming
