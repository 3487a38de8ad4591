#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "calming/calming_core.hpp"
#include "calming/forward_model.hpp"
#include "calming/posterior.hpp"
#include "calming/rng.hpp"
#include "calming/version.hpp"

namespace calming {

using json = nlohmann::json;

// Config problem at a dotted field path such as "noise.sigma".
struct ConfigError : Error {
  std::string field;
  ConfigError(std::string f, const std::string& msg) : Error(f + ": " + msg), field(std::move(f)) {}
};

enum class NoiseKind { gaussian, scaled_student_t };

// Y = A(f*) + sigma S eps, eps iid with unit variance. sigma = 0 gives A(f*) exactly.
inline Vec generate_data(const ForwardModel& model, const Vec& fstar, double sigma, NoiseKind kind,
                         std::uint64_t seed, double df = 5.0, const Mat& S = Mat()) {
  if (!(sigma >= 0)) throw InvalidArgument("generate_data: sigma must be nonnegative");
  const Vec Af = model.apply(fstar);
  if (sigma == 0) return Af;
  const auto q = model.dim_out();
  Rng rng(seed, 0xda7aULL);
  Vec eps(q);
  if (kind == NoiseKind::gaussian) {
    eps = rng.normal_vec(q);
  } else {
    if (!(df > 2)) throw InvalidArgument("generate_data: student t needs df > 2 for unit variance");
    std::student_t_distribution<double> t(df);
    const double scale = std::sqrt((df - 2) / df);
    for (Eigen::Index i = 0; i < q; ++i) eps[i] = scale * t(rng.engine());
  }
  if (S.size()) {
    require_dim(S.rows(), q, "noise S");
    eps = S * eps;
  }
  return Af + sigma * eps;
}

namespace cfg {

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline const json& at(const json& j, const std::string& path, const std::string& key) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(join(path, key), "missing required field");
  return j.at(key);
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  return j.get<double>();
}

inline double number_or(const json& j, const std::string& path, const std::string& key, double dflt) {
  return j.is_object() && j.contains(key) ? number(j.at(key), join(path, key)) : dflt;
}

inline long integer_or(const json& j, const std::string& path, const std::string& key, long dflt) {
  if (!(j.is_object() && j.contains(key))) return dflt;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(join(path, key), "expected an integer");
  return v.get<long>();
}

inline std::string string_or(const json& j, const std::string& path, const std::string& key, std::string dflt) {
  if (!(j.is_object() && j.contains(key))) return dflt;
  const json& v = j.at(key);
  if (!v.is_string()) throw ConfigError(join(path, key), "expected a string");
  return v.get<std::string>();
}

// Header-free row-major CSV.
inline Mat read_csv(const std::filesystem::path& file, const std::string& path) {
  std::ifstream in(file);
  if (!in) throw ConfigError(path, "cannot open CSV file " + file.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError(path, file.string() + " line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ConfigError(path, file.string() + " line " + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(path, "empty CSV file " + file.string());
  Mat m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(i, k) = rows[i][k];
  return m;
}

// Matrix as nested array, {"csv": file}, {"identity": n, "scale": c} or {"diag": [...]}.
inline Mat matrix(const json& j, const std::string& path, const std::filesystem::path& base) {
  if (j.is_array()) {
    if (j.empty() || !j.front().is_array()) throw ConfigError(path, "expected an array of rows");
    Mat m(j.size(), j.front().size());
    for (std::size_t i = 0; i < j.size(); ++i) {
      const std::string rp = path + "[" + std::to_string(i) + "]";
      if (!j[i].is_array() || j[i].size() != j.front().size()) throw ConfigError(rp, "ragged row");
      for (std::size_t k = 0; k < j[i].size(); ++k) m(i, k) = number(j[i][k], rp + "[" + std::to_string(k) + "]");
    }
    return m;
  }
  if (j.is_object() && j.contains("csv")) {
    const json& f = j.at("csv");
    if (!f.is_string()) throw ConfigError(join(path, "csv"), "expected a file path");
    std::filesystem::path file = f.get<std::string>();
    if (file.is_relative()) file = base / file;
    return read_csv(file, join(path, "csv"));
  }
  if (j.is_object() && j.contains("identity")) {
    const long n = integer_or(j, path, "identity", 0);
    if (n < 1) throw ConfigError(join(path, "identity"), "size must be positive");
    return number_or(j, path, "scale", 1.0) * Mat::Identity(n, n);
  }
  if (j.is_object() && j.contains("diag")) {
    const json& d = j.at("diag");
    if (!d.is_array() || d.empty()) throw ConfigError(join(path, "diag"), "expected a nonempty array");
    Vec v(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) v[i] = number(d[i], join(path, "diag") + "[" + std::to_string(i) + "]");
    return v.asDiagonal();
  }
  throw ConfigError(path, "expected a matrix (array of rows, csv, identity or diag)");
}

// Vector as array or {"fill": value, "size": n}.
inline Vec vector(const json& j, const std::string& path, Eigen::Index expect) {
  Vec v;
  if (j.is_array()) {
    v.resize(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v[i] = number(j[i], path + "[" + std::to_string(i) + "]");
  } else if (j.is_number()) {
    v = Vec::Constant(expect, j.get<double>());
  } else if (j.is_object() && j.contains("fill")) {
    v = Vec::Constant(integer_or(j, path, "size", expect), number(j.at("fill"), join(path, "fill")));
  } else {
    throw ConfigError(path, "expected a vector");
  }
  if (expect >= 0 && v.size() != expect)
    throw ConfigError(path, "length " + std::to_string(v.size()) + " but expected " + std::to_string(expect));
  return v;
}

}  // namespace cfg

struct ExperimentConfig {
  std::string pipeline;
  std::uint64_t seed = 1;
  ModelPtr model;
  PriorSpec prior;
  double sigma = 1;
  NoiseKind noise = NoiseKind::gaussian;
  double df = 5;
  Mat S;
  Vec fstar;
  ChainConfig chain;
  json raw;  // full document, for pipeline-specific sections
  std::filesystem::path base_dir;
};

inline ModelPtr parse_model(const json& j, const std::filesystem::path& base) {
  const std::string kind = cfg::string_or(j, "model", "kind", "");
  if (kind == "linear") return std::make_shared<LinearModel>(cfg::matrix(cfg::at(j, "model", "matrix"), "model.matrix", base));
  if (kind == "exp_composed")
    return std::make_shared<ExpComposedModel>(cfg::matrix(cfg::at(j, "model", "matrix"), "model.matrix", base));
  if (kind == "diagonal_power") {
    const long p = cfg::integer_or(j, "model", "p", 0);
    if (p < 1) throw ConfigError("model.p", "must be a positive integer");
    const double L = cfg::number_or(j, "model", "L", 1.0);
    const double alpha = cfg::number_or(j, "model", "alpha", 0.0);
    if (!(L > 0)) throw ConfigError("model.L", "must be positive");
    if (!(alpha >= 0)) throw ConfigError("model.alpha", "must be nonnegative");
    return std::make_shared<DiagonalPowerModel>(p, L, alpha);
  }
  throw ConfigError("model.kind", "expected one of linear, diagonal_power, exp_composed; got '" + kind + "'");
}

// Parses and validates everything the pipelines share. Pipeline-only sections stay in `raw`.
inline ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base = ".") {
  ExperimentConfig c;
  c.raw = doc;
  c.base_dir = base;
  if (!doc.is_object()) throw ConfigError("<root>", "expected a JSON object");
  c.pipeline = cfg::string_or(doc, "", "pipeline", "");
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned() && !doc.at("seed").is_number_integer())
      throw ConfigError("seed", "expected a nonnegative integer");
    c.seed = doc.at("seed").get<std::uint64_t>();
  }
  // The tail-bound calculator needs no model.
  if (c.pipeline == "bounds" || c.pipeline == "minimax-rate") return c;

  c.model = parse_model(cfg::at(doc, "", "model"), base);
  const auto p = c.model->dim_in(), q = c.model->dim_out();

  const json& noise = cfg::at(doc, "", "noise");
  c.sigma = cfg::number(cfg::at(noise, "noise", "sigma"), "noise.sigma");
  if (!(c.sigma > 0)) throw ConfigError("noise.sigma", "must be positive");
  const std::string dist = cfg::string_or(noise, "noise", "distribution", "gaussian");
  if (dist == "gaussian") {
    c.noise = NoiseKind::gaussian;
  } else if (dist == "scaled_student_t") {
    c.noise = NoiseKind::scaled_student_t;
    c.df = cfg::number_or(noise, "noise", "df", 5.0);
    if (!(c.df > 2)) throw ConfigError("noise.df", "must exceed 2");
  } else {
    throw ConfigError("noise.distribution", "expected gaussian or scaled_student_t");
  }
  if (noise.contains("S")) {
    c.S = cfg::matrix(noise.at("S"), "noise.S", base);
    if (c.S.rows() != q || c.S.cols() != q) throw ConfigError("noise.S", "must be q x q");
  }

  const json& pr = cfg::at(doc, "", "prior");
  c.prior.f0 = pr.contains("f0") ? cfg::vector(pr.at("f0"), "prior.f0", p) : Vec::Zero(p);
  c.prior.Gsq = cfg::matrix(cfg::at(pr, "prior", "Gsq"), "prior.Gsq", base);
  if (c.prior.Gsq.rows() != p || c.prior.Gsq.cols() != p) throw ConfigError("prior.Gsq", "must be p x p");
  const json lam = pr.contains("lambda") ? pr.at("lambda") : json("sigma^-2");
  if (lam.is_string()) {
    if (lam.get<std::string>() != "sigma^-2") throw ConfigError("prior.lambda", "expected a number or \"sigma^-2\"");
    c.prior.lambda = 1 / (c.sigma * c.sigma);
  } else {
    c.prior.lambda = cfg::number(lam, "prior.lambda");
    if (!(c.prior.lambda > 0)) throw ConfigError("prior.lambda", "must be positive");
  }
  c.prior.g0 = pr.contains("g0") ? cfg::vector(pr.at("g0"), "prior.g0", q) : c.model->apply(c.prior.f0);
  const std::string gmode = cfg::string_or(pr, "prior", "gamma_mode", pr.contains("Gammasq") ? "explicit" : "pushforward");
  if (gmode == "explicit") {
    c.prior.Gammasq = cfg::matrix(cfg::at(pr, "prior", "Gammasq"), "prior.Gammasq", base);
    if (c.prior.Gammasq.rows() != q || c.prior.Gammasq.cols() != q) throw ConfigError("prior.Gammasq", "must be q x q");
  } else if (gmode == "pushforward" || gmode == "linear_pullback") {
    try {
      c.prior.Gammasq = coordinate_gamma(*c.model, c.prior.f0, c.prior.Gsq,
                                         gmode == "pushforward" ? GammaMode::pushforward : GammaMode::linear_pullback);
    } catch (const Error& e) {
      throw ConfigError("prior.gamma_mode", e.what());
    }
  } else {
    throw ConfigError("prior.gamma_mode", "expected explicit, pushforward or linear_pullback");
  }
  try {
    c.prior.validate(p, q);
  } catch (const Error& e) {
    throw ConfigError("prior", e.what());
  }

  c.fstar = doc.contains("truth") ? cfg::vector(cfg::at(doc.at("truth"), "truth", "fstar"), "truth.fstar", p)
                                  : c.prior.f0;

  const json sm = doc.contains("sampler") ? doc.at("sampler") : json::object();
  c.chain.n_samples = cfg::integer_or(sm, "sampler", "n_samples", 20000);
  c.chain.burn_in = cfg::integer_or(sm, "sampler", "burn_in", 2000);
  c.chain.thinning = cfg::integer_or(sm, "sampler", "thinning", 1);
  c.chain.n_chains = static_cast<int>(cfg::integer_or(sm, "sampler", "n_chains", 2));
  c.chain.target_accept = cfg::number_or(sm, "sampler", "target_accept", 0.234);
  c.chain.master_seed = c.seed;
  try {
    c.chain.validate();
  } catch (const Error& e) {
    throw ConfigError("sampler", e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("<file>", "cannot open " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<json>", std::string("parse error: ") + e.what());
  }
  return parse_config(doc, file.parent_path().empty() ? std::filesystem::path(".") : file.parent_path());
}

// FNV-1a over a canonical dump.
inline std::string inputs_hash(const json& doc, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL;
  const std::string s = doc.dump() + "#" + std::to_string(seed);
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct ResultRecord {
  std::string pipeline;
  std::string inputs_hash;
  std::uint64_t seed = 0;
  std::map<std::string, double> metrics;
  std::map<std::string, bool> flags;  // hypothesis flags; any false gives exit code 2
  std::vector<std::string> artifacts;
  json extra = json::object();

  bool flags_ok() const {
    for (const auto& [k, v] : flags)
      if (!v) return false;
    return true;
  }

  // Everything except the timestamp, which is appended last by write_summary.
  json to_json() const {
    json j;
    j["pipeline"] = pipeline;
    j["version"] = kVersion;
    j["seed"] = seed;
    j["inputs_hash"] = inputs_hash;
    j["metrics"] = metrics;
    j["flags"] = flags;
    j["artifacts"] = artifacts;
    j["details"] = extra;
    return j;
  }
};

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_draws_csv(const std::filesystem::path& file, const SampleSet& s) {
  std::ofstream out(file);
  const auto d = s.draws.cols();
  for (Eigen::Index k = 0; k < d; ++k)
    out << (k ? "," : "") << (k < s.p ? "f_" + std::to_string(k + 1) : "g_" + std::to_string(k - s.p + 1));
  out << "\n";
  for (Eigen::Index i = 0; i < s.draws.rows(); ++i) {
    for (Eigen::Index k = 0; k < d; ++k) out << (k ? "," : "") << fmt_double(s.draws(i, k));
    out << "\n";
  }
}

inline json sample_summary(const SampleSet& s) {
  const Vec m = s.mean();
  const Mat c = s.cov();
  json j;
  j["mean"] = std::vector<double>(m.data(), m.data() + m.size());
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    std::vector<double> r(c.cols());
    for (Eigen::Index k = 0; k < c.cols(); ++k) r[k] = c(i, k);
    rows.push_back(r);
  }
  j["cov"] = rows;
  j["accept_rate"] = s.accept_rate;
  j["ess_min"] = s.ess_min;
  j["n_draws"] = s.draws.rows();
  return j;
}

inline void write_metrics_csv(const std::filesystem::path& file, const ResultRecord& r) {
  std::ofstream out(file);
  out << "metric,value\n";
  for (const auto& [k, v] : r.metrics) out << k << "," << fmt_double(v) << "\n";
}

inline void write_summary(const std::filesystem::path& file, const ResultRecord& r, const std::string& timestamp) {
  json j = r.to_json();
  j["timestamp"] = timestamp;
  std::ofstream out(file);
  out << j.dump(2) << "\n";
}

}  // namespace calming
