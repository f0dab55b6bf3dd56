#pragma once

// Monte Carlo study: data generation, contamination schemes C0-C4, oracle
// fits and the variable-selection / estimation metrics.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "rplam/error.hpp"
#include "rplam/parallel.hpp"
#include "rplam/pipeline.hpp"
#include "rplam/random.hpp"

namespace rplam {

enum class Scheme { C0 = 0, C1, C2, C3, C4 };

inline const char* to_string(Scheme s) {
  static const char* names[] = {"C0", "C1", "C2", "C3", "C4"};
  return names[static_cast<int>(s)];
}

inline Scheme parse_scheme(const std::string& s) {
  for (int k = 0; k < 5; ++k)
    if (s == to_string(static_cast<Scheme>(k))) return static_cast<Scheme>(k);
  fail(ErrorCategory::InvalidArgument, "unknown contamination scheme '" + s + "'");
}

inline const std::vector<Scheme>& all_schemes() {
  static const std::vector<Scheme> s = {Scheme::C0, Scheme::C1, Scheme::C2, Scheme::C3,
                                        Scheme::C4};
  return s;
}

struct SimDesign {
  Index n = 400;
  MatrixXd sigma_z;  // covariance of Z
  VectorXd beta;
  double mu = 0.0;
  double sigma = 1.0;

  Index q() const { return beta.size(); }
  Index p() const { return 3; }

  /// q = 6, corr(Z_k, Z_l) = 0.5^|k-l|, beta = (3, -1.5, 2, 0, 0, 0).
  static SimDesign standard(Index n = 400) {
    SimDesign d;
    d.n = n;
    d.beta.resize(6);
    d.beta << 3.0, -1.5, 2.0, 0.0, 0.0, 0.0;
    d.sigma_z.resize(6, 6);
    for (Index k = 0; k < 6; ++k)
      for (Index l = 0; l < 6; ++l) d.sigma_z(k, l) = std::pow(0.5, std::abs(k - l));
    return d;
  }

  static double eta(Index j, double x) {
    switch (j) {
      case 0: return 5.0 * x - 2.5;
      case 1: return 3.0 * (2.0 * x - 1.0) * (2.0 * x - 1.0) - 1.0;
      case 2: return 60.0 * x * x * x - 90.0 * x * x + 30.0 * x;
    }
    fail(ErrorCategory::InvalidArgument, "the design has three additive components");
  }

  std::vector<Index> true_support() const {
    std::vector<Index> s;
    for (Index k = 0; k < q(); ++k)
      if (beta[k] != 0.0) s.push_back(k);
    return s;
  }
};

/// A generated sample together with its noiseless part and standard normal
/// error draws, so that contamination can reuse the same draws.
struct SimSample {
  PlamData data;
  VectorXd signal;  // mu + Z beta + sum eta_j(X_j)
  VectorXd base_normals;
};

/// Rows are generated one at a time from a single stream, so the first m rows
/// of a sample of size n > m coincide with the sample of size m.
inline SimSample gen_clean(const SimDesign& design, std::uint64_t seed) {
  const Index n = design.n, q = design.q(), p = design.p();
  require(design.sigma_z.rows() == q && design.sigma_z.cols() == q,
          "covariance has the wrong shape", ErrorCategory::DimensionMismatch);
  Eigen::LLT<MatrixXd> llt(design.sigma_z);
  require(llt.info() == Eigen::Success, "covariance of Z must be positive definite");
  const MatrixXd L = llt.matrixL();

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SimSample out;
  out.data.y.resize(n);
  out.data.z.resize(n, q);
  out.data.x.resize(n, p);
  out.signal.resize(n);
  out.base_normals.resize(n);
  VectorXd g(q);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < q; ++k) g[k] = normal(rng);
    out.data.z.row(i) = (L * g).transpose();
    for (Index j = 0; j < p; ++j) out.data.x(i, j) = unif(rng);
    out.base_normals[i] = normal(rng);
    double s = design.mu + out.data.z.row(i).dot(design.beta);
    for (Index j = 0; j < p; ++j) s += SimDesign::eta(j, out.data.x(i, j));
    out.signal[i] = s;
    out.data.y[i] = s + design.sigma * out.base_normals[i];
  }
  return out;
}

/// Applies a contamination scheme. C1-C3 change the error law while reusing
/// the clean normal draws; C4 moves floor(0.05 n) rows of Z to (20,...,20)
/// and keeps the clean responses.
inline SimSample contaminate(const SimSample& clean, const SimDesign& design, Scheme scheme,
                             std::uint64_t seed) {
  SimSample out = clean;
  const Index n = clean.data.n();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  switch (scheme) {
    case Scheme::C0:
      return out;
    case Scheme::C1:
      for (Index i = 0; i < n; ++i) {
        double chi2 = 0.0;
        for (int k = 0; k < 3; ++k) {
          const double z = normal(rng);
          chi2 += z * z;
        }
        const double eps = clean.base_normals[i] / std::sqrt(chi2 / 3.0);
        out.data.y[i] = clean.signal[i] + design.sigma * eps;
      }
      return out;
    case Scheme::C2:
      for (Index i = 0; i < n; ++i) {
        const double eps = unif(rng) < 0.05 ? 10.0 * clean.base_normals[i] : clean.base_normals[i];
        out.data.y[i] = clean.signal[i] + design.sigma * eps;
      }
      return out;
    case Scheme::C3:
      for (Index i = 0; i < n; ++i) {
        const double eps =
            unif(rng) < 0.15 ? 15.0 + clean.base_normals[i] : clean.base_normals[i];
        out.data.y[i] = clean.signal[i] + design.sigma * eps;
      }
      return out;
    case Scheme::C4: {
      const Index m = static_cast<Index>(std::floor(0.05 * static_cast<double>(n)));
      std::vector<Index> idx(n);
      std::iota(idx.begin(), idx.end(), Index{0});
      for (Index k = 0; k < m; ++k) {
        std::uniform_int_distribution<Index> pick(k, n - 1);
        std::swap(idx[k], idx[pick(rng)]);
      }
      for (Index k = 0; k < m; ++k) out.data.z.row(idx[k]).setConstant(20.0);
      return out;
    }
  }
  return out;
}

struct MetricsRow {
  int cn0 = 0;  // true zeros estimated as zero
  int in0 = 0;  // true non-zeros estimated as zero
  int cf = 0;   // estimated support equals the true one
  double gmse = 0.0;
};

inline MetricsRow metrics(const VecRef& beta_hat, const VecRef& beta_true, const MatRef& sigma_z) {
  require(beta_hat.size() == beta_true.size() && sigma_z.rows() == beta_true.size() &&
              sigma_z.cols() == beta_true.size(),
          "metric inputs have inconsistent dimensions", ErrorCategory::DimensionMismatch);
  MetricsRow m;
  bool same_support = true;
  for (Index s = 0; s < beta_true.size(); ++s) {
    const bool est_zero = beta_hat[s] == 0.0;
    const bool true_zero = beta_true[s] == 0.0;
    if (true_zero && est_zero) ++m.cn0;
    if (!true_zero && est_zero) ++m.in0;
    if (est_zero != true_zero) same_support = false;
  }
  m.cf = same_support ? 1 : 0;
  const VectorXd e = beta_hat - beta_true;
  m.gmse = e.dot(sigma_z * e);
  return m;
}

struct OracleResult {
  VectorXd beta_hat;  // on the true support
  double ogmse = 0.0;
};

/// Unpenalized fit restricted to the true support of beta.
inline OracleResult oracle_fit(const PlamData& data, const SimDesign& design,
                               const PipelineOptions& opts) {
  const std::vector<Index> support = design.true_support();
  const Index k = static_cast<Index>(support.size());
  PlamData reduced{data.y, MatrixXd(data.n(), k), data.x};
  VectorXd beta_true(k);
  MatrixXd sigma_block(k, k);
  for (Index a = 0; a < k; ++a) {
    reduced.z.col(a) = data.z.col(support[a]);
    beta_true[a] = design.beta[support[a]];
    for (Index b = 0; b < k; ++b) sigma_block(a, b) = design.sigma_z(support[a], support[b]);
  }
  const PreliminaryFit prelim = preliminary_stage(reduced, opts);
  SolverOptions so = opts.solver;
  so.beta_ini = prelim.beta_ini;
  const Penalty none = make_penalty(opts.penalty, VectorXd::Zero(k), prelim.beta_ini);
  const PenalizedFit fit =
      penalized_fit(adjusted_response(reduced, prelim), reduced.z, prelim.sigma_hat, none, so);
  OracleResult out;
  out.beta_hat = fit.beta_hat;
  const VectorXd e = fit.beta_hat - beta_true;
  out.ogmse = e.dot(sigma_block * e);
  return out;
}

struct StudyConfig {
  SimDesign design = SimDesign::standard();
  std::vector<Scheme> schemes = all_schemes();
  std::vector<Method> methods = {Method::Robust, Method::LeastSquares};
  int n_reps = 100;
  GridSpec grid;
  PenaltyConfig penalty;
  std::optional<SplineSpec> spline;
  bool oracle = true;
  std::uint64_t master_seed = 20240601;
  unsigned threads = 1;
};

struct ReplicationResult {
  Scheme scheme = Scheme::C0;
  Method method = Method::Robust;
  int rep = 0;
  bool failed = false;
  std::string error;
  MetricsRow metrics;
  VectorXd beta_hat;
  VectorXd lambda;
  bool oracle_failed = false;
  double ogmse = std::numeric_limits<double>::quiet_NaN();
};

struct SchemeSummary {
  Scheme scheme = Scheme::C0;
  Method method = Method::Robust;
  double cn0_mean = 0, cn0_sd = 0, in0_mean = 0, in0_sd = 0, cf_mean = 0, cf_sd = 0;
  double gmse_med = 0, gmse_mad = 0, ogmse_med = 0, ogmse_mad = 0;
  int failures = 0;
  int oracle_failures = 0;
  int completed = 0;
  VectorXd zero_proportion;  // per coordinate
};

struct StudyResult {
  std::vector<ReplicationResult> replications;
  std::vector<SchemeSummary> summary;

  const SchemeSummary& find(Scheme s, Method m) const {
    for (const auto& row : summary)
      if (row.scheme == s && row.method == m) return row;
    fail(ErrorCategory::InvalidArgument, "no summary row for the requested scheme and method");
  }
};

inline PipelineOptions study_pipeline(const StudyConfig& cfg, Method method) {
  PipelineOptions o =
      method == Method::Robust ? PipelineOptions::robust() : PipelineOptions::least_squares();
  o.grid = cfg.grid;
  o.penalty = cfg.penalty;
  o.spline = cfg.spline;
  return o;
}

/// One replication of one scheme; both methods share the same sample.
inline std::vector<ReplicationResult> run_replication(const StudyConfig& cfg, Scheme scheme,
                                                      int rep) {
  const SimSample clean =
      gen_clean(cfg.design, derive_seed(cfg.master_seed, {static_cast<std::uint64_t>(rep)}));
  const SimSample sample = contaminate(
      clean, cfg.design, scheme,
      derive_seed(cfg.master_seed, {static_cast<std::uint64_t>(scheme) + 1,
                                    static_cast<std::uint64_t>(rep)}));
  std::vector<ReplicationResult> out;
  for (Method method : cfg.methods) {
    ReplicationResult r;
    r.scheme = scheme;
    r.method = method;
    r.rep = rep;
    PipelineOptions opts = study_pipeline(cfg, method);
    opts.prelim.seed = derive_seed(cfg.master_seed, {static_cast<std::uint64_t>(scheme) + 1,
                                                     static_cast<std::uint64_t>(rep), 99});
    try {
      const PlamEstimate est = estimate(sample.data, opts);
      r.beta_hat = est.fit().beta_hat;
      r.lambda = est.selection.best_lambda;
      r.metrics = metrics(r.beta_hat, cfg.design.beta, cfg.design.sigma_z);
    } catch (const std::exception& e) {
      r.failed = true;
      r.error = e.what();
    }
    if (cfg.oracle) {
      try {
        r.ogmse = oracle_fit(sample.data, cfg.design, opts).ogmse;
      } catch (const std::exception&) {
        r.oracle_failed = true;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace detail {

inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double mean_of(const std::vector<double>& v) {
  return v.empty() ? std::numeric_limits<double>::quiet_NaN()
                   : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline std::pair<double, double> median_mad(const std::vector<double>& v) {
  if (v.empty())
    return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  const Eigen::Map<const VectorXd> m(v.data(), static_cast<Index>(v.size()));
  return {median(m), mad_scale(m)};
}

}  // namespace detail

inline SchemeSummary summarize(const std::vector<ReplicationResult>& reps, Scheme scheme,
                               Method method, Index q) {
  SchemeSummary s;
  s.scheme = scheme;
  s.method = method;
  s.zero_proportion = VectorXd::Zero(q);
  std::vector<double> cn0, in0, cf, gmse, ogmse;
  for (const auto& r : reps) {
    if (r.scheme != scheme || r.method != method) continue;
    if (r.oracle_failed) ++s.oracle_failures;
    else if (!std::isnan(r.ogmse)) ogmse.push_back(r.ogmse);
    if (r.failed) {
      ++s.failures;
      continue;
    }
    cn0.push_back(r.metrics.cn0);
    in0.push_back(r.metrics.in0);
    cf.push_back(r.metrics.cf);
    gmse.push_back(r.metrics.gmse);
    for (Index k = 0; k < q; ++k) s.zero_proportion[k] += r.beta_hat[k] == 0.0;
  }
  s.completed = static_cast<int>(cn0.size());
  if (s.completed > 0) s.zero_proportion /= static_cast<double>(s.completed);
  s.cn0_mean = detail::mean_of(cn0);
  s.cn0_sd = detail::sample_sd(cn0);
  s.in0_mean = detail::mean_of(in0);
  s.in0_sd = detail::sample_sd(in0);
  s.cf_mean = detail::mean_of(cf);
  s.cf_sd = detail::sample_sd(cf);
  std::tie(s.gmse_med, s.gmse_mad) = detail::median_mad(gmse);
  std::tie(s.ogmse_med, s.ogmse_mad) = detail::median_mad(ogmse);
  return s;
}

/// Runs every (scheme, replication) task and summarises per scheme and method.
/// Seeds depend only on (master seed, scheme, replication), so the schedule
/// and the scheme order do not change the results.
inline StudyResult run_study(const StudyConfig& cfg) {
  require(cfg.n_reps >= 1, "need at least one replication");
  const std::size_t S = cfg.schemes.size(), R = static_cast<std::size_t>(cfg.n_reps);
  std::vector<std::vector<ReplicationResult>> slots(S * R);
  parallel_for(S * R, cfg.threads, [&](std::size_t t) {
    slots[t] = run_replication(cfg, cfg.schemes[t / R], static_cast<int>(t % R));
  });
  StudyResult out;
  for (auto& slot : slots)
    for (auto& r : slot) out.replications.push_back(std::move(r));
  for (Scheme s : cfg.schemes)
    for (Method m : cfg.methods)
      out.summary.push_back(summarize(out.replications, s, m, cfg.design.q()));
  return out;
}

inline void write_summary_csv(std::ostream& os, const StudyResult& res) {
  os << "scheme,method,CN0_mean,CN0_sd,IN0_mean,IN0_sd,CF_mean,CF_sd,GMSE_med,GMSE_mad,"
        "OGMSE_med,OGMSE_mad,failures\n";
  os.precision(10);
  for (const auto& s : res.summary) {
    os << to_string(s.scheme) << ',' << to_string(s.method) << ',' << s.cn0_mean << ','
       << s.cn0_sd << ',' << s.in0_mean << ',' << s.in0_sd << ',' << s.cf_mean << ','
       << s.cf_sd << ',' << s.gmse_med << ',' << s.gmse_mad << ',' << s.ogmse_med << ','
       << s.ogmse_mad << ',' << s.failures << '\n';
  }
}

inline void write_zero_proportion_csv(std::ostream& os, const StudyResult& res) {
  if (res.summary.empty()) return;
  const Index q = res.summary.front().zero_proportion.size();
  os << "scheme,method";
  for (Index k = 0; k < q; ++k) os << ",beta_" << (k + 1);
  os << '\n';
  os.precision(10);
  for (const auto& s : res.summary) {
    os << to_string(s.scheme) << ',' << to_string(s.method);
    for (Index k = 0; k < q; ++k) os << ',' << s.zero_proportion[k];
    os << '\n';
  }
}

inline void write_replications_csv(std::ostream& os, const StudyResult& res) {
  if (res.replications.empty()) return;
  Index q = 0;
  for (const auto& r : res.replications)
    if (!r.failed) q = std::max(q, r.beta_hat.size());
  os << "scheme,method,rep,failed,CN0,IN0,CF,GMSE,OGMSE";
  for (Index k = 0; k < q; ++k) os << ",beta_" << (k + 1);
  for (Index k = 0; k < q; ++k) os << ",lambda_" << (k + 1);
  os << '\n';
  os.precision(12);
  for (const auto& r : res.replications) {
    os << to_string(r.scheme) << ',' << to_string(r.method) << ',' << r.rep << ','
       << (r.failed ? 1 : 0) << ',' << r.metrics.cn0 << ',' << r.metrics.in0 << ','
       << r.metrics.cf << ',' << r.metrics.gmse << ',' << r.ogmse;
    for (Index k = 0; k < q; ++k) os << ',' << (r.failed ? 0.0 : r.beta_hat[k]);
    for (Index k = 0; k < q; ++k) os << ',' << (r.failed ? 0.0 : r.lambda[k]);
    os << '\n';
  }
}

}  // namespace rplam
