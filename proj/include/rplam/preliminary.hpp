#pragma once

// Ridge S-estimation of the intercept, the linear coefficients, the spline
// coefficients of the additive components and the residual scale.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "rplam/error.hpp"
#include "rplam/loss.hpp"
#include "rplam/random.hpp"
#include "rplam/splines.hpp"

namespace rplam {

/// Response Y, linear covariates Z (n x q) and additive covariates X (n x p,
/// already mapped to [0,1]).
struct PlamData {
  VectorXd y;
  MatrixXd z;
  MatrixXd x;

  Index n() const { return y.size(); }
  Index q() const { return z.cols(); }
  Index p() const { return x.cols(); }

  void validate() const {
    require(n() >= 1, "empty data set");
    require(z.rows() == n() && x.rows() == n(),
            "response and covariate blocks have different row counts",
            ErrorCategory::DimensionMismatch);
    require(y.allFinite() && z.allFinite() && x.allFinite(), "data contain non-finite values");
  }

  PlamData rows(const std::vector<Index>& idx) const {
    PlamData out{VectorXd(idx.size()), MatrixXd(idx.size(), q()), MatrixXd(idx.size(), p())};
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out.y[k] = y[idx[k]];
      out.z.row(k) = z.row(idx[k]);
      out.x.row(k) = x.row(idx[k]);
    }
    return out;
  }
};

enum class ScaleSource { SScale, Mad };

struct PreliminaryOptions {
  RhoFunction rho0 = RhoFunction::tukey(kTukeyC0);
  double b = 0.5;
  /// Ridge weights; unset means 1e-4 (q + K) / n.
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  int n_elemental = 20;
  std::uint64_t seed = 12345;
  int max_iter = 500;
  double tol = 1e-8;
  /// IRLS steps applied to every start before the best ones are refined.
  int initial_steps = 2;
  /// Number of starts iterated to convergence.
  int refine_best = 3;
  ScaleSource sigma_source = ScaleSource::SScale;

  /// Classical counterpart: squared loss, so s_n is the root mean square.
  static PreliminaryOptions least_squares() {
    PreliminaryOptions o;
    o.rho0 = RhoFunction::square();
    o.b = 1.0;
    return o;
  }
};

struct PreliminaryFit {
  double mu_hat = 0.0;
  VectorXd beta_ini;
  VectorXd c_hat;  // blocks follow design.offsets
  double sigma_hat = 0.0;
  double s_scale = 0.0;  // s_n at the returned point
  AdditiveDesign design;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  RhoFunction rho0 = RhoFunction::tukey(kTukeyC0);
  double b = 0.5;
  double objective = 0.0;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  bool exact_fit = false;
  VectorXd residuals;
  std::vector<std::string> warnings;

  VectorXd c_block(Index j) const {
    return c_hat.segment(design.offsets[j], design.block_size(j));
  }
};

namespace detail {

struct SProblem {
  const MatrixXd& X;
  const VectorXd& y;
  const MatrixXd& P;
  MScaleSpec ms;
  /// Residuals at or below this size count as exact zeros.
  double zero_tol = 0.0;
};

struct SIterate {
  VectorXd theta;
  double scale = 0.0;
  double objective = 0.0;
  bool exact = false;
};

inline SIterate evaluate(const SProblem& pb, VectorXd theta, double start = 0.0) {
  VectorXd r = pb.y - pb.X * theta;
  for (Index i = 0; i < r.size(); ++i)
    if (std::abs(r[i]) <= pb.zero_tol) r[i] = 0.0;
  const MScaleResult m = m_scale(r, pb.ms, start);
  SIterate it;
  it.exact = m.degenerate;
  it.scale = m.degenerate ? 0.0 : m.scale;
  it.objective = it.scale * it.scale + theta.dot(pb.P * theta);
  it.theta = std::move(theta);
  return it;
}

/// Solves A x = rhs for symmetric PSD A, adding a 1e-10 ridge when A is
/// numerically singular.
inline VectorXd solve_psd(MatrixXd A, const VectorXd& rhs, std::vector<std::string>* warnings) {
  Eigen::LDLT<MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13) {
    A.diagonal().array() += 1e-10;
    ldlt.compute(A);
    if (warnings && (warnings->empty() || warnings->back() != "singular system: ridge floor 1e-10 applied"))
      warnings->push_back("singular system: ridge floor 1e-10 applied");
  }
  return ldlt.solve(rhs);
}

/// One weighted ridge step with step-halving. Returns true once converged:
/// the step is below tol times the current scale, or the objective no longer
/// decreases beyond round-off.
inline bool s_irls_step(const SProblem& pb, SIterate& cur, double tol,
                        std::vector<std::string>* warnings) {
  if (cur.exact) return true;
  const VectorXd r = pb.y - pb.X * cur.theta;
  const Index n = r.size();
  VectorXd w(n);
  double D = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double u = r[i] / cur.scale;
    w[i] = pb.ms.rho0.weight(u);
    D += w[i] * u * u;
  }
  // Stationarity of s^2 + theta'P theta: X'W(y - X theta) = D P theta.
  const MatrixXd Xw = pb.X.array().colwise() * w.array();
  MatrixXd A = pb.X.transpose() * Xw + D * pb.P;
  const VectorXd rhs = Xw.transpose() * pb.y;
  const VectorXd proposal = solve_psd(std::move(A), rhs, warnings);

  const VectorXd delta = proposal - cur.theta;
  double t = 1.0;
  for (int h = 0; h < 40; ++h, t *= 0.5) {
    SIterate next = evaluate(pb, cur.theta + t * delta, cur.scale);
    if (next.objective <= cur.objective + 1e-12 * std::abs(cur.objective)) {
      // Full step accepted: extend it while the objective keeps dropping.
      for (int e = 0; h == 0 && e < 6 && !next.exact; ++e) {
        t *= 2.0;
        SIterate ext = evaluate(pb, cur.theta + t * delta, next.scale);
        if (!(ext.objective < next.objective)) break;
        next = std::move(ext);
      }
      const double step = (next.theta - cur.theta).norm();
      const double size = cur.scale;
      const bool flat = cur.objective - next.objective <= 1e-12 * std::abs(cur.objective);
      cur = std::move(next);
      return cur.exact || step <= tol * size || step == 0.0 || flat;
    }
  }
  return true;  // no descent direction left
}

}  // namespace detail

/// Local minimiser of s_n^2(a,b,c) + lambda1 |b|^2 + lambda2 sum_j c_j' H_j c_j.
///
/// Starts: ridge least squares plus `n_elemental` random (q+1)-point exact fits
/// on (1, Z) with c = 0. Every start gets `initial_steps` IRLS steps; the
/// `refine_best` lowest are iterated to convergence and the best one is kept.
inline PreliminaryFit ridge_s_fit(const PlamData& data, const AdditiveDesign& design,
                                  const PreliminaryOptions& opts = {}) {
  data.validate();
  require(design.V.rows() == data.n(), "design rows do not match the data",
          ErrorCategory::DimensionMismatch);
  const Index n = data.n(), q = data.q(), K = design.K();
  const Index d = 1 + q + K;

  PreliminaryFit fit;
  fit.rho0 = opts.rho0;
  fit.b = opts.b;
  fit.design = design;
  const double ridge_default = 1e-4 * static_cast<double>(q + K) / static_cast<double>(n);
  fit.lambda1 = opts.lambda1.value_or(ridge_default);
  fit.lambda2 = opts.lambda2.value_or(ridge_default);
  require(fit.lambda1 >= 0.0 && fit.lambda2 >= 0.0, "ridge parameters must be non-negative");
  if (n <= d) fit.warnings.push_back("n <= 1 + q + K: the preliminary fit is poorly determined");

  MatrixXd X(n, d);
  X.col(0).setOnes();
  X.middleCols(1, q) = data.z;
  X.rightCols(K) = design.V;

  MatrixXd P = MatrixXd::Zero(d, d);
  for (Index s = 0; s < q; ++s) P(1 + s, 1 + s) = fit.lambda1;
  for (Index j = 0; j < design.p(); ++j) {
    const Index off = 1 + q + design.offsets[j];
    P.block(off, off, design.block_size(j), design.block_size(j)) =
        fit.lambda2 * design.bases[j].gram();
  }

  MScaleSpec ms;
  ms.rho0 = opts.rho0;
  ms.b = opts.b;
  const detail::SProblem pb{X, data.y, P, ms, 1e-12 * data.y.cwiseAbs().maxCoeff()};

  detail::SIterate best;
  if (opts.rho0.kind() == RhoKind::Square) {
    // s^2 = mean r^2 / b, so the objective is a ridge least-squares problem.
    MatrixXd A = X.transpose() * X + static_cast<double>(n) * opts.b * P;
    best = detail::evaluate(pb, detail::solve_psd(std::move(A), X.transpose() * data.y,
                                                  &fit.warnings));
    fit.objective_trace.push_back(best.objective);
    fit.iterations = 1;
    fit.converged = true;
  } else {
    struct Run {
      detail::SIterate it;
      std::vector<double> trace;
      int iterations = 0;
      bool converged = false;
    };
    std::vector<Run> runs;
    auto add_start = [&](VectorXd theta) {
      Run run;
      run.it = detail::evaluate(pb, std::move(theta));
      run.trace.push_back(run.it.objective);
      runs.push_back(std::move(run));
    };

    {
      MatrixXd A = X.transpose() * X + static_cast<double>(n) * P;
      add_start(detail::solve_psd(std::move(A), X.transpose() * data.y, &fit.warnings));
    }

    Rng rng(opts.seed);
    std::vector<Index> perm(n);
    std::iota(perm.begin(), perm.end(), Index{0});
    const Index m = q + 1;
    if (n >= m) {
      for (int e = 0, attempts = 0; e < opts.n_elemental && attempts < 50 * opts.n_elemental;
           ++attempts) {
        // Partial Fisher-Yates draw of m distinct rows.
        for (Index k = 0; k < m; ++k) {
          std::uniform_int_distribution<Index> pick(k, n - 1);
          std::swap(perm[k], perm[pick(rng)]);
        }
        MatrixXd Ae(m, m);
        VectorXd ye(m);
        for (Index k = 0; k < m; ++k) {
          Ae(k, 0) = 1.0;
          Ae.block(k, 1, 1, q) = data.z.row(perm[k]);
          ye[k] = data.y[perm[k]];
        }
        Eigen::FullPivLU<MatrixXd> lu(Ae);
        if (!lu.isInvertible()) continue;
        VectorXd theta = VectorXd::Zero(d);
        theta.head(m) = lu.solve(ye);
        add_start(std::move(theta));
        ++e;
      }
    }

    for (auto& run : runs) {
      for (int s = 0; s < opts.initial_steps && !run.converged; ++s) {
        run.converged = detail::s_irls_step(pb, run.it, opts.tol, &fit.warnings);
        run.trace.push_back(run.it.objective);
        ++run.iterations;
      }
    }
    std::vector<std::size_t> order(runs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return runs[a].it.objective < runs[b].it.objective;
    });
    const std::size_t keep = std::min<std::size_t>(std::max(1, opts.refine_best), runs.size());
    std::size_t winner = order[0];
    for (std::size_t k = 0; k < keep; ++k) {
      Run& run = runs[order[k]];
      while (!run.converged && run.iterations < opts.max_iter) {
        run.converged = detail::s_irls_step(pb, run.it, opts.tol, &fit.warnings);
        run.trace.push_back(run.it.objective);
        ++run.iterations;
      }
      if (run.it.objective < runs[winner].it.objective) winner = order[k];
    }
    fit.objective_trace = runs[winner].trace;
    fit.iterations = runs[winner].iterations;
    fit.converged = runs[winner].converged;
    best = std::move(runs[winner].it);
  }

  fit.mu_hat = best.theta[0];
  fit.beta_ini = best.theta.segment(1, q);
  fit.c_hat = best.theta.tail(K);
  fit.s_scale = best.scale;
  fit.exact_fit = best.exact;
  fit.objective = best.objective;
  fit.residuals = data.y - X * best.theta;
  fit.sigma_hat = opts.sigma_source == ScaleSource::Mad ? mad_scale(fit.residuals) : best.scale;
  if (!fit.converged) fit.warnings.push_back("preliminary fit reached the iteration limit");
  return fit;
}

/// Evaluable estimate of one additive component.
class EtaFunction {
 public:
  EtaFunction(CenteredBasis basis, VectorXd coeff)
      : basis_(std::move(basis)), coeff_(std::move(coeff)) {
    require(coeff_.size() == basis_.reduced_size(), "coefficient block has the wrong length");
  }

  double operator()(double x) const { return basis_.eta(coeff_, x); }
  const CenteredBasis& basis() const { return basis_; }
  const VectorXd& coefficients() const { return coeff_; }

 private:
  CenteredBasis basis_;
  VectorXd coeff_;
};

inline std::vector<EtaFunction> eta_functions(const PreliminaryFit& fit) {
  std::vector<EtaFunction> out;
  for (Index j = 0; j < fit.design.p(); ++j)
    out.emplace_back(fit.design.bases[j], fit.c_block(j));
  return out;
}

/// Sum of the fitted additive components at each row of X.
inline VectorXd additive_part(const PreliminaryFit& fit, const MatRef& X) {
  return fit.design.rows(X) * fit.c_hat;
}

/// Y* = Y - mu_hat - sum_j eta_j(X_j).
inline VectorXd adjusted_response(const PlamData& data, const PreliminaryFit& fit) {
  return (data.y - additive_part(fit, data.x)).array() - fit.mu_hat;
}

/// MAD of Y - mu_hat - Z beta_ini - sum_j eta_j(X_j).
inline double initial_residual_scale(const PlamData& data, const PreliminaryFit& fit) {
  const VectorXd r = adjusted_response(data, fit) - data.z * fit.beta_ini;
  return mad_scale(r);
}

}  // namespace rplam
