#pragma once

// Penalized M-regression of the adjusted response on Z: local quadratic
// approximation of the penalty plus iterative reweighting.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "rplam/error.hpp"
#include "rplam/loss.hpp"
#include "rplam/penalties.hpp"
#include "rplam/preliminary.hpp"

namespace rplam {

struct SolverOptions {
  RhoFunction rho1 = RhoFunction::tukey(kTukeyC1);
  int max_iter = 200;
  double tol = 1e-6;
  /// Unset means 1e-8 * sigma_hat.
  std::optional<double> freeze_tol;
  std::optional<VectorXd> b_init;
  /// Preliminary estimate used as an additional start.
  std::optional<VectorXd> beta_ini;
  double stationarity_tol = 1e-4;
};

struct PenalizedFit {
  VectorXd beta_hat;
  std::vector<Index> support;
  Index df = 0;
  VectorXd lambda;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Sup-norm of the penalized score on the active set.
  double stationarity = 0.0;
  VectorXd residuals;
  std::string start;
  std::vector<double> objective_trace;
  std::vector<std::string> warnings;
};

/// Warns when rho1 <= rho0 cannot hold (bisquare with c1 < c0).
inline std::optional<std::string> check_mm_pair(const RhoFunction& rho0, const RhoFunction& rho1) {
  if (rho0.kind() == RhoKind::TukeyBisquare && rho1.kind() == RhoKind::TukeyBisquare &&
      rho1.c() < rho0.c())
    return "c1 < c0: rho1 <= rho0 does not hold";
  return std::nullopt;
}

/// (1/n) sum rho1((Y*_i - b'Z_i) / sigma) + J_lambda(b).
inline double pl_objective(const VecRef& ystar, const MatRef& Z, double sigma_hat,
                           const Penalty& pen, const VecRef& b,
                           const RhoFunction& rho1 = RhoFunction::tukey(kTukeyC1)) {
  require(sigma_hat > 0.0, "scale must be positive");
  const VectorXd r = ystar - Z * b;
  return mean_rho(r, rho1, sigma_hat) + pen.total(b);
}

namespace detail {

struct PenalizedRun {
  VectorXd b;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double stationarity = 0.0;
  std::vector<double> trace;
};

inline double active_stationarity(const VecRef& ystar, const MatRef& Z, double sigma,
                                  const RhoFunction& rho1, const Penalty& pen,
                                  const VectorXd& b, const std::vector<bool>& frozen,
                                  double freeze_tol) {
  const Index n = Z.rows();
  const VectorXd r = ystar - Z * b;
  VectorXd psi(n);
  for (Index i = 0; i < n; ++i) psi[i] = rho1.psi(r[i] / sigma);
  const VectorXd grad = -(Z.transpose() * psi) / (static_cast<double>(n) * sigma);
  const LqaDiagonal lqa = lqa_diagonal(pen, b, freeze_tol);
  double sup = 0.0;
  for (Index s = 0; s < b.size(); ++s) {
    if (frozen[s]) continue;
    sup = std::max(sup, std::abs(grad[s] + 2.0 * lqa.diag[s] * b[s]));
  }
  return sup;
}

inline PenalizedRun penalized_run(const VecRef& ystar, const MatRef& Z, double sigma,
                                  const Penalty& pen, const SolverOptions& opts,
                                  double freeze_tol, VectorXd b,
                                  std::vector<std::string>& warnings) {
  const Index n = Z.rows(), q = Z.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto& rho1 = opts.rho1;
  std::vector<bool> frozen(q, false);
  auto freeze = [&](VectorXd& v) {
    for (Index s = 0; s < q; ++s) {
      if (frozen[s]) continue;
      if (pen.forced_zero(s) || (pen.lambda()[s] > 0.0 && std::abs(v[s]) < freeze_tol)) {
        frozen[s] = true;
      }
    }
    for (Index s = 0; s < q; ++s)
      if (frozen[s]) v[s] = 0.0;
  };

  PenalizedRun run;
  freeze(b);
  run.objective = pl_objective(ystar, Z, sigma, pen, b, rho1);
  run.trace.push_back(run.objective);

  bool stopped = false;  // left the loop before max_iter
  for (run.iterations = 0; run.iterations < opts.max_iter;) {
    std::vector<Index> active;
    for (Index s = 0; s < q; ++s)
      if (!frozen[s]) active.push_back(s);
    if (active.empty()) {
      stopped = true;
      break;
    }
    ++run.iterations;

    const LqaDiagonal lqa = lqa_diagonal(pen, b, freeze_tol);
    const VectorXd r = ystar - Z * b;
    VectorXd w(n);
    for (Index i = 0; i < n; ++i) w[i] = rho1.weight(r[i] / sigma);

    const Index m = static_cast<Index>(active.size());
    MatrixXd Za(n, m);
    for (Index k = 0; k < m; ++k) Za.col(k) = Z.col(active[k]);
    const MatrixXd Zw = Za.array().colwise() * w.array();
    const double scale = inv_n / (sigma * sigma);
    MatrixXd A = scale * (Za.transpose() * Zw);
    for (Index k = 0; k < m; ++k) A(k, k) += 2.0 * lqa.diag[active[k]];
    const VectorXd rhs = scale * (Zw.transpose() * ystar);
    const VectorXd prop = solve_psd(std::move(A), rhs, &warnings);

    VectorXd target = b;
    for (Index k = 0; k < m; ++k) target[active[k]] = prop[k];
    const VectorXd delta = target - b;

    bool accepted = false;
    double t = 1.0;
    VectorXd next;
    double next_obj = 0.0;
    for (int h = 0; h < 40; ++h, t *= 0.5) {
      next = b + t * delta;
      next_obj = pl_objective(ystar, Z, sigma, pen, next, rho1);
      if (next_obj <= run.objective + 1e-12 * (1.0 + std::abs(run.objective))) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      stopped = true;
      break;
    }
    const double step = (next - b).norm();
    b = std::move(next);
    freeze(b);
    run.objective = pl_objective(ystar, Z, sigma, pen, b, rho1);
    run.trace.push_back(run.objective);

    // Step size relative to the residual scale, which keeps the stopping
    // point equivariant.
    if (step <= opts.tol * sigma || step == 0.0) {
      const double stat =
          active_stationarity(ystar, Z, sigma, rho1, pen, b, frozen, freeze_tol);
      if (stat <= opts.stationarity_tol) {
        stopped = true;
        break;
      }
    }
  }
  run.stationarity = active_stationarity(ystar, Z, sigma, rho1, pen, b, frozen, freeze_tol);
  run.converged = stopped && run.stationarity <= opts.stationarity_tol;
  run.b = std::move(b);
  return run;
}

inline Index count_nonzero(const VectorXd& b) {
  Index c = 0;
  for (Index s = 0; s < b.size(); ++s) c += b[s] != 0.0;
  return c;
}

}  // namespace detail

/// Penalized M-estimator of beta for fixed sigma_hat and adjusted response.
///
/// Runs the reweighted LQA iteration from each available start (b_init,
/// beta_ini, zero) and keeps the lowest penalized objective; ties go to the
/// sparser fit. Coordinates that fall below the freeze tolerance are set to
/// exactly zero and stay there.
inline PenalizedFit penalized_fit(const VecRef& ystar, const MatRef& Z, double sigma_hat,
                                  const Penalty& pen, const SolverOptions& opts = {}) {
  require(sigma_hat > 0.0 && std::isfinite(sigma_hat), "scale estimate must be positive",
          ErrorCategory::DegenerateScale);
  require(ystar.size() == Z.rows(), "response and Z have different row counts",
          ErrorCategory::DimensionMismatch);
  require(pen.q() == Z.cols(), "penalty dimension does not match Z",
          ErrorCategory::DimensionMismatch);
  require(ystar.allFinite() && Z.allFinite(), "solver inputs must be finite");
  const Index q = Z.cols();
  const double freeze_tol = opts.freeze_tol.value_or(1e-8 * sigma_hat);

  struct Start {
    std::string name;
    VectorXd b;
  };
  std::vector<Start> starts;
  if (opts.b_init) {
    require(opts.b_init->size() == q, "b_init has the wrong length", ErrorCategory::DimensionMismatch);
    starts.push_back({"b_init", *opts.b_init});
  }
  if (opts.beta_ini) {
    require(opts.beta_ini->size() == q, "beta_ini has the wrong length", ErrorCategory::DimensionMismatch);
    starts.push_back({"beta_ini", *opts.beta_ini});
  }
  starts.push_back({"zero", VectorXd::Zero(q)});

  PenalizedFit out;
  bool have = false;
  for (const auto& st : starts) {
    std::vector<std::string> warnings;
    detail::PenalizedRun run =
        detail::penalized_run(ystar, Z, sigma_hat, pen, opts, freeze_tol, st.b, warnings);
    const Index df = detail::count_nonzero(run.b);
    // Later starts must win by more than round-off, so runs that reach the
    // same minimum keep the earlier (equivariant) start.
    const double slack = 1e-10 * (1.0 + std::abs(out.objective));
    const bool better = !have || run.objective < out.objective - slack ||
                        (run.objective <= out.objective + slack && df < out.df);
    if (!better) continue;
    have = true;
    out.beta_hat = std::move(run.b);
    out.df = df;
    out.objective = run.objective;
    out.iterations = run.iterations;
    out.converged = run.converged;
    out.stationarity = run.stationarity;
    out.objective_trace = std::move(run.trace);
    out.start = st.name;
    out.warnings = std::move(warnings);
  }
  out.support.clear();
  for (Index s = 0; s < q; ++s)
    if (out.beta_hat[s] != 0.0) out.support.push_back(s);
  out.lambda = pen.lambda();
  out.residuals = ystar - Z * out.beta_hat;
  if (!out.converged) out.warnings.push_back("penalized fit did not converge");
  return out;
}

/// Y_hat = mu_hat + Z beta_hat + sum_j eta_j(X_j). Additive covariates outside
/// [0,1] are clamped and reported through `warnings`.
inline VectorXd predict(const PreliminaryFit& prelim, const PenalizedFit& fit, const MatRef& Znew,
                        const MatRef& Xnew, std::vector<std::string>* warnings = nullptr) {
  require(Znew.rows() == Xnew.rows(), "Z and X have different row counts",
          ErrorCategory::DimensionMismatch);
  require(Znew.cols() == fit.beta_hat.size(), "Z has the wrong number of columns",
          ErrorCategory::DimensionMismatch);
  require(Xnew.cols() == prelim.design.p(), "X has the wrong number of columns",
          ErrorCategory::DimensionMismatch);
  MatrixXd X = Xnew;
  Index clamped = 0;
  for (Index i = 0; i < X.rows(); ++i)
    for (Index j = 0; j < X.cols(); ++j) {
      const double v = std::clamp(X(i, j), 0.0, 1.0);
      clamped += v != X(i, j);
      X(i, j) = v;
    }
  if (clamped > 0 && warnings)
    warnings->push_back(std::to_string(clamped) + " additive covariate values clamped to [0,1]");
  return (Znew * fit.beta_hat + additive_part(prelim, X)).array() + prelim.mu_hat;
}

}  // namespace rplam
