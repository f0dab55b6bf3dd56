#pragma once

// Robust BIC, penalty grids and the outer selection loop over the grid.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rplam/error.hpp"
#include "rplam/loss.hpp"
#include "rplam/parallel.hpp"
#include "rplam/penalties.hpp"
#include "rplam/preliminary.hpp"
#include "rplam/solver.hpp"

namespace rplam {

enum class GridMode { Cartesian, Shared, Explicit };

struct GridSpec {
  GridMode mode = GridMode::Shared;
  std::vector<double> levels = {0.0, 0.2, 0.4, 0.6};
  Index q = 0;
  std::vector<VectorXd> explicit_values;
  /// Largest cartesian grid that will be enumerated.
  double cap = 1e6;
};

struct PenaltyGrid {
  GridMode mode = GridMode::Shared;
  std::vector<VectorXd> values;

  std::size_t size() const { return values.size(); }
};

inline PenaltyGrid make_grid(const GridSpec& spec) {
  PenaltyGrid grid;
  grid.mode = spec.mode;
  if (spec.mode == GridMode::Explicit) {
    for (const auto& v : spec.explicit_values) {
      require(spec.q == 0 || v.size() == spec.q, "explicit grid entry has the wrong length",
              ErrorCategory::DimensionMismatch);
      require((v.array() >= 0.0).all(), "penalty parameters must be non-negative");
    }
    grid.values = spec.explicit_values;
    return grid;
  }
  require(spec.q >= 1, "grid needs the number of linear coefficients");
  require(!spec.levels.empty(), "grid needs at least one level");
  for (double l : spec.levels) require(l >= 0.0 && std::isfinite(l), "grid levels must be non-negative");

  if (spec.mode == GridMode::Shared) {
    for (double l : spec.levels) grid.values.push_back(VectorXd::Constant(spec.q, l));
    return grid;
  }

  const double L = static_cast<double>(spec.levels.size());
  if (static_cast<double>(spec.q) * std::log(L) > std::log(spec.cap) + 1e-12) {
    std::ostringstream msg;
    msg << "cartesian grid with " << spec.levels.size() << "^" << spec.q
        << " candidates exceeds the cap of " << spec.cap << "; use the shared mode";
    fail(ErrorCategory::InvalidArgument, msg.str());
  }
  // Odometer enumeration, last coordinate fastest.
  std::vector<std::size_t> idx(spec.q, 0);
  while (true) {
    VectorXd v(spec.q);
    for (Index s = 0; s < spec.q; ++s) v[s] = spec.levels[idx[s]];
    grid.values.push_back(std::move(v));
    Index s = spec.q - 1;
    while (s >= 0 && ++idx[s] == spec.levels.size()) idx[s--] = 0;
    if (s < 0) break;
  }
  return grid;
}

struct RbicValue {
  double value = 0.0;
  /// All residuals vanish; value is -infinity.
  bool exact_fit = false;
};

/// log(sigma^2 sum_i rho(r_i / sigma)) + df log(n) / n.
inline RbicValue rbic(const VecRef& residuals, double sigma_hat, const RhoFunction& rho,
                      Index df, Index n) {
  require(sigma_hat > 0.0, "RBIC needs a positive scale", ErrorCategory::DegenerateScale);
  require(n >= 1, "RBIC needs n >= 1");
  double sum = 0.0;
  for (Index i = 0; i < residuals.size(); ++i) sum += rho.rho(residuals[i] / sigma_hat);
  if (sum == 0.0) return {-std::numeric_limits<double>::infinity(), true};
  const double nn = static_cast<double>(n);
  return {std::log(sigma_hat * sigma_hat * sum) + static_cast<double>(df) * std::log(nn) / nn,
          false};
}

struct PenaltyConfig {
  PenaltyKind kind = PenaltyKind::Scad;
  double a = kScadDefaultA;
  double gamma = 1.0;
};

/// Builds the penalty for one lambda vector. The adaptive lasso weights come
/// from the preliminary coefficients.
inline Penalty make_penalty(const PenaltyConfig& cfg, const VectorXd& lambda,
                            const VectorXd& beta_ini) {
  switch (cfg.kind) {
    case PenaltyKind::Scad: return Penalty::scad(lambda, cfg.a);
    case PenaltyKind::Mcp: return Penalty::mcp(lambda, cfg.a);
    case PenaltyKind::AdaLasso: return Penalty::adalasso(lambda, cfg.gamma, beta_ini);
  }
  fail(ErrorCategory::InvalidArgument, "unknown penalty");
}

struct CandidateRow {
  VectorXd lambda;
  double rbic = std::numeric_limits<double>::quiet_NaN();
  Index df = 0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  bool failed = false;
  std::string error;
};

struct SelectionResult {
  VectorXd best_lambda;
  PenalizedFit best_fit;
  double rbic_best = 0.0;
  std::size_t best_index = 0;
  std::vector<CandidateRow> table;
};

struct SelectOptions {
  SolverOptions solver;
  /// Also start each candidate from the previous candidate's estimate. This
  /// makes the result depend on grid order.
  bool warm_start = false;
  unsigned threads = 1;
};

namespace detail {

/// Strict "a before b": lower RBIC, then smaller df, then lexicographically
/// larger lambda, then earlier grid position.
inline bool rbic_precedes(const CandidateRow& a, std::size_t ia, const CandidateRow& b,
                          std::size_t ib) {
  if (a.rbic != b.rbic) return a.rbic < b.rbic;
  if (a.df != b.df) return a.df < b.df;
  for (Index s = 0; s < a.lambda.size(); ++s)
    if (a.lambda[s] != b.lambda[s]) return a.lambda[s] > b.lambda[s];
  return ia < ib;
}

}  // namespace detail

/// Fits every grid candidate on the adjusted response and returns the RBIC
/// minimiser.
inline SelectionResult select(const PlamData& data, const PreliminaryFit& prelim,
                              const PenaltyConfig& pen_cfg, const PenaltyGrid& grid,
                              const SelectOptions& opts = {}) {
  require(grid.size() > 0, "empty penalty grid");
  require(prelim.sigma_hat > 0.0, "preliminary scale is zero", ErrorCategory::DegenerateScale);
  const VectorXd ystar = adjusted_response(data, prelim);
  const Index n = data.n();
  const std::size_t N = grid.size();

  SolverOptions base = opts.solver;
  base.beta_ini = prelim.beta_ini;

  std::vector<CandidateRow> table(N);
  std::vector<std::optional<PenalizedFit>> fits(N);
  auto run = [&](std::size_t k, const std::optional<VectorXd>& warm) {
    CandidateRow& row = table[k];
    row.lambda = grid.values[k];
    try {
      require(row.lambda.size() == data.q(), "grid entry has the wrong length",
              ErrorCategory::DimensionMismatch);
      SolverOptions so = base;
      if (warm) so.b_init = warm;
      const Penalty pen = make_penalty(pen_cfg, row.lambda, prelim.beta_ini);
      PenalizedFit fit = penalized_fit(ystar, data.z, prelim.sigma_hat, pen, so);
      const RbicValue crit = rbic(fit.residuals, prelim.sigma_hat, so.rho1, fit.df, n);
      row.rbic = crit.value;
      row.df = fit.df;
      row.objective = fit.objective;
      row.converged = fit.converged;
      fits[k] = std::move(fit);
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
  };

  if (opts.warm_start) {
    std::optional<VectorXd> warm;
    for (std::size_t k = 0; k < N; ++k) {
      run(k, warm);
      if (fits[k]) warm = fits[k]->beta_hat;
    }
  } else {
    parallel_for(N, opts.threads, [&](std::size_t k) { run(k, std::nullopt); });
  }

  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < N; ++k) {
    if (table[k].failed) continue;
    if (!best || detail::rbic_precedes(table[k], k, table[*best], *best)) best = k;
  }
  if (!best) {
    std::ostringstream msg;
    msg << "all " << N << " penalty candidates failed";
    if (!table.empty()) msg << "; first error: " << table.front().error;
    fail(ErrorCategory::Selection, msg.str());
  }

  SelectionResult out;
  out.best_index = *best;
  out.best_lambda = table[*best].lambda;
  out.rbic_best = table[*best].rbic;
  out.best_fit = std::move(*fits[*best]);
  out.table = std::move(table);
  return out;
}

}  // namespace rplam
