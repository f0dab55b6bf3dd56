#pragma once

// End-to-end estimation: preliminary ridge-S fit, then penalty selection.

#include <optional>
#include <string>
#include <vector>

#include "rplam/error.hpp"
#include "rplam/preliminary.hpp"
#include "rplam/selection.hpp"
#include "rplam/solver.hpp"
#include "rplam/splines.hpp"

namespace rplam {

enum class Method { Robust, LeastSquares };

inline const char* to_string(Method m) { return m == Method::Robust ? "rob" : "ls"; }

struct PipelineOptions {
  Method method = Method::Robust;
  /// Unset means cubic splines with default_internal_knots(n) quantile knots.
  std::optional<SplineSpec> spline;
  PreliminaryOptions prelim;
  SolverOptions solver;
  PenaltyConfig penalty;
  GridSpec grid;
  bool warm_start = false;
  unsigned threads = 1;

  static PipelineOptions robust() { return PipelineOptions{}; }

  static PipelineOptions least_squares() {
    PipelineOptions o;
    o.method = Method::LeastSquares;
    o.prelim = PreliminaryOptions::least_squares();
    o.solver.rho1 = RhoFunction::square();
    return o;
  }

  SplineSpec spline_for(Index n) const {
    if (spline) return *spline;
    SplineSpec s;
    s.internal_knots = default_internal_knots(n);
    return s;
  }
};

struct PlamEstimate {
  PreliminaryFit prelim;
  SelectionResult selection;
  std::vector<std::string> warnings;

  const PenalizedFit& fit() const { return selection.best_fit; }
};

inline PreliminaryFit preliminary_stage(const PlamData& data, const PipelineOptions& opts) {
  data.validate();
  const AdditiveDesign design = build_design(data.x, {opts.spline_for(data.n())});
  PreliminaryFit prelim = ridge_s_fit(data, design, opts.prelim);
  if (prelim.exact_fit || !(prelim.sigma_hat > 0.0))
    fail(ErrorCategory::DegenerateScale, "preliminary scale estimate is zero (exact fit)");
  return prelim;
}

/// Preliminary fit, then the RBIC minimiser over the configured grid.
inline PlamEstimate estimate(const PlamData& data, const PipelineOptions& opts) {
  PlamEstimate est;
  est.prelim = preliminary_stage(data, opts);
  if (auto w = check_mm_pair(opts.prelim.rho0, opts.solver.rho1)) est.warnings.push_back(*w);

  GridSpec gs = opts.grid;
  gs.q = data.q();
  const PenaltyGrid grid = make_grid(gs);
  SelectOptions so;
  so.solver = opts.solver;
  so.warm_start = opts.warm_start;
  so.threads = opts.threads;
  est.selection = select(data, est.prelim, opts.penalty, grid, so);
  return est;
}

}  // namespace rplam
