#pragma once

// SCAD, MCP and adaptive-lasso penalties with per-coordinate lambda, and the
// local quadratic approximation used by the penalized solver.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "rplam/error.hpp"
#include "rplam/loss.hpp"

namespace rplam {

enum class PenaltyKind { Scad, Mcp, AdaLasso };

inline const char* to_string(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::Scad: return "scad";
    case PenaltyKind::Mcp: return "mcp";
    case PenaltyKind::AdaLasso: return "adalasso";
  }
  return "?";
}

inline constexpr double kScadDefaultA = 3.7;

/// J_lambda(b) = sum_s p_{lambda_s}(|b_s|).
///
/// For the adaptive lasso, lambda_s plays the role of iota and the effective
/// weight is lambda_s / |beta_tilde_s|^gamma; a zero pilot coefficient makes
/// any non-zero b_s infinitely expensive.
class Penalty {
 public:
  static Penalty scad(VectorXd lambda, double a = kScadDefaultA) {
    require(a > 2.0, "SCAD requires a > 2");
    return Penalty(PenaltyKind::Scad, std::move(lambda), a, 0.0, VectorXd());
  }

  static Penalty mcp(VectorXd lambda, double a) {
    require(a > 0.0, "MCP requires a > 0");
    return Penalty(PenaltyKind::Mcp, std::move(lambda), a, 0.0, VectorXd());
  }

  static Penalty adalasso(VectorXd iota, double gamma, VectorXd beta_tilde) {
    require(gamma > 0.0, "adaptive lasso requires gamma > 0");
    require(beta_tilde.size() == iota.size(), "pilot estimate has the wrong length",
            ErrorCategory::DimensionMismatch);
    return Penalty(PenaltyKind::AdaLasso, std::move(iota), 0.0, gamma, std::move(beta_tilde));
  }

  /// Same kind and constants with a different lambda vector.
  Penalty with_lambda(VectorXd lambda) const {
    return Penalty(kind_, std::move(lambda), a_, gamma_, beta_tilde_);
  }

  PenaltyKind kind() const { return kind_; }
  const VectorXd& lambda() const { return lambda_; }
  Index q() const { return lambda_.size(); }
  double a() const { return a_; }
  double gamma() const { return gamma_; }
  const VectorXd& beta_tilde() const { return beta_tilde_; }

  /// Coordinate that no finite coefficient other than zero can afford.
  bool forced_zero(Index s) const {
    return kind_ == PenaltyKind::AdaLasso && beta_tilde_[s] == 0.0 && lambda_[s] > 0.0;
  }

  /// lambda_s / |beta_tilde_s|^gamma for the adaptive lasso.
  double adaptive_weight(Index s) const {
    if (lambda_[s] == 0.0) return 0.0;
    if (beta_tilde_[s] == 0.0) return std::numeric_limits<double>::infinity();
    return lambda_[s] / std::pow(std::abs(beta_tilde_[s]), gamma_);
  }

  double value(Index s, double b) const {
    require(b >= 0.0, "penalty argument must be non-negative");
    const double lam = lambda_[s];
    if (b == 0.0) return 0.0;
    switch (kind_) {
      case PenaltyKind::Scad:
        if (b <= lam) return lam * b;
        if (b <= a_ * lam) return -(b * b - 2.0 * a_ * lam * b + lam * lam) / (2.0 * (a_ - 1.0));
        return lam * lam * (a_ + 1.0) / 2.0;
      case PenaltyKind::Mcp:
        if (b <= a_ * lam) return lam * b - b * b / (2.0 * a_);
        return a_ * lam * lam / 2.0;
      case PenaltyKind::AdaLasso:
        return adaptive_weight(s) * b;
    }
    return 0.0;
  }

  double derivative(Index s, double b) const {
    if (!(b > 0.0)) fail(ErrorCategory::InvalidArgument, "penalty derivative needs b > 0");
    const double lam = lambda_[s];
    switch (kind_) {
      case PenaltyKind::Scad:
        if (b <= lam) return lam;
        if (b <= a_ * lam) return (a_ * lam - b) / (a_ - 1.0);
        return 0.0;
      case PenaltyKind::Mcp:
        if (b <= a_ * lam) return lam - b / a_;
        return 0.0;
      case PenaltyKind::AdaLasso:
        return adaptive_weight(s);
    }
    return 0.0;
  }

  double total(const VecRef& b) const {
    require(b.size() == q(), "coefficient vector has the wrong length",
            ErrorCategory::DimensionMismatch);
    double acc = 0.0;
    for (Index s = 0; s < q(); ++s) acc += value(s, std::abs(b[s]));
    return acc;
  }

 private:
  Penalty(PenaltyKind kind, VectorXd lambda, double a, double gamma, VectorXd beta_tilde)
      : kind_(kind), lambda_(std::move(lambda)), a_(a), gamma_(gamma),
        beta_tilde_(std::move(beta_tilde)) {
    for (Index s = 0; s < lambda_.size(); ++s)
      require(lambda_[s] >= 0.0 && std::isfinite(lambda_[s]),
              "penalty parameters must be finite and non-negative");
  }

  PenaltyKind kind_;
  VectorXd lambda_;
  double a_;
  double gamma_;
  VectorXd beta_tilde_;
};

inline double total_penalty(const Penalty& pen, const VecRef& b) { return pen.total(b); }

/// Diagonal of the local quadratic approximation at b0.
struct LqaDiagonal {
  VectorXd diag;             // p'(|b0_s|) / (2 |b0_s|) on the active set, 0 elsewhere
  std::vector<bool> active;  // false = frozen at exactly zero

  Index active_count() const {
    Index c = 0;
    for (bool a : active) c += a;
    return c;
  }
};

/// Coordinates with |b0_s| < freeze_tol are frozen at zero unless their
/// penalty is flat at the origin (lambda_s = 0).
inline LqaDiagonal lqa_diagonal(const Penalty& pen, const VecRef& b0, double freeze_tol) {
  require(freeze_tol > 0.0, "freeze tolerance must be positive");
  require(b0.size() == pen.q(), "coefficient vector has the wrong length",
          ErrorCategory::DimensionMismatch);
  LqaDiagonal out{VectorXd::Zero(pen.q()), std::vector<bool>(pen.q(), true)};
  for (Index s = 0; s < pen.q(); ++s) {
    const double b = std::abs(b0[s]);
    if (pen.forced_zero(s)) {
      out.active[s] = false;
    } else if (pen.lambda()[s] == 0.0) {
      out.diag[s] = 0.0;
    } else if (b < freeze_tol) {
      out.active[s] = false;
    } else {
      out.diag[s] = pen.derivative(s, b) / (2.0 * b);
    }
  }
  return out;
}

}  // namespace rplam
