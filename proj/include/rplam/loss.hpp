#pragma once

// Bounded rho-functions, their derivatives and IRLS weights, and the M-scale.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rplam/error.hpp"

namespace rplam {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using VecRef = Eigen::Ref<const VectorXd>;
using MatRef = Eigen::Ref<const MatrixXd>;

enum class RhoKind { TukeyBisquare, Square };

/// A loss function rho with its tuning constant.
///
/// The Tukey bisquare is normalised so that sup rho = 1 and rho(t) = 1 for
/// |t| >= c. Square is rho(t) = t^2 and is only meant for the classical
/// least-squares comparator.
class RhoFunction {
 public:
  static RhoFunction tukey(double c) {
    require(c > 0 && std::isfinite(c), "Tukey tuning constant must be positive");
    return RhoFunction(RhoKind::TukeyBisquare, c);
  }
  static RhoFunction square() { return RhoFunction(RhoKind::Square, 1.0); }

  RhoKind kind() const { return kind_; }
  double c() const { return c_; }
  bool bounded() const { return kind_ == RhoKind::TukeyBisquare; }

  double rho(double t) const {
    if (kind_ == RhoKind::Square) return t * t;
    const double u = t / c_;
    if (std::abs(u) >= 1.0) return 1.0;
    const double v = 1.0 - u * u;
    return 1.0 - v * v * v;
  }

  double psi(double t) const {
    if (kind_ == RhoKind::Square) return 2.0 * t;
    const double u = t / c_;
    if (std::abs(u) >= 1.0) return 0.0;
    const double v = 1.0 - u * u;
    return 6.0 * t / (c_ * c_) * v * v;
  }

  double psi_prime(double t) const {
    if (kind_ == RhoKind::Square) return 2.0;
    const double u = t / c_;
    if (std::abs(u) >= 1.0) return 0.0;
    const double u2 = u * u;
    return 6.0 / (c_ * c_) * (1.0 - u2) * (1.0 - 5.0 * u2);
  }

  /// psi(t)/t, extended continuously at 0.
  double weight(double t) const {
    if (kind_ == RhoKind::Square) return 2.0;
    const double u = t / c_;
    if (std::abs(u) >= 1.0) return 0.0;
    const double v = 1.0 - u * u;
    return 6.0 / (c_ * c_) * v * v;
  }

  bool operator==(const RhoFunction&) const = default;

 private:
  RhoFunction(RhoKind k, double c) : kind_(k), c_(c) {}

  RhoKind kind_;
  double c_;
};

/// Gaussian-consistent bisquare constant for b = 0.5.
inline constexpr double kTukeyC0 = 1.54764;
/// Bisquare constant giving 85% Gaussian efficiency in regression.
inline constexpr double kTukeyC1 = 4.685;
inline constexpr double kMadConstant = 0.6745;

struct MScaleSpec {
  RhoFunction rho0 = RhoFunction::tukey(kTukeyC0);
  double b = 0.5;
  double tol = 1e-10;
  int max_iter = 100;
};

struct MScaleResult {
  double scale = 0.0;
  /// Set when no positive root exists (too many exact zeros).
  bool degenerate = false;
  int iterations = 0;
  bool used_bisection = false;
};

inline double median(std::vector<double> v) {
  require(!v.empty(), "median of an empty sample");
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (n % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

inline double median(const VecRef& x) {
  return median(std::vector<double>(x.data(), x.data() + x.size()));
}

/// Normalised median absolute deviation about the median.
inline double mad_scale(const VecRef& r) {
  require(r.size() >= 1, "mad_scale needs at least one residual");
  const double m = median(r);
  std::vector<double> dev(r.size());
  for (Index i = 0; i < r.size(); ++i) dev[i] = std::abs(r[i] - m);
  return median(std::move(dev)) / kMadConstant;
}

inline double mean_rho(const VecRef& r, const RhoFunction& rho, double s) {
  double acc = 0.0;
  for (Index i = 0; i < r.size(); ++i) acc += rho.rho(r[i] / s);
  return acc / static_cast<double>(r.size());
}

/// Solves (1/n) sum rho0(r_i / s) = b for s.
///
/// Fixed-point iteration s <- s sqrt(mean rho0(r/s) / b) started at the MAD,
/// with a bisection fallback on log s. The mean is non-increasing in s, so the
/// root is unique whenever it exists. A positive `start` replaces the MAD as
/// the initial value.
inline MScaleResult m_scale(const VecRef& r, const MScaleSpec& spec = {}, double start = 0.0) {
  require(r.size() >= 1, "m_scale needs at least one residual");
  const double n = static_cast<double>(r.size());
  MScaleResult out;

  if (spec.rho0.kind() == RhoKind::Square) {
    require(spec.b > 0.0, "m_scale target b must be positive");
    out.scale = std::sqrt(r.squaredNorm() / n / spec.b);
    out.degenerate = out.scale == 0.0;
    return out;
  }

  require(spec.b > 0.0 && spec.b < 1.0, "m_scale target b must lie in (0, sup rho0)");
  Index nonzero = 0;
  for (Index i = 0; i < r.size(); ++i)
    if (r[i] != 0.0) ++nonzero;
  // As s -> 0 the mean tends to the fraction of non-zero residuals.
  if (static_cast<double>(nonzero) / n <= spec.b) {
    out.degenerate = true;
    return out;
  }

  double s = start > 0.0 ? start : mad_scale(r);
  if (!(s > 0.0) || !std::isfinite(s)) s = r.cwiseAbs().mean();

  const auto& rho = spec.rho0;
  for (int it = 1; it <= spec.max_iter; ++it) {
    const double next = s * std::sqrt(mean_rho(r, rho, s) / spec.b);
    out.iterations = it;
    if (std::abs(next - s) <= spec.tol * s) {
      out.scale = next;
      return out;
    }
    s = next;
  }

  // Bracket the root and bisect in log-scale.
  out.used_bisection = true;
  double lo = s, hi = s;
  int guard = 0;
  while (mean_rho(r, rho, lo) <= spec.b) {
    lo *= 0.5;
    if (++guard > 2000) throw ConvergenceError("m_scale: failed to bracket root", s);
  }
  guard = 0;
  while (mean_rho(r, rho, hi) > spec.b) {
    hi *= 2.0;
    if (++guard > 2000) throw ConvergenceError("m_scale: failed to bracket root", s);
  }
  for (int it = 0; it < 400; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (mean_rho(r, rho, mid) > spec.b)
      lo = mid;
    else
      hi = mid;
    ++out.iterations;
    if (hi - lo <= spec.tol * lo) {
      out.scale = std::sqrt(lo * hi);
      return out;
    }
  }
  throw ConvergenceError("m_scale: bisection did not converge", std::sqrt(lo * hi));
}

}  // namespace rplam
