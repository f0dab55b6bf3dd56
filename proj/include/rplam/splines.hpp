#pragma once

// Centered B-spline bases for the additive components.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "rplam/error.hpp"
#include "rplam/loss.hpp"

namespace rplam {

enum class KnotPlacement { Quantile, Uniform };

struct SplineSpec {
  int order = 4;  // 4 = cubic
  int internal_knots = 1;
  KnotPlacement placement = KnotPlacement::Quantile;

  int basis_size() const { return internal_knots + order; }
};

/// max(1, round(n^{1/5})) interior knots.
inline int default_internal_knots(Index n) {
  return std::max(1, static_cast<int>(std::lround(std::pow(static_cast<double>(n), 0.2))));
}

/// Gauss-Legendre nodes and weights on [-1, 1].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int m) {
  require(m >= 1, "Gauss-Legendre needs at least one node");
  std::vector<double> x(m), w(m);
  for (int i = 0; i < (m + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= m; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = m * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = -z;
    x[m - 1 - i] = z;
    w[i] = w[m - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

/// Type-7 (linear interpolation) empirical quantile.
inline double empirical_quantile(const std::vector<double>& sorted, double prob) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Clamped knot vector on [0,1]: 0 and 1 repeated `order` times plus the
/// interior knots.
inline std::vector<double> make_knots(const VecRef& x_sample, const SplineSpec& spec) {
  require(spec.order >= 2, "spline order must be at least 2");
  require(spec.internal_knots >= 0, "number of internal knots must be non-negative");
  const int n_int = spec.internal_knots;

  std::vector<double> interior(n_int);
  if (spec.placement == KnotPlacement::Uniform) {
    for (int i = 0; i < n_int; ++i) interior[i] = (i + 1.0) / (n_int + 1.0);
  } else if (n_int > 0) {
    std::vector<double> sorted(x_sample.data(), x_sample.data() + x_sample.size());
    for (double v : sorted)
      require(v >= 0.0 && v <= 1.0, "knot sample must lie in [0,1]");
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> uniq = sorted;
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    require(static_cast<int>(uniq.size()) >= n_int,
            "fewer distinct covariate values than internal knots");
    constexpr double eps = 1e-9;
    double prev = 0.0;
    for (int i = 0; i < n_int; ++i) {
      double k = empirical_quantile(sorted, (i + 1.0) / (n_int + 1.0));
      if (k <= prev) k = prev + eps;
      require(k < 1.0, "quantile knots collapse onto the boundary");
      interior[i] = prev = k;
    }
  }

  std::vector<double> knots;
  knots.reserve(n_int + 2 * spec.order);
  knots.insert(knots.end(), spec.order, 0.0);
  knots.insert(knots.end(), interior.begin(), interior.end());
  knots.insert(knots.end(), spec.order, 1.0);
  return knots;
}

/// Min/max map of a raw covariate onto [0,1].
struct UnitMap {
  double lo = 0.0;
  double hi = 1.0;

  static UnitMap fit(const VecRef& x) {
    require(x.size() > 0, "cannot map an empty column");
    UnitMap m{x.minCoeff(), x.maxCoeff()};
    require(m.hi > m.lo, "cannot map a constant column onto [0,1]");
    return m;
  }
  double apply(double v) const { return (v - lo) / (hi - lo); }
  double invert(double u) const { return lo + u * (hi - lo); }
};

/// B-spline basis of one covariate, centered by its exact integrals so every
/// function in the span integrates to zero over [0,1].
class CenteredBasis {
 public:
  CenteredBasis(SplineSpec spec, std::vector<double> knots)
      : spec_(spec), knots_(std::move(knots)) {
    require(spec_.order >= 2, "spline order must be at least 2");
    require(static_cast<int>(knots_.size()) == spec_.basis_size() + spec_.order,
            "knot vector length does not match the spline spec");
    for (std::size_t i = 1; i < knots_.size(); ++i)
      require(knots_[i] >= knots_[i - 1], "knot vector must be non-decreasing");
    require(knots_.front() == 0.0 && knots_.back() == 1.0, "knots must span [0,1]");
    compute_offsets();
    compute_gram();
  }

  static CenteredBasis from_sample(const VecRef& x, const SplineSpec& spec) {
    return CenteredBasis(spec, make_knots(x, spec));
  }

  const SplineSpec& spec() const { return spec_; }
  const std::vector<double>& knots() const { return knots_; }
  int size() const { return spec_.basis_size(); }
  int reduced_size() const { return size() - 1; }
  const VectorXd& offsets() const { return offsets_; }
  /// Gram matrix of the reduced centered basis, so that c' H c = int eta_c^2.
  const MatrixXd& gram() const { return gram_; }

  /// Cox-de Boor evaluation of all k raw basis functions.
  VectorXd eval_raw(double x) const {
    require(x >= 0.0 && x <= 1.0, "spline argument outside [0,1]: " + std::to_string(x));
    VectorXd out = VectorXd::Zero(size());
    eval_nonzero(x, [&](int idx, double v) { out[idx] = v; });
    return out;
  }

  VectorXd eval_centered(double x) const { return eval_raw(x) - offsets_; }

  VectorXd eval_reduced(double x) const { return eval_centered(x).head(reduced_size()); }

  double eta(const VecRef& coeff, double x) const {
    require(coeff.size() == reduced_size(), "coefficient block has the wrong length");
    return eval_reduced(x).dot(coeff);
  }

  /// Non-degenerate knot intervals [t_i, t_{i+1}).
  std::vector<std::pair<double, double>> intervals() const {
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i + 1 < knots_.size(); ++i)
      if (knots_[i + 1] > knots_[i]) out.emplace_back(knots_[i], knots_[i + 1]);
    return out;
  }

 private:
  template <typename F>
  void eval_nonzero(double x, F&& emit) const {
    const int p = spec_.order - 1;  // degree
    const int k = size();
    // Span index mu with t_mu <= x < t_{mu+1}; x = 1 uses the last interval.
    int mu = p;
    if (x >= knots_[k]) {
      mu = k - 1;
    } else {
      mu = static_cast<int>(std::upper_bound(knots_.begin(), knots_.end(), x) -
                            knots_.begin()) - 1;
      mu = std::clamp(mu, p, k - 1);
    }
    std::vector<double> n(p + 1, 0.0), left(p + 1), right(p + 1);
    n[0] = 1.0;
    for (int j = 1; j <= p; ++j) {
      left[j] = x - knots_[mu + 1 - j];
      right[j] = knots_[mu + j] - x;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double denom = right[r + 1] + left[j - r];
        const double tmp = denom > 0.0 ? n[r] / denom : 0.0;
        n[r] = saved + right[r + 1] * tmp;
        saved = left[j - r] * tmp;
      }
      n[j] = saved;
    }
    for (int r = 0; r <= p; ++r) emit(mu - p + r, n[r]);
  }

  void compute_offsets() {
    const int nodes = (spec_.order + 1) / 2 + 1;
    const auto [gx, gw] = gauss_legendre(nodes);
    offsets_ = VectorXd::Zero(size());
    for (const auto& [a, b] : intervals()) {
      const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
      for (int g = 0; g < nodes; ++g) {
        const double w = gw[g] * half;
        eval_nonzero(mid + half * gx[g], [&](int idx, double v) { offsets_[idx] += w * v; });
      }
    }
  }

  void compute_gram() {
    const int nodes = spec_.order;
    const auto [gx, gw] = gauss_legendre(nodes);
    const int k = size();
    MatrixXd raw = MatrixXd::Zero(k, k);
    for (const auto& [a, b] : intervals()) {
      const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
      for (int g = 0; g < nodes; ++g) {
        const VectorXd v = eval_raw(mid + half * gx[g]);
        raw.noalias() += (gw[g] * half) * v * v.transpose();
      }
    }
    // int (B_s - m_s)(B_t - m_t) = int B_s B_t - m_s m_t
    const MatrixXd centered = raw - offsets_ * offsets_.transpose();
    gram_ = centered.topLeftCorner(k - 1, k - 1);
    gram_ = 0.5 * (gram_ + gram_.transpose()).eval();
  }

  SplineSpec spec_;
  std::vector<double> knots_;
  VectorXd offsets_;
  MatrixXd gram_;
};

inline double eval_eta(const CenteredBasis& basis, const VecRef& coeff, double x) {
  return basis.eta(coeff, x);
}

/// Stacked reduced centered bases of all additive covariates.
struct AdditiveDesign {
  std::vector<CenteredBasis> bases;
  MatrixXd V;                  // n x K
  std::vector<Index> offsets;  // start column of each block

  Index K() const { return V.cols(); }
  Index p() const { return static_cast<Index>(bases.size()); }
  Index block_size(Index j) const { return bases[j].reduced_size(); }

  /// Rows for new covariate values, built with the stored bases.
  MatrixXd rows(const MatRef& X) const {
    require(X.cols() == p(), "additive covariate count does not match the design",
            ErrorCategory::DimensionMismatch);
    MatrixXd out(X.rows(), K());
    for (Index j = 0; j < p(); ++j)
      for (Index i = 0; i < X.rows(); ++i)
        out.block(i, offsets[j], 1, block_size(j)) = bases[j].eval_reduced(X(i, j)).transpose();
    return out;
  }

  static AdditiveDesign from_bases(std::vector<CenteredBasis> bases, const MatRef& X) {
    AdditiveDesign d;
    d.bases = std::move(bases);
    Index col = 0;
    for (const auto& b : d.bases) {
      d.offsets.push_back(col);
      col += b.reduced_size();
    }
    d.V = MatrixXd(X.rows(), col);
    d.V = d.rows(X);
    return d;
  }
};

/// Builds the additive design. `specs` holds one spec per column of X, or a
/// single spec shared by all columns.
inline AdditiveDesign build_design(const MatRef& X, const std::vector<SplineSpec>& specs) {
  require(specs.size() == 1 || static_cast<Index>(specs.size()) == X.cols(),
          "need one spline spec per additive covariate", ErrorCategory::DimensionMismatch);
  std::vector<CenteredBasis> bases;
  for (Index j = 0; j < X.cols(); ++j) {
    const auto& spec = specs.size() == 1 ? specs[0] : specs[j];
    bases.push_back(CenteredBasis::from_sample(X.col(j), spec));
  }
  return AdditiveDesign::from_bases(std::move(bases), X);
}

}  // namespace rplam
