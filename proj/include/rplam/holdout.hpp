#pragma once

// Repeated train/test splits: full pipeline on the training rows, median
// absolute prediction error on the test rows.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "rplam/error.hpp"
#include "rplam/io.hpp"
#include "rplam/parallel.hpp"
#include "rplam/pipeline.hpp"
#include "rplam/random.hpp"

namespace rplam {

struct HoldoutMode {
  std::string name;
  PipelineOptions opts;
  /// Fit with lambda = 0 instead of selecting over the grid.
  bool penalized = true;
};

/// The four modes compared on real data: robust and least squares, each with
/// and without penalization.
inline std::vector<HoldoutMode> default_holdout_modes(const PenaltyConfig& pen,
                                                      const GridSpec& grid) {
  std::vector<HoldoutMode> out;
  for (Method m : {Method::Robust, Method::LeastSquares}) {
    for (bool penalized : {true, false}) {
      HoldoutMode mode;
      mode.opts = m == Method::Robust ? PipelineOptions::robust() : PipelineOptions::least_squares();
      mode.opts.penalty = pen;
      mode.opts.grid = grid;
      if (!penalized) {
        mode.opts.grid.mode = GridMode::Shared;
        mode.opts.grid.levels = {0.0};
      }
      mode.penalized = penalized;
      mode.name = std::string(to_string(m)) + (penalized ? "-pen" : "-nopen");
      out.push_back(std::move(mode));
    }
  }
  return out;
}

struct HoldoutConfig {
  Index test_size = 100;
  int reps = 50;
  std::uint64_t seed = 20240601;
  unsigned threads = 1;
};

struct HoldoutRep {
  int rep = 0;
  bool failed = false;
  std::string error;
  double mape = 0.0;
  Index size = 0;
};

struct HoldoutSummary {
  std::string mode;
  double mean_mape = 0.0;
  double mean_size = 0.0;
  int failures = 0;
  std::vector<HoldoutRep> reps;
};

/// Test rows of split `rep`: a seeded sample of `test_size` rows without
/// replacement. The same splits are used for every mode.
inline std::vector<Index> holdout_test_rows(Index n, Index test_size, std::uint64_t seed, int rep) {
  std::vector<Index> perm(n);
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(rep)}));
  for (Index k = 0; k < test_size; ++k) {
    std::uniform_int_distribution<Index> pick(k, n - 1);
    std::swap(perm[k], perm[pick(rng)]);
  }
  perm.resize(test_size);
  std::sort(perm.begin(), perm.end());
  return perm;
}

inline std::vector<HoldoutSummary> holdout_study(const PlamData& data,
                                                 const std::vector<HoldoutMode>& modes,
                                                 const HoldoutConfig& cfg) {
  data.validate();
  require(cfg.test_size >= 1 && data.n() > cfg.test_size, "need n > test_size");
  require(cfg.reps >= 1, "need at least one split");
  const Index n = data.n();
  const std::size_t M = modes.size(), R = static_cast<std::size_t>(cfg.reps);
  std::vector<HoldoutRep> slots(M * R);
  parallel_for(M * R, cfg.threads, [&](std::size_t t) {
    const std::size_t mi = t / R;
    const int rep = static_cast<int>(t % R);
    HoldoutRep& out = slots[t];
    out.rep = rep;
    const auto test = holdout_test_rows(n, cfg.test_size, cfg.seed, rep);
    std::vector<Index> train;
    for (Index i = 0, k = 0; i < n; ++i) {
      if (k < static_cast<Index>(test.size()) && test[k] == i) ++k;
      else train.push_back(i);
    }
    try {
      const PlamData tr = data.rows(train), te = data.rows(test);
      const PlamEstimate est = estimate(tr, modes[mi].opts);
      const VectorXd yhat = predict(est.prelim, est.fit(), te.z, te.x);
      out.mape = mape(te.y, yhat);
      out.size = est.fit().df;
    } catch (const std::exception& e) {
      out.failed = true;
      out.error = e.what();
    }
  });

  std::vector<HoldoutSummary> res;
  for (std::size_t mi = 0; mi < M; ++mi) {
    HoldoutSummary s;
    s.mode = modes[mi].name;
    int ok = 0;
    for (std::size_t r = 0; r < R; ++r) {
      const auto& rep = slots[mi * R + r];
      s.reps.push_back(rep);
      if (rep.failed) {
        ++s.failures;
        continue;
      }
      ++ok;
      s.mean_mape += rep.mape;
      s.mean_size += static_cast<double>(rep.size);
    }
    if (ok > 0) {
      s.mean_mape /= ok;
      s.mean_size /= ok;
    } else {
      s.mean_mape = s.mean_size = std::numeric_limits<double>::quiet_NaN();
    }
    res.push_back(std::move(s));
  }
  return res;
}

inline void write_holdout_csv(std::ostream& os, const std::vector<HoldoutSummary>& res) {
  os << "mode,mean_mape,mean_size,failures\n";
  for (const auto& s : res)
    os << s.mode << ',' << fmt(s.mean_mape) << ',' << fmt(s.mean_size) << ',' << s.failures
       << '\n';
}

}  // namespace rplam
