#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <vector>

#include "mvfmr/errors.hpp"
#include "mvfmr/mathutil.hpp"

namespace mvfmr {

// One replicate's estimated curve against the generating truth on a shared
// grid, optionally with pointwise confidence bands.
struct CurveComparison {
  VectorXd grid;
  VectorXd estimate;
  VectorXd truth;
  bool has_bands = false;
  VectorXd lower;
  VectorXd upper;

  void validate() const {
    const auto n = grid.size();
    if (n < 2) throw DimensionMismatchError("CurveComparison: grid needs >= 2 points");
    if (estimate.size() != n || truth.size() != n)
      throw DimensionMismatchError("CurveComparison: estimate/truth length != grid length");
    if (has_bands && (lower.size() != n || upper.size() != n))
      throw DimensionMismatchError("CurveComparison: band length != grid length");
    for (int i = 0; i + 1 < n; ++i)
      if (!(grid[i] < grid[i + 1]))
        throw DimensionMismatchError("CurveComparison: grid not strictly increasing");
  }
};

// Integrated squared error, normalized by domain length:
// (1/T) * integral (estimate - truth)^2 dt  by trapezoidal quadrature.
inline double ise(const CurveComparison& cmp) {
  cmp.validate();
  const VectorXd sq = (cmp.estimate - cmp.truth).array().square();
  const double span = cmp.grid[cmp.grid.size() - 1] - cmp.grid[0];
  return trapz(cmp.grid, sq) / span;
}

// The unnormalized integral, reported alongside the normalized value.
inline double ise_raw(const CurveComparison& cmp) {
  cmp.validate();
  const VectorXd sq = (cmp.estimate - cmp.truth).array().square();
  return trapz(cmp.grid, sq);
}

// Per grid point, the fraction of replicates whose band contains the truth.
inline VectorXd pointwise_coverage(const std::vector<CurveComparison>& cmps) {
  if (cmps.empty()) throw MissingBandsError("pointwise_coverage: no comparisons supplied");
  const auto n = cmps.front().grid.size();
  VectorXd hits = VectorXd::Zero(n);
  for (const auto& cmp : cmps) {
    cmp.validate();
    if (!cmp.has_bands) throw MissingBandsError("pointwise_coverage: comparison lacks bands");
    if (cmp.grid.size() != n)
      throw DimensionMismatchError("pointwise_coverage: grids differ across comparisons");
    for (int i = 0; i < n; ++i)
      if (cmp.lower[i] <= cmp.truth[i] && cmp.truth[i] <= cmp.upper[i]) hits[i] += 1.0;
  }
  return hits / static_cast<double>(cmps.size());
}

// Mann-Whitney AUC with the conventional half-credit for ties.
inline double auc(const VectorXd& scores, const VectorXd& labels) {
  const auto n = scores.size();
  if (labels.size() != n) throw DimensionMismatchError("auc: scores/labels length mismatch");
  std::int64_t npos = 0, nneg = 0;
  for (int i = 0; i < n; ++i) {
    if (labels[i] == 1.0)
      ++npos;
    else if (labels[i] == 0.0)
      ++nneg;
    else
      throw std::invalid_argument("auc: labels must be 0 or 1");
  }
  if (npos == 0 || nneg == 0) throw SingleClassError("auc: both classes must be present");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] < scores[b]; });
  // Rank-sum of the positive class using midranks over tied score groups.
  double rank_sum_pos = 0.0;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * (i + 1 + j);  // ranks are 1-based
    for (int k = i; k < j; ++k)
      if (labels[order[k]] == 1.0) rank_sum_pos += midrank;
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(npos) * (npos + 1);
  return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

inline double mse(const VectorXd& predicted, const VectorXd& observed) {
  if (predicted.size() != observed.size())
    throw DimensionMismatchError("mse: length mismatch");
  if (predicted.size() == 0) throw DimensionMismatchError("mse: empty input");
  return (predicted - observed).squaredNorm() / static_cast<double>(predicted.size());
}

}  // namespace mvfmr
