#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "mvfmr/errors.hpp"
#include "mvfmr/mathutil.hpp"

namespace mvfmr {

struct SmoothingConfig {
  // Bandwidths as fractions of the domain length [0, T].
  double mean_bandwidth_fraction = 0.10;
  double cov_bandwidth_fraction = 0.15;
  // When set, bandwidths are chosen by generalized cross-validation over a
  // log-spaced candidate grid instead of the fixed fractions above.
  bool use_gcv = false;
  int gcv_candidates = 8;
};

namespace detail {

inline double epanechnikov(double z) {
  const double a = std::abs(z);
  return a < 1.0 ? 0.75 * (1.0 - a * a) : 0.0;
}

struct SortedData1D {
  std::vector<double> x, y, w;  // sorted by x
  double span() const { return x.empty() ? 0.0 : x.back() - x.front(); }
};

inline SortedData1D sort_by_x(const VectorXd& x, const VectorXd& y, const VectorXd& w) {
  if (x.size() != y.size() || x.size() != w.size())
    throw DimensionMismatchError("local_linear_1d: input length mismatch");
  std::vector<int> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return x[a] < x[b]; });
  SortedData1D d;
  d.x.reserve(order.size());
  d.y.reserve(order.size());
  d.w.reserve(order.size());
  for (int i : order) {
    d.x.push_back(x[i]);
    d.y.push_back(y[i]);
    d.w.push_back(w[i]);
  }
  return d;
}

// Local-linear fit at a single point. Returns {value, hat_weight_at_self,
// ok}; hat_self is the weight the fit places on an observation located
// exactly at u (needed for GCV traces), valid only when such a point exists.
struct LocalFit1D {
  double value = 0.0;
  double hat_self = 0.0;
  bool ok = false;
};

inline LocalFit1D local_linear_point(const SortedData1D& d, double u, double h, double self_weight) {
  const auto lo = std::lower_bound(d.x.begin(), d.x.end(), u - h) - d.x.begin();
  const auto hi = std::upper_bound(d.x.begin(), d.x.end(), u + h) - d.x.begin();
  double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
  for (auto i = lo; i < hi; ++i) {
    const double dd = d.x[i] - u;
    const double om = d.w[i] * epanechnikov(dd / h);
    s0 += om;
    s1 += om * dd;
    s2 += om * dd * dd;
    t0 += om * d.y[i];
    t1 += om * d.y[i] * dd;
  }
  LocalFit1D out;
  const double denom = s0 * s2 - s1 * s1;
  if (s0 > 0 && denom > 1e-12 * s0 * s2) {
    out.value = (s2 * t0 - s1 * t1) / denom;
    out.hat_self = self_weight * 0.75 * s2 / denom;
    out.ok = true;
  } else if (s0 > 0) {
    // Degenerate window (single distinct x): local constant fallback.
    out.value = t0 / s0;
    out.hat_self = self_weight * 0.75 / s0;
    out.ok = false;
  }
  return out;
}

}  // namespace detail

// Local-linear smoother with Epanechnikov kernel for scattered 1-d data with
// observation weights. Windows too degenerate for a linear fit are widened
// (bandwidth x1.5) until the fit succeeds or the bandwidth covers the data.
inline VectorXd local_linear_1d(const VectorXd& x, const VectorXd& y, const VectorXd& w,
                                const VectorXd& eval, double bandwidth) {
  const auto d = detail::sort_by_x(x, y, w);
  if (d.x.empty()) throw std::invalid_argument("local_linear_1d: no observations");
  const double span = std::max(d.span(), 1e-12);
  VectorXd out(eval.size());
  for (int q = 0; q < eval.size(); ++q) {
    double h = bandwidth;
    detail::LocalFit1D fit;
    while (true) {
      fit = detail::local_linear_point(d, eval[q], h, 0.0);
      if (fit.ok || h > 2.0 * span) break;
      h *= 1.5;
    }
    if (!fit.ok && h > 2.0 * span) {
      // All x effectively identical: weighted mean is the only sane answer.
      fit = detail::local_linear_point(d, eval[q], std::numeric_limits<double>::max() / 4, 0.0);
    }
    out[q] = fit.value;
  }
  return out;
}

// Generalized cross-validation score for a candidate bandwidth, evaluated at
// the observation locations: n * RSS / (n - tr(H))^2.
inline double gcv_score_1d(const VectorXd& x, const VectorXd& y, const VectorXd& w, double bandwidth) {
  const auto d = detail::sort_by_x(x, y, w);
  const auto n = static_cast<double>(d.x.size());
  double rss = 0.0, trace = 0.0;
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    const auto fit = detail::local_linear_point(d, d.x[i], bandwidth, d.w[i]);
    rss += d.w[i] * (d.y[i] - fit.value) * (d.y[i] - fit.value);
    trace += fit.hat_self;
  }
  const double dof = n - trace;
  if (dof <= 1.0) return std::numeric_limits<double>::infinity();
  return n * rss / (dof * dof);
}

// Pick a bandwidth by GCV over log-spaced candidates in [h_min, span/2].
inline double select_bandwidth_gcv_1d(const VectorXd& x, const VectorXd& y, const VectorXd& w,
                                      double domain_length, int candidates) {
  const double h_max = 0.5 * domain_length;
  const double h_min = std::min(0.02 * domain_length, h_max / 4);
  double best_h = h_max, best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < candidates; ++i) {
    const double f = candidates > 1 ? static_cast<double>(i) / (candidates - 1) : 0.0;
    const double h = h_min * std::pow(h_max / h_min, f);
    const double score = gcv_score_1d(x, y, w, h);
    if (score < best) {
      best = score;
      best_h = h;
    }
  }
  return best_h;
}

namespace detail {

// One local-plane fit on binned surface data. Bins are grid-node indexed;
// entries with zero count are missing.
struct LocalFit2D {
  double value = 0.0;
  double hat_self = 0.0;
  bool ok = false;
};

inline LocalFit2D local_plane_point(const VectorXd& grid, const MatrixXd& means, const MatrixXd& counts,
                                    double u, double v, double h, double self_weight) {
  const int g = static_cast<int>(grid.size());
  const double lo_u = u - h, hi_u = u + h, lo_v = v - h, hi_v = v + h;
  const double* gb = grid.data();
  const int i0 = static_cast<int>(std::lower_bound(gb, gb + g, lo_u) - gb);
  const int i1 = static_cast<int>(std::upper_bound(gb, gb + g, hi_u) - gb);
  const int j0 = static_cast<int>(std::lower_bound(gb, gb + g, lo_v) - gb);
  const int j1 = static_cast<int>(std::upper_bound(gb, gb + g, hi_v) - gb);
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  Eigen::Vector3d r = Eigen::Vector3d::Zero();
  for (int i = i0; i < i1; ++i) {
    const double d1 = grid[i] - u;
    const double k1 = epanechnikov(d1 / h);
    if (k1 == 0.0) continue;
    for (int j = j0; j < j1; ++j) {
      const double c = counts(i, j);
      if (c <= 0.0) continue;
      const double d2 = grid[j] - v;
      const double k2 = epanechnikov(d2 / h);
      if (k2 == 0.0) continue;
      const double om = c * k1 * k2;
      Eigen::Vector3d b(1.0, d1, d2);
      m.noalias() += om * b * b.transpose();
      r.noalias() += om * means(i, j) * b;
    }
  }
  LocalFit2D out;
  if (m(0, 0) <= 0.0) return out;
  const Eigen::LDLT<Eigen::Matrix3d> ldlt(m);
  const Eigen::Vector3d dvec = ldlt.vectorD();
  const double dmax = dvec.maxCoeff(), dmin = dvec.minCoeff();
  if (ldlt.info() == Eigen::Success && dmin > 1e-10 * std::max(dmax, 1e-300)) {
    const Eigen::Vector3d beta = ldlt.solve(r);
    out.value = beta[0];
    // Weight on a bin centered exactly at (u, v): e1' M^{-1} b * omega.
    const Eigen::Vector3d e1 = ldlt.solve(Eigen::Vector3d(1.0, 0.0, 0.0));
    out.hat_self = self_weight * 0.75 * 0.75 * e1[0];
    out.ok = true;
  } else {
    out.value = r[0] / m(0, 0);
    out.hat_self = self_weight * 0.75 * 0.75 / m(0, 0);
    out.ok = false;
  }
  return out;
}

}  // namespace detail

// Local-linear (plane) smoother for a binned surface: sums/counts accumulate
// raw products at grid-node pairs; output is the smoothed surface on the full
// grid x grid square. Degenerate windows trigger bandwidth widening.
inline MatrixXd local_linear_surface(const VectorXd& grid, const MatrixXd& sums, const MatrixXd& counts,
                                     double bandwidth) {
  const int g = static_cast<int>(grid.size());
  if (sums.rows() != g || sums.cols() != g || counts.rows() != g || counts.cols() != g)
    throw DimensionMismatchError("local_linear_surface: accumulator shape mismatch");
  MatrixXd means = MatrixXd::Zero(g, g);
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j)
      if (counts(i, j) > 0) means(i, j) = sums(i, j) / counts(i, j);
  const double span = std::max(grid[g - 1] - grid[0], 1e-12);
  MatrixXd out(g, g);
  for (int i = 0; i < g; ++i) {
    for (int j = i; j < g; ++j) {
      double h = bandwidth;
      detail::LocalFit2D fit;
      while (true) {
        fit = detail::local_plane_point(grid, means, counts, grid[i], grid[j], h, 0.0);
        if (fit.ok || h > 2.0 * span) break;
        h *= 1.5;
      }
      out(i, j) = fit.value;
      out(j, i) = fit.value;
    }
  }
  return out;
}

// GCV for the surface smoother over occupied bins.
inline double gcv_score_surface(const VectorXd& grid, const MatrixXd& sums, const MatrixXd& counts,
                                double bandwidth) {
  const int g = static_cast<int>(grid.size());
  MatrixXd means = MatrixXd::Zero(g, g);
  double n = 0.0;
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j)
      if (counts(i, j) > 0) {
        means(i, j) = sums(i, j) / counts(i, j);
        n += 1.0;
      }
  double rss = 0.0, trace = 0.0;
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      if (counts(i, j) <= 0) continue;
      const auto fit =
          detail::local_plane_point(grid, means, counts, grid[i], grid[j], bandwidth, counts(i, j));
      const double resid = means(i, j) - fit.value;
      rss += counts(i, j) * resid * resid;
      trace += fit.hat_self;
    }
  const double dof = n - trace;
  if (dof <= 1.0) return std::numeric_limits<double>::infinity();
  return n * rss / (dof * dof);
}

inline double select_bandwidth_gcv_surface(const VectorXd& grid, const MatrixXd& sums,
                                           const MatrixXd& counts, double domain_length,
                                           int candidates) {
  const double h_max = 0.5 * domain_length;
  const double h_min = std::min(0.05 * domain_length, h_max / 4);
  double best_h = h_max, best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < candidates; ++i) {
    const double f = candidates > 1 ? static_cast<double>(i) / (candidates - 1) : 0.0;
    const double h = h_min * std::pow(h_max / h_min, f);
    const double score = gcv_score_surface(grid, sums, counts, h);
    if (score < best) {
      best = score;
      best_h = h;
    }
  }
  return best_h;
}

}  // namespace mvfmr
