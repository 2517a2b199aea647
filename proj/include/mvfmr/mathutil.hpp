#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mvfmr/errors.hpp"

namespace mvfmr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline VectorXd linspace(double a, double b, int n) {
  if (n < 2) throw std::invalid_argument("linspace needs n >= 2");
  VectorXd v(n);
  const double step = (b - a) / (n - 1);
  for (int i = 0; i < n; ++i) v[i] = a + step * i;
  v[n - 1] = b;
  return v;
}

// Trapezoidal quadrature weights for an arbitrary increasing grid.
inline VectorXd trapezoid_weights(const VectorXd& grid) {
  const int n = static_cast<int>(grid.size());
  if (n < 2) throw std::invalid_argument("trapezoid_weights needs >= 2 nodes");
  VectorXd w = VectorXd::Zero(n);
  for (int i = 0; i + 1 < n; ++i) {
    const double h = grid[i + 1] - grid[i];
    w[i] += 0.5 * h;
    w[i + 1] += 0.5 * h;
  }
  return w;
}

inline double trapz(const VectorXd& grid, const VectorXd& values) {
  if (grid.size() != values.size()) throw DimensionMismatchError("trapz: grid/value length mismatch");
  double acc = 0.0;
  for (int i = 0; i + 1 < grid.size(); ++i)
    acc += 0.5 * (grid[i + 1] - grid[i]) * (values[i] + values[i + 1]);
  return acc;
}

// Piecewise-linear interpolation of (grid, values) at query points.
// Queries outside [grid.front, grid.back] (beyond a small tolerance) throw.
inline VectorXd interp_linear(const VectorXd& grid, const VectorXd& values, const VectorXd& queries) {
  if (grid.size() != values.size()) throw DimensionMismatchError("interp_linear: grid/value length mismatch");
  const int n = static_cast<int>(grid.size());
  const double lo = grid[0], hi = grid[n - 1];
  const double tol = 1e-9 * std::max(1.0, hi - lo);
  VectorXd out(queries.size());
  for (int q = 0; q < queries.size(); ++q) {
    double t = queries[q];
    if (t < lo - tol || t > hi + tol)
      throw OutOfDomainError("interp_linear: query " + std::to_string(t) + " outside [" +
                             std::to_string(lo) + ", " + std::to_string(hi) + "]");
    t = std::clamp(t, lo, hi);
    const double* begin = grid.data();
    int j = static_cast<int>(std::upper_bound(begin, begin + n, t) - begin) - 1;
    j = std::clamp(j, 0, n - 2);
    const double h = grid[j + 1] - grid[j];
    const double u = h > 0 ? (t - grid[j]) / h : 0.0;
    out[q] = (1.0 - u) * values[j] + u * values[j + 1];
  }
  return out;
}

// Column-wise interp_linear for a matrix of curves (rows indexed by grid).
inline MatrixXd interp_linear_cols(const VectorXd& grid, const MatrixXd& values, const VectorXd& queries) {
  if (grid.size() != values.rows()) throw DimensionMismatchError("interp_linear_cols: grid/value rows mismatch");
  MatrixXd out(queries.size(), values.cols());
  for (int k = 0; k < values.cols(); ++k)
    out.col(k) = interp_linear(grid, values.col(k), queries);
  return out;
}

// Inverse standard normal CDF: rational approximation refined by one Halley
// step on the complementary error function; |error| < 1e-15 over (0,1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must lie in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01,  -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= phigh) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  // Halley refinement against the exact CDF via erfc.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1 + x * u / 2);
  return x;
}

// Sample quantile with linear interpolation between order statistics
// (the common "type 7" definition).
inline double sample_quantile(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("sample_quantile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("sample_quantile: p outside [0,1]");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

// SplitMix64: the standard 64-bit mixing step, used to derive independent
// per-replicate seeds as hash(master_seed, replicate_index).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline double vector_mean(const VectorXd& v) { return v.size() ? v.mean() : 0.0; }

inline double vector_sd(const VectorXd& v) {
  const auto n = v.size();
  if (n < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / (n - 1));
}

inline double vector_mean(const std::vector<double>& v) {
  return vector_mean(Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
}

inline double vector_sd(const std::vector<double>& v) {
  return vector_sd(Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
}

}  // namespace mvfmr
