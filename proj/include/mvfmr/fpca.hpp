#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mvfmr/errors.hpp"
#include "mvfmr/mathutil.hpp"
#include "mvfmr/smoothing.hpp"

namespace mvfmr {

// Irregular, possibly sparse observations of one subject's trajectory for a
// single exposure. Times must lie in [0, domain_end] and be strictly
// increasing once sorted; fewer than two observations is rejected.
struct SparseFunctionalSample {
  std::int64_t subject_id = 0;
  std::vector<double> times;
  std::vector<double> values;

  void canonicalize() {
    std::vector<int> order(times.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return times[a] < times[b]; });
    std::vector<double> t(times.size()), v(times.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      t[i] = times[order[i]];
      v[i] = values[order[i]];
    }
    times = std::move(t);
    values = std::move(v);
  }

  void validate(double domain_end) const {
    const std::string who = "subject " + std::to_string(subject_id);
    if (times.size() != values.size())
      throw SchemaError(who + ": times/values length mismatch");
    if (times.size() < 2) throw SchemaError(who + ": fewer than 2 observations");
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (!(times[i] >= 0.0 && times[i] <= domain_end))
        throw SchemaError(who + ": time " + std::to_string(times[i]) + " outside [0, " +
                          std::to_string(domain_end) + "]");
      if (i > 0 && !(times[i] > times[i - 1]))
        throw SchemaError(who + ": duplicate or non-increasing observation times");
    }
  }
};

struct FpcaOptions {
  int grid_size = 51;
  int max_components = 5;
  SmoothingConfig smoothing;
};

// Fitted functional principal component decomposition on a uniform grid.
// Eigenfunctions are orthonormal under trapezoidal quadrature; scores are
// BLUP predictions, centered column-wise. A model with no positive
// eigenvalues (no functional variation) is flagged degenerate with K = 0.
struct FpcaModel {
  double domain_end = 0.0;
  VectorXd grid;
  VectorXd mean;
  MatrixXd eigenfunctions;        // grid_size x K
  VectorXd eigenvalues;           // K, positive, nonincreasing
  double noise_variance = 0.0;    // sigma^2 >= 0
  MatrixXd scores;                // N x K, column means ~ 0
  VectorXd fraction_of_variance;  // K, relative to all positive eigenvalues
  bool degenerate = false;
  std::vector<std::int64_t> subject_ids;  // row order of scores
  double mean_bandwidth = 0.0;
  double cov_bandwidth = 0.0;

  int components() const { return static_cast<int>(eigenvalues.size()); }
};

inline VectorXd evaluate_mean(const FpcaModel& model, const VectorXd& times) {
  if (times.size() == 0) return VectorXd(0);
  return interp_linear(model.grid, model.mean, times);
}

inline MatrixXd evaluate_eigenfunctions(const FpcaModel& model, const VectorXd& times) {
  if (times.size() == 0) return MatrixXd(0, model.components());
  if (model.components() == 0) {
    interp_linear(model.grid, model.mean, times);  // domain check only
    return MatrixXd(times.size(), 0);
  }
  return interp_linear_cols(model.grid, model.eigenfunctions, times);
}

namespace detail {

inline int nearest_node(double t, double t0, double step, int g) {
  const int i = static_cast<int>(std::lround((t - t0) / step));
  return std::clamp(i, 0, g - 1);
}

// BLUP score prediction for one subject given the fitted model pieces.
// Sigma_i = Phi_i Lambda Phi_i' + sigma^2 I, ridged by 1e-8 when singular.
inline VectorXd blup_scores(const MatrixXd& phi_i, const VectorXd& lambda, double sigma2,
                            const VectorXd& centered, std::int64_t subject_id) {
  const int ni = static_cast<int>(phi_i.rows());
  MatrixXd sigma = phi_i * lambda.asDiagonal() * phi_i.transpose();
  sigma.diagonal().array() += sigma2;
  auto solve_ok = [&](const MatrixXd& s, VectorXd& out) {
    Eigen::LDLT<MatrixXd> ldlt(s);
    if (ldlt.info() != Eigen::Success) return false;
    const VectorXd dv = ldlt.vectorD();
    const double dmax = dv.cwiseAbs().maxCoeff();
    if (!(dv.minCoeff() > 1e-14 * std::max(dmax, 1e-300))) return false;
    out = ldlt.solve(centered);
    return true;
  };
  VectorXd sol(ni);
  if (!solve_ok(sigma, sol)) {
    MatrixXd ridged = sigma;
    ridged.diagonal().array() += 1e-8;
    if (!solve_ok(ridged, sol))
      throw SingularCovarianceError("subject " + std::to_string(subject_id) +
                                    ": singular covariance after 1e-8 ridge");
  }
  return lambda.asDiagonal() * (phi_i.transpose() * sol);
}

}  // namespace detail

// Uncentered BLUP score predictions for arbitrary samples under a fitted
// model (one row per sample, K columns). Sample times must lie inside the
// model domain.
inline MatrixXd predict_scores(const FpcaModel& model, const std::vector<SparseFunctionalSample>& samples) {
  const int n = static_cast<int>(samples.size());
  const int k = model.components();
  MatrixXd scores = MatrixXd::Zero(n, k);
  for (int si = 0; si < n; ++si) {
    const auto& s = samples[si];
    s.validate(model.domain_end);
    if (k == 0) continue;
    const int ni = static_cast<int>(s.times.size());
    VectorXd t(ni), v(ni);
    for (int i = 0; i < ni; ++i) {
      t[i] = s.times[i];
      v[i] = s.values[i];
    }
    const MatrixXd phi_i = interp_linear_cols(model.grid, model.eigenfunctions, t);
    const VectorXd centered = v - interp_linear(model.grid, model.mean, t);
    scores.row(si) =
        detail::blup_scores(phi_i, model.eigenvalues, model.noise_variance, centered, s.subject_id)
            .transpose();
  }
  return scores;
}

// Sparse-data FPCA via PACE: local-linear smoothing of the pooled mean and
// of the raw covariance surface (diagonal excluded), noise variance from the
// average gap between the smoothed diagonal-inclusive variance curve and the
// smoothed covariance diagonal, eigendecomposition under trapezoidal
// quadrature, and per-subject conditional-expectation (BLUP) scores.
inline FpcaModel fit_fpca(const std::vector<SparseFunctionalSample>& samples, double domain_end,
                          const FpcaOptions& opts = {}) {
  if (samples.size() < 50)
    throw std::invalid_argument("fit_fpca: need >= 50 subjects, got " + std::to_string(samples.size()));
  if (opts.grid_size < 20) throw std::invalid_argument("fit_fpca: grid_size must be >= 20");
  if (opts.max_components < 1) throw std::invalid_argument("fit_fpca: max_components must be >= 1");
  if (!(domain_end > 0)) throw std::invalid_argument("fit_fpca: domain_end must be positive");

  const int n_subj = static_cast<int>(samples.size());
  std::size_t n_obs = 0;
  for (const auto& s : samples) {
    s.validate(domain_end);
    n_obs += s.times.size();
  }

  // Pooled observations; domain coverage check (no gap wider than T/5,
  // counting the stretches before the first and after the last observation).
  VectorXd all_t(n_obs), all_v(n_obs);
  {
    std::size_t k = 0;
    for (const auto& s : samples)
      for (std::size_t i = 0; i < s.times.size(); ++i, ++k) {
        all_t[k] = s.times[i];
        all_v[k] = s.values[i];
      }
  }
  {
    std::vector<double> sorted(all_t.data(), all_t.data() + all_t.size());
    std::sort(sorted.begin(), sorted.end());
    double max_gap = std::max(sorted.front() - 0.0, domain_end - sorted.back());
    for (std::size_t i = 1; i < sorted.size(); ++i)
      max_gap = std::max(max_gap, sorted[i] - sorted[i - 1]);
    if (max_gap > domain_end / 5.0)
      throw DomainGapError("fit_fpca: pooled observations leave a domain gap of " +
                           std::to_string(max_gap) + " > T/5");
  }

  FpcaModel model;
  model.domain_end = domain_end;
  model.grid = linspace(0.0, domain_end, opts.grid_size);
  const int g = opts.grid_size;
  const double step = domain_end / (g - 1);

  const VectorXd ones = VectorXd::Ones(all_t.size());
  model.mean_bandwidth =
      opts.smoothing.use_gcv
          ? select_bandwidth_gcv_1d(all_t, all_v, ones, domain_end, opts.smoothing.gcv_candidates)
          : opts.smoothing.mean_bandwidth_fraction * domain_end;
  model.mean = local_linear_1d(all_t, all_v, ones, model.grid, model.mean_bandwidth);

  // Raw covariance accumulation at grid-node bins; diagonal kept separately
  // (it carries the measurement-error inflation and is excluded from the
  // surface smooth).
  MatrixXd cov_sums = MatrixXd::Zero(g, g), cov_counts = MatrixXd::Zero(g, g);
  VectorXd var_sums = VectorXd::Zero(g), var_counts = VectorXd::Zero(g);
  for (const auto& s : samples) {
    const int ni = static_cast<int>(s.times.size());
    VectorXd t(ni), v(ni);
    for (int i = 0; i < ni; ++i) {
      t[i] = s.times[i];
      v[i] = s.values[i];
    }
    const VectorXd resid = v - interp_linear(model.grid, model.mean, t);
    for (int i = 0; i < ni; ++i) {
      const int bi = detail::nearest_node(t[i], 0.0, step, g);
      var_sums[bi] += resid[i] * resid[i];
      var_counts[bi] += 1.0;
      for (int j = i + 1; j < ni; ++j) {
        const int bj = detail::nearest_node(t[j], 0.0, step, g);
        if (bi == bj) continue;  // same-bin pairs would reintroduce the noisy diagonal
        const double prod = resid[i] * resid[j];
        cov_sums(bi, bj) += prod;
        cov_counts(bi, bj) += 1.0;
        cov_sums(bj, bi) += prod;
        cov_counts(bj, bi) += 1.0;
      }
    }
  }

  model.cov_bandwidth = opts.smoothing.use_gcv
                            ? select_bandwidth_gcv_surface(model.grid, cov_sums, cov_counts,
                                                           domain_end, opts.smoothing.gcv_candidates)
                            : opts.smoothing.cov_bandwidth_fraction * domain_end;
  MatrixXd cov = local_linear_surface(model.grid, cov_sums, cov_counts, model.cov_bandwidth);
  cov = 0.5 * (cov + cov.transpose()).eval();

  // Diagonal-inclusive variance curve, smoothed on the same bandwidth.
  VectorXd occupied_t, occupied_v, occupied_w;
  {
    std::vector<double> ot, ov, ow;
    for (int i = 0; i < g; ++i)
      if (var_counts[i] > 0) {
        ot.push_back(model.grid[i]);
        ov.push_back(var_sums[i] / var_counts[i]);
        ow.push_back(var_counts[i]);
      }
    occupied_t = Eigen::Map<VectorXd>(ot.data(), ot.size());
    occupied_v = Eigen::Map<VectorXd>(ov.data(), ov.size());
    occupied_w = Eigen::Map<VectorXd>(ow.data(), ow.size());
  }
  const VectorXd var_curve =
      local_linear_1d(occupied_t, occupied_v, occupied_w, model.grid, model.cov_bandwidth);
  model.noise_variance = std::max(0.0, (var_curve - cov.diagonal()).mean());

  // Eigendecomposition under trapezoidal quadrature: solve the symmetrized
  // problem B^{1/2} C B^{1/2} u = lambda u, phi = B^{-1/2} u.
  const VectorXd qw = trapezoid_weights(model.grid);
  const VectorXd sqw = qw.array().sqrt();
  MatrixXd m = sqw.asDiagonal() * cov * sqw.asDiagonal();
  m = 0.5 * (m + m.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
  if (eig.info() != Eigen::Success)
    throw SingularCovarianceError("fit_fpca: eigendecomposition failed");

  const VectorXd evals_asc = eig.eigenvalues();
  const double lam_max = evals_asc[g - 1];
  const double threshold = 1e-10 * std::max(1.0, lam_max);
  std::vector<int> kept;  // descending order
  for (int i = g - 1; i >= 0; --i)
    if (evals_asc[i] > threshold) kept.push_back(i);

  const int k_avail = static_cast<int>(kept.size());
  const int k = std::min(opts.max_components, k_avail);
  double total_positive = 0.0;
  for (int idx : kept) total_positive += evals_asc[idx];

  model.eigenvalues = VectorXd(k);
  model.eigenfunctions = MatrixXd(g, k);
  model.fraction_of_variance = VectorXd(k);
  for (int j = 0; j < k; ++j) {
    const int idx = kept[j];
    model.eigenvalues[j] = evals_asc[idx];
    VectorXd phi = eig.eigenvectors().col(idx).array() / sqw.array();
    int arg_max = 0;
    phi.cwiseAbs().maxCoeff(&arg_max);
    if (phi[arg_max] < 0) phi = -phi;
    model.eigenfunctions.col(j) = phi;
    model.fraction_of_variance[j] = model.eigenvalues[j] / total_positive;
  }
  model.degenerate = (k == 0);

  // BLUP scores per subject, then explicit column centering.
  model.scores = predict_scores(model, samples);
  if (k > 0) model.scores.rowwise() -= model.scores.colwise().mean();
  model.subject_ids.resize(n_subj);
  for (int si = 0; si < n_subj; ++si) model.subject_ids[si] = samples[si].subject_id;
  return model;
}

}  // namespace mvfmr
