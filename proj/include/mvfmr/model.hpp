#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mvfmr/errors.hpp"
#include "mvfmr/estimators.hpp"
#include "mvfmr/fpca.hpp"
#include "mvfmr/mathutil.hpp"
#include "mvfmr/metrics.hpp"

namespace mvfmr {

enum class BandMethod { asymptotic, bootstrap };

struct ModelConfig {
  double domain_end = 50.0;
  bool binary = false;
  FpcaOptions fpca;  // max_components is raised to the largest candidate
  int max_candidate_components = 5;
  std::vector<std::pair<int, int>> candidates;  // empty = full grid up to the max
  int folds = 5;
  std::uint64_t cv_seed = 0;
  bool refit_fpca_per_fold = false;
  std::pair<int, int> fixed_components{0, 0};  // (0,0) = choose by cross-validation
  GmmOptions gmm;
  double cv_gmm_tolerance = 1e-6;
  LogisticOptions logistic;
  double band_level = 0.95;
};

// Cross-validation outcome: per-candidate mean out-of-fold loss (MSE for
// continuous outcomes, 1-AUC for binary) and the selected pair. Ties break
// toward smaller K1+K2, then smaller K1.
struct CvReport {
  std::vector<std::pair<int, int>> candidates;
  VectorXd mean_loss;
  std::pair<int, int> selected{0, 0};
  int folds = 0;
  bool binary = false;
};

struct MvfmrFit {
  std::pair<int, int> component_counts{0, 0};
  bool binary = false;
  GmmFit gmm;    // populated for continuous outcomes
  TsriFit tsri;  // populated for binary outcomes
  VectorXd beta_star;
  MatrixXd beta_covariance;
  VectorXd grid;
  std::vector<VectorXd> beta_functions;
  std::vector<VectorXd> band_lower, band_upper;
  std::vector<FpcaModel> fpca_models;
  VectorXd conditional_f_values;
  CvReport cv;
  PseudoExposureDesign design;  // selected scores + outcome + instruments

  int exposures() const { return static_cast<int>(beta_functions.size()); }
};

// beta_j(t) = sum_k beta*_jk phi_jk(t) as an exact matrix-vector product.
inline VectorXd reconstruct_beta(const VectorXd& beta_star_block, const MatrixXd& eigenfunctions) {
  if (eigenfunctions.cols() != beta_star_block.size())
    throw DimensionMismatchError("reconstruct_beta: coefficient/eigenfunction count mismatch");
  return eigenfunctions * beta_star_block;
}

struct PointwiseBands {
  std::vector<VectorXd> lower, upper;
};

namespace pipedet {

struct PipelineInput {
  const std::vector<SparseFunctionalSample>* samples1 = nullptr;
  const std::vector<SparseFunctionalSample>* samples2 = nullptr;  // null = single exposure
  const VectorXd* outcome = nullptr;
  const InstrumentMatrix* instruments = nullptr;

  int n_exposures() const { return samples2 ? 2 : 1; }
};

struct Prepared {
  std::vector<FpcaModel> models;
  MatrixXd xi;  // stacked available scores, kmax1 + kmax2 columns
  int kmax1 = 0, kmax2 = 0;
  std::vector<int> fold_of;
  std::vector<int> row_order;   // subject indices grouped by fold
  std::vector<int> fold_start;  // folds + 1 offsets into row_order
};

inline void check_subject_alignment(const PipelineInput& in) {
  const int n = static_cast<int>(in.samples1->size());
  if (in.outcome->size() != n || in.instruments->n() != n)
    throw DimensionMismatchError("pipeline: outcome/instrument rows != subject count");
  if (in.samples2) {
    if (static_cast<int>(in.samples2->size()) != n)
      throw SubjectMismatchError("pipeline: exposure sample collections differ in size (" +
                                 std::to_string(n) + " vs " + std::to_string(in.samples2->size()) +
                                 ")");
    int mismatched = 0;
    for (int i = 0; i < n; ++i)
      if ((*in.samples1)[i].subject_id != (*in.samples2)[i].subject_id) ++mismatched;
    if (mismatched > 0)
      throw SubjectMismatchError("pipeline: " + std::to_string(mismatched) +
                                 " subject ids differ between exposures");
  }
}

inline std::vector<std::pair<int, int>> resolve_candidates(const ModelConfig& cfg, int avail1,
                                                           int avail2, bool two_exposures) {
  std::vector<std::pair<int, int>> cands = cfg.candidates;
  if (cands.empty()) {
    const int m1 = std::min(cfg.max_candidate_components, avail1);
    if (two_exposures) {
      const int m2 = std::min(cfg.max_candidate_components, avail2);
      for (int k1 = 1; k1 <= m1; ++k1)
        for (int k2 = 1; k2 <= m2; ++k2) cands.emplace_back(k1, k2);
    } else {
      for (int k1 = 1; k1 <= m1; ++k1) cands.emplace_back(k1, 0);
    }
  }
  if (cands.empty()) throw ConfigError("select_components: empty candidate set");
  for (const auto& [k1, k2] : cands) {
    if (k1 < 1 || (two_exposures && k2 < 1) || (!two_exposures && k2 != 0))
      throw ConfigError("select_components: invalid candidate (" + std::to_string(k1) + "," +
                        std::to_string(k2) + ")");
    if (k1 > avail1)
      throw InsufficientComponentsError("candidate K1 = " + std::to_string(k1) + " exceeds " +
                                        std::to_string(avail1) + " available components");
    if (two_exposures && k2 > avail2)
      throw InsufficientComponentsError("candidate K2 = " + std::to_string(k2) + " exceeds " +
                                        std::to_string(avail2) + " available components");
  }
  return cands;
}

inline Prepared prepare(const PipelineInput& in, const ModelConfig& cfg, int need_k1, int need_k2) {
  check_subject_alignment(in);
  Prepared prep;
  FpcaOptions fopts = cfg.fpca;
  fopts.max_components = std::max(fopts.max_components, std::max(need_k1, need_k2));
  prep.models.push_back(fit_fpca(*in.samples1, cfg.domain_end, fopts));
  if (in.samples2) prep.models.push_back(fit_fpca(*in.samples2, cfg.domain_end, fopts));
  for (std::size_t j = 0; j < prep.models.size(); ++j)
    if (prep.models[j].degenerate)
      throw InsufficientComponentsError("exposure " + std::to_string(j + 1) +
                                        ": no functional variation (degenerate FPCA)");

  const int n = static_cast<int>(in.samples1->size());
  prep.kmax1 = std::min(need_k1, prep.models[0].components());
  prep.kmax2 = in.samples2 ? std::min(need_k2, prep.models[1].components()) : 0;
  prep.xi.resize(n, prep.kmax1 + prep.kmax2);
  prep.xi.leftCols(prep.kmax1) = prep.models[0].scores.leftCols(prep.kmax1);
  if (prep.kmax2 > 0) prep.xi.rightCols(prep.kmax2) = prep.models[1].scores.leftCols(prep.kmax2);

  // Seeded fold partition: shuffle subjects once, deal round-robin.
  prep.fold_of.assign(n, 0);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(cfg.cv_seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int i = 0; i < n; ++i) prep.fold_of[perm[i]] = i % cfg.folds;
  prep.row_order.reserve(n);
  prep.fold_start.assign(cfg.folds + 1, 0);
  for (int f = 0; f < cfg.folds; ++f) {
    for (int i = 0; i < n; ++i)
      if (prep.fold_of[i] == f) prep.row_order.push_back(i);
    prep.fold_start[f + 1] = static_cast<int>(prep.row_order.size());
  }
  return prep;
}

// Maps a candidate to stacked-score column indices.
inline std::vector<int> candidate_columns(const Prepared& prep, int k1, int k2) {
  std::vector<int> cols;
  cols.reserve(k1 + k2);
  for (int c = 0; c < k1; ++c) cols.push_back(c);
  for (int c = 0; c < k2; ++c) cols.push_back(prep.kmax1 + c);
  return cols;
}

inline std::pair<int, int> pick_best(const std::vector<std::pair<int, int>>& cands,
                                     const VectorXd& loss) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(cands.size()); ++i) {
    if (best < 0) {
      best = i;
      continue;
    }
    const auto& [k1, k2] = cands[i];
    const auto& [b1, b2] = cands[best];
    const bool better = loss[i] < loss[best] ||
                        (loss[i] == loss[best] &&
                         (k1 + k2 < b1 + b2 || (k1 + k2 == b1 + b2 && k1 < b1)));
    if (better) best = i;
  }
  if (best < 0 || !std::isfinite(loss[best]))
    throw NonConvergenceError("select_components: every candidate failed");
  return cands[best];
}

// Continuous-outcome cross-validation on shared moment tensors: per-fold raw
// sums are accumulated once, training-set moments are exact full-minus-fold
// differences, and every candidate reuses the same tensors by index slicing.
inline CvReport cv_continuous(const Prepared& prep, const PipelineInput& in, const ModelConfig& cfg,
                              const std::vector<std::pair<int, int>>& cands) {
  const int n = static_cast<int>(prep.row_order.size());
  const int p = in.instruments->p();
  const int ktot = static_cast<int>(prep.xi.cols());
  const int folds = cfg.folds;

  MatrixXd gp(n, p), xip(n, ktot);
  VectorXd yp(n);
  for (int r = 0; r < n; ++r) {
    const int i = prep.row_order[r];
    gp.row(r) = in.instruments->values.row(i);
    xip.row(r) = prep.xi.row(i);
    yp[r] = (*in.outcome)[i];
  }

  std::vector<gmmdet::CenteredGmmMoments> train(folds);
  gmmdet::RawMomentSums full;
  {
    const MatrixXd carrier = gmmdet::build_moment_carrier(gp, yp, xip);
    std::vector<gmmdet::RawMomentSums> fold_raw(folds);
    for (int f = 0; f < folds; ++f) {
      const int lo = prep.fold_start[f], hi = prep.fold_start[f + 1];
      if (hi - lo < 1) throw ConfigError("select_components: empty fold; reduce fold count");
      fold_raw[f] = gmmdet::raw_sums_from_carrier(carrier.middleRows(lo, hi - lo), p, ktot);
      full += fold_raw[f];
    }
    for (int f = 0; f < folds; ++f) {
      gmmdet::RawMomentSums tr;
      tr.n = full.n - fold_raw[f].n;
      tr.p = p;
      tr.k = ktot;
      tr.big = full.big - fold_raw[f].big;
      train[f] = gmmdet::finalize_centered(tr);
    }
  }

  GmmOptions cv_opts = cfg.gmm;
  cv_opts.tolerance = cfg.cv_gmm_tolerance;
  cv_opts.throw_on_nonconvergence = false;

  CvReport report;
  report.candidates = cands;
  report.folds = folds;
  report.binary = false;
  report.mean_loss.resize(cands.size());
  // Per-fold warm starts: when a candidate extends an already-fitted one by a
  // single component, start the optimizer from that solution with a zero
  // coefficient inserted instead of from the 2SLS point.
  std::vector<VectorXd> warm(folds);
  std::vector<std::pair<int, int>> warm_cand(folds, {-1, -1});
  for (std::size_t ci = 0; ci < cands.size(); ++ci) {
    const auto [k1, k2] = cands[ci];
    const auto cols = candidate_columns(prep, k1, k2);
    double sse = 0.0;
    bool failed = false;
    for (int f = 0; f < folds && !failed; ++f) {
      try {
        VectorXd init;
        const VectorXd* ws = nullptr;
        const auto& [w1, w2] = warm_cand[f];
        if (w1 == k1 && w2 == k2 - 1 && warm[f].size() == k1 + k2 - 1) {
          init.resize(k1 + k2);
          init.head(k1 + k2 - 1) = warm[f];
          init[k1 + k2 - 1] = 0.0;
          ws = &init;
        } else if (w1 == k1 - 1 && w2 == k2 && warm[f].size() == k1 + k2 - 1) {
          init.resize(k1 + k2);
          init.head(k1 - 1) = warm[f].head(k1 - 1);
          init[k1 - 1] = 0.0;
          init.tail(k2) = warm[f].tail(k2);
          ws = &init;
        }
        const GmmFit fit = gmmdet::cu_gmm_on_moments(train[f], cols, cv_opts, ws);
        if (fit.converged) {
          warm[f] = fit.beta_star;
          warm_cand[f] = {k1, k2};
        }
        const double ybar = train[f].var_means[0];
        const int lo = prep.fold_start[f], hi = prep.fold_start[f + 1];
        for (int r = lo; r < hi; ++r) {
          double pred = ybar;
          for (std::size_t c = 0; c < cols.size(); ++c)
            pred += (xip(r, cols[c]) - train[f].var_means[1 + cols[c]]) * fit.beta_star[c];
          const double e = yp[r] - pred;
          sse += e * e;
        }
      } catch (const Error&) {
        failed = true;
      }
    }
    report.mean_loss[ci] = failed ? std::numeric_limits<double>::infinity() : sse / n;
  }
  report.selected = pick_best(cands, report.mean_loss);
  return report;
}

// Continuous CV with FPCA refit per training fold (sensitivity option).
inline CvReport cv_continuous_refit(const Prepared& prep, const PipelineInput& in,
                                    const ModelConfig& cfg,
                                    const std::vector<std::pair<int, int>>& cands) {
  const int n = static_cast<int>(prep.fold_of.size());
  const int folds = cfg.folds;
  GmmOptions cv_opts = cfg.gmm;
  cv_opts.tolerance = cfg.cv_gmm_tolerance;
  cv_opts.throw_on_nonconvergence = false;

  VectorXd sse = VectorXd::Zero(cands.size());
  std::vector<bool> failed(cands.size(), false);

  FpcaOptions fopts = cfg.fpca;
  fopts.max_components = std::max(fopts.max_components, std::max(prep.kmax1, prep.kmax2));
  for (int f = 0; f < folds; ++f) {
    std::vector<int> tr_idx, te_idx;
    for (int i = 0; i < n; ++i) (prep.fold_of[i] == f ? te_idx : tr_idx).push_back(i);

    std::vector<FpcaModel> fold_models;
    std::vector<MatrixXd> all_scores;  // per exposure, BLUP under the fold model
    const int n_exp = in.n_exposures();
    for (int j = 0; j < n_exp; ++j) {
      const auto& samples = j == 0 ? *in.samples1 : *in.samples2;
      std::vector<SparseFunctionalSample> train_samples;
      train_samples.reserve(tr_idx.size());
      for (int i : tr_idx) train_samples.push_back(samples[i]);
      fold_models.push_back(fit_fpca(train_samples, cfg.domain_end, fopts));
      all_scores.push_back(predict_scores(fold_models.back(), samples));
    }
    const int km1 = std::min(prep.kmax1, fold_models[0].components());
    const int km2 = n_exp == 2 ? std::min(prep.kmax2, fold_models[1].components()) : 0;

    MatrixXd xi(n, km1 + km2);
    xi.leftCols(km1) = all_scores[0].leftCols(km1);
    if (km2 > 0) xi.rightCols(km2) = all_scores[1].leftCols(km2);

    MatrixXd g_tr(tr_idx.size(), in.instruments->p()), xi_tr(tr_idx.size(), xi.cols());
    VectorXd y_tr(tr_idx.size());
    for (std::size_t r = 0; r < tr_idx.size(); ++r) {
      g_tr.row(r) = in.instruments->values.row(tr_idx[r]);
      xi_tr.row(r) = xi.row(tr_idx[r]);
      y_tr[r] = (*in.outcome)[tr_idx[r]];
    }
    const Eigen::RowVectorXd g_mean = g_tr.colwise().mean();
    const Eigen::RowVectorXd xi_mean = xi_tr.colwise().mean();
    const double y_mean = y_tr.mean();
    g_tr.rowwise() -= g_mean;
    xi_tr.rowwise() -= xi_mean;
    y_tr.array() -= y_mean;
    const auto mom = gmmdet::centered_moments_from_data(g_tr, y_tr, xi_tr);

    VectorXd warm;
    std::pair<int, int> warm_cand{-1, -1};
    for (std::size_t ci = 0; ci < cands.size(); ++ci) {
      const auto& [k1, k2] = cands[ci];
      if (k1 > km1 || (k2 > 0 && k2 > km2)) {
        failed[ci] = true;
        continue;
      }
      std::vector<int> cols;
      for (int c = 0; c < k1; ++c) cols.push_back(c);
      for (int c = 0; c < k2; ++c) cols.push_back(km1 + c);
      try {
        VectorXd init;
        const VectorXd* ws = nullptr;
        if (warm_cand.first == k1 && warm_cand.second == k2 - 1 &&
            warm.size() == k1 + k2 - 1) {
          init.resize(k1 + k2);
          init.head(k1 + k2 - 1) = warm;
          init[k1 + k2 - 1] = 0.0;
          ws = &init;
        } else if (warm_cand.first == k1 - 1 && warm_cand.second == k2 &&
                   warm.size() == k1 + k2 - 1) {
          init.resize(k1 + k2);
          init.head(k1 - 1) = warm.head(k1 - 1);
          init[k1 - 1] = 0.0;
          init.tail(k2) = warm.tail(k2);
          ws = &init;
        }
        const GmmFit fit = gmmdet::cu_gmm_on_moments(mom, cols, cv_opts, ws);
        if (fit.converged) {
          warm = fit.beta_star;
          warm_cand = {k1, k2};
        }
        for (int i : te_idx) {
          double pred = y_mean;
          for (std::size_t c = 0; c < cols.size(); ++c)
            pred += (xi(i, cols[c]) - xi_mean[cols[c]]) * fit.beta_star[c];
          const double e = (*in.outcome)[i] - pred;
          sse[ci] += e * e;
        }
      } catch (const Error&) {
        failed[ci] = true;
      }
    }
  }

  CvReport report;
  report.candidates = cands;
  report.folds = folds;
  report.binary = false;
  report.mean_loss.resize(cands.size());
  for (std::size_t ci = 0; ci < cands.size(); ++ci)
    report.mean_loss[ci] =
        failed[ci] ? std::numeric_limits<double>::infinity() : sse[ci] / n;
  report.selected = pick_best(cands, report.mean_loss);
  return report;
}

// Binary-outcome cross-validation: per fold, stage-1 coefficients for all
// available score columns are fit once on the training rows; each candidate
// then runs the stage-2 logistic on its column subset and is scored by
// out-of-fold 1-AUC (averaged over folds).
inline CvReport cv_binary(const Prepared& prep, const PipelineInput& in, const ModelConfig& cfg,
                          const std::vector<std::pair<int, int>>& cands) {
  const int n = static_cast<int>(prep.fold_of.size());
  const int p = in.instruments->p();
  const int ktot = static_cast<int>(prep.xi.cols());
  const int folds = cfg.folds;

  MatrixXd loss = MatrixXd::Zero(cands.size(), folds);
  std::vector<bool> failed(cands.size(), false);

  for (int f = 0; f < folds; ++f) {
    std::vector<int> tr_idx, te_idx;
    for (int i = 0; i < n; ++i) (prep.fold_of[i] == f ? te_idx : tr_idx).push_back(i);
    const int ntr = static_cast<int>(tr_idx.size());
    const int nte = static_cast<int>(te_idx.size());

    MatrixXd g_tr(ntr, p), xi_tr(ntr, ktot);
    VectorXd y_tr(ntr);
    for (int r = 0; r < ntr; ++r) {
      g_tr.row(r) = in.instruments->values.row(tr_idx[r]);
      xi_tr.row(r) = prep.xi.row(tr_idx[r]);
      y_tr[r] = (*in.outcome)[tr_idx[r]];
    }
    const Eigen::RowVectorXd g_mean = g_tr.colwise().mean();
    const Eigen::RowVectorXd xi_mean = xi_tr.colwise().mean();
    g_tr.rowwise() -= g_mean;
    xi_tr.rowwise() -= xi_mean;

    MatrixXd gamma;  // stage-1 coefficients for all columns at once
    {
      MatrixXd gram = g_tr.transpose() * g_tr;
      gram = 0.5 * (gram + gram.transpose()).eval();
      gmmdet::SpdFactor fac;
      fac.compute(gram, 1e14);
      if (!fac.ok) throw RankDeficiencyError("cv_binary: stage-1 design rank-deficient");
      gamma = fac.ldlt.solve(g_tr.transpose() * xi_tr);
    }
    const MatrixXd v_tr = xi_tr - g_tr * gamma;

    MatrixXd g_te(nte, p), xi_te(nte, ktot);
    VectorXd y_te(nte);
    for (int r = 0; r < nte; ++r) {
      g_te.row(r) = in.instruments->values.row(te_idx[r]);
      xi_te.row(r) = prep.xi.row(te_idx[r]);
      y_te[r] = (*in.outcome)[te_idx[r]];
    }
    g_te.rowwise() -= g_mean;
    xi_te.rowwise() -= xi_mean;
    const MatrixXd v_te = xi_te - g_te * gamma;

    for (std::size_t ci = 0; ci < cands.size(); ++ci) {
      if (failed[ci]) continue;
      const auto cols = candidate_columns(prep, cands[ci].first, cands[ci].second);
      const int k = static_cast<int>(cols.size());
      MatrixXd x(ntr, 1 + 2 * k);
      x.col(0).setOnes();
      MatrixXd xt(nte, 1 + 2 * k);
      xt.col(0).setOnes();
      for (int c = 0; c < k; ++c) {
        x.col(1 + c) = xi_tr.col(cols[c]);
        x.col(1 + k + c) = v_tr.col(cols[c]);
        xt.col(1 + c) = xi_te.col(cols[c]);
        xt.col(1 + k + c) = v_te.col(cols[c]);
      }
      try {
        const auto irls = gmmdet::logistic_irls(x, y_tr, cfg.logistic);
        const VectorXd eta = xt * irls.coef;
        const VectorXd prob = eta.unaryExpr([](double e) { return gmmdet::expit(e); });
        loss(ci, f) = 1.0 - auc(prob, y_te);
      } catch (const Error&) {
        failed[ci] = true;
      }
    }
  }

  CvReport report;
  report.candidates = cands;
  report.folds = folds;
  report.binary = true;
  report.mean_loss.resize(cands.size());
  for (std::size_t ci = 0; ci < cands.size(); ++ci)
    report.mean_loss[ci] =
        failed[ci] ? std::numeric_limits<double>::infinity() : loss.row(ci).mean();
  report.selected = pick_best(cands, report.mean_loss);
  return report;
}

inline PseudoExposureDesign build_design(const Prepared& prep, const PipelineInput& in, int k1,
                                         int k2) {
  PseudoExposureDesign design;
  const int n = static_cast<int>(prep.fold_of.size());
  design.scores.resize(n, k1 + k2);
  design.scores.leftCols(k1) = prep.xi.leftCols(k1);
  if (k2 > 0) design.scores.rightCols(k2) = prep.xi.middleCols(prep.kmax1, k2);
  design.block_sizes = {k1, k2};
  design.outcome = *in.outcome;
  design.instruments = *in.instruments;
  return design;
}

inline MvfmrFit finish_fit(Prepared&& prep, const PipelineInput& in, const ModelConfig& cfg, int k1,
                           int k2, CvReport&& cv) {
  MvfmrFit fit;
  fit.component_counts = {k1, k2};
  fit.binary = cfg.binary;
  fit.cv = std::move(cv);
  fit.design = build_design(prep, in, k1, k2);
  fit.grid = prep.models[0].grid;

  if (cfg.binary) {
    fit.tsri = two_sri(fit.design, cfg.logistic);
    fit.beta_star = fit.tsri.beta_star;
    fit.beta_covariance = fit.tsri.robust_covariance.block(1, 1, k1 + k2, k1 + k2);
  } else {
    fit.gmm = cu_gmm(fit.design, cfg.gmm);
    fit.beta_star = fit.gmm.beta_star;
    fit.beta_covariance = fit.gmm.covariance;
  }

  fit.conditional_f_values.resize(k1 + k2);
  for (int c = 0; c < k1 + k2; ++c) fit.conditional_f_values[c] = conditional_f(fit.design, c);

  const int n_exp = in.n_exposures();
  const double z = normal_quantile(0.5 + cfg.band_level / 2.0);
  for (int j = 0; j < n_exp; ++j) {
    const int kj = j == 0 ? k1 : k2;
    const int offset = j == 0 ? 0 : k1;
    if (kj == 0) {
      fit.beta_functions.push_back(VectorXd::Zero(fit.grid.size()));
      fit.band_lower.push_back(VectorXd::Zero(fit.grid.size()));
      fit.band_upper.push_back(VectorXd::Zero(fit.grid.size()));
      continue;
    }
    const MatrixXd phi = prep.models[j].eigenfunctions.leftCols(kj);
    const VectorXd block = fit.beta_star.segment(offset, kj);
    fit.beta_functions.push_back(reconstruct_beta(block, phi));
    const MatrixXd cov_block = fit.beta_covariance.block(offset, offset, kj, kj);
    const VectorXd var = ((phi * cov_block).array() * phi.array()).rowwise().sum().max(0.0);
    const VectorXd half = z * var.array().sqrt();
    fit.band_lower.push_back(fit.beta_functions[j] - half);
    fit.band_upper.push_back(fit.beta_functions[j] + half);
  }
  fit.fpca_models = std::move(prep.models);
  return fit;
}

inline MvfmrFit fit_pipeline(const PipelineInput& in, const ModelConfig& cfg) {
  const bool two = in.n_exposures() == 2;
  const auto [fk1, fk2] = cfg.fixed_components;
  int need1 = cfg.max_candidate_components, need2 = two ? cfg.max_candidate_components : 0;
  for (const auto& [c1, c2] : cfg.candidates) {
    need1 = std::max(need1, c1);
    need2 = std::max(need2, c2);
  }
  if (fk1 > 0) {
    need1 = std::max(fk1, 1);
    need2 = std::max(fk2, 0);
  }
  Prepared prep = prepare(in, cfg, need1, need2);

  int k1, k2;
  CvReport cv;
  if (fk1 > 0) {
    if (fk1 > prep.models[0].components())
      throw InsufficientComponentsError("fixed K1 = " + std::to_string(fk1) + " exceeds " +
                                        std::to_string(prep.models[0].components()) +
                                        " available components");
    if (two && fk2 > prep.models[1].components())
      throw InsufficientComponentsError("fixed K2 = " + std::to_string(fk2) + " exceeds " +
                                        std::to_string(prep.models[1].components()) +
                                        " available components");
    k1 = fk1;
    k2 = two ? fk2 : 0;
  } else {
    if (cfg.folds < 2) throw ConfigError("select_components: folds must be >= 2");
    const auto cands = resolve_candidates(cfg, prep.models[0].components(),
                                          two ? prep.models[1].components() : 0, two);
    cv = cfg.binary              ? cv_binary(prep, in, cfg, cands)
         : cfg.refit_fpca_per_fold ? cv_continuous_refit(prep, in, cfg, cands)
                                   : cv_continuous(prep, in, cfg, cands);
    k1 = cv.selected.first;
    k2 = cv.selected.second;
  }
  return finish_fit(std::move(prep), in, cfg, k1, k2, std::move(cv));
}

}  // namespace pipedet

// Cross-validated component selection over candidate (K1, K2) pairs.
inline CvReport select_components(const std::vector<SparseFunctionalSample>& samples1,
                                  const std::vector<SparseFunctionalSample>& samples2,
                                  const VectorXd& outcome, const InstrumentMatrix& instruments,
                                  const ModelConfig& cfg) {
  pipedet::PipelineInput in{&samples1, samples2.empty() ? nullptr : &samples2, &outcome,
                            &instruments};
  if (cfg.folds < 2) throw ConfigError("select_components: folds must be >= 2");
  const bool two = in.n_exposures() == 2;
  int need1 = cfg.max_candidate_components, need2 = two ? cfg.max_candidate_components : 0;
  for (const auto& [c1, c2] : cfg.candidates) {
    need1 = std::max(need1, c1);
    need2 = std::max(need2, c2);
  }
  pipedet::Prepared prep = pipedet::prepare(in, cfg, need1, need2);
  const auto cands = pipedet::resolve_candidates(cfg, prep.models[0].components(),
                                                 two ? prep.models[1].components() : 0, two);
  return cfg.binary              ? pipedet::cv_binary(prep, in, cfg, cands)
         : cfg.refit_fpca_per_fold ? pipedet::cv_continuous_refit(prep, in, cfg, cands)
                                   : pipedet::cv_continuous(prep, in, cfg, cands);
}

// Full two-exposure pipeline: FPCA per exposure, component selection,
// CU-GMM or 2SRI estimation, reconstruction, and pointwise bands.
inline MvfmrFit fit_mvfmr(const std::vector<SparseFunctionalSample>& samples1,
                          const std::vector<SparseFunctionalSample>& samples2,
                          const VectorXd& outcome, const InstrumentMatrix& instruments,
                          const ModelConfig& cfg) {
  pipedet::PipelineInput in{&samples1, &samples2, &outcome, &instruments};
  return pipedet::fit_pipeline(in, cfg);
}

// Single-exposure baseline: identical machinery with one FPCA block and all
// instrument columns.
inline MvfmrFit fit_ufmr(const std::vector<SparseFunctionalSample>& samples, const VectorXd& outcome,
                         const InstrumentMatrix& instruments, const ModelConfig& cfg) {
  pipedet::PipelineInput in{&samples, nullptr, &outcome, &instruments};
  return pipedet::fit_pipeline(in, cfg);
}

// Pointwise confidence bands. Asymptotic bands come from the stored
// coefficient covariance; bootstrap bands resample subjects and refit the
// estimator with the FPCA basis and component counts held fixed.
inline PointwiseBands pointwise_bands(const MvfmrFit& fit, double level,
                                      BandMethod method = BandMethod::asymptotic,
                                      int bootstrap_reps = 0, std::uint64_t seed = 0) {
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("pointwise_bands: level must lie in (0,1)");
  PointwiseBands bands;
  const auto [k1, k2] = fit.component_counts;
  if (method == BandMethod::asymptotic) {
    const double z = normal_quantile(0.5 + level / 2.0);
    for (int j = 0; j < fit.exposures(); ++j) {
      const int kj = j == 0 ? k1 : k2;
      const int offset = j == 0 ? 0 : k1;
      if (kj == 0) {
        bands.lower.push_back(fit.beta_functions[j]);
        bands.upper.push_back(fit.beta_functions[j]);
        continue;
      }
      const MatrixXd phi = fit.fpca_models[j].eigenfunctions.leftCols(kj);
      const MatrixXd cov_block = fit.beta_covariance.block(offset, offset, kj, kj);
      const VectorXd var = ((phi * cov_block).array() * phi.array()).rowwise().sum().max(0.0);
      const VectorXd half = z * var.array().sqrt();
      bands.lower.push_back(fit.beta_functions[j] - half);
      bands.upper.push_back(fit.beta_functions[j] + half);
    }
    return bands;
  }

  if (bootstrap_reps < 100)
    throw InsufficientRepsError("pointwise_bands: bootstrap needs >= 100 replicates, got " +
                                std::to_string(bootstrap_reps));
  const int n = fit.design.n();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> row(0, n - 1);
  std::vector<std::vector<std::vector<double>>> draws(fit.exposures());
  const int g = static_cast<int>(fit.grid.size());
  for (int j = 0; j < fit.exposures(); ++j)
    draws[j].assign(g, {});
  int failures = 0;
  for (int b = 0; b < bootstrap_reps; ++b) {
    PseudoExposureDesign d;
    d.scores.resize(n, fit.design.scores.cols());
    d.outcome.resize(n);
    d.instruments.values.resize(n, fit.design.instruments.p());
    d.instruments.column_labels = fit.design.instruments.column_labels;
    d.block_sizes = fit.design.block_sizes;
    for (int i = 0; i < n; ++i) {
      const int r = row(rng);
      d.scores.row(i) = fit.design.scores.row(r);
      d.outcome[i] = fit.design.outcome[r];
      d.instruments.values.row(i) = fit.design.instruments.values.row(r);
    }
    try {
      VectorXd beta;
      if (fit.binary) {
        beta = two_sri(d).beta_star;
      } else {
        GmmOptions opts;
        opts.throw_on_nonconvergence = true;
        beta = cu_gmm(d, opts).beta_star;
      }
      for (int j = 0; j < fit.exposures(); ++j) {
        const int kj = j == 0 ? k1 : k2;
        const int offset = j == 0 ? 0 : k1;
        VectorXd curve = VectorXd::Zero(g);
        if (kj > 0)
          curve = fit.fpca_models[j].eigenfunctions.leftCols(kj) * beta.segment(offset, kj);
        for (int t = 0; t < g; ++t) draws[j][t].push_back(curve[t]);
      }
    } catch (const Error&) {
      ++failures;
    }
  }
  if (failures > bootstrap_reps / 2)
    throw NonConvergenceError("pointwise_bands: " + std::to_string(failures) + " of " +
                              std::to_string(bootstrap_reps) + " bootstrap refits failed");
  for (int j = 0; j < fit.exposures(); ++j) {
    VectorXd lo(g), hi(g);
    for (int t = 0; t < g; ++t) {
      lo[t] = sample_quantile(draws[j][t], (1.0 - level) / 2.0);
      hi[t] = sample_quantile(draws[j][t], (1.0 + level) / 2.0);
    }
    bands.lower.push_back(lo);
    bands.upper.push_back(hi);
  }
  return bands;
}

}  // namespace mvfmr
