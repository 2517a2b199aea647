#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include <mvfmr/mathutil.hpp>
#include <mvfmr/metrics.hpp>
#include <mvfmr/model.hpp>

namespace mvfmr {
namespace {

constexpr double kDomain = 50.0;

double phi1(double t) { return std::sqrt(2.0 / kDomain) * std::sin(M_PI * t / kDomain); }
double phi2(double t) { return std::sqrt(2.0 / kDomain) * std::cos(M_PI * t / kDomain); }

VectorXd true_curve(const VectorXd& grid, double b1, double b2) {
  VectorXd out(grid.size());
  for (int i = 0; i < grid.size(); ++i) out[i] = b1 * phi1(grid[i]) + b2 * phi2(grid[i]);
  return out;
}

double relative_l2(const VectorXd& grid, const VectorXd& estimate, const VectorXd& truth) {
  CurveComparison err{grid, estimate, truth};
  CurveComparison mag{grid, VectorXd::Zero(grid.size()), truth};
  return std::sqrt(ise_raw(err) / ise_raw(mag));
}

double band_coverage(const VectorXd& truth, const VectorXd& lower, const VectorXd& upper) {
  int hits = 0;
  for (int i = 0; i < truth.size(); ++i)
    if (lower[i] <= truth[i] && truth[i] <= upper[i]) ++hits;
  return static_cast<double>(hits) / truth.size();
}

// Two rank-2 functional exposures over orthonormal sine/cosine components,
// instrumented by a shared Gaussian genotype-like matrix:
//   xi(:, 0..1) drive exposure 1, xi(:, 2..3) drive exposure 2,
//   each score = scale * (G pi + v) with v the endogenous disturbance.
struct FunctionalIv {
  std::vector<SparseFunctionalSample> samples1, samples2;
  InstrumentMatrix instruments;
  MatrixXd xi;  // n x 4 realized scores
  MatrixXd v;   // n x 4 disturbances
};

FunctionalIv make_functional_iv(int n, int p, double noise_sd, std::mt19937_64& rng,
                                int n_obs = 12, double pi_scale = 1.5,
                                double weak_scale = 0.7) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  FunctionalIv out;
  out.instruments.values.resize(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) out.instruments.values(i, j) = gauss(rng);
  out.instruments.column_labels.assign(p, InstrumentLabel::shared);

  MatrixXd pi(p, 4);
  for (int j = 0; j < p; ++j)
    for (int c = 0; c < 4; ++c)
      pi(j, c) = pi_scale * gauss(rng) / std::sqrt(static_cast<double>(p));
  out.v.resize(n, 4);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 4; ++c) out.v(i, c) = gauss(rng);
  out.xi = out.instruments.values * pi + out.v;
  out.xi.col(0) *= 1.4;  // leading component carries more variance
  out.xi.col(2) *= 1.4;
  out.xi.col(1) *= weak_scale;
  out.xi.col(3) *= weak_scale;

  std::uniform_real_distribution<double> unif(0.0, kDomain);
  out.samples1.resize(n);
  out.samples2.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int e = 0; e < 2; ++e) {
      auto& s = e == 0 ? out.samples1[i] : out.samples2[i];
      s.subject_id = i + 1;
      std::vector<double> times(n_obs);
      for (auto& t : times) t = unif(rng);
      std::sort(times.begin(), times.end());
      s.times = times;
      s.values.resize(n_obs);
      for (int k = 0; k < n_obs; ++k)
        s.values[k] = out.xi(i, 2 * e) * phi1(times[k]) + out.xi(i, 2 * e + 1) * phi2(times[k]) +
                      noise_sd * gauss(rng);
    }
  }
  return out;
}

// Continuous outcome driven by all four scores with shared confounding
// through the disturbances, so a naive regression is biased but the
// instruments remain valid.
VectorXd continuous_outcome(const FunctionalIv& d, const VectorXd& beta, double confound,
                            double noise_sd, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  VectorXd y = d.xi * beta + confound * d.v.rowwise().sum();
  for (int i = 0; i < y.size(); ++i) y[i] += noise_sd * gauss(rng);
  return y;
}

VectorXd four_coefficients(double a, double b, double c, double e) {
  VectorXd beta(4);
  beta << a, b, c, e;
  return beta;
}

TEST(ReconstructBeta, MatrixProductSemantics) {
  const MatrixXd phi = MatrixXd::Identity(4, 4);
  VectorXd block(4);
  block << 1.0, -2.0, 0.5, 3.0;
  EXPECT_EQ((reconstruct_beta(block, phi) - block).norm(), 0.0);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatrixXd basis(30, 4);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 4; ++j) basis(i, j) = gauss(rng);
  VectorXd other(4);
  other << 0.3, 0.1, -0.7, 2.0;
  const VectorXd lhs = reconstruct_beta(2.0 * block + 3.0 * other, basis);
  const VectorXd rhs = 2.0 * reconstruct_beta(block, basis) + 3.0 * reconstruct_beta(other, basis);
  EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);

  EXPECT_THROW(reconstruct_beta(block.head(3), basis), DimensionMismatchError);
}

TEST(SingleExposurePipeline, MatchesHandComposedStages) {
  std::mt19937_64 rng(41);
  const FunctionalIv d = make_functional_iv(400, 10, 0.1, rng);
  const VectorXd y =
      continuous_outcome(d, four_coefficients(0.5, -0.3, 0.0, 0.0), 0.5, 1.0, rng);

  ModelConfig cfg;
  cfg.fixed_components = {2, 0};
  cfg.gmm.throw_on_nonconvergence = false;
  const MvfmrFit fit = fit_ufmr(d.samples1, y, d.instruments, cfg);
  ASSERT_TRUE(fit.gmm.converged);
  EXPECT_EQ(fit.component_counts, (std::pair<int, int>{2, 0}));
  EXPECT_EQ(fit.exposures(), 1);

  // Compose the same stages by hand; the pipeline must be their composition.
  FpcaOptions fopts = cfg.fpca;
  fopts.max_components = std::max(fopts.max_components, 2);
  const FpcaModel model = fit_fpca(d.samples1, kDomain, fopts);
  ASSERT_GE(model.components(), 2);

  PseudoExposureDesign design;
  design.scores = model.scores.leftCols(2);
  design.block_sizes = {2, 0};
  design.outcome = y;
  design.instruments = d.instruments;
  const GmmFit direct = cu_gmm(design, cfg.gmm);

  EXPECT_LE((fit.beta_star - direct.beta_star).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((fit.beta_covariance - direct.covariance).cwiseAbs().maxCoeff(), 1e-12);

  const VectorXd curve = reconstruct_beta(direct.beta_star, model.eigenfunctions.leftCols(2));
  EXPECT_LE((fit.beta_functions[0] - curve).cwiseAbs().maxCoeff(), 1e-12);

  for (int c = 0; c < 2; ++c)
    EXPECT_NEAR(fit.conditional_f_values[c], conditional_f(design, c), 1e-9);

  // The stored bands are the asymptotic bands at the configured level.
  const PointwiseBands bands = pointwise_bands(fit, cfg.band_level);
  EXPECT_LE((fit.band_lower[0] - bands.lower[0]).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((fit.band_upper[0] - bands.upper[0]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SingleExposurePipeline, RecoversEffectCurveWithCoveringBands) {
  // Curve recovery and band coverage are statistical properties, so they are
  // averaged over independent replicates rather than asserted on one draw.
  const int reps = 10;
  double rel_sum = 0.0, cov_sum = 0.0;
  for (int r = 0; r < reps; ++r) {
    std::mt19937_64 rng(47 + r);
    const FunctionalIv d = make_functional_iv(500, 10, 0.1, rng);
    const VectorXd y =
        continuous_outcome(d, four_coefficients(0.5, -0.3, 0.0, 0.0), 0.5, 1.0, rng);

    ModelConfig cfg;
    cfg.fixed_components = {2, 0};
    const MvfmrFit fit = fit_ufmr(d.samples1, y, d.instruments, cfg);
    ASSERT_TRUE(fit.gmm.converged);

    const VectorXd truth = true_curve(fit.grid, 0.5, -0.3);
    const double rel = relative_l2(fit.grid, fit.beta_functions[0], truth);
    EXPECT_LE(rel, 0.6);
    rel_sum += rel;
    cov_sum += band_coverage(truth, fit.band_lower[0], fit.band_upper[0]);
  }
  EXPECT_LE(rel_sum / reps, 0.25);
  EXPECT_GE(cov_sum / reps, 0.85);  // nominal 0.95 pointwise
}

TEST(TwoExposurePipeline, RecoversBothEffectCurves) {
  const int reps = 10;
  double rel1 = 0.0, rel2 = 0.0, cov1 = 0.0, cov2 = 0.0;
  for (int r = 0; r < reps; ++r) {
    std::mt19937_64 rng(53 + r);
    // The joint fit estimates four coefficients from shared instruments, so
    // the second components need stronger first stages than the single-curve
    // test to keep the conditional F statistics away from the weak regime.
    const FunctionalIv d = make_functional_iv(800, 12, 0.1, rng, 12, 2.0, 0.9);
    const VectorXd beta = four_coefficients(0.5, -0.3, 0.4, 0.2);
    const VectorXd y = continuous_outcome(d, beta, 0.5, 1.0, rng);

    ModelConfig cfg;
    cfg.fixed_components = {2, 2};
    const MvfmrFit fit = fit_mvfmr(d.samples1, d.samples2, y, d.instruments, cfg);
    ASSERT_TRUE(fit.gmm.converged);

    if (r == 0) {
      EXPECT_EQ(fit.component_counts, (std::pair<int, int>{2, 2}));
      EXPECT_EQ(fit.exposures(), 2);
      EXPECT_EQ(fit.design.block_sizes, (std::pair<int, int>{2, 2}));
      EXPECT_TRUE(fit.cv.candidates.empty());  // fixed counts skip selection
      ASSERT_EQ(fit.conditional_f_values.size(), 4);
      for (int c = 0; c < 4; ++c) EXPECT_GT(fit.conditional_f_values[c], 10.0);
    }

    const VectorXd truth1 = true_curve(fit.grid, 0.5, -0.3);
    const VectorXd truth2 = true_curve(fit.grid, 0.4, 0.2);
    rel1 += relative_l2(fit.grid, fit.beta_functions[0], truth1);
    rel2 += relative_l2(fit.grid, fit.beta_functions[1], truth2);
    cov1 += band_coverage(truth1, fit.band_lower[0], fit.band_upper[0]);
    cov2 += band_coverage(truth2, fit.band_lower[1], fit.band_upper[1]);
  }
  EXPECT_LE(rel1 / reps, 0.25);
  EXPECT_LE(rel2 / reps, 0.30);  // the weaker second curve carries more noise
  EXPECT_GE(cov1 / reps, 0.85);
  EXPECT_GE(cov2 / reps, 0.85);
}

// Recomputes the documented selection rule from the report: smallest loss,
// ties toward smaller K1 + K2, then smaller K1.
std::pair<int, int> argmin_with_tiebreak(const CvReport& report) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(report.candidates.size()); ++i) {
    if (best < 0) {
      best = i;
      continue;
    }
    const auto& [k1, k2] = report.candidates[i];
    const auto& [b1, b2] = report.candidates[best];
    if (report.mean_loss[i] < report.mean_loss[best] ||
        (report.mean_loss[i] == report.mean_loss[best] &&
         (k1 + k2 < b1 + b2 || (k1 + k2 == b1 + b2 && k1 < b1))))
      best = i;
  }
  return report.candidates[best];
}

TEST(ComponentSelection, PicksTrueComplexityAndMatchesSelectionRule) {
  std::mt19937_64 rng(59);
  const FunctionalIv d = make_functional_iv(500, 12, 0.1, rng);
  const VectorXd y =
      continuous_outcome(d, four_coefficients(0.5, -0.3, 0.4, 0.2), 0.5, 1.0, rng);

  ModelConfig cfg;
  cfg.candidates = {{1, 1}, {1, 2}, {2, 1}, {2, 2}};
  cfg.cv_seed = 17;
  const CvReport report = select_components(d.samples1, d.samples2, y, d.instruments, cfg);
  EXPECT_FALSE(report.binary);
  EXPECT_EQ(report.folds, cfg.folds);
  ASSERT_EQ(report.mean_loss.size(), 4);
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(std::isfinite(report.mean_loss[i]));
  EXPECT_EQ(report.selected, (std::pair<int, int>{2, 2}));
  EXPECT_EQ(report.selected, argmin_with_tiebreak(report));

  // Same fold seed reproduces the losses bit for bit; a different fold
  // partition changes them.
  const CvReport again = select_components(d.samples1, d.samples2, y, d.instruments, cfg);
  EXPECT_EQ((report.mean_loss - again.mean_loss).norm(), 0.0);
  ModelConfig other = cfg;
  other.cv_seed = 18;
  const CvReport shuffled = select_components(d.samples1, d.samples2, y, d.instruments, other);
  EXPECT_GT((report.mean_loss - shuffled.mean_loss).norm(), 0.0);
}

TEST(ComponentSelection, SingletonFixedRefitAndInvalidCandidates) {
  std::mt19937_64 rng(61);
  const FunctionalIv d = make_functional_iv(300, 10, 0.1, rng);
  const VectorXd y =
      continuous_outcome(d, four_coefficients(0.5, -0.3, 0.4, 0.2), 0.5, 1.0, rng);

  ModelConfig cfg;
  cfg.candidates = {{1, 2}};
  const CvReport singleton = select_components(d.samples1, d.samples2, y, d.instruments, cfg);
  EXPECT_EQ(singleton.selected, (std::pair<int, int>{1, 2}));

  // FPCA refit inside each training fold is a supported sensitivity option;
  // its selection need not match the shared-basis path, but the report must
  // be finite and obey the selection rule.
  ModelConfig refit = cfg;
  refit.candidates = {{1, 1}, {2, 2}};
  refit.refit_fpca_per_fold = true;
  const CvReport refit_report = select_components(d.samples1, d.samples2, y, d.instruments, refit);
  for (int i = 0; i < refit_report.mean_loss.size(); ++i)
    EXPECT_TRUE(std::isfinite(refit_report.mean_loss[i]));
  EXPECT_EQ(refit_report.selected, argmin_with_tiebreak(refit_report));

  ModelConfig bad = cfg;
  bad.candidates = {{0, 1}};
  EXPECT_THROW(select_components(d.samples1, d.samples2, y, d.instruments, bad), ConfigError);

  ModelConfig few_folds = cfg;
  few_folds.folds = 1;
  EXPECT_THROW(select_components(d.samples1, d.samples2, y, d.instruments, few_folds),
               ConfigError);

  // Single-exposure candidate pairs must use K2 = 0.
  ModelConfig single = cfg;
  single.candidates = {{1, 1}};
  EXPECT_THROW(select_components(d.samples1, {}, y, d.instruments, single), ConfigError);
}

TEST(ComponentSelection, BinaryOutcomesScoreByAuc) {
  std::mt19937_64 rng(67);
  const FunctionalIv d = make_functional_iv(500, 12, 0.1, rng);
  const VectorXd eta = d.xi * four_coefficients(0.9, -0.6, 0.6, 0.4);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  VectorXd y(eta.size());
  for (int i = 0; i < y.size(); ++i) y[i] = unif(rng) < gmmdet::expit(eta[i]) ? 1.0 : 0.0;

  ModelConfig cfg;
  cfg.binary = true;
  cfg.candidates = {{1, 1}, {2, 2}};
  const CvReport report = select_components(d.samples1, d.samples2, y, d.instruments, cfg);
  EXPECT_TRUE(report.binary);
  for (int i = 0; i < report.mean_loss.size(); ++i) {
    EXPECT_GE(report.mean_loss[i], 0.0);  // losses are 1 - AUC
    EXPECT_LE(report.mean_loss[i], 1.0);
  }
  EXPECT_LT(report.mean_loss[1], report.mean_loss[0]);  // both components help
  EXPECT_EQ(report.selected, argmin_with_tiebreak(report));
}

TEST(BinaryPipeline, TwoStageResidualInclusionIntegration) {
  std::mt19937_64 rng(71);
  const FunctionalIv d = make_functional_iv(500, 12, 0.1, rng);
  const VectorXd eta = d.xi * four_coefficients(0.9, -0.6, 0.6, 0.4) + 0.5 * d.v.rowwise().sum();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  VectorXd y(eta.size());
  for (int i = 0; i < y.size(); ++i) y[i] = unif(rng) < gmmdet::expit(eta[i]) ? 1.0 : 0.0;

  ModelConfig cfg;
  cfg.binary = true;
  cfg.fixed_components = {2, 2};
  const MvfmrFit fit = fit_mvfmr(d.samples1, d.samples2, y, d.instruments, cfg);
  EXPECT_TRUE(fit.binary);
  EXPECT_TRUE(fit.tsri.converged);
  ASSERT_EQ(fit.beta_star.size(), 4);
  ASSERT_EQ(fit.tsri.alpha.size(), 4);
  ASSERT_EQ(fit.beta_covariance.rows(), 4);
  EXPECT_LE((fit.beta_covariance - fit.beta_covariance.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  for (int c = 0; c < 4; ++c) EXPECT_GT(fit.beta_covariance(c, c), 0.0);

  // The reconstructed log-odds effect curves follow the true shapes.
  const VectorXd truth1 = true_curve(fit.grid, 0.9, -0.6);
  const VectorXd truth2 = true_curve(fit.grid, 0.6, 0.4);
  EXPECT_LE(relative_l2(fit.grid, fit.beta_functions[0], truth1), 0.5);
  EXPECT_LE(relative_l2(fit.grid, fit.beta_functions[1], truth2), 0.5);
  for (int j = 0; j < 2; ++j)
    for (int t = 0; t < fit.grid.size(); ++t)
      EXPECT_LT(fit.band_lower[j][t], fit.band_upper[j][t]);
}

TEST(ErrorSurfacing, DegenerateAndMisalignedInputsAreRejected) {
  std::mt19937_64 rng(73);
  const FunctionalIv d = make_functional_iv(120, 6, 0.1, rng);
  const VectorXd y =
      continuous_outcome(d, four_coefficients(0.5, -0.3, 0.4, 0.2), 0.5, 1.0, rng);
  ModelConfig cfg;
  cfg.fixed_components = {1, 1};

  // Constant trajectories carry no functional variation.
  std::vector<SparseFunctionalSample> flat = d.samples1;
  for (auto& s : flat) std::fill(s.values.begin(), s.values.end(), 2.0);
  EXPECT_THROW(fit_mvfmr(flat, d.samples2, y, d.instruments, cfg), InsufficientComponentsError);

  // Subject ids must agree across exposures.
  std::vector<SparseFunctionalSample> renumbered = d.samples2;
  for (auto& s : renumbered) s.subject_id += 1000;
  EXPECT_THROW(fit_mvfmr(d.samples1, renumbered, y, d.instruments, cfg), SubjectMismatchError);

  // Outcome length must match the subject count.
  EXPECT_THROW(fit_mvfmr(d.samples1, d.samples2, y.head(100), d.instruments, cfg),
               DimensionMismatchError);

  // Feeding the same exposure twice duplicates the score columns.
  EXPECT_THROW(fit_mvfmr(d.samples1, d.samples1, y, d.instruments, cfg), RankDeficiencyError);
}

TEST(ErrorSurfacing, ComponentRequestsBeyondAvailableAreRejected) {
  std::mt19937_64 rng(79);
  const FunctionalIv d = make_functional_iv(200, 8, 0.1, rng);
  const VectorXd y =
      continuous_outcome(d, four_coefficients(0.5, -0.3, 0.4, 0.2), 0.5, 1.0, rng);

  // The decomposition can return at most grid_size components, so a request
  // beyond that is never satisfiable.
  ModelConfig fixed;
  fixed.fixed_components = {fixed.fpca.grid_size + 1, 1};
  EXPECT_THROW(fit_mvfmr(d.samples1, d.samples2, y, d.instruments, fixed),
               InsufficientComponentsError);

  ModelConfig cv;
  cv.candidates = {{cv.fpca.grid_size + 1, 1}};
  EXPECT_THROW(select_components(d.samples1, d.samples2, y, d.instruments, cv),
               InsufficientComponentsError);
}

// Hand-assembled fit over a known basis: bands are pure functions of the
// stored covariance, so their geometry is checkable in closed form.
MvfmrFit synthetic_fit(const MatrixXd& covariance) {
  MvfmrFit fit;
  fit.component_counts = {2, 0};
  fit.grid = linspace(0.0, kDomain, 21);
  FpcaModel model;
  model.grid = fit.grid;
  model.eigenvalues = VectorXd::Constant(2, 1.0);
  model.eigenfunctions.resize(fit.grid.size(), 2);
  for (int i = 0; i < fit.grid.size(); ++i) {
    model.eigenfunctions(i, 0) = phi1(fit.grid[i]);
    model.eigenfunctions(i, 1) = phi2(fit.grid[i]);
  }
  fit.fpca_models.push_back(model);
  fit.beta_star = VectorXd(2);
  fit.beta_star << 0.5, -0.3;
  fit.beta_covariance = covariance;
  fit.beta_functions.push_back(model.eigenfunctions * fit.beta_star);
  return fit;
}

TEST(PointwiseBandsTest, ZeroCovarianceCollapsesAndLevelsNest) {
  const MvfmrFit exact = synthetic_fit(MatrixXd::Zero(2, 2));
  const PointwiseBands collapsed = pointwise_bands(exact, 0.95);
  EXPECT_EQ((collapsed.lower[0] - exact.beta_functions[0]).norm(), 0.0);
  EXPECT_EQ((collapsed.upper[0] - exact.beta_functions[0]).norm(), 0.0);

  const MvfmrFit noisy = synthetic_fit(0.04 * MatrixXd::Identity(2, 2));
  const PointwiseBands wide = pointwise_bands(noisy, 0.95);
  const PointwiseBands narrow = pointwise_bands(noisy, 0.80);
  for (int t = 0; t < noisy.grid.size(); ++t) {
    // phi1^2 + phi2^2 = 2/T > 0 everywhere, so nesting is strict.
    EXPECT_LT(wide.lower[0][t], narrow.lower[0][t]);
    EXPECT_LT(narrow.lower[0][t], narrow.upper[0][t]);
    EXPECT_LT(narrow.upper[0][t], wide.upper[0][t]);
  }

  // Closed form at one point: half-width = z * sqrt(0.04 * 2 / T).
  const double z = normal_quantile(0.975);
  const double half = z * std::sqrt(0.04 * 2.0 / kDomain);
  EXPECT_NEAR(wide.upper[0][7] - noisy.beta_functions[0][7], half, 1e-12);

  EXPECT_THROW(pointwise_bands(noisy, 0.0), std::invalid_argument);
  EXPECT_THROW(pointwise_bands(noisy, 1.0), std::invalid_argument);
}

TEST(PointwiseBandsTest, BootstrapIsSeededAndGuarded) {
  const MvfmrFit synthetic = synthetic_fit(MatrixXd::Zero(2, 2));
  EXPECT_THROW(pointwise_bands(synthetic, 0.95, BandMethod::bootstrap, 99),
               InsufficientRepsError);

  std::mt19937_64 rng(83);
  const FunctionalIv d = make_functional_iv(250, 8, 0.1, rng);
  const VectorXd y =
      continuous_outcome(d, four_coefficients(0.5, -0.3, 0.0, 0.0), 0.5, 1.0, rng);
  ModelConfig cfg;
  cfg.fixed_components = {2, 0};
  const MvfmrFit fit = fit_ufmr(d.samples1, y, d.instruments, cfg);
  ASSERT_TRUE(fit.gmm.converged);

  const PointwiseBands a = pointwise_bands(fit, 0.9, BandMethod::bootstrap, 120, 7);
  const PointwiseBands b = pointwise_bands(fit, 0.9, BandMethod::bootstrap, 120, 7);
  EXPECT_EQ((a.lower[0] - b.lower[0]).norm(), 0.0);
  EXPECT_EQ((a.upper[0] - b.upper[0]).norm(), 0.0);
  for (int t = 0; t < fit.grid.size(); ++t) EXPECT_LE(a.lower[0][t], a.upper[0][t]);

  const PointwiseBands c = pointwise_bands(fit, 0.9, BandMethod::bootstrap, 120, 8);
  EXPECT_GT((a.lower[0] - c.lower[0]).norm(), 0.0);
}

TEST(PointwiseBandsTest, BootstrapReportsWhenMostRefitsFail) {
  // A binary design whose outcome is identically zero: every bootstrap
  // refit hits a constant outcome and fails, which must surface as an error
  // rather than silently empty bands.
  std::mt19937_64 rng(89);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n = 120;
  MvfmrFit fit;
  fit.binary = true;
  fit.component_counts = {1, 0};
  fit.grid = linspace(0.0, kDomain, 11);
  fit.beta_functions.push_back(VectorXd::Zero(fit.grid.size()));
  fit.design.scores.resize(n, 1);
  fit.design.instruments.values.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    fit.design.scores(i, 0) = gauss(rng);
    fit.design.instruments.values(i, 0) = gauss(rng);
    fit.design.instruments.values(i, 1) = gauss(rng);
  }
  fit.design.instruments.column_labels.assign(2, InstrumentLabel::shared);
  fit.design.block_sizes = {1, 0};
  fit.design.outcome = VectorXd::Zero(n);
  EXPECT_THROW(pointwise_bands(fit, 0.95, BandMethod::bootstrap, 100, 5), NonConvergenceError);
}

}  // namespace
}  // namespace mvfmr
