#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <mvfmr/mathutil.hpp>
#include <mvfmr/simulate.hpp>

namespace mvfmr {
namespace {

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Kolmogorov-Smirnov p-value of a sample against the standard normal,
// using the asymptotic distribution with the small-sample correction
// lambda = (sqrt(n) + 0.12 + 0.11/sqrt(n)) * D.
double ks_normal_pvalue(VectorXd y) {
  std::sort(y.data(), y.data() + y.size());
  const int n = static_cast<int>(y.size());
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    const double f = standard_normal_cdf(y[i]);
    d = std::max({d, std::abs((i + 1.0) / n - f), std::abs(f - static_cast<double>(i) / n)});
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k)
    p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

double pearson(const VectorXd& a, const VectorXd& b) {
  const double ma = a.mean(), mb = b.mean();
  const VectorXd ca = a.array() - ma, cb = b.array() - mb;
  return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

// Small configuration used by most tests: 20 variants per exposure with a
// 3-variant shared block, 101-point generation grid on [0, 50].
ScenarioConfig small_config() {
  ScenarioConfig cfg;
  cfg.n = 2000;
  cfg.p_total = 20;
  cfg.p12_fraction = 0.15;
  cfg.generation_grid_size = 101;
  return cfg;
}

TEST(GenotypeGeneration, BinomialDosagesWithLabeledBlocks) {
  std::mt19937_64 rng(11);
  const int n = 2000, p1 = 40, p2 = 40, p12 = 20;
  const InstrumentMatrix g = gen_genotypes(n, p1, p2, p12, rng);
  ASSERT_EQ(g.values.rows(), n);
  ASSERT_EQ(g.values.cols(), p1 + p2 + p12);

  for (int j = 0; j < g.values.cols(); ++j)
    for (int i = 0; i < n; ++i) {
      const double v = g.values(i, j);
      ASSERT_TRUE(v == 0.0 || v == 1.0 || v == 2.0) << "dosage " << v;
    }

  // Dosages are Binomial(2, 0.3): mean 0.6, variance 0.42. Pooled over
  // n * p entries the 3-sigma band on the mean is 3 * sqrt(0.42 / (n p)).
  const double count = static_cast<double>(n) * g.values.cols();
  const double mean = g.values.mean();
  EXPECT_NEAR(mean, 0.6, 3.0 * std::sqrt(0.42 / count));
  const double var = (g.values.array() - mean).square().sum() / (count - 1.0);
  EXPECT_NEAR(var, 0.42, 0.01);

  for (int j = 0; j < p1; ++j) EXPECT_EQ(g.column_labels[j], InstrumentLabel::exposure1);
  for (int j = p1; j < p1 + p2; ++j) EXPECT_EQ(g.column_labels[j], InstrumentLabel::exposure2);
  for (int j = p1 + p2; j < p1 + p2 + p12; ++j)
    EXPECT_EQ(g.column_labels[j], InstrumentLabel::shared);
  EXPECT_NO_THROW(g.validate());
}

TEST(GenotypeGeneration, EffectDrawsRespectUniformSupports) {
  std::mt19937_64 rng(22);
  const GeneticEffects e = gen_genetic_effects(4000, 10, 10, false, rng);
  ASSERT_EQ(e.a_own1.size(), 4000);
  EXPECT_LE(e.a_own1.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_LE(e.b_own1.cwiseAbs().maxCoeff(), 0.004);
  EXPECT_LE(e.a_own2.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_LE(e.b_shared1.cwiseAbs().maxCoeff(), 0.004);

  // Intercepts are U(-0.1, 0.1): sd 0.2/sqrt(12), so the 3-sigma band on the
  // mean of 4000 draws is below 0.0028.
  EXPECT_NEAR(e.a_own1.mean(), 0.0, 3.0 * (0.2 / std::sqrt(12.0)) / std::sqrt(4000.0));

  // Shared-variant effects apply identically to both exposures by default.
  EXPECT_EQ((e.a_shared1 - e.a_shared2).norm(), 0.0);
  EXPECT_EQ((e.b_shared1 - e.b_shared2).norm(), 0.0);

  std::mt19937_64 rng2(22);
  const GeneticEffects r = gen_genetic_effects(10, 10, 10, true, rng2);
  EXPECT_GT((r.a_shared1 - r.a_shared2).norm(), 0.0);
}

TEST(WienerProcess, MatchesBrownianLaw) {
  const VectorXd grid = linspace(0.0, 50.0, 26);
  const int paths = 10000;
  std::mt19937_64 rng(33);
  MatrixXd w(paths, grid.size());
  for (int i = 0; i < paths; ++i) {
    const VectorXd path = gen_wiener(grid, 1.0, rng);
    ASSERT_EQ(path[0], 0.0);
    w.row(i) = path.transpose();
  }

  auto column_var = [&](int j) {
    const double m = w.col(j).mean();
    return (w.col(j).array() - m).square().sum() / (paths - 1.0);
  };
  // Var W(t) = t; the sampling error of the variance over 1e4 paths is
  // well inside 5%.
  EXPECT_NEAR(column_var(5), grid[5], 0.05 * grid[5]);
  EXPECT_NEAR(column_var(25), grid[25], 0.05 * grid[25]);

  // Disjoint increments are uncorrelated.
  const VectorXd inc1 = w.col(12) - w.col(0);
  const VectorXd inc2 = w.col(25) - w.col(12);
  EXPECT_LE(std::abs(pearson(inc1, inc2)), 0.05);

  std::mt19937_64 rng2(34);
  const VectorXd scaled = gen_wiener(grid, 2.0, rng2);
  EXPECT_EQ(scaled[0], 0.0);
  EXPECT_THROW(gen_wiener(linspace(1.0, 2.0, 5), 1.0, rng2), std::invalid_argument);
}

TEST(ExposureGeneration, DecomposesIntoGeneticSignalPlusConfounderAndNoise) {
  ScenarioConfig cfg = small_config();
  cfg.n = 5000;
  const int p_own = cfg.p_own(), p12 = cfg.p12();
  std::mt19937_64 rng(33);
  const InstrumentMatrix g = gen_genotypes(cfg.n, p_own, p_own, p12, rng);
  const GeneticEffects eff = gen_genetic_effects(p_own, p_own, p12, false, rng);
  const ExposureBundle bundle = gen_exposures(cfg, g, eff, rng);
  const VectorXd grid = linspace(0.0, cfg.domain_end, cfg.generation_grid_size);

  // Subtract the genetic signal computable from the genotypes and drawn
  // effects; the remainder per subject is U0 + U(t) + eps(t) with
  // U, eps independent standard Wiener processes.
  const VectorXd ca = g.values.leftCols(p_own) * eff.a_own1 + g.values.rightCols(p12) * eff.a_shared1;
  const VectorXd cb = g.values.leftCols(p_own) * eff.b_own1 + g.values.rightCols(p12) * eff.b_shared1;
  MatrixXd residual = bundle.dense[0];
  residual.noalias() -= ca * Eigen::RowVectorXd::Ones(grid.size());
  residual.noalias() -= cb * grid.transpose();

  auto column_stats = [&](int j, double& mean, double& var) {
    mean = residual.col(j).mean();
    var = (residual.col(j).array() - mean).square().sum() / (cfg.n - 1.0);
  };
  double mean0, var0, mean_mid, var_mid, mean_end, var_end;
  column_stats(0, mean0, var0);
  column_stats(50, mean_mid, var_mid);
  column_stats(100, mean_end, var_end);

  // At t = 0 only the N(0,1) subject intercept remains; at time t the
  // variance is 1 + 2t.
  EXPECT_NEAR(mean0, 0.0, 3.0 / std::sqrt(cfg.n));
  EXPECT_NEAR(var0, 1.0, 0.1);
  EXPECT_NEAR(var_mid, 1.0 + 2.0 * grid[50], 0.1 * (1.0 + 2.0 * grid[50]));
  EXPECT_NEAR(var_end, 1.0 + 2.0 * grid[100], 0.1 * (1.0 + 2.0 * grid[100]));

  // Cov(residual(0), residual(T)) = Var(U0) = 1.
  const VectorXd r0 = residual.col(0).array() - mean0;
  const VectorXd rT = residual.col(100).array() - mean_end;
  EXPECT_NEAR(r0.dot(rT) / (cfg.n - 1.0), 1.0, 0.5);

  // confounder_sum = sum over exposures of U0 + time-average of U:
  // variance 2 * (1 + T/3).
  const double cs_mean = bundle.confounder_sum.mean();
  const double cs_var =
      (bundle.confounder_sum.array() - cs_mean).square().sum() / (cfg.n - 1.0);
  const double cs_var_expected = 2.0 * (1.0 + cfg.domain_end / 3.0);
  EXPECT_NEAR(cs_var, cs_var_expected, 0.1 * cs_var_expected);

  // The second exposure has the same residual law under pleiotropy.
  const VectorXd ca2 =
      g.values.middleCols(p_own, p_own) * eff.a_own2 + g.values.rightCols(p12) * eff.a_shared2;
  const VectorXd col0 = bundle.dense[1].col(0) - ca2;
  const double m2 = col0.mean();
  EXPECT_NEAR((col0.array() - m2).square().sum() / (cfg.n - 1.0), 1.0, 0.1);
}

TEST(ExposureGeneration, MediationAddsScaledFirstExposure) {
  ScenarioConfig with = small_config();
  with.scenario = Scenario::mediation;
  with.gamma = 0.3;
  with.seed = 99;
  ScenarioConfig without = with;
  without.gamma = 0.0;

  const ReplicateData a = simulate_replicate(with, 4);
  const ReplicateData b = simulate_replicate(without, 4);
  ASSERT_EQ((a.dense[0] - b.dense[0]).norm(), 0.0);
  const MatrixXd expected = 0.3 * a.dense[0];
  EXPECT_LE((a.dense[1] - b.dense[1] - expected).cwiseAbs().maxCoeff(), 1e-9);

  // gamma = 0 mediation consumes the same random stream as pleiotropy and
  // adds a zero term, so the whole replicate matches bit for bit.
  ScenarioConfig pleio = without;
  pleio.scenario = Scenario::pleiotropy;
  const ReplicateData c = simulate_replicate(pleio, 4);
  EXPECT_EQ((b.outcome - c.outcome).norm(), 0.0);
  EXPECT_EQ((b.dense[1] - c.dense[1]).norm(), 0.0);
}

TEST(SparseSampling, CountsTimesAndValuesAreConsistent) {
  ScenarioConfig cfg = small_config();
  cfg.n = 50;
  cfg.seed = 5;
  const ReplicateData rep = simulate_replicate(cfg, 0);
  const double step = cfg.domain_end / (cfg.generation_grid_size - 1);

  for (int j = 0; j < 2; ++j) {
    ASSERT_EQ(static_cast<int>(rep.sparse[j].size()), cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
      const auto& s = rep.sparse[j][i];
      EXPECT_EQ(s.subject_id, i + 1);
      ASSERT_EQ(s.times.size(), cfg.n_sparse);
      ASSERT_EQ(s.values.size(), cfg.n_sparse);
      for (int k = 0; k < cfg.n_sparse; ++k) {
        if (k > 0) EXPECT_LT(s.times[k - 1], s.times[k]);
        const int idx = static_cast<int>(std::lround(s.times[k] / step));
        ASSERT_EQ(rep.gen_grid[idx], s.times[k]);
        EXPECT_EQ(s.values[k], rep.dense[j](i, idx));
      }
    }
  }
}

TEST(OutcomeGeneration, NullUnconfoundedOutcomeIsStandardNormal) {
  ScenarioConfig cfg = small_config();
  cfg.n = 5000;
  cfg.effect1 = EffectSpec{EffectShape::null_effect};
  cfg.effect2 = EffectSpec{EffectShape::null_effect};
  cfg.confounder_loading = 0.0;
  cfg.seed = 45;  // fixed draw; the p-value below is then deterministic
  const ReplicateData rep = simulate_replicate(cfg, 0);

  EXPECT_NEAR(rep.outcome.mean(), 0.0, 3.0 / std::sqrt(cfg.n));
  EXPECT_NEAR(vector_sd(rep.outcome), 1.0, 0.05);
  EXPECT_GT(ks_normal_pvalue(rep.outcome), 0.01);
}

TEST(OutcomeGeneration, TrapezoidEffectIntegralsMatchClosedForms) {
  const VectorXd grid = linspace(0.0, 50.0, 201);
  const Eigen::RowVectorXd ones = Eigen::RowVectorXd::Ones(grid.size());

  // Constant exposure X = 1 with the linear curve 0.02 t integrates to 25
  // exactly (the trapezoid rule is exact on linear integrands).
  const EffectSpec linear{EffectShape::linear};
  EXPECT_NEAR(integrate_exposure_effect(grid, ones, linear.evaluate(grid)), 25.0, 1e-9);

  // The quadratic curve 0.002 t^2 - 0.11 t + 0.5 integrates to -29.1666...;
  // on a uniform grid the trapezoid error is exactly
  // panels * h^3 f'' / 12 = 200 * 0.25^3 * 0.004 / 12.
  const EffectSpec quad{EffectShape::quadratic};
  const double analytic = 0.002 * 125000.0 / 3.0 - 0.11 * 1250.0 + 0.5 * 50.0;
  const double trapz_error = 200.0 * std::pow(0.25, 3) * 0.004 / 12.0;
  const double value = integrate_exposure_effect(grid, ones, quad.evaluate(grid));
  EXPECT_NEAR(value, analytic, 2e-3);
  EXPECT_NEAR(value, analytic + trapz_error, 1e-9);

  EXPECT_THROW(integrate_exposure_effect(grid, ones.head(5), linear.evaluate(grid)),
               DimensionMismatchError);
}

TEST(EffectCurves, ClosedFormsAndCustomInterpolation) {
  const EffectSpec null_curve{EffectShape::null_effect};
  EXPECT_EQ(null_curve(0.0), 0.0);
  EXPECT_EQ(null_curve(37.2), 0.0);

  const EffectSpec linear{EffectShape::linear};
  EXPECT_DOUBLE_EQ(linear(0.0), 0.0);
  EXPECT_DOUBLE_EQ(linear(25.0), 0.5);
  EXPECT_DOUBLE_EQ(linear(50.0), 1.0);

  const EffectSpec quad{EffectShape::quadratic};
  EXPECT_DOUBLE_EQ(quad(0.0), 0.5);
  EXPECT_NEAR(quad(50.0), 0.0, 1e-12);
  EXPECT_NEAR(quad(27.5), -1.0125, 1e-12);  // vertex of the parabola

  EffectSpec custom{EffectShape::custom};
  custom.custom_times = linspace(0.0, 50.0, 3);
  custom.custom_values.resize(3);
  custom.custom_values << 0.5, -1.0, 0.0;
  EXPECT_NEAR(custom(12.5), -0.25, 1e-12);
  EXPECT_NEAR(custom(37.5), -0.5, 1e-12);
  EXPECT_THROW(custom(60.0), OutOfDomainError);

  const VectorXd grid = linspace(0.0, 50.0, 11);
  const VectorXd curve = custom.evaluate(grid);
  for (int i = 0; i < grid.size(); ++i) EXPECT_DOUBLE_EQ(curve[i], custom(grid[i]));
}

TEST(ScenarioContrast, SecondExposureContributionSeparatesScenarios) {
  ScenarioConfig pleio = small_config();
  pleio.seed = 55;
  ScenarioConfig null_cfg = pleio;
  null_cfg.scenario = Scenario::null_control;

  const ReplicateData p = simulate_replicate(pleio, 2);
  const ReplicateData z = simulate_replicate(null_cfg, 2);

  ASSERT_EQ((p.dense[1] - z.dense[1]).norm(), 0.0);
  EXPECT_EQ(z.effects[1].shape, EffectShape::null_effect);
  EXPECT_EQ(z.truth_on_gen_grid[1].cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(p.truth_on_gen_grid[1].cwiseAbs().maxCoeff(), 0.0);

  // With matched seeds the outcomes differ by exactly the second exposure's
  // effect integral, because the noise stream is aligned.
  const VectorXd w = trapezoid_weights(p.gen_grid);
  const VectorXd bw = (p.truth_on_gen_grid[1].array() * w.array()).matrix();
  const VectorXd expected = p.dense[1] * bw;
  EXPECT_LE((p.outcome - z.outcome - expected).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(OutcomeGeneration, ConfounderCouplesExposuresAndOutcome) {
  ScenarioConfig cfg = small_config();
  cfg.n = 5000;
  cfg.effect1 = EffectSpec{EffectShape::null_effect};
  cfg.effect2 = EffectSpec{EffectShape::null_effect};
  cfg.seed = 66;
  const ReplicateData rep = simulate_replicate(cfg, 0);

  // With null effects Y = 0.5 * confounder_sum + noise; the implied
  // correlation is 0.5 sd(cs) / sqrt(0.25 var(cs) + 1) which is about 0.95.
  EXPECT_GT(pearson(rep.outcome, rep.confounder_sum), 0.9);

  // The confounder also drives the exposures: the time-averaged trajectory
  // shares the U0 + mean(U) component with confounder_sum.
  VectorXd time_avg(cfg.n);
  const VectorXd w = trapezoid_weights(rep.gen_grid);
  for (int i = 0; i < cfg.n; ++i)
    time_avg[i] = rep.dense[0].row(i).dot(w) / cfg.domain_end;
  EXPECT_GT(pearson(time_avg, rep.confounder_sum), 0.4);

  ScenarioConfig off = cfg;
  off.confounder_loading = 0.0;
  const ReplicateData rep_off = simulate_replicate(off, 0);
  EXPECT_LE(std::abs(pearson(rep_off.outcome, rep_off.confounder_sum)), 0.05);
}

TEST(OutcomeGeneration, BinaryOutcomesHitTargetPrevalence) {
  ScenarioConfig cfg = small_config();
  cfg.n = 5000;
  cfg.outcome_type = OutcomeType::binary;
  cfg.seed = 77;
  const ReplicateData rep = simulate_replicate(cfg, 0);

  for (int i = 0; i < cfg.n; ++i)
    ASSERT_TRUE(rep.outcome[i] == 0.0 || rep.outcome[i] == 1.0);
  EXPECT_NEAR(rep.outcome.mean(), cfg.binary_prevalence, 0.03);

  // The stored intercept recenters the linear predictor so that the average
  // event probability equals the target prevalence.
  const VectorXd w = trapezoid_weights(rep.gen_grid);
  VectorXd base = cfg.confounder_loading * rep.confounder_sum;
  for (int j = 0; j < 2; ++j) {
    const VectorXd bw = (rep.truth_on_gen_grid[j].array() * w.array()).matrix();
    base.noalias() += rep.dense[j] * bw;
  }
  double mean_prob = 0.0;
  for (int i = 0; i < cfg.n; ++i) mean_prob += gmmdet::expit(rep.binary_intercept + base[i]);
  EXPECT_NEAR(mean_prob / cfg.n, cfg.binary_prevalence, 1e-6);

  ScenarioConfig rare = cfg;
  rare.binary_prevalence = 0.05;
  const ReplicateData rep_rare = simulate_replicate(rare, 0);
  EXPECT_NEAR(rep_rare.outcome.mean(), 0.05, 0.02);
}

TEST(ScenarioConfigChecks, ArithmeticAndValidation) {
  ScenarioConfig cfg;
  EXPECT_EQ(cfg.p12(), 15);
  EXPECT_EQ(cfg.p_own(), 85);
  EXPECT_EQ(cfg.p_columns(), 185);
  EXPECT_NO_THROW(cfg.validate());

  auto expect_invalid = [](auto&& mutate) {
    ScenarioConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  expect_invalid([](ScenarioConfig& c) { c.n = 0; });
  expect_invalid([](ScenarioConfig& c) { c.p_total = 0; });
  expect_invalid([](ScenarioConfig& c) { c.p12_fraction = -0.1; });
  expect_invalid([](ScenarioConfig& c) { c.p12_fraction = 1.0; });
  expect_invalid([](ScenarioConfig& c) {
    c.p_total = 10;
    c.p12_fraction = 0.12;  // 1.2 shared variants is not an integer
  });
  expect_invalid([](ScenarioConfig& c) { c.n_sparse = 1; });
  expect_invalid([](ScenarioConfig& c) {
    c.generation_grid_size = 101;
    c.n_sparse = 102;
  });
  expect_invalid([](ScenarioConfig& c) { c.domain_end = 0.0; });
  expect_invalid([](ScenarioConfig& c) { c.generation_grid_size = 20; });
  expect_invalid([](ScenarioConfig& c) { c.binary_prevalence = 0.0; });
  expect_invalid([](ScenarioConfig& c) { c.binary_prevalence = 1.0; });
  expect_invalid([](ScenarioConfig& c) { c.replicates = 0; });
}

TEST(Determinism, ReplicatesAreKeyedOnSeedAndIndex) {
  ScenarioConfig cfg = small_config();
  cfg.n = 200;
  cfg.seed = 123;

  const ReplicateData a = simulate_replicate(cfg, 7);
  const ReplicateData b = simulate_replicate(cfg, 7);
  EXPECT_EQ((a.genotypes.values - b.genotypes.values).norm(), 0.0);
  EXPECT_EQ((a.dense[0] - b.dense[0]).norm(), 0.0);
  EXPECT_EQ((a.outcome - b.outcome).norm(), 0.0);
  for (int i = 0; i < cfg.n; ++i)
    EXPECT_TRUE(a.sparse[0][i].times == b.sparse[0][i].times);

  const ReplicateData c = simulate_replicate(cfg, 8);
  EXPECT_GT((a.outcome - c.outcome).norm(), 0.0);

  ScenarioConfig other = cfg;
  other.seed = 124;
  const ReplicateData d = simulate_replicate(other, 7);
  EXPECT_GT((a.outcome - d.outcome).norm(), 0.0);
}

}  // namespace
}  // namespace mvfmr
