#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mvfmr/errors.hpp"
#include "mvfmr/estimators.hpp"
#include "mvfmr/fpca.hpp"
#include "mvfmr/mathutil.hpp"

namespace mvfmr {

enum class Scenario { pleiotropy, null_control, mediation };
enum class OutcomeType { continuous, binary };
enum class EffectShape { null_effect, linear, quadratic, custom };

// True time-varying effect curve beta_j(t).
struct EffectSpec {
  EffectShape shape = EffectShape::linear;
  VectorXd custom_times;   // used when shape == custom
  VectorXd custom_values;

  double operator()(double t) const {
    switch (shape) {
      case EffectShape::null_effect:
        return 0.0;
      case EffectShape::linear:
        return 0.02 * t;
      case EffectShape::quadratic:
        return 0.002 * t * t - 0.11 * t + 0.5;
      case EffectShape::custom: {
        VectorXd q(1);
        q[0] = t;
        return interp_linear(custom_times, custom_values, q)[0];
      }
    }
    return 0.0;
  }

  VectorXd evaluate(const VectorXd& grid) const {
    VectorXd out(grid.size());
    for (int i = 0; i < grid.size(); ++i) out[i] = (*this)(grid[i]);
    return out;
  }
};

struct ScenarioConfig {
  Scenario scenario = Scenario::pleiotropy;
  int n = 5000;
  int p_total = 100;          // instruments per exposure including the shared block
  double p12_fraction = 0.15;  // shared fraction; P1 = P2 = p_total - P12
  double gamma = 0.3;          // mediation strength, used only when scenario == mediation
  int n_sparse = 10;
  double domain_end = 50.0;
  EffectSpec effect1{EffectShape::linear};
  EffectSpec effect2{EffectShape::linear};
  OutcomeType outcome_type = OutcomeType::continuous;
  int replicates = 500;
  std::uint64_t seed = 0;

  // Declared defaults beyond the published description.
  double confounder_loading = 0.5;   // weight of U in the outcome
  double binary_prevalence = 0.3;    // target prevalence for binary outcomes
  bool redraw_shared_effects = false;  // per-exposure redraw of shared-variant effects
  int generation_grid_size = 201;    // outcome-quadrature grid, finer than estimation grid
  double beta0 = 0.0;

  int p12() const { return static_cast<int>(std::lround(p12_fraction * p_total)); }
  int p_own() const { return p_total - p12(); }
  int p_columns() const { return 2 * p_own() + p12(); }

  void validate() const {
    if (n < 1 || p_total < 1) throw ConfigError("ScenarioConfig: n and p_total must be positive");
    if (p12_fraction < 0.0 || p12_fraction >= 1.0)
      throw ConfigError("ScenarioConfig: p12_fraction must lie in [0,1)");
    if (std::abs(p12_fraction * p_total - p12()) > 1e-9)
      throw ConfigError("ScenarioConfig: p12_fraction * p_total must round to an integer");
    if (n_sparse < 2) throw ConfigError("ScenarioConfig: n_sparse must be >= 2");
    if (n_sparse > generation_grid_size)
      throw ConfigError("ScenarioConfig: n_sparse exceeds the generation grid size");
    if (!(domain_end > 0)) throw ConfigError("ScenarioConfig: domain_end must be positive");
    if (generation_grid_size < 21) throw ConfigError("ScenarioConfig: generation grid too coarse");
    if (binary_prevalence <= 0.0 || binary_prevalence >= 1.0)
      throw ConfigError("ScenarioConfig: binary_prevalence must lie in (0,1)");
    if (replicates < 1) throw ConfigError("ScenarioConfig: replicates must be >= 1");
  }
};

// Per-variant intercept/slope of the time-varying genetic effect
// alpha_l(t) = a_l + b_l * t, kept per exposure. Shared-variant effects are
// drawn once and applied to both exposures unless redraw_shared_effects.
struct GeneticEffects {
  VectorXd a_own1, b_own1;      // exposure-1-only variants
  VectorXd a_own2, b_own2;      // exposure-2-only variants
  VectorXd a_shared1, b_shared1;  // shared variants, effect on exposure 1
  VectorXd a_shared2, b_shared2;  // shared variants, effect on exposure 2
};

// One generated dataset with the latent ground truth retained.
struct ReplicateData {
  InstrumentMatrix genotypes;
  VectorXd gen_grid;
  std::vector<MatrixXd> dense;  // per exposure, N x gen_grid
  std::vector<std::vector<SparseFunctionalSample>> sparse;
  VectorXd outcome;
  std::vector<VectorXd> truth_on_gen_grid;
  std::vector<EffectSpec> effects;
  VectorXd confounder_sum;  // per subject: sum_j (U_0j + time-average U_j)
  double binary_intercept = 0.0;
};

inline InstrumentMatrix gen_genotypes(int n, int p1, int p2, int p12, std::mt19937_64& rng) {
  InstrumentMatrix g;
  const int p = p1 + p2 + p12;
  g.values.resize(n, p);
  g.column_labels.resize(p);
  std::binomial_distribution<int> dosage(2, 0.3);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < n; ++i) g.values(i, j) = static_cast<double>(dosage(rng));
    g.column_labels[j] = j < p1                ? InstrumentLabel::exposure1
                         : j < p1 + p2         ? InstrumentLabel::exposure2
                                               : InstrumentLabel::shared;
  }
  return g;
}

inline GeneticEffects gen_genetic_effects(int p1, int p2, int p12, bool redraw_shared,
                                          std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ua(-0.1, 0.1);
  std::uniform_real_distribution<double> ub(-0.004, 0.004);
  auto draw_pair = [&](int count, VectorXd& a, VectorXd& b) {
    a.resize(count);
    b.resize(count);
    for (int l = 0; l < count; ++l) {
      a[l] = ua(rng);
      b[l] = ub(rng);
    }
  };
  GeneticEffects e;
  draw_pair(p1, e.a_own1, e.b_own1);
  draw_pair(p2, e.a_own2, e.b_own2);
  draw_pair(p12, e.a_shared1, e.b_shared1);
  if (redraw_shared) {
    draw_pair(p12, e.a_shared2, e.b_shared2);
  } else {
    e.a_shared2 = e.a_shared1;
    e.b_shared2 = e.b_shared1;
  }
  return e;
}

// Discretized Wiener process on an increasing grid starting at 0:
// W(0) = 0, increments N(0, scale^2 * dt).
inline VectorXd gen_wiener(const VectorXd& grid, double scale, std::mt19937_64& rng) {
  if (grid.size() < 1 || grid[0] != 0.0)
    throw std::invalid_argument("gen_wiener: grid must start at 0");
  std::normal_distribution<double> z(0.0, 1.0);
  VectorXd w(grid.size());
  w[0] = 0.0;
  for (int i = 1; i < grid.size(); ++i)
    w[i] = w[i - 1] + scale * std::sqrt(grid[i] - grid[i - 1]) * z(rng);
  return w;
}

struct ExposureBundle {
  std::vector<MatrixXd> dense;
  std::vector<std::vector<SparseFunctionalSample>> sparse;
  VectorXd confounder_sum;
};

// Dense latent trajectories plus sparse observations. Draw order per subject
// is fixed (U_01, U_1, eps_1, U_02, U_2, eps_2, then sparsification indices)
// so that matched seeds produce matched streams across scenarios; the
// mediation term reuses exposure 1 without consuming randomness.
inline ExposureBundle gen_exposures(const ScenarioConfig& cfg, const InstrumentMatrix& genotypes,
                                    const GeneticEffects& effects, std::mt19937_64& rng) {
  const int n = cfg.n;
  const int gsize = cfg.generation_grid_size;
  const VectorXd grid = linspace(0.0, cfg.domain_end, gsize);
  const int p1 = cfg.p_own(), p2 = cfg.p_own(), p12 = cfg.p12();

  ExposureBundle out;
  out.dense.assign(2, MatrixXd::Zero(n, gsize));
  out.sparse.assign(2, {});
  out.sparse[0].resize(n);
  out.sparse[1].resize(n);
  out.confounder_sum = VectorXd::Zero(n);

  // Genetic signal: X_j^gen = (G_aff a) 1' + (G_aff b) t'.
  const auto& gv = genotypes.values;
  auto genetic_part = [&](const Eigen::Ref<const MatrixXd>& g_own, const VectorXd& a_own,
                          const VectorXd& b_own, const Eigen::Ref<const MatrixXd>& g_shared,
                          const VectorXd& a_shared, const VectorXd& b_shared) {
    VectorXd ca = g_own * a_own + g_shared * a_shared;  // N
    VectorXd cb = g_own * b_own + g_shared * b_shared;
    MatrixXd x = ca * Eigen::RowVectorXd::Ones(gsize);
    x.noalias() += cb * grid.transpose();
    return x;
  };
  out.dense[0] = genetic_part(gv.leftCols(p1), effects.a_own1, effects.b_own1, gv.rightCols(p12),
                              effects.a_shared1, effects.b_shared1);
  out.dense[1] = genetic_part(gv.middleCols(p1, p2), effects.a_own2, effects.b_own2,
                              gv.rightCols(p12), effects.a_shared2, effects.b_shared2);

  std::normal_distribution<double> z(0.0, 1.0);
  const double gamma_eff = cfg.scenario == Scenario::mediation ? cfg.gamma : 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double u0 = z(rng);
      const VectorXd u = gen_wiener(grid, 1.0, rng);
      const VectorXd eps = gen_wiener(grid, 1.0, rng);
      out.dense[j].row(i) += (u.array() + u0 + eps.array()).matrix().transpose();
      out.confounder_sum[i] += u0 + trapz(grid, u) / cfg.domain_end;
    }
    out.dense[1].row(i) += gamma_eff * out.dense[0].row(i);
  }

  // Sparse observation times: n_sparse distinct generation-grid indices per
  // subject per exposure, sampled uniformly without replacement.
  std::vector<int> all_idx(gsize);
  std::iota(all_idx.begin(), all_idx.end(), 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 2; ++j) {
      std::vector<int> pick;
      pick.reserve(cfg.n_sparse);
      std::sample(all_idx.begin(), all_idx.end(), std::back_inserter(pick), cfg.n_sparse, rng);
      auto& samp = out.sparse[j][i];
      samp.subject_id = i + 1;
      samp.times.resize(cfg.n_sparse);
      samp.values.resize(cfg.n_sparse);
      for (int s = 0; s < cfg.n_sparse; ++s) {
        samp.times[s] = grid[pick[s]];
        samp.values[s] = out.dense[j](i, pick[s]);
      }
    }
  }
  return out;
}

// Trapezoidal quadrature of integral beta_j(t) X_ij(t) dt for one subject.
inline double integrate_exposure_effect(const VectorXd& grid, const Eigen::Ref<const Eigen::RowVectorXd>& dense_row,
                                        const VectorXd& truth) {
  if (grid.size() != dense_row.size() || grid.size() != truth.size())
    throw DimensionMismatchError("integrate_exposure_effect: grid length mismatch");
  const VectorXd integrand = (dense_row.transpose().array() * truth.array()).matrix();
  return trapz(grid, integrand);
}

// Outcome generation. Continuous: Y = beta0 + sum_j integral(beta_j X_j)
// + loading * confounder_sum + N(0,1). Binary: Bernoulli with the same
// predictor, intercept recentered by bisection to the target prevalence.
// confounder_sum may be empty for unconfounded data.
inline VectorXd gen_outcome(const ScenarioConfig& cfg, const VectorXd& gen_grid,
                            const std::vector<MatrixXd>& dense,
                            const std::vector<VectorXd>& truth_on_gen_grid,
                            const VectorXd& confounder_sum, std::mt19937_64& rng,
                            double* binary_intercept_out = nullptr) {
  if (dense.size() != truth_on_gen_grid.size())
    throw DimensionMismatchError("gen_outcome: dense/truth exposure count mismatch");
  const int n = dense.empty() ? 0 : static_cast<int>(dense[0].rows());
  VectorXd lp = VectorXd::Constant(n, cfg.beta0);
  for (std::size_t j = 0; j < dense.size(); ++j) {
    if (dense[j].cols() != gen_grid.size() || truth_on_gen_grid[j].size() != gen_grid.size())
      throw DimensionMismatchError("gen_outcome: grid length mismatch for exposure " +
                                   std::to_string(j + 1));
    const VectorXd w = trapezoid_weights(gen_grid);
    const VectorXd bw = (truth_on_gen_grid[j].array() * w.array()).matrix();
    lp.noalias() += dense[j] * bw;
  }
  if (confounder_sum.size() == n)
    lp.noalias() += cfg.confounder_loading * confounder_sum;
  else if (confounder_sum.size() != 0)
    throw DimensionMismatchError("gen_outcome: confounder vector length mismatch");

  VectorXd y(n);
  if (cfg.outcome_type == OutcomeType::continuous) {
    std::normal_distribution<double> z(0.0, 1.0);
    for (int i = 0; i < n; ++i) y[i] = lp[i] + z(rng);
    if (binary_intercept_out) *binary_intercept_out = 0.0;
  } else {
    // Recenter to the target prevalence with bisection on the intercept.
    const VectorXd base = lp.array() - cfg.beta0;
    auto prevalence = [&](double c) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += gmmdet::expit(c + base[i]);
      return acc / n;
    };
    // Bracket beyond the range of the linear predictor: at the endpoints
    // every subject sits in a saturated tail, so the target prevalence is
    // crossed strictly inside regardless of the predictor's scale.
    const double spread = n > 0 ? base.cwiseAbs().maxCoeff() : 0.0;
    double lo = -(spread + 60.0), hi = spread + 60.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (prevalence(mid) < cfg.binary_prevalence ? lo : hi) = mid;
    }
    const double c = 0.5 * (lo + hi);
    if (binary_intercept_out) *binary_intercept_out = c;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n; ++i) y[i] = u(rng) < gmmdet::expit(c + base[i]) ? 1.0 : 0.0;
  }
  return y;
}

// Generates one full replicate deterministically from (config, replicate
// index): genotypes, genetic effects, exposures, sparse samples, outcome.
inline ReplicateData simulate_replicate(const ScenarioConfig& cfg, std::uint64_t replicate_index) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(cfg.seed, replicate_index));

  ReplicateData rep;
  rep.gen_grid = linspace(0.0, cfg.domain_end, cfg.generation_grid_size);
  rep.effects = {cfg.effect1, cfg.effect2};
  if (cfg.scenario == Scenario::null_control) rep.effects[1] = EffectSpec{EffectShape::null_effect};
  rep.truth_on_gen_grid = {rep.effects[0].evaluate(rep.gen_grid), rep.effects[1].evaluate(rep.gen_grid)};

  rep.genotypes = gen_genotypes(cfg.n, cfg.p_own(), cfg.p_own(), cfg.p12(), rng);
  const GeneticEffects effects =
      gen_genetic_effects(cfg.p_own(), cfg.p_own(), cfg.p12(), cfg.redraw_shared_effects, rng);
  ExposureBundle bundle = gen_exposures(cfg, rep.genotypes, effects, rng);
  rep.dense = std::move(bundle.dense);
  rep.sparse = std::move(bundle.sparse);
  rep.confounder_sum = std::move(bundle.confounder_sum);
  rep.outcome = gen_outcome(cfg, rep.gen_grid, rep.dense, rep.truth_on_gen_grid, rep.confounder_sum,
                            rng, &rep.binary_intercept);
  return rep;
}

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::pleiotropy:
      return "pleiotropy";
    case Scenario::null_control:
      return "null_control";
    case Scenario::mediation:
      return "mediation";
  }
  return "?";
}

inline const char* to_string(OutcomeType t) {
  return t == OutcomeType::continuous ? "continuous" : "binary";
}

inline const char* to_string(EffectShape s) {
  switch (s) {
    case EffectShape::null_effect:
      return "null";
    case EffectShape::linear:
      return "linear";
    case EffectShape::quadratic:
      return "quadratic";
    case EffectShape::custom:
      return "custom";
  }
  return "?";
}

}  // namespace mvfmr
