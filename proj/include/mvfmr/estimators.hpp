#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "mvfmr/errors.hpp"
#include "mvfmr/mathutil.hpp"

namespace mvfmr {

enum class InstrumentLabel { exposure1, exposure2, shared };

// N x P genotype dosage matrix with per-column exposure-assignment labels.
struct InstrumentMatrix {
  MatrixXd values;
  std::vector<InstrumentLabel> column_labels;
  bool centered = false;

  int n() const { return static_cast<int>(values.rows()); }
  int p() const { return static_cast<int>(values.cols()); }

  int count(InstrumentLabel label) const {
    return static_cast<int>(std::count(column_labels.begin(), column_labels.end(), label));
  }

  void validate() const {
    if (static_cast<int>(column_labels.size()) != p())
      throw DimensionMismatchError("InstrumentMatrix: label count != column count");
    for (int j = 0; j < p(); ++j) {
      const double lo = values.col(j).minCoeff(), hi = values.col(j).maxCoeff();
      if (lo == hi)
        throw SchemaError("InstrumentMatrix: column " + std::to_string(j) + " is constant");
      if (centered && std::abs(values.col(j).mean()) > 1e-10)
        throw std::invalid_argument("InstrumentMatrix: claimed centered but column " +
                                    std::to_string(j) + " has nonzero mean");
    }
  }
};

// FPCA scores stacked as pseudo-exposures next to the outcome and the
// instruments. block_sizes records how many columns belong to each exposure.
struct PseudoExposureDesign {
  MatrixXd scores;
  std::pair<int, int> block_sizes{0, 0};
  VectorXd outcome;
  InstrumentMatrix instruments;

  int n() const { return static_cast<int>(scores.rows()); }
  int k() const { return static_cast<int>(scores.cols()); }

  void validate() const {
    instruments.validate();
    if (block_sizes.first + block_sizes.second != k())
      throw DimensionMismatchError("PseudoExposureDesign: block sizes don't sum to score columns");
    if (outcome.size() != n() || instruments.n() != n())
      throw DimensionMismatchError("PseudoExposureDesign: inconsistent sample sizes");
    const int p = instruments.p();
    if (p < k())
      throw RankDeficiencyError("PseudoExposureDesign: under-identified, P = " + std::to_string(p) +
                                " < K = " + std::to_string(k()));
    if (n() <= p)
      throw RankDeficiencyError("PseudoExposureDesign: order condition violated, N = " +
                                std::to_string(n()) + " <= P = " + std::to_string(p));
  }
};

struct GmmOptions {
  int max_iterations = 200;
  double tolerance = 1e-8;  // infinity norm of the objective gradient
  bool throw_on_nonconvergence = true;
  // Weakly identified CUE objectives can decrease monotonically toward a
  // plateau at infinity. The search is stopped and flagged as diverged once
  // the iterate exceeds divergence_scale * max(1, |init|_inf); non-positive
  // values disable the guard.
  double divergence_scale = 100.0;
};

struct GmmFit {
  VectorXd beta_star;
  MatrixXd covariance;
  double objective_value = 0.0;
  double objective_at_init = 0.0;
  double j_statistic = 0.0;
  int j_dof = 0;
  bool converged = false;
  bool diverged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
};

struct LogisticOptions {
  int max_iterations = 100;
  double tolerance = 1e-10;
  double separation_norm = 1e6;
};

struct TsriFit {
  MatrixXd first_stage_coefficients;  // P x K
  MatrixXd residuals;                 // N x K, orthogonal to instruments
  VectorXd beta_star;                 // K coefficients on the scores
  VectorXd alpha;                     // K coefficients on the residuals
  double intercept = 0.0;
  MatrixXd robust_covariance;  // over (intercept, beta_star, alpha)
  VectorXd fitted_probabilities;
  bool converged = false;
  int iterations = 0;
};

namespace gmmdet {

// Symmetric pair index for variables 0..nvar-1 (requires a <= b).
inline int sym_index(int a, int b, int nvar) { return a * nvar - a * (a - 1) / 2 + (b - a); }

// Sufficient statistics of the centered (instruments, outcome, scores)
// sample for the continuously-updated GMM objective. Variables are indexed
// z_0 = outcome, z_1..z_k = score columns; s stores the P x P matrices
// S_ab = (1/n) * sum_i z_ai z_bi g_i g_i' over centered data.
struct CenteredGmmMoments {
  int n = 0, p = 0, k = 0;
  std::vector<MatrixXd> s;  // sym-indexed over (k+1) variables
  MatrixXd d;               // (1/n) Gc' Xic, P x k
  VectorXd my;              // (1/n) Gc' Yc
  MatrixXd gram;            // (1/n) Gc' Gc
  VectorXd var_means;       // uncentered means of (Y, xi_1..xi_k)
  VectorXd g_means;         // uncentered instrument means

  const MatrixXd& S(int a, int b) const {
    const int lo = std::min(a, b), hi = std::max(a, b);
    return s[sym_index(lo, hi, k + 1)];
  }
};

// Raw (uncentered) accumulated cross products for a subset of rows. The
// carrier matrix is F = [A | v_1*A | ... | v_{k+1}*A] with A = [G 1 Y Xi]
// and v = (1, Y, xi); F'F contains every moment needed to reproduce exact
// within-subset centering, so per-fold sums can be added and subtracted.
struct RawMomentSums {
  int n = 0, p = 0, k = 0;
  MatrixXd big;

  RawMomentSums& operator+=(const RawMomentSums& o) {
    if (big.size() == 0) {
      *this = o;
    } else {
      n += o.n;
      big += o.big;
    }
    return *this;
  }
};

inline MatrixXd build_moment_carrier(const MatrixXd& g, const VectorXd& y, const MatrixXd& xi) {
  const int n = static_cast<int>(g.rows());
  const int p = static_cast<int>(g.cols());
  const int k = static_cast<int>(xi.cols());
  const int acols = p + 2 + k;
  const int nvar = k + 2;
  MatrixXd a(n, acols);
  a.leftCols(p) = g;
  a.col(p).setOnes();
  a.col(p + 1) = y;
  a.rightCols(k) = xi;
  MatrixXd f(n, nvar * acols);
  f.leftCols(acols) = a;
  f.middleCols(acols, acols) = y.asDiagonal() * a;
  for (int j = 0; j < k; ++j)
    f.middleCols((2 + j) * acols, acols) = xi.col(j).asDiagonal() * a;
  return f;
}

inline RawMomentSums raw_sums_from_carrier(const Eigen::Ref<const MatrixXd>& f_rows, int p, int k) {
  RawMomentSums raw;
  raw.n = static_cast<int>(f_rows.rows());
  raw.p = p;
  raw.k = k;
  raw.big = MatrixXd::Zero(f_rows.cols(), f_rows.cols());
  raw.big.selfadjointView<Eigen::Lower>().rankUpdate(f_rows.transpose());
  raw.big.triangularView<Eigen::StrictlyUpper>() = raw.big.transpose();
  return raw;
}

// Exact centered moments of the subset described by raw; centering uses the
// subset's own means via the expanded rank-one correction terms.
inline CenteredGmmMoments finalize_centered(const RawMomentSums& raw) {
  const int p = raw.p, k = raw.k;
  const int acols = p + 2 + k;
  const double n = static_cast<double>(raw.n);
  auto T = [&](int a, int b) { return raw.big.block(a * acols, b * acols, p, p); };
  auto u = [&](int a, int b) { return raw.big.block(a * acols, b * acols + p, p, 1); };
  auto sc = [&](int a, int b) { return raw.big(a * acols + p, b * acols + p); };

  CenteredGmmMoments m;
  m.n = raw.n;
  m.p = p;
  m.k = k;
  m.var_means = VectorXd(k + 1);
  for (int a = 0; a <= k; ++a) m.var_means[a] = sc(0, a + 1) / n;
  m.g_means = u(0, 0) / n;

  const VectorXd& gb = m.g_means;
  m.gram = T(0, 0) / n - gb * gb.transpose();
  m.my = u(0, 1) / n - m.var_means[0] * gb;
  m.d = MatrixXd(p, k);
  for (int j = 0; j < k; ++j) m.d.col(j) = u(0, 2 + j) / n - m.var_means[1 + j] * gb;

  m.s.resize((k + 1) * (k + 2) / 2);
  for (int a = 0; a <= k; ++a) {
    const double za = m.var_means[a];
    for (int b = a; b <= k; ++b) {
      const double zb = m.var_means[b];
      const int ra = a + 1, rb = b + 1;  // raw v-indices
      MatrixXd pab = T(ra, rb) - za * T(0, rb) - zb * T(0, ra) + (za * zb) * T(0, 0);
      VectorXd wab = u(ra, rb) - za * u(0, rb) - zb * u(0, ra) + (za * zb) * u(0, 0);
      const double sab = sc(ra, rb) - za * sc(0, rb) - zb * sc(0, ra) + (za * zb) * n;
      pab.noalias() -= wab * gb.transpose();
      pab.noalias() -= gb * wab.transpose();
      pab.noalias() += (sab)*gb * gb.transpose();
      m.s[sym_index(a, b, k + 1)] = pab / n;
    }
  }
  return m;
}

// Direct construction from already-centered data (single-pass convenience).
inline CenteredGmmMoments centered_moments_from_data(const MatrixXd& gc, const VectorXd& yc,
                                                     const MatrixXd& xic) {
  const int n = static_cast<int>(gc.rows());
  const int p = static_cast<int>(gc.cols());
  const int k = static_cast<int>(xic.cols());
  MatrixXd f(n, (k + 1) * p);
  f.leftCols(p) = yc.asDiagonal() * gc;
  for (int j = 0; j < k; ++j) f.middleCols((1 + j) * p, p) = xic.col(j).asDiagonal() * gc;
  MatrixXd big = MatrixXd::Zero(f.cols(), f.cols());
  big.selfadjointView<Eigen::Lower>().rankUpdate(f.transpose());
  big.triangularView<Eigen::StrictlyUpper>() = big.transpose();

  CenteredGmmMoments m;
  m.n = n;
  m.p = p;
  m.k = k;
  m.s.resize((k + 1) * (k + 2) / 2);
  for (int a = 0; a <= k; ++a)
    for (int b = a; b <= k; ++b) m.s[sym_index(a, b, k + 1)] = big.block(a * p, b * p, p, p) / n;
  m.gram = gc.transpose() * gc / n;
  m.my = gc.transpose() * yc / n;
  m.d = gc.transpose() * xic / n;
  m.var_means = VectorXd::Zero(k + 1);
  m.g_means = VectorXd::Zero(p);
  return m;
}

// Symmetric positive-definite solve with LDLT; the pivot ratio serves as a
// cheap, deterministic condition-number proxy.
struct SpdFactor {
  Eigen::LDLT<MatrixXd> ldlt;
  bool ok = false;
  double pivot_ratio = std::numeric_limits<double>::infinity();

  void compute(const MatrixXd& m, double max_condition) {
    ldlt.compute(m);
    ok = false;
    if (ldlt.info() != Eigen::Success) return;
    const VectorXd dv = ldlt.vectorD();
    const double dmax = dv.maxCoeff(), dmin = dv.minCoeff();
    if (dmin <= 0) return;
    pivot_ratio = dmax / dmin;
    ok = pivot_ratio <= max_condition;
  }
};

// Continuously-updated GMM objective Q(beta) = g(beta)' W(beta)^{-1} g(beta)
// over a subset of the score columns, assembled from the moment tensors:
//   g(beta) = my - D beta,
//   W(beta) = sum_{a,b} w_a w_b S_ab  with  w = (1, -beta).
class CueObjective {
public:
  CueObjective(const CenteredGmmMoments& mom, const std::vector<int>& score_cols)
      : mom_(mom), m_(static_cast<int>(score_cols.size())) {
    vars_.resize(m_ + 1);
    vars_[0] = 0;
    d_sel_.resize(mom.p, m_);
    for (int i = 0; i < m_; ++i) {
      vars_[i + 1] = score_cols[i] + 1;
      d_sel_.col(i) = mom.d.col(score_cols[i]);
    }
  }

  int dim() const { return m_; }
  const MatrixXd& d_sel() const { return d_sel_; }

  // The CUE weighting matrix is (1/n) sum_i r_i(beta)^2 g_i g_i'; it vanishes
  // when beta fits the data perfectly, leaving the objective 0/0. Comparing
  // its trace against the absolute sum of the assembly terms detects that
  // degeneracy without forming the matrix.
  bool perfect_fit(const VectorXd& beta) const {
    VectorXd coef(m_ + 1);
    coef[0] = 1.0;
    coef.tail(m_) = -beta;
    double tr = 0.0, scale = 0.0;
    for (int i = 0; i <= m_; ++i)
      for (int j = i; j <= m_; ++j) {
        const double c = coef[i] * coef[j] * (i == j ? 1.0 : 2.0);
        const double t = mom_.S(vars_[i], vars_[j]).trace();
        tr += c * t;
        scale += std::abs(c * t);
      }
    return tr <= 1e-12 * scale;
  }

  void assemble_w(const VectorXd& beta, MatrixXd& w) const {
    VectorXd coef(m_ + 1);
    coef[0] = 1.0;
    coef.tail(m_) = -beta;
    w.setZero(mom_.p, mom_.p);
    for (int i = 0; i <= m_; ++i)
      for (int j = i; j <= m_; ++j) {
        const double c = coef[i] * coef[j] * (i == j ? 1.0 : 2.0);
        if (c != 0.0) w.noalias() += c * mom_.S(vars_[i], vars_[j]);
      }
  }

  VectorXd moment_vector(const VectorXd& beta) const { return mom_.my - d_sel_ * beta; }

  // Evaluates Q and optionally its analytic gradient. When the weighting
  // matrix cannot be factored within the condition cap even after the
  // relative ridge, returns +inf (strict=false) or throws (strict=true).
  double eval(const VectorXd& beta, VectorXd* grad, bool strict) const {
    MatrixXd w;
    assemble_w(beta, w);
    SpdFactor fac;
    fac.compute(w, 1e12);
    if (!fac.ok) {
      const double ridge = 1e-10 * w.trace() / mom_.p;
      w.diagonal().array() += std::max(ridge, 1e-300);
      fac.compute(w, 1e12);
      if (!fac.ok) {
        if (strict)
          throw IllConditionedWeightError(
              "cu_gmm: weighting matrix condition exceeds 1e12 after ridge (pivot ratio " +
              std::to_string(fac.pivot_ratio) + ")");
        if (grad) grad->setConstant(m_, std::numeric_limits<double>::quiet_NaN());
        return std::numeric_limits<double>::infinity();
      }
    }
    const VectorXd g = moment_vector(beta);
    const VectorXd u = fac.ldlt.solve(g);
    const double q = g.dot(u);
    if (grad) {
      // q_ab = u' S_ab u over subset variables; dQ/db_t = -2 d_t'u + 2 u'C_t u
      // with C_t = S_0t - sum_s beta_s S_ts.
      MatrixXd qmat(m_ + 1, m_ + 1);
      for (int i = 0; i <= m_; ++i)
        for (int j = i; j <= m_; ++j) {
          const double v = u.dot(mom_.S(vars_[i], vars_[j]) * u);
          qmat(i, j) = v;
          qmat(j, i) = v;
        }
      grad->resize(m_);
      for (int t = 1; t <= m_; ++t) {
        double c = qmat(0, t);
        for (int s = 1; s <= m_; ++s) c -= beta[s - 1] * qmat(t, s);
        (*grad)[t - 1] = -2.0 * d_sel_.col(t - 1).dot(u) + 2.0 * c;
      }
    }
    return q;
  }

  // Factor W(beta) under the strict policy and return the factor for
  // covariance computation.
  SpdFactor strict_factor(const VectorXd& beta) const {
    MatrixXd w;
    assemble_w(beta, w);
    SpdFactor fac;
    fac.compute(w, 1e12);
    if (!fac.ok) {
      const double ridge = 1e-10 * w.trace() / mom_.p;
      w.diagonal().array() += std::max(ridge, 1e-300);
      fac.compute(w, 1e12);
      if (!fac.ok)
        throw IllConditionedWeightError(
            "cu_gmm: weighting matrix condition exceeds 1e12 after ridge (pivot ratio " +
            std::to_string(fac.pivot_ratio) + ")");
    }
    return fac;
  }

private:
  const CenteredGmmMoments& mom_;
  int m_;
  std::vector<int> vars_;
  MatrixXd d_sel_;
};

struct BfgsResult {
  VectorXd x;
  double f = 0.0;
  double f_init = 0.0;
  VectorXd grad;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
};

// Quasi-Newton minimizer with a strong-Wolfe line search (sufficient decrease
// c1 = 1e-4, curvature c2 = 0.9; bracketing by doubling, refinement by
// bisection). The callable is eval(x, &grad, strict) -> f; non-finite trial
// values are treated as overshoot and shrink the bracket. Objectives that
// decrease monotonically toward a plateau at infinity have no minimizer; once
// the iterate leaves `divergence_radius` the search stops with `diverged` set
// instead of chasing the plateau until the gradient decays below tolerance.
template <typename Fn>
BfgsResult bfgs_minimize(Fn&& eval, VectorXd x0, int max_iterations, double tolerance,
                         double divergence_radius = std::numeric_limits<double>::infinity()) {
  const int m = static_cast<int>(x0.size());
  constexpr double c1 = 1e-4;
  constexpr double c2 = 0.9;
  BfgsResult res;
  res.x = std::move(x0);
  res.grad.resize(m);
  res.f = eval(res.x, &res.grad, true);
  res.f_init = res.f;
  MatrixXd h = MatrixXd::Identity(m, m);
  bool first_update = true;
  VectorXd x_new(m), g_new(m), x_lo(m), g_lo(m);
  for (res.iterations = 0; res.iterations < max_iterations; ++res.iterations) {
    if (res.grad.lpNorm<Eigen::Infinity>() <= tolerance) {
      res.converged = true;
      return res;
    }
    VectorXd dir = -(h * res.grad);
    double slope = dir.dot(res.grad);
    if (slope >= 0) {  // not a descent direction; reset
      h.setIdentity();
      first_update = true;
      dir = -res.grad;
      slope = dir.dot(res.grad);
    }

    // phi(t) = f(x + t * dir); every probe also evaluates the gradient so the
    // accepted point needs no re-evaluation.
    double f_t = 0.0, d_t = 0.0;
    auto probe = [&](double t) {
      x_new = res.x + t * dir;
      f_t = eval(x_new, &g_new, false);
      d_t = std::isfinite(f_t) ? dir.dot(g_new) : 0.0;
    };
    // Expansion never needs to carry the iterate much beyond the divergence
    // radius; the post-step check below turns such a step into a stop.
    const double dir_norm = dir.lpNorm<Eigen::Infinity>();
    const double t_cap =
        std::isfinite(divergence_radius) && dir_norm > 0.0
            ? std::max(1.0, (4.0 * divergence_radius + res.x.lpNorm<Eigen::Infinity>()) / dir_norm)
            : std::numeric_limits<double>::infinity();

    // Bracketing phase: expand t until the Wolfe conditions hold or a bracket
    // [t_lo, t_hi] containing an acceptable point is found.
    double t_lo = 0.0, f_lo = res.f;
    double t_hi = 0.0;
    double t = std::min(1.0, t_cap);
    bool accepted = false, bracketed = false;
    x_lo = res.x;
    g_lo = res.grad;
    for (int k = 0; k < 60; ++k) {
      probe(t);
      if (!std::isfinite(f_t) || f_t > res.f + c1 * t * slope || (k > 0 && f_t >= f_lo)) {
        t_hi = t;
        bracketed = true;
        break;
      }
      if (std::abs(d_t) <= -c2 * slope || t >= t_cap) {
        accepted = true;
        break;
      }
      if (d_t >= 0.0) {
        t_hi = t_lo;
        t_lo = t;
        f_lo = f_t;
        x_lo = x_new;
        g_lo = g_new;
        bracketed = true;
        break;
      }
      t_lo = t;
      f_lo = f_t;
      x_lo = x_new;
      g_lo = g_new;
      t = std::min(2.0 * t, t_cap);
    }

    // Zoom phase: bisect the bracket until the curvature condition holds or
    // the interval collapses; fall back to the best sufficient-decrease point.
    if (bracketed) {
      for (int k = 0; k < 40 && !accepted; ++k) {
        t = 0.5 * (t_lo + t_hi);
        if (std::abs(t_hi - t_lo) <= 1e-14 * std::max(1.0, std::abs(t_lo))) break;
        probe(t);
        if (!std::isfinite(f_t) || f_t > res.f + c1 * t * slope || f_t >= f_lo) {
          t_hi = t;
          continue;
        }
        if (std::abs(d_t) <= -c2 * slope) {
          accepted = true;
          break;
        }
        if (d_t * (t_hi - t_lo) >= 0.0) t_hi = t_lo;
        t_lo = t;
        f_lo = f_t;
        x_lo = x_new;
        g_lo = g_new;
      }
      if (!accepted && t_lo > 0.0 && f_lo < res.f) {
        x_new = x_lo;
        g_new = g_lo;
        f_t = f_lo;
        accepted = true;
      }
    }
    if (!accepted) {
      // Cannot make progress along this direction; report current point.
      return res;
    }

    const VectorXd s = x_new - res.x;
    const VectorXd y = g_new - res.grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (first_update) {
        h.setIdentity();
        h *= sy / y.squaredNorm();
        first_update = false;
      }
      const VectorXd hy = h * y;
      const double yhy = y.dot(hy);
      h.noalias() += ((sy + yhy) / (sy * sy)) * (s * s.transpose());
      h.noalias() -= (hy * s.transpose() + s * hy.transpose()) / sy;
    }
    res.x = x_new;
    res.f = f_t;
    res.grad = g_new;
    if (res.x.lpNorm<Eigen::Infinity>() > divergence_radius) {
      res.diverged = true;
      return res;
    }
  }
  res.converged = res.grad.lpNorm<Eigen::Infinity>() <= tolerance;
  return res;
}

// Two-stage least squares from moments: beta = (D'V^{-1}D)^{-1} D'V^{-1} my
// with V = gram; used to initialize the CUE optimizer.
inline VectorXd tsls_from_moments(const CenteredGmmMoments& mom, const MatrixXd& d_sel,
                                  const std::string& context) {
  SpdFactor fac;
  fac.compute(mom.gram, 1e14);
  if (!fac.ok) {
    MatrixXd ridged = mom.gram;
    ridged.diagonal().array() += 1e-12 * std::max(mom.gram.trace(), 1e-300) / mom.p;
    fac.compute(ridged, std::numeric_limits<double>::infinity());
    if (!fac.ok) throw RankDeficiencyError(context + ": instrument gram matrix is singular");
  }
  const MatrixXd vinv_d = fac.ldlt.solve(d_sel);
  const MatrixXd a = d_sel.transpose() * vinv_d;
  const VectorXd b = vinv_d.transpose() * mom.my;
  SpdFactor afac;
  afac.compute(a, 1e12);
  if (!afac.ok)
    throw RankDeficiencyError(context + ": pseudo-exposure design is rank-deficient (2SLS stage)");
  return afac.ldlt.solve(b);
}

inline GmmFit cu_gmm_on_moments(const CenteredGmmMoments& mom, const std::vector<int>& score_cols,
                                const GmmOptions& opts, const VectorXd* warm_start = nullptr) {
  const CueObjective obj(mom, score_cols);
  const int m = obj.dim();
  VectorXd init =
      warm_start && warm_start->size() == m ? *warm_start : tsls_from_moments(mom, obj.d_sel(), "cu_gmm");
  if (obj.perfect_fit(init)) {
    // Residuals are numerically zero at the initializer: the moment conditions
    // are satisfied exactly and the CUE criterion is degenerate (0/0). Report
    // the exact solution with zero sampling variance.
    GmmFit fit;
    fit.beta_star = std::move(init);
    fit.covariance = MatrixXd::Zero(m, m);
    fit.j_dof = mom.p - m;
    fit.converged = true;
    return fit;
  }
  auto eval = [&obj](const VectorXd& x, VectorXd* grad, bool strict) {
    return obj.eval(x, grad, strict);
  };
  const double radius = opts.divergence_scale > 0.0
                            ? opts.divergence_scale * std::max(1.0, init.lpNorm<Eigen::Infinity>())
                            : std::numeric_limits<double>::infinity();
  BfgsResult r = bfgs_minimize(eval, std::move(init), opts.max_iterations, opts.tolerance, radius);

  GmmFit fit;
  fit.beta_star = r.x;
  fit.objective_value = r.f;
  fit.objective_at_init = r.f_init;
  fit.iterations = r.iterations;
  fit.converged = r.converged;
  fit.diverged = r.diverged;
  fit.gradient_norm = r.grad.size() ? r.grad.lpNorm<Eigen::Infinity>() : 0.0;
  fit.j_statistic = static_cast<double>(mom.n) * r.f;
  fit.j_dof = mom.p - m;
  if (!fit.converged && opts.throw_on_nonconvergence) {
    if (fit.diverged)
      throw NonConvergenceError(
          "cu_gmm: estimate diverged (objective decreasing toward a plateau at infinity; "
          "the model is too weakly identified for a finite optimum)");
    throw NonConvergenceError("cu_gmm: gradient norm " + std::to_string(fit.gradient_norm) +
                              " above tolerance after " + std::to_string(fit.iterations) +
                              " iterations");
  }

  // Sandwich covariance (1/n) (D' W^{-1} D)^{-1} at the optimum.
  const SpdFactor wfac = obj.strict_factor(fit.beta_star);
  const MatrixXd winv_d = wfac.ldlt.solve(obj.d_sel());
  MatrixXd info = obj.d_sel().transpose() * winv_d;
  info = 0.5 * (info + info.transpose()).eval();
  SpdFactor ifac;
  ifac.compute(info, 1e14);
  if (!ifac.ok) throw RankDeficiencyError("cu_gmm: singular information matrix at the optimum");
  MatrixXd cov = ifac.ldlt.solve(MatrixXd::Identity(m, m)) / static_cast<double>(mom.n);
  fit.covariance = 0.5 * (cov + cov.transpose());
  return fit;
}

// Iteratively reweighted least squares for logistic regression with
// step-halving and separation guards. Returns (coefficients, converged,
// iterations); throws on separation or rank deficiency.
struct IrlsResult {
  VectorXd coef;
  bool converged = false;
  int iterations = 0;
};

inline double expit(double eta) { return 1.0 / (1.0 + std::exp(-std::clamp(eta, -30.0, 30.0))); }

inline IrlsResult logistic_irls(const MatrixXd& x, const VectorXd& y, const LogisticOptions& opts) {
  const int n = static_cast<int>(x.rows());
  const int q = static_cast<int>(x.cols());
  VectorXd beta = VectorXd::Zero(q);
  VectorXd eta = VectorXd::Zero(n);
  auto deviance = [&](const VectorXd& e) {
    double dev = 0.0;
    for (int i = 0; i < n; ++i) {
      const double p = expit(e[i]);
      dev -= 2.0 * (y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p));
    }
    return dev;
  };
  double dev = deviance(eta);
  IrlsResult res;
  for (int it = 0; it < opts.max_iterations; ++it) {
    VectorXd p(n), w(n), z(n);
    for (int i = 0; i < n; ++i) {
      p[i] = expit(eta[i]);
      w[i] = std::max(p[i] * (1.0 - p[i]), 1e-10);
      z[i] = eta[i] + (y[i] - p[i]) / w[i];
    }
    const MatrixXd xw = w.asDiagonal() * x;
    MatrixXd xtwx = x.transpose() * xw;
    xtwx = 0.5 * (xtwx + xtwx.transpose()).eval();
    SpdFactor fac;
    fac.compute(xtwx, 1e14);
    if (!fac.ok) throw RankDeficiencyError("logistic_irls: weighted design is rank-deficient");
    const VectorXd beta_new = fac.ldlt.solve(xw.transpose() * z);

    // Step-halving to guarantee a deviance decrease.
    double t = 1.0;
    VectorXd cand, eta_cand;
    double dev_cand = std::numeric_limits<double>::infinity();
    bool ok = false;
    for (int h = 0; h < 30; ++h) {
      cand = beta + t * (beta_new - beta);
      eta_cand = x * cand;
      dev_cand = deviance(eta_cand);
      if (std::isfinite(dev_cand) && dev_cand <= dev + 1e-12 * std::abs(dev)) {
        ok = true;
        break;
      }
      t *= 0.5;
    }
    if (!ok)
      throw SeparationError("logistic_irls: step-halving failed to decrease the deviance");
    const double delta = (cand - beta).lpNorm<Eigen::Infinity>();
    beta = cand;
    eta = eta_cand;
    res.iterations = it + 1;
    if (beta.lpNorm<Eigen::Infinity>() > opts.separation_norm)
      throw SeparationError("logistic_irls: coefficient norm diverging (perfect separation)");
    if (delta < opts.tolerance || std::abs(dev - dev_cand) < opts.tolerance * (std::abs(dev) + 1.0)) {
      dev = dev_cand;
      res.converged = true;
      break;
    }
    dev = dev_cand;
  }
  if (!res.converged && eta.lpNorm<Eigen::Infinity>() >= 29.999)
    throw SeparationError("logistic_irls: fitted probabilities pinned at the boundary");
  res.coef = beta;
  return res;
}

}  // namespace gmmdet

// Continuously-updated GMM for the continuous-outcome pseudo-exposure model.
// All variables are mean-centered internally; the estimator minimizes
// g(b)' W(b)^{-1} g(b) with g(b) = (1/N) G'(Y - xi b) and
// W(b) = (1/N) G' diag(Y - xi b)^2 G, starting from 2SLS.
inline GmmFit cu_gmm(const PseudoExposureDesign& design, const GmmOptions& opts = {}) {
  design.validate();
  MatrixXd gc = design.instruments.values.rowwise() - design.instruments.values.colwise().mean();
  VectorXd yc = design.outcome;
  yc.array() -= design.outcome.mean();
  MatrixXd xic = design.scores.rowwise() - design.scores.colwise().mean();
  const auto mom = gmmdet::centered_moments_from_data(gc, yc, xic);
  std::vector<int> cols(design.k());
  std::iota(cols.begin(), cols.end(), 0);
  return gmmdet::cu_gmm_on_moments(mom, cols, opts);
}

// Two-stage residual inclusion for binary outcomes: OLS of each score column
// on all instruments, then maximum-likelihood logistic regression of Y on
// (1, scores, first-stage residuals) with a heteroskedasticity-consistent
// sandwich covariance. Scores and instruments are centered; Y stays {0,1}.
inline TsriFit two_sri(const PseudoExposureDesign& design, const LogisticOptions& opts = {}) {
  design.validate();
  const int n = design.n();
  const int k = design.k();
  for (int i = 0; i < n; ++i)
    if (design.outcome[i] != 0.0 && design.outcome[i] != 1.0)
      throw std::invalid_argument("two_sri: outcome must be binary {0,1}");
  const double prev = design.outcome.mean();
  if (prev <= 0.0 || prev >= 1.0)
    throw SeparationError("two_sri: outcome is constant (single class)");

  MatrixXd gc = design.instruments.values.rowwise() - design.instruments.values.colwise().mean();
  MatrixXd xic = design.scores.rowwise() - design.scores.colwise().mean();

  TsriFit fit;
  {
    MatrixXd gram = gc.transpose() * gc;
    gram = 0.5 * (gram + gram.transpose()).eval();
    gmmdet::SpdFactor fac;
    fac.compute(gram, 1e14);
    if (!fac.ok) throw RankDeficiencyError("two_sri: stage-1 instrument design is rank-deficient");
    fit.first_stage_coefficients = fac.ldlt.solve(gc.transpose() * xic);
  }
  fit.residuals = xic - gc * fit.first_stage_coefficients;

  MatrixXd x(n, 1 + 2 * k);
  x.col(0).setOnes();
  x.middleCols(1, k) = xic;
  x.rightCols(k) = fit.residuals;
  const auto irls = gmmdet::logistic_irls(x, design.outcome, opts);
  fit.converged = irls.converged;
  fit.iterations = irls.iterations;
  fit.intercept = irls.coef[0];
  fit.beta_star = irls.coef.segment(1, k);
  fit.alpha = irls.coef.tail(k);

  const VectorXd eta = x * irls.coef;
  fit.fitted_probabilities = eta.unaryExpr([](double e) { return gmmdet::expit(e); });

  // Robust sandwich A^{-1} B A^{-1} with A the observed information and
  // B the outer product of score contributions.
  const VectorXd w =
      (fit.fitted_probabilities.array() * (1.0 - fit.fitted_probabilities.array())).matrix();
  MatrixXd a = x.transpose() * (w.asDiagonal() * x);
  a = 0.5 * (a + a.transpose()).eval();
  const VectorXd resid = design.outcome - fit.fitted_probabilities;
  const MatrixXd xr = resid.asDiagonal() * x;
  MatrixXd b = MatrixXd::Zero(x.cols(), x.cols());
  b.selfadjointView<Eigen::Lower>().rankUpdate(xr.transpose());
  b.triangularView<Eigen::StrictlyUpper>() = b.transpose();
  gmmdet::SpdFactor afac;
  afac.compute(a, 1e14);
  if (!afac.ok) throw RankDeficiencyError("two_sri: singular information matrix");
  const MatrixXd ainv_b = afac.ldlt.solve(b);
  MatrixXd cov = afac.ldlt.solve(ainv_b.transpose());
  fit.robust_covariance = 0.5 * (cov + cov.transpose());
  return fit;
}

// Sanderson-Windmeijer conditional F-statistic for one score column given
// the others: residualize the target on the remaining score columns, regress
// the residual on all instruments, and form
//   F = [(TSS - RSS) / (P - q)] / [RSS / (N - P - 1)],  q = K_total - 1,
// which reduces to the ordinary first-stage F when there is a single column.
inline double conditional_f(const PseudoExposureDesign& design, int target_column) {
  design.validate();
  const int n = design.n(), k = design.k(), p = design.instruments.p();
  if (target_column < 0 || target_column >= k)
    throw std::invalid_argument("conditional_f: target column out of range");
  MatrixXd gc = design.instruments.values.rowwise() - design.instruments.values.colwise().mean();
  MatrixXd xic = design.scores.rowwise() - design.scores.colwise().mean();

  VectorXd e = xic.col(target_column);
  const int q = k - 1;
  if (q > 0) {
    MatrixXd others(n, q);
    int c = 0;
    for (int j = 0; j < k; ++j)
      if (j != target_column) others.col(c++) = xic.col(j);
    MatrixXd gram = others.transpose() * others;
    gram = 0.5 * (gram + gram.transpose()).eval();
    gmmdet::SpdFactor fac;
    fac.compute(gram, 1e14);
    if (!fac.ok) throw RankDeficiencyError("conditional_f: other score columns are collinear");
    e -= others * fac.ldlt.solve(others.transpose() * xic.col(target_column));
  }
  if (p - q < 1)
    throw RankDeficiencyError("conditional_f: instrument count does not exceed conditioning columns");
  if (n - p - 1 < 1) throw RankDeficiencyError("conditional_f: too few observations");

  MatrixXd gram = gc.transpose() * gc;
  gram = 0.5 * (gram + gram.transpose()).eval();
  gmmdet::SpdFactor fac;
  fac.compute(gram, 1e14);
  if (!fac.ok) throw RankDeficiencyError("conditional_f: instrument gram matrix is singular");
  const VectorXd coef = fac.ldlt.solve(gc.transpose() * e);
  const double tss = e.squaredNorm();
  const double rss = (e - gc * coef).squaredNorm();
  return ((tss - rss) / (p - q)) / (rss / (n - p - 1));
}

}  // namespace mvfmr
