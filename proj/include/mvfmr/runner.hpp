#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mvfmr/errors.hpp"
#include "mvfmr/io.hpp"
#include "mvfmr/metrics.hpp"
#include "mvfmr/model.hpp"
#include "mvfmr/simulate.hpp"
#include "mvfmr/version.hpp"

namespace mvfmr {

struct RunOutcome {
  bool success = false;
  int n_total = 0, n_ok = 0, n_converged = 0;
};

namespace rundet {

// Seed-stream tweaks keeping fold assignment and bootstrap resampling
// decoupled from the data-generation stream.
inline constexpr std::uint64_t cv_stream = 0x517cc1b727220a95ULL;
inline constexpr std::uint64_t band_stream = 0x2545f4914f6cdd1dULL;

struct MethodCurve {
  std::string method;  // "mvfmr" or "ufmr"
  int exposure = 1;    // 1-based exposure the curve estimates
  int k1 = 0, k2 = 0;  // per-exposure component counts reported on this row
  double ise_norm = 0.0, ise_unnorm = 0.0;
  VectorXd estimate, lower, upper;
  VectorXd conditional_f;
  bool converged = false;
};

struct ReplicateOutcome {
  int index = 0;
  bool ok = false;
  bool converged = false;  // every primary-method fit in the replicate converged
  std::string error;
  std::vector<MethodCurve> curves;
};

struct ScenarioPoint {
  std::string label;
  ScenarioConfig config;
};

inline std::vector<EffectSpec> truth_effects(const ScenarioConfig& sc) {
  EffectSpec e2 = sc.effect2;
  if (sc.scenario == Scenario::null_control) e2 = EffectSpec{EffectShape::null_effect};
  return {sc.effect1, e2};
}

inline void parallel_for(int nitems, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, nitems));
  if (threads == 1) {
    for (int i = 0; i < nitems; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= nitems) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline void dump_replicate_files(const std::string& out_dir, int index, const ReplicateData& rep) {
  namespace fs = std::filesystem;
  const std::string prefix =
      (fs::path(out_dir) / ("replicate_" + std::to_string(index) + "_")).string();
  std::vector<std::int64_t> ids(rep.outcome.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = rep.sparse[0][i].subject_id;
  io::write_exposure_csv(prefix + "exposures.csv", rep.sparse);
  io::write_genotype_csv(prefix + "genotypes.csv", rep.genotypes, ids);
  io::write_outcome_csv(prefix + "outcome.csv", rep.outcome, ids);
}

inline ReplicateOutcome process_replicate(const ScenarioConfig& sc, const io::RunSettings& rs,
                                          int idx, bool dump_here) {
  ReplicateOutcome out;
  out.index = idx;
  try {
    const ReplicateData rep = simulate_replicate(sc, static_cast<std::uint64_t>(idx));
    if (dump_here) dump_replicate_files(rs.out_dir, idx, rep);

    ModelConfig mc = rs.model;
    mc.binary = sc.outcome_type == OutcomeType::binary;
    mc.domain_end = sc.domain_end;
    mc.cv_seed = derive_seed(rs.model.cv_seed ^ cv_stream, static_cast<std::uint64_t>(idx));
    // Report non-convergence per method row instead of discarding the whole
    // replicate; misspecified single-exposure baselines are expected to fail
    // on some draws while the joint fit succeeds.
    mc.gmm.throw_on_nonconvergence = false;
    const auto truths = truth_effects(sc);

    auto add_fit = [&](const MvfmrFit& fit, const char* method,
                       const std::vector<int>& exposure_nums) {
      PointwiseBands bands{fit.band_lower, fit.band_upper};
      if (rs.band_method == BandMethod::bootstrap)
        bands = pointwise_bands(fit, mc.band_level, BandMethod::bootstrap, rs.bootstrap_reps,
                                derive_seed(rs.model.cv_seed ^ band_stream,
                                            static_cast<std::uint64_t>(idx)));
      for (std::size_t b = 0; b < exposure_nums.size(); ++b) {
        MethodCurve c;
        c.method = method;
        c.exposure = exposure_nums[b];
        c.estimate = fit.beta_functions[b];
        c.lower = bands.lower[b];
        c.upper = bands.upper[b];
        const VectorXd truth = truths[c.exposure - 1].evaluate(fit.grid);
        CurveComparison cmp;
        cmp.grid = fit.grid;
        cmp.estimate = c.estimate;
        cmp.truth = truth;
        c.ise_norm = ise(cmp);
        c.ise_unnorm = ise_raw(cmp);
        if (exposure_nums.size() == 2) {
          c.k1 = fit.component_counts.first;
          c.k2 = fit.component_counts.second;
        } else {
          (c.exposure == 1 ? c.k1 : c.k2) = fit.component_counts.first;
        }
        c.conditional_f = fit.conditional_f_values;
        c.converged = fit.binary ? fit.tsri.converged : fit.gmm.converged;
        out.curves.push_back(std::move(c));
      }
    };

    const MvfmrFit mv = fit_mvfmr(rep.sparse[0], rep.sparse[1], rep.outcome, rep.genotypes, mc);
    add_fit(mv, "mvfmr", {1, 2});
    if (rs.run_ufmr) {
      ModelConfig mc1 = mc, mc2 = mc;
      mc1.fixed_components = {mc.fixed_components.first, 0};
      mc2.fixed_components = {mc.fixed_components.first > 0
                                  ? (mc.fixed_components.second > 0 ? mc.fixed_components.second
                                                                    : mc.fixed_components.first)
                                  : 0,
                              0};
      const MvfmrFit u1 = fit_ufmr(rep.sparse[0], rep.outcome, rep.genotypes, mc1);
      add_fit(u1, "ufmr", {1});
      const MvfmrFit u2 = fit_ufmr(rep.sparse[1], rep.outcome, rep.genotypes, mc2);
      add_fit(u2, "ufmr", {2});
    }
    // Replicate-level convergence tracks the primary method; baseline rows
    // keep their own flags in replicates.csv.
    out.converged = true;
    for (const auto& c : out.curves)
      if (c.method == std::string_view("mvfmr")) out.converged = out.converged && c.converged;
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.converged = false;
    out.error = e.what();
    out.curves.clear();
  }
  return out;
}

inline std::string join_semicolon(const VectorXd& v) {
  std::string s;
  for (int i = 0; i < v.size(); ++i) {
    if (i) s += ';';
    s += io::fmt(v[i]);
  }
  return s;
}

// Runs every point sequentially, replicates within a point in parallel, and
// writes replicates.csv / summary.csv / curves.csv / manifest.json in
// deterministic (point, replicate) order regardless of thread count.
inline RunOutcome run_points(const std::vector<ScenarioPoint>& points, const io::RunSettings& rs,
                             const std::string& command) {
  namespace fs = std::filesystem;
  fs::create_directories(rs.out_dir);
  std::vector<std::vector<ReplicateOutcome>> all(points.size());

  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    const auto& point = points[pi];
    const int reps = point.config.replicates;
    all[pi].resize(reps);
    std::atomic<int> done{0};
    const int step = std::max(1, reps / 10);
    parallel_for(reps, rs.threads, [&](int r) {
      const bool dump_here = command == "simulate" && rs.dump_replicate == r;
      all[pi][r] = process_replicate(point.config, rs, r, dump_here);
      const int d = done.fetch_add(1) + 1;
      if (d % step == 0 || d == reps) {
        std::fprintf(stderr, "[mvfmr] %s: %d/%d replicates\n", point.label.c_str(), d, reps);
        std::fflush(stderr);
      }
    });
  }

  // replicates.csv: one row per (replicate, method, exposure).
  {
    io::CsvWriter w((fs::path(rs.out_dir) / "replicates.csv").string(),
                    {"scenario", "replicate", "method", "exposure", "ise", "ise_raw",
                     "selected_k1", "selected_k2", "conditional_f", "converged"});
    for (std::size_t pi = 0; pi < points.size(); ++pi)
      for (const auto& rep : all[pi])
        for (const auto& c : rep.curves)
          w.write_row({points[pi].label, io::fmt(rep.index), c.method, io::fmt(c.exposure),
                       io::fmt(c.ise_norm), io::fmt(c.ise_unnorm), io::fmt(c.k1), io::fmt(c.k2),
                       join_semicolon(c.conditional_f), c.converged ? "1" : "0"});
  }

  // summary.csv: per (point, method, exposure) aggregates. Error metrics are
  // averaged over converged fits only (n_converged is the denominator); a
  // diverged baseline carries no meaningful curve.
  {
    io::CsvWriter w((fs::path(rs.out_dir) / "summary.csv").string(),
                    {"scenario", "method", "exposure", "n_replicates", "n_converged", "mean_ise",
                     "sd_ise", "mean_ise_raw", "sd_ise_raw", "mean_k1", "mean_k2"});
    for (std::size_t pi = 0; pi < points.size(); ++pi) {
      std::vector<std::pair<std::string, int>> keys;
      for (const auto& rep : all[pi])
        for (const auto& c : rep.curves) {
          const std::pair<std::string, int> key{c.method, c.exposure};
          if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
        }
      for (const auto& [method, exposure] : keys) {
        std::vector<double> ises, ises_raw, k1s, k2s;
        int n_rows = 0;
        for (const auto& rep : all[pi])
          for (const auto& c : rep.curves)
            if (c.method == method && c.exposure == exposure) {
              ++n_rows;
              k1s.push_back(c.k1);
              k2s.push_back(c.k2);
              if (!c.converged) continue;
              ises.push_back(c.ise_norm);
              ises_raw.push_back(c.ise_unnorm);
            }
        w.write_row({points[pi].label, method, io::fmt(exposure), io::fmt(n_rows),
                     io::fmt((int)ises.size()), io::fmt(vector_mean(ises)),
                     io::fmt(vector_sd(ises)), io::fmt(vector_mean(ises_raw)),
                     io::fmt(vector_sd(ises_raw)), io::fmt(vector_mean(k1s)),
                     io::fmt(vector_mean(k2s))});
      }
    }
  }

  // curves.csv: pointwise truth, mean estimate, mean band, and band coverage,
  // aggregated over converged fits.
  {
    io::CsvWriter w((fs::path(rs.out_dir) / "curves.csv").string(),
                    {"scenario", "method", "exposure", "time", "truth", "mean_estimate",
                     "mean_lower", "mean_upper", "coverage"});
    for (std::size_t pi = 0; pi < points.size(); ++pi) {
      const auto& sc = points[pi].config;
      const VectorXd grid = linspace(0.0, sc.domain_end, rs.model.fpca.grid_size);
      const auto truths = truth_effects(sc);
      std::vector<std::pair<std::string, int>> keys;
      for (const auto& rep : all[pi])
        for (const auto& c : rep.curves) {
          const std::pair<std::string, int> key{c.method, c.exposure};
          if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
        }
      for (const auto& [method, exposure] : keys) {
        const VectorXd truth = truths[exposure - 1].evaluate(grid);
        VectorXd sum_est = VectorXd::Zero(grid.size());
        VectorXd sum_lo = VectorXd::Zero(grid.size());
        VectorXd sum_hi = VectorXd::Zero(grid.size());
        VectorXd hits = VectorXd::Zero(grid.size());
        int n = 0;
        for (const auto& rep : all[pi])
          for (const auto& c : rep.curves)
            if (c.method == method && c.exposure == exposure && c.converged) {
              ++n;
              sum_est += c.estimate;
              sum_lo += c.lower;
              sum_hi += c.upper;
              for (int t = 0; t < grid.size(); ++t)
                if (c.lower[t] <= truth[t] && truth[t] <= c.upper[t]) hits[t] += 1.0;
            }
        for (int t = 0; t < grid.size(); ++t) {
          const double inv = n > 0 ? 1.0 / n : 0.0;
          w.write_row({points[pi].label, method, io::fmt(exposure), io::fmt(grid[t]),
                       io::fmt(truth[t]), io::fmt(sum_est[t] * inv), io::fmt(sum_lo[t] * inv),
                       io::fmt(sum_hi[t] * inv), io::fmt(hits[t] * inv)});
        }
      }
    }
  }

  RunOutcome outcome;
  io::json manifest;
  manifest["version"] = version_string;
  manifest["command"] = command;
  manifest["config"] = io::settings_to_json(rs);
  io::json jpoints = io::json::array();
  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    io::json jp;
    jp["label"] = points[pi].label;
    int n_ok = 0, n_conv = 0;
    io::json jreps = io::json::array();
    for (const auto& rep : all[pi]) {
      io::json jr;
      jr["index"] = rep.index;
      jr["status"] = rep.ok ? "ok" : "error";
      jr["converged"] = rep.converged;
      if (!rep.ok) jr["error"] = rep.error;
      jreps.push_back(jr);
      n_ok += rep.ok ? 1 : 0;
      n_conv += rep.converged ? 1 : 0;
    }
    jp["n_replicates"] = static_cast<int>(all[pi].size());
    jp["n_ok"] = n_ok;
    jp["n_error"] = static_cast<int>(all[pi].size()) - n_ok;
    jp["n_converged"] = n_conv;
    jp["replicates"] = jreps;
    jpoints.push_back(jp);
    outcome.n_total += static_cast<int>(all[pi].size());
    outcome.n_ok += n_ok;
    outcome.n_converged += n_conv;
  }
  manifest["points"] = jpoints;
  manifest["totals"] = {
      {"n_total", outcome.n_total},
      {"n_ok", outcome.n_ok},
      {"n_converged", outcome.n_converged},
      {"converged_fraction",
       outcome.n_total > 0 ? static_cast<double>(outcome.n_converged) / outcome.n_total : 0.0}};
  manifest["outputs"] = {"replicates.csv", "summary.csv", "curves.csv"};
  outcome.success =
      outcome.n_converged >= rs.convergence_threshold * outcome.n_total && outcome.n_total > 0;
  manifest["success"] = outcome.success;
  io::write_json_file((fs::path(rs.out_dir) / "manifest.json").string(), manifest);
  return outcome;
}

}  // namespace rundet

// `simulate`: one scenario, R seeded replicates, MV-FMR plus single-exposure
// baselines, aggregate outputs under out_dir.
inline RunOutcome run_scenario(const io::RunSettings& rs) {
  if (rs.dump_replicate >= rs.scenario.replicates)
    throw ConfigError("dump_replicate index " + std::to_string(rs.dump_replicate) +
                      " is out of range for " + std::to_string(rs.scenario.replicates) +
                      " replicates");
  std::vector<rundet::ScenarioPoint> points{{to_string(rs.scenario.scenario), rs.scenario}};
  return rundet::run_points(points, rs, "simulate");
}

// `sweep`: repeats the configured scenario over a grid of one design
// parameter (p12, gamma, or n_sparse), with matched replicate seeds across
// points.
inline RunOutcome run_sweep(const io::RunSettings& rs) {
  if (rs.sweep_parameter.empty())
    throw ConfigError("sweep requires sweep_parameter (p12, gamma, or n_sparse)");
  if (rs.sweep_values.empty()) throw ConfigError("sweep requires a non-empty sweep_values array");
  std::vector<rundet::ScenarioPoint> points;
  for (double v : rs.sweep_values) {
    ScenarioConfig sc = rs.scenario;
    char label[64];
    if (rs.sweep_parameter == "p12") {
      sc.p12_fraction = v;
      std::snprintf(label, sizeof label, "p12=%g", v);
    } else if (rs.sweep_parameter == "gamma") {
      if (sc.scenario != Scenario::mediation)
        throw ConfigError("gamma sweep requires scenario = mediation");
      sc.gamma = v;
      std::snprintf(label, sizeof label, "gamma=%g", v);
    } else if (rs.sweep_parameter == "n_sparse") {
      if (std::abs(v - std::lround(v)) > 1e-9)
        throw ConfigError("n_sparse sweep values must be integers");
      sc.n_sparse = static_cast<int>(std::lround(v));
      std::snprintf(label, sizeof label, "n_sparse=%d", sc.n_sparse);
    } else {
      throw ConfigError("unknown sweep_parameter '" + rs.sweep_parameter +
                        "' (expected p12, gamma, or n_sparse)");
    }
    sc.validate();
    points.push_back({label, sc});
  }
  return rundet::run_points(points, rs, "sweep");
}

// `fit`: estimates effect curves from user-supplied CSV files.
inline RunOutcome fit_data(const std::string& exposure_csv, const std::string& genotype_csv,
                           const std::string& outcome_csv, const io::RunSettings& rs) {
  namespace fs = std::filesystem;
  const io::Dataset ds = io::align_dataset(io::read_genotype_csv(genotype_csv),
                                           io::read_outcome_csv(outcome_csv),
                                           io::read_exposure_csv(exposure_csv));
  ModelConfig mc = rs.model;
  mc.binary = rs.scenario.outcome_type == OutcomeType::binary;
  mc.domain_end = rs.scenario.domain_end;
  if (mc.binary)
    for (int i = 0; i < ds.outcome.size(); ++i)
      if (ds.outcome[i] != 0.0 && ds.outcome[i] != 1.0)
        throw SchemaError("outcome_type is binary but subject " +
                          std::to_string(ds.subject_ids[i]) + " has outcome " +
                          std::to_string(ds.outcome[i]) + " (values must be 0 or 1)");

  const MvfmrFit fit =
      ds.exposures.size() == 2
          ? fit_mvfmr(ds.exposures[0], ds.exposures[1], ds.outcome, ds.instruments, mc)
          : fit_ufmr(ds.exposures[0], ds.outcome, ds.instruments, mc);
  PointwiseBands bands{fit.band_lower, fit.band_upper};
  if (rs.band_method == BandMethod::bootstrap)
    bands = pointwise_bands(fit, mc.band_level, BandMethod::bootstrap, rs.bootstrap_reps,
                            rs.model.cv_seed ^ rundet::band_stream);

  fs::create_directories(rs.out_dir);
  {
    io::CsvWriter w((fs::path(rs.out_dir) / "fit_curves.csv").string(),
                    {"exposure", "exposure_id", "time", "estimate", "lower", "upper"});
    for (int j = 0; j < fit.exposures(); ++j)
      for (int t = 0; t < fit.grid.size(); ++t)
        w.write_row({io::fmt(j + 1), ds.exposure_ids[j], io::fmt(fit.grid[t]),
                     io::fmt(fit.beta_functions[j][t]), io::fmt(bands.lower[j][t]),
                     io::fmt(bands.upper[j][t])});
  }

  io::json out;
  out["version"] = version_string;
  out["command"] = "fit";
  out["n"] = fit.design.n();
  out["p"] = fit.design.instruments.p();
  out["binary"] = fit.binary;
  out["exposures"] = ds.exposure_ids;
  out["component_counts"] = {fit.component_counts.first, fit.component_counts.second};
  out["beta_star"] = io::vector_to_json(fit.beta_star);
  out["beta_covariance"] = io::matrix_to_json(fit.beta_covariance);
  out["conditional_f"] = io::vector_to_json(fit.conditional_f_values);
  if (fit.binary) {
    out["converged"] = fit.tsri.converged;
    out["iterations"] = fit.tsri.iterations;
    out["intercept"] = fit.tsri.intercept;
    out["alpha"] = io::vector_to_json(fit.tsri.alpha);
  } else {
    out["converged"] = fit.gmm.converged;
    out["iterations"] = fit.gmm.iterations;
    out["objective_value"] = fit.gmm.objective_value;
    out["j_statistic"] = fit.gmm.j_statistic;
    out["j_dof"] = fit.gmm.j_dof;
  }
  if (!fit.cv.candidates.empty()) {
    io::json cv;
    cv["folds"] = fit.cv.folds;
    cv["binary"] = fit.cv.binary;
    io::json cand = io::json::array();
    for (const auto& [k1, k2] : fit.cv.candidates) cand.push_back(io::json::array({k1, k2}));
    cv["candidates"] = cand;
    cv["mean_loss"] = io::vector_to_json(fit.cv.mean_loss);
    cv["selected"] = {fit.cv.selected.first, fit.cv.selected.second};
    out["cv"] = cv;
  }
  io::json jfpca = io::json::array();
  for (std::size_t j = 0; j < fit.fpca_models.size(); ++j) {
    const auto& m = fit.fpca_models[j];
    io::json f;
    f["exposure_id"] = ds.exposure_ids[j];
    f["components"] = m.components();
    f["eigenvalues"] = io::vector_to_json(m.eigenvalues);
    f["fraction_of_variance"] = io::vector_to_json(m.fraction_of_variance);
    f["noise_variance"] = m.noise_variance;
    f["mean_bandwidth"] = m.mean_bandwidth;
    f["cov_bandwidth"] = m.cov_bandwidth;
    jfpca.push_back(f);
  }
  out["fpca"] = jfpca;
  out["band_level"] = mc.band_level;
  out["band_method"] = rs.band_method == BandMethod::asymptotic ? "asymptotic" : "bootstrap";
  out["outputs"] = {"fit_curves.csv"};
  io::write_json_file((fs::path(rs.out_dir) / "fit.json").string(), out);

  RunOutcome outcome;
  outcome.n_total = 1;
  outcome.n_ok = 1;
  outcome.n_converged = (fit.binary ? fit.tsri.converged : fit.gmm.converged) ? 1 : 0;
  outcome.success = outcome.n_converged == 1;
  return outcome;
}

// `fpca`: decomposition diagnostics for each exposure in a long-format file.
inline RunOutcome fpca_diagnostics(const std::string& exposure_csv, const io::RunSettings& rs) {
  namespace fs = std::filesystem;
  const io::ExposureTable expo = io::read_exposure_csv(exposure_csv);
  fs::create_directories(rs.out_dir);
  FpcaOptions fopts = rs.model.fpca;
  fopts.max_components = std::max(fopts.max_components, rs.model.max_candidate_components);
  for (std::size_t e = 0; e < expo.exposure_ids.size(); ++e) {
    std::vector<SparseFunctionalSample> samples;
    samples.reserve(expo.samples[e].size());
    for (const auto& [id, s] : expo.samples[e]) {
      samples.push_back(s);
      samples.back().canonicalize();
    }
    const FpcaModel model = fit_fpca(samples, rs.scenario.domain_end, fopts);
    const std::string eid = expo.exposure_ids[e];

    io::json out;
    out["version"] = version_string;
    out["command"] = "fpca";
    out["exposure_id"] = eid;
    out["n_subjects"] = static_cast<int>(samples.size());
    out["components"] = model.components();
    out["degenerate"] = model.degenerate;
    out["noise_variance"] = model.noise_variance;
    out["mean_bandwidth"] = model.mean_bandwidth;
    out["cov_bandwidth"] = model.cov_bandwidth;
    out["eigenvalues"] = io::vector_to_json(model.eigenvalues);
    out["fraction_of_variance"] = io::vector_to_json(model.fraction_of_variance);
    out["grid"] = io::vector_to_json(model.grid);
    out["mean"] = io::vector_to_json(model.mean);
    out["eigenfunctions"] = io::matrix_to_json(model.eigenfunctions);
    io::write_json_file((fs::path(rs.out_dir) / ("fpca_" + eid + ".json")).string(), out);

    std::vector<std::string> header{"subject_id"};
    for (int k = 0; k < model.components(); ++k) header.push_back("score_" + std::to_string(k + 1));
    io::CsvWriter w((fs::path(rs.out_dir) / ("scores_" + eid + ".csv")).string(), header);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      std::vector<std::string> row{io::fmt(model.subject_ids[i])};
      for (int k = 0; k < model.components(); ++k) row.push_back(io::fmt(model.scores(i, k)));
      w.write_row(row);
    }
  }
  RunOutcome outcome;
  outcome.n_total = static_cast<int>(expo.exposure_ids.size());
  outcome.n_ok = outcome.n_total;
  outcome.n_converged = outcome.n_total;
  outcome.success = true;
  return outcome;
}

}  // namespace mvfmr
