#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mvfmr/errors.hpp"
#include "mvfmr/estimators.hpp"
#include "mvfmr/fpca.hpp"
#include "mvfmr/model.hpp"
#include "mvfmr/simulate.hpp"

namespace mvfmr::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Numeric formatting: shortest round-trippable decimal for doubles.
// ---------------------------------------------------------------------------

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string fmt(int x) { return std::to_string(x); }
inline std::string fmt(std::int64_t x) { return std::to_string(x); }
inline std::string fmt(std::uint64_t x) { return std::to_string(x); }

// ---------------------------------------------------------------------------
// CSV primitives
// ---------------------------------------------------------------------------

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

inline double parse_double(const std::string& field, const std::string& file, int line_no) {
  double v = 0.0;
  const char* b = field.data();
  const char* e = b + field.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || p != e)
    throw SchemaError(file + ":" + std::to_string(line_no) + ": expected a number, got '" + field +
                      "'");
  return v;
}

inline std::int64_t parse_id(const std::string& field, const std::string& file, int line_no) {
  std::int64_t v = 0;
  const char* b = field.data();
  const char* e = b + field.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || p != e)
    throw SchemaError(file + ":" + std::to_string(line_no) + ": expected an integer id, got '" +
                      field + "'");
  return v;
}

// Reads all non-empty lines; throws when the file cannot be opened or is empty.
inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) lines.push_back(line);
  }
  if (lines.empty()) throw SchemaError(path + ": file is empty");
  return lines;
}

// ---------------------------------------------------------------------------
// Input tables
// ---------------------------------------------------------------------------

struct GenotypeTable {
  std::vector<std::int64_t> subject_ids;
  std::vector<std::string> variant_names;
  MatrixXd values;  // n x p
};

struct OutcomeTable {
  std::vector<std::int64_t> subject_ids;
  VectorXd values;
};

struct ExposureTable {
  std::vector<std::string> exposure_ids;  // sorted lexicographically
  // exposure -> subject_id -> sample (observation order as in the file)
  std::vector<std::map<std::int64_t, SparseFunctionalSample>> samples;
};

// Genotype matrix: header `subject_id,<variant>,...`; one row per subject.
inline GenotypeTable read_genotype_csv(const std::string& path) {
  const auto lines = read_lines(path);
  const auto header = split_csv(lines[0]);
  if (header.size() < 2 || header[0] != "subject_id")
    throw SchemaError(path + ": expected header 'subject_id,<variant columns>'");
  GenotypeTable table;
  table.variant_names.assign(header.begin() + 1, header.end());
  const int p = static_cast<int>(table.variant_names.size());
  const int n = static_cast<int>(lines.size()) - 1;
  if (n < 1) throw SchemaError(path + ": no data rows");
  table.values.resize(n, p);
  table.subject_ids.resize(n);
  std::set<std::int64_t> seen;
  for (int r = 0; r < n; ++r) {
    const auto fields = split_csv(lines[r + 1]);
    if (static_cast<int>(fields.size()) != p + 1)
      throw SchemaError(path + ":" + std::to_string(r + 2) + ": expected " + std::to_string(p + 1) +
                        " fields, got " + std::to_string(fields.size()));
    table.subject_ids[r] = parse_id(fields[0], path, r + 2);
    if (!seen.insert(table.subject_ids[r]).second)
      throw SchemaError(path + ":" + std::to_string(r + 2) + ": duplicate subject_id " +
                        std::to_string(table.subject_ids[r]));
    for (int c = 0; c < p; ++c) table.values(r, c) = parse_double(fields[c + 1], path, r + 2);
  }
  return table;
}

// Outcome: header `subject_id,outcome`; one row per subject.
inline OutcomeTable read_outcome_csv(const std::string& path) {
  const auto lines = read_lines(path);
  const auto header = split_csv(lines[0]);
  if (header.size() != 2 || header[0] != "subject_id" || header[1] != "outcome")
    throw SchemaError(path + ": expected header 'subject_id,outcome'");
  const int n = static_cast<int>(lines.size()) - 1;
  if (n < 1) throw SchemaError(path + ": no data rows");
  OutcomeTable table;
  table.subject_ids.resize(n);
  table.values.resize(n);
  std::set<std::int64_t> seen;
  for (int r = 0; r < n; ++r) {
    const auto fields = split_csv(lines[r + 1]);
    if (fields.size() != 2)
      throw SchemaError(path + ":" + std::to_string(r + 2) + ": expected 2 fields, got " +
                        std::to_string(fields.size()));
    table.subject_ids[r] = parse_id(fields[0], path, r + 2);
    if (!seen.insert(table.subject_ids[r]).second)
      throw SchemaError(path + ":" + std::to_string(r + 2) + ": duplicate subject_id " +
                        std::to_string(table.subject_ids[r]));
    table.values[r] = parse_double(fields[1], path, r + 2);
  }
  return table;
}

// Long-format sparse observations: header `subject_id,exposure_id,time,value`.
inline ExposureTable read_exposure_csv(const std::string& path) {
  const auto lines = read_lines(path);
  const auto header = split_csv(lines[0]);
  if (header.size() != 4 || header[0] != "subject_id" || header[1] != "exposure_id" ||
      header[2] != "time" || header[3] != "value")
    throw SchemaError(path + ": expected header 'subject_id,exposure_id,time,value'");
  std::map<std::string, std::map<std::int64_t, SparseFunctionalSample>> grouped;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = split_csv(lines[r]);
    const int line_no = static_cast<int>(r) + 1;
    if (fields.size() != 4)
      throw SchemaError(path + ":" + std::to_string(line_no) + ": expected 4 fields, got " +
                        std::to_string(fields.size()));
    const std::int64_t sid = parse_id(fields[0], path, line_no);
    auto& sample = grouped[fields[1]][sid];
    sample.subject_id = sid;
    sample.times.push_back(parse_double(fields[2], path, line_no));
    sample.values.push_back(parse_double(fields[3], path, line_no));
  }
  if (grouped.empty()) throw SchemaError(path + ": no data rows");
  ExposureTable table;
  for (auto& [eid, m] : grouped) {
    table.exposure_ids.push_back(eid);
    table.samples.push_back(std::move(m));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Subject alignment across input files
// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<std::int64_t> subject_ids;  // order taken from the genotype file
  InstrumentMatrix instruments;
  std::vector<std::string> variant_names;
  VectorXd outcome;
  std::vector<std::string> exposure_ids;
  std::vector<std::vector<SparseFunctionalSample>> exposures;  // aligned to subject order
};

inline void check_coverage(const std::vector<std::int64_t>& reference,
                           const std::set<std::int64_t>& have, std::size_t have_total,
                           const std::string& what) {
  int missing = 0;
  for (auto id : reference)
    if (!have.count(id)) ++missing;
  const int extra = static_cast<int>(have_total) - (static_cast<int>(reference.size()) - missing);
  if (missing > 0 || extra > 0)
    throw SubjectMismatchError(what + ": covers " +
                               std::to_string(reference.size() - missing) + " of " +
                               std::to_string(reference.size()) + " genotype subjects (" +
                               std::to_string(missing) + " missing, " + std::to_string(extra) +
                               " extra)");
}

inline Dataset align_dataset(const GenotypeTable& geno, const OutcomeTable& outc,
                             const ExposureTable& expo) {
  if (expo.exposure_ids.empty() || expo.exposure_ids.size() > 2)
    throw SchemaError("exposure file must contain 1 or 2 distinct exposure_id values, got " +
                      std::to_string(expo.exposure_ids.size()));
  Dataset ds;
  ds.subject_ids = geno.subject_ids;
  ds.variant_names = geno.variant_names;
  ds.instruments.values = geno.values;
  ds.instruments.column_labels.assign(geno.variant_names.size(), InstrumentLabel::shared);
  ds.instruments.centered = false;
  for (int j = 0; j < ds.instruments.p(); ++j)
    if (ds.instruments.values.col(j).minCoeff() == ds.instruments.values.col(j).maxCoeff())
      throw SchemaError("genotype column '" + ds.variant_names[j] +
                        "' is constant and cannot serve as an instrument");

  {
    std::set<std::int64_t> have(outc.subject_ids.begin(), outc.subject_ids.end());
    check_coverage(ds.subject_ids, have, outc.subject_ids.size(), "outcome file");
    std::map<std::int64_t, double> by_id;
    for (std::size_t i = 0; i < outc.subject_ids.size(); ++i)
      by_id[outc.subject_ids[i]] = outc.values[i];
    ds.outcome.resize(ds.subject_ids.size());
    for (std::size_t i = 0; i < ds.subject_ids.size(); ++i)
      ds.outcome[i] = by_id.at(ds.subject_ids[i]);
  }

  ds.exposure_ids = expo.exposure_ids;
  for (std::size_t e = 0; e < expo.samples.size(); ++e) {
    const auto& m = expo.samples[e];
    std::set<std::int64_t> have;
    for (const auto& [id, s] : m) have.insert(id);
    check_coverage(ds.subject_ids, have, m.size(), "exposure '" + expo.exposure_ids[e] + "'");
    std::vector<SparseFunctionalSample> aligned;
    aligned.reserve(ds.subject_ids.size());
    for (auto id : ds.subject_ids) {
      SparseFunctionalSample s = m.at(id);
      s.canonicalize();
      aligned.push_back(std::move(s));
    }
    ds.exposures.push_back(std::move(aligned));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Run settings: flat JSON schema shared by all subcommands
// ---------------------------------------------------------------------------

struct RunSettings {
  ScenarioConfig scenario;
  ModelConfig model;
  bool cv_seed_set = false;  // when false, cv_seed follows the master seed
  int threads = 1;
  std::string out_dir = "out";
  std::string sweep_parameter;
  std::vector<double> sweep_values;
  bool run_ufmr = true;
  BandMethod band_method = BandMethod::asymptotic;
  int bootstrap_reps = 200;
  int dump_replicate = -1;  // >= 0: also write that replicate's raw data
  // Minimum fraction of replicates whose primary fit must converge for a
  // simulation run to exit successfully.
  double convergence_threshold = 0.95;
};

inline Scenario scenario_from_string(const std::string& s) {
  if (s == "pleiotropy") return Scenario::pleiotropy;
  if (s == "null_control") return Scenario::null_control;
  if (s == "mediation") return Scenario::mediation;
  throw ConfigError("unknown scenario '" + s +
                    "' (expected pleiotropy, null_control, or mediation)");
}

inline OutcomeType outcome_type_from_string(const std::string& s) {
  if (s == "continuous") return OutcomeType::continuous;
  if (s == "binary") return OutcomeType::binary;
  throw ConfigError("unknown outcome_type '" + s + "' (expected continuous or binary)");
}

inline EffectSpec effect_from_json(const json& j, const std::string& key) {
  EffectSpec spec;
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "null")
      spec.shape = EffectShape::null_effect;
    else if (s == "linear")
      spec.shape = EffectShape::linear;
    else if (s == "quadratic")
      spec.shape = EffectShape::quadratic;
    else
      throw ConfigError(key + ": unknown effect shape '" + s +
                        "' (expected null, linear, quadratic, or a custom object)");
    return spec;
  }
  if (!j.is_object() || !j.contains("times") || !j.contains("values"))
    throw ConfigError(key + ": custom effect must be an object with 'times' and 'values' arrays");
  spec.shape = EffectShape::custom;
  const auto times = j.at("times").get<std::vector<double>>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (times.size() != values.size() || times.size() < 2)
    throw ConfigError(key + ": custom effect needs matching times/values arrays of length >= 2");
  spec.custom_times = Eigen::Map<const VectorXd>(times.data(), times.size());
  spec.custom_values = Eigen::Map<const VectorXd>(values.data(), values.size());
  return spec;
}

inline json vector_to_json(const VectorXd& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline json effect_to_json(const EffectSpec& e) {
  switch (e.shape) {
    case EffectShape::null_effect:
      return "null";
    case EffectShape::linear:
      return "linear";
    case EffectShape::quadratic:
      return "quadratic";
    case EffectShape::custom:
      return json{{"times", vector_to_json(e.custom_times)},
                  {"values", vector_to_json(e.custom_values)}};
  }
  return "null";
}

inline BandMethod band_method_from_string(const std::string& s) {
  if (s == "asymptotic") return BandMethod::asymptotic;
  if (s == "bootstrap") return BandMethod::bootstrap;
  throw ConfigError("unknown band_method '" + s + "' (expected asymptotic or bootstrap)");
}

// Parses the flat config document. Unknown keys are rejected with a list of
// offenders; type errors name the offending key.
inline RunSettings parse_run_settings(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  RunSettings rs;
  std::vector<std::string> unknown;
  for (const auto& [key, value] : doc.items()) {
    try {
      auto& sc = rs.scenario;
      auto& mc = rs.model;
      if (key == "scenario")
        sc.scenario = scenario_from_string(value.get<std::string>());
      else if (key == "n")
        sc.n = value.get<int>();
      else if (key == "p_total")
        sc.p_total = value.get<int>();
      else if (key == "p12_fraction")
        sc.p12_fraction = value.get<double>();
      else if (key == "gamma")
        sc.gamma = value.get<double>();
      else if (key == "n_sparse")
        sc.n_sparse = value.get<int>();
      else if (key == "domain_end") {
        sc.domain_end = value.get<double>();
        mc.domain_end = sc.domain_end;
      } else if (key == "effect1")
        sc.effect1 = effect_from_json(value, key);
      else if (key == "effect2")
        sc.effect2 = effect_from_json(value, key);
      else if (key == "outcome_type") {
        sc.outcome_type = outcome_type_from_string(value.get<std::string>());
        mc.binary = sc.outcome_type == OutcomeType::binary;
      } else if (key == "replicates")
        sc.replicates = value.get<int>();
      else if (key == "seed")
        sc.seed = value.get<std::uint64_t>();
      else if (key == "confounder_loading")
        sc.confounder_loading = value.get<double>();
      else if (key == "binary_prevalence")
        sc.binary_prevalence = value.get<double>();
      else if (key == "redraw_shared_effects")
        sc.redraw_shared_effects = value.get<bool>();
      else if (key == "generation_grid_size")
        sc.generation_grid_size = value.get<int>();
      else if (key == "beta0")
        sc.beta0 = value.get<double>();
      else if (key == "grid_size")
        mc.fpca.grid_size = value.get<int>();
      else if (key == "max_components")
        mc.max_candidate_components = value.get<int>();
      else if (key == "candidates") {
        mc.candidates.clear();
        for (const auto& pair : value) {
          if (!pair.is_array() || pair.size() != 2)
            throw ConfigError("candidates: each entry must be a [K1, K2] pair");
          mc.candidates.emplace_back(pair[0].get<int>(), pair[1].get<int>());
        }
      } else if (key == "folds")
        mc.folds = value.get<int>();
      else if (key == "cv_seed") {
        mc.cv_seed = value.get<std::uint64_t>();
        rs.cv_seed_set = true;
      } else if (key == "refit_fpca_per_fold")
        mc.refit_fpca_per_fold = value.get<bool>();
      else if (key == "fixed_k1")
        mc.fixed_components.first = value.get<int>();
      else if (key == "fixed_k2")
        mc.fixed_components.second = value.get<int>();
      else if (key == "mean_bandwidth_fraction")
        mc.fpca.smoothing.mean_bandwidth_fraction = value.get<double>();
      else if (key == "cov_bandwidth_fraction")
        mc.fpca.smoothing.cov_bandwidth_fraction = value.get<double>();
      else if (key == "use_gcv")
        mc.fpca.smoothing.use_gcv = value.get<bool>();
      else if (key == "gmm_max_iterations")
        mc.gmm.max_iterations = value.get<int>();
      else if (key == "gmm_tolerance")
        mc.gmm.tolerance = value.get<double>();
      else if (key == "gmm_divergence_scale")
        mc.gmm.divergence_scale = value.get<double>();
      else if (key == "cv_gmm_tolerance")
        mc.cv_gmm_tolerance = value.get<double>();
      else if (key == "band_level")
        mc.band_level = value.get<double>();
      else if (key == "band_method")
        rs.band_method = band_method_from_string(value.get<std::string>());
      else if (key == "bootstrap_reps")
        rs.bootstrap_reps = value.get<int>();
      else if (key == "threads")
        rs.threads = value.get<int>();
      else if (key == "out_dir")
        rs.out_dir = value.get<std::string>();
      else if (key == "sweep_parameter")
        rs.sweep_parameter = value.get<std::string>();
      else if (key == "sweep_values")
        rs.sweep_values = value.get<std::vector<double>>();
      else if (key == "run_ufmr")
        rs.run_ufmr = value.get<bool>();
      else if (key == "convergence_threshold")
        rs.convergence_threshold = value.get<double>();
      else if (key == "dump_replicate")
        rs.dump_replicate = value.get<int>();
      else
        unknown.push_back(key);
    } catch (const ConfigError&) {
      throw;
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " '" + k + "'";
    throw ConfigError(msg);
  }
  if (!rs.cv_seed_set) rs.model.cv_seed = rs.scenario.seed;
  if (rs.threads < 1) throw ConfigError("threads must be >= 1");
  return rs;
}

inline json settings_to_json(const RunSettings& rs) {
  json j;
  const auto& sc = rs.scenario;
  const auto& mc = rs.model;
  j["scenario"] = to_string(sc.scenario);
  j["n"] = sc.n;
  j["p_total"] = sc.p_total;
  j["p12_fraction"] = sc.p12_fraction;
  j["gamma"] = sc.gamma;
  j["n_sparse"] = sc.n_sparse;
  j["domain_end"] = sc.domain_end;
  j["effect1"] = effect_to_json(sc.effect1);
  j["effect2"] = effect_to_json(sc.effect2);
  j["outcome_type"] = to_string(sc.outcome_type);
  j["replicates"] = sc.replicates;
  j["seed"] = sc.seed;
  j["confounder_loading"] = sc.confounder_loading;
  j["binary_prevalence"] = sc.binary_prevalence;
  j["redraw_shared_effects"] = sc.redraw_shared_effects;
  j["generation_grid_size"] = sc.generation_grid_size;
  j["beta0"] = sc.beta0;
  j["grid_size"] = mc.fpca.grid_size;
  j["max_components"] = mc.max_candidate_components;
  if (!mc.candidates.empty()) {
    json arr = json::array();
    for (const auto& [k1, k2] : mc.candidates) arr.push_back(json::array({k1, k2}));
    j["candidates"] = arr;
  }
  j["folds"] = mc.folds;
  j["cv_seed"] = mc.cv_seed;
  j["refit_fpca_per_fold"] = mc.refit_fpca_per_fold;
  j["fixed_k1"] = mc.fixed_components.first;
  j["fixed_k2"] = mc.fixed_components.second;
  j["mean_bandwidth_fraction"] = mc.fpca.smoothing.mean_bandwidth_fraction;
  j["cov_bandwidth_fraction"] = mc.fpca.smoothing.cov_bandwidth_fraction;
  j["use_gcv"] = mc.fpca.smoothing.use_gcv;
  j["gmm_max_iterations"] = mc.gmm.max_iterations;
  j["gmm_tolerance"] = mc.gmm.tolerance;
  j["gmm_divergence_scale"] = mc.gmm.divergence_scale;
  j["cv_gmm_tolerance"] = mc.cv_gmm_tolerance;
  j["band_level"] = mc.band_level;
  j["band_method"] = rs.band_method == BandMethod::asymptotic ? "asymptotic" : "bootstrap";
  j["bootstrap_reps"] = rs.bootstrap_reps;
  j["threads"] = rs.threads;
  j["out_dir"] = rs.out_dir;
  if (!rs.sweep_parameter.empty()) {
    j["sweep_parameter"] = rs.sweep_parameter;
    j["sweep_values"] = rs.sweep_values;
  }
  j["run_ufmr"] = rs.run_ufmr;
  j["convergence_threshold"] = rs.convergence_threshold;
  j["dump_replicate"] = rs.dump_replicate;
  return j;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
}

// Applies one `key=value` override onto the document. The value is parsed as
// a JSON literal; anything unparseable is taken as a plain string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string raw = trim(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // bare strings need no quotes
  }
  doc[key] = value;
}

// ---------------------------------------------------------------------------
// Output writers
// ---------------------------------------------------------------------------

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw ConfigError("cannot open output file for writing: " + path);
    write_row(header);
  }

  void write_row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file for writing: " + path);
  out << j.dump(2) << '\n';
}

// Long-format export of simulated sparse observations (round-trips through
// read_exposure_csv).
inline void write_exposure_csv(const std::string& path,
                               const std::vector<std::vector<SparseFunctionalSample>>& exposures) {
  CsvWriter w(path, {"subject_id", "exposure_id", "time", "value"});
  for (std::size_t e = 0; e < exposures.size(); ++e) {
    const std::string eid = "X" + std::to_string(e + 1);
    for (const auto& s : exposures[e])
      for (std::size_t i = 0; i < s.times.size(); ++i)
        w.write_row({fmt(s.subject_id), eid, fmt(s.times[i]), fmt(s.values[i])});
  }
}

inline void write_genotype_csv(const std::string& path, const InstrumentMatrix& instruments,
                               const std::vector<std::int64_t>& subject_ids) {
  std::vector<std::string> header{"subject_id"};
  for (int j = 0; j < instruments.p(); ++j) header.push_back("v" + std::to_string(j + 1));
  CsvWriter w(path, header);
  for (int i = 0; i < instruments.n(); ++i) {
    std::vector<std::string> row{fmt(subject_ids[i])};
    for (int j = 0; j < instruments.p(); ++j) row.push_back(fmt(instruments.values(i, j)));
    w.write_row(row);
  }
}

inline void write_outcome_csv(const std::string& path, const VectorXd& outcome,
                              const std::vector<std::int64_t>& subject_ids) {
  CsvWriter w(path, {"subject_id", "outcome"});
  for (int i = 0; i < outcome.size(); ++i) w.write_row({fmt(subject_ids[i]), fmt(outcome[i])});
}

}  // namespace mvfmr::io
