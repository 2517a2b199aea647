// Command-line front end: simulation benchmarks, parameter sweeps, fitting
// user-supplied data, and FPCA diagnostics.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <mvfmr/mvfmr.hpp>

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "JSON configuration file");
  cmd->add_option("--set", args.sets,
                  "key=value override applied on top of the config (repeatable)")
      ->take_all();
  cmd->add_option("--seed", args.seed, "master seed (overrides the config)");
  cmd->add_option("--threads", args.threads, "worker threads for replicates");
  cmd->add_option("--out-dir", args.out_dir, "output directory");
}

mvfmr::io::RunSettings resolve_settings(const CommonArgs& args) {
  mvfmr::io::json doc =
      args.config.empty() ? mvfmr::io::json::object() : mvfmr::io::load_json_file(args.config);
  for (const auto& assignment : args.sets) mvfmr::io::apply_override(doc, assignment);
  mvfmr::io::RunSettings rs = mvfmr::io::parse_run_settings(doc);
  if (args.seed) {
    rs.scenario.seed = *args.seed;
    if (!rs.cv_seed_set) rs.model.cv_seed = *args.seed;
  }
  if (args.threads) {
    if (*args.threads < 1) throw mvfmr::ConfigError("--threads must be >= 1");
    rs.threads = *args.threads;
  }
  if (args.out_dir) rs.out_dir = *args.out_dir;
  return rs;
}

int report(const mvfmr::RunOutcome& outcome) {
  std::fprintf(stderr, "[mvfmr] done: %d/%d converged (%d ok)\n", outcome.n_converged,
               outcome.n_total, outcome.n_ok);
  return outcome.success ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "mvfmr: time-varying effects of sparse longitudinal exposures via "
      "genetic instruments"};
  app.require_subcommand(1);

  CommonArgs sim_args, sweep_args, fit_args, fpca_args;
  std::string exposures_path, genotypes_path, outcomes_path, fpca_exposures_path;

  CLI::App* sim = app.add_subcommand(
      "simulate", "run one benchmark scenario over seeded replicates");
  add_common(sim, sim_args);

  CLI::App* sweep = app.add_subcommand(
      "sweep", "repeat a scenario across a grid of one design parameter");
  add_common(sweep, sweep_args);

  CLI::App* fit = app.add_subcommand("fit", "estimate effect curves from CSV data");
  add_common(fit, fit_args);
  fit->add_option("--exposures", exposures_path,
                  "long-format CSV: subject_id,exposure_id,time,value")
      ->required();
  fit->add_option("--genotypes", genotypes_path, "CSV: subject_id plus one column per variant")
      ->required();
  fit->add_option("--outcomes", outcomes_path, "CSV: subject_id,outcome")->required();

  CLI::App* fpca = app.add_subcommand("fpca", "decomposition diagnostics for sparse exposures");
  add_common(fpca, fpca_args);
  fpca->add_option("--exposures", fpca_exposures_path,
                   "long-format CSV: subject_id,exposure_id,time,value")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (sim->parsed()) return report(mvfmr::run_scenario(resolve_settings(sim_args)));
    if (sweep->parsed()) return report(mvfmr::run_sweep(resolve_settings(sweep_args)));
    if (fit->parsed())
      return report(mvfmr::fit_data(exposures_path, genotypes_path, outcomes_path,
                                    resolve_settings(fit_args)));
    if (fpca->parsed())
      return report(mvfmr::fpca_diagnostics(fpca_exposures_path, resolve_settings(fpca_args)));
  } catch (const mvfmr::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const mvfmr::SchemaError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 2;
  } catch (const mvfmr::SubjectMismatchError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
