// sls: run, diagnose, verify and sweep experiments from a config file.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sls/commands.hpp"

namespace {

void add_common(CLI::App* cmd, sls::CommandOptions& opts, std::optional<std::uint64_t>& seed) {
  cmd->add_option("config", opts.config_path, "experiment config file")->required();
  cmd->add_option("--overrides,--set", opts.overrides, "section.key=value, applied after SLS_* env vars");
  cmd->add_option("--seed", seed, "shorthand for run.seed");
  cmd->add_flag("!--no-env", opts.use_env, "ignore SLS_* environment overrides");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Line-search SGD with safeguarded search directions"};
  app.require_subcommand(1);

  sls::CommandOptions opts;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "run the optimizer; writes the CSV trace and SVG plot named in the config");
  add_common(run, opts, seed);
  std::string sweep_spec;
  unsigned run_jobs = 0;
  run->add_option("--sweep", sweep_spec, "seeds=a..b: one run per seed, executed concurrently");
  run->add_option("--jobs", run_jobs, "concurrent runs for --sweep (0: all cores)");

  auto* diagnose = app.add_subcommand("diagnose", "estimate growth, PL and covariance constants and eta");
  add_common(diagnose, opts, seed);
  sls::DiagnoseOptions dopts;
  diagnose->add_option("--points", dopts.num_points, "random sample points")->check(CLI::PositiveNumber);
  diagnose->add_option("--samples-csv", dopts.samples_csv, "per-sample CSV output");

  auto* verify = app.add_subcommand("verify", "replay a run (or read a trace) and check every step bound");
  add_common(verify, opts, seed);
  sls::VerifyOptions vopts;
  verify->add_option("--trace", vopts.trace_path, "check this CSV trace instead of replaying");

  auto* sweep = app.add_subcommand("sweep", "same config over a range of seeds, run concurrently");
  add_common(sweep, opts, seed);
  std::string seeds;
  sls::SweepOptions sopts;
  sweep->add_option("--seeds", seeds, "inclusive range a..b")->required();
  sweep->add_option("--jobs", sopts.jobs, "concurrent runs (0: all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sls::exit_code::config;
  }
  opts.seed = seed;

  try {
    if (*run) {
      if (sweep_spec.empty()) return sls::cmd_run(opts);
      if (sweep_spec.rfind("seeds=", 0) != 0) throw sls::config_error("--sweep expects seeds=a..b");
      std::tie(sopts.first_seed, sopts.last_seed) = sls::parse_seed_range(sweep_spec.substr(6));
      sopts.jobs = run_jobs;
      return sls::cmd_sweep(opts, sopts);
    }
    if (*diagnose) return sls::cmd_diagnose(opts, dopts);
    if (*verify) return sls::cmd_verify(opts, vopts);
    if (*sweep) {
      std::tie(sopts.first_seed, sopts.last_seed) = sls::parse_seed_range(seeds);
      return sls::cmd_sweep(opts, sopts);
    }
  } catch (const sls::error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return sls::exit_code::config;
  }
  return sls::exit_code::config;
}
