#pragma once

/// \file commands.hpp
///
/// The CLI subcommands as library functions returning process exit codes.
///
/// Exit codes: 0 success / converged, 1 configuration error, 2 iteration cap
/// reached, 3 line-search stall, 4 undefined diagnostic estimator, 5 verify
/// found a violated bound.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "config.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "optimizer.hpp"
#include "trace.hpp"

namespace sls {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config = 1;
inline constexpr int max_iters = 2;
inline constexpr int stalled = 3;
inline constexpr int undefined_estimator = 4;
inline constexpr int violation = 5;
}  // namespace exit_code

struct CommandOptions {
  std::string config_path;
  std::vector<std::string> overrides;  ///< section.key=value, applied after env overrides
  std::optional<std::uint64_t> seed;   ///< shorthand for run.seed=...
  bool use_env = true;
};

inline int status_exit_code(RunStatus status) {
  switch (status) {
    case RunStatus::converged_grad:
    case RunStatus::converged_fgap: return exit_code::ok;
    case RunStatus::max_iters: return exit_code::max_iters;
    case RunStatus::stalled: return exit_code::stalled;
  }
  return exit_code::config;
}

/// Loads the config file and applies env, --overrides and --seed, in that order.
inline ExperimentConfig resolve_config(const CommandOptions& opts) {
  ExperimentConfig cfg = load_config(opts.config_path);
  if (opts.use_env) apply_env_overrides(cfg);
  for (const auto& o : opts.overrides) apply_override(cfg, o);
  if (opts.seed) cfg.run.seed = *opts.seed;
  return cfg;
}

namespace detail {

inline std::vector<std::pair<double, double>> gap_series(const RunResult& result, double f_offset) {
  std::vector<std::pair<double, double>> out;
  for (const auto& r : result.trajectory)
    if (r.f_full) out.emplace_back(r.k, *r.f_full - f_offset);
  out.emplace_back(result.iterations(), result.final_f - f_offset);
  return out;
}

inline std::string with_seed_suffix(const std::string& path, std::uint64_t seed) {
  std::filesystem::path p(path);
  const std::string stem = p.stem().string() + ".seed" + std::to_string(seed);
  return (p.parent_path() / (stem + p.extension().string())).string();
}

/// Writes the CSV / SVG outputs named in the config.
inline void write_outputs(const ExperimentConfig& cfg, const FiniteSumProblem& problem, const RunResult& result,
                          const std::string& csv_path, const std::string& svg_path) {
  if (!csv_path.empty()) write_trace_csv(csv_path, result.trajectory);
  if (!svg_path.empty()) {
    const auto& known = problem.known_constants();
    const double offset = known ? known->f_star : 0.0;
    const std::string title = (known ? "f - f*" : "f") + std::string(" vs k: ") + cfg.problem.kind + ", " +
                              cfg.direction.kind + ", seed " + std::to_string(cfg.run.seed);
    write_convergence_svg(svg_path, gap_series(result, offset), title);
  }
}

inline void print_run_summary(std::ostream& out, const FiniteSumProblem& problem, const RunResult& result) {
  const auto& known = problem.known_constants();
  std::size_t restarts = 0;
  for (const auto& r : result.trajectory) restarts += r.restarted ? 1 : 0;
  out << "status = " << to_string(result.status) << '\n';
  out << "iterations = " << result.iterations() << '\n';
  out << "final_f = " << format_double(result.final_f) << '\n';
  if (known) out << "final_gap = " << format_double(result.final_f - known->f_star) << '\n';
  out << "final_grad_norm = " << format_double(result.final_grad_norm) << '\n';
  out << "stochastic_f_evals = " << result.total_f_evals << '\n';
  out << "restarts = " << restarts << '\n';
  if (known) {
    try {
      const ContractionEstimate est = fit_log_linear(gap_series(result, known->f_star));
      out << "contraction_rate = " << format_double(est.per_iter_rate) << '\n';
      out << "contraction_r2 = " << format_double(est.r_squared) << '\n';
    } catch (const insufficient_data_error&) {
      out << "contraction_rate = n/a\n";
    }
  }
  if (!result.message.empty()) out << "message = " << result.message << '\n';
}

}  // namespace detail

/// `run`: one optimizer run, CSV trace and optional SVG, summary on `out`.
inline int cmd_run(const CommandOptions& opts, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  ExperimentConfig cfg;
  RunConfig rc;
  try {
    cfg = resolve_config(opts);
    rc = to_run_config(cfg);
  } catch (const error& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config;
  }
  RunResult result;
  try {
    result = run(rc);
  } catch (const run_error& e) {
    err << "run failed: " << e.what() << '\n';
    return exit_code::stalled;
  }
  try {
    detail::write_outputs(cfg, *rc.problem, result, cfg.run.out_csv, cfg.run.out_svg);
  } catch (const error& e) {
    err << "output error: " << e.what() << '\n';
    return exit_code::config;
  }
  detail::print_run_summary(out, *rc.problem, result);
  return status_exit_code(result.status);
}

struct VerifyOptions {
  std::string trace_path;  ///< when set, check this CSV instead of replaying a run
};

inline std::optional<TraceBounds> trace_bounds_for(const ExperimentConfig& cfg, const FiniteSumProblem& problem) {
  const auto& known = problem.known_constants();
  if (!known || !known->L_max) return std::nullopt;
  TraceBounds b;
  b.sgr = SgrParams{cfg.direction.c1, cfg.direction.c2};
  b.gamma = cfg.linesearch.gamma;
  b.delta = cfg.linesearch.delta;
  b.alpha_max = cfg.linesearch.alpha_max;
  b.L_max = *known->L_max;
  return b;
}

/// `verify`: replays a run (or reads a trace) and checks every row against the
/// step floor, the backtrack ceiling, the SGR bounds and, for replays, the
/// Armijo certificate.
inline int cmd_verify(const CommandOptions& opts, const VerifyOptions& vopts = {}, std::ostream& out = std::cout,
                      std::ostream& err = std::cerr) {
  ExperimentConfig cfg;
  RunConfig rc;
  std::optional<TraceBounds> bounds;
  try {
    cfg = resolve_config(opts);
    rc = to_run_config(cfg);
    bounds = trace_bounds_for(cfg, *rc.problem);
    if (!bounds) throw config_error("verify needs a problem with a known L_max");
  } catch (const error& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config;
  }
  out << "alpha_low = " << detail::format_double(bounds->alpha_low_value()) << '\n';
  out << "step_floor = " << detail::format_double(bounds->step_floor_factor()) << '\n';
  out << "jstar = " << bounds->backtrack_ceiling() << '\n';

  std::vector<IterationRecord> rows;
  bool replay = vopts.trace_path.empty();
  if (replay) {
    RunResult result;
    try {
      result = run(rc);
    } catch (const run_error& e) {
      err << "violation: " << e.what() << '\n';
      return exit_code::violation;
    }
    if (result.status == RunStatus::stalled) {
      err << "run stalled: " << result.message << '\n';
      return exit_code::stalled;
    }
    out << "status = " << to_string(result.status) << '\n';
    rows = std::move(result.trajectory);
  } else {
    try {
      rows = read_trace_csv(vopts.trace_path);
    } catch (const error& e) {
      err << "trace error: " << e.what() << '\n';
      return exit_code::config;
    }
  }
  out << "rows = " << rows.size() << '\n';
  // CSV rows only carry ||g||; allow the ulp-level difference of its square.
  const auto violation = verify_trace(rows, *bounds, replay, replay ? 0.0 : 4e-16);
  if (violation) {
    err << "violation at row " << violation->row << " (k=" << violation->k << "): " << violation->what << '\n';
    out << "verified = false\n";
    return exit_code::violation;
  }
  out << "verified = true\n";
  return exit_code::ok;
}

struct DiagnoseOptions {
  std::size_t num_points = 20;
  std::string samples_csv;  ///< optional per-sample output
};

namespace detail {

/// For least-squares problems: x* + v for eigenvectors v of A'A at the two ends
/// of its nonzero spectrum. Along these the PL and smoothness ratios are
/// attained exactly, so sampled extrema can reach the analytic constants.
inline std::vector<Vector> spectral_probe_points(const FiniteSumProblem& problem) {
  const auto* ls = dynamic_cast<const LeastSquaresProblem*>(&problem);
  const auto& known = problem.known_constants();
  if (ls == nullptr || !known) return {};
  const RowMatrix& A = ls->matrix();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Eigen::MatrixXd(A.transpose() * A));
  const Vector& ev = eig.eigenvalues();
  const double cutoff = ev.maxCoeff() * 1e-10;
  Eigen::Index lo = -1;
  for (Eigen::Index k = 0; k < ev.size(); ++k)
    if (ev[k] > cutoff) {
      lo = k;
      break;
    }
  if (lo < 0) return {};
  const double scale = 1.0 / std::sqrt(static_cast<double>(A.cols()));
  return {known->x_star + scale * eig.eigenvectors().col(lo),
          known->x_star + scale * eig.eigenvectors().col(ev.size() - 1)};
}

}  // namespace detail

/// `diagnose`: sampled growth, PL and covariance constants, expected-direction
/// bound slacks, and eta with its applicability flags, as `key = value` lines.
inline int cmd_diagnose(const CommandOptions& opts, const DiagnoseOptions& dopts = {}, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  ExperimentConfig cfg;
  RunConfig rc;
  try {
    cfg = resolve_config(opts);
    rc = to_run_config(cfg);
    if (dopts.num_points < 1) throw config_error("diagnose needs at least one sample point");
  } catch (const error& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config;
  }
  const FiniteSumProblem& problem = *rc.problem;
  const auto& known = problem.known_constants();
  const std::optional<SgrParams> safeguard = rc.safeguard ? std::optional<SgrParams>(rc.sgr) : std::nullopt;

  // Random points with empty direction memory, spectral probes, and iterates
  // visited by a seeded run with their frozen memory.
  std::vector<Vector> points = sample_points(problem, dopts.num_points, cfg.run.seed);
  std::vector<std::string> sources(points.size(), "random");
  for (auto& p : detail::spectral_probe_points(problem)) {
    points.push_back(std::move(p));
    sources.emplace_back("probe");
  }
  std::vector<DirectionRule> rules;
  const DirectionState fresh(rc.direction, problem.dimension());
  for (const auto& p : points) rules.push_back(frozen_direction_rule(fresh, p, safeguard));

  std::vector<std::pair<Vector, DirectionState>> visited;
  try {
    const int stride = std::max(1, rc.max_iters / static_cast<int>(dopts.num_points));
    run(rc, [&](int k, const Vector& x, const DirectionState& state) {
      if (k % stride == 0 && visited.size() < dopts.num_points) visited.emplace_back(x, state);
    });
  } catch (const run_error&) {
    // Keep whatever iterates were collected before the failure.
  }
  for (auto& [x, state] : visited) {
    rules.push_back(frozen_direction_rule(state, x, safeguard));
    points.push_back(std::move(x));
    sources.emplace_back("visited");
  }

  try {
    out << "points = " << points.size() << '\n';
    out << "sample_seed = " << cfg.run.seed << '\n';
    const SampledConstant rho = estimate_rho(problem, points);
    out << "rho_hat = " << detail::format_double(rho.value) << '\n';
    // With Var(g) = 0 at every sample, Cov(d, g) = 0 too and c3 = 0 is the smallest valid constant.
    SampledConstant c3;
    try {
      c3 = estimate_c3(problem, points, rules);
      out << "c3_hat = " << detail::format_double(c3.value) << '\n';
      out << "c3_argmax = " << c3.arg << " (" << sources[c3.arg] << ")\n";
    } catch (const undefined_estimator_error&) {
      out << "c3_hat = 0 (gradient variance vanishes at every sample)\n";
    }

    double var_max = 0.0;
    for (std::size_t s = 0; s < points.size(); ++s)
      var_max = std::max(var_max, exact_moments(problem, points[s], rules[s]).var_g);
    out << "var_g_max = " << detail::format_double(var_max) << '\n';

    std::optional<double> mu_hat;
    if (known) {
      mu_hat = estimate_pl(problem, points).value;
      out << "mu_hat = " << detail::format_double(*mu_hat) << '\n';
      if (known->mu) out << "mu_known = " << detail::format_double(*known->mu) << '\n';
      if (known->L) {
        out << "wgc_hat = " << detail::format_double(estimate_wgc(problem, points, *known->L).value) << '\n';
        out << "L_known = " << detail::format_double(*known->L) << '\n';
      }
      if (known->L_max) out << "L_max_known = " << detail::format_double(*known->L_max) << '\n';
    } else {
      out << "mu_hat = n/a (f* unknown)\n";
    }

    TheoremConstants tc;
    tc.c1 = rc.sgr.c1;
    tc.c2 = rc.sgr.c2;
    tc.c3 = c3.value;
    tc.rho = std::max(1.0, rho.value);
    tc.gamma = rc.linesearch.gamma;
    tc.delta = rc.linesearch.delta;
    tc.alpha_max = rc.linesearch.alpha_max;
    out << "sigma = " << detail::format_double(tc.sigma()) << '\n';
    out << "lemma_applicable = " << (tc.lemma_applicable() ? "true" : "false") << '\n';

    std::ofstream samples;
    if (!dopts.samples_csv.empty()) {
      samples.open(dopts.samples_csv, std::ios::binary);
      if (!samples) throw config_error("cannot write '" + dopts.samples_csv + "'");
      samples << "index,source,f,grad_norm,E_norm_g_sq,var_g,cov_dg,norm_slack,descent_slack\n";
    }
    if (tc.lemma_applicable()) {
      double norm_slack = std::numeric_limits<double>::infinity();
      double descent_slack = std::numeric_limits<double>::infinity();
      bool all_ok = true;
      for (std::size_t s = 0; s < points.size(); ++s) {
        const LemmaCheck lc = verify_lemma_bounds(problem, points[s], rules[s], tc);
        norm_slack = std::min(norm_slack, lc.norm_slack);
        descent_slack = std::min(descent_slack, lc.descent_slack);
        all_ok = all_ok && lc.norm_ok && lc.descent_ok;
        if (samples) {
          const MomentReport m = exact_moments(problem, points[s], rules[s]);
          const Evaluation full = full_oracle(problem, points[s]);
          samples << s << ',' << sources[s] << ',' << detail::format_double(full.value) << ','
                  << detail::format_double(full.gradient.norm()) << ',' << detail::format_double(m.E_norm_g_sq)
                  << ',' << detail::format_double(m.var_g) << ',' << detail::format_double(m.cov_dg) << ','
                  << detail::format_double(lc.norm_slack) << ',' << detail::format_double(lc.descent_slack) << '\n';
        }
      }
      out << "lemma_norm_slack_min = " << detail::format_double(norm_slack) << '\n';
      out << "lemma_descent_slack_min = " << detail::format_double(descent_slack) << '\n';
      out << "lemma_bounds_hold = " << (all_ok ? "true" : "false") << '\n';
    }

    if (known && known->L_max && known->mu) {
      tc.mu = *known->mu;
      tc.L = known->L.value_or(*known->L_max);
      tc.L_max = *known->L_max;
      const EtaReport eta = compute_eta(tc);
      out << "eta = " << detail::format_double(eta.eta) << '\n';
      out << "eta_alpha_max = " << detail::format_double(eta.certified_rate) << '\n';
      out << "eta_in_range = " << (eta.rate_in_range ? "true" : "false") << '\n';
      out << "initial_step_floor = " << (eta.initial_step_floor ? "true" : "false") << '\n';
      out << "linear_rate_applicable = " << (eta.applicable() ? "true" : "false") << '\n';
    } else {
      out << "eta = n/a (needs analytic L_max and mu)\n";
    }
  } catch (const undefined_estimator_error& e) {
    err << "undefined estimator: " << e.what() << '\n';
    return exit_code::undefined_estimator;
  } catch (const unsupported_problem_error& e) {
    err << "unsupported: " << e.what() << '\n';
    return exit_code::undefined_estimator;
  } catch (const precondition_error& e) {
    err << "precondition: " << e.what() << '\n';
    return exit_code::undefined_estimator;
  } catch (const error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::config;
  }
  return exit_code::ok;
}

struct SweepOptions {
  std::uint64_t first_seed = 0;
  std::uint64_t last_seed = 0;
  unsigned jobs = 0;  ///< 0: hardware concurrency
};

/// Parses `a..b` (inclusive).
inline std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) throw config_error("seed range must look like a..b, got '" + text + "'");
  const auto a = detail::parse_seed("seeds", text.substr(0, dots));
  const auto b = detail::parse_seed("seeds", text.substr(dots + 2));
  if (b < a) throw config_error("seed range is empty");
  return {a, b};
}

/// `sweep`: the same config over a seed range, runs in parallel; one CSV (and
/// SVG) per seed with `.seed<S>` inserted before the extension.
inline int cmd_sweep(const CommandOptions& opts, const SweepOptions& sopts, std::ostream& out = std::cout,
                     std::ostream& err = std::cerr) {
  ExperimentConfig base;
  ProblemPtr problem;
  try {
    base = resolve_config(opts);
    problem = to_run_config(base).problem;
  } catch (const error& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config;
  }

  struct SeedOutcome {
    std::uint64_t seed = 0;
    std::optional<RunResult> result;
    std::string failure;
  };
  auto one = [&](std::uint64_t seed) {
    SeedOutcome o;
    o.seed = seed;
    ExperimentConfig cfg = base;
    cfg.run.seed = seed;
    try {
      RunResult r = run(to_run_config(cfg, problem));
      detail::write_outputs(cfg, *problem, r,
                            cfg.run.out_csv.empty() ? "" : detail::with_seed_suffix(cfg.run.out_csv, seed),
                            cfg.run.out_svg.empty() ? "" : detail::with_seed_suffix(cfg.run.out_svg, seed));
      o.result = std::move(r);
    } catch (const error& e) {
      o.failure = e.what();
    }
    return o;
  };

  const unsigned jobs = sopts.jobs ? sopts.jobs : std::max(1u, std::thread::hardware_concurrency());
  std::vector<SeedOutcome> outcomes;
  std::vector<std::future<SeedOutcome>> pending;
  for (std::uint64_t s = sopts.first_seed; s <= sopts.last_seed; ++s) {
    pending.push_back(std::async(std::launch::async, one, s));
    if (pending.size() >= jobs) {
      for (auto& f : pending) outcomes.push_back(f.get());
      pending.clear();
    }
    if (s == std::numeric_limits<std::uint64_t>::max()) break;
  }
  for (auto& f : pending) outcomes.push_back(f.get());

  const auto& known = problem->known_constants();
  int code = exit_code::ok;
  out << "seed,status,iterations,final_gap,stochastic_f_evals\n";
  for (const auto& o : outcomes) {
    if (!o.result) {
      out << o.seed << ",error,,," << '\n';
      err << "seed " << o.seed << ": " << o.failure << '\n';
      code = std::max(code, exit_code::stalled);
      continue;
    }
    const RunResult& r = *o.result;
    out << o.seed << ',' << to_string(r.status) << ',' << r.iterations() << ','
        << detail::format_double(r.final_f - (known ? known->f_star : 0.0)) << ',' << r.total_f_evals << '\n';
    code = std::max(code, status_exit_code(r.status));
  }
  return code;
}

}  // namespace sls
