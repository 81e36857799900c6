#pragma once

/// \file optimizer.hpp
///
/// The outer loop x_{k+1} = x_k + alpha_k d_k: draw a batch, form the
/// (safeguarded) direction, backtrack on the batch function, step, trace.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "directions.hpp"
#include "errors.hpp"
#include "linesearch.hpp"
#include "problems.hpp"
#include "random.hpp"

namespace sls {

enum class RunStatus { converged_grad, converged_fgap, max_iters, stalled };

inline std::string to_string(RunStatus status) {
  switch (status) {
    case RunStatus::converged_grad: return "converged_grad";
    case RunStatus::converged_fgap: return "converged_fgap";
    case RunStatus::max_iters: return "max_iters";
    case RunStatus::stalled: return "stalled";
  }
  return "unknown";
}

struct RunConfig {
  ProblemPtr problem;
  DirectionKind direction = Sgd{};
  bool safeguard = true;
  LineSearchParams linesearch;
  SgrParams sgr;
  std::size_t batch_size = 1;
  int max_iters = 5000;
  double grad_tol = 1e-10;
  double fgap_tol = 1e-8;  ///< only used when f* is known
  std::uint64_t seed = 0;
  int trace_every = 10;    ///< period of exact f / grad f logging
  std::optional<Vector> x0;

  void validate() const {
    if (!problem) throw config_error("run config has no problem");
    if (max_iters < 1) throw config_error("run.max_iters must be >= 1");
    if (!(grad_tol >= 0.0) || !(fgap_tol >= 0.0)) throw config_error("tolerances must be >= 0");
    if (trace_every < 1) throw config_error("run.trace_every must be >= 1");
    if (batch_size < 1) throw config_error("run.batch_size must be >= 1");
    if (x0 && x0->size() != problem->dimension()) throw config_error("run.x0 has the wrong dimension");
    linesearch.validate();
    validate_kind(direction);
    if (safeguard) sgr.require_satisfiable();
    else sgr.validate();
  }
};

struct IterationRecord {
  int k = 0;
  std::optional<double> f_full;          ///< f(x_k), when logged this iteration
  std::optional<double> grad_full_norm;  ///< ||grad f(x_k)||, when logged
  double f_batch = 0.0;                  ///< f_k(x_k)
  double g_batch_norm = 0.0;
  double g_batch_sq_norm = 0.0;  ///< ||g||^2 as used by the SGR test (not in the CSV)
  double d_norm = 0.0;
  double dTg = 0.0;
  double alpha0 = 0.0;
  double alpha = 0.0;  ///< 0 when the batch gradient vanished and no step was taken
  int backtracks = 0;
  bool sgr_pass = true;
  bool restarted = false;
  double f_batch_new = 0.0;  ///< f_k(x_{k+1}), reused from the accepted trial
  int f_evals = 0;           ///< stochastic f evaluations spent in this iteration
  std::vector<std::size_t> batch_indices;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct RunResult {
  std::vector<IterationRecord> trajectory;
  Vector x0;
  Vector final_x;
  RunStatus status = RunStatus::max_iters;
  double final_f = 0.0;          ///< f at final_x
  double final_grad_norm = 0.0;  ///< ||grad f|| at final_x
  long long total_f_evals = 0;
  std::string message;

  [[nodiscard]] int iterations() const { return static_cast<int>(trajectory.size()); }
};

/// Raised when a run cannot continue for a reason other than a stall; carries
/// the partial result.
class run_error : public error {
 public:
  run_error(const std::string& what, RunResult partial) : error(what), partial_(std::move(partial)) {}
  [[nodiscard]] const RunResult& partial() const { return partial_; }

 private:
  RunResult partial_;
};

/// Called once per iteration before the direction is formed, with the
/// iterate and the direction memory that iteration will see.
using IterationObserver = std::function<void(int k, const Vector& x, const DirectionState& state)>;

/// Standard-normal entries scaled by 1/sqrt(n), from the run seed.
inline Vector default_initial_point(Eigen::Index n, std::uint64_t seed) {
  SplitMix64 rng = SplitMix64(seed).split(streams::initial_point);
  return gaussian_vector(n, rng, 1.0 / std::sqrt(static_cast<double>(n)));
}

inline RunResult run(const RunConfig& config, const IterationObserver& observer = {}) {
  config.validate();
  const FiniteSumProblem& problem = *config.problem;
  const auto& known = problem.known_constants();

  RunResult result;
  result.x0 = config.x0 ? *config.x0 : default_initial_point(problem.dimension(), config.seed);
  Vector x = result.x0;

  BatchSampler sampler(problem.num_components(),
                       config.batch_size == 1 ? SamplingMode::singleton_enumerable : SamplingMode::with_replacement,
                       config.batch_size, config.seed);
  DirectionGenerator directions(config.direction, problem.dimension(), config.sgr, config.safeguard);
  std::optional<LineSearchResult> previous;
  std::optional<Evaluation> last_full;

  auto converged = [&](const Evaluation& full) -> std::optional<RunStatus> {
    if (full.gradient.norm() <= config.grad_tol) return RunStatus::converged_grad;
    if (known && full.value - known->f_star <= config.fgap_tol) return RunStatus::converged_fgap;
    return std::nullopt;
  };

  for (int k = 0;; ++k) {
    IterationRecord rec;
    rec.k = k;
    last_full.reset();
    if (k % config.trace_every == 0 || k == config.max_iters) {
      try {
        last_full = full_oracle(problem, x);
      } catch (const numeric_domain_error& e) {
        result.final_x = x;
        throw run_error("iteration " + std::to_string(k) + ": iterate diverged: " + e.what(), std::move(result));
      }
      if (auto status = converged(*last_full)) {
        result.status = *status;
        break;
      }
      rec.f_full = last_full->value;
      rec.grad_full_norm = last_full->gradient.norm();
    }
    if (k == config.max_iters) {
      result.status = RunStatus::max_iters;
      break;
    }

    if (observer) observer(k, x, directions.state());
    const Batch batch = sampler.next();
    rec.batch_indices = batch.indices;
    Evaluation eval;
    try {
      eval = evaluate_batch(problem, batch, x);
    } catch (const numeric_domain_error& e) {
      result.final_x = x;
      throw run_error("iteration " + std::to_string(k) + ": " + e.what(), std::move(result));
    }
    const Vector& g = eval.gradient;
    rec.f_batch = eval.value;
    rec.g_batch_norm = g.norm();
    rec.g_batch_sq_norm = g.squaredNorm();

    const DirectionOutcome dir = directions.next(g, x);
    rec.d_norm = dir.d.norm();
    rec.dTg = dir.d.dot(g);
    rec.sgr_pass = dir.sgr_pass;
    rec.restarted = dir.restarted;
    rec.alpha0 = next_alpha0(config.linesearch, previous);
    rec.f_evals = 1;

    if (rec.g_batch_norm == 0.0 && rec.d_norm == 0.0) {
      // Stationary for the drawn batch (the safeguard forces d = 0 there): no step.
      rec.f_batch_new = rec.f_batch;
      directions.accept(x, x, g, dir.d);
      result.trajectory.push_back(std::move(rec));
      continue;
    }

    auto oracle = [&](const Vector& p) { return batch_value(problem, batch, p); };
    LineSearchResult ls;
    try {
      ls = backtrack(oracle, x, dir.d, g, config.linesearch, rec.alpha0, rec.f_batch);
    } catch (const stall_error& e) {
      result.status = RunStatus::stalled;
      result.message = "iteration " + std::to_string(k) + ": " + e.what();
      result.total_f_evals += 1 + static_cast<long long>(e.trials().size());
      break;
    } catch (const non_descent_error& e) {
      result.final_x = x;
      throw run_error("iteration " + std::to_string(k) + ": " + e.what(), std::move(result));
    }
    rec.alpha = ls.alpha;
    rec.backtracks = ls.backtracks;
    rec.f_batch_new = ls.accepted_f;
    rec.f_evals += ls.f_trial_count;

    Vector x_new = x + ls.alpha * dir.d;
    directions.accept(x_new, x, g, dir.d);
    x = std::move(x_new);
    previous = ls;
    result.trajectory.push_back(std::move(rec));
  }

  for (const auto& rec : result.trajectory) result.total_f_evals += rec.f_evals;
  result.final_x = x;
  Evaluation final_eval;
  try {
    final_eval = last_full ? *last_full : full_oracle(problem, x);
  } catch (const numeric_domain_error& e) {
    throw run_error(result.message.empty() ? std::string("iterate diverged: ") + e.what()
                                           : result.message + "; iterate diverged: " + e.what(),
                    std::move(result));
  }
  result.final_f = final_eval.value;
  result.final_grad_norm = final_eval.gradient.norm();
  return result;
}

// ---------------------------------------------------------------------------

struct ContractionEstimate {
  double per_iter_rate = 1.0;  ///< exp(slope of log gap vs k)
  double r_squared = 1.0;
  std::size_t samples = 0;
};

/// Least-squares fit of log(gap) against k. Needs at least 10 positive gaps.
inline ContractionEstimate fit_log_linear(const std::vector<std::pair<double, double>>& k_gap) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& [k, gap] : k_gap)
    if (gap > 0.0 && std::isfinite(gap)) pts.emplace_back(k, std::log(gap));
  if (pts.size() < 10)
    throw insufficient_data_error("contraction fit needs >= 10 positive gap samples, got " +
                                  std::to_string(pts.size()));
  const double m = static_cast<double>(pts.size());
  double mk = 0.0, my = 0.0;
  for (const auto& [k, y] : pts) {
    mk += k;
    my += y;
  }
  mk /= m;
  my /= m;
  double skk = 0.0, sky = 0.0, syy = 0.0;
  for (const auto& [k, y] : pts) {
    skk += (k - mk) * (k - mk);
    sky += (k - mk) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (skk == 0.0) throw insufficient_data_error("contraction fit needs distinct iteration indices");
  const double slope = sky / skk;
  double ss_res = 0.0;
  for (const auto& [k, y] : pts) {
    const double e = y - (my + slope * (k - mk));
    ss_res += e * e;
  }
  ContractionEstimate out;
  out.per_iter_rate = std::exp(slope);
  out.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  out.samples = pts.size();
  return out;
}

/// Geometric rate of f(x_k) - f* over the logged full-oracle samples.
inline ContractionEstimate contraction_estimate(const std::vector<IterationRecord>& trajectory, double f_star) {
  std::vector<std::pair<double, double>> k_gap;
  for (const auto& rec : trajectory)
    if (rec.f_full) k_gap.emplace_back(static_cast<double>(rec.k), *rec.f_full - f_star);
  return fit_log_linear(k_gap);
}

}  // namespace sls
