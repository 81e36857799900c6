#pragma once

/// \file linesearch.hpp
///
/// Monotone backtracking on the drawn batch function f_k:
///
///     alpha_k = max_j { alpha0 delta^j : f_k(x + alpha0 delta^j d) <= f_k(x) + gamma alpha0 delta^j d'g }
///
/// plus the guaranteed-acceptance threshold alpha_low and the worst-case
/// backtrack count j*.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "problems.hpp"

namespace sls {

enum class Alpha0Policy {
  constant,       ///< always alpha_max
  warm_increase,  ///< min(alpha_max, previous alpha / delta^p)
};

struct LineSearchParams {
  double gamma = 0.1;
  double delta = 0.5;
  double alpha_max = 10.0;
  Alpha0Policy alpha0_policy = Alpha0Policy::constant;
  int warm_power = 1;  ///< p of warm_increase
  int max_backtracks = 60;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw config_error("linesearch.gamma must lie in (0, 1)");
    if (!(delta > 0.0 && delta < 1.0)) throw config_error("linesearch.delta must lie in (0, 1)");
    if (!(alpha_max > 0.0) || !std::isfinite(alpha_max)) throw config_error("linesearch.alpha_max must be > 0");
    if (max_backtracks < 1) throw config_error("linesearch.max_backtracks must be >= 1");
    if (alpha0_policy == Alpha0Policy::warm_increase && warm_power < 1)
      throw config_error("linesearch.warm_power must be >= 1");
  }

  friend bool operator==(const LineSearchParams&, const LineSearchParams&) = default;
};

struct LineSearchResult {
  double alpha = 0.0;     ///< accepted step, equal to alpha0 * pow(delta, backtracks)
  int backtracks = 0;     ///< j_k
  int f_trial_count = 0;  ///< backtracks + 1
  double accepted_f = 0.0;
  double alpha0 = 0.0;
  int nonfinite_trials = 0;
};

/// Trial step for backtrack index j. Every consumer uses this expression so
/// that alpha == step_at(alpha0, delta, j) holds bit for bit.
inline double step_at(double alpha0, double delta, int j) { return alpha0 * std::pow(delta, j); }

/// Thrown when max_backtracks is exhausted; carries the rejected trials.
class stall_error : public error {
 public:
  stall_error(const std::string& what, std::vector<std::pair<double, double>> trials)
      : error(what), trials_(std::move(trials)) {}

  /// (alpha, f_k(x + alpha d)) for every rejected trial.
  [[nodiscard]] const std::vector<std::pair<double, double>>& trials() const { return trials_; }

 private:
  std::vector<std::pair<double, double>> trials_;
};

/// Sufficient-decrease test with one oracle call at x + alpha d. Non-finite
/// trial values fail the test. `f_trial`, when given, receives the trial value.
template <typename BatchOracle>
bool armijo_holds(BatchOracle&& f_batch, const Vector& x, const Vector& d, const Vector& g, double alpha,
                  double gamma, double f_x, double* f_trial = nullptr) {
  const Vector trial_point = x + alpha * d;
  const double value = f_batch(trial_point);
  if (f_trial != nullptr) *f_trial = value;
  if (!std::isfinite(value)) return false;
  return value <= f_x + gamma * alpha * d.dot(g);
}

/// Largest alpha0 * delta^j (j = 0, 1, ...) passing the Armijo test.
template <typename BatchOracle>
LineSearchResult backtrack(BatchOracle&& f_batch, const Vector& x, const Vector& d, const Vector& g,
                           const LineSearchParams& params, double alpha0, double f_x) {
  if (d.size() != x.size() || g.size() != x.size()) throw shape_error("line search with inconsistent dimensions");
  const double slope = d.dot(g);
  if (!(slope < 0.0))
    throw non_descent_error("line search needs d'g < 0, got " + std::to_string(slope));
  if (!(alpha0 > 0.0) || alpha0 > params.alpha_max)
    throw numeric_domain_error("initial step must lie in (0, alpha_max]");

  LineSearchResult out;
  out.alpha0 = alpha0;
  std::vector<std::pair<double, double>> rejected;
  for (int j = 0; j <= params.max_backtracks; ++j) {
    const double alpha = step_at(alpha0, params.delta, j);
    double f_trial = 0.0;
    ++out.f_trial_count;
    if (armijo_holds(f_batch, x, d, g, alpha, params.gamma, f_x, &f_trial)) {
      out.alpha = alpha;
      out.backtracks = j;
      out.accepted_f = f_trial;
      return out;
    }
    if (!std::isfinite(f_trial)) ++out.nonfinite_trials;
    rejected.emplace_back(alpha, f_trial);
  }
  throw stall_error("line search stalled after " + std::to_string(params.max_backtracks) + " backtracks",
                    std::move(rejected));
}

/// Every alpha in [0, alpha_low] passes the Armijo test for an L_k-smooth
/// batch function and an SGR direction with constants (c1, c2).
inline double alpha_low(double c1, double c2, double gamma, double L_k) {
  if (!(c1 > 0.0) || !(c2 > 0.0) || !(L_k > 0.0)) throw numeric_domain_error("alpha_low needs c1, c2, L_k > 0");
  if (!(gamma > 0.0 && gamma < 1.0)) throw numeric_domain_error("alpha_low needs gamma in (0, 1)");
  return 2.0 * c2 * (1.0 - gamma) / (c1 * c1 * L_k);
}

/// Worst-case backtrack count: the smallest j >= 0 with alpha_max delta^j <= alpha_low,
/// i.e. max{0, ceil(log_{1/delta}(alpha_max / alpha_low))}.
inline int jstar(double alpha_max, double alpha_low_value, double delta) {
  if (!(alpha_max > 0.0) || !(alpha_low_value > 0.0)) throw numeric_domain_error("jstar needs positive steps");
  if (!(delta > 0.0 && delta < 1.0)) throw numeric_domain_error("jstar needs delta in (0, 1)");
  if (alpha_max <= alpha_low_value) return 0;
  // The log estimate can land one off when the ratio is an exact power of
  // 1/delta; settle it against the defining inequality.
  const double estimate = std::ceil(std::log(alpha_max / alpha_low_value) / std::log(1.0 / delta));
  int j = std::max(0, static_cast<int>(estimate) - 1);
  while (step_at(alpha_max, delta, j) > alpha_low_value) ++j;
  while (j > 0 && step_at(alpha_max, delta, j - 1) <= alpha_low_value) --j;
  return j;
}

/// Initial trial step for the next iteration; always in (0, alpha_max].
inline double next_alpha0(const LineSearchParams& params, const std::optional<LineSearchResult>& prev) {
  if (params.alpha0_policy == Alpha0Policy::constant || !prev || !(prev->alpha > 0.0)) return params.alpha_max;
  return std::min(params.alpha_max, prev->alpha / std::pow(params.delta, params.warm_power));
}

}  // namespace sls
