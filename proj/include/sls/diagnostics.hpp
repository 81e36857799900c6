#pragma once

/// \file diagnostics.hpp
///
/// Conditional moments of the stochastic gradient g and of a direction rule d
/// at a fixed point x, computed exactly by enumerating the N singleton batches
/// (or estimated by Monte Carlo for larger batches), and the sampled constants
/// built from them: growth constants (SGC rho, WGC), PL mu, the covariance
/// constant c3, the expected-direction bounds, and the linear-rate constant eta.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "directions.hpp"
#include "errors.hpp"
#include "linesearch.hpp"
#include "problems.hpp"
#include "random.hpp"

namespace sls {

/// Maps a drawn batch (component index for singletons, or the batch itself)
/// and its gradient to a direction. Must be deterministic: optimizer memory is
/// frozen at the point where moments are taken.
using DirectionRule = std::function<Vector(const Batch& batch, const Vector& g)>;

inline DirectionRule negative_gradient_rule() {
  return [](const Batch&, const Vector& g) -> Vector { return -g; };
}

/// Direction rule from a frozen copy of the optimizer's direction memory at x.
inline DirectionRule frozen_direction_rule(const DirectionState& state, const Vector& x,
                                           std::optional<SgrParams> safeguard) {
  return [state, x, safeguard](const Batch&, const Vector& g) -> Vector {
    DirectionState copy = state;
    if (safeguard) return safeguarded_direction(copy, g, x, *safeguard).d;
    return propose_direction(copy, g, x);
  };
}

enum class MomentMode { exact_singleton_enumeration, monte_carlo };

struct MomentReport {
  Vector x;
  Vector E_g;
  double E_norm_g_sq = 0.0;
  double var_g = 0.0;  ///< E||g - E g||^2, computed from centered samples
  Vector E_d;
  double E_dTg = 0.0;
  double cov_dg = 0.0;  ///< E[(d - E d)'(g - E g)], computed from centered samples
  MomentMode mode = MomentMode::exact_singleton_enumeration;
  std::size_t samples = 0;
  // Standard errors of the sample means (Monte Carlo only; zero when exact).
  Vector se_E_g;
  double se_E_norm_g_sq = 0.0;
  double se_E_dTg = 0.0;
};

namespace detail {

/// Two-pass moments over equally weighted draws.
inline MomentReport moments_from_draws(const Vector& x, const std::vector<Vector>& gs, const std::vector<Vector>& ds,
                                       MomentMode mode) {
  const double m = static_cast<double>(gs.size());
  const Eigen::Index n = x.size();
  MomentReport out;
  out.x = x;
  out.mode = mode;
  out.samples = gs.size();
  out.E_g = Vector::Zero(n);
  out.E_d = Vector::Zero(n);
  for (std::size_t s = 0; s < gs.size(); ++s) {
    out.E_g += gs[s];
    out.E_d += ds[s];
    out.E_norm_g_sq += gs[s].squaredNorm();
    out.E_dTg += ds[s].dot(gs[s]);
  }
  out.E_g /= m;
  out.E_d /= m;
  out.E_norm_g_sq /= m;
  out.E_dTg /= m;
  for (std::size_t s = 0; s < gs.size(); ++s) {
    const Vector cg = gs[s] - out.E_g;
    out.var_g += cg.squaredNorm();
    out.cov_dg += (ds[s] - out.E_d).dot(cg);
  }
  out.var_g /= m;
  out.cov_dg /= m;
  out.se_E_g = Vector::Zero(n);
  if (mode == MomentMode::monte_carlo && gs.size() > 1) {
    Vector sq = Vector::Zero(n);
    double var_norm = 0.0, var_dtg = 0.0;
    for (std::size_t s = 0; s < gs.size(); ++s) {
      sq.array() += (gs[s] - out.E_g).array().square();
      const double a = gs[s].squaredNorm() - out.E_norm_g_sq;
      const double b = ds[s].dot(gs[s]) - out.E_dTg;
      var_norm += a * a;
      var_dtg += b * b;
    }
    out.se_E_g = (sq.array() / ((m - 1.0) * m)).sqrt().matrix();
    out.se_E_norm_g_sq = std::sqrt(var_norm / ((m - 1.0) * m));
    out.se_E_dTg = std::sqrt(var_dtg / ((m - 1.0) * m));
  }
  return out;
}

}  // namespace detail

/// Exact conditional moments: uniform average over the N singleton batches.
inline MomentReport exact_moments(const FiniteSumProblem& problem, const Vector& x, const DirectionRule& rule) {
  const auto batches = BatchSampler::enumerate_singletons(problem.num_components());
  std::vector<Vector> gs, ds;
  gs.reserve(batches.size());
  ds.reserve(batches.size());
  for (const Batch& batch : batches) {
    gs.push_back(evaluate_batch(problem, batch, x).gradient);
    ds.push_back(rule(batch, gs.back()));
    if (ds.back().size() != x.size()) throw shape_error("direction rule returned the wrong dimension");
  }
  return detail::moments_from_draws(x, gs, ds, MomentMode::exact_singleton_enumeration);
}

/// Monte Carlo moments from `samples` batches of size `batch_size`.
inline MomentReport monte_carlo_moments(const FiniteSumProblem& problem, const Vector& x, const DirectionRule& rule,
                                        std::size_t samples, std::size_t batch_size, std::uint64_t seed) {
  if (samples < 2) throw insufficient_data_error("Monte Carlo moments need >= 2 samples");
  BatchSampler sampler(problem.num_components(), SamplingMode::with_replacement, batch_size, seed);
  std::vector<Vector> gs, ds;
  gs.reserve(samples);
  ds.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    const Batch batch = sampler.next();
    gs.push_back(evaluate_batch(problem, batch, x).gradient);
    ds.push_back(rule(batch, gs.back()));
  }
  return detail::moments_from_draws(x, gs, ds, MomentMode::monte_carlo);
}

/// A sampled extremum and where it was attained.
struct SampledConstant {
  double value = 0.0;
  std::size_t arg = 0;    ///< index into the sample list
  std::size_t used = 0;   ///< samples that passed the admissibility guard
};

/// Smallest c3 with Cov(d, g) >= -c3 Var(g) on every sample with Var(g) > 0.
/// `rules[s]` is the direction rule at `points[s]` (or a single rule for all).
inline SampledConstant estimate_c3(const FiniteSumProblem& problem, const std::vector<Vector>& points,
                                   const std::vector<DirectionRule>& rules) {
  if (rules.size() != 1 && rules.size() != points.size())
    throw shape_error("estimate_c3 needs one rule or one rule per point");
  SampledConstant out;
  bool any = false;
  for (std::size_t s = 0; s < points.size(); ++s) {
    const MomentReport m = exact_moments(problem, points[s], rules.size() == 1 ? rules[0] : rules[s]);
    if (!(m.var_g > 0.0)) continue;
    ++out.used;
    const double ratio = std::max(0.0, -m.cov_dg) / m.var_g;
    if (!any || ratio > out.value) {
      out.value = ratio;
      out.arg = s;
      any = true;
    }
  }
  if (!any) throw undefined_estimator_error("c3 undefined: gradient variance vanishes at every sample");
  return out;
}

inline SampledConstant estimate_c3(const FiniteSumProblem& problem, const std::vector<Vector>& points,
                                   const DirectionRule& rule) {
  return estimate_c3(problem, points, std::vector<DirectionRule>{rule});
}

/// Strong growth constant: max over samples of E||g||^2 / ||grad f||^2.
inline SampledConstant estimate_rho(const FiniteSumProblem& problem, const std::vector<Vector>& points,
                                    double grad_tol = 1e-10) {
  SampledConstant out;
  bool any = false;
  for (std::size_t s = 0; s < points.size(); ++s) {
    const Evaluation full = full_oracle(problem, points[s]);
    const double gn = full.gradient.norm();
    if (!(gn > grad_tol)) continue;
    const MomentReport m = exact_moments(problem, points[s], negative_gradient_rule());
    const double ratio = m.E_norm_g_sq / full.gradient.squaredNorm();
    if (ratio < 1.0 - 1e-9)
      throw numeric_domain_error("growth ratio " + std::to_string(ratio) + " below 1 violates Jensen's inequality");
    ++out.used;
    if (!any || ratio > out.value) {
      out.value = ratio;
      out.arg = s;
      any = true;
    }
  }
  if (!any) throw undefined_estimator_error("rho undefined: no sample with ||grad f|| > tol");
  return out;
}

namespace detail {

inline double require_f_star(const FiniteSumProblem& problem, const char* who) {
  const auto& known = problem.known_constants();
  if (!known) throw unsupported_problem_error(std::string(who) + " needs a problem with known f*");
  return known->f_star;
}

}  // namespace detail

/// Weak growth constant: max over samples of E||g||^2 / (2 L (f - f*)).
inline SampledConstant estimate_wgc(const FiniteSumProblem& problem, const std::vector<Vector>& points, double L,
                                    double gap_tol = 1e-12) {
  const double f_star = detail::require_f_star(problem, "estimate_wgc");
  if (!(L > 0.0)) throw numeric_domain_error("estimate_wgc needs L > 0");
  SampledConstant out;
  bool any = false;
  for (std::size_t s = 0; s < points.size(); ++s) {
    const double gap = full_oracle(problem, points[s]).value - f_star;
    if (!(gap > gap_tol)) continue;
    const MomentReport m = exact_moments(problem, points[s], negative_gradient_rule());
    const double ratio = m.E_norm_g_sq / (2.0 * L * gap);
    ++out.used;
    if (!any || ratio > out.value) {
      out.value = ratio;
      out.arg = s;
      any = true;
    }
  }
  if (!any) throw undefined_estimator_error("WGC constant undefined: no sample with f - f* > tol");
  return out;
}

/// Largest mu with 2 mu (f - f*) <= ||grad f||^2 on every sample.
inline SampledConstant estimate_pl(const FiniteSumProblem& problem, const std::vector<Vector>& points,
                                   double gap_tol = 1e-12) {
  const double f_star = detail::require_f_star(problem, "estimate_pl");
  SampledConstant out;
  bool any = false;
  for (std::size_t s = 0; s < points.size(); ++s) {
    const Evaluation full = full_oracle(problem, points[s]);
    const double gap = full.value - f_star;
    if (!(gap > gap_tol)) continue;
    const double ratio = full.gradient.squaredNorm() / (2.0 * gap);
    ++out.used;
    if (!any || ratio < out.value) {
      out.value = ratio;
      out.arg = s;
      any = true;
    }
  }
  if (!any) throw undefined_estimator_error("PL constant undefined: no sample with f - f* > tol");
  return out;
}

// ---------------------------------------------------------------------------

struct TheoremConstants {
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 0.0;
  double rho = 1.0;
  double mu = 0.0;
  double L = 0.0;
  double L_max = 0.0;
  double gamma = 0.1;
  double delta = 0.5;
  double alpha_max = 10.0;

  /// c2 - c3 (1 - 1/rho): the descent coefficient of the expected direction.
  [[nodiscard]] double sigma() const { return c2 - c3 * (1.0 - 1.0 / rho); }

  /// The expected-direction bounds need c2 > c3 (1 - 1/rho).
  [[nodiscard]] bool lemma_applicable() const { return sigma() > 0.0; }
};

struct LemmaCheck {
  bool norm_ok = false;
  bool descent_ok = false;
  double norm_slack = 0.0;     ///< c1 sqrt(rho) ||grad f|| - ||E d||
  double descent_slack = 0.0;  ///< -sigma ||grad f||^2 - E[d]' grad f
};

/// Checks ||E d|| <= c1 sqrt(rho) ||grad f|| and E[d]' grad f <= -sigma ||grad f||^2
/// with exact enumeration moments at x.
inline LemmaCheck verify_lemma_bounds(const FiniteSumProblem& problem, const Vector& x, const DirectionRule& rule,
                                      const TheoremConstants& constants) {
  if (!(constants.rho >= 1.0)) throw precondition_error("SGC constant rho must be >= 1");
  if (!constants.lemma_applicable())
    throw precondition_error("expected-direction bounds need c2 > c3 (1 - 1/rho); got c2=" +
                             std::to_string(constants.c2) + ", c3 (1 - 1/rho)=" +
                             std::to_string(constants.c3 * (1.0 - 1.0 / constants.rho)));
  const MomentReport m = exact_moments(problem, x, rule);
  const Vector grad = full_oracle(problem, x).gradient;
  const double gn = grad.norm();
  LemmaCheck out;
  const double norm_lhs = m.E_d.norm();
  const double norm_rhs = constants.c1 * std::sqrt(constants.rho) * gn;
  const double descent_lhs = m.E_d.dot(grad);
  const double descent_rhs = -constants.sigma() * gn * gn;
  out.norm_slack = norm_rhs - norm_lhs;
  out.descent_slack = descent_rhs - descent_lhs;
  // Round-off allowance relative to the magnitudes compared.
  out.norm_ok = out.norm_slack >= -1e-12 * (std::abs(norm_lhs) + std::abs(norm_rhs));
  out.descent_ok = out.descent_slack >= -1e-12 * (std::abs(descent_lhs) + std::abs(descent_rhs));
  return out;
}

struct EtaReport {
  double eta = 0.0;
  double sigma = 0.0;
  double certified_rate = 0.0;    ///< eta * alpha_max
  bool rate_in_range = false;     ///< 0 < eta < 1 / alpha_max
  bool lemma_applicable = false;  ///< c2 > c3 (1 - 1/rho)
  /// alpha_max >= delta alpha_low(L_max): with the constant initial-step policy
  /// this is the required floor delta alpha_low <= alpha0.
  bool initial_step_floor = false;

  [[nodiscard]] bool applicable() const { return rate_in_range && lemma_applicable && initial_step_floor; }
};

/// eta = (L_max c1^2 / (2 c2)) (1/gamma + 1/(delta (1 - gamma))) - 2 (c2 - c3 (1 - 1/rho)) mu.
inline EtaReport compute_eta(const TheoremConstants& c) {
  if (!(c.gamma > 0.0 && c.gamma < 1.0)) throw numeric_domain_error("eta needs gamma in (0, 1)");
  if (!(c.delta > 0.0 && c.delta < 1.0)) throw numeric_domain_error("eta needs delta in (0, 1)");
  if (!(c.c1 > 0.0) || !(c.c2 > 0.0) || !(c.L_max > 0.0) || !(c.alpha_max > 0.0) || !(c.rho > 0.0) ||
      c.c3 < 0.0 || c.mu < 0.0)
    throw numeric_domain_error("eta needs c1, c2, L_max, alpha_max, rho > 0 and c3, mu >= 0");
  EtaReport out;
  out.sigma = c.sigma();
  out.eta = (c.L_max * c.c1 * c.c1 / (2.0 * c.c2)) * (1.0 / c.gamma + 1.0 / (c.delta * (1.0 - c.gamma))) -
            2.0 * out.sigma * c.mu;
  out.certified_rate = out.eta * c.alpha_max;
  out.rate_in_range = out.eta > 0.0 && out.eta < 1.0 / c.alpha_max;
  out.lemma_applicable = c.lemma_applicable();
  out.initial_step_floor = c.alpha_max >= c.delta * alpha_low(c.c1, c.c2, c.gamma, c.L_max);
  return out;
}

struct InterpolationCheck {
  bool holds = false;
  std::size_t worst_i = 0;
  double worst_norm = 0.0;
};

/// Whether every component is stationary at x_star: max_i ||grad f_i(x_star)|| <= tol.
inline InterpolationCheck check_interpolation(const FiniteSumProblem& problem, const Vector& x_star, double tol) {
  InterpolationCheck out;
  for (std::size_t i = 0; i < problem.num_components(); ++i) {
    const double gn = component_evaluation(problem, i, x_star).gradient.norm();
    if (i == 0 || gn > out.worst_norm) {
      out.worst_norm = gn;
      out.worst_i = i;
    }
  }
  out.holds = out.worst_norm <= tol;
  return out;
}

/// Seeded sample points: x* + scale * N(0, I/n) when x* is known, otherwise
/// N(0, I/n) scaled.
inline std::vector<Vector> sample_points(const FiniteSumProblem& problem, std::size_t count, std::uint64_t seed,
                                         double scale = 1.0) {
  SplitMix64 rng = SplitMix64(seed).split(streams::diagnostic_points);
  const Eigen::Index n = problem.dimension();
  const double s = scale / std::sqrt(static_cast<double>(n));
  const auto& known = problem.known_constants();
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Vector p = gaussian_vector(n, rng, s);
    if (known && known->x_star.size() == n) p += known->x_star;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace sls
