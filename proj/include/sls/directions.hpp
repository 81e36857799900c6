#pragma once

/// \file directions.hpp
///
/// Search directions d_k built from the drawn stochastic gradient g_k, and the
/// stochastic-gradient-related (SGR) safeguard
///
///     ||d|| <= c1 ||g||,    d'g <= -c2 ||g||^2,
///
/// with restart to d = -g whenever a proposed direction violates either bound.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>

#include "errors.hpp"
#include "problems.hpp"

namespace sls {

struct SgrParams {
  double c1 = 10.0;  ///< norm-ratio bound
  double c2 = 0.1;   ///< sufficient-descent coefficient

  void validate() const {
    if (!(c1 > 0.0) || !(c2 > 0.0) || !std::isfinite(c1) || !std::isfinite(c2))
      throw config_error("SGR constants must satisfy c1 > 0 and c2 > 0");
    if (c2 > c1) throw config_error("SGR constants must satisfy c2 <= c1");
  }

  /// Throws unless d = -g passes the check for every g, i.e. c1 >= 1 and c2 <= 1.
  void require_satisfiable() const {
    validate();
    if (c1 < 1.0 || c2 > 1.0)
      throw unsatisfiable_safeguard_error(
          "safeguard cannot fall back to -g: needs c1 >= 1 and c2 <= 1 (got c1=" + std::to_string(c1) +
          ", c2=" + std::to_string(c2) + ")");
  }

  friend bool operator==(const SgrParams&, const SgrParams&) = default;
};

struct SgrCheck {
  bool pass = true;
  bool norm_violated = false;     ///< ||d|| > c1 ||g||
  bool descent_violated = false;  ///< d'g > -c2 ||g||^2
};

/// Exact (no slack) test of both SGR inequalities. With g = 0 it passes only for d = 0.
inline SgrCheck sgr_check(const Vector& d, const Vector& g, const SgrParams& params) {
  if (d.size() != g.size()) throw shape_error("direction and gradient differ in dimension");
  SgrCheck out;
  out.norm_violated = !(d.norm() <= params.c1 * g.norm());
  // squaredNorm, not norm()^2: for d = -g this makes d'g == -||g||^2 bit for bit.
  out.descent_violated = !(d.dot(g) <= -params.c2 * g.squaredNorm());
  out.pass = !out.norm_violated && !out.descent_violated;
  return out;
}

// ---------------------------------------------------------------------------
// Direction kinds

struct Sgd {
  friend bool operator==(const Sgd&, const Sgd&) = default;
};

/// Heavy ball: d = -g + beta (x - x_prev).
struct Momentum {
  double beta = 0.9;
  friend bool operator==(const Momentum&, const Momentum&) = default;
};

enum class CgVariant { fletcher_reeves, polak_ribiere_plus };

/// Nonlinear conjugate gradient: d = -g + beta_k d_prev, beta_k clipped at beta_cap.
struct ConjugateGradient {
  CgVariant variant = CgVariant::polak_ribiere_plus;
  double beta_cap = 10.0;
  friend bool operator==(const ConjugateGradient&, const ConjugateGradient&) = default;
};

/// Diagonal AdaGrad-style scaling: d = -g / sqrt(acc + epsilon).
struct AdagradDiag {
  double epsilon = 1e-8;
  friend bool operator==(const AdagradDiag&, const AdagradDiag&) = default;
};

using DirectionKind = std::variant<Sgd, Momentum, ConjugateGradient, AdagradDiag>;

inline std::string kind_name(const DirectionKind& kind) {
  return std::visit(
      [](const auto& k) -> std::string {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Sgd>) return "sgd";
        else if constexpr (std::is_same_v<K, Momentum>) return "momentum";
        else if constexpr (std::is_same_v<K, ConjugateGradient>) return "cg";
        else return "adagrad";
      },
      kind);
}

inline void validate_kind(const DirectionKind& kind) {
  std::visit(
      [](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Momentum>) {
          if (!(k.beta >= 0.0) || !std::isfinite(k.beta)) throw config_error("momentum beta must be >= 0");
        } else if constexpr (std::is_same_v<K, ConjugateGradient>) {
          if (!(k.beta_cap >= 0.0) || !std::isfinite(k.beta_cap)) throw config_error("cg beta_cap must be >= 0");
        } else if constexpr (std::is_same_v<K, AdagradDiag>) {
          if (!(k.epsilon > 0.0) || !std::isfinite(k.epsilon)) throw config_error("adagrad epsilon must be > 0");
        }
      },
      kind);
}

/// History carried between iterations. Which fields are used depends on the kind.
struct DirectionMemory {
  std::optional<Vector> prev_x;
  std::optional<Vector> prev_g;
  std::optional<Vector> prev_d;
  Vector accumulator;  ///< running sum of g*g (adagrad), entries >= 0
};

struct DirectionState {
  DirectionKind kind;
  DirectionMemory memory;

  DirectionState(DirectionKind k, Eigen::Index n) : kind(k) { memory.accumulator = Vector::Zero(n); }

  /// Clears momentum / CG history. The AdaGrad accumulator is kept.
  void reset_history() {
    memory.prev_x.reset();
    memory.prev_g.reset();
    memory.prev_d.reset();
  }
};

/// beta_k of nonlinear CG, before the cap. Zero when the previous gradient vanished.
inline double cg_beta(CgVariant variant, const Vector& g, const Vector& g_prev) {
  const double denom = g_prev.squaredNorm();
  if (denom == 0.0) return 0.0;
  if (variant == CgVariant::fletcher_reeves) return g.squaredNorm() / denom;
  return std::max(0.0, g.dot(g - g_prev) / denom);
}

/// The raw (pre-safeguard) direction for the current state.
inline Vector propose_direction(const DirectionState& state, const Vector& g, const Vector& x) {
  if (state.memory.accumulator.size() != g.size() || x.size() != g.size())
    throw shape_error("direction state, gradient and point differ in dimension");
  const DirectionMemory& mem = state.memory;
  return std::visit(
      [&](const auto& k) -> Vector {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Sgd>) {
          return -g;
        } else if constexpr (std::is_same_v<K, Momentum>) {
          if (!mem.prev_x) return -g;
          return -g + k.beta * (x - *mem.prev_x);
        } else if constexpr (std::is_same_v<K, ConjugateGradient>) {
          if (!mem.prev_g || !mem.prev_d) return -g;
          const double beta = std::min(cg_beta(k.variant, g, *mem.prev_g), k.beta_cap);
          return -g + beta * *mem.prev_d;
        } else {
          return -(g.array() / (mem.accumulator.array() + k.epsilon).sqrt()).matrix();
        }
      },
      state.kind);
}

struct DirectionOutcome {
  Vector d;      ///< direction actually used
  Vector raw_d;  ///< proposal before the safeguard
  bool sgr_pass = true;
  bool norm_violated = false;
  bool descent_violated = false;
  bool restarted = false;
};

/// Proposes a direction and, if it violates the SGR bounds, replaces it by -g
/// and clears the kind's history.
inline DirectionOutcome safeguarded_direction(DirectionState& state, const Vector& g, const Vector& x,
                                              const SgrParams& params) {
  DirectionOutcome out;
  out.raw_d = propose_direction(state, g, x);
  const SgrCheck check = sgr_check(out.raw_d, g, params);
  out.sgr_pass = check.pass;
  out.norm_violated = check.norm_violated;
  out.descent_violated = check.descent_violated;
  if (check.pass) {
    out.d = out.raw_d;
  } else {
    out.d = -g;
    out.restarted = true;
    state.reset_history();
  }
  return out;
}

/// Records an accepted step x_old -> x_new taken along d with gradient g.
inline void update_memory(DirectionState& state, const Vector& x_new, const Vector& x_old, const Vector& g,
                          const Vector& d) {
  if (x_new.size() != x_old.size() || g.size() != x_old.size() || d.size() != x_old.size() ||
      state.memory.accumulator.size() != x_old.size())
    throw shape_error("memory update with inconsistent dimensions");
  state.memory.prev_x = x_old;
  state.memory.prev_g = g;
  state.memory.prev_d = d;
  state.memory.accumulator.array() += g.array().square();
}

/// Owns a DirectionState and applies (or skips) the safeguard.
class DirectionGenerator {
 public:
  DirectionGenerator(DirectionKind kind, Eigen::Index n, SgrParams params, bool safeguard = true)
      : state_(kind, n), params_(params), safeguard_(safeguard) {
    validate_kind(kind);
    if (safeguard_) params_.require_satisfiable();
    else params_.validate();
  }

  DirectionOutcome next(const Vector& g, const Vector& x) {
    if (safeguard_) return safeguarded_direction(state_, g, x, params_);
    DirectionOutcome out;
    out.raw_d = propose_direction(state_, g, x);
    const SgrCheck check = sgr_check(out.raw_d, g, params_);
    out.sgr_pass = check.pass;
    out.norm_violated = check.norm_violated;
    out.descent_violated = check.descent_violated;
    out.d = out.raw_d;
    return out;
  }

  void accept(const Vector& x_new, const Vector& x_old, const Vector& g, const Vector& d) {
    update_memory(state_, x_new, x_old, g, d);
  }

  [[nodiscard]] const DirectionState& state() const { return state_; }
  [[nodiscard]] const SgrParams& params() const { return params_; }
  [[nodiscard]] bool safeguard() const { return safeguard_; }

 private:
  DirectionState state_;
  SgrParams params_;
  bool safeguard_;
};

}  // namespace sls
