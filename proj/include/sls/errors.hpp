#pragma once

#include <stdexcept>
#include <string>

namespace sls {

/// Base class for every error raised by the library.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix dimensions disagree.
class shape_error : public error {
 public:
  using error::error;
};

/// A batch refers to a component index outside [0, N).
class invalid_batch_error : public error {
 public:
  using error::error;
};

/// An evaluation produced NaN or Inf, or an argument is outside a formula's domain.
class numeric_domain_error : public error {
 public:
  using error::error;
};

/// A generator specification cannot produce a valid problem.
class invalid_spec_error : public error {
 public:
  using error::error;
};

/// The requested SGR constants reject the plain stochastic gradient direction.
class unsatisfiable_safeguard_error : public error {
 public:
  using error::error;
};

/// Line search called with d'g >= 0.
class non_descent_error : public error {
 public:
  using error::error;
};

/// Too few usable samples for a fit or an estimator.
class insufficient_data_error : public error {
 public:
  using error::error;
};

/// A sampled constant is undefined on the supplied points (e.g. zero variance everywhere).
class undefined_estimator_error : public error {
 public:
  using error::error;
};

/// The operation needs problem data (such as f*) that this problem does not carry.
class unsupported_problem_error : public error {
 public:
  using error::error;
};

/// Hypotheses of a bound are not met by the supplied constants.
class precondition_error : public error {
 public:
  using error::error;
};

/// Bad experiment configuration (parse failure, unknown key, violated invariant).
class config_error : public error {
 public:
  using error::error;
};

}  // namespace sls
