#pragma once

/// \file problems.hpp
///
/// Finite-sum objectives f(x) = (1/N) sum_i f_i(x) with per-component value and
/// gradient access, batch sampling, and synthetic generators whose smoothness
/// and PL constants are known in closed form.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "random.hpp"

namespace sls {

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Analytically available problem data. Any of L, L_max, mu may be absent
/// (the nonconvex generator only knows its planted solution).
struct KnownConstants {
  std::optional<double> L;      ///< smoothness of f
  std::optional<double> L_max;  ///< max smoothness over singleton components
  std::optional<double> mu;     ///< PL constant of f
  double f_star = 0.0;
  Vector x_star;
};

/// A finite sum of differentiable components. Immutable after construction.
class FiniteSumProblem {
 public:
  virtual ~FiniteSumProblem() = default;

  [[nodiscard]] virtual std::size_t num_components() const = 0;
  [[nodiscard]] virtual Eigen::Index dimension() const = 0;
  [[nodiscard]] virtual std::string kind() const = 0;

  /// f_i(x).
  [[nodiscard]] virtual double component_value(std::size_t i, const Vector& x) const = 0;

  /// Returns f_i(x) and adds weight * grad f_i(x) into `grad`.
  virtual double accumulate_component(std::size_t i, const Vector& x, double weight,
                                      Vector& grad) const = 0;

  [[nodiscard]] const std::optional<KnownConstants>& known_constants() const { return known_; }

 protected:
  std::optional<KnownConstants> known_;
};

using ProblemPtr = std::shared_ptr<const FiniteSumProblem>;

/// Component indices are zero-based: every entry lies in [0, N).
struct Batch {
  std::vector<std::size_t> indices;

  [[nodiscard]] std::size_t size() const { return indices.size(); }
};

struct Evaluation {
  double value = 0.0;
  Vector gradient;
};

namespace detail {

inline void check_dimension(const FiniteSumProblem& problem, const Vector& x) {
  if (x.size() != problem.dimension())
    throw shape_error("point has dimension " + std::to_string(x.size()) + ", problem expects " +
                      std::to_string(problem.dimension()));
}

inline void check_batch(const FiniteSumProblem& problem, const Batch& batch) {
  if (batch.indices.empty()) throw invalid_batch_error("empty batch");
  for (std::size_t i : batch.indices)
    if (i >= problem.num_components())
      throw invalid_batch_error("component index " + std::to_string(i) + " outside [0, " +
                                std::to_string(problem.num_components()) + ")");
}

inline void check_finite(double value, const Vector* gradient, const char* what) {
  if (!std::isfinite(value) || (gradient != nullptr && !gradient->allFinite()))
    throw numeric_domain_error(std::string("non-finite ") + what);
}

}  // namespace detail

/// Mini-batch value and gradient: averages over the (multi)set of indices.
inline Evaluation evaluate_batch(const FiniteSumProblem& problem, const Batch& batch,
                                 const Vector& x) {
  detail::check_dimension(problem, x);
  detail::check_batch(problem, batch);
  const double weight = 1.0 / static_cast<double>(batch.size());
  Evaluation out{0.0, Vector::Zero(problem.dimension())};
  for (std::size_t i : batch.indices) out.value += problem.accumulate_component(i, x, weight, out.gradient);
  out.value *= weight;
  detail::check_finite(out.value, &out.gradient, "batch evaluation");
  return out;
}

/// Mini-batch value only. Non-finite values are returned, not thrown: the line
/// search treats them as a failed trial.
inline double batch_value(const FiniteSumProblem& problem, const Batch& batch, const Vector& x) {
  detail::check_dimension(problem, x);
  detail::check_batch(problem, batch);
  double sum = 0.0;
  for (std::size_t i : batch.indices) sum += problem.component_value(i, x);
  return sum / static_cast<double>(batch.size());
}

/// Exact f(x) and grad f(x), averaging over all N components. O(N) cost, meant
/// for tracing and diagnostics only.
inline Evaluation full_oracle(const FiniteSumProblem& problem, const Vector& x) {
  detail::check_dimension(problem, x);
  const std::size_t n_comp = problem.num_components();
  const double weight = 1.0 / static_cast<double>(n_comp);
  Evaluation out{0.0, Vector::Zero(problem.dimension())};
  for (std::size_t i = 0; i < n_comp; ++i) out.value += problem.accumulate_component(i, x, weight, out.gradient);
  out.value *= weight;
  detail::check_finite(out.value, &out.gradient, "full evaluation");
  return out;
}

/// Gradient of a single component.
inline Evaluation component_evaluation(const FiniteSumProblem& problem, std::size_t i,
                                       const Vector& x) {
  return evaluate_batch(problem, Batch{{i}}, x);
}

// ---------------------------------------------------------------------------
// Sampling

enum class SamplingMode {
  with_replacement,      ///< b indices drawn uniformly with replacement
  singleton_enumerable,  ///< b = 1; expectations computable by enumeration
};

/// Deterministic batch stream for a given seed. Single owner.
class BatchSampler {
 public:
  BatchSampler(std::size_t num_components, SamplingMode mode, std::size_t batch_size,
               std::uint64_t seed)
      : num_components_(num_components),
        mode_(mode),
        batch_size_(mode == SamplingMode::singleton_enumerable ? 1 : batch_size),
        rng_(SplitMix64(seed).split(streams::batches)) {
    if (num_components_ == 0) throw invalid_batch_error("sampler over zero components");
    if (batch_size_ == 0) throw invalid_batch_error("batch size must be >= 1");
  }

  Batch next() {
    std::uniform_int_distribution<std::size_t> pick(0, num_components_ - 1);
    Batch batch;
    batch.indices.reserve(batch_size_);
    for (std::size_t j = 0; j < batch_size_; ++j) batch.indices.push_back(pick(rng_));
    return batch;
  }

  [[nodiscard]] SamplingMode mode() const { return mode_; }
  [[nodiscard]] std::size_t batch_size() const { return batch_size_; }

  /// All N singleton batches; each carries probability 1/N.
  [[nodiscard]] static std::vector<Batch> enumerate_singletons(std::size_t num_components) {
    std::vector<Batch> out(num_components);
    for (std::size_t i = 0; i < num_components; ++i) out[i].indices = {i};
    return out;
  }

 private:
  std::size_t num_components_;
  SamplingMode mode_;
  std::size_t batch_size_;
  SplitMix64 rng_;
};

// ---------------------------------------------------------------------------
// Least squares: f_i(x) = 1/2 (a_i'x - b_i)^2

class LeastSquaresProblem final : public FiniteSumProblem {
 public:
  LeastSquaresProblem(RowMatrix A, Vector b, std::optional<KnownConstants> known)
      : A_(std::move(A)), b_(std::move(b)) {
    if (A_.rows() < 1 || A_.cols() < 1) throw invalid_spec_error("least squares needs N >= 1 and n >= 1");
    if (b_.size() != A_.rows()) throw shape_error("rhs length does not match number of rows");
    known_ = std::move(known);
  }

  [[nodiscard]] std::size_t num_components() const override { return static_cast<std::size_t>(A_.rows()); }
  [[nodiscard]] Eigen::Index dimension() const override { return A_.cols(); }
  [[nodiscard]] std::string kind() const override { return "least_squares"; }

  [[nodiscard]] double residual(std::size_t i, const Vector& x) const {
    return A_.row(static_cast<Eigen::Index>(i)).dot(x) - b_[static_cast<Eigen::Index>(i)];
  }

  [[nodiscard]] double component_value(std::size_t i, const Vector& x) const override {
    const double r = residual(i, x);
    return 0.5 * r * r;
  }

  double accumulate_component(std::size_t i, const Vector& x, double weight,
                              Vector& grad) const override {
    const double r = residual(i, x);
    grad.noalias() += (weight * r) * A_.row(static_cast<Eigen::Index>(i)).transpose();
    return 0.5 * r * r;
  }

  [[nodiscard]] const RowMatrix& matrix() const { return A_; }
  [[nodiscard]] const Vector& rhs() const { return b_; }

 private:
  RowMatrix A_;
  Vector b_;
};

/// Smoothness and PL constants of the least-squares sum with data matrix A.
/// mu is the smallest *nonzero* eigenvalue of A'A/N; zero modes contribute
/// nothing to either side of the PL inequality.
struct LeastSquaresSpectrum {
  double L = 0.0;
  double L_max = 0.0;
  double mu = 0.0;
};

inline LeastSquaresSpectrum least_squares_spectrum(const RowMatrix& A) {
  const double N = static_cast<double>(A.rows());
  // A A' and A'A share their nonzero spectrum; decompose the smaller one.
  Eigen::MatrixXd gram = A.rows() <= A.cols() ? Eigen::MatrixXd(A * A.transpose())
                                              : Eigen::MatrixXd(A.transpose() * A);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const Vector& ev = eig.eigenvalues();
  const double top = ev.maxCoeff();
  if (!(top > 0.0)) throw invalid_spec_error("data matrix is identically zero");
  const double cutoff = top * 1e-10;
  double smallest = top;
  for (Eigen::Index k = 0; k < ev.size(); ++k)
    if (ev[k] > cutoff) smallest = std::min(smallest, ev[k]);
  LeastSquaresSpectrum out;
  out.L = top / N;
  out.mu = smallest / N;
  out.L_max = A.rowwise().squaredNorm().maxCoeff();
  return out;
}

/// Nonzero singular values of a generated data matrix.
struct SpectrumSpec {
  enum class Kind { constant, linear, geometric, list };

  Kind kind = Kind::linear;
  double lo = 1.0;
  double hi = 2.0;
  std::vector<double> values;  ///< only for Kind::list

  /// Singular values for a matrix of rank `rank` (ignored for lists).
  [[nodiscard]] std::vector<double> singular_values(std::size_t rank) const {
    if (kind == Kind::list) return values;
    std::vector<double> s(rank);
    for (std::size_t k = 0; k < rank; ++k) {
      const double t = rank == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(rank - 1);
      switch (kind) {
        case Kind::constant: s[k] = lo; break;
        case Kind::linear: s[k] = hi + t * (lo - hi); break;
        case Kind::geometric: s[k] = hi * std::pow(lo / hi, t); break;
        case Kind::list: break;
      }
    }
    return s;
  }

  /// Text form: `constant:S`, `linear:LO:HI`, `geometric:LO:HI`, `list:S1,S2,...`.
  static SpectrumSpec parse(const std::string& text) {
    auto fail = [&] { return invalid_spec_error("bad spectrum '" + text + "'"); };
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw fail();
    const std::string head = text.substr(0, colon);
    std::vector<double> nums;
    {
      std::string body = text.substr(colon + 1);
      const char sep = head == "list" ? ',' : ':';
      std::stringstream ss(body);
      std::string tok;
      while (std::getline(ss, tok, sep)) {
        try {
          std::size_t used = 0;
          nums.push_back(std::stod(tok, &used));
          if (used != tok.size()) throw fail();
        } catch (const std::logic_error&) {
          throw fail();
        }
      }
    }
    for (double v : nums)
      if (!(v > 0.0) || !std::isfinite(v)) throw fail();
    SpectrumSpec spec;
    if (head == "constant" && nums.size() == 1) {
      spec.kind = Kind::constant;
      spec.lo = spec.hi = nums[0];
    } else if ((head == "linear" || head == "geometric") && nums.size() == 2) {
      spec.kind = head == "linear" ? Kind::linear : Kind::geometric;
      spec.lo = nums[0];
      spec.hi = nums[1];
    } else if (head == "list" && !nums.empty()) {
      spec.kind = Kind::list;
      spec.values = nums;
    } else {
      throw fail();
    }
    return spec;
  }

  [[nodiscard]] std::string to_string() const {
    std::ostringstream os;
    os << std::setprecision(17);
    switch (kind) {
      case Kind::constant: os << "constant:" << lo; break;
      case Kind::linear: os << "linear:" << lo << ':' << hi; break;
      case Kind::geometric: os << "geometric:" << lo << ':' << hi; break;
      case Kind::list:
        os << "list:";
        for (std::size_t k = 0; k < values.size(); ++k) os << (k ? "," : "") << values[k];
        break;
    }
    return os.str();
  }

  friend bool operator==(const SpectrumSpec&, const SpectrumSpec&) = default;
};

namespace detail {

inline Eigen::MatrixXd random_orthonormal_columns(Eigen::Index rows, Eigen::Index cols,
                                                  SplitMix64& rng) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian_matrix(rows, cols, rng));
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

}  // namespace detail

/// Builds a least-squares problem with b = A x*, so every component is
/// minimized at x* (minimizer interpolation) and f* = 0. A = U diag(s) V' with
/// random orthonormal U, V and singular values s from `spectrum`.
inline std::shared_ptr<LeastSquaresProblem> gen_interpolating_least_squares(
    std::size_t N, std::size_t n, std::uint64_t seed, const SpectrumSpec& spectrum) {
  if (N < 1 || n < 1) throw invalid_spec_error("least squares needs N >= 1 and n >= 1");
  const std::size_t max_rank = std::min(N, n);
  const std::vector<double> s = spectrum.singular_values(max_rank);
  if (s.empty() || s.size() > max_rank)
    throw invalid_spec_error("spectrum has " + std::to_string(s.size()) +
                             " values, rank must be in [1, " + std::to_string(max_rank) + "]");
  for (double v : s)
    if (!(v > 0.0) || !std::isfinite(v)) throw invalid_spec_error("singular values must be positive and finite");
  if (n < N)
    std::clog << "warning: n=" << n << " < N=" << N << ", problem is not over-parametrized\n";

  const SplitMix64 root(seed);
  SplitMix64 mat_rng = root.split(streams::problem_matrix);
  SplitMix64 sol_rng = root.split(streams::problem_solution);
  const auto rank = static_cast<Eigen::Index>(s.size());
  const Eigen::MatrixXd U = detail::random_orthonormal_columns(static_cast<Eigen::Index>(N), rank, mat_rng);
  const Eigen::MatrixXd V = detail::random_orthonormal_columns(static_cast<Eigen::Index>(n), rank, mat_rng);
  const Vector sv = Eigen::Map<const Vector>(s.data(), rank);
  RowMatrix A = U * sv.asDiagonal() * V.transpose();

  for (Eigen::Index i = 0; i < A.rows(); ++i)
    if (A.row(i).squaredNorm() == 0.0) throw invalid_spec_error("generated matrix has an all-zero row");

  KnownConstants known;
  known.x_star = gaussian_vector(static_cast<Eigen::Index>(n), sol_rng, 1.0 / std::sqrt(static_cast<double>(n)));
  Vector b(A.rows());
  // Same expression as LeastSquaresProblem::residual, so residuals at x* are exactly zero.
  for (Eigen::Index i = 0; i < A.rows(); ++i) b[i] = A.row(i).dot(known.x_star);
  const LeastSquaresSpectrum c = least_squares_spectrum(A);
  known.L = c.L;
  known.L_max = c.L_max;
  known.mu = c.mu;
  known.f_star = 0.0;
  return std::make_shared<LeastSquaresProblem>(std::move(A), std::move(b), std::move(known));
}

/// Least-squares problem from explicit data. The minimizer is the minimum-norm
/// least-squares solution; f* is f at that point (zero only when b is realizable).
inline std::shared_ptr<LeastSquaresProblem> least_squares_from_data(RowMatrix A, Vector b) {
  if (A.rows() < 1 || A.cols() < 1) throw invalid_spec_error("least squares needs N >= 1 and n >= 1");
  if (b.size() != A.rows()) throw shape_error("rhs length does not match number of rows");
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    if (A.row(i).squaredNorm() == 0.0) throw invalid_spec_error("data matrix has an all-zero row");
  const LeastSquaresSpectrum c = least_squares_spectrum(A);
  KnownConstants known;
  known.x_star = Eigen::MatrixXd(A).completeOrthogonalDecomposition().solve(b);
  known.L = c.L;
  known.L_max = c.L_max;
  known.mu = c.mu;
  auto problem = std::make_shared<LeastSquaresProblem>(std::move(A), std::move(b), std::nullopt);
  known.f_star = full_oracle(*problem, known.x_star).value;
  return std::make_shared<LeastSquaresProblem>(problem->matrix(), problem->rhs(), std::move(known));
}

// ---------------------------------------------------------------------------
// Plain-text matrix format:
//   N n
//   <N rows of A, n numbers each>
//   <b, N numbers>

inline void write_matrix_text(std::ostream& os, const RowMatrix& A, const Vector& b) {
  os << A.rows() << ' ' << A.cols() << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) os << (j ? " " : "") << A(i, j);
    os << '\n';
  }
  for (Eigen::Index i = 0; i < b.size(); ++i) os << (i ? " " : "") << b[i];
  os << '\n';
}

inline std::pair<RowMatrix, Vector> read_matrix_text(std::istream& is) {
  long long rows = 0, cols = 0;
  if (!(is >> rows >> cols) || rows < 1 || cols < 1)
    throw invalid_spec_error("matrix file: bad header, expected 'N n'");
  RowMatrix A(rows, cols);
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      if (!(is >> A(i, j))) throw invalid_spec_error("matrix file: truncated data matrix");
  Vector b(rows);
  for (Eigen::Index i = 0; i < b.size(); ++i)
    if (!(is >> b[i])) throw invalid_spec_error("matrix file: truncated rhs");
  std::string extra;
  if (is >> extra) throw invalid_spec_error("matrix file: trailing data '" + extra + "'");
  return {std::move(A), std::move(b)};
}

inline std::shared_ptr<LeastSquaresProblem> load_least_squares(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw invalid_spec_error("cannot open matrix file '" + path + "'");
  auto [A, b] = read_matrix_text(in);
  return least_squares_from_data(std::move(A), std::move(b));
}

inline void save_least_squares(const std::string& path, const LeastSquaresProblem& problem) {
  std::ofstream out(path);
  if (!out) throw invalid_spec_error("cannot write matrix file '" + path + "'");
  write_matrix_text(out, problem.matrix(), problem.rhs());
}

// ---------------------------------------------------------------------------
// Two-factor linear model: f_i(u, V) = 1/2 (u' V a_i - b_i)^2.
// x stacks u (n_u entries) followed by V in row-major order (n_u x n_v).

class TwoFactorProblem final : public FiniteSumProblem {
 public:
  TwoFactorProblem(std::size_t n_u, std::size_t n_v, RowMatrix features, Vector labels,
                   std::optional<KnownConstants> known)
      : n_u_(static_cast<Eigen::Index>(n_u)),
        n_v_(static_cast<Eigen::Index>(n_v)),
        features_(std::move(features)),
        labels_(std::move(labels)) {
    if (n_u_ < 1 || n_v_ < 1) throw invalid_spec_error("two-factor model needs n_u, n_v >= 1");
    if (features_.cols() != n_v_ || labels_.size() != features_.rows())
      throw shape_error("two-factor data has inconsistent shapes");
    known_ = std::move(known);
  }

  [[nodiscard]] std::size_t num_components() const override { return static_cast<std::size_t>(features_.rows()); }
  [[nodiscard]] Eigen::Index dimension() const override { return n_u_ + n_u_ * n_v_; }
  [[nodiscard]] std::string kind() const override { return "nonconvex"; }

  /// Model output u' V a_i before subtracting the label.
  [[nodiscard]] double prediction(std::size_t i, const Vector& x) const {
    const Vector va = factor(x) * features_.row(static_cast<Eigen::Index>(i)).transpose();
    return x.head(n_u_).dot(va);
  }

  [[nodiscard]] double component_value(std::size_t i, const Vector& x) const override {
    const double r = prediction(i, x) - labels_[static_cast<Eigen::Index>(i)];
    return 0.5 * r * r;
  }

  double accumulate_component(std::size_t i, const Vector& x, double weight,
                              Vector& grad) const override {
    const auto row = static_cast<Eigen::Index>(i);
    const Vector va = factor(x) * features_.row(row).transpose();
    const double r = x.head(n_u_).dot(va) - labels_[row];
    const double w = weight * r;
    grad.head(n_u_).noalias() += w * va;
    Eigen::Map<RowMatrix> gV(grad.data() + n_u_, n_u_, n_v_);
    gV.noalias() += w * x.head(n_u_) * features_.row(row);
    return 0.5 * r * r;
  }

  [[nodiscard]] std::size_t n_u() const { return static_cast<std::size_t>(n_u_); }
  [[nodiscard]] std::size_t n_v() const { return static_cast<std::size_t>(n_v_); }

 private:
  [[nodiscard]] Eigen::Map<const RowMatrix> factor(const Vector& x) const {
    return {x.data() + n_u_, n_u_, n_v_};
  }

  Eigen::Index n_u_;
  Eigen::Index n_v_;
  RowMatrix features_;
  Vector labels_;
};

/// Two-factor model with labels realized by a planted (u*, V*), so f* = 0 and
/// every component vanishes there. No analytic L, L_max or mu.
inline std::shared_ptr<TwoFactorProblem> gen_nonconvex_interpolating(std::size_t N, std::size_t n_u,
                                                                     std::size_t n_v,
                                                                     std::uint64_t seed) {
  if (N < 1 || n_u < 1 || n_v < 1) throw invalid_spec_error("nonconvex generator needs N, n_u, n_v >= 1");
  const SplitMix64 root(seed);
  SplitMix64 data_rng = root.split(streams::problem_matrix);
  SplitMix64 sol_rng = root.split(streams::problem_solution);
  const auto rows = static_cast<Eigen::Index>(N);
  const auto nv = static_cast<Eigen::Index>(n_v);
  const auto nu = static_cast<Eigen::Index>(n_u);
  RowMatrix features = gaussian_matrix(rows, nv, data_rng) / std::sqrt(static_cast<double>(n_v));

  KnownConstants known;
  known.x_star = gaussian_vector(nu + nu * nv, sol_rng);
  known.f_star = 0.0;
  // Labels from the same prediction expression used at evaluation time.
  const TwoFactorProblem unlabeled(n_u, n_v, features, Vector::Zero(rows), std::nullopt);
  Vector labels(rows);
  for (Eigen::Index i = 0; i < rows; ++i)
    labels[i] = unlabeled.prediction(static_cast<std::size_t>(i), known.x_star);
  return std::make_shared<TwoFactorProblem>(n_u, n_v, std::move(features), std::move(labels),
                                            std::move(known));
}

}  // namespace sls
