#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "sls/sls.hpp"

namespace sls::testing {

/// f_i(x) = 1/2 sum_j h_ij (x_j - c_j)^2 with h_ij >= 0. Component Hessians are
/// diag(h_i), so L_i = max_j h_ij exactly.
class DiagonalQuadraticSum final : public FiniteSumProblem {
 public:
  DiagonalQuadraticSum(std::vector<Vector> curvatures, Vector center, std::optional<KnownConstants> known = {})
      : h_(std::move(curvatures)), c_(std::move(center)) {
    known_ = std::move(known);
  }

  [[nodiscard]] std::size_t num_components() const override { return h_.size(); }
  [[nodiscard]] Eigen::Index dimension() const override { return c_.size(); }
  [[nodiscard]] std::string kind() const override { return "diagonal_quadratic"; }

  [[nodiscard]] double component_value(std::size_t i, const Vector& x) const override {
    return 0.5 * (h_[i].array() * (x - c_).array().square()).sum();
  }

  double accumulate_component(std::size_t i, const Vector& x, double weight, Vector& grad) const override {
    grad.array() += weight * h_[i].array() * (x - c_).array();
    return component_value(i, x);
  }

  [[nodiscard]] double component_smoothness(std::size_t i) const { return h_[i].maxCoeff(); }

 private:
  std::vector<Vector> h_;
  Vector c_;
};

/// f_1 = x^2 / 2, f_2 = x^2 in one dimension.
inline std::shared_ptr<DiagonalQuadraticSum> two_component_toy() {
  KnownConstants known;
  known.x_star = Vector::Zero(1);
  known.f_star = 0.0;
  known.L = 1.5;
  known.L_max = 2.0;
  known.mu = 1.5;
  return std::make_shared<DiagonalQuadraticSum>(std::vector<Vector>{Vector::Constant(1, 1.0), Vector::Constant(1, 2.0)},
                                                Vector::Zero(1), known);
}

/// f = x^2 / 2 as a single component.
inline std::shared_ptr<DiagonalQuadraticSum> unit_quadratic(Eigen::Index n = 1) {
  KnownConstants known;
  known.x_star = Vector::Zero(n);
  known.L = known.L_max = known.mu = 1.0;
  return std::make_shared<DiagonalQuadraticSum>(std::vector<Vector>{Vector::Ones(n)}, Vector::Zero(n), known);
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

/// Central finite-difference gradient of the full objective.
inline Vector fd_gradient(const FiniteSumProblem& p, const Vector& x, double h = 1e-6) {
  Vector g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    g[j] = (full_oracle(p, xp).value - full_oracle(p, xm).value) / (2.0 * h);
  }
  return g;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sls_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Standard least-squares instance (N=100, n=200) as config text.
inline std::string least_squares_config(const std::string& direction = "sgd", double c1 = 1.0, double c2 = 1.0) {
  std::ostringstream s;
  s << "[problem]\nkind = least_squares\nN = 100\nn = 200\nseed = 1\n\n"
    << "[direction]\nkind = " << direction << "\nc1 = " << c1 << "\nc2 = " << c2 << "\n\n"
    << "[linesearch]\ngamma = 0.1\ndelta = 0.5\nalpha_max = 10\n\n"
    << "[run]\nmax_iters = 5000\nbatch_size = 1\n";
  return s.str();
}

}  // namespace sls::testing
