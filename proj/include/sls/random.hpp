#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Dense>

namespace sls {

/// SplitMix64 generator. Satisfies UniformRandomBitGenerator, and `split`
/// derives statistically independent child streams from the current state
/// without advancing it, so every consumer of a run seed gets its own stream.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  [[nodiscard]] SplitMix64 split(std::uint64_t stream) const {
    return SplitMix64(mix(state_ ^ mix(stream + 0x632be59bd9b4e019ULL)));
  }

  [[nodiscard]] std::uint64_t state() const { return state_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

// Stream identifiers used by split(); kept in one place so no two consumers collide.
namespace streams {
inline constexpr std::uint64_t problem_matrix = 1;
inline constexpr std::uint64_t problem_solution = 2;
inline constexpr std::uint64_t batches = 3;
inline constexpr std::uint64_t initial_point = 4;
inline constexpr std::uint64_t diagnostic_points = 5;
}  // namespace streams

inline Eigen::VectorXd gaussian_vector(Eigen::Index n, SplitMix64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * normal(rng);
  return v;
}

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, SplitMix64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

}  // namespace sls
