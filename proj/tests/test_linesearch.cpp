#include <gtest/gtest.h>

#include <limits>

#include "support.hpp"

using namespace sls;
using sls::testing::vec;

namespace {

auto half_square() {
  return [](const Vector& x) { return 0.5 * x.squaredNorm(); };
}

LineSearchParams params(double gamma, double delta, double alpha_max, int max_backtracks = 60) {
  LineSearchParams p;
  p.gamma = gamma;
  p.delta = delta;
  p.alpha_max = alpha_max;
  p.max_backtracks = max_backtracks;
  return p;
}

/// Smallest j whose trial passes, by direct scan.
int brute_force_j(const std::function<double(const Vector&)>& f, const Vector& x, const Vector& d, const Vector& g,
                  double alpha0, double gamma, double delta, int jmax) {
  const double fx = f(x);
  for (int j = 0; j <= jmax; ++j) {
    const double a = step_at(alpha0, delta, j);
    const double v = f(x + a * d);
    if (std::isfinite(v) && v <= fx + gamma * a * d.dot(g)) return j;
  }
  return -1;
}

}  // namespace

TEST(ArmijoHolds, Examples) {
  const auto f = half_square();
  const Vector x = vec({1}), d = vec({-1}), g = vec({1});
  EXPECT_TRUE(armijo_holds(f, x, d, g, 0.5, 0.5, 0.5));
  EXPECT_FALSE(armijo_holds(f, x, d, g, 2.0, 0.5, 0.5));
  EXPECT_TRUE(armijo_holds(f, x, d, g, 0.0, 0.5, 0.5));
  double trial = -1;
  armijo_holds(f, x, d, g, 0.5, 0.5, 0.5, &trial);
  EXPECT_DOUBLE_EQ(trial, 0.125);
}

TEST(ArmijoHolds, NonFiniteTrialFails) {
  auto f = [](const Vector& x) { return x[0] < 0 ? std::numeric_limits<double>::quiet_NaN() : 0.5 * x[0] * x[0]; };
  EXPECT_FALSE(armijo_holds(f, vec({1}), vec({-1}), vec({1}), 2.0, 0.1, 0.5));
}

TEST(ArmijoHolds, OneOracleCall) {
  int calls = 0;
  auto f = [&](const Vector& x) {
    ++calls;
    return 0.5 * x.squaredNorm();
  };
  armijo_holds(f, vec({1}), vec({-1}), vec({1}), 0.3, 0.5, 0.5);
  EXPECT_EQ(calls, 1);
}

TEST(Backtrack, Examples) {
  const auto f = half_square();
  const Vector x = vec({1}), d = vec({-1}), g = vec({1});
  const LineSearchResult a = backtrack(f, x, d, g, params(0.5, 0.5, 10), 10.0, 0.5);
  EXPECT_EQ(a.alpha, 0.625);
  EXPECT_EQ(a.backtracks, 4);
  EXPECT_EQ(a.f_trial_count, 5);
  EXPECT_EQ(a.alpha0, 10.0);

  const LineSearchResult b = backtrack(f, x, d, g, params(0.5, 0.5, 1), 1.0, 0.5);
  EXPECT_EQ(b.alpha, 1.0);
  EXPECT_EQ(b.backtracks, 0);
  EXPECT_EQ(b.accepted_f, 0.0);
}

TEST(Backtrack, BelowAlphaLowNeedsNoBacktrack) {
  SplitMix64 rng(2);
  for (int t = 0; t < 50; ++t) {
    std::uniform_real_distribution<double> curv(0.1, 5.0);
    Vector h(3);
    for (int i = 0; i < 3; ++i) h[i] = curv(rng);
    const double L = h.maxCoeff();
    auto f = [&](const Vector& x) { return 0.5 * (h.array() * x.array().square()).sum(); };
    const Vector x = gaussian_vector(3, rng);
    const Vector g = (h.array() * x.array()).matrix();
    const double a0 = 0.9 * alpha_low(1, 1, 0.3, L);
    const LineSearchResult r = backtrack(f, x, Vector(-g), g, params(0.3, 0.5, 10), a0, f(x));
    EXPECT_EQ(r.backtracks, 0);
  }
}

TEST(Backtrack, Errors) {
  const auto f = half_square();
  EXPECT_THROW(backtrack(f, vec({1}), vec({1}), vec({1}), params(0.5, 0.5, 1), 1.0, 0.5), non_descent_error);
  EXPECT_THROW(backtrack(f, vec({1}), vec({0}), vec({1}), params(0.5, 0.5, 1), 1.0, 0.5), non_descent_error);
  EXPECT_THROW(backtrack(f, vec({1}), vec({-1}), vec({1}), params(0.5, 0.5, 1), 2.0, 0.5), numeric_domain_error);
  EXPECT_THROW(backtrack(f, vec({1}), vec({-1, 0}), vec({1}), params(0.5, 0.5, 1), 1.0, 0.5), shape_error);
}

TEST(Backtrack, StallCarriesTrials) {
  // The supplied g is wrong, so no step satisfies the test.
  const auto f = half_square();
  try {
    backtrack(f, vec({1}), vec({-1}), vec({1000}), params(0.5, 0.5, 1, 5), 1.0, 0.5);
    FAIL() << "expected a stall";
  } catch (const stall_error& e) {
    ASSERT_EQ(e.trials().size(), 6u);
    EXPECT_EQ(e.trials()[5].first, step_at(1.0, 0.5, 5));
  }
}

TEST(Backtrack, TiesAccept) {
  // f(x + a d) == f(x) + gamma a d'g exactly for gamma = 0.5 and the Newton step.
  const auto f = half_square();
  const LineSearchResult r = backtrack(f, vec({2}), vec({-2}), vec({2}), params(0.5, 0.5, 1), 1.0, 2.0);
  EXPECT_EQ(r.backtracks, 0);
}

TEST(Backtrack, AlphaIsExactPowerExpression) {
  SplitMix64 rng(8);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int t = 0; t < 200; ++t) {
    const double delta = u(rng), gamma = u(rng), a0 = 1 + 20 * u(rng);
    const Vector x = gaussian_vector(2, rng);
    const LineSearchResult r =
        backtrack(half_square(), x, Vector(-x), x, params(gamma, delta, 30, 1000), a0, 0.5 * x.squaredNorm());
    EXPECT_EQ(r.alpha, a0 * std::pow(delta, r.backtracks));
    EXPECT_EQ(r.f_trial_count, r.backtracks + 1);
  }
}

TEST(Backtrack, MaximalityAgainstBruteForce) {
  SplitMix64 rng(31);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int t = 0; t < 200; ++t) {
    auto p = gen_interpolating_least_squares(5, 8, static_cast<std::uint64_t>(t), SpectrumSpec::parse("linear:0.5:3"));
    const Vector x = gaussian_vector(8, rng);
    const Batch batch{{static_cast<std::size_t>(t % 5)}};
    const Evaluation e = evaluate_batch(*p, batch, x);
    const Vector d = -e.gradient + 0.3 * gaussian_vector(8, rng) * e.gradient.norm() / std::sqrt(8.0);
    if (!(d.dot(e.gradient) < 0)) continue;
    const LineSearchParams lp = params(u(rng), u(rng), 10);
    auto oracle = [&](const Vector& y) { return batch_value(*p, batch, y); };
    const int expected = brute_force_j(oracle, x, d, e.gradient, 10.0, lp.gamma, lp.delta, 60);
    try {
      EXPECT_EQ(backtrack(oracle, x, d, e.gradient, lp, 10.0, e.value).backtracks, expected);
    } catch (const stall_error&) {
      EXPECT_EQ(expected, -1);
    }
  }
}

TEST(AlphaLow, Examples) {
  EXPECT_DOUBLE_EQ(alpha_low(1, 1, 0.5, 2), 0.5);
  EXPECT_DOUBLE_EQ(alpha_low(1, 1, 0.5, 1), 1.0);
  EXPECT_DOUBLE_EQ(alpha_low(2, 1, 0.5, 1), 0.25);
  EXPECT_THROW(alpha_low(0, 1, 0.5, 1), numeric_domain_error);
  EXPECT_THROW(alpha_low(1, 1, 0.5, 0), numeric_domain_error);
  EXPECT_THROW(alpha_low(1, 1, 1.0, 1), numeric_domain_error);
}

TEST(Jstar, Examples) {
  EXPECT_EQ(jstar(1, 0.1, 0.5), 4);
  EXPECT_EQ(jstar(0.05, 0.1, 0.5), 0);
  EXPECT_EQ(jstar(0.1, 0.1, 0.5), 0);
  EXPECT_EQ(jstar(8, 1, 0.5), 3);  // exact power of 1/delta
  EXPECT_EQ(jstar(8.000001, 1, 0.5), 4);
  EXPECT_THROW(jstar(0, 1, 0.5), numeric_domain_error);
  EXPECT_THROW(jstar(1, 1, 1.0), numeric_domain_error);
}

TEST(Jstar, IsSmallestIndexReachingAlphaLow) {
  SplitMix64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int t = 0; t < 1000; ++t) {
    const double amax = 100 * u(rng), alow = u(rng), delta = u(rng);
    const int j = jstar(amax, alow, delta);
    EXPECT_LE(step_at(amax, delta, j), alow);
    if (j > 0) EXPECT_GT(step_at(amax, delta, j - 1), alow);
  }
}

TEST(NextAlpha0, Policies) {
  LineSearchParams p = params(0.1, 0.5, 1);
  LineSearchResult prev;
  prev.alpha = 0.25;
  EXPECT_EQ(next_alpha0(p, prev), 1.0);
  EXPECT_EQ(next_alpha0(p, std::nullopt), 1.0);
  p.alpha0_policy = Alpha0Policy::warm_increase;
  EXPECT_EQ(next_alpha0(p, prev), 0.5);
  prev.alpha = 0.8;
  EXPECT_EQ(next_alpha0(p, prev), 1.0);
  EXPECT_EQ(next_alpha0(p, std::nullopt), 1.0);
  p.warm_power = 2;
  prev.alpha = 0.125;
  EXPECT_EQ(next_alpha0(p, prev), 0.5);
}

TEST(LineSearchParams, Validation) {
  EXPECT_NO_THROW(LineSearchParams{}.validate());
  EXPECT_THROW(params(1.5, 0.5, 1).validate(), config_error);
  EXPECT_THROW(params(0.0, 0.5, 1).validate(), config_error);
  EXPECT_THROW(params(0.5, 1.0, 1).validate(), config_error);
  EXPECT_THROW(params(0.5, 0.5, 0).validate(), config_error);
  EXPECT_THROW(params(0.5, 0.5, 1, 0).validate(), config_error);
  try {
    params(1.5, 0.5, 1).validate();
  } catch (const config_error& e) {
    EXPECT_NE(std::string(e.what()).find("gamma"), std::string::npos);
  }
}
