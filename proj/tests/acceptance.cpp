// Property-based acceptance suite. One line per criterion; nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <future>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "support.hpp"

using namespace sls;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

RunConfig least_squares_run(const std::string& direction, double c1, double c2, std::uint64_t seed, int max_iters) {
  ExperimentConfig cfg = parse_config(sls::testing::least_squares_config(direction, c1, c2));
  cfg.run.seed = seed;
  cfg.run.max_iters = max_iters;
  if (direction == "momentum") cfg.direction.beta = 0.9;
  return to_run_config(cfg);
}

RunResult run_capturing(const RunConfig& rc) {
  try {
    return run(rc);
  } catch (const run_error& e) {
    RunResult r = e.partial();
    r.status = RunStatus::stalled;
    r.message = e.what();
    return r;
  }
}

std::vector<RunResult> run_seeds(const std::function<RunConfig(std::uint64_t)>& make, int seeds) {
  std::vector<std::future<RunResult>> jobs;
  for (int s = 0; s < seeds; ++s)
    jobs.push_back(std::async(std::launch::async, [&make, s] { return run_capturing(make(s)); }));
  std::vector<RunResult> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

double gap_of(const RunResult& r, double f_star) { return r.final_f - f_star; }

// ---------------------------------------------------------------------------

Outcome armijo_sufficiency() {
  const auto t0 = Clock::now();
  SplitMix64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int counterexamples = 0, checks = 0;
  for (int t = 0; t < 50; ++t) {
    const Eigen::Index n = 2 + t % 7;
    const RowMatrix M = RowMatrix::NullaryExpr(n, n, [&] { return u(rng) - 0.5; });
    const RowMatrix H = M.transpose() * M + 0.01 * RowMatrix::Identity(n, n);
    const Vector c = gaussian_vector(n, rng);
    const double L = Eigen::SelfAdjointEigenSolver<RowMatrix>(H).eigenvalues().maxCoeff();
    auto f = [&](const Vector& x) { return 0.5 * (x - c).dot(H * (x - c)); };
    const double gamma = 0.05 + 0.9 * u(rng);
    const double alow = alpha_low(1.0, 1.0, gamma, L);
    for (int p = 0; p < 5; ++p) {
      const Vector x = gaussian_vector(n, rng);
      const Vector g = H * (x - c);
      for (int a = 1; a <= 40; ++a) {
        const double alpha = alow * a / 40.0;
        ++checks;
        if (!armijo_holds(f, x, Vector(-g), g, alpha, gamma, f(x))) ++counterexamples;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {counterexamples == 0 && secs < 1.0,
          std::to_string(counterexamples) + " counterexamples in " + std::to_string(checks) + " checks, " +
              fmt("%.3f s", secs)};
}

Outcome step_bounds_verified() {
  const fs::path dir = sls::testing::scratch_dir("acceptance_verify");
  sls::testing::write_file(dir / "ls.cfg", sls::testing::least_squares_config());
  CommandOptions o;
  o.config_path = (dir / "ls.cfg").string();
  o.use_env = false;
  std::ostringstream out, err;
  const auto t0 = Clock::now();
  const int code = cmd_verify(o, {}, out, err);
  const double secs = seconds_since(t0);
  std::string rows;
  std::istringstream in(out.str());
  for (std::string line; std::getline(in, line);)
    if (line.rfind("rows = ", 0) == 0) rows = line.substr(7);
  return {code == 0 && secs < 10.0,
          "exit " + std::to_string(code) + ", " + rows + " rows, " + fmt("%.2f s", secs) +
              (err.str().empty() ? "" : ", " + err.str().substr(0, err.str().find('\n')))};
}

int brute_force_j(const std::function<double(const Vector&)>& f, const Vector& x, const Vector& d, const Vector& g,
                  double alpha0, double gamma, double delta) {
  const double fx = f(x);
  for (int j = 0; j <= 60; ++j) {
    const double a = step_at(alpha0, delta, j);
    const double v = f(x + a * d);
    if (std::isfinite(v) && v <= fx + gamma * a * d.dot(g)) return j;
  }
  return -1;
}

Outcome backtracking_maximality() {
  SplitMix64 rng(303);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int agree = 0, instances = 0, stalls = 0;
  std::vector<ProblemPtr> problems;
  for (std::uint64_t s = 0; s < 10; ++s) {
    problems.push_back(gen_interpolating_least_squares(8, 12, s, SpectrumSpec::parse("linear:0.5:4")));
    problems.push_back(gen_nonconvex_interpolating(6, 2, 3, s));
  }
  while (instances < 1000) {
    const ProblemPtr& p = problems[static_cast<std::size_t>(instances) % problems.size()];
    const Eigen::Index n = p->dimension();
    const Batch batch{{static_cast<std::size_t>(rng() % p->num_components())}};
    const Vector x = gaussian_vector(n, rng, 2.0 / std::sqrt(static_cast<double>(n)));
    const Evaluation e = evaluate_batch(*p, batch, x);
    if (!(e.gradient.norm() > 0.0)) continue;
    const Vector d = -e.gradient + 0.5 * e.gradient.norm() / std::sqrt(static_cast<double>(n)) * gaussian_vector(n, rng);
    if (!(d.dot(e.gradient) < 0.0)) continue;
    LineSearchParams lp;
    lp.gamma = 0.05 + 0.9 * u(rng);
    lp.delta = 0.05 + 0.9 * u(rng);
    lp.alpha_max = 0.1 + 20 * u(rng);
    lp.max_backtracks = 60;
    auto f = [&](const Vector& y) { return batch_value(*p, batch, y); };
    const int expected = brute_force_j(f, x, d, e.gradient, lp.alpha_max, lp.gamma, lp.delta);
    int got = -1;
    try {
      got = backtrack(f, x, d, e.gradient, lp, lp.alpha_max, e.value).backtracks;
    } catch (const stall_error&) {
      ++stalls;
    }
    ++instances;
    if (got == expected) ++agree;
  }
  return {agree == instances,
          std::to_string(agree) + "/" + std::to_string(instances) + " agree (" + std::to_string(stalls) +
              " stalls on both sides)"};
}

Outcome sgd_linear_convergence() {
  const auto t0 = Clock::now();
  const auto results = run_seeds([](std::uint64_t s) { return least_squares_run("sgd", 1, 1, s, 5000); }, 20);
  const double f_star = least_squares_run("sgd", 1, 1, 0, 1).problem->known_constants()->f_star;
  int converged = 0;
  for (const auto& r : results)
    if (r.iterations() <= 5000 && gap_of(r, f_star) <= 1e-8) ++converged;
  std::vector<std::size_t> order(results.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return results[a].iterations() < results[b].iterations();
  });
  const RunResult& median = results[order[order.size() / 2 - 1]];
  ContractionEstimate ce;
  bool fit_ok = true;
  try {
    ce = contraction_estimate(median.trajectory, f_star);
  } catch (const error&) {
    fit_ok = false;
  }
  const double secs = seconds_since(t0);
  const bool pass = converged >= 18 && fit_ok && ce.per_iter_rate < 1.0 && ce.r_squared >= 0.9 && secs < 60.0;
  return {pass, std::to_string(converged) + "/20 converged, median rate " + fmt("%.6f", ce.per_iter_rate) +
                    " r2 " + fmt("%.4f", ce.r_squared) + ", " + fmt("%.1f s", secs)};
}

Outcome safeguarded_directions() {
  std::ostringstream detail;
  bool pass = true;
  for (const std::string kind : {"momentum", "cg"}) {
    const auto results = run_seeds([&](std::uint64_t s) { return least_squares_run(kind, 10, 0.1, s, 10000); }, 20);
    int converged = 0, bad_rows = 0;
    long long rows = 0, restarts = 0;
    for (const auto& r : results) {
      if (r.status == RunStatus::converged_fgap || r.status == RunStatus::converged_grad) ++converged;
      for (const auto& rec : r.trajectory) {
        ++rows;
        restarts += rec.restarted ? 1 : 0;
        if (rec.g_batch_norm == 0.0) continue;
        if (!(rec.d_norm <= 10.0 * rec.g_batch_norm) || !(rec.dTg <= -0.1 * rec.g_batch_sq_norm)) ++bad_rows;
      }
    }
    pass = pass && converged >= 18 && bad_rows == 0;
    detail << kind << " " << converged << "/20 converged, " << bad_rows << " rows violate SGR, restart rate "
           << fmt("%.4f", rows ? static_cast<double>(restarts) / static_cast<double>(rows) : 0.0) << "; ";
  }
  std::string s = detail.str();
  return {pass, s.substr(0, s.size() - 2)};
}

Outcome eta_bound() {
  TheoremConstants tc;
  tc.L_max = 1;
  tc.c1 = tc.c2 = 1;
  tc.c3 = 0;
  tc.gamma = tc.delta = 0.5;
  tc.mu = 1;
  tc.rho = 1;
  const double e1 = compute_eta(tc).eta;
  tc.mu = 1.4;
  const double e2 = compute_eta(tc).eta;
  const bool formula_ok = std::abs(e1 - 1.0) <= 1e-12 && std::abs(e2 - 0.2) <= 1e-12;
  std::string detail = "eta " + fmt("%.15g", e1) + " and " + fmt("%.15g", e2);

  // Single-row least squares: f = f_1, so rho = 1, c3 = 0 and mu = L = L_max.
  const auto p = gen_interpolating_least_squares(1, 10, 7, SpectrumSpec{});
  const KnownConstants& k = *p->known_constants();
  TheoremConstants best;
  EtaReport best_report;
  bool found = false;
  for (int gi = 1; gi <= 19; ++gi)
    for (int di = 1; di <= 19; ++di) {
      TheoremConstants c;
      c.c1 = c.c2 = 1;
      c.c3 = 0;
      c.rho = 1;
      c.mu = *k.mu;
      c.L = *k.L;
      c.L_max = *k.L_max;
      c.gamma = gi / 20.0;
      c.delta = di / 20.0;
      c.alpha_max = 2.0 / c.L_max;
      const EtaReport r = compute_eta(c);
      if (r.applicable() && (!found || r.certified_rate < best_report.certified_rate)) {
        best = c;
        best_report = r;
        found = true;
      }
    }
  if (!found) return {formula_ok, detail + "; bound inapplicable"};

  const int K = 15;
  const auto results = run_seeds(
      [&](std::uint64_t s) {
        RunConfig rc;
        rc.problem = p;
        rc.linesearch.gamma = best.gamma;
        rc.linesearch.delta = best.delta;
        rc.linesearch.alpha_max = best.alpha_max;
        rc.sgr = {1, 1};
        rc.seed = s;
        rc.max_iters = K;
        rc.trace_every = 1;
        rc.grad_tol = 0;
        rc.fgap_tol = 0;
        return rc;
      },
      20);
  std::vector<double> mean(K + 1, 0.0);
  for (const auto& r : results) {
    std::vector<double> gaps;
    for (const auto& rec : r.trajectory) gaps.push_back(*rec.f_full - k.f_star);
    gaps.push_back(r.final_f - k.f_star);
    while (gaps.size() < mean.size()) gaps.push_back(gaps.back());
    for (int i = 0; i <= K; ++i) mean[i] += gaps[i] / 20.0;
  }
  int violations = 0;
  for (int i = 0; i <= K; ++i)
    if (mean[i] > std::pow(best_report.certified_rate, i) * mean[0] * (1 + 1e-12)) ++violations;
  return {formula_ok && violations == 0,
          detail + "; gamma " + fmt("%g", best.gamma) + " delta " + fmt("%g", best.delta) + " rate " +
              fmt("%.4f", best_report.certified_rate) + ", " + std::to_string(violations) + " bound violations over " +
              std::to_string(K + 1) + " iterates"};
}

Outcome moment_identities() {
  std::vector<std::pair<std::string, ProblemPtr>> instances = {
      {"least_squares", gen_interpolating_least_squares(100, 200, 1, SpectrumSpec{})},
      {"least_squares_small", gen_interpolating_least_squares(6, 10, 2, SpectrumSpec::parse("geometric:0.1:3"))},
      {"nonconvex", gen_nonconvex_interpolating(50, 4, 8, 3)},
      {"two_component", sls::testing::two_component_toy()},
      {"single_row", gen_interpolating_least_squares(1, 5, 4, SpectrumSpec{})},
  };
  double worst = 0.0, min_rho = std::numeric_limits<double>::infinity();
  SplitMix64 rng(707);
  for (const auto& [name, p] : instances) {
    const auto points = sample_points(*p, 100, 11);
    for (const auto& x : points) {
      DirectionState st(Momentum{0.7}, p->dimension());
      st.memory.prev_x = x + gaussian_vector(p->dimension(), rng);
      const MomentReport m = exact_moments(*p, x, frozen_direction_rule(st, x, std::nullopt));
      const double lhs = m.E_dTg, rhs = m.E_d.dot(m.E_g) + m.cov_dg;
      const double scale = std::max({std::abs(lhs), std::abs(m.E_d.dot(m.E_g)), std::abs(m.cov_dg), 1e-300});
      worst = std::max(worst, std::abs(lhs - rhs) / scale);
      const double vr = m.E_norm_g_sq - m.E_g.squaredNorm();
      worst = std::max(worst, std::abs(m.var_g - vr) / std::max(m.E_norm_g_sq, 1e-300));
    }
    min_rho = std::min(min_rho, estimate_rho(*p, points).value);
    for (const auto& x : points) {
      const Evaluation full = full_oracle(*p, x);
      if (full.gradient.norm() <= 1e-10) continue;
      const MomentReport m = exact_moments(*p, x, negative_gradient_rule());
      min_rho = std::min(min_rho, m.E_norm_g_sq / full.gradient.squaredNorm());
    }
  }
  return {worst <= 1e-10 && min_rho >= 1.0,
          "worst relative residual " + fmt("%.3g", worst) + ", min rho " + fmt("%.17g", min_rho)};
}

Outcome expected_direction_bounds() {
  const auto p = gen_interpolating_least_squares(100, 200, 1, SpectrumSpec{});
  const auto points = sample_points(*p, 100, 12);
  TheoremConstants tc;
  tc.c1 = tc.c2 = tc.c3 = 1;
  tc.rho = estimate_rho(*p, points).value;
  double min_norm = std::numeric_limits<double>::infinity(), min_descent = min_norm;
  for (const auto& x : points) {
    const LemmaCheck lc = verify_lemma_bounds(*p, x, negative_gradient_rule(), tc);
    min_norm = std::min(min_norm, lc.norm_slack);
    min_descent = std::min(min_descent, lc.descent_slack);
  }
  return {min_norm >= -1e-10 && min_descent >= -1e-10,
          "rho " + fmt("%.6g", tc.rho) + ", min norm slack " + fmt("%.3g", min_norm) + ", min descent slack " +
              fmt("%.3g", min_descent)};
}

Outcome gradient_checks() {
  std::vector<std::pair<std::string, ProblemPtr>> gens = {
      {"least_squares", gen_interpolating_least_squares(20, 30, 5, SpectrumSpec::parse("linear:0.5:3"))},
      {"nonconvex", gen_nonconvex_interpolating(20, 3, 5, 6)},
  };
  const fs::path dir = sls::testing::scratch_dir("acceptance_matrix");
  sls::testing::write_file(dir / "m.txt", "3 4\n1 2 0 -1\n0 1 3 2\n2 0 1 1\n1 2 3\n");
  gens.emplace_back("matrix", load_least_squares((dir / "m.txt").string()));
  std::ostringstream detail;
  bool pass = true;
  for (const auto& [name, p] : gens) {
    double worst = 0.0;
    for (const auto& x : sample_points(*p, 100, 21, 3.0)) {
      const Vector g = full_oracle(*p, x).gradient;
      const Vector fd = sls::testing::fd_gradient(*p, x);
      worst = std::max(worst, (fd - g).norm() / std::max(g.norm(), 1e-8));
    }
    pass = pass && worst <= 1e-5;
    detail << name << " " << fmt("%.2g", worst) << " ";
  }
  std::string s = detail.str();
  return {pass, "worst relative error: " + s.substr(0, s.size() - 1)};
}

Outcome deterministic_csv() {
  const fs::path dir = sls::testing::scratch_dir("acceptance_determinism");
  sls::testing::write_file(dir / "ls.cfg", sls::testing::least_squares_config("momentum", 10, 0.1));
  std::vector<std::string> outputs;
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path csv = dir / ("trace" + std::to_string(rep) + ".csv");
    CommandOptions o;
    o.config_path = (dir / "ls.cfg").string();
    o.use_env = false;
    o.seed = 5;
    o.overrides = {"run.max_iters=1000", "run.trace_every=1", "run.out_csv=" + csv.string()};
    std::ostringstream out, err;
    cmd_run(o, out, err);
    outputs.push_back(sls::testing::read_file(csv));
  }
  const bool same = !outputs[0].empty() && outputs[0] == outputs[1];
  return {same, std::to_string(outputs[0].size()) + " bytes, " + (same ? "identical" : "different")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"armijo sufficiency below alpha_low", armijo_sufficiency},
      {"step size and backtrack bounds (verify)", step_bounds_verified},
      {"backtracking maximality", backtracking_maximality},
      {"sgd linear convergence", sgd_linear_convergence},
      {"safeguarded momentum and cg", safeguarded_directions},
      {"eta formula and certified bound", eta_bound},
      {"moment identities", moment_identities},
      {"expected direction bounds", expected_direction_bounds},
      {"finite difference gradients", gradient_checks},
      {"deterministic csv", deterministic_csv},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << "criterion " << (i + 1) << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " passed"
            << std::endl;
  return failures == 0 ? 0 : 1;
}
