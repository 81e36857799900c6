#pragma once

/// \file config.hpp
///
/// Experiment configuration: a flat, sectioned `key = value` text format.
///
///     # comment (also after a value: `gamma = 0.1  # note`)
///     [problem]
///     kind = least_squares
///     N = 100
///
/// Grammar, line by line: blank lines and lines starting with `#` or `;` are
/// ignored; `[name]` opens a section; `key = value` sets a key of the current
/// section (surrounding whitespace trimmed). Unknown sections or keys,
/// duplicate keys, and keys outside a section are errors. Every key is
/// optional and has the default shown by `serialize(ExperimentConfig{})`.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "directions.hpp"
#include "errors.hpp"
#include "linesearch.hpp"
#include "optimizer.hpp"
#include "problems.hpp"

namespace sls {

struct ExperimentConfig {
  struct Problem {
    std::string kind = "least_squares";  ///< least_squares | nonconvex | matrix
    std::size_t N = 100;
    std::size_t n = 200;
    std::size_t n_u = 4;  ///< nonconvex only
    std::size_t n_v = 8;  ///< nonconvex only
    std::uint64_t seed = 1;
    SpectrumSpec spectrum{SpectrumSpec::Kind::linear, 1.0, 2.0, {}};
    std::string file;  ///< matrix only
    friend bool operator==(const Problem&, const Problem&) = default;
  } problem;

  struct Direction {
    std::string kind = "sgd";  ///< sgd | momentum | cg | adagrad
    double beta = 0.9;
    std::string cg_variant = "pr_plus";  ///< pr_plus | fr
    double beta_cap = 10.0;
    double epsilon = 1e-8;
    double c1 = 10.0;
    double c2 = 0.1;
    bool safeguard = true;
    friend bool operator==(const Direction&, const Direction&) = default;
  } direction;

  LineSearchParams linesearch;

  struct Run {
    int max_iters = 5000;
    double grad_tol = 1e-10;
    double fgap_tol = 1e-8;
    std::uint64_t seed = 0;
    int trace_every = 10;
    std::size_t batch_size = 1;
    std::string x0 = "random";  ///< random | xstar | constant:V | list:V1,V2,...
    std::string out_csv;
    std::string out_svg;
    friend bool operator==(const Run&, const Run&) = default;
  } run;

  /// Directory against which a relative problem.file is resolved. Not serialized.
  std::string base_dir;

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.problem == b.problem && a.direction == b.direction && a.linesearch == b.linesearch && a.run == b.run;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) throw config_error(key + ": expected a number, got '" + text + "'");
  return v;
}

inline long long parse_int(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const long long v = std::strtoll(text.c_str(), &end, 10);
  if (text.empty() || end != text.c_str() + text.size()) throw config_error(key + ": expected an integer, got '" + text + "'");
  return v;
}

inline std::size_t parse_count(const std::string& key, const std::string& text) {
  const long long v = parse_int(key, text);
  if (v < 0) throw config_error(key + ": must be >= 0");
  return static_cast<std::size_t>(v);
}

inline std::uint64_t parse_seed(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
  if (text.empty() || text[0] == '-' || end != text.c_str() + text.size())
    throw config_error(key + ": expected an unsigned integer, got '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw config_error(key + ": expected true or false, got '" + text + "'");
}

struct ConfigField {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;

  [[nodiscard]] std::string path() const { return section + "." + key; }
};

inline const std::vector<ConfigField>& config_fields() {
  using C = ExperimentConfig;
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    auto add = [&](std::string s, std::string k, std::function<void(C&, const std::string&)> set,
                   std::function<std::string(const C&)> get) {
      f.push_back({std::move(s), std::move(k), std::move(set), std::move(get)});
    };
    auto d = [](double v) { return format_double(v); };
    auto i = [](auto v) { return std::to_string(v); };
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };

    add("problem", "kind", [](C& c, const std::string& v) { c.problem.kind = v; }, [](const C& c) { return c.problem.kind; });
    add("problem", "N", [](C& c, const std::string& v) { c.problem.N = parse_count("problem.N", v); }, [=](const C& c) { return i(c.problem.N); });
    add("problem", "n", [](C& c, const std::string& v) { c.problem.n = parse_count("problem.n", v); }, [=](const C& c) { return i(c.problem.n); });
    add("problem", "n_u", [](C& c, const std::string& v) { c.problem.n_u = parse_count("problem.n_u", v); }, [=](const C& c) { return i(c.problem.n_u); });
    add("problem", "n_v", [](C& c, const std::string& v) { c.problem.n_v = parse_count("problem.n_v", v); }, [=](const C& c) { return i(c.problem.n_v); });
    add("problem", "seed", [](C& c, const std::string& v) { c.problem.seed = parse_seed("problem.seed", v); }, [=](const C& c) { return i(c.problem.seed); });
    add("problem", "spectrum",
        [](C& c, const std::string& v) {
          try {
            c.problem.spectrum = SpectrumSpec::parse(v);
          } catch (const invalid_spec_error& e) {
            throw config_error(std::string("problem.spectrum: ") + e.what());
          }
        },
        [](const C& c) { return c.problem.spectrum.to_string(); });
    add("problem", "file", [](C& c, const std::string& v) { c.problem.file = v; }, [](const C& c) { return c.problem.file; });

    add("direction", "kind", [](C& c, const std::string& v) { c.direction.kind = v; }, [](const C& c) { return c.direction.kind; });
    add("direction", "beta", [](C& c, const std::string& v) { c.direction.beta = parse_double("direction.beta", v); }, [=](const C& c) { return d(c.direction.beta); });
    add("direction", "cg_variant", [](C& c, const std::string& v) { c.direction.cg_variant = v; }, [](const C& c) { return c.direction.cg_variant; });
    add("direction", "beta_cap", [](C& c, const std::string& v) { c.direction.beta_cap = parse_double("direction.beta_cap", v); }, [=](const C& c) { return d(c.direction.beta_cap); });
    add("direction", "epsilon", [](C& c, const std::string& v) { c.direction.epsilon = parse_double("direction.epsilon", v); }, [=](const C& c) { return d(c.direction.epsilon); });
    add("direction", "c1", [](C& c, const std::string& v) { c.direction.c1 = parse_double("direction.c1", v); }, [=](const C& c) { return d(c.direction.c1); });
    add("direction", "c2", [](C& c, const std::string& v) { c.direction.c2 = parse_double("direction.c2", v); }, [=](const C& c) { return d(c.direction.c2); });
    add("direction", "safeguard", [](C& c, const std::string& v) { c.direction.safeguard = parse_bool("direction.safeguard", v); }, [=](const C& c) { return b(c.direction.safeguard); });

    add("linesearch", "gamma", [](C& c, const std::string& v) { c.linesearch.gamma = parse_double("linesearch.gamma", v); }, [=](const C& c) { return d(c.linesearch.gamma); });
    add("linesearch", "delta", [](C& c, const std::string& v) { c.linesearch.delta = parse_double("linesearch.delta", v); }, [=](const C& c) { return d(c.linesearch.delta); });
    add("linesearch", "alpha_max", [](C& c, const std::string& v) { c.linesearch.alpha_max = parse_double("linesearch.alpha_max", v); }, [=](const C& c) { return d(c.linesearch.alpha_max); });
    add("linesearch", "alpha0_policy",
        [](C& c, const std::string& v) {
          if (v == "constant") c.linesearch.alpha0_policy = Alpha0Policy::constant;
          else if (v == "warm_increase") c.linesearch.alpha0_policy = Alpha0Policy::warm_increase;
          else throw config_error("linesearch.alpha0_policy: expected constant or warm_increase, got '" + v + "'");
        },
        [](const C& c) { return std::string(c.linesearch.alpha0_policy == Alpha0Policy::constant ? "constant" : "warm_increase"); });
    add("linesearch", "warm_power", [](C& c, const std::string& v) { c.linesearch.warm_power = static_cast<int>(parse_int("linesearch.warm_power", v)); }, [=](const C& c) { return i(c.linesearch.warm_power); });
    add("linesearch", "max_backtracks", [](C& c, const std::string& v) { c.linesearch.max_backtracks = static_cast<int>(parse_int("linesearch.max_backtracks", v)); }, [=](const C& c) { return i(c.linesearch.max_backtracks); });

    add("run", "max_iters", [](C& c, const std::string& v) { c.run.max_iters = static_cast<int>(parse_int("run.max_iters", v)); }, [=](const C& c) { return i(c.run.max_iters); });
    add("run", "grad_tol", [](C& c, const std::string& v) { c.run.grad_tol = parse_double("run.grad_tol", v); }, [=](const C& c) { return d(c.run.grad_tol); });
    add("run", "fgap_tol", [](C& c, const std::string& v) { c.run.fgap_tol = parse_double("run.fgap_tol", v); }, [=](const C& c) { return d(c.run.fgap_tol); });
    add("run", "seed", [](C& c, const std::string& v) { c.run.seed = parse_seed("run.seed", v); }, [=](const C& c) { return i(c.run.seed); });
    add("run", "trace_every", [](C& c, const std::string& v) { c.run.trace_every = static_cast<int>(parse_int("run.trace_every", v)); }, [=](const C& c) { return i(c.run.trace_every); });
    add("run", "batch_size", [](C& c, const std::string& v) { c.run.batch_size = parse_count("run.batch_size", v); }, [=](const C& c) { return i(c.run.batch_size); });
    add("run", "x0", [](C& c, const std::string& v) { c.run.x0 = v; }, [](const C& c) { return c.run.x0; });
    add("run", "out_csv", [](C& c, const std::string& v) { c.run.out_csv = v; }, [](const C& c) { return c.run.out_csv; });
    add("run", "out_svg", [](C& c, const std::string& v) { c.run.out_svg = v; }, [](const C& c) { return c.run.out_svg; });
    return f;
  }();
  return fields;
}

inline const ConfigField* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : config_fields())
    if (f.section == section && f.key == key) return &f;
  return nullptr;
}

}  // namespace detail

/// Parses the text form. Values are type-checked here; cross-field invariants
/// are checked by `to_run_config`.
inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::set<std::string> seen;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    // A comment starts at '#' or ';' at line start or after whitespace.
    for (std::size_t p = 0; p < line.size(); ++p) {
      if ((line[p] == '#' || line[p] == ';') && (p == 0 || std::isspace(static_cast<unsigned char>(line[p - 1])))) {
        line.erase(p);
        break;
      }
    }
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw config_error(where + "malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "problem" && section != "direction" && section != "linesearch" && section != "run")
        throw config_error(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error(where + "expected 'key = value'");
    if (section.empty()) throw config_error(where + "key outside of a section");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto* field = detail::find_field(section, key);
    if (field == nullptr) throw config_error(where + "unknown key '" + section + "." + key + "'");
    if (!seen.insert(field->path()).second) throw config_error(where + "duplicate key '" + field->path() + "'");
    try {
      field->set(cfg, value);
    } catch (const config_error& e) {
      throw config_error(where + e.what());
    }
  }
  return cfg;
}

/// Canonical text form; parse_config(serialize(c)) == c.
inline std::string serialize(const ExperimentConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : detail::config_fields()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(cfg) << '\n';
  }
  return out.str();
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  ExperimentConfig cfg = parse_config(buf.str());
  cfg.base_dir = std::filesystem::path(path).parent_path().string();
  return cfg;
}

/// Applies `section.key=value`.
inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw config_error("override '" + assignment + "' is not of the form section.key=value");
  const std::string section = detail::trim(assignment.substr(0, dot));
  const std::string key = detail::trim(assignment.substr(dot + 1, eq - dot - 1));
  const auto* field = detail::find_field(section, key);
  if (field == nullptr) throw config_error("override names unknown key '" + section + "." + key + "'");
  field->set(cfg, detail::trim(assignment.substr(eq + 1)));
}

/// Environment overrides: SLS_<SECTION>_<KEY>, e.g. SLS_RUN_SEED=7 or
/// SLS_LINESEARCH_ALPHA_MAX=1. Keys are matched case-insensitively.
inline void apply_env_overrides(ExperimentConfig& cfg, const std::string& prefix = "SLS_") {
  for (const auto& f : detail::config_fields()) {
    std::string name = prefix + f.section + "_" + f.key;
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::toupper(ch); });
    if (const char* value = std::getenv(name.c_str())) {
      try {
        f.set(cfg, value);
      } catch (const config_error& e) {
        throw config_error(name + ": " + e.what());
      }
    }
  }
}

inline DirectionKind make_direction_kind(const ExperimentConfig::Direction& d) {
  if (d.kind == "sgd") return Sgd{};
  if (d.kind == "momentum") return Momentum{d.beta};
  if (d.kind == "cg") {
    CgVariant variant;
    if (d.cg_variant == "pr_plus") variant = CgVariant::polak_ribiere_plus;
    else if (d.cg_variant == "fr") variant = CgVariant::fletcher_reeves;
    else throw config_error("direction.cg_variant: expected pr_plus or fr, got '" + d.cg_variant + "'");
    return ConjugateGradient{variant, d.beta_cap};
  }
  if (d.kind == "adagrad") return AdagradDiag{d.epsilon};
  throw config_error("direction.kind: expected sgd, momentum, cg or adagrad, got '" + d.kind + "'");
}

inline ProblemPtr make_problem(const ExperimentConfig& cfg) {
  const auto& p = cfg.problem;
  try {
    if (p.kind == "least_squares") return gen_interpolating_least_squares(p.N, p.n, p.seed, p.spectrum);
    if (p.kind == "nonconvex") return gen_nonconvex_interpolating(p.N, p.n_u, p.n_v, p.seed);
    if (p.kind == "matrix") {
      if (p.file.empty()) throw config_error("problem.file is required for kind = matrix");
      std::filesystem::path path(p.file);
      if (path.is_relative() && !cfg.base_dir.empty()) path = std::filesystem::path(cfg.base_dir) / path;
      return load_least_squares(path.string());
    }
  } catch (const invalid_spec_error& e) {
    throw config_error(std::string("problem: ") + e.what());
  }
  throw config_error("problem.kind: expected least_squares, nonconvex or matrix, got '" + p.kind + "'");
}

inline Vector parse_initial_point(const std::string& spec, const FiniteSumProblem& problem) {
  const Eigen::Index n = problem.dimension();
  if (spec == "xstar") {
    const auto& known = problem.known_constants();
    if (!known || known->x_star.size() != n) throw config_error("run.x0 = xstar needs a problem with known x*");
    return known->x_star;
  }
  if (spec.rfind("constant:", 0) == 0) return Vector::Constant(n, detail::parse_double("run.x0", spec.substr(9)));
  if (spec.rfind("list:", 0) == 0) {
    std::vector<double> values;
    std::stringstream ss(spec.substr(5));
    std::string tok;
    while (std::getline(ss, tok, ',')) values.push_back(detail::parse_double("run.x0", detail::trim(tok)));
    if (static_cast<Eigen::Index>(values.size()) != n)
      throw config_error("run.x0 lists " + std::to_string(values.size()) + " entries, problem dimension is " +
                         std::to_string(n));
    return Eigen::Map<Vector>(values.data(), n);
  }
  throw config_error("run.x0: expected random, xstar, constant:V or list:V1,...; got '" + spec + "'");
}

/// Builds and validates the optimizer configuration (this is where invariants
/// such as 0 < gamma < 1 are enforced).
inline RunConfig to_run_config(const ExperimentConfig& cfg, ProblemPtr problem = nullptr) {
  RunConfig rc;
  rc.problem = problem ? std::move(problem) : make_problem(cfg);
  rc.direction = make_direction_kind(cfg.direction);
  rc.safeguard = cfg.direction.safeguard;
  rc.sgr = SgrParams{cfg.direction.c1, cfg.direction.c2};
  rc.linesearch = cfg.linesearch;
  rc.batch_size = cfg.run.batch_size;
  rc.max_iters = cfg.run.max_iters;
  rc.grad_tol = cfg.run.grad_tol;
  rc.fgap_tol = cfg.run.fgap_tol;
  rc.seed = cfg.run.seed;
  rc.trace_every = cfg.run.trace_every;
  if (cfg.run.x0 != "random") rc.x0 = parse_initial_point(cfg.run.x0, *rc.problem);
  rc.validate();
  return rc;
}

}  // namespace sls
