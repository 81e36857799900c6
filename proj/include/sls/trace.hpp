#pragma once

/// \file trace.hpp
///
/// Iteration traces on disk and their replay checks.
///
/// CSV schema (one row per iteration, header exactly as below):
///
///     k,f_full,grad_full_norm,f_batch,g_batch_norm,d_norm,dTg,alpha0,alpha,backtracks,sgr_pass,restarted
///
/// Reals are printed with %.17g (round-trip exact); f_full and grad_full_norm
/// are empty on iterations without a full-oracle evaluation; the two flags are
/// 0 or 1.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "directions.hpp"
#include "errors.hpp"
#include "linesearch.hpp"
#include "optimizer.hpp"

namespace sls {

inline constexpr const char* trace_csv_header =
    "k,f_full,grad_full_norm,f_batch,g_batch_norm,d_norm,dTg,alpha0,alpha,backtracks,sgr_pass,restarted";

namespace detail {

inline std::string csv_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double csv_parse_real(const std::string& cell, int line) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size())
    throw error("trace line " + std::to_string(line) + ": bad number '" + cell + "'");
  return v;
}

}  // namespace detail

inline void write_trace_csv(std::ostream& os, const std::vector<IterationRecord>& trajectory) {
  os << trace_csv_header << '\n';
  for (const auto& r : trajectory) {
    os << r.k << ',' << (r.f_full ? detail::csv_real(*r.f_full) : "") << ','
       << (r.grad_full_norm ? detail::csv_real(*r.grad_full_norm) : "") << ',' << detail::csv_real(r.f_batch) << ','
       << detail::csv_real(r.g_batch_norm) << ',' << detail::csv_real(r.d_norm) << ',' << detail::csv_real(r.dTg)
       << ',' << detail::csv_real(r.alpha0) << ',' << detail::csv_real(r.alpha) << ',' << r.backtracks << ','
       << (r.sgr_pass ? 1 : 0) << ',' << (r.restarted ? 1 : 0) << '\n';
  }
}

inline void write_trace_csv(const std::string& path, const std::vector<IterationRecord>& trajectory) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot write trace '" + path + "'");
  write_trace_csv(out, trajectory);
}

/// Reads rows back into IterationRecords. Fields absent from the CSV
/// (g_batch_sq_norm, f_batch_new, f_evals, batch_indices) are left at defaults,
/// except g_batch_sq_norm which is set to g_batch_norm^2.
inline std::vector<IterationRecord> read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw error("trace is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != trace_csv_header) throw error("trace header does not match the expected schema");
  std::vector<IterationRecord> rows;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 12) throw error("trace line " + std::to_string(line_no) + ": expected 12 fields");
    IterationRecord r;
    r.k = static_cast<int>(detail::csv_parse_real(cells[0], line_no));
    if (!cells[1].empty()) r.f_full = detail::csv_parse_real(cells[1], line_no);
    if (!cells[2].empty()) r.grad_full_norm = detail::csv_parse_real(cells[2], line_no);
    r.f_batch = detail::csv_parse_real(cells[3], line_no);
    r.g_batch_norm = detail::csv_parse_real(cells[4], line_no);
    r.g_batch_sq_norm = r.g_batch_norm * r.g_batch_norm;
    r.d_norm = detail::csv_parse_real(cells[5], line_no);
    r.dTg = detail::csv_parse_real(cells[6], line_no);
    r.alpha0 = detail::csv_parse_real(cells[7], line_no);
    r.alpha = detail::csv_parse_real(cells[8], line_no);
    r.backtracks = static_cast<int>(detail::csv_parse_real(cells[9], line_no));
    r.sgr_pass = cells[10] == "1";
    r.restarted = cells[11] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<IterationRecord> read_trace_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot read trace '" + path + "'");
  return read_trace_csv(in);
}

// ---------------------------------------------------------------------------
// SVG convergence plot

/// Writes a self-contained SVG of log10(gap) against k. Non-positive gaps are skipped.
inline void write_convergence_svg(std::ostream& os, const std::vector<std::pair<double, double>>& k_gap,
                                  const std::string& title) {
  constexpr double width = 800, height = 500, left = 80, right = 30, top = 50, bottom = 60;
  std::vector<std::pair<double, double>> pts;
  for (const auto& [k, gap] : k_gap)
    if (gap > 0.0 && std::isfinite(gap)) pts.emplace_back(k, std::log10(gap));

  double k_lo = 0, k_hi = 1, y_lo = -1, y_hi = 0;
  if (!pts.empty()) {
    k_lo = k_hi = pts.front().first;
    y_lo = y_hi = pts.front().second;
    for (const auto& [k, y] : pts) {
      k_lo = std::min(k_lo, k);
      k_hi = std::max(k_hi, k);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  }
  y_lo = std::floor(y_lo);
  y_hi = std::ceil(y_hi);
  if (y_hi <= y_lo) y_hi = y_lo + 1;
  if (k_hi <= k_lo) k_hi = k_lo + 1;
  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double k) { return left + (k - k_lo) / (k_hi - k_lo) * pw; };
  auto sy = [&](double y) { return top + (y_hi - y) / (y_hi - y_lo) * ph; };

  std::string escaped;
  for (char c : title) {
    if (c == '<') escaped += "&lt;";
    else if (c == '>') escaped += "&gt;";
    else if (c == '&') escaped += "&amp;";
    else escaped += c;
  }

  char buf[160];
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">" << escaped << "</text>\n";
  // axes
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  const int decades = static_cast<int>(y_hi - y_lo);
  const int ystep = std::max(1, decades / 10);
  for (int e = static_cast<int>(y_lo); e <= static_cast<int>(y_hi); e += ystep) {
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n", left,
                  sy(e), left + pw, sy(e));
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">1e%d</text>\n", left - 6,
                  sy(e) + 4, e);
    os << buf;
  }
  for (int t = 0; t <= 5; ++t) {
    const double k = k_lo + (k_hi - k_lo) * t / 5.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.0f</text>\n", sx(k),
                  top + ph + 18, k);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">iteration k</text>\n",
                left + pw / 2, height - 15);
  os << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"18\" y=\"%.1f\" text-anchor=\"middle\" transform=\"rotate(-90 18 %.1f)\">log10(f - f*)</text>\n",
                top + ph / 2, top + ph / 2);
  os << buf;
  if (!pts.empty()) {
    os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
    for (const auto& [k, y] : pts) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", sx(k), sy(y));
      os << buf;
    }
    os << "\"/>\n";
  }
  os << "</svg>\n";
}

inline void write_convergence_svg(const std::string& path, const std::vector<std::pair<double, double>>& k_gap,
                                  const std::string& title) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot write plot '" + path + "'");
  write_convergence_svg(out, k_gap, title);
}

// ---------------------------------------------------------------------------
// Trace-level verification of the step-size, backtrack and SGR bounds

struct TraceBounds {
  SgrParams sgr;
  double gamma = 0.1;
  double delta = 0.5;
  double alpha_max = 10.0;
  double L_max = 0.0;  ///< exact smoothness bound over all batch functions

  [[nodiscard]] double alpha_low_value() const { return alpha_low(sgr.c1, sgr.c2, gamma, L_max); }
  [[nodiscard]] double step_floor_factor() const { return delta * alpha_low_value(); }
  [[nodiscard]] int backtrack_ceiling() const { return jstar(alpha_max, alpha_low_value(), delta); }
};

struct TraceViolation {
  std::size_t row = 0;  ///< zero-based data row
  int k = 0;
  std::string what;
};

/// Checks every row: alpha0 in (0, alpha_max]; alpha == alpha0 delta^j;
/// j <= j*; alpha >= min(alpha0, delta alpha_low); the SGR bounds on the
/// realized d and g. With `has_batch_values` (in-memory trajectories) also the
/// Armijo certificate f_k(x_{k+1}) <= f_k(x_k) + gamma alpha d'g < f_k(x_k).
///
/// The descent bound uses ||g||^2 from the record. Rows read back from CSV
/// only carry ||g||, whose square may differ from the original by an ulp, so
/// `sq_norm_rel_tol` allows that much when checking CSV rows.
inline std::optional<TraceViolation> verify_trace(const std::vector<IterationRecord>& rows, const TraceBounds& b,
                                                  bool has_batch_values, double sq_norm_rel_tol = 0.0) {
  const double floor = b.step_floor_factor();
  const int ceiling = b.backtrack_ceiling();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const IterationRecord& r = rows[i];
    auto fail = [&](std::string what) { return TraceViolation{i, r.k, std::move(what)}; };
    if (r.g_batch_norm == 0.0) {
      if (r.d_norm != 0.0 || r.alpha != 0.0) return fail("zero batch gradient but a nonzero step was taken");
      continue;
    }
    if (!(r.alpha0 > 0.0) || r.alpha0 > b.alpha_max) return fail("alpha0 outside (0, alpha_max]");
    if (r.backtracks < 0 || r.alpha != step_at(r.alpha0, b.delta, r.backtracks))
      return fail("alpha is not alpha0 * delta^backtracks");
    if (r.backtracks > ceiling)
      return fail("backtracks " + std::to_string(r.backtracks) + " exceed j* = " + std::to_string(ceiling));
    if (r.alpha < std::min(r.alpha0, floor)) return fail("alpha below min(alpha0, delta * alpha_low)");
    if (!(r.d_norm <= b.sgr.c1 * r.g_batch_norm)) return fail("SGR norm bound ||d|| <= c1 ||g|| violated");
    const double rhs = -b.sgr.c2 * r.g_batch_sq_norm;
    if (!(r.dTg <= rhs + sq_norm_rel_tol * std::abs(rhs))) return fail("SGR descent bound d'g <= -c2 ||g||^2 violated");
    if (has_batch_values) {
      if (!(r.f_batch_new <= r.f_batch + b.gamma * r.alpha * r.dTg)) return fail("Armijo certificate violated");
      if (!(r.f_batch_new < r.f_batch)) return fail("batch function did not decrease");
    }
  }
  return std::nullopt;
}

}  // namespace sls
