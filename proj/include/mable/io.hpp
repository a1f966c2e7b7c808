#pragma once

// File formats: the observation CSV, the structured fit report (key-value
// header plus CSV blocks, floats at full round-trip precision), and the
// plotting CSVs for curves, degree tables, and simulation summaries.

#include <mable/optimizer.hpp>
#include <mable/degree_selection.hpp>
#include <mable/simulation.hpp>

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mable {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::string lower(std::string s) {
  for (char& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

inline double parse_double(const std::string& tok, const std::string& where) {
  const std::string t = trim(tok);
  if (t.empty()) throw IoError(where + ": empty numeric field");
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size())
    throw IoError(where + ": cannot parse '" + t + "' as a number");
  return v;
}

inline long parse_int(const std::string& tok, const std::string& where) {
  const std::string t = trim(tok);
  char* end = nullptr;
  const long v = std::strtol(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size())
    throw IoError(where + ": cannot parse '" + t + "' as an integer");
  return v;
}

// Lines of a text file, stripped of a trailing '\r' so CRLF inputs work.
inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open for writing");
  return out;
}

}  // namespace detail

// Observation CSV: header "y1,y2,delta,x1..xd"; y2 blank or "inf" is an
// infinite upper endpoint; delta 0 marks an exact time, 1 a censoring
// interval. Diagnostics carry the 1-based data row and the column name.
inline Dataset read_observations_csv(const std::string& path,
                                     std::optional<double> tau = std::nullopt) {
  const std::vector<std::string> lines = detail::read_lines(path);
  std::size_t idx = 0;
  while (idx < lines.size() && detail::trim(lines[idx]).empty()) ++idx;
  if (idx == lines.size()) throw IoError(path + ": missing header row");
  const std::vector<std::string> head = detail::split(lines[idx]);
  if (head.size() < 3 || detail::lower(head[0]) != "y1" ||
      detail::lower(head[1]) != "y2" || detail::lower(head[2]) != "delta")
    throw IoError(path + ": header must start with y1,y2,delta");
  const int d = int(head.size()) - 3;

  std::vector<Observation> obs;
  int row = 0;
  for (++idx; idx < lines.size(); ++idx) {
    if (detail::trim(lines[idx]).empty()) continue;
    ++row;
    const std::string at = path + ": row " + std::to_string(row);
    const std::vector<std::string> f = detail::split(lines[idx]);
    if (int(f.size()) != 3 + d)
      throw IoError(at + ": expected " + std::to_string(3 + d) +
                    " fields, got " + std::to_string(f.size()));
    Observation z;
    z.y1 = detail::parse_double(f[0], at + ", column y1");
    const std::string y2 = detail::lower(detail::trim(f[1]));
    if (y2.empty() || y2 == "inf" || y2 == "+inf")
      z.y2 = kInf;
    else
      z.y2 = detail::parse_double(f[1], at + ", column y2");
    const long delta = detail::parse_int(f[2], at + ", column delta");
    if (delta != 0 && delta != 1)
      throw IoError(at + ", column delta: must be 0 or 1");
    z.delta = int(delta);
    z.x = Vec(d);
    for (int j = 0; j < d; ++j)
      z.x[j] = detail::parse_double(f[3 + j], at + ", column " + head[3 + j]);
    try {
      validate_observation(z);
    } catch (const std::invalid_argument& e) {
      throw IoError(at + ": " + e.what());
    }
    obs.push_back(std::move(z));
  }
  if (obs.empty()) throw IoError(path + ": no data rows");
  try {
    return Dataset(std::move(obs), tau);
  } catch (const std::invalid_argument& e) {
    throw IoError(path + ": " + e.what());
  }
}

// Fit report: a [report] key-value block with the scalars, then one CSV
// block per vector quantity. Everything a later curve evaluation needs is
// present, and floats round-trip exactly.
inline void write_fit_report(const std::string& path, const MableFit& fit) {
  std::ofstream out = detail::open_out(path);
  const FitReport& r = fit.report;
  const int d = int(fit.model.gamma.size());
  out << "[report]\nkey,value\n";
  out << "m," << fit.model.m << "\n";
  out << "has_tail," << (fit.model.has_tail ? 1 : 0) << "\n";
  out << "tau," << detail::fmt(fit.model.tau) << "\n";
  out << "d," << d << "\n";
  out << "converged," << (r.converged ? 1 : 0) << "\n";
  out << "loglik," << detail::fmt(r.loglik) << "\n";
  out << "kkt," << detail::fmt(r.kkt) << "\n";
  out << "outer_iters," << r.outer_iters << "\n";
  out << "message," << r.message << "\n";
  if (d > 0) {
    out << "[gamma]\nvalue,se\n";
    for (int j = 0; j < d; ++j) {
      const double se = int(r.standard_errors.size()) == d
                            ? r.standard_errors[j]
                            : std::numeric_limits<double>::quiet_NaN();
      out << detail::fmt(fit.model.gamma[j]) << "," << detail::fmt(se) << "\n";
    }
    out << "[x0]\nvalue\n";
    for (int j = 0; j < d; ++j) out << detail::fmt(fit.model.x0[j]) << "\n";
  }
  out << "[p]\nvalue\n";
  for (int j = 0; j < int(fit.model.p.size()); ++j)
    out << detail::fmt(fit.model.p[j]) << "\n";
  out << "[trace]\nloglik\n";
  for (const double v : r.loglik_trace) out << detail::fmt(v) << "\n";
  if (!out) throw IoError(path + ": write failed");
}

inline MableFit read_fit_report(const std::string& path) {
  const std::vector<std::string> lines = detail::read_lines(path);
  MableFit fit;
  int d = -1;
  std::vector<double> gamma, se, x0, p, trace;
  std::string section;
  bool seen_report = false, skip_header = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string at = path + ": line " + std::to_string(i + 1);
    const std::string line = detail::trim(lines[i]);
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = line;
      skip_header = true;  // every block opens with its column names
      if (section == "[report]") seen_report = true;
      continue;
    }
    if (skip_header) {
      skip_header = false;
      continue;
    }
    if (section == "[report]") {
      const std::size_t pos = line.find(',');
      if (pos == std::string::npos)
        throw IoError(at + ": expected key,value");
      const std::string key = detail::trim(line.substr(0, pos));
      const std::string val = line.substr(pos + 1);
      if (key == "m")
        fit.model.m = int(detail::parse_int(val, at));
      else if (key == "has_tail")
        fit.model.has_tail = detail::parse_int(val, at) != 0;
      else if (key == "tau")
        fit.model.tau = detail::parse_double(val, at);
      else if (key == "d")
        d = int(detail::parse_int(val, at));
      else if (key == "converged")
        fit.report.converged = detail::parse_int(val, at) != 0;
      else if (key == "loglik")
        fit.report.loglik = detail::parse_double(val, at);
      else if (key == "kkt")
        fit.report.kkt = detail::parse_double(val, at);
      else if (key == "outer_iters")
        fit.report.outer_iters = int(detail::parse_int(val, at));
      else if (key == "message")
        fit.report.message = detail::trim(val);
      else
        throw IoError(at + ": unknown report key '" + key + "'");
    } else if (section == "[gamma]") {
      const std::vector<std::string> f = detail::split(line);
      if (f.size() != 2) throw IoError(at + ": expected value,se");
      gamma.push_back(detail::parse_double(f[0], at));
      se.push_back(detail::parse_double(f[1], at));
    } else if (section == "[x0]") {
      x0.push_back(detail::parse_double(line, at));
    } else if (section == "[p]") {
      p.push_back(detail::parse_double(line, at));
    } else if (section == "[trace]") {
      trace.push_back(detail::parse_double(line, at));
    } else {
      throw IoError(at + ": content outside any known section");
    }
  }
  if (!seen_report) throw IoError(path + ": missing [report] section");
  if (d < 0) throw IoError(path + ": missing d");
  if (int(gamma.size()) != d || int(x0.size()) != d)
    throw IoError(path + ": gamma/x0 blocks do not match d=" +
                  std::to_string(d));
  const int k = fit.model.m + 1 + (fit.model.has_tail ? 1 : 0);
  if (int(p.size()) != k)
    throw IoError(path + ": [p] block has " + std::to_string(p.size()) +
                  " rows, model needs " + std::to_string(k));
  const auto to_vec = [](const std::vector<double>& v) {
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
    return out;
  };
  fit.model.gamma = to_vec(gamma);
  fit.model.x0 = to_vec(x0);
  fit.model.p = to_vec(p);
  fit.report.gamma_hat = fit.model.gamma;
  fit.report.x0_hat = fit.model.x0;
  fit.report.p_hat = fit.model.p;
  fit.report.standard_errors = to_vec(se);
  fit.report.loglik_trace = trace;
  return fit;
}

// Curve CSV: one row per (grid time, covariate row) with the conditional
// survival and density; x_id is the 0-based index into the covariate list.
inline void write_curve_csv(const std::string& path,
                            const BernsteinPHModel& mod,
                            const std::vector<Vec>& xs, const Vec& ts) {
  std::ofstream out = detail::open_out(path);
  out << "t,x_id,S,f\n";
  for (std::size_t j = 0; j < xs.size(); ++j)
    for (int i = 0; i < int(ts.size()); ++i)
      out << detail::fmt(ts[i]) << "," << j << ","
          << detail::fmt(conditional_survival(mod, ts[i], xs[j])) << ","
          << detail::fmt(conditional_density(mod, ts[i], xs[j])) << "\n";
  if (!out) throw IoError(path + ": write failed");
}

// Degree table CSV: (m, loglik, r); invalid cells keep their row with nan
// so the grid stays rectangular for plotting.
inline void write_degree_table_csv(const std::string& path,
                                   const DegreeTable& tab) {
  std::ofstream out = detail::open_out(path);
  out << "m,loglik,r\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& c : tab.cells)
    out << c.m << "," << detail::fmt(c.valid ? c.loglik : nan) << ","
        << detail::fmt(c.valid ? c.r : nan) << "\n";
  if (!out) throw IoError(path + ": write failed");
}

// Simulation report: design echo, per-method usage counts, the coefficient
// MSE block (method,n,coefficient,mse), and the curve MSE grid
// (t,method,mse).
inline void write_sim_report(const std::string& path, const SimReport& rep) {
  std::ofstream out = detail::open_out(path);
  const SimDesign& dz = rep.design;
  out << "[design]\nkey,value\n";
  out << "n," << dz.n << "\n";
  out << "theta," << detail::fmt(dz.theta) << "\n";
  out << "sigma," << detail::fmt(dz.sigma) << "\n";
  for (int j = 0; j < int(dz.gamma_true.size()); ++j)
    out << "gamma" << j + 1 << "," << detail::fmt(dz.gamma_true[j]) << "\n";
  out << "censor_prob," << detail::fmt(dz.censor_prob) << "\n";
  out << "inspections," << dz.inspections << "\n";
  out << "replicates," << dz.replicates << "\n";
  out << "seed," << dz.seed << "\n";
  out << "horizon," << detail::fmt(dz.horizon) << "\n";
  out << "[methods]\nmethod,used,failed\n";
  for (const auto& st : rep.methods)
    out << method_name(st.method) << "," << st.used << "," << st.failed
        << "\n";
  out << "[coefficients]\nmethod,n,coefficient,mse\n";
  for (const auto& st : rep.methods)
    for (int j = 0; j < int(st.mse_gamma.size()); ++j)
      out << method_name(st.method) << "," << dz.n << ",gamma" << j + 1 << ","
          << detail::fmt(st.mse_gamma[j]) << "\n";
  out << "[curve]\nt,method,mse\n";
  for (const auto& st : rep.methods)
    for (int i = 0; i < int(st.mse_curve.size()); ++i)
      out << detail::fmt(rep.grid[i]) << "," << method_name(st.method) << ","
          << detail::fmt(st.mse_curve[i]) << "\n";
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace mable
