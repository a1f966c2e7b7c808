#include <mable/io.hpp>

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "test_util.hpp"

using namespace mable;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string write_text(const std::string& name, const std::string& text) {
  const std::string path = tmp_path(name);
  std::ofstream out(path);
  out << text;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Dataset small_regression_data() {
  std::vector<Observation> obs;
  testutil::Rng rng(404);
  for (int i = 0; i < 24; ++i) {
    Observation z;
    z.x = Vec(1);
    z.x[0] = i % 2 ? 1.0 : 0.0;
    const double t = -std::log(1.0 - rng.uniform()) / (1.0 + z.x[0]);
    if (i % 3 == 0) {
      z.delta = 0;
      z.y1 = z.y2 = std::min(t, 2.0);
      if (z.y1 <= 0.0) z.y1 = z.y2 = 0.05;
    } else {
      z.delta = 1;
      z.y1 = 0.5 * t;
      z.y2 = t < 1.4 ? t + 0.3 : kInf;
    }
    obs.push_back(z);
  }
  return Dataset(obs, 2.5);
}

}  // namespace

TEST_CASE("observation csv accepts the documented schema") {
  const std::string path = write_text("io_obs_ok.csv",
                                      "y1,y2,delta,x1,x2\n"
                                      "0.5,0.5,0,1.0,-1\n"
                                      "0.2,0.9,1,0.0,2\n"
                                      "1.5,inf,1,1.0,0\n"
                                      "1.25,,1,-0.5,1\n"
                                      "0,0.4,1,0.25,0\n"
                                      "\n"
                                      "0.8,+inf,1,0.5,0.5\n");
  const Dataset ds = read_observations_csv(path);
  REQUIRE(ds.n() == 6);
  CHECK(ds.d == 2);
  CHECK(ds.obs[0].exact());
  CHECK(ds.obs[1].y2 == 0.9);
  CHECK(ds.obs[2].right_censored());
  CHECK(ds.obs[3].right_censored());  // blank upper endpoint
  CHECK(ds.obs[4].y1 == 0.0);
  CHECK(ds.obs[5].right_censored());
  CHECK(ds.tau_n == 1.5);
  CHECK(ds.obs[0].x[1] == -1.0);
}

TEST_CASE("observation csv diagnostics name the row and column") {
  CHECK_THROWS_MATCHES(
      read_observations_csv(write_text("io_obs_h.csv", "a,b,c\n1,2,0\n")),
      IoError, Catch::Matchers::MessageMatches(
                   ContainsSubstring("header must start with y1,y2,delta")));
  CHECK_THROWS_MATCHES(
      read_observations_csv(
          write_text("io_obs_bad.csv", "y1,y2,delta\n0.1,zzz,1\n")),
      IoError,
      Catch::Matchers::MessageMatches(
          (ContainsSubstring("row 1") && ContainsSubstring("column y2") &&
           ContainsSubstring("zzz"))));
  CHECK_THROWS_MATCHES(
      read_observations_csv(
          write_text("io_obs_n.csv", "y1,y2,delta,x1\n0.1,0.5,1\n")),
      IoError, Catch::Matchers::MessageMatches(
                   ContainsSubstring("expected 4 fields, got 3")));
  CHECK_THROWS_MATCHES(
      read_observations_csv(
          write_text("io_obs_d.csv", "y1,y2,delta\n0.1,0.5,7\n")),
      IoError, Catch::Matchers::MessageMatches(
                   ContainsSubstring("delta: must be 0 or 1")));
  CHECK_THROWS_MATCHES(
      read_observations_csv(
          write_text("io_obs_e.csv", "y1,y2,delta\n0.1,0.5,0\n")),
      IoError, Catch::Matchers::MessageMatches(
                   (ContainsSubstring("row 1") &&
                    ContainsSubstring("exact time needs y1 == y2"))));
  CHECK_THROWS_MATCHES(
      read_observations_csv(write_text("io_obs_empty.csv", "y1,y2,delta\n")),
      IoError,
      Catch::Matchers::MessageMatches(ContainsSubstring("no data rows")));
  CHECK_THROWS_AS(read_observations_csv(tmp_path("io_does_not_exist.csv")),
                  IoError);
}

TEST_CASE("tau override is applied and validated") {
  const std::string path = write_text("io_obs_tau.csv",
                                      "y1,y2,delta\n0.5,1.5,1\n0.2,0.2,0\n");
  const Dataset ds = read_observations_csv(path, 3.0);
  CHECK(ds.tau_n == 3.0);
  CHECK(ds.tau_supplied);
  CHECK_THROWS_AS(read_observations_csv(path, 1.0), IoError);
}

TEST_CASE("fit report round-trips every field exactly") {
  const Dataset ds = small_regression_data();
  const MableFit fit = mable_fit(ds, 4);
  REQUIRE(fit.report.converged);
  const std::string path = tmp_path("io_fit_report.txt");
  write_fit_report(path, fit);
  const MableFit back = read_fit_report(path);

  CHECK(back.model.m == fit.model.m);
  CHECK(back.model.has_tail == fit.model.has_tail);
  CHECK(back.model.tau == fit.model.tau);
  REQUIRE(back.model.p.size() == fit.model.p.size());
  for (int j = 0; j < int(fit.model.p.size()); ++j)
    CHECK(back.model.p[j] == fit.model.p[j]);
  REQUIRE(back.model.gamma.size() == fit.model.gamma.size());
  for (int j = 0; j < int(fit.model.gamma.size()); ++j) {
    CHECK(back.model.gamma[j] == fit.model.gamma[j]);
    CHECK(back.model.x0[j] == fit.model.x0[j]);
    CHECK(back.report.standard_errors[j] == fit.report.standard_errors[j]);
  }
  CHECK(back.report.loglik == fit.report.loglik);
  CHECK(back.report.kkt == fit.report.kkt);
  CHECK(back.report.converged == fit.report.converged);
  CHECK(back.report.outer_iters == fit.report.outer_iters);
  CHECK(back.report.message == fit.report.message);
  REQUIRE(back.report.loglik_trace.size() == fit.report.loglik_trace.size());
  for (std::size_t i = 0; i < fit.report.loglik_trace.size(); ++i)
    CHECK(back.report.loglik_trace[i] == fit.report.loglik_trace[i]);

  // The reloaded model evaluates identically, which is what curve export
  // depends on.
  const Vec x = Vec::Ones(1);
  for (double t : {0.0, 0.3, 1.1, 2.4, 3.0})
    CHECK(conditional_survival(back.model, t, x) ==
          conditional_survival(fit.model, t, x));

  write_fit_report(path + "2", fit);
  CHECK(slurp(path) == slurp(path + "2"));
}

TEST_CASE("fit report omits covariate blocks when there are none") {
  std::vector<Observation> obs = {{0.0, 1.0, 1, Vec()}, {0.0, 2.0, 1, Vec()},
                                  {1.0, 3.0, 1, Vec()}, {2.0, 3.0, 1, Vec()}};
  const MableFit fit = mable_fit(Dataset(obs, 3.0), 3);
  const std::string path = tmp_path("io_fit_nocov.txt");
  write_fit_report(path, fit);
  const std::string text = slurp(path);
  CHECK(text.find("[gamma]") == std::string::npos);
  CHECK(text.find("[x0]") == std::string::npos);
  const MableFit back = read_fit_report(path);
  CHECK(back.model.gamma.size() == 0);
  CHECK(back.model.p.size() == fit.model.p.size());
  CHECK(back.report.loglik == fit.report.loglik);
}

TEST_CASE("fit report reader rejects malformed files") {
  CHECK_THROWS_MATCHES(
      read_fit_report(write_text("io_rep_a.txt", "[p]\nvalue\n0.5\n")),
      IoError,
      Catch::Matchers::MessageMatches(ContainsSubstring("missing [report]")));
  CHECK_THROWS_MATCHES(
      read_fit_report(write_text("io_rep_b.txt",
                                 "[report]\nkey,value\nm,3\nhas_tail,0\n"
                                 "tau,1\nd,0\n[p]\nvalue\n0.5\n0.5\n")),
      IoError,
      Catch::Matchers::MessageMatches(ContainsSubstring("model needs 4")));
  CHECK_THROWS_MATCHES(
      read_fit_report(write_text("io_rep_c.txt",
                                 "[report]\nkey,value\nwhat,3\n")),
      IoError,
      Catch::Matchers::MessageMatches(ContainsSubstring("unknown report key")));
  CHECK_THROWS_MATCHES(
      read_fit_report(write_text("io_rep_d.txt", "0.5,1,2\n")),
      IoError,
      Catch::Matchers::MessageMatches(
          ContainsSubstring("content outside any known section")));
}

TEST_CASE("curve csv rows reproduce the model evaluations") {
  BernsteinPHModel mod;
  mod.m = 3;
  mod.has_tail = true;
  mod.tau = 2.0;
  mod.p = (Vec(5) << 0.3, 0.25, 0.2, 0.15, 0.1).finished();
  mod.gamma = (Vec(1) << 0.7).finished();
  mod.x0 = Vec::Zero(1);
  const std::vector<Vec> xs = {Vec::Zero(1), Vec::Ones(1)};
  const Vec ts = Vec::LinSpaced(9, 0.0, 4.0);
  const std::string path = tmp_path("io_curve.csv");
  write_curve_csv(path, mod, xs, ts);

  std::ifstream in(path);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "t,x_id,S,f");
  int rows = 0;
  double prev_s = 2.0;
  int prev_id = -1;
  while (std::getline(in, line)) {
    const auto f = detail::split(line);
    REQUIRE(f.size() == 4);
    const double t = std::strtod(f[0].c_str(), nullptr);
    const int id = int(std::strtol(f[1].c_str(), nullptr, 10));
    const double s = std::strtod(f[2].c_str(), nullptr);
    const double fd = std::strtod(f[3].c_str(), nullptr);
    CHECK(s == conditional_survival(mod, t, xs[id]));
    CHECK(fd == conditional_density(mod, t, xs[id]));
    if (id == prev_id)
      CHECK(s <= prev_s);
    prev_s = s;
    prev_id = id;
    ++rows;
  }
  CHECK(rows == 18);
}

TEST_CASE("degree table csv keeps invalid cells visible") {
  DegreeTable tab;
  for (int i = 0; i < 3; ++i) {
    DegreeCell c;
    c.m = 2 + i;
    c.valid = i != 1;
    c.loglik = -10.0 + i;
    c.r = i == 0 ? std::numeric_limits<double>::quiet_NaN() : 4.0;
    tab.cells.push_back(c);
  }
  const std::string path = tmp_path("io_table.csv");
  write_degree_table_csv(path, tab);
  const std::string text = slurp(path);
  CHECK(text == "m,loglik,r\n2,-10,nan\n3,nan,nan\n4,-8,4\n");
}

TEST_CASE("simulation report carries all four blocks") {
  SimReport rep;
  rep.design.n = 30;
  rep.design.replicates = 2;
  rep.grid = Vec::LinSpaced(3, 0.0, 7.0);
  MethodStats st;
  st.method = SimMethod::Pmle;
  st.used = 2;
  st.failed = 0;
  st.mse_gamma = (Vec(2) << 0.25, 0.0625).finished();
  st.mse_curve = (Vec(3) << 0.0, 0.01, 0.02).finished();
  rep.methods.push_back(st);
  const std::string path = tmp_path("io_sim.csv");
  write_sim_report(path, rep);
  const std::string text = slurp(path);
  CHECK_THAT(text, ContainsSubstring("[design]"));
  CHECK_THAT(text, ContainsSubstring("n,30"));
  CHECK_THAT(text, ContainsSubstring("[methods]"));
  CHECK_THAT(text, ContainsSubstring("pmle,2,0"));
  CHECK_THAT(text, ContainsSubstring("[coefficients]"));
  CHECK_THAT(text, ContainsSubstring("pmle,30,gamma1,0.25"));
  CHECK_THAT(text, ContainsSubstring("pmle,30,gamma2,0.0625"));
  CHECK_THAT(text, ContainsSubstring("[curve]"));
  CHECK_THAT(text, ContainsSubstring("3.5,pmle,0.01"));
}
