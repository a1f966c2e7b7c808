// Command-line front end: fit a model at a fixed degree, select a degree
// over a grid, export conditional survival/density curves from a saved fit,
// and run the Monte-Carlo study. Exit codes: 0 success, 1 input error,
// 2 non-convergence (partial output is still written).

#include <CLI11.hpp>
#include <mable/io.hpp>

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace mable;

TailChoice parse_tail(const std::string& s) {
  if (s == "on") return TailChoice::On;
  if (s == "off") return TailChoice::Off;
  return TailChoice::Auto;
}

std::optional<Vec> parse_gamma_init(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const std::vector<std::string> parts = detail::split(s);
  Vec g(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i)
    g[int(i)] = detail::parse_double(parts[i], "--gamma-init");
  return g;
}

DegreeGrid parse_grid(const std::string& s) {
  const std::size_t pos = s.find(':');
  if (pos == std::string::npos)
    throw IoError("--grid expects m0:mk, e.g. 2:20");
  const long m0 = detail::parse_int(s.substr(0, pos), "--grid");
  const long mk = detail::parse_int(s.substr(pos + 1), "--grid");
  if (m0 < 1 || mk < m0)
    throw IoError("--grid needs 1 <= m0 <= mk");
  DegreeGrid g;
  g.m0 = int(m0);
  g.k = int(mk - m0);
  return g;
}

std::vector<SimMethod> parse_methods(const std::string& s) {
  std::vector<SimMethod> out;
  for (const std::string& name : detail::split(s)) {
    if (name == "profile")
      out.push_back(SimMethod::ProfileMable);
    else if (name == "full")
      out.push_back(SimMethod::FullMable);
    else if (name == "pmle")
      out.push_back(SimMethod::Pmle);
    else
      throw IoError("--methods: unknown method '" + name +
                    "' (use profile, full, pmle)");
  }
  if (out.empty()) throw IoError("--methods: empty list");
  return out;
}

// Covariate rows for curve export: a header naming the columns, then one
// row per requested curve; the column count must match the fitted model.
std::vector<Vec> read_covariates_csv(const std::string& path, int d) {
  const std::vector<std::string> lines = detail::read_lines(path);
  std::size_t idx = 0;
  while (idx < lines.size() && detail::trim(lines[idx]).empty()) ++idx;
  if (idx == lines.size()) throw IoError(path + ": missing header row");
  const int cols = int(detail::split(lines[idx]).size());
  if (cols != d)
    throw IoError(path + ": has " + std::to_string(cols) +
                  " columns but the fit uses " + std::to_string(d) +
                  " covariates");
  std::vector<Vec> xs;
  int row = 0;
  for (++idx; idx < lines.size(); ++idx) {
    if (detail::trim(lines[idx]).empty()) continue;
    ++row;
    const std::string at = path + ": row " + std::to_string(row);
    const std::vector<std::string> f = detail::split(lines[idx]);
    if (int(f.size()) != d)
      throw IoError(at + ": expected " + std::to_string(d) + " fields, got " +
                    std::to_string(f.size()));
    Vec x(d);
    for (int j = 0; j < d; ++j) x[j] = detail::parse_double(f[j], at);
    xs.push_back(std::move(x));
  }
  if (xs.empty()) throw IoError(path + ": no covariate rows");
  return xs;
}

struct CommonOpts {
  std::string input, output;
  std::string tail = "auto";
  std::string gamma_init;
  double tau = 0.0;
  bool tau_set = false;
  FitConfig cfg;
};

void add_fit_config(CLI::App* cmd, FitConfig& cfg) {
  cmd->add_option("--p-tol", cfg.p_tol, "Weight support threshold");
  cmd->add_option("--gamma-tol", cfg.gamma_tol,
                  "Coefficient convergence tolerance");
  cmd->add_option("--max-outer", cfg.max_outer_iters,
                  "Outer iteration cap");
}

int run_fit(const CommonOpts& o, int degree) {
  const Dataset ds = read_observations_csv(
      o.input, o.tau_set ? std::optional<double>(o.tau) : std::nullopt);
  const MableFit fit = mable_fit(ds, degree, o.cfg,
                                 parse_gamma_init(o.gamma_init),
                                 parse_tail(o.tail));
  write_fit_report(o.output, fit);
  std::printf("m=%d loglik=%.10g kkt=%.3g outer_iters=%d converged=%d\n",
              fit.model.m, fit.report.loglik, fit.report.kkt,
              fit.report.outer_iters, fit.report.converged ? 1 : 0);
  if (!fit.report.converged) {
    std::fprintf(stderr, "fit did not converge: %s\n",
                 fit.report.message.c_str());
    return 2;
  }
  return 0;
}

int run_select_degree(const CommonOpts& o, const std::string& grid_spec,
                      const std::string& mode) {
  const Dataset ds = read_observations_csv(
      o.input, o.tau_set ? std::optional<double>(o.tau) : std::nullopt);
  const DegreeGrid grid = parse_grid(grid_spec);
  const GridMode gm =
      mode == "profile" ? GridMode::Profile : GridMode::Full;
  DegreeTable tab = profile_loglik_grid(ds, grid, o.cfg, gm,
                                        parse_gamma_init(o.gamma_init),
                                        parse_tail(o.tail));
  int code = 0;
  try {
    changepoint_select(tab);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "degree selection failed: %s\n", e.what());
    code = 2;
  }
  write_degree_table_csv(o.output, tab);
  if (code == 0)
    std::printf("selected m=%d loglik=%.10g\n", tab.cells[tab.chosen].m,
                tab.cells[tab.chosen].loglik);
  return code;
}

int run_curve(const CommonOpts& o, const std::string& covariates, int points,
              double t_max) {
  const MableFit fit = read_fit_report(o.input);
  const BernsteinPHModel& mod = fit.model;
  const int d = int(mod.gamma.size());
  const std::vector<Vec> xs = covariates.empty()
                                  ? std::vector<Vec>{mod.x0}
                                  : read_covariates_csv(covariates, d);
  if (points < 2) throw IoError("--points must be at least 2");
  if (t_max <= 0.0) t_max = mod.has_tail ? 1.4 * mod.tau : mod.tau;
  const Vec ts = Vec::LinSpaced(points, 0.0, t_max);
  write_curve_csv(o.output, mod, xs, ts);
  std::printf("curves=%d points=%d t_max=%.10g\n", int(xs.size()), points,
              t_max);
  return 0;
}

int run_simulate(const std::string& output, int n, int replicates,
                 std::uint64_t seed, const std::string& methods,
                 const FitConfig& cfg) {
  SimDesign dz;
  dz.n = n;
  dz.replicates = replicates;
  dz.seed = seed;
  const SimReport rep = mse_report(dz, parse_methods(methods), cfg);
  write_sim_report(output, rep);
  for (const auto& st : rep.methods)
    std::printf("method=%s used=%d failed=%d mse_gamma1=%.6g mse_gamma2=%.6g\n",
                method_name(st.method), st.used, st.failed, st.mse_gamma[0],
                st.mse_gamma[1]);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bernstein-polynomial proportional-hazards estimation for "
               "interval-censored data"};
  app.require_subcommand(1);

  CommonOpts fit_o;
  int degree = 0;
  CLI::App* fit = app.add_subcommand("fit", "Fit at a fixed degree");
  fit->add_option("--input", fit_o.input, "Observation CSV")->required();
  fit->add_option("--output", fit_o.output, "Fit report path")->required();
  fit->add_option("--degree", degree, "Polynomial degree m")->required();
  fit->add_option("--gamma-init", fit_o.gamma_init,
                  "Starting coefficients v1,v2,..");
  fit->add_option("--tau", fit_o.tau, "Known support endpoint")
      ->check(CLI::PositiveNumber);
  fit->add_option("--tail", fit_o.tail, "Tail component: auto, on, off")
      ->check(CLI::IsMember({"auto", "on", "off"}));
  add_fit_config(fit, fit_o.cfg);

  CommonOpts sel_o;
  std::string grid_spec = "2:20";
  std::string mode = "full";
  CLI::App* sel = app.add_subcommand("select-degree",
                                     "Choose a degree over a grid");
  sel->add_option("--input", sel_o.input, "Observation CSV")->required();
  sel->add_option("--output", sel_o.output, "Degree table CSV path")
      ->required();
  sel->add_option("--grid", grid_spec, "Degree grid m0:mk");
  sel->add_option("--mode", mode, "Grid fit mode: full or profile")
      ->check(CLI::IsMember({"full", "profile"}));
  sel->add_option("--gamma-init", sel_o.gamma_init,
                  "Pilot coefficients (required for profile mode)");
  sel->add_option("--tau", sel_o.tau, "Known support endpoint")
      ->check(CLI::PositiveNumber);
  sel->add_option("--tail", sel_o.tail, "Tail component: auto, on, off")
      ->check(CLI::IsMember({"auto", "on", "off"}));
  add_fit_config(sel, sel_o.cfg);

  CommonOpts cur_o;
  std::string covariates;
  int points = 200;
  double t_max = 0.0;
  CLI::App* cur = app.add_subcommand("curve",
                                     "Sample curves from a saved fit");
  cur->add_option("--input", cur_o.input, "Fit report path")->required();
  cur->add_option("--output", cur_o.output, "Curve CSV path")->required();
  cur->add_option("--covariates", covariates,
                  "Covariate rows CSV (default: the fitted baseline)");
  cur->add_option("--points", points, "Grid resolution");
  cur->add_option("--t-max", t_max,
                  "Grid endpoint (default: past tau when the tail is on)");

  std::string sim_output, methods = "full,pmle";
  int sim_n = 100, replicates = 100;
  std::uint64_t seed = 1;
  FitConfig sim_cfg;
  CLI::App* sim = app.add_subcommand("simulate", "Run the Monte-Carlo study");
  sim->add_option("--output", sim_output, "Report path")->required();
  sim->add_option("--n", sim_n, "Sample size per replicate");
  sim->add_option("--replicates", replicates, "Replicate count");
  sim->add_option("--seed", seed, "Master seed");
  sim->add_option("--methods", methods,
                  "Comma list of estimators: profile, full, pmle");
  add_fit_config(sim, sim_cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  fit_o.tau_set = fit->count("--tau") > 0;
  sel_o.tau_set = sel->count("--tau") > 0;
  try {
    if (*fit) return run_fit(fit_o, degree);
    if (*sel) return run_select_degree(sel_o, grid_spec, mode);
    if (*cur) return run_curve(cur_o, covariates, points, t_max);
    if (*sim) return run_simulate(sim_output, sim_n, replicates, seed,
                                  methods, sim_cfg);
  } catch (const NonConvergence& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
