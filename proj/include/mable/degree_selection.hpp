#pragma once

#include <mable/optimizer.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mable {

// Consecutive candidate degrees {m0, m0+1, ..., m0+k}.
struct DegreeGrid {
  int m0 = 2;
  int k = 18;
};

// Full refits gamma and p at every degree; Profile keeps gamma fixed at a
// pilot estimate and solves only the weights, which is much cheaper on a
// long grid.
enum class GridMode { Full, Profile };

struct DegreeCell {
  int m = 0;
  double loglik = -kInf;
  double r = std::numeric_limits<double>::quiet_NaN();
  bool valid = false;
  bool selected = false;
  Vec p;
  Vec gamma;
  Vec x0;
  std::string message;  // failure reason when invalid
};

struct DegreeTable {
  std::vector<DegreeCell> cells;
  int chosen = -1;  // index into cells, set by changepoint_select
  bool has_tail = false;
  double tau = 0.0;
};

// Materialize the fitted model a valid cell describes.
inline BernsteinPHModel cell_model(const DegreeTable& table, int index) {
  if (index < 0 || index >= int(table.cells.size()))
    throw std::invalid_argument("cell_model: index out of range");
  const DegreeCell& cell = table.cells[index];
  if (!cell.valid)
    throw std::invalid_argument("cell_model: cell " + std::to_string(index) +
                                " holds no fit: " + cell.message);
  BernsteinPHModel mod;
  mod.m = cell.m;
  mod.tau = table.tau;
  mod.has_tail = table.has_tail;
  mod.p = cell.p;
  mod.gamma = cell.gamma;
  mod.x0 = cell.x0;
  validate_model(mod);
  return mod;
}

// Exact degree raising: the returned weights of length one more describe the
// same mixture. A trailing tail component keeps its weight, and because
// (m+2)*q_m = (m+1)*p_{m-1} at the last interior slot, the glued tail rate is
// unchanged as well.
inline Vec elevate_weights(const Vec& p, int m, bool has_tail) {
  const int interior = m + 1;
  if (int(p.size()) != interior + (has_tail ? 1 : 0))
    throw std::invalid_argument("elevate_weights: length does not match degree");
  Vec q = Vec::Zero(p.size() + 1);
  for (int j = 0; j <= m + 1; ++j) {
    double v = 0.0;
    if (j > 0) v += p[j - 1] * double(j) / double(m + 2);
    if (j <= m) v += p[j] * double(m + 1 - j) / double(m + 2);
    q[j] = v;
  }
  if (has_tail) q[m + 2] = p[interior];
  return q;
}

namespace detail {

// Repeated single-step elevation from degree m_from to m_to.
inline Vec elevate_to(Vec p, int m_from, int m_to, bool has_tail) {
  for (int m = m_from; m < m_to; ++m) p = elevate_weights(p, m, has_tail);
  return p;
}

}  // namespace detail

// Fits every degree on the grid and records the attained log-likelihood.
// Full mode warm-starts each degree from the previous fit via degree
// elevation; Profile mode solves each cell independently from a uniform
// start at the supplied coefficients. Cells whose fit fails are marked
// invalid and skipped downstream.
inline DegreeTable profile_loglik_grid(const Dataset& ds, const DegreeGrid& grid,
                                       const FitConfig& cfg = {},
                                       GridMode mode = GridMode::Full,
                                       std::optional<Vec> gamma = std::nullopt,
                                       TailChoice tail = TailChoice::Auto) {
  if (grid.m0 < 1 || grid.k < 2)
    throw std::invalid_argument("profile_loglik_grid: need m0 >= 1 and k >= 2");
  if (mode == GridMode::Profile && ds.d > 0 && !gamma)
    throw std::invalid_argument(
        "profile_loglik_grid: profile mode needs pilot coefficients");
  if (gamma && int(gamma->size()) != ds.d)
    throw std::invalid_argument("profile_loglik_grid: gamma dimension mismatch");

  const bool has_tail = resolve_tail(ds, tail);
  const TailChoice fixed = has_tail ? TailChoice::On : TailChoice::Off;

  DegreeTable table;
  table.cells.resize(grid.k + 1);
  table.has_tail = has_tail;
  table.tau = ds.tau_n;

  if (mode == GridMode::Profile && ds.d > 0) {
    const Vec g = *gamma;
    const Vec x0 = empirical_baseline(ds, g);
    for (int i = 0; i <= grid.k; ++i) {
      DegreeCell& cell = table.cells[i];
      cell.m = grid.m0 + i;
      PreparedData pd(ds, cell.m, has_tail);
      pd.set_baseline(g, x0);
      try {
        const PSolve ps = solve_p(pd, Vec::Constant(pd.k, 1.0 / pd.k), cfg);
        cell.loglik = ps.loglik;
        cell.p = ps.p;
        cell.gamma = g;
        cell.x0 = x0;
        cell.valid = true;
      } catch (const std::runtime_error& e) {
        cell.message = e.what();
      }
    }
    return table;
  }

  // Full mode (and any covariate-free grid): sequential warm starts.
  int last_valid = -1;
  for (int i = 0; i <= grid.k; ++i) {
    DegreeCell& cell = table.cells[i];
    cell.m = grid.m0 + i;
    std::optional<Vec> g0 = gamma;
    std::optional<Vec> p0;
    if (last_valid >= 0) {
      const DegreeCell& prev = table.cells[last_valid];
      if (ds.d > 0) g0 = prev.gamma;
      // Seed by exact elevation without an interior nudge: injected mass in
      // components the larger model wants empty decays at a rate approaching
      // one near the optimum, while reviving a floored component is cheap.
      p0 = detail::elevate_to(prev.p, prev.m, cell.m, has_tail);
    }
    try {
      const MableFit fit = mable_fit(ds, cell.m, cfg, g0, fixed, p0);
      if (fit.report.converged) {
        cell.loglik = fit.report.loglik;
        cell.p = fit.model.p;
        cell.gamma = fit.model.gamma;
        cell.x0 = fit.model.x0;
        cell.valid = true;
        last_valid = i;
      } else {
        cell.message = fit.report.message.empty() ? "fit did not converge"
                                                  : fit.report.message;
      }
    } catch (const std::runtime_error& e) {
      cell.message = e.what();
    }
  }
  return table;
}

// Change-point criterion on the likelihood increments: the chosen degree is
// where the per-degree gain switches regime. Zero or negative differences
// are floored at a tiny eps so saturated grids stay finite.
inline int changepoint_select(DegreeTable& table) {
  constexpr double kEps = 1e-10;
  int a = -1, b = -1, nvalid = 0;
  for (int i = 0; i < int(table.cells.size()); ++i) {
    if (!table.cells[i].valid) continue;
    if (a < 0) a = i;
    b = i;
    ++nvalid;
  }
  if (nvalid < 3)
    throw std::invalid_argument("changepoint_select: need at least 3 valid cells");
  const int k = b - a;  // offsets count degrees, so gaps stay meaningful
  const double l0 = table.cells[a].loglik;
  const double lk = table.cells[b].loglik;
  if (lk - l0 <= 0.0)
    throw std::runtime_error(
        "changepoint_select: no likelihood gain across the grid");

  const double total = std::max(lk - l0, kEps) / double(k);
  int best = -1;
  double best_r = -kInf;
  for (int idx = a + 1; idx <= b; ++idx) {
    DegreeCell& cell = table.cells[idx];
    if (!cell.valid) continue;
    const int i = idx - a;
    if (i == k) {
      cell.r = 0.0;
    } else {
      const double head = std::max(cell.loglik - l0, kEps) / double(i);
      const double rest = std::max(lk - cell.loglik, kEps) / double(k - i);
      cell.r = double(k) * std::log(total) - double(i) * std::log(head) -
               double(k - i) * std::log(rest);
    }
    if (cell.r > best_r) {  // strict: ties go to the smallest degree
      best_r = cell.r;
      best = idx;
    }
  }
  table.chosen = best;
  table.cells[best].selected = true;
  return table.cells[best].m;
}

}  // namespace mable
