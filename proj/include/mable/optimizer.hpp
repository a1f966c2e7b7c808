#pragma once

// Maximization of the approximate likelihood: multiplicative fixed-point
// iteration for the mixture weights at fixed gamma, damped Newton for gamma
// at fixed weights, and the alternating outer loop that re-anchors the
// baseline covariate and reseeds the weights after each gamma update.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mable/likelihood.hpp"
#include "mable/model.hpp"

namespace mable {

namespace prof {
inline long solves = 0, fp_iters = 0, seg_evals = 0, max_iters = 0;
inline void reset() { solves = fp_iters = seg_evals = max_iters = 0; }
}  // namespace prof

struct FitConfig {
  double p_tol = 1e-7;
  double loglik_tol = 1e-8;
  double gamma_tol = 1e-8;
  int max_fixed_point_iters = 5000;
  int max_newton_iters = 100;
  int max_outer_iters = 200;
  double interior_eps = 1e-4;
  double kkt_tol = 1e-6;
};

struct NonConvergence : std::runtime_error {
  Vec last_p;
  double kkt = std::numeric_limits<double>::quiet_NaN();
  int iters = 0;
  NonConvergence(const std::string& msg, Vec p = Vec(), double residual = 0.0,
                 int it = 0)
      : std::runtime_error(msg), last_p(std::move(p)), kkt(residual), iters(it) {}
};

// The multiplicative weight update needs every score component nonnegative,
// which holds whenever the anchor covariate minimizes gamma'x.
struct NegativeScore : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TailChoice { Auto, On, Off };

inline bool resolve_tail(const Dataset& ds, TailChoice choice) {
  switch (choice) {
    case TailChoice::On:
      return true;
    case TailChoice::Off:
      return false;
    default:
      return ds.any_right_censored() && !ds.tau_supplied;
  }
}

// Index of the covariate minimizing gamma'x; ties go to the smallest index.
inline int empirical_baseline_index(const Dataset& ds, const Vec& gamma) {
  if (ds.d == 0 || int(gamma.size()) != ds.d)
    throw std::invalid_argument("empirical_baseline: dimension mismatch");
  int best = 0;
  double lo = gamma.dot(ds.obs[0].x);
  for (int i = 1; i < ds.n(); ++i) {
    const double v = gamma.dot(ds.obs[i].x);
    if (v < lo) {
      lo = v;
      best = i;
    }
  }
  return best;
}

inline Vec empirical_baseline(const Dataset& ds, const Vec& gamma) {
  return ds.obs[empirical_baseline_index(ds, gamma)].x;
}

inline Vec project_interior(const Vec& p, double eps) {
  const Vec u = Vec::Constant(p.size(), 1.0 / double(p.size()));
  return (p + eps * u) / (1.0 + eps);
}

namespace detail {

// Components that underflow would be stuck at zero under a multiplicative
// update; keep them small but resurrectable.
constexpr double kWeightFloor = 1e-30;

inline Vec multiplicative_step(const Vec& p, const Vec& grad, double lambda) {
  Vec psibar = grad / lambda;
  const double worst = psibar.minCoeff();
  if (worst < -1e-10)
    throw NegativeScore(
        "fixed_point_step: negative score component (baseline precondition "
        "violated), min " + std::to_string(worst));
  psibar = psibar.cwiseMax(0.0);
  Vec pn = p.cwiseProduct(psibar).cwiseMax(kWeightFloor);
  return pn / pn.sum();
}

inline double kkt_from_grad(const Vec& grad, const Vec& p, double lambda,
                            double p_tol) {
  double res = 0.0;
  for (int j = 0; j < p.size(); ++j) {
    const double gap = grad[j] - lambda;
    res = std::max(res, gap);  // improvement still available at any j
    if (p[j] > p_tol) res = std::max(res, std::fabs(gap));
  }
  return std::max(res, 0.0);
}

// Second-order rescue for a stalled weight solve. Near a degenerate optimum
// the multiplicative update contracts so slowly that reaching the
// stationarity tolerance can take millions of steps. Two devices restore
// fast progress; both only ever improve the iterate, so the caller's
// monotone behaviour and exit test are untouched.
//
// First, projected Newton on the active face (the support plus any component
// whose score gap is positive): the restricted problem is smooth and
// concave, and at its optimum the weight identity sum_j p_j G_j = lambda
// forces the common face score to lambda, which is the stationarity target
// itself. A component whose curvature dwarfs the rest of the face is
// excluded from the step: when a censoring interval's upper survival is
// carried by a vanishing component, the likelihood has an S^(eta-2) cusp
// there, and its quadratic model would crush the step for everyone else.
//
// Second, segment bisection for small blockers, the excluded ones included:
// along p(t) = (t for component j, the rest rescaled by (1-t)/(1-p_j)) the
// log-likelihood is concave with derivative (G_j - lambda)/(1-t), so the
// gap at t signs a bisection that pins that component's own optimum even
// when it sits dozens of decades below the simplex scale; the geometric
// midpoint makes those decades cheap to cross.
inline bool face_polish(const PreparedData& pd, Vec& p, double lambda,
                        const FitConfig& cfg) {
  bool acted = false;
  Vec grad(pd.k), gtmp(pd.k), scratch(pd.k);
  double ll = loglik_and_grad_p(pd, p, &grad);
  double res = kkt_from_grad(grad, p, lambda, cfg.p_tol);
  const auto seg_gap = [&](int j, double t) {
    ++prof::seg_evals;
    scratch = p * ((1.0 - t) / (1.0 - p[j]));
    scratch[j] = t;
    loglik_and_grad_p(pd, scratch, &gtmp);
    return gtmp[j] - lambda;
  };
  for (int round = 0; round < 2 * pd.k; ++round) {
    if (res < 0.5 * cfg.kkt_tol) break;
    bool round_moved = false;

    std::vector<int> face;
    for (int j = 0; j < pd.k; ++j)
      if (p[j] > cfg.p_tol || grad[j] - lambda > 0.0) face.push_back(j);
    if (int(face.size()) >= 2) {
      int r = face[0];
      for (int j : face)
        if (p[j] > p[r]) r = j;
      std::vector<int> free;
      for (int nit = 0; nit < 50; ++nit) {
        ++prof::seg_evals;
        const Mat H = hessian_p_prepared(pd, p);
        if (nit == 0) {
          std::vector<double> diags;
          for (int j : face) diags.push_back(-H(j, j));
          std::nth_element(diags.begin(), diags.begin() + diags.size() / 2,
                           diags.end());
          const double med = std::max(diags[diags.size() / 2], 1e-300);
          free.clear();
          for (int j : face)
            if (j != r && -H(j, j) <= 1e8 * med) free.push_back(j);
        }
        const int q = int(free.size());
        if (q < 1) break;
        Vec gu(q);
        for (int a = 0; a < q; ++a) gu[a] = grad[free[a]] - grad[r];
        if (gu.cwiseAbs().maxCoeff() < 0.25 * cfg.kkt_tol) break;
        Mat A(q, q);
        for (int a = 0; a < q; ++a)
          for (int b = 0; b < q; ++b)
            A(a, b) = -(H(free[a], free[b]) - H(free[a], r) - H(r, free[b]) +
                        H(r, r));
        // Concavity makes A positive semidefinite, but on a degenerate face
        // it is singular and a raw solve would wander along the flat null
        // directions. The gradient has no component along those, so a light
        // damping keeps the step minimal-norm there while staying Newton in
        // the curved subspace.
        const double mu = 1e-8 * std::max(A.diagonal().maxCoeff(), 1e-30);
        A.diagonal().array() += mu;
        Vec d;
        Eigen::LDLT<Mat> ldlt(A);
        if (ldlt.info() == Eigen::Success) d = ldlt.solve(gu);
        if (d.size() != q || !d.allFinite() || gu.dot(d) <= 0.0) d = gu;
        const double ds = d.sum();
        double t = 1.0;
        if (ds > 0.0) t = std::min(t, (p[r] - kWeightFloor) / ds);
        bool improved = false;
        for (int half = 0; half <= 40 && t > 0.0; ++half) {
          Vec pt = p;
          for (int a = 0; a < q; ++a) pt[free[a]] += t * d[a];
          pt[r] -= t * ds;
          pt = pt.cwiseMax(kWeightFloor);
          pt /= pt.sum();
          const double llt = loglik_prepared(pd, pt);
          bool take = llt > ll;
          if (!take && llt >= ll - 1e-12 * (1.0 + std::fabs(ll))) {
            // At the precision floor the quadratic gain is unrepresentable;
            // fall back to the residual as the ascent certificate.
            loglik_and_grad_p(pd, pt, &gtmp);
            const double rt = kkt_from_grad(gtmp, pt, lambda, cfg.p_tol);
            if (rt < res) {
              take = true;
              grad = gtmp;
            }
          }
          if (take) {
            p = pt;
            ll = llt;
            improved = true;
            round_moved = true;
            acted = true;
            break;
          }
          t *= 0.5;
        }
        if (!improved) break;
        ll = loglik_and_grad_p(pd, p, &grad);
        res = kkt_from_grad(grad, p, lambda, cfg.p_tol);
        if (res < 0.25 * cfg.kkt_tol) break;
      }
    }
    if (res < 0.5 * cfg.kkt_tol) break;

    for (int pass = 0; pass < pd.k && res >= 0.5 * cfg.kkt_tol; ++pass) {
      int jb = -1;
      double worst = 0.0;
      for (int j = 0; j < pd.k; ++j) {
        const double gap = grad[j] - lambda;
        const double c = p[j] > cfg.p_tol ? std::fabs(gap) : std::max(gap, 0.0);
        if (p[j] < 5e-2 && c > worst) {
          worst = c;
          jb = j;
        }
      }
      if (jb < 0 || worst < 0.5 * res) break;
      double lo = kWeightFloor, hi = 0.25;
      double t;
      if (seg_gap(jb, lo) <= 0.0) {
        t = lo;  // no interior mass wanted: truncate
      } else if (seg_gap(jb, hi) >= 0.0) {
        t = hi;  // wants more than the bracket: hand back to the face
      } else {
        while (hi - lo > 1e-18 && hi > lo * (1.0 + 1e-12)) {
          const double mid = std::sqrt(lo * hi);
          const double g = seg_gap(jb, mid);
          if (std::fabs(g) < 0.01 * cfg.kkt_tol) {
            lo = hi = mid;
            break;
          }
          (g > 0.0 ? lo : hi) = mid;
        }
        t = std::sqrt(lo * hi);
      }
      p *= (1.0 - t) / (1.0 - p[jb]);
      p[jb] = t;
      acted = true;
      round_moved = true;
      ll = loglik_and_grad_p(pd, p, &grad);
      res = kkt_from_grad(grad, p, lambda, cfg.p_tol);
    }
    if (!round_moved) break;
  }
  return acted;
}

}  // namespace detail

// One multiplicative update p_j <- p_j * (sum_i score_ij) / lambda_n,
// renormalized onto the simplex.
inline Vec fixed_point_step(const PreparedData& pd, const Vec& p) {
  return detail::multiplicative_step(p, grad_p_prepared(pd, p), pd.lambda_n());
}

inline double kkt_residual(const PreparedData& pd, const Vec& p,
                           double p_tol = 1e-7) {
  return detail::kkt_from_grad(grad_p_prepared(pd, p), p, pd.lambda_n(), p_tol);
}

inline double kkt_residual(const BernsteinPHModel& mod, const Dataset& ds,
                           double p_tol = 1e-7) {
  return kkt_residual(detail::prepare_for(mod, ds), mod.p, p_tol);
}

struct PSolve {
  Vec p;
  double loglik = -kInf;
  double kkt = std::numeric_limits<double>::quiet_NaN();
  int iters = 0;
  bool converged = false;
};

// Maximize the likelihood over the weight simplex at fixed gamma/baseline.
// Candidate exits (small weight move or small likelihood move) are accepted
// only once the stationarity residual is below kkt_tol, so every successful
// return satisfies the first-order conditions at that tolerance.
inline PSolve solve_p(const PreparedData& pd, const Vec& p0,
                      const FitConfig& cfg = {}) {
  // Clamp rather than eps-project: a warm start sits at the previous optimum
  // and shifting interior mass into it costs likelihood that the terminal
  // stopping rule does not recover. The floor keeps dead components alive for
  // the multiplicative update without disturbing the rest.
  Vec p = p0.cwiseMax(detail::kWeightFloor);
  p /= p.sum();
  const double lambda = pd.lambda_n();
  PSolve out;
  double ll_prev = -kInf, dp = kInf;
  int next_probe = 10;
  int probe_gap = 10;
  int last_polish = 0;
  Vec grad(pd.k);
  ++prof::solves;
  for (int it = 0; it <= cfg.max_fixed_point_iters; ++it) {
    ++prof::fp_iters;
    prof::max_iters = std::max(prof::max_iters, long(it));
    const double ll = loglik_and_grad_p(pd, p, &grad);
    const double res = detail::kkt_from_grad(grad, p, lambda, cfg.p_tol);
    const bool small_move = dp < cfg.p_tol || std::fabs(ll - ll_prev) < cfg.loglik_tol;
    if (it > 0 && small_move && res < cfg.kkt_tol) {
      out.p = p;
      out.loglik = ll;
      out.kkt = res;
      out.iters = it;
      out.converged = true;
      return out;
    }
    if (it == cfg.max_fixed_point_iters) {
      if (res <= cfg.kkt_tol) {
        out.p = p;
        out.loglik = ll;
        out.kkt = res;
        out.iters = it;
        out.converged = true;
        return out;
      }
      throw NonConvergence("solve_p: fixed-point iteration cap reached with "
                           "stationarity residual " + std::to_string(res),
                           p, res, it);
    }
    // Stall handling: once the iterate barely moves while the stationarity
    // residual is still above tolerance, the update has hit a nearly flat
    // direction where its linear rate needs millions of steps. Hand the
    // iterate to the second-order face rescue, which only ever improves it,
    // and re-enter the loop so the unweakened exit test above decides. Long
    // productive phases get the same help after a generous budget: progress
    // of at least loglik_tol per step for thousands of steps is still a
    // crawl worth cutting short.
    const bool engage = small_move || it - last_polish >= 2000;
    if (it >= next_probe && engage && res >= cfg.kkt_tol) {
      const bool acted = detail::face_polish(pd, p, lambda, cfg);
      last_polish = it;
      // Probe cheaply while polishing is productive, back off while the plain
      // iteration is making its own progress.
      probe_gap = acted ? 10 : std::min(2 * probe_gap, 1000);
      next_probe = it + probe_gap;
      if (acted) {
        dp = kInf;
        ll_prev = -kInf;  // force a fresh stationarity look before any exit
        continue;
      }
    }
    const Vec pn = detail::multiplicative_step(p, grad, lambda);
    dp = (pn - p).cwiseAbs().maxCoeff();
    ll_prev = ll;
    p = pn;
  }
  return out;  // unreachable
}

struct NewtonResult {
  Vec gamma;
  double loglik = -kInf;
  int iters = 0;
};

// Damped Newton ascent in gamma at fixed weights and baseline covariate.
// The Hessian is negative definite, so the Newton direction is an ascent
// direction; step halving enforces monotonicity.
inline NewtonResult newton_gamma(PreparedData& pd, const Vec& p, const Vec& gamma0,
                                 const FitConfig& cfg = {}) {
  const Vec x0 = pd.x0;
  Vec gamma = gamma0;
  pd.set_baseline(gamma, x0);
  double ll = loglik_prepared(pd, p);
  for (int it = 1; it <= cfg.max_newton_iters; ++it) {
    const Vec g = grad_gamma_prepared(pd, p);
    if (g.cwiseAbs().maxCoeff() < cfg.gamma_tol)
      return {gamma, ll, it - 1};
    const Mat H = hessian_gamma_prepared(pd, p);
    Eigen::LDLT<Mat> ldlt(H);
    Vec dir = ldlt.solve(-g);
    if (ldlt.info() != Eigen::Success || !dir.allFinite())
      throw SingularLikelihood("newton_gamma: singular Hessian");
    double step = 1.0;
    bool improved = false;
    for (int half = 0; half <= 30; ++half) {
      pd.set_baseline(gamma + step * dir, x0);
      const double trial = loglik_prepared(pd, p);
      if (trial >= ll - 1e-12 * (1.0 + std::fabs(ll))) {
        gamma += step * dir;
        ll = trial;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved)
      throw NonConvergence("newton_gamma: no ascent after 30 halvings");
    pd.set_baseline(gamma, x0);
  }
  const Vec g = grad_gamma_prepared(pd, p);
  if (g.cwiseAbs().maxCoeff() < cfg.gamma_tol)
    return {gamma, ll, cfg.max_newton_iters};
  throw NonConvergence("newton_gamma: iteration cap reached with gradient norm " +
                       std::to_string(g.cwiseAbs().maxCoeff()));
}

struct FitReport {
  std::vector<double> loglik_trace;
  double loglik = -kInf;
  double kkt = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  int outer_iters = 0;
  Vec gamma_hat, p_hat, x0_hat, standard_errors;
  std::string message;
};

struct MableFit {
  BernsteinPHModel model;
  FitReport report;
};

namespace detail {

// Reseed the weights after the baseline covariate moves: sample the current
// conditional density at the new baseline on the grid i/m, keep the tail mass
// consistent, and normalize back onto the simplex.
inline Vec reseed_weights(const Vec& p, int m, bool has_tail, double shift,
                          double interior_eps) {
  const double eta = std::exp(shift);
  const int k = int(p.size());
  Vec seed = Vec::Zero(k);
  double tail_mass = 0.0;
  if (has_tail) {
    tail_mass = p[m + 1] > 0.0 ? std::pow(p[m + 1], eta) : 0.0;
    seed[m + 1] = tail_mass;
  }
  for (int i = 0; i <= m; ++i) {
    const double t = m == 0 ? 0.0 : double(i) / double(m);
    const Vec bd = beta_density_row(m, t);
    const Vec bs = beta_survival_row(m, t);
    const double f0 = bd.dot(p.head(m + 1));
    double s0 = bs.dot(p.head(m + 1)) + (has_tail ? p[m + 1] : 0.0);
    s0 = std::max(s0, 1e-12);  // the power below blows up at a vanished tail
    seed[i] = eta * std::pow(s0, eta - 1.0) * f0;
  }
  const double head = seed.head(m + 1).sum();
  if (head > 0.0)
    seed.head(m + 1) *= (1.0 - tail_mass) / head;
  else
    seed.head(m + 1).setConstant((1.0 - tail_mass) / double(m + 1));
  if (seed.minCoeff() < 1e-12) seed = project_interior(seed, interior_eps);
  return seed;
}

inline void fill_se(MableFit& fit, const Dataset& ds) {
  if (ds.d == 0) return;
  try {
    fit.report.standard_errors = observed_information(fit.model, ds).se;
  } catch (const SingularLikelihood&) {
    fit.report.standard_errors =
        Vec::Constant(ds.d, std::numeric_limits<double>::quiet_NaN());
  }
}

}  // namespace detail

// No-covariate fit: the fixed point reduces to the EM update with lambda = n.
inline MableFit fit_no_covariate(const Dataset& ds, int m, const FitConfig& cfg = {},
                                 std::optional<Vec> p0 = std::nullopt,
                                 TailChoice tail = TailChoice::Auto) {
  if (ds.d != 0)
    throw std::invalid_argument("fit_no_covariate: dataset has covariates");
  const bool has_tail = resolve_tail(ds, tail);
  PreparedData pd(ds, m, has_tail);
  const Vec start = p0 ? *p0 : Vec::Constant(pd.k, 1.0 / pd.k);
  if (int(start.size()) != pd.k)
    throw std::invalid_argument("fit_no_covariate: p0 length mismatch");
  MableFit fit;
  fit.model.m = m;
  fit.model.has_tail = has_tail;
  fit.model.tau = ds.tau_n;
  fit.model.gamma = Vec();
  fit.model.x0 = Vec();
  try {
    const PSolve ps = solve_p(pd, start, cfg);
    fit.model.p = ps.p;
    fit.report.loglik = ps.loglik;
    fit.report.kkt = ps.kkt;
    fit.report.converged = true;
    fit.report.loglik_trace = {ps.loglik};
  } catch (const NonConvergence& e) {
    fit.model.p = e.last_p;
    fit.report.kkt = e.kkt;
    fit.report.converged = false;
    fit.report.message = e.what();
    if (e.last_p.size() == pd.k)
      fit.report.loglik = loglik_prepared(pd, e.last_p);
  }
  fit.report.outer_iters = 1;
  fit.report.p_hat = fit.model.p;
  return fit;
}

// Full alternating fit: seed weights at gamma^0, then alternate Newton in
// gamma with weight solves, re-anchoring the baseline covariate whenever the
// updated gamma moves the risk minimizer.
inline MableFit mable_fit(const Dataset& ds, int m, const FitConfig& cfg = {},
                          std::optional<Vec> gamma_init = std::nullopt,
                          TailChoice tail = TailChoice::Auto,
                          std::optional<Vec> p_init = std::nullopt) {
  if (ds.d == 0) return fit_no_covariate(ds, m, cfg, std::move(p_init), tail);
  if (m < 1) throw std::invalid_argument("mable_fit: degree must be >= 1");
  Vec gamma = gamma_init ? *gamma_init : Vec::Zero(ds.d);
  if (int(gamma.size()) != ds.d)
    throw std::invalid_argument("mable_fit: gamma_init dimension mismatch");

  const bool has_tail = resolve_tail(ds, tail);
  PreparedData pd(ds, m, has_tail);
  int base_idx = empirical_baseline_index(ds, gamma);
  pd.set_baseline(gamma, ds.obs[base_idx].x);

  MableFit fit;
  fit.model.m = m;
  fit.model.has_tail = has_tail;
  fit.model.tau = ds.tau_n;
  FitReport& rep = fit.report;

  Vec p = p_init ? *p_init : Vec::Constant(pd.k, 1.0 / pd.k);
  if (int(p.size()) != pd.k)
    throw std::invalid_argument("mable_fit: p_init length mismatch");
  try {
    PSolve ps = solve_p(pd, p, cfg);
    p = ps.p;
    rep.loglik_trace.push_back(ps.loglik);
    rep.kkt = ps.kkt;
    double ll = ps.loglik;
    for (int s = 1; s <= cfg.max_outer_iters; ++s) {
      rep.outer_iters = s;
      const Vec gamma_prev = gamma;
      const double ll_prev = ll;
      const NewtonResult nr = newton_gamma(pd, p, gamma, cfg);
      gamma = nr.gamma;

      int cand = empirical_baseline_index(ds, gamma);
      double shift = 0.0;
      if (cand != base_idx) {
        shift = gamma.dot(ds.obs[cand].x - ds.obs[base_idx].x);
        if (shift >= -1e-12) {
          base_idx = std::min(base_idx, cand);  // tie: anchor deterministically
          cand = base_idx;
        }
      } else {
        cand = base_idx;
      }

      if (cand != base_idx) {
        // Re-anchoring changes the finite-degree parametrization, so the
        // reseeded weights only approximate the old curve and the move can
        // lose likelihood; an unconditional move then cycles between two
        // anchors. Solve at both anchors and keep whichever fits better.
        const Vec p_moved =
            detail::reseed_weights(p, m, has_tail, shift, cfg.interior_eps);
        pd.set_baseline(gamma, ds.obs[cand].x);
        const PSolve moved = solve_p(pd, p_moved, cfg);
        bool take_move = true;
        pd.set_baseline(gamma, ds.obs[base_idx].x);
        try {
          const PSolve stayed = solve_p(pd, p, cfg);
          if (moved.loglik >
              stayed.loglik + 1e-12 * (1.0 + std::fabs(stayed.loglik))) {
            take_move = true;
          } else {
            take_move = false;
            ps = stayed;
          }
        } catch (const NegativeScore&) {
          take_move = true;  // old anchor is infeasible at the new gamma
        }
        if (take_move) {
          base_idx = cand;
          pd.set_baseline(gamma, ds.obs[base_idx].x);
          ps = moved;
        }
      } else {
        pd.set_baseline(gamma, ds.obs[base_idx].x);
        ps = solve_p(pd, p, cfg);
      }
      p = ps.p;
      ll = ps.loglik;
      rep.loglik_trace.push_back(ll);
      rep.kkt = ps.kkt;
      if (std::fabs(ll - ll_prev) < cfg.loglik_tol &&
          (gamma - gamma_prev).cwiseAbs().maxCoeff() < cfg.gamma_tol) {
        rep.converged = true;
        break;
      }
    }
    if (!rep.converged)
      rep.message = "mable_fit: outer iteration cap reached";
  } catch (const NonConvergence& e) {
    rep.converged = false;
    rep.message = e.what();
    if (e.last_p.size() == pd.k) p = e.last_p;
    rep.kkt = e.kkt;
  }

  fit.model.p = p;
  fit.model.gamma = gamma;
  fit.model.x0 = ds.obs[base_idx].x;
  rep.loglik = rep.loglik_trace.empty() ? -kInf : rep.loglik_trace.back();
  rep.gamma_hat = gamma;
  rep.p_hat = p;
  rep.x0_hat = fit.model.x0;
  detail::fill_se(fit, ds);
  return fit;
}

// Two-sample fit on a binary covariate; relabels the groups when the fitted
// coefficient is negative so the working baseline is the lower-risk group.
struct TwoSampleFit {
  MableFit fit;        // fit on the working (possibly relabeled) data
  bool flipped = false;
  double gamma = 0.0;  // original-orientation coefficient
  double se = std::numeric_limits<double>::quiet_NaN();

  // Survival curve of the original group 0 or 1.
  double group_survival(double t, int group) const {
    Vec x(1);
    x[0] = flipped ? 1.0 - double(group) : double(group);
    return conditional_survival(fit.model, t, x);
  }
};

inline TwoSampleFit two_sample_fit(const Dataset& ds, int m,
                                   const FitConfig& cfg = {},
                                   TailChoice tail = TailChoice::Auto) {
  if (ds.d != 1)
    throw std::invalid_argument("two_sample_fit: needs a single covariate");
  bool saw0 = false, saw1 = false;
  for (const auto& z : ds.obs) {
    if (z.x[0] == 0.0)
      saw0 = true;
    else if (z.x[0] == 1.0)
      saw1 = true;
    else
      throw std::invalid_argument("two_sample_fit: covariate must be 0 or 1");
  }
  if (!saw0 || !saw1)
    throw std::invalid_argument("two_sample_fit: both groups must be present");

  TwoSampleFit out;
  out.fit = mable_fit(ds, m, cfg, std::nullopt, tail);
  if (out.fit.report.converged && out.fit.model.gamma[0] < 0.0) {
    std::vector<Observation> flipped = ds.obs;
    for (auto& z : flipped) z.x[0] = 1.0 - z.x[0];
    Dataset fds(flipped, ds.tau_supplied ? std::optional<double>(ds.tau_n)
                                         : std::nullopt);
    out.fit = mable_fit(fds, m, cfg, std::nullopt, tail);
    out.flipped = true;
  }
  out.gamma = out.flipped ? -out.fit.model.gamma[0] : out.fit.model.gamma[0];
  if (out.fit.report.standard_errors.size() == 1)
    out.se = out.fit.report.standard_errors[0];
  return out;
}

}  // namespace mable
