#pragma once

// Approximate log-likelihood for interval-censored proportional-hazards data
// and its derivatives in the mixture weights p and the coefficients gamma.
// All formulas work on times rescaled to [0,1]; -infinity is an ordinary
// log-likelihood value, not an error.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mable/bernstein_basis.hpp"
#include "mable/model.hpp"

namespace mable {

// A denominator underflowed to zero while its numerator did not.
struct SingularLikelihood : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Basis rows and covariate terms cached for one (dataset, degree, tail)
// triple. Basis rows depend only on the rescaled times, so refitting gamma or
// the baseline covariate only refreshes eta and the centered covariates.
struct PreparedData {
  int m = 0;
  bool has_tail = false;
  int k = 0;  // weight vector length m* + 1
  int d = 0;
  int n_exact = 0, n_cens = 0;

  Mat bd_exact;   // n_exact x k, beta densities (tail column zero)
  Mat bs_exact;   // n_exact x k, survival rows (tail column one)
  Mat bs_left;    // n_cens x k, survival rows at y1
  Mat bs_right;   // n_cens x k, survival rows at y2 (all zero when y2 = inf)
  Mat x_exact;    // n_exact x d
  Mat x_cens;     // n_cens x d

  Vec gamma, x0;
  Mat xt_exact, xt_cens;  // x - x0
  Vec eta_exact, eta_cens;

  PreparedData(const Dataset& ds, int degree, bool tail)
      : m(degree), has_tail(tail), k(degree + 1 + (tail ? 1 : 0)), d(ds.d) {
    if (degree < 0) throw std::invalid_argument("prepare: degree must be >= 0");
    for (const auto& z : ds.obs) (z.exact() ? n_exact : n_cens)++;
    bd_exact = Mat::Zero(n_exact, k);
    bs_exact = Mat::Zero(n_exact, k);
    bs_left = Mat::Zero(n_cens, k);
    bs_right = Mat::Zero(n_cens, k);
    x_exact = Mat::Zero(n_exact, d);
    x_cens = Mat::Zero(n_cens, d);
    int ie = 0, ic = 0;
    for (int i = 0; i < ds.n(); ++i) {
      const auto& z = ds.obs[i];
      if (z.exact()) {
        bd_exact.row(ie).head(m + 1) = beta_density_row(m, ds.s1(i));
        bs_exact.row(ie).head(m + 1) = beta_survival_row(m, ds.s1(i));
        if (has_tail) bs_exact(ie, m + 1) = 1.0;
        if (d > 0) x_exact.row(ie) = z.x;
        ++ie;
      } else {
        bs_left.row(ic).head(m + 1) = beta_survival_row(m, ds.s1(i));
        if (has_tail) bs_left(ic, m + 1) = 1.0;
        if (!std::isinf(z.y2)) {
          bs_right.row(ic).head(m + 1) = beta_survival_row(m, ds.s2(i));
          if (has_tail) bs_right(ic, m + 1) = 1.0;
        }
        if (d > 0) x_cens.row(ic) = z.x;
        ++ic;
      }
    }
    set_baseline(Vec::Zero(d), Vec::Zero(d));
  }

  void set_baseline(const Vec& g, const Vec& base) {
    if (int(g.size()) != d || int(base.size()) != d)
      throw std::invalid_argument("set_baseline: dimension mismatch");
    gamma = g;
    x0 = base;
    xt_exact = x_exact.rowwise() - base.transpose();
    xt_cens = x_cens.rowwise() - base.transpose();
    eta_exact = (xt_exact * gamma).array().exp();
    eta_cens = (xt_cens * gamma).array().exp();
  }

  double lambda_n() const { return eta_exact.sum() + eta_cens.sum(); }
};

namespace detail {

// exp(a + log b) for b >= 0 without forming exp(a) when it would overflow.
inline double exp_scaled(double a, double b) {
  return b > 0.0 ? std::exp(a + std::log(b)) : 0.0;
}

}  // namespace detail

// Total log-likelihood; optionally accumulates the gradient in p (the sum of
// per-observation score components) into *grad.
inline double loglik_and_grad_p(const PreparedData& pd, const Vec& p,
                                Vec* grad = nullptr) {
  if (int(p.size()) != pd.k)
    throw std::invalid_argument("p has length " + std::to_string(p.size()) +
                                ", expected " + std::to_string(pd.k));
  if (grad) grad->setZero(pd.k);
  double ll = 0.0;

  if (pd.n_exact > 0) {
    const Vec f = pd.bd_exact * p;
    const Vec S = pd.bs_exact * p;
    for (int i = 0; i < pd.n_exact; ++i) {
      const double eta = pd.eta_exact[i];
      if (pd.d > 0) ll += pd.xt_exact.row(i).dot(pd.gamma);
      ll += std::log(f[i]);
      if (eta != 1.0) ll += (eta - 1.0) * std::log(S[i]);
      if (grad) {
        if (f[i] <= 0.0)
          throw SingularLikelihood("zero fitted density at an exact time");
        grad->noalias() += pd.bd_exact.row(i).transpose() / f[i];
        if (eta != 1.0) {
          if (S[i] <= 0.0)
            throw SingularLikelihood("zero fitted survival at an exact time");
          grad->noalias() += pd.bs_exact.row(i).transpose() * ((eta - 1.0) / S[i]);
        }
      }
    }
  }

  for (int i = 0; i < pd.n_cens; ++i) {
    const double eta = pd.eta_cens[i];
    const double S1 = pd.bs_left.row(i).dot(p);
    const double S2 = pd.bs_right.row(i).dot(p);
    if (S1 <= 0.0) {
      ll = -kInf;
      if (grad) throw SingularLikelihood("zero probability censoring interval");
      continue;
    }
    const double L1 = std::log(S1);
    const double delta = S2 > 0.0 ? std::log(S2) - L1 : -kInf;
    const double r = std::exp(eta * delta);  // (S2/S1)^eta
    ll += eta * L1 + std::log1p(-r);
    if (grad) {
      if (r >= 1.0)
        throw SingularLikelihood("zero probability censoring interval");
      const double c = eta / (S1 * (1.0 - r));
      grad->noalias() += pd.bs_left.row(i).transpose() * c;
      if (S2 > 0.0) {
        const double kappa = (eta - 1.0) * delta;  // log of (S2/S1)^(eta-1)
        for (int j = 0; j < pd.k; ++j)
          (*grad)[j] -= c * detail::exp_scaled(kappa, pd.bs_right(i, j));
      }
    }
  }
  return ll;
}

inline double loglik_prepared(const PreparedData& pd, const Vec& p) {
  return loglik_and_grad_p(pd, p);
}

inline Vec grad_p_prepared(const PreparedData& pd, const Vec& p) {
  Vec g;
  loglik_and_grad_p(pd, p, &g);
  return g;
}

inline Mat hessian_p_prepared(const PreparedData& pd, const Vec& p) {
  if (int(p.size()) != pd.k)
    throw std::invalid_argument("hessian_p: p length mismatch");
  Mat H = Mat::Zero(pd.k, pd.k);
  if (pd.n_exact > 0) {
    const Vec f = pd.bd_exact * p;
    const Vec S = pd.bs_exact * p;
    for (int i = 0; i < pd.n_exact; ++i) {
      const double eta = pd.eta_exact[i];
      if (f[i] <= 0.0)
        throw SingularLikelihood("zero fitted density at an exact time");
      const Vec bd = pd.bd_exact.row(i).transpose() / f[i];
      H.noalias() -= bd * bd.transpose();
      if (eta != 1.0) {
        if (S[i] <= 0.0)
          throw SingularLikelihood("zero fitted survival at an exact time");
        const Vec bs = pd.bs_exact.row(i).transpose() / S[i];
        H.noalias() -= (eta - 1.0) * (bs * bs.transpose());
      }
    }
  }
  for (int i = 0; i < pd.n_cens; ++i) {
    const double eta = pd.eta_cens[i];
    const double S1 = pd.bs_left.row(i).dot(p);
    const double S2 = pd.bs_right.row(i).dot(p);
    if (S1 <= 0.0)
      throw SingularLikelihood("zero probability censoring interval");
    const double L1 = std::log(S1);
    const double delta = S2 > 0.0 ? std::log(S2) - L1 : -kInf;
    const double r = std::exp(eta * delta);
    if (r >= 1.0)
      throw SingularLikelihood("zero probability censoring interval");
    const double q = 1.0 / (1.0 - r);
    const double c = eta * q / (S1 * S1);
    const Vec u1 = pd.bs_left.row(i).transpose();
    // Scale the right row inside the exponential so nothing overflows while
    // the true matrix entries are representable.
    Vec w2 = Vec::Zero(pd.k), v = u1;
    if (S2 > 0.0) {
      for (int j = 0; j < pd.k; ++j) {
        w2[j] = detail::exp_scaled(0.5 * (eta - 2.0) * delta, pd.bs_right(i, j));
        v[j] -= detail::exp_scaled((eta - 1.0) * delta, pd.bs_right(i, j));
      }
    }
    H.noalias() += c * (eta - 1.0) * (u1 * u1.transpose() - w2 * w2.transpose());
    H.noalias() -= c * eta * q * (v * v.transpose());
  }
  return H;
}

inline Vec grad_gamma_prepared(const PreparedData& pd, const Vec& p) {
  if (pd.d == 0) return Vec();
  Vec g = Vec::Zero(pd.d);
  if (pd.n_exact > 0) {
    const Vec S = pd.bs_exact * p;
    for (int i = 0; i < pd.n_exact; ++i) {
      if (S[i] <= 0.0)
        throw SingularLikelihood("zero fitted survival at an exact time");
      g.noalias() += (1.0 + pd.eta_exact[i] * std::log(S[i])) *
                     pd.xt_exact.row(i).transpose();
    }
  }
  for (int i = 0; i < pd.n_cens; ++i) {
    const double eta = pd.eta_cens[i];
    const double S1 = pd.bs_left.row(i).dot(p);
    const double S2 = pd.bs_right.row(i).dot(p);
    if (S1 <= 0.0)
      throw SingularLikelihood("zero probability censoring interval");
    const double L1 = std::log(S1);
    const double L2 = S2 > 0.0 ? std::log(S2) : 0.0;  // unused when S2 = 0
    const double r = S2 > 0.0 ? std::exp(eta * (L2 - L1)) : 0.0;
    if (r >= 1.0)
      throw SingularLikelihood("zero probability censoring interval");
    const double w = eta * (L1 - r * L2) / (1.0 - r);
    g.noalias() += w * pd.xt_cens.row(i).transpose();
  }
  return g;
}

inline Mat hessian_gamma_prepared(const PreparedData& pd, const Vec& p) {
  if (pd.d == 0) return Mat();
  Mat H = Mat::Zero(pd.d, pd.d);
  if (pd.n_exact > 0) {
    const Vec S = pd.bs_exact * p;
    for (int i = 0; i < pd.n_exact; ++i) {
      if (S[i] <= 0.0)
        throw SingularLikelihood("zero fitted survival at an exact time");
      const Vec xt = pd.xt_exact.row(i).transpose();
      H.noalias() += pd.eta_exact[i] * std::log(S[i]) * (xt * xt.transpose());
    }
  }
  for (int i = 0; i < pd.n_cens; ++i) {
    const double eta = pd.eta_cens[i];
    const double S1 = pd.bs_left.row(i).dot(p);
    const double S2 = pd.bs_right.row(i).dot(p);
    if (S1 <= 0.0)
      throw SingularLikelihood("zero probability censoring interval");
    const double L1 = std::log(S1);
    const double L2 = S2 > 0.0 ? std::log(S2) : 0.0;
    const double r = S2 > 0.0 ? std::exp(eta * (L2 - L1)) : 0.0;
    if (r >= 1.0)
      throw SingularLikelihood("zero probability censoring interval");
    const double q = 1.0 / (1.0 - r);
    const double dot1 = (eta * eta * L1 * L1 + eta * L1 -
                         r * (eta * eta * L2 * L2 + eta * L2)) * q;
    const double dot2 = eta * (L1 - r * L2) * q;
    const Vec xt = pd.xt_cens.row(i).transpose();
    H.noalias() += (dot1 - dot2 * dot2) * (xt * xt.transpose());
  }
  return H;
}

namespace detail {

inline PreparedData prepare_for(const BernsteinPHModel& mod, const Dataset& ds) {
  if (std::fabs(mod.tau - ds.tau_n) > 1e-12 * std::max(1.0, ds.tau_n))
    throw std::invalid_argument("model and dataset disagree on the time scale");
  PreparedData pd(ds, mod.m, mod.has_tail);
  pd.set_baseline(mod.gamma, mod.x0);
  return pd;
}

}  // namespace detail

// Single-observation log-likelihood under the fitted model.
inline double loglik_obs(const BernsteinPHModel& mod, const Observation& z) {
  validate_observation(z);
  Dataset one(std::vector<Observation>{z}, mod.tau);
  return loglik_prepared(detail::prepare_for(mod, one), mod.p);
}

inline double loglik_total(const BernsteinPHModel& mod, const Dataset& ds) {
  return loglik_prepared(detail::prepare_for(mod, ds), mod.p);
}

inline Vec grad_p(const BernsteinPHModel& mod, const Dataset& ds) {
  return grad_p_prepared(detail::prepare_for(mod, ds), mod.p);
}

inline Mat hessian_p(const BernsteinPHModel& mod, const Dataset& ds) {
  return hessian_p_prepared(detail::prepare_for(mod, ds), mod.p);
}

inline Vec grad_gamma(const BernsteinPHModel& mod, const Dataset& ds) {
  return grad_gamma_prepared(detail::prepare_for(mod, ds), mod.p);
}

inline Mat hessian_gamma(const BernsteinPHModel& mod, const Dataset& ds) {
  return hessian_gamma_prepared(detail::prepare_for(mod, ds), mod.p);
}

struct ObservedInfo {
  Mat info;  // -(1/n) sum of per-observation gamma Hessians
  Vec se;    // sqrt of the diagonal of (n * info)^{-1}
};

inline ObservedInfo observed_information(const BernsteinPHModel& mod,
                                         const Dataset& ds) {
  if (ds.d == 0)
    throw std::invalid_argument("observed_information: model has no covariates");
  const Mat H = hessian_gamma(mod, ds);
  ObservedInfo out;
  out.info = -H / double(ds.n());
  Eigen::SelfAdjointEigenSolver<Mat> es(out.info);
  const Vec ev = es.eigenvalues();
  const double lo = ev.minCoeff(), hi = ev.maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12)
    throw SingularLikelihood("observed information matrix is singular");
  out.se = (-H).inverse().diagonal().cwiseSqrt();
  return out;
}

}  // namespace mable
