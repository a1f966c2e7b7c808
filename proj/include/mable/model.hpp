#pragma once

// Data containers and the Bernstein proportional-hazards model: baseline
// density/survival on [0, tau] with an optional exponential tail beyond tau,
// and conditional curves S(t|x) = S0(t)^exp(gamma'(x - x0)).

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mable/bernstein_basis.hpp"

namespace mable {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// One subject: exact event time (delta=0, y1==y2) or censoring interval
// (delta=1, y1 < y2, y2 possibly infinite; y1=0 left censoring).
struct Observation {
  double y1 = 0.0;
  double y2 = 0.0;
  int delta = 0;
  Vec x;

  bool exact() const { return delta == 0; }
  bool right_censored() const { return delta == 1 && std::isinf(y2); }
};

inline void validate_observation(const Observation& z, int row = -1) {
  const std::string where =
      row >= 0 ? " (row " + std::to_string(row) + ")" : std::string();
  if (z.delta != 0 && z.delta != 1)
    throw std::invalid_argument("observation: delta must be 0 or 1" + where);
  if (!(z.y1 >= 0.0) || std::isinf(z.y1) || std::isnan(z.y1) || std::isnan(z.y2))
    throw std::invalid_argument("observation: y1 must be finite and >= 0" + where);
  if (z.delta == 0 && !(z.y2 == z.y1))
    throw std::invalid_argument("observation: exact time needs y1 == y2" + where);
  if (z.delta == 1 && !(z.y2 > z.y1))
    throw std::invalid_argument("observation: censoring needs y1 < y2" + where);
}

// Largest finite endpoint; the time scale of the fit.
inline double choose_tau(const std::vector<Observation>& obs) {
  double tau = 0.0;
  for (const auto& z : obs) {
    tau = std::max(tau, z.y1);
    if (!std::isinf(z.y2)) tau = std::max(tau, z.y2);
  }
  if (!(tau > 0.0))
    throw std::invalid_argument(
        "choose_tau: no positive finite endpoint, time scale undetermined");
  return tau;
}

// Observations plus the derived scale tau_n; times are kept raw and exposed
// rescaled to [0,1] through s1/s2.
struct Dataset {
  std::vector<Observation> obs;
  double tau_n = 0.0;
  bool tau_supplied = false;
  int d = 0;

  Dataset() = default;
  explicit Dataset(std::vector<Observation> observations,
                   std::optional<double> tau_override = std::nullopt)
      : obs(std::move(observations)) {
    if (obs.empty()) throw std::invalid_argument("dataset: no observations");
    d = int(obs[0].x.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
      validate_observation(obs[i], int(i));
      if (int(obs[i].x.size()) != d)
        throw std::invalid_argument("dataset: covariate dimension mismatch at row " +
                                    std::to_string(i));
    }
    const double tmax = [&] {
      try {
        return choose_tau(obs);
      } catch (const std::invalid_argument&) {
        if (tau_override) return 0.0;  // scale comes from the override
        throw;
      }
    }();
    if (tau_override) {
      if (!(*tau_override > 0.0) || *tau_override < tmax)
        throw std::invalid_argument(
            "dataset: supplied tau must be positive and >= all finite times");
      tau_n = *tau_override;
      tau_supplied = true;
    } else {
      tau_n = tmax;
    }
  }

  int n() const { return int(obs.size()); }
  double s1(int i) const { return obs[i].y1 / tau_n; }
  double s2(int i) const {
    return std::isinf(obs[i].y2) ? kInf : obs[i].y2 / tau_n;
  }
  bool any_right_censored() const {
    for (const auto& z : obs)
      if (z.right_censored()) return true;
    return false;
  }
};

// Fitted model: degree m, mixture weights p on the simplex (one extra tail
// component when has_tail), regression coefficients and baseline covariate.
struct BernsteinPHModel {
  int m = 0;
  bool has_tail = false;
  Vec p;
  Vec gamma;
  Vec x0;
  double tau = 1.0;

  int mstar() const { return m + (has_tail ? 1 : 0); }
};

inline void validate_model(const BernsteinPHModel& mod) {
  if (mod.m < 0) throw std::invalid_argument("model: degree must be >= 0");
  if (!(mod.tau > 0.0)) throw std::invalid_argument("model: tau must be positive");
  if (int(mod.p.size()) != mod.mstar() + 1)
    throw std::invalid_argument("model: p has length " +
                                std::to_string(mod.p.size()) + ", expected " +
                                std::to_string(mod.mstar() + 1));
  if (mod.p.minCoeff() < -1e-12)
    throw std::invalid_argument("model: negative mixture weight");
  if (std::fabs(mod.p.sum() - 1.0) > 1e-8)
    throw std::invalid_argument("model: mixture weights must sum to 1");
  if (mod.gamma.size() != mod.x0.size())
    throw std::invalid_argument("model: gamma and x0 dimension mismatch");
}

// Tail hazard rate glued continuously to the polynomial part at tau. When the
// last polynomial weight vanishes while tail mass remains, the continuous rate
// is 0 and the model falls back to rate (m+1)/tau; *degenerate reports that.
inline double tail_rate(const BernsteinPHModel& mod, bool* degenerate = nullptr) {
  if (degenerate) *degenerate = false;
  if (!mod.has_tail) return 0.0;
  const double pm = mod.p[mod.m], ptail = mod.p[mod.m + 1];
  if (ptail <= 0.0) return 0.0;
  if (pm <= 0.0) {
    if (degenerate) *degenerate = true;
    return (mod.m + 1) / mod.tau;
  }
  return (mod.m + 1) * pm / (ptail * mod.tau);
}

inline double baseline_density(const BernsteinPHModel& mod, double t) {
  if (!(t >= 0.0)) throw std::domain_error("baseline_density: t must be >= 0");
  if (std::isinf(t)) return 0.0;
  if (t <= mod.tau) {
    const Vec row = beta_density_row(mod.m, t / mod.tau);
    return row.dot(mod.p.head(mod.m + 1)) / mod.tau;
  }
  if (!mod.has_tail) return 0.0;
  const double ptail = mod.p[mod.m + 1];
  if (ptail <= 0.0) return 0.0;
  const double a0 = tail_rate(mod);
  return ptail * a0 * std::exp(-a0 * (t - mod.tau));
}

inline double baseline_survival(const BernsteinPHModel& mod, double t) {
  if (!(t >= 0.0)) throw std::domain_error("baseline_survival: t must be >= 0");
  if (std::isinf(t)) return 0.0;
  const double ptail = mod.has_tail ? mod.p[mod.m + 1] : 0.0;
  if (t <= mod.tau) {
    const Vec row = beta_survival_row(mod.m, t / mod.tau);
    return row.dot(mod.p.head(mod.m + 1)) + ptail;
  }
  if (ptail <= 0.0) return 0.0;
  return ptail * std::exp(-tail_rate(mod) * (t - mod.tau));
}

inline double relative_risk(const BernsteinPHModel& mod, const Vec& x) {
  if (x.size() != mod.gamma.size())
    throw std::invalid_argument("covariate dimension does not match the model");
  return std::exp(mod.gamma.dot(x - mod.x0));
}

inline double conditional_survival(const BernsteinPHModel& mod, double t,
                                   const Vec& x) {
  const double eta = relative_risk(mod, x);
  const double s0 = baseline_survival(mod, t);
  if (s0 <= 0.0) return 0.0;
  return std::pow(s0, eta);
}

// Density at covariate x: eta * S0(t)^(eta-1) * f0(t). Where S0(t)=0 the
// limit is 0 for eta>1, f0(t) for eta=1, and +infinity for eta<1.
inline double conditional_density(const BernsteinPHModel& mod, double t,
                                  const Vec& x) {
  const double eta = relative_risk(mod, x);
  const double f0 = baseline_density(mod, t);
  const double s0 = baseline_survival(mod, t);
  if (s0 <= 0.0) {
    if (eta > 1.0) return 0.0;
    if (eta == 1.0) return f0;
    return f0 > 0.0 ? kInf : 0.0;
  }
  return eta * std::pow(s0, eta - 1.0) * f0;
}

}  // namespace mable
