#pragma once

// Bernstein beta basis used by the approximate likelihood: the Beta(i+1, m-i+1)
// densities beta_mi, their survival integrals Bbar_mi, and O(m) row evaluation.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mable {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double log_binomial(int n, int k) {
  return std::lgamma(double(n) + 1.0) - std::lgamma(double(k) + 1.0) -
         std::lgamma(double(n - k) + 1.0);
}

namespace detail {

// Continued fraction for the regularized incomplete beta I_x(a,b), evaluated
// with the modified Lentz recurrence. Converges quickly for x below a/(a+b).
inline double ibeta_cf(double a, double b, double x) {
  constexpr double fpmin = 1e-300;
  constexpr double eps = 3e-16;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 400; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  const double lfront = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                        a * std::log(x) + b * std::log1p(-x);
  return std::exp(lfront) * h / a;
}

}  // namespace detail

// Regularized incomplete beta I_x(a,b); symmetry switch at the mean a/(a+b).
inline double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0))
    throw std::domain_error("regularized_incomplete_beta: shapes must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  if (x < a / (a + b)) return detail::ibeta_cf(a, b, x);
  return 1.0 - detail::ibeta_cf(b, a, 1.0 - x);
}

namespace detail {

inline void check_basis_args(int m, int i, double t, const char* who) {
  if (m < 0) throw std::domain_error(std::string(who) + ": degree m must be >= 0");
  if (i < 0 || i > m)
    throw std::domain_error(std::string(who) + ": index i=" + std::to_string(i) +
                            " outside [0," + std::to_string(m) + "]");
  if (!(t >= 0.0 && t <= 1.0))
    throw std::domain_error(std::string(who) + ": t=" + std::to_string(t) +
                            " outside [0,1]");
}

}  // namespace detail

// beta_mi(t) = (m+1) C(m,i) t^i (1-t)^(m-i), the Beta(i+1, m-i+1) density.
inline double beta_density(int m, int i, double t) {
  detail::check_basis_args(m, i, t, "beta_density");
  if (t == 0.0) return i == 0 ? double(m + 1) : 0.0;
  if (t == 1.0) return i == m ? double(m + 1) : 0.0;
  const double lg = std::log(double(m + 1)) + log_binomial(m, i) +
                    i * std::log(t) + (m - i) * std::log1p(-t);
  return std::exp(lg);
}

// Bbar_mi(t) = 1 - I_t(i+1, m-i+1), the survival integral of beta_mi.
inline double beta_survival(int m, int i, double t) {
  detail::check_basis_args(m, i, t, "beta_survival");
  if (t == 0.0) return 1.0;
  if (t == 1.0) return 0.0;
  // 1 - I_t(a,b) = I_{1-t}(b,a); evaluate the small-tail side directly.
  return regularized_incomplete_beta(double(m - i + 1), double(i + 1), 1.0 - t);
}

// Row (beta_m0(t), ..., beta_mm(t)).
inline Eigen::VectorXd beta_density_row(int m, double t) {
  detail::check_basis_args(m, 0, t, "beta_density_row");
  Eigen::VectorXd row = Eigen::VectorXd::Zero(m + 1);
  if (t == 0.0) {
    row[0] = double(m + 1);
    return row;
  }
  if (t == 1.0) {
    row[m] = double(m + 1);
    return row;
  }
  const double lt = std::log(t), l1t = std::log1p(-t), lm1 = std::log(double(m + 1));
  for (int i = 0; i <= m; ++i)
    row[i] = std::exp(lm1 + log_binomial(m, i) + i * lt + (m - i) * l1t);
  return row;
}

// Row (Bbar_m0(t), ..., Bbar_mm(t)[, 1]). Uses the identity
// Bbar_mi(t) = P(Binomial(m+1, t) <= i), accumulated by the forward
// recurrence between consecutive incomplete-beta values. With include_tail an
// extra trailing component Bbar_{m,m+1}(t) = 1 is appended.
inline Eigen::VectorXd beta_survival_row(int m, double t, bool include_tail = false) {
  detail::check_basis_args(m, 0, t, "beta_survival_row");
  const int len = m + 1 + (include_tail ? 1 : 0);
  Eigen::VectorXd row(len);
  if (t == 0.0) {
    row.setOnes();
    return row;
  }
  if (t == 1.0) {
    row.setZero();
    if (include_tail) row[m + 1] = 1.0;
    return row;
  }
  const double lt = std::log(t), l1t = std::log1p(-t);
  double acc = 0.0;
  for (int j = 0; j <= m; ++j) {
    acc += std::exp(log_binomial(m + 1, j) + j * lt + (m + 1 - j) * l1t);
    row[j] = acc < 1.0 ? acc : 1.0;
  }
  if (include_tail) row[m + 1] = 1.0;
  return row;
}

}  // namespace mable
