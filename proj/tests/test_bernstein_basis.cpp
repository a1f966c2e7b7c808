#include "mable/bernstein_basis.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"

using mable::beta_density;
using mable::beta_density_row;
using mable::beta_survival;
using mable::beta_survival_row;

TEST_CASE("beta_density degenerate and hand-computed values") {
  CHECK(beta_density(0, 0, 0.0) == 1.0);
  CHECK(beta_density(0, 0, 0.37) == 1.0);
  CHECK(beta_density(0, 0, 1.0) == 1.0);

  // m=1: beta_10(t) = 2(1-t), beta_11(t) = 2t.
  CHECK(beta_density(1, 0, 0.3) == Catch::Approx(1.4).epsilon(1e-14));
  CHECK(beta_density(1, 1, 0.3) == Catch::Approx(0.6).epsilon(1e-14));

  // Endpoints: only the boundary basis functions are nonzero, with value m+1.
  CHECK(beta_density(5, 0, 0.0) == 6.0);
  CHECK(beta_density(5, 3, 0.0) == 0.0);
  CHECK(beta_density(5, 5, 1.0) == 6.0);
  CHECK(beta_density(5, 2, 1.0) == 0.0);
}

TEST_CASE("beta_survival matches quadrature of beta_density") {
  // Independent oracle: integrate the density over [t,1] by adaptive Simpson.
  struct Case {
    int m, i;
    double t;
  };
  const Case cases[] = {{1, 0, 0.5}, {3, 1, 0.2},  {6, 6, 0.8},
                        {9, 4, 0.5}, {12, 0, 0.05}, {20, 17, 0.9}};
  for (const auto& c : cases) {
    const double oracle = testutil::integrate(
        [&](double u) { return beta_density(c.m, c.i, u); }, c.t, 1.0, 1e-13);
    CHECK(beta_survival(c.m, c.i, c.t) == Catch::Approx(oracle).margin(1e-10));
  }
  // Frozen value: integral of 2(1-u) over [1/2,1] is 1/4.
  CHECK(beta_survival(1, 0, 0.5) == Catch::Approx(0.25).margin(1e-13));
}

TEST_CASE("beta_survival endpoints, monotonicity and ordering") {
  for (int m : {0, 1, 4, 11}) {
    for (int i = 0; i <= m; ++i) {
      CHECK(beta_survival(m, i, 0.0) == 1.0);
      CHECK(beta_survival(m, i, 1.0) == 0.0);
    }
  }
  // Nonincreasing in t; nondecreasing in the index i.
  const int m = 8;
  double prev = 1.0;
  for (double t = 0.0; t <= 1.0001; t += 0.05) {
    const double tt = std::min(t, 1.0);
    const double v = beta_survival(m, 3, tt);
    CHECK(v <= prev + 1e-14);
    prev = v;
  }
  for (int i = 1; i <= m; ++i)
    CHECK(beta_survival(m, i, 0.4) >= beta_survival(m, i - 1, 0.4) - 1e-14);
}

TEST_CASE("basis partition identities") {
  testutil::Rng rng(42);
  for (int rep = 0; rep < 50; ++rep) {
    const int m = rng.uniform_int(0, 40);
    const double t = rng.uniform();
    const Eigen::VectorXd d = beta_density_row(m, t);
    const Eigen::VectorXd s = beta_survival_row(m, t);
    CHECK(d.sum() / (m + 1) == Catch::Approx(1.0).margin(1e-12));
    CHECK(s.sum() == Catch::Approx((m + 1) * (1.0 - t)).margin(1e-11));
  }
}

TEST_CASE("row evaluation agrees with elementwise calls") {
  testutil::Rng rng(7);
  for (int rep = 0; rep < 30; ++rep) {
    const int m = rng.uniform_int(1, 100);
    const double t = rng.uniform();
    const Eigen::VectorXd d = beta_density_row(m, t);
    const Eigen::VectorXd s = beta_survival_row(m, t);
    for (int i = 0; i <= m; i += std::max(1, m / 7)) {
      CHECK(d[i] == Catch::Approx(beta_density(m, i, t)).margin(1e-12));
      CHECK(s[i] == Catch::Approx(beta_survival(m, i, t)).margin(1e-12));
    }
  }
}

TEST_CASE("survival derivative is minus the density") {
  testutil::Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const int m = rng.uniform_int(1, 15);
    const int i = rng.uniform_int(0, m);
    const double t = rng.uniform(0.05, 0.95);
    const double fd = testutil::central_diff(
        [&](double u) { return beta_survival(m, i, u); }, t);
    CHECK(fd == Catch::Approx(-beta_density(m, i, t)).margin(1e-6));
  }
}

TEST_CASE("tail component of the survival row is identically one") {
  const Eigen::VectorXd s0 = beta_survival_row(3, 0.0, true);
  const Eigen::VectorXd s1 = beta_survival_row(3, 1.0, true);
  const Eigen::VectorXd sm = beta_survival_row(3, 0.6, true);
  REQUIRE(s0.size() == 5);
  CHECK(s0[4] == 1.0);
  CHECK(s1[4] == 1.0);
  CHECK(sm[4] == 1.0);
  CHECK(s1.head(4).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("basis rejects out-of-domain arguments") {
  CHECK_THROWS_AS(beta_density(3, -1, 0.5), std::domain_error);
  CHECK_THROWS_AS(beta_density(3, 4, 0.5), std::domain_error);
  CHECK_THROWS_AS(beta_density(3, 1, -0.01), std::domain_error);
  CHECK_THROWS_AS(beta_survival(3, 1, 1.01), std::domain_error);
  CHECK_THROWS_AS(beta_survival_row(-1, 0.5), std::domain_error);
  CHECK_THROWS_AS(mable::regularized_incomplete_beta(0.0, 1.0, 0.5),
                  std::domain_error);
}

TEST_CASE("incomplete beta is accurate at high degree") {
  // Two independent routes: continued fraction vs forward row recurrence.
  for (int m : {50, 100}) {
    for (double t : {0.02, 0.31, 0.5, 0.77, 0.98}) {
      const Eigen::VectorXd row = beta_survival_row(m, t);
      for (int i = 0; i <= m; i += 9)
        CHECK(row[i] == Catch::Approx(beta_survival(m, i, t)).margin(1e-12));
    }
  }
}
