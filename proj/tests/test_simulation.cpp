#include <mable/simulation.hpp>

#include <algorithm>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <set>
#include <vector>

#include "test_util.hpp"

using namespace mable;

namespace {

bool same_dataset(const Dataset& a, const Dataset& b) {
  if (a.n() != b.n() || a.d != b.d) return false;
  for (int i = 0; i < a.n(); ++i) {
    const auto& u = a.obs[i];
    const auto& v = b.obs[i];
    if (u.delta != v.delta) return false;
    if (u.y1 != v.y1) return false;
    if (u.y2 != v.y2 && !(std::isinf(u.y2) && std::isinf(v.y2))) return false;
    for (int j = 0; j < a.d; ++j)
      if (u.x[j] != v.x[j]) return false;
  }
  return true;
}

SimDesign near_uncensored(int n) {
  SimDesign dz;
  dz.n = n;
  dz.censor_prob = 1e-12;  // the design forbids exactly zero
  return dz;
}

}  // namespace

TEST_CASE("weibull draws match the closed-form median") {
  SimDesign dz = near_uncensored(100000);
  dz.gamma_true = Vec::Zero(2);  // eta = 1: marginal time is Weibull(2, 2)
  const Dataset ds = simulate_weibull_ph(dz, 0);
  std::vector<double> t;
  t.reserve(ds.obs.size());
  for (const auto& z : ds.obs) {
    REQUIRE(z.exact());
    t.push_back(z.y1);
  }
  std::nth_element(t.begin(), t.begin() + t.size() / 2, t.end());
  const double med = t[t.size() / 2];
  const double want = 2.0 * std::sqrt(std::log(2.0));
  CHECK(med == Catch::Approx(want).epsilon(0.01));
}

TEST_CASE("realized censoring fraction tracks the design") {
  SimDesign dz;
  dz.n = 100000;
  const Dataset ds = simulate_weibull_ph(dz, 1);
  int censored = 0, right = 0, left = 0;
  for (const auto& z : ds.obs) {
    if (z.exact()) {
      CHECK(z.y1 > 0.0);
      continue;
    }
    ++censored;
    REQUIRE(z.y1 < z.y2);
    if (std::isinf(z.y2)) ++right;
    if (z.y1 == 0.0) ++left;
  }
  const double frac = double(censored) / double(ds.n());
  CHECK(frac == Catch::Approx(0.70).margin(0.01));
  // The inspection window is wide, so tail escapes are rare but present and
  // early events land before the first inspection often enough to matter.
  CHECK(left > 100);
  CHECK(right > 0);
  CHECK(right < censored / 20);
}

TEST_CASE("datasets are bytewise deterministic and replicate-splittable") {
  SimDesign dz;
  dz.n = 200;
  const Dataset a = simulate_weibull_ph(dz, 7);
  const Dataset b = simulate_weibull_ph(dz, 7);
  CHECK(same_dataset(a, b));
  const Dataset c = simulate_weibull_ph(dz, 8);
  CHECK_FALSE(same_dataset(a, c));
  dz.seed = 2;
  const Dataset d = simulate_weibull_ph(dz, 7);
  CHECK_FALSE(same_dataset(a, d));

  std::set<std::uint64_t> seeds;
  for (int r = 0; r < 1000; ++r) seeds.insert(detail::replicate_seed(1, r));
  CHECK(seeds.size() == 1000);
}

TEST_CASE("design validation rejects degenerate settings") {
  SimDesign dz;
  dz.n = 5;
  CHECK_THROWS_AS(validate_design(dz), std::invalid_argument);
  dz = SimDesign{};
  dz.censor_prob = 0.0;
  CHECK_THROWS_AS(validate_design(dz), std::invalid_argument);
  dz = SimDesign{};
  dz.inspections = 0;
  CHECK_THROWS_AS(validate_design(dz), std::invalid_argument);
  dz = SimDesign{};
  dz.gamma_true = Vec::Zero(3);
  CHECK_THROWS_AS(validate_design(dz), std::invalid_argument);
}

TEST_CASE("parametric gradient matches finite differences") {
  std::vector<Observation> obs = {
      {0.8, 0.8, 0, (Vec(2) << 0.3, -1.0).finished()},
      {0.5, 1.2, 1, (Vec(2) << -0.2, 1.0).finished()},
      {1.5, kInf, 1, (Vec(2) << 0.9, 1.0).finished()},
      {0.0, 0.4, 1, (Vec(2) << -1.0, -1.0).finished()},
      {1.1, 1.1, 0, (Vec(2) << 0.6, 1.0).finished()},
  };
  const Dataset ds(obs);
  Vec u(4);
  u << 0.2, 0.1, 0.4, -0.3;
  Vec g(4);
  const double ll = detail::weibull_loglik(ds, u, &g);
  REQUIRE(std::isfinite(ll));
  for (int j = 0; j < 4; ++j) {
    const double fd = testutil::central_diff(
        [&](double v) {
          Vec w = u;
          w[j] = v;
          return detail::weibull_loglik(ds, w, nullptr);
        },
        u[j]);
    CHECK(g[j] == Catch::Approx(fd).epsilon(1e-5).margin(1e-7));
  }
}

TEST_CASE("parametric fit recovers shape and scale on uncensored data") {
  const SimDesign dz = near_uncensored(10000);
  const Dataset ds = simulate_weibull_ph(dz, 3);
  const WeibullFit wf = weibull_pmle(ds);
  CHECK(wf.theta == Catch::Approx(2.0).epsilon(0.02));
  CHECK(wf.sigma == Catch::Approx(2.0).epsilon(0.02));
  REQUIRE(wf.gamma.size() == 2);
  CHECK(wf.gamma[0] == Catch::Approx(0.5).margin(0.08));
  CHECK(wf.gamma[1] == Catch::Approx(-0.5).margin(0.08));
  CHECK(std::isfinite(wf.loglik));
}

TEST_CASE("parametric fit handles censored designs") {
  SimDesign dz;
  dz.n = 400;
  const Dataset ds = simulate_weibull_ph(dz, 11);
  const WeibullFit wf = weibull_pmle(ds);
  CHECK(wf.theta == Catch::Approx(2.0).margin(0.5));
  CHECK(wf.sigma == Catch::Approx(2.0).margin(0.5));
}

TEST_CASE("constant covariate is rejected as unidentifiable") {
  std::vector<Observation> obs;
  testutil::Rng rng(17);
  for (int i = 0; i < 30; ++i) {
    Observation z;
    z.x = (Vec(2) << rng.uniform(), 1.0).finished();
    z.delta = 0;
    z.y1 = z.y2 = 0.5 + rng.uniform();
    obs.push_back(z);
  }
  CHECK_THROWS_AS(weibull_pmle(Dataset(obs)), std::invalid_argument);
}

TEST_CASE("streamed mean matches the two-pass computation") {
  testutil::Rng rng(23);
  const int count = 500, dim = 6;
  std::vector<Vec> rows;
  RunningMean rm;
  for (int i = 0; i < count; ++i) {
    Vec v(dim);
    for (int j = 0; j < dim; ++j) v[j] = rng.uniform(-3.0, 3.0);
    rows.push_back(v);
    rm.add(v);
  }
  Vec two_pass = Vec::Zero(dim);
  for (const auto& v : rows) two_pass += v;
  two_pass /= double(count);
  REQUIRE(rm.count == count);
  for (int j = 0; j < dim; ++j)
    CHECK(rm.mean[j] == Catch::Approx(two_pass[j]).margin(1e-10));

  RunningMean zero;
  for (int i = 0; i < 50; ++i) zero.add(Vec::Zero(3));
  CHECK(zero.mean.cwiseAbs().maxCoeff() == 0.0);  // exact errors stay exact
}

TEST_CASE("mse report aggregates a small study") {
  SimDesign dz;
  dz.n = 30;
  dz.replicates = 20;
  const SimReport rep =
      mse_report(dz, {SimMethod::FullMable, SimMethod::Pmle});
  REQUIRE(rep.methods.size() == 2);
  REQUIRE(rep.grid.size() == 100);
  CHECK(rep.grid[0] == 0.0);
  CHECK(rep.grid[99] == Catch::Approx(dz.horizon).margin(1e-12));
  for (const auto& st : rep.methods) {
    CHECK(st.used + st.failed == dz.replicates);
    REQUIRE(st.used > 0);
    REQUIRE(st.mse_gamma.size() == 2);
    CHECK(st.mse_gamma.minCoeff() >= 0.0);
    CHECK(std::isfinite(st.mse_gamma.maxCoeff()));
    REQUIRE(st.mse_curve.size() == 100);
    // At t = 0 every estimator reports the weight sum, i.e. 1 to rounding.
    CHECK(st.mse_curve[0] < 1e-28);
    CHECK(st.mse_curve.maxCoeff() < 0.25);
  }
  CHECK_THROWS_AS(mse_report(SimDesign{.replicates = 0}, {SimMethod::Pmle}),
                  std::invalid_argument);
}

TEST_CASE("reported standard errors track the replicate spread") {
  SimDesign dz;
  dz.n = 100;
  const int reps = 30;
  std::vector<double> g1, se1;
  for (int r = 0; r < reps; ++r) {
    const Dataset ds = simulate_weibull_ph(dz, r);
    const MableFit fit = mable_fit(ds, 8, {}, std::nullopt, TailChoice::On);
    if (!fit.report.converged) continue;
    if (fit.report.standard_errors.size() != 2) continue;
    if (!std::isfinite(fit.report.standard_errors[0])) continue;
    g1.push_back(fit.model.gamma[0]);
    se1.push_back(fit.report.standard_errors[0]);
  }
  REQUIRE(int(g1.size()) >= reps - 4);
  double mean = 0.0;
  for (double v : g1) mean += v;
  mean /= double(g1.size());
  double var = 0.0;
  for (double v : g1) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / double(g1.size() - 1));
  std::nth_element(se1.begin(), se1.begin() + se1.size() / 2, se1.end());
  const double med_se = se1[se1.size() / 2];
  CHECK(med_se > 0.5 * sd);
  CHECK(med_se < 2.0 * sd);
}
