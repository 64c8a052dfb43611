#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "jlcm/modelsel.hpp"
#include "jlcm/rng.hpp"

using namespace jlcm;
using Catch::Approx;

namespace {

PointwiseLogLik make_pll(int S, int n, const std::vector<double>& ll) {
  PointwiseLogLik p;
  p.n_draws = S;
  p.n_subjects = n;
  p.ll = ll;
  return p;
}

PointwiseLogLik random_pll(int S, int n, std::uint64_t seed) {
  Rng rng(mix_seed({seed}));
  std::vector<double> ll(static_cast<std::size_t>(S) * n);
  for (double& v : ll) v = -1.5 + 0.4 * rng.normal();
  return make_pll(S, n, ll);
}

}  // namespace

TEST_CASE("information criterion matches the two-draw hand computation") {
  PointwiseLogLik pll = make_pll(2, 1, {std::log(0.5), std::log(0.25)});
  CriterionResult r = waic(pll);
  double lppd = std::log(0.375);
  double p = 0.5 * std::log(2.0) * std::log(2.0);
  REQUIRE(r.estimate == Approx(-2.0 * (lppd - p)).epsilon(1e-13));
  REQUIRE(r.estimate == Approx(2.442111519941654).epsilon(1e-12));
  REQUIRE(r.p_eff == Approx(p).epsilon(1e-13));
  REQUIRE(r.se == 0.0);  // a single subject has no between-subject variance
  REQUIRE(r.pointwise.size() == 1);
  REQUIRE(r.pointwise[0] == Approx(r.estimate).epsilon(1e-13));
}

TEST_CASE("identical draws collapse both criteria to the plain deviance") {
  const int S = 200, n = 7;
  std::vector<double> ll(static_cast<std::size_t>(S) * n);
  std::vector<double> base = {-1.2, -0.3, -2.4, -0.9, -1.7, -0.4, -3.1};
  for (int s = 0; s < S; ++s)
    for (int i = 0; i < n; ++i) ll[static_cast<std::size_t>(s) * n + i] = base[i];
  PointwiseLogLik pll = make_pll(S, n, ll);

  double dev = 0.0;
  for (double b : base) dev += -2.0 * b;

  CriterionResult w = waic(pll);
  REQUIRE(w.estimate == Approx(dev).epsilon(1e-12));
  REQUIRE(w.p_eff == Approx(0.0).margin(1e-12));

  CriterionResult l = psis_loo(pll);
  REQUIRE(l.estimate == Approx(dev).epsilon(1e-12));
  REQUIRE(l.p_eff == Approx(0.0).margin(1e-10));
  for (double k : l.pareto_khat) REQUIRE(k == kNegInf);  // degenerate tail sentinel
}

TEST_CASE("criteria are invariant to draw and subject permutations") {
  PointwiseLogLik pll = random_pll(60, 9, 17);
  CriterionResult w0 = waic(pll), l0 = psis_loo(pll);

  // reverse the draws
  PointwiseLogLik rev = pll;
  for (int s = 0; s < pll.n_draws; ++s)
    for (int i = 0; i < pll.n_subjects; ++i)
      rev.ll[static_cast<std::size_t>(s) * pll.n_subjects + i] =
          pll.at(pll.n_draws - 1 - s, i);
  CriterionResult w1 = waic(rev), l1 = psis_loo(rev);
  REQUIRE(w1.estimate == Approx(w0.estimate).epsilon(1e-13));
  REQUIRE(l1.estimate == Approx(l0.estimate).epsilon(1e-13));

  // rotate the subjects; pointwise contributions rotate with them
  PointwiseLogLik rot = pll;
  for (int s = 0; s < pll.n_draws; ++s)
    for (int i = 0; i < pll.n_subjects; ++i)
      rot.ll[static_cast<std::size_t>(s) * pll.n_subjects + i] =
          pll.at(s, (i + 3) % pll.n_subjects);
  CriterionResult w2 = waic(rot), l2 = psis_loo(rot);
  REQUIRE(w2.estimate == Approx(w0.estimate).epsilon(1e-13));
  REQUIRE(l2.estimate == Approx(l0.estimate).epsilon(1e-13));
  for (int i = 0; i < pll.n_subjects; ++i) {
    REQUIRE(w2.pointwise[i] == Approx(w0.pointwise[(i + 3) % pll.n_subjects]).epsilon(1e-12));
    REQUIRE(l2.pointwise[i] == Approx(l0.pointwise[(i + 3) % pll.n_subjects]).epsilon(1e-12));
  }
}

TEST_CASE("leave-one-out penalty is nonnegative and bounded by the fit") {
  PointwiseLogLik pll = random_pll(400, 12, 23);
  CriterionResult l = psis_loo(pll);
  REQUIRE(l.p_eff >= 0.0);  // elpd_loo <= lppd
  CriterionResult w = waic(pll);
  REQUIRE(w.p_eff >= 0.0);
}

TEST_CASE("pareto tail index grows with the importance-ratio tail weight") {
  // Single subject; log-likelihood -exp(sigma Z) has a log-ratio tail that
  // thickens with sigma.
  auto khat_for = [](double sigma, std::uint64_t seed) {
    Rng rng(mix_seed({seed}));
    const int S = 2000;
    std::vector<double> ll(S);
    for (double& v : ll) v = -std::exp(sigma * rng.normal());
    PointwiseLogLik pll = make_pll(S, 1, ll);
    CriterionResult l = psis_loo(pll);
    return l.pareto_khat[0];
  };
  double thin = khat_for(0.5, 11);
  double thick = khat_for(2.0, 11);
  REQUIRE(thick > thin);
  REQUIRE(thick > 0.7);  // heavy enough to trip the reliability warning
}

TEST_CASE("model comparison z-test on pointwise differences") {
  PointwiseLogLik pll = random_pll(150, 20, 3);
  CriterionResult a = waic(pll);

  SECTION("a model compared with itself is a tie") {
    ComparisonResult r = compare(a, a);
    REQUIRE(r.delta == 0.0);
    REQUIRE(r.se == 0.0);
    REQUIRE(r.z == 0.0);
    REQUIRE(r.favored == -1);
    REQUIRE_FALSE(r.significant_5);
  }

  SECTION("zero-variance differences yield the infinite z sentinel") {
    CriterionResult ca = a, b = a;
    ca.pointwise = {-1.25};
    b.pointwise = {-0.75};
    ca.estimate = -1.25;
    b.estimate = -0.75;
    ComparisonResult r = compare(ca, b);
    REQUIRE(r.delta == Approx(-0.5).epsilon(1e-12));
    REQUIRE(r.se == 0.0);
    REQUIRE(std::isinf(r.z));
    REQUIRE(r.z < 0.0);
    REQUIRE(r.favored == 0);  // first model carries the smaller deviance
    REQUIRE(r.significant_01);
    REQUIRE(r.p_value == 0.0);
  }

  SECTION("a constant pointwise shift is decisively significant") {
    CriterionResult ca = a, b = a;
    ca.pointwise.assign(20, -1.25);
    b.pointwise.assign(20, -0.85);
    ca.estimate = -1.25 * 20;
    b.estimate = -0.85 * 20;
    ComparisonResult r = compare(ca, b);
    REQUIRE(r.delta == Approx(-8.0).epsilon(1e-12));
    // rounding dust can keep se marginally above zero; either way the
    // statistic must be overwhelming
    REQUIRE((std::isinf(r.z) || std::fabs(r.z) > 1e6));
    REQUIRE(r.favored == 0);
    REQUIRE(r.significant_01);
    REQUIRE(r.p_value == Approx(0.0).margin(1e-12));
  }

  SECTION("noisy differences produce a finite z and significance ladder") {
    Rng rng(mix_seed({77u}));
    CriterionResult b = a;
    b.estimate = 0.0;
    for (double& v : b.pointwise) {
      v += 1.0 + 0.05 * rng.normal();
      b.estimate += v;
    }
    ComparisonResult r = compare(a, b);
    REQUIRE(r.delta < 0.0);
    REQUIRE(r.se > 0.0);
    REQUIRE(r.favored == 0);
    REQUIRE(r.significant_5);
    REQUIRE(r.significant_1);
    REQUIRE(r.significant_01);
    REQUIRE(r.p_value < 1e-3);
    REQUIRE(r.z == Approx(r.delta / r.se));
  }

  SECTION("mismatched subject counts are rejected") {
    PointwiseLogLik other = random_pll(150, 19, 4);
    CriterionResult b = waic(other);
    REQUIRE_THROWS_AS(compare(a, b), ConfigError);
  }
}

TEST_CASE("convergence diagnostic is near one for well-mixed chains") {
  Rng rng(mix_seed({2025u}));
  std::vector<std::vector<double>> chains(4, std::vector<double>(1000));
  for (auto& ch : chains)
    for (double& v : ch) v = rng.normal();
  double r = split_rhat(chains);
  REQUIRE(r > 0.999);
  REQUIRE(r < 1.01);
  double e = ess(chains);
  REQUIRE(std::fabs(e - 4000.0) / 4000.0 < 0.15);
}

TEST_CASE("convergence diagnostic flags separated chains") {
  Rng rng(mix_seed({31u}));
  std::vector<std::vector<double>> chains(2, std::vector<double>(500));
  for (double& v : chains[0]) v = rng.normal();
  for (double& v : chains[1]) v = 10.0 + rng.normal();
  REQUIRE(split_rhat(chains) > 2.0);
  REQUIRE(ess(chains) < 100.0);
}

TEST_CASE("effective sample size tracks first-order autocorrelation") {
  // AR(1) with rho = 0.9 has ESS/S = (1-rho)/(1+rho) = 1/19.
  Rng rng(mix_seed({55u}));
  const double rho = 0.9, innov = std::sqrt(1.0 - rho * rho);
  std::vector<std::vector<double>> chains(2, std::vector<double>(10000));
  for (auto& ch : chains) {
    double x = rng.normal();
    for (double& v : ch) {
      x = rho * x + innov * rng.normal();
      v = x;
    }
  }
  double e = ess(chains);
  double expected = 20000.0 * (1.0 - rho) / (1.0 + rho);
  REQUIRE(std::fabs(e - expected) / expected < 0.25);
}

TEST_CASE("degenerate chains produce sentinel diagnostics") {
  std::vector<std::vector<double>> flat(3, std::vector<double>(200, 1.234));
  REQUIRE(std::isnan(split_rhat(flat)));
  REQUIRE(ess(flat) == Approx(600.0));

  std::vector<std::vector<double>> tiny(2, std::vector<double>(3, 0.0));
  REQUIRE_THROWS_AS(split_rhat(tiny), ConfigError);
  REQUIRE_THROWS_AS(ess(tiny), ConfigError);
}

TEST_CASE("split halves detect within-chain drift") {
  // A strong linear trend inside a single chain splits into two shifted
  // halves, so the diagnostic must exceed the stationary threshold.
  std::vector<std::vector<double>> chains(1, std::vector<double>(1000));
  Rng rng(mix_seed({8u}));
  for (int t = 0; t < 1000; ++t) chains[0][t] = 0.01 * t + 0.5 * rng.normal();
  REQUIRE(split_rhat(chains) > 1.2);
}
