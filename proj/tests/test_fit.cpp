#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <vector>

#include "jlcm/fit.hpp"
#include "jlcm/simulate.hpp"
#include "helpers.hpp"

using namespace jlcm;
using Catch::Approx;

namespace {

FitOptions quick_options(int chains, std::uint64_t seed) {
  FitOptions opt;
  opt.nuts.chains = chains;
  opt.nuts.iterations = 260;
  opt.nuts.warmup = 150;
  opt.nuts.seed = seed;
  return opt;
}

}  // namespace

TEST_CASE("initial points honor user pins and stay finite") {
  SimulatedDataset sim = testutil::scenario_data("setting1-g2", 12, 2);
  ScenarioConfig cfg = builtin_scenario("setting1-g2", 12, 2);
  PriorSpec priors;
  auto cd = std::make_shared<const CompiledData>(CompiledData::build(sim.data, cfg.spec, priors));
  Posterior post(cd);
  ParamLayout lay = ParamLayout::make(cfg.spec, 12);

  FitOptions opt = quick_options(2, 4);
  opt.inits[1]["beta[1][intercept]"] = 7.5;
  opt.inits[1]["sigma2[1]"] = 0.5;

  std::vector<double> theta = initial_point(post, opt, 1);
  REQUIRE(theta[lay.beta(0, 0)] == 7.5);
  REQUIRE(theta[lay.sigma2(0)] == Approx(std::log(0.5)));
  REQUIRE(std::isfinite(post.value(theta.data())));

  // chains without pins jitter around the prior anchor
  std::vector<double> other = initial_point(post, opt, 2);
  REQUIRE(other[lay.beta(0, 0)] != 7.5);
  REQUIRE(std::isfinite(post.value(other.data())));

  // deterministic per chain id
  REQUIRE(initial_point(post, opt, 2) == other);

  SECTION("unknown parameter name") {
    FitOptions bad = opt;
    bad.inits[1]["beta[9][intercept]"] = 1.0;
    REQUIRE_THROWS_AS(initial_point(post, bad, 1), ConfigError);
  }
  SECTION("positive parameter pinned nonpositive") {
    FitOptions bad = opt;
    bad.inits[1]["sigma2[1]"] = -2.0;
    REQUIRE_THROWS_AS(initial_point(post, bad, 1), ConfigError);
  }
}

TEST_CASE("full fit returns coherent artifacts on a small dataset") {
  SimulatedDataset sim = testutil::scenario_data("setting1-g1", 15, 8);
  ScenarioConfig cfg = builtin_scenario("setting1-g1", 15, 8);
  PriorSpec priors;
  FitOptions opt = quick_options(2, 10);

  FitResult fit = run_fit(sim.data, cfg.spec, priors, opt);

  REQUIRE(fit.chains.size() == 2);
  REQUIRE(fit.selection.selected >= 0);
  REQUIRE(fit.selection.log_weights.size() == 2);
  REQUIRE(std::isfinite(fit.selection.log_weights[fit.selection.selected]));
  REQUIRE(fit.selection.epsilon > 0.0);

  ParamLayout lay = ParamLayout::make(cfg.spec, 15);
  REQUIRE(static_cast<int>(fit.param_names.size()) == lay.n_params);
  REQUIRE(fit.summary.size() == fit.param_names.size());
  for (const auto& row : fit.summary) {
    REQUIRE(std::isfinite(row.mean));
    REQUIRE(row.sd >= 0.0);
    REQUIRE(row.q025 <= row.mean);
    REQUIRE(row.mean <= row.q975);
  }

  const ChainDraws& best = fit.selected();
  REQUIRE(best.n_kept == 110);
  REQUIRE(fit.labels.n_draws == 110);
  REQUIRE(fit.labels.n_subjects == 15);
  REQUIRE(fit.map_labels.size() == 15);
  for (int lab : fit.map_labels) REQUIRE(lab == 1);  // single-class model
  REQUIRE(fit.class_probs.size() == 15);
  for (double p : fit.class_probs) REQUIRE(p == 1.0);

  REQUIRE(fit.pointwise.n_draws == 110);
  REQUIRE(fit.pointwise.n_subjects == 15);
  for (double v : fit.pointwise.ll) REQUIRE(std::isfinite(v));

  // the sampled sigma2 summary row stays positive on the constrained scale
  for (std::size_t k = 0; k < fit.param_names.size(); ++k)
    if (fit.param_names[k] == "sigma2[1]") REQUIRE(fit.summary[k].q025 > 0.0);
}

TEST_CASE("fits are reproducible for a fixed seed") {
  SimulatedDataset sim = testutil::scenario_data("setting1-g1", 10, 14);
  ScenarioConfig cfg = builtin_scenario("setting1-g1", 10, 14);
  PriorSpec priors;
  FitOptions opt = quick_options(2, 21);

  FitResult a = run_fit(sim.data, cfg.spec, priors, opt);
  FitResult b = run_fit(sim.data, cfg.spec, priors, opt);
  REQUIRE(a.selection.selected == b.selection.selected);
  REQUIRE(a.selection.log_weights == b.selection.log_weights);
  for (std::size_t c = 0; c < a.chains.size(); ++c) {
    REQUIRE(a.chains[c].draws == b.chains[c].draws);
    REQUIRE(a.chains[c].step_size == b.chains[c].step_size);
  }
  REQUIRE(a.labels.labels == b.labels.labels);

  FitOptions other = quick_options(2, 22);
  FitResult c = run_fit(sim.data, cfg.spec, priors, other);
  REQUIRE(a.chains[0].draws != c.chains[0].draws);
}

TEST_CASE("a chain that cannot initialize is reported failed, not fatal") {
  SimulatedDataset sim = testutil::scenario_data("setting1-g1", 10, 3);
  ScenarioConfig cfg = builtin_scenario("setting1-g1", 10, 3);
  PriorSpec priors;

  FitOptions opt = quick_options(2, 5);
  opt.inits[1]["beta[1][intercept]"] = 1e308;  // overflows the likelihood

  FitResult fit = run_fit(sim.data, cfg.spec, priors, opt);
  REQUIRE(fit.chains[0].failed);
  REQUIRE_FALSE(fit.chains[0].failure_reason.empty());
  REQUIRE_FALSE(fit.chains[1].failed);
  REQUIRE(fit.selection.selected == 1);
  REQUIRE(fit.selection.log_weights[0] == kNegInf);

  SECTION("and every chain failing raises the dedicated error") {
    FitOptions doomed = quick_options(2, 5);
    doomed.inits[1]["beta[1][intercept]"] = 1e308;
    doomed.inits[2]["beta[1][intercept]"] = 1e308;
    REQUIRE_THROWS_AS(run_fit(sim.data, cfg.spec, priors, doomed), AllChainsFailed);
  }
}
