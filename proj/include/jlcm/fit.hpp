#pragma once
// Full fitting pipeline: initialize chains around prior anchors (or
// user-supplied values), run them concurrently, select the best chain by
// harmonic-mean weight, then recover class labels, membership probabilities,
// pointwise log-likelihoods, and a posterior summary on the selected chain.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "jlcm/chain_select.hpp"
#include "jlcm/labels.hpp"
#include "jlcm/modelsel.hpp"
#include "jlcm/nuts.hpp"
#include "jlcm/posterior.hpp"
#include "jlcm/rng.hpp"
#include "jlcm/types.hpp"
#include "jlcm/util.hpp"

namespace jlcm {

struct FitOptions {
  NutsConfig nuts;
  double hm_beta = 0.6;
  std::optional<double> hm_epsilon;
  // chain (1-based) -> parameter name -> constrained initial value
  std::map<int, std::map<std::string, double>> inits;
};

struct SummaryRow {
  std::string name;
  double mean = 0.0, sd = 0.0, q025 = 0.0, q975 = 0.0;
};

struct FitResult {
  std::vector<ChainDraws> chains;
  ChainWeightReport selection;
  std::vector<std::string> param_names;
  ClassDraws labels;                // selected chain
  std::vector<double> class_probs;  // n x G
  std::vector<int> map_labels;      // 1-based
  PointwiseLogLik pointwise;        // selected chain
  std::vector<SummaryRow> summary;  // named parameters, selected chain

  const ChainDraws& selected() const { return chains[selection.selected]; }
};

namespace detail {

inline double prior_anchor(const Prior& prior) {
  switch (prior.family) {
    case PriorFamily::Normal: return prior.p1;
    case PriorFamily::Gamma: return prior.p1 / prior.p2;
    case PriorFamily::HalfNormal: return prior.p1 * std::sqrt(2.0 / kPi);
    case PriorFamily::InverseGamma:
      return prior.p1 > 1.0 ? prior.p2 / (prior.p1 - 1.0) : 1.0;
  }
  return 0.0;
}

// Unconstrained coordinates centered on each prior's mean/mode analog;
// latent effects start at zero.
inline std::vector<double> init_anchor(const ParamLayout& lay, const PriorSpec& priors) {
  std::vector<double> theta(lay.dim, 0.0);
  for (int g = 0; g < lay.G; ++g) {
    int base = g * lay.per_class;
    for (int m = 0; m < lay.F; ++m) theta[base + m] = prior_anchor(priors.beta);
    theta[base + lay.F] = std::log(prior_anchor(priors.sigma2));
    theta[base + lay.F + 1] = std::log(prior_anchor(priors.weibull_shape));
    theta[base + lay.F + 2] = prior_anchor(priors.weibull_log_scale);
    for (int q = 0; q < lay.Q; ++q)
      theta[base + lay.F + 3 + q] = prior_anchor(priors.gamma);
    theta[base + lay.F + 3 + lay.Q] = prior_anchor(priors.alpha);
    for (int l = 0; l < lay.R; ++l)
      theta[base + lay.F + 4 + lay.Q + l] = std::log(prior_anchor(priors.re_variance));
  }
  for (int c = lay.G * lay.per_class; c < lay.n_params; ++c)
    theta[c] = prior_anchor(priors.psi);
  return theta;
}

}  // namespace detail

// Initial unconstrained state for one chain: anchor plus N(0, jitter^2) noise,
// with user-supplied named values held fixed, retried until the point is
// numerically workable.
inline std::vector<double> initial_point(Posterior& post, const FitOptions& opt, int chain_id) {
  const auto& data = post.data();
  const ParamLayout& lay = data.lay;
  std::vector<double> anchor = detail::init_anchor(lay, data.priors);

  std::vector<int> pinned;  // coordinates set exactly by the user
  std::vector<double> pinned_value;
  auto it = opt.inits.find(chain_id);
  if (it != opt.inits.end()) {
    std::vector<std::string> names = lay.param_names(data.spec);
    for (const auto& [name, value] : it->second) {
      auto pos = std::find(names.begin(), names.end(), name);
      if (pos == names.end())
        throw ConfigError("inits: unknown parameter '" + name + "'");
      int c = static_cast<int>(pos - names.begin());
      double v = value;
      if (lay.is_positive(c)) {
        if (!(v > 0.0))
          throw ConfigError("inits: parameter '" + name + "' must be positive");
        v = std::log(v);
      }
      pinned.push_back(c);
      pinned_value.push_back(v);
    }
  }

  // A finite density is not enough: unscaled covariates can put jittered
  // points in an exp-overflow regime (|grad| ~ 1e20) that step-size
  // adaptation cannot recover from. Shrink the jitter toward the prior
  // anchor until the point is both finite and numerically workable.
  Rng rng(mix_seed({opt.nuts.seed, stream::kInit, static_cast<std::uint64_t>(chain_id)}));
  std::vector<double> theta(lay.dim), grad(lay.dim);
  double scale = opt.nuts.init_jitter;
  for (int attempt = 0; attempt < 100; ++attempt, scale *= 0.95) {
    for (int c = 0; c < lay.dim; ++c) theta[c] = anchor[c] + scale * rng.normal();
    for (std::size_t k = 0; k < pinned.size(); ++k) theta[pinned[k]] = pinned_value[k];
    double lp = 0.0;
    if (!post.value_grad(theta.data(), lp, grad.data())) continue;
    if (!(lp > -1e12)) continue;
    double gmax = 0.0;
    for (int c = 0; c < lay.dim; ++c) gmax = std::max(gmax, std::fabs(grad[c]));
    if (gmax <= 1e8) return theta;
  }
  throw std::runtime_error("could not find a workable initial point in 100 attempts");
}

inline FitResult run_fit(std::shared_ptr<const CompiledData> data, const FitOptions& opt) {
  opt.nuts.validate();
  if (!(opt.hm_beta > 0.0 && opt.hm_beta <= 1.0))
    throw ConfigError("fit: hm_beta must be in (0, 1]");

  FitResult result;
  result.param_names = data->lay.param_names(data->spec);
  const int M = opt.nuts.chains;
  result.chains.resize(M);

  std::vector<std::thread> workers;
  workers.reserve(M);
  for (int c = 0; c < M; ++c) {
    workers.emplace_back([&, c]() {
      int chain_id = c + 1;
      try {
        Posterior target(data);
        std::vector<double> theta0 = initial_point(target, opt, chain_id);
        result.chains[c] = run_nuts(std::move(target), opt.nuts, chain_id, theta0);
      } catch (const std::exception& e) {
        ChainDraws failed;
        failed.chain_id = chain_id;
        failed.dim = data->lay.dim;
        failed.failed = true;
        failed.failure_reason = e.what();
        result.chains[c] = std::move(failed);
      }
    });
  }
  for (auto& w : workers) w.join();

  bool any_ok = false;
  std::string reasons;
  for (const auto& ch : result.chains) {
    any_ok = any_ok || !ch.failed;
    if (ch.failed)
      reasons += "chain " + std::to_string(ch.chain_id) + ": " + ch.failure_reason + "; ";
  }
  if (!any_ok) throw AllChainsFailed("all chains failed: " + reasons);

  result.selection = select_chain(result.chains, opt.hm_beta, opt.hm_epsilon);
  const ChainDraws& best = result.selected();

  Posterior post(data);
  result.labels = sample_class_labels(best, post, opt.nuts.seed);
  result.class_probs = posterior_class_probs(result.labels);
  result.map_labels = map_classes(result.class_probs, data->n, data->spec.n_classes);
  result.pointwise = pointwise_loglik(best, post);

  std::vector<double> col(best.n_kept);
  for (int p = 0; p < data->lay.n_params; ++p) {
    for (int s = 0; s < best.n_kept; ++s) col[s] = best.cdraw(s)[p];
    SummaryRow row;
    row.name = result.param_names[p];
    row.mean = mean_of(col);
    row.sd = best.n_kept > 1 ? sd_of(col) : 0.0;
    row.q025 = quantile_of(col, 0.025);
    row.q975 = quantile_of(col, 0.975);
    result.summary.push_back(std::move(row));
  }
  return result;
}

inline FitResult run_fit(const Dataset& data, const ModelSpec& spec, const PriorSpec& priors,
                         const FitOptions& opt) {
  auto compiled = std::make_shared<const CompiledData>(CompiledData::build(data, spec, priors));
  return run_fit(std::move(compiled), opt);
}

}  // namespace jlcm
