#pragma once
// Parallel-chain selection by truncated harmonic-mean marginal-likelihood
// weights. Each chain's weight is
//   w = [ (1/T) sum_i h(x_i) / q(x_i) ]^(-1),
// with q the unnormalized constrained-space posterior (lp minus the log
// Jacobian), and h a normalized uniform-ball kernel restricted to the chain's
// upper-beta log-density draws: h(x) = count{j in H_beta : d(x_j, x) < eps} /
// (beta T V(eps)). Distances are Euclidean on per-coordinate standardized
// draws; V(eps) is the ball volume mapped back through the standardization.
// The bandwidth is shared across chains: the max of per-chain defaults (1st
// percentile of pairwise distances among up to 1000 subsampled draws).

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "jlcm/nuts.hpp"
#include "jlcm/util.hpp"

namespace jlcm {

struct ChainWeightReport {
  double beta = 0.6;
  double epsilon = 0.0;
  std::vector<double> log_weights;  // -inf for failed chains
  std::vector<std::uint8_t> failed;
  int selected = -1;
};

namespace detail {

// Per-coordinate sds of the constrained draws; zero-variance coordinates get
// sd 1 so they drop out of both distances and the volume factor.
inline std::vector<double> chain_sds(const ChainDraws& ch) {
  const int d = ch.dim, T = ch.n_kept;
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (int s = 0; s < T; ++s) {
    const double* row = ch.cdraw(s);
    for (int c = 0; c < d; ++c) mean[c] += row[c];
  }
  for (int c = 0; c < d; ++c) mean[c] /= T;
  for (int s = 0; s < T; ++s) {
    const double* row = ch.cdraw(s);
    for (int c = 0; c < d; ++c) sd[c] += (row[c] - mean[c]) * (row[c] - mean[c]);
  }
  for (int c = 0; c < d; ++c) {
    sd[c] = T > 1 ? std::sqrt(sd[c] / (T - 1)) : 0.0;
    if (!(sd[c] > 1e-300)) sd[c] = 1.0;
  }
  return sd;
}

inline std::vector<double> standardize(const ChainDraws& ch, const std::vector<double>& sd) {
  const int d = ch.dim, T = ch.n_kept;
  std::vector<double> z(static_cast<std::size_t>(T) * d);
  for (int s = 0; s < T; ++s) {
    const double* row = ch.cdraw(s);
    double* out = z.data() + static_cast<std::size_t>(s) * d;
    for (int c = 0; c < d; ++c) out[c] = row[c] / sd[c];
  }
  return z;
}

}  // namespace detail

inline double default_epsilon(const ChainDraws& ch) {
  if (ch.n_kept < 2) throw ConfigError("default_epsilon: need at least 2 draws");
  const int d = ch.dim;
  std::vector<double> sd = detail::chain_sds(ch);
  int nsub = std::min(ch.n_kept, 1000);
  std::vector<int> idx(nsub);
  for (int k = 0; k < nsub; ++k)
    idx[k] = static_cast<int>(static_cast<long long>(k) * ch.n_kept / nsub);
  std::vector<double> z(static_cast<std::size_t>(nsub) * d);
  for (int k = 0; k < nsub; ++k) {
    const double* row = ch.cdraw(idx[k]);
    for (int c = 0; c < d; ++c) z[static_cast<std::size_t>(k) * d + c] = row[c] / sd[c];
  }
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(nsub) * (nsub - 1) / 2);
  for (int a = 0; a < nsub; ++a) {
    const double* za = z.data() + static_cast<std::size_t>(a) * d;
    for (int b = a + 1; b < nsub; ++b) {
      const double* zb = z.data() + static_cast<std::size_t>(b) * d;
      double acc = 0.0;
      for (int c = 0; c < d; ++c) {
        double diff = za[c] - zb[c];
        acc += diff * diff;
      }
      d2.push_back(acc);
    }
  }
  return std::sqrt(quantile_of(std::move(d2), 0.01));
}

inline double chain_log_weight(const ChainDraws& ch, double beta, double epsilon) {
  const int T = ch.n_kept, d = ch.dim;
  if (T < 100) throw ConfigError("chain_log_weight: need at least 100 kept draws");
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("chain_log_weight: beta must be in (0, 1]");
  if (!(epsilon > 0.0)) throw ConfigError("chain_log_weight: epsilon must be > 0");

  // constrained-space unnormalized posterior at each draw
  std::vector<double> lq(T);
  for (int s = 0; s < T; ++s) lq[s] = ch.lp[s] - ch.log_jacobian[s];

  // upper-beta high-density subset (inclusive at the threshold)
  std::vector<double> sorted = lq;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  int m = std::min<int>(T, static_cast<int>(std::ceil(beta * T)));
  double thresh = sorted[m - 1];
  std::vector<int> high;
  high.reserve(m);
  for (int s = 0; s < T; ++s)
    if (lq[s] >= thresh) high.push_back(s);

  std::vector<double> sd = detail::chain_sds(ch);
  std::vector<double> z = detail::standardize(ch, sd);
  const double eps2 = epsilon * epsilon;

  std::vector<double> terms;
  terms.reserve(T);
  for (int s = 0; s < T; ++s) {
    const double* zs = z.data() + static_cast<std::size_t>(s) * d;
    long count = 0;
    for (int j : high) {
      const double* zj = z.data() + static_cast<std::size_t>(j) * d;
      double acc = 0.0;
      for (int c = 0; c < d; ++c) {
        double diff = zs[c] - zj[c];
        acc += diff * diff;
        if (acc >= eps2) break;
      }
      if (acc < eps2) ++count;
    }
    if (count > 0)
      terms.push_back(std::log(static_cast<double>(count)) - lq[s]);
  }
  if (terms.empty())
    throw ConfigError(
        "chain_log_weight: kernel counts are all zero; increase epsilon");

  double log_vol = 0.5 * d * std::log(kPi) + d * std::log(epsilon) -
                   std::lgamma(0.5 * d + 1.0);
  for (int c = 0; c < d; ++c) log_vol += std::log(sd[c]);
  double log_beta_t = std::log(beta) + std::log(static_cast<double>(T));

  // log w = log T - logsumexp_i [ log h_i - lq_i ],  h_i = count_i/(beta T V)
  return std::log(static_cast<double>(T)) + log_beta_t + log_vol -
         logsumexp(terms);
}

inline ChainWeightReport select_chain(const std::vector<ChainDraws>& chains, double beta = 0.6,
                                      std::optional<double> epsilon = std::nullopt) {
  if (chains.empty()) throw ConfigError("select_chain: no chains");
  ChainWeightReport report;
  report.beta = beta;
  report.log_weights.assign(chains.size(), kNegInf);
  report.failed.resize(chains.size());
  bool any_ok = false;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    report.failed[c] = chains[c].failed ? 1 : 0;
    any_ok = any_ok || !chains[c].failed;
  }
  if (!any_ok) throw AllChainsFailed("select_chain: every chain failed");

  if (epsilon.has_value()) {
    report.epsilon = *epsilon;
    if (!(report.epsilon > 0.0)) throw ConfigError("select_chain: epsilon must be > 0");
  } else {
    double eps = 0.0;
    for (const auto& ch : chains)
      if (!ch.failed) eps = std::max(eps, default_epsilon(ch));
    report.epsilon = eps;
  }
  for (std::size_t c = 0; c < chains.size(); ++c) {
    if (chains[c].failed) continue;
    report.log_weights[c] = chain_log_weight(chains[c], beta, report.epsilon);
  }
  int best = -1;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    if (chains[c].failed) continue;
    if (best < 0 || report.log_weights[c] > report.log_weights[best])
      best = static_cast<int>(c);
  }
  report.selected = best;
  return report;
}

}  // namespace jlcm
