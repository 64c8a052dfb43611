#pragma once
// Predictive model comparison and chain diagnostics:
//   - per-draw, per-subject log-likelihood extraction,
//   - WAIC (deviance scale, variance-based effective parameters),
//   - PSIS-LOO with Pareto-smoothed importance ratios (profile-likelihood
//     generalized-Pareto tail fit, regularized shape estimate),
//   - paired difference z-test between two criteria on shared data,
//   - rank-normalized split R-hat and autocorrelation-based effective
//     sample size for scalar chains.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "jlcm/nuts.hpp"
#include "jlcm/posterior.hpp"
#include "jlcm/util.hpp"

namespace jlcm {

struct PointwiseLogLik {
  int n_draws = 0;
  int n_subjects = 0;
  std::vector<double> ll;  // draw-major

  double at(int s, int i) const { return ll[static_cast<std::size_t>(s) * n_subjects + i]; }
};

inline PointwiseLogLik pointwise_loglik(const ChainDraws& chain, Posterior& post) {
  const auto& data = post.data();
  if (chain.dim != post.dim())
    throw ConfigError("pointwise_loglik: draw dimension does not match the model");
  PointwiseLogLik out;
  out.n_draws = chain.n_kept;
  out.n_subjects = data.n;
  out.ll.resize(static_cast<std::size_t>(out.n_draws) * out.n_subjects);
  const int G = data.spec.n_classes;
  std::vector<double> lw(G);
  for (int s = 0; s < out.n_draws; ++s) {
    const double* ct = chain.cdraw(s);
    post.precompute_nodes(ct);
    for (int i = 0; i < out.n_subjects; ++i) {
      post.class_logweights_prepared(ct, i, lw.data());
      double li = logsumexp(lw.data(), G);
      if (!std::isfinite(li))
        throw std::runtime_error("pointwise_loglik: non-finite log likelihood at draw " +
                                 std::to_string(s) + ", subject " + std::to_string(i));
      out.ll[static_cast<std::size_t>(s) * out.n_subjects + i] = li;
    }
  }
  return out;
}

struct CriterionResult {
  std::string criterion;  // "waic" or "loo"
  double estimate = 0.0;  // deviance scale: -2 * sum_i elpd_i
  double se = 0.0;
  double p_eff = 0.0;
  std::vector<double> pointwise;    // deviance-scale contribution per subject
  std::vector<double> pareto_khat;  // loo only
};

inline CriterionResult waic(const PointwiseLogLik& pll) {
  const int S = pll.n_draws, n = pll.n_subjects;
  if (S < 1 || n < 1) throw ConfigError("waic: empty log-likelihood matrix");
  CriterionResult out;
  out.criterion = "waic";
  out.pointwise.resize(n);
  std::vector<double> col(S);
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < S; ++s) col[s] = pll.at(s, i);
    double lppd = logsumexp(col) - std::log(static_cast<double>(S));
    double p = S > 1 ? variance_of(col) : 0.0;
    out.p_eff += p;
    out.pointwise[i] = -2.0 * (lppd - p);
    out.estimate += out.pointwise[i];
  }
  out.se = n > 1 ? std::sqrt(n * variance_of(out.pointwise)) : 0.0;
  return out;
}

namespace detail {

struct GpdFit {
  double khat = kNegInf;  // regularized shape; -inf when the tail is degenerate
  double sigma = 0.0;
};

// Profile-likelihood fit of a generalized Pareto to exceedances y (ascending,
// all > 0), with the shape regularized toward 0.5 by (M k + 5) / (M + 10).
inline GpdFit fit_gpd(const std::vector<double>& y) {
  const int M = static_cast<int>(y.size());
  GpdFit fit;
  if (M < 5 || !(y.back() > 0.0)) return fit;
  double ymax = y.back();
  double xstar = y[static_cast<int>(std::floor(M / 4.0 + 0.5)) - 1];
  if (!(xstar > 0.0)) return fit;
  const int grid = 30 + static_cast<int>(std::floor(std::sqrt(static_cast<double>(M))));
  std::vector<double> theta(grid), prof(grid);
  for (int j = 0; j < grid; ++j) {
    theta[j] = 1.0 / ymax + (1.0 - std::sqrt(grid / (j + 0.5))) / (3.0 * xstar);
    double k = 0.0;
    for (double v : y) k += std::log1p(-theta[j] * v);
    k = -k / M;
    double l = M * (std::log(theta[j] / k) + k - 1.0);
    prof[j] = std::isfinite(l) ? l : kNegInf;
  }
  double lmax = *std::max_element(prof.begin(), prof.end());
  if (!std::isfinite(lmax)) return fit;
  double wsum = 0.0, theta_hat = 0.0;
  for (int j = 0; j < grid; ++j) {
    double w = std::exp(prof[j] - lmax);
    wsum += w;
    theta_hat += w * theta[j];
  }
  theta_hat /= wsum;
  double k = 0.0;
  for (double v : y) k += std::log1p(-theta_hat * v);
  k /= M;
  if (!std::isfinite(k) || k == 0.0 || theta_hat == 0.0) return fit;
  fit.sigma = -k / theta_hat;
  fit.khat = (M * k + 5.0) / (M + 10.0);
  if (!(fit.sigma > 0.0)) return GpdFit{};
  return fit;
}

inline double gpd_quantile(double p, double k, double sigma) {
  if (std::abs(k) < 1e-12) return -sigma * std::log1p(-p);
  return sigma / k * (std::pow(1.0 - p, -k) - 1.0);
}

// Pareto-smooth one vector of log importance ratios in place; returns the
// regularized tail shape (or -inf when no smoothing was possible).
inline double pareto_smooth(std::vector<double>& lr) {
  const int S = static_cast<int>(lr.size());
  int M = std::min<int>(static_cast<int>(std::ceil(0.2 * S)),
                        static_cast<int>(std::ceil(3.0 * std::sqrt(static_cast<double>(S)))));
  if (M < 5 || M >= S) return kNegInf;

  std::vector<int> order(S);
  for (int s = 0; s < S; ++s) order[s] = s;
  std::sort(order.begin(), order.end(), [&](int a, int b) { return lr[a] < lr[b]; });

  double lmax = lr[order[S - 1]];
  double lcut = lr[order[S - M - 1]];  // largest ratio outside the tail
  double u = std::exp(lcut - lmax);
  std::vector<double> y(M);
  bool positive = false;
  for (int z = 0; z < M; ++z) {
    y[z] = std::exp(lr[order[S - M + z]] - lmax) - u;
    if (y[z] < 0.0) y[z] = 0.0;
    positive = positive || y[z] > 0.0;
  }
  if (!positive) return kNegInf;
  GpdFit fit = fit_gpd(y);
  if (!std::isfinite(fit.khat)) return kNegInf;

  for (int z = 0; z < M; ++z) {
    double p = (z + 0.5) / M;
    double q = u + gpd_quantile(p, fit.khat, fit.sigma);
    q = std::min(q, 1.0);  // never above the largest raw ratio
    lr[order[S - M + z]] = std::log(q) + lmax;
  }
  return fit.khat;
}

}  // namespace detail

inline CriterionResult psis_loo(const PointwiseLogLik& pll) {
  const int S = pll.n_draws, n = pll.n_subjects;
  if (S < 2 || n < 1) throw ConfigError("psis_loo: need at least 2 draws");
  CriterionResult out;
  out.criterion = "loo";
  out.pointwise.resize(n);
  out.pareto_khat.resize(n);
  std::vector<double> col(S), lr(S), num(S);
  const double logS = std::log(static_cast<double>(S));
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < S; ++s) {
      col[s] = pll.at(s, i);
      lr[s] = -col[s];
    }
    out.pareto_khat[i] = detail::pareto_smooth(lr);
    for (int s = 0; s < S; ++s) num[s] = lr[s] + col[s];
    double elpd = logsumexp(num) - logsumexp(lr);
    double lppd = logsumexp(col) - logS;
    out.p_eff += lppd - elpd;
    out.pointwise[i] = -2.0 * elpd;
    out.estimate += out.pointwise[i];
  }
  out.se = n > 1 ? std::sqrt(n * variance_of(out.pointwise)) : 0.0;
  return out;
}

struct ComparisonResult {
  double delta = 0.0;  // a.estimate - b.estimate (deviance scale)
  double se = 0.0;
  double z = 0.0;
  double p_value = 0.5;  // one-sided tail probability of |z|
  int favored = -1;      // 0 = first model, 1 = second, -1 = tie
  bool significant_5 = false;
  bool significant_1 = false;
  bool significant_01 = false;
};

inline ComparisonResult compare(const CriterionResult& a, const CriterionResult& b) {
  const int n = static_cast<int>(a.pointwise.size());
  if (n == 0 || b.pointwise.size() != a.pointwise.size())
    throw ConfigError("compare: criteria must share the same subjects");
  std::vector<double> d(n);
  ComparisonResult out;
  for (int i = 0; i < n; ++i) {
    d[i] = a.pointwise[i] - b.pointwise[i];
    out.delta += d[i];
  }
  out.se = n > 1 ? std::sqrt(n * variance_of(d)) : 0.0;
  if (out.se > 0.0) {
    out.z = out.delta / out.se;
  } else {
    out.z = out.delta == 0.0 ? 0.0
                             : (out.delta > 0.0 ? std::numeric_limits<double>::infinity()
                                                : -std::numeric_limits<double>::infinity());
  }
  out.p_value = 1.0 - std_normal_cdf(std::abs(out.z));
  if (out.delta > 0.0)
    out.favored = 1;  // smaller deviance is better
  else if (out.delta < 0.0)
    out.favored = 0;
  double az = std::abs(out.z);
  out.significant_5 = az > 1.65;
  out.significant_1 = az > 2.33;
  out.significant_01 = az > 3.09;
  return out;
}

namespace detail {

// Average ranks (1-based) with ties sharing their mean rank.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) { return x[a] < x[b]; });
  std::vector<double> rank(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    double r = 0.5 * (i + j) + 1.0;
    for (int k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

// Classic split potential-scale-reduction on already-split chains.
inline double rhat_core(const std::vector<std::vector<double>>& chains) {
  const int m = static_cast<int>(chains.size());
  const int n = static_cast<int>(chains[0].size());
  std::vector<double> mu(m), v(m);
  for (int j = 0; j < m; ++j) {
    mu[j] = mean_of(chains[j]);
    v[j] = variance_of(chains[j]);
  }
  double W = mean_of(v);
  double B = n * variance_of(mu);
  if (!(W > 0.0)) return B > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  double var_hat = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_hat / W);
}

inline std::vector<std::vector<double>> split_halves(const std::vector<std::vector<double>>& chains) {
  std::size_t len = chains[0].size();
  for (const auto& c : chains) len = std::min(len, c.size());
  const int half = static_cast<int>(len / 2);
  if (half < 2) throw ConfigError("chain diagnostics need at least 4 draws per chain");
  std::vector<std::vector<double>> out;
  out.reserve(2 * chains.size());
  for (const auto& c : chains) {
    out.emplace_back(c.begin(), c.begin() + half);
    out.emplace_back(c.begin() + static_cast<std::ptrdiff_t>(len) - half,
                     c.begin() + static_cast<std::ptrdiff_t>(len));
  }
  return out;
}

}  // namespace detail

namespace detail {

// Pooled average ranks mapped through the normal quantile function.
inline std::vector<std::vector<double>> rank_normalize(
    const std::vector<std::vector<double>>& chains) {
  const int m = static_cast<int>(chains.size());
  const int n = static_cast<int>(chains[0].size());
  std::vector<double> pooled;
  pooled.reserve(static_cast<std::size_t>(m) * n);
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  std::vector<double> rank = average_ranks(pooled);
  const double denom = pooled.size() + 0.25;
  std::vector<std::vector<double>> z(m, std::vector<double>(n));
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < n; ++i)
      z[j][i] = std_normal_quantile((rank[static_cast<std::size_t>(j) * n + i] - 0.375) / denom);
  return z;
}

inline bool all_equal(const std::vector<std::vector<double>>& chains) {
  double v = chains[0][0];
  for (const auto& c : chains)
    for (double x : c)
      if (x != v) return false;
  return true;
}

}  // namespace detail

// Maximum of the rank-normalized and raw split potential scale reduction
// factors: rank normalization is robust to heavy tails but saturates for
// well-separated chains, so the raw statistic is kept as a lower bound.
// Returns NaN when every draw is identical (the statistic is undefined).
inline double split_rhat(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw ConfigError("split_rhat: no chains");
  auto halves = detail::split_halves(chains);
  if (detail::all_equal(halves)) return std::numeric_limits<double>::quiet_NaN();
  double plain = detail::rhat_core(halves);
  double ranked = detail::rhat_core(detail::rank_normalize(halves));
  return std::max(plain, ranked);
}

namespace detail {

// Combined-chain effective sample size with Geyer's initial monotone
// positive-pair truncation of the autocorrelation sum.
inline double ess_core(const std::vector<std::vector<double>>& chains) {
  const int m = static_cast<int>(chains.size());
  std::size_t len = chains[0].size();
  for (const auto& c : chains) len = std::min(len, c.size());
  const int n = static_cast<int>(len);

  std::vector<double> mu(m), v(m);
  for (int j = 0; j < m; ++j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += chains[j][i];
    mu[j] = s / n;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += (chains[j][i] - mu[j]) * (chains[j][i] - mu[j]);
    v[j] = acc / (n - 1);
  }
  double mean_var = mean_of(v);
  double var_plus = mean_var * (n - 1.0) / n;
  if (m > 1) var_plus += variance_of(mu);
  if (!(var_plus > 0.0)) return static_cast<double>(m) * n;

  auto mean_acov = [&](int t) {
    double acc = 0.0;
    for (int j = 0; j < m; ++j) {
      double a = 0.0;
      for (int i = 0; i + t < n; ++i)
        a += (chains[j][i] - mu[j]) * (chains[j][i + t] - mu[j]);
      acc += a / n;
    }
    return acc / m;
  };

  auto rho = [&](int t) { return 1.0 - (mean_var - mean_acov(t)) / var_plus; };

  double tau = 0.0, prev_pair = std::numeric_limits<double>::infinity();
  int t = 0;
  while (t + 1 < n) {
    double pair = (t == 0 ? 1.0 : rho(t)) + rho(t + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
    t += 2;
  }
  tau -= 1.0;
  const double total = static_cast<double>(m) * n;
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

}  // namespace detail

// Effective sample size on split, rank-normalized chains.
inline double ess(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw ConfigError("ess: no chains");
  auto halves = detail::split_halves(chains);
  if (halves[0].size() < 2) throw ConfigError("ess: need at least 4 draws per chain");
  if (detail::all_equal(halves))
    return static_cast<double>(halves.size()) * halves[0].size();
  return detail::ess_core(detail::rank_normalize(halves));
}

}  // namespace jlcm
