#pragma once
// No-U-Turn sampler with multinomial trajectory sampling, dual-averaging step
// size adaptation and windowed diagonal metric estimation.
//
// The Target type supplies:
//   int dim() const
//   bool value_grad(const double* theta, double& lp, double* grad)   // false => reject
//   bool constrain(const double* theta, double* out) const
//   double log_jacobian(const double* theta) const
// Targets without constrained parameters implement constrain as a copy and a
// zero Jacobian.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "jlcm/rng.hpp"
#include "jlcm/util.hpp"

namespace jlcm {

struct NutsConfig {
  int chains = 4;
  int iterations = 2000;
  int warmup = 1000;
  int thin = 1;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  double divergence_threshold = 1000.0;
  std::uint64_t seed = 1;
  double init_jitter = 0.5;  // sd of the unconstrained initialization draw
  bool adapt_mass = true;

  void validate() const {
    if (chains < 1) throw ConfigError("chains must be >= 1");
    if (warmup >= iterations) throw ConfigError("warmup must be < iterations");
    if (warmup < 150) throw ConfigError("warmup must be >= 150 for adaptation");
    if (thin < 1) throw ConfigError("thin must be >= 1");
    if (!(target_accept > 0.0 && target_accept < 1.0))
      throw ConfigError("target_accept must lie in (0, 1)");
    if (max_tree_depth < 1 || max_tree_depth > 14)
      throw ConfigError("max_tree_depth must lie in [1, 14]");
    if (!(divergence_threshold > 0.0)) throw ConfigError("divergence_threshold must be > 0");
  }
};

struct ChainDraws {
  int chain_id = 0;
  int dim = 0;
  int n_kept = 0;
  std::vector<double> draws;        // unconstrained, n_kept x dim row-major
  std::vector<double> constrained;  // constrained view, same shape
  std::vector<double> lp;           // target value at each kept draw
  std::vector<double> log_jacobian;
  std::vector<std::uint8_t> divergent;
  std::vector<int> tree_depth;
  double step_size = 0.0;
  std::vector<double> mass_diag;    // adapted inverse-metric diagonal (variance estimates)
  long postwarmup_iterations = 0;
  long postwarmup_divergences = 0;
  double mean_accept = 0.0;
  bool failed = false;
  std::string failure_reason;

  const double* draw(int s) const { return draws.data() + static_cast<std::size_t>(s) * dim; }
  const double* cdraw(int s) const {
    return constrained.data() + static_cast<std::size_t>(s) * dim;
  }
  double divergence_rate() const {
    return postwarmup_iterations > 0
               ? static_cast<double>(postwarmup_divergences) / postwarmup_iterations
               : 0.0;
  }
};

struct NutsStats {
  int depth = 0;
  int n_leapfrog = 0;
  bool divergent = false;
  double accept_stat = 0.0;
  double energy = 0.0;        // Hamiltonian at the iteration start
  double energy_error = 0.0;  // max |H_leaf - H_0| over the trajectory
};

namespace detail {

struct PhasePoint {
  std::vector<double> q, p, grad;
  double lp = kNegInf;
};

template <class Target>
struct NutsWorker {
  Target& target;
  Rng& rng;
  const std::vector<double>& inv_mass;
  double step;
  double div_threshold;
  int max_depth;

  double h0 = 0.0;
  double sum_accept = 0.0;
  int n_leapfrog = 0;
  bool divergent = false;
  double max_abs_de = 0.0;

  double kinetic(const std::vector<double>& p) const {
    double k = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) k += inv_mass[i] * p[i] * p[i];
    return 0.5 * k;
  }
  double hamiltonian(const PhasePoint& z) const { return -z.lp + kinetic(z.p); }

  // One leapfrog step of signed size; false when the density fails.
  bool leapfrog(PhasePoint& z, double eps) {
    const std::size_t d = z.q.size();
    for (std::size_t i = 0; i < d; ++i) z.p[i] += 0.5 * eps * z.grad[i];
    for (std::size_t i = 0; i < d; ++i) z.q[i] += eps * inv_mass[i] * z.p[i];
    if (!target.value_grad(z.q.data(), z.lp, z.grad.data())) return false;
    for (std::size_t i = 0; i < d; ++i) z.p[i] += 0.5 * eps * z.grad[i];
    return true;
  }

  bool uturn(const std::vector<double>& p_minus, const std::vector<double>& p_plus,
             const std::vector<double>& rho) const {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
      a += inv_mass[i] * p_minus[i] * rho[i];
      b += inv_mass[i] * p_plus[i] * rho[i];
    }
    return a <= 0.0 || b <= 0.0;
  }

  struct Subtree {
    bool ok = false;
    PhasePoint minus, plus;
    std::vector<double> rho;
    PhasePoint prop;  // proposal (momentum unused)
    double log_sum_w = kNegInf;
  };

  Subtree build(int depth, const PhasePoint& from, int dir) {
    if (depth == 0) {
      Subtree leaf;
      leaf.minus = from;
      bool ok = leapfrog(leaf.minus, dir * step);
      ++n_leapfrog;
      double de = ok ? hamiltonian(leaf.minus) - h0 : kPosInf;
      if (!std::isfinite(de)) de = kPosInf;
      max_abs_de = std::max(max_abs_de, std::isfinite(de) ? std::fabs(de) : kPosInf);
      sum_accept += de > 0.0 ? std::exp(-de) : 1.0;
      if (de > div_threshold) {
        divergent = true;
        return leaf;  // ok stays false
      }
      leaf.ok = true;
      leaf.plus = leaf.minus;
      leaf.rho = leaf.minus.p;
      leaf.prop = leaf.minus;
      leaf.log_sum_w = -de;
      return leaf;
    }
    Subtree first = build(depth - 1, from, dir);
    if (!first.ok) return first;
    const PhasePoint& edge = dir > 0 ? first.plus : first.minus;
    Subtree second = build(depth - 1, edge, dir);
    if (!second.ok) {
      first.ok = false;
      return first;
    }
    Subtree out;
    out.log_sum_w = logsumexp2(first.log_sum_w, second.log_sum_w);
    out.prop = (std::log(rng.u01()) < second.log_sum_w - out.log_sum_w) ? second.prop
                                                                        : first.prop;
    out.rho = first.rho;
    for (std::size_t i = 0; i < out.rho.size(); ++i) out.rho[i] += second.rho[i];
    if (dir > 0) {
      out.minus = first.minus;
      out.plus = second.plus;
    } else {
      out.minus = second.minus;
      out.plus = first.plus;
    }
    out.ok = !uturn(out.minus.p, out.plus.p, out.rho);
    return out;
  }

  // One transition; z must carry a valid (lp, grad) and is updated in place.
  NutsStats transition(PhasePoint& z) {
    const std::size_t d = z.q.size();
    for (std::size_t i = 0; i < d; ++i) z.p[i] = rng.normal() / std::sqrt(inv_mass[i]);
    h0 = hamiltonian(z);
    sum_accept = 0.0;
    n_leapfrog = 0;
    divergent = false;
    max_abs_de = 0.0;

    PhasePoint traj_minus = z, traj_plus = z;
    PhasePoint prop = z;
    std::vector<double> rho = z.p;
    double log_sum_w = 0.0;

    NutsStats stats;
    stats.energy = h0;
    for (int depth = 0; depth < max_depth; ++depth) {
      int dir = rng.bernoulli(0.5) ? 1 : -1;
      Subtree sub = build(depth, dir > 0 ? traj_plus : traj_minus, dir);
      if (!sub.ok) break;
      // biased progressive sampling toward the new half
      if (std::log(rng.u01()) < sub.log_sum_w - log_sum_w) prop = sub.prop;
      log_sum_w = logsumexp2(log_sum_w, sub.log_sum_w);
      for (std::size_t i = 0; i < d; ++i) rho[i] += sub.rho[i];
      if (dir > 0)
        traj_plus = sub.plus;
      else
        traj_minus = sub.minus;
      stats.depth = depth + 1;
      if (uturn(traj_minus.p, traj_plus.p, rho)) break;
    }
    z.q = prop.q;
    z.lp = prop.lp;
    z.grad = prop.grad;
    stats.n_leapfrog = n_leapfrog;
    stats.divergent = divergent;
    stats.accept_stat = n_leapfrog > 0 ? sum_accept / n_leapfrog : 0.0;
    stats.energy_error = max_abs_de;
    return stats;
  }
};

struct DualAveraging {
  double target = 0.8;
  double mu = 0.0, log_eps = 0.0, log_eps_bar = 0.0, hbar = 0.0;
  int m = 0;
  static constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;

  void restart(double eps0) {
    mu = std::log(10.0 * eps0);
    log_eps = std::log(eps0);
    log_eps_bar = 0.0;
    hbar = 0.0;
    m = 0;
  }
  void update(double accept) {
    ++m;
    double eta = 1.0 / (m + kT0);
    hbar = (1.0 - eta) * hbar + eta * (target - accept);
    log_eps = mu - hbar * std::sqrt(static_cast<double>(m)) / kGamma;
    double w = std::pow(static_cast<double>(m), -kKappa);
    log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
  }
  double current() const { return std::exp(log_eps); }
  double adapted() const { return std::exp(log_eps_bar); }
};

}  // namespace detail

// Single NUTS transition with fixed tuning (exposed for direct testing).
template <class Target>
NutsStats nuts_draw(Target& target, std::vector<double>& theta, double step_size,
                    const std::vector<double>& inv_mass_diag, Rng& rng, int max_tree_depth = 10,
                    double divergence_threshold = 1000.0) {
  detail::PhasePoint z;
  z.q = theta;
  z.p.assign(theta.size(), 0.0);
  z.grad.assign(theta.size(), 0.0);
  if (!target.value_grad(z.q.data(), z.lp, z.grad.data()))
    throw std::runtime_error("nuts_draw: non-finite density at the current point");
  detail::NutsWorker<Target> worker{target, rng, inv_mass_diag, step_size,
                                    divergence_threshold, max_tree_depth};
  NutsStats stats = worker.transition(z);
  theta = z.q;
  return stats;
}

// Find an initial step size producing roughly 50% leapfrog acceptance.
template <class Target>
double find_reasonable_step_size(Target& target, const detail::PhasePoint& z0,
                                 const std::vector<double>& inv_mass, Rng& rng) {
  detail::NutsWorker<Target> worker{target, rng, inv_mass, 1.0, 1000.0, 1};
  detail::PhasePoint z = z0;
  for (std::size_t i = 0; i < z.q.size(); ++i) z.p[i] = rng.normal() / std::sqrt(inv_mass[i]);
  double h0 = worker.hamiltonian(z);
  double eps = 1.0;
  auto accept_at = [&](double e) {
    detail::PhasePoint trial = z;
    if (!worker.leapfrog(trial, e)) return 0.0;
    double de = worker.hamiltonian(trial) - h0;
    return std::isfinite(de) ? std::exp(-de) : 0.0;
  };
  double a = accept_at(eps);
  int dir = a > 0.5 ? 1 : -1;
  for (int it = 0; it < 100; ++it) {
    if (dir > 0 && !(a > 0.5)) break;
    if (dir < 0 && !(a < 0.5)) break;
    eps = dir > 0 ? 2.0 * eps : 0.5 * eps;
    if (eps > 1e7 || eps < 1e-10) break;
    a = accept_at(eps);
  }
  return eps;
}

// Full chain: warmup with adaptation, then thinned collection.
// init_theta must be a finite-density point (callers handle retries).
template <class Target>
ChainDraws run_nuts(Target target, const NutsConfig& cfg, int chain_id,
                    std::vector<double> init_theta) {
  cfg.validate();
  const int d = target.dim();
  ChainDraws out;
  out.chain_id = chain_id;
  out.dim = d;

  Rng rng(mix_seed({cfg.seed, stream::kChain, static_cast<std::uint64_t>(chain_id)}));

  detail::PhasePoint z;
  z.q = std::move(init_theta);
  z.p.assign(d, 0.0);
  z.grad.assign(d, 0.0);
  if (!target.value_grad(z.q.data(), z.lp, z.grad.data())) {
    out.failed = true;
    out.failure_reason = "non-finite log density at the initial point";
    return out;
  }

  std::vector<double> inv_mass(d, 1.0);
  double step = find_reasonable_step_size(target, z, inv_mass, rng);
  detail::DualAveraging da;
  da.target = cfg.target_accept;
  da.restart(step);

  // Stan-style expanding adaptation windows
  const int init_buffer = 75, term_buffer = 50;
  int window = 25;
  int window_start = init_buffer;
  int window_end = std::min(window_start + window, cfg.warmup - term_buffer);
  Welford wf(static_cast<std::size_t>(d));

  int keep_every = cfg.thin;
  int n_keep = (cfg.iterations - cfg.warmup) / keep_every;
  out.n_kept = n_keep;
  out.draws.resize(static_cast<std::size_t>(n_keep) * d);
  out.constrained.resize(static_cast<std::size_t>(n_keep) * d);
  out.lp.resize(n_keep);
  out.log_jacobian.resize(n_keep);
  out.divergent.resize(n_keep);
  out.tree_depth.resize(n_keep);

  double accept_total = 0.0;
  long accept_count = 0;
  int kept = 0;

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    detail::NutsWorker<Target> worker{target,
                                      rng,
                                      inv_mass,
                                      step,
                                      cfg.divergence_threshold,
                                      cfg.max_tree_depth};
    NutsStats stats = worker.transition(z);

    if (iter <= cfg.warmup) {
      da.update(stats.accept_stat);
      step = da.current();
      if (!(step > 1e-12))
        throw std::runtime_error(
            "step size collapsed below 1e-12 during adaptation; "
            "the posterior is badly scaled - consider reparameterizing");
      bool in_mass_phase = cfg.adapt_mass && iter > window_start && cfg.warmup >= 150;
      if (in_mass_phase && iter <= window_end) {
        wf.add(z.q.data());
        if (iter == window_end) {
          std::vector<double> v;
          wf.variances(v);
          double nn = static_cast<double>(wf.n);
          for (int c = 0; c < d; ++c) {
            double reg = (nn / (nn + 5.0)) * v[c] + 1e-3 * (5.0 / (nn + 5.0));
            inv_mass[c] = std::max(reg, 1e-12);
          }
          wf.reset(static_cast<std::size_t>(d));
          window *= 2;
          window_start = window_end;
          window_end = window_start + window;
          if (window_end + 2 * window > cfg.warmup - term_buffer)
            window_end = cfg.warmup - term_buffer;
          window_end = std::min(window_end, cfg.warmup - term_buffer);
          step = find_reasonable_step_size(target, z, inv_mass, rng);
          da.restart(step);
        }
      }
      if (iter == cfg.warmup) step = da.adapted();
    } else {
      ++out.postwarmup_iterations;
      if (stats.divergent) ++out.postwarmup_divergences;
      accept_total += stats.accept_stat;
      ++accept_count;
      if ((iter - cfg.warmup) % keep_every == 0 && kept < n_keep) {
        double* row = out.draws.data() + static_cast<std::size_t>(kept) * d;
        std::memcpy(row, z.q.data(), sizeof(double) * d);
        target.constrain(z.q.data(), out.constrained.data() + static_cast<std::size_t>(kept) * d);
        out.lp[kept] = z.lp;
        out.log_jacobian[kept] = target.log_jacobian(z.q.data());
        out.divergent[kept] = stats.divergent ? 1 : 0;
        out.tree_depth[kept] = stats.depth;
        ++kept;
      }
    }
  }
  out.n_kept = kept;
  out.step_size = step;
  out.mass_diag = inv_mass;
  out.mean_accept = accept_count > 0 ? accept_total / accept_count : 0.0;
  if (out.postwarmup_iterations > 0 &&
      out.divergence_rate() > 0.5) {
    out.failed = true;
    out.failure_reason = "more than half of post-warmup iterations diverged";
  }
  return out;
}

}  // namespace jlcm
