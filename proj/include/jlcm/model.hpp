#pragma once
// Reference implementations of the joint latent-class model pieces:
// membership probabilities, trajectory likelihood, hazard / cumulative hazard,
// per-subject marginal likelihood, priors, and the unconstrained posterior.
//
// These are the clean typed versions used by tests, the simulator and small
// code paths; the sampler drives the fused evaluator in posterior.hpp, and the
// two are cross-checked against each other in the test suite.

#include <cmath>
#include <cstddef>
#include <vector>

#include "jlcm/quadrature.hpp"
#include "jlcm/types.hpp"
#include "jlcm/util.hpp"

namespace jlcm {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kLn2 = 0.6931471805599453094;

// Design rows ---------------------------------------------------------------

inline double basis_value(const BasisTerm& term, double t, const SubjectData& subj) {
  switch (term.kind) {
    case BasisKind::Intercept: return 1.0;
    case BasisKind::TimePower: return term.power == 1 ? t : t * t;
    case BasisKind::Covariate: return subj.covariate(term.cov);
    case BasisKind::TimeCovariate: {
      double tp = term.power == 1 ? t : t * t;
      return tp * subj.covariate(term.cov);
    }
  }
  return 0.0;
}

inline std::vector<double> build_design_row(const std::vector<BasisTerm>& terms, double t,
                                            const SubjectData& subj) {
  std::vector<double> row(terms.size());
  for (std::size_t m = 0; m < terms.size(); ++m) row[m] = basis_value(terms[m], t, subj);
  return row;
}

// Expected trajectory value for one class at time t.
inline double current_value(const ModelSpec& spec, const ClassParameters& cp, const double* b,
                            double t, const SubjectData& subj) {
  double mu = 0.0;
  for (std::size_t m = 0; m < spec.fixed_basis.size(); ++m)
    mu += cp.beta[m] * basis_value(spec.fixed_basis[m], t, subj);
  for (std::size_t l = 0; l < spec.random_basis.size(); ++l)
    mu += b[l] * basis_value(spec.random_basis[l], t, subj);
  return mu;
}

// Membership ------------------------------------------------------------------

// Log softmax probabilities; class G is the reference with linear predictor 0.
inline std::vector<double> log_membership_probs(const Parameters& params, const ModelSpec& spec,
                                                const SubjectData& subj) {
  int G = spec.n_classes;
  std::vector<double> eta(static_cast<std::size_t>(G), 0.0);
  for (int k = 0; k + 1 < G; ++k) {
    double e = params.psi0[k];
    for (std::size_t j = 0; j < spec.membership_covariates.size(); ++j)
      e += params.psi[k][j] * subj.covariate(spec.membership_covariates[j]);
    eta[k] = e;
  }
  double norm = logsumexp(eta);
  for (auto& e : eta) e -= norm;
  return eta;
}

// Longitudinal submodel ---------------------------------------------------------

inline double longitudinal_loglik(const ModelSpec& spec, const ClassParameters& cp,
                                  const double* b, const SubjectData& subj) {
  if (!(cp.sigma2 > 0.0)) throw std::domain_error("longitudinal_loglik: sigma2 must be > 0");
  double ll = 0.0;
  for (const auto& rec : subj.records) {
    double resid = rec.value - current_value(spec, cp, b, rec.time, subj);
    ll += -0.5 * (kLog2Pi + std::log(cp.sigma2)) - resid * resid / (2.0 * cp.sigma2);
  }
  return ll;
}

// Survival submodel ---------------------------------------------------------------

inline double survival_linear_predictor(const ModelSpec& spec, const ClassParameters& cp,
                                        const SubjectData& subj) {
  double eta = cp.weibull_log_scale;
  for (std::size_t q = 0; q < spec.survival_covariates.size(); ++q)
    eta += cp.gamma[q] * subj.covariate(spec.survival_covariates[q]);
  return eta;
}

// log h(t) = log(shape) + (shape-1) log t + eta + alpha * mu(t), t > 0.
inline double log_hazard(const ModelSpec& spec, const ClassParameters& cp, const double* b,
                         double t, const SubjectData& subj) {
  if (!(t > 0.0)) throw std::domain_error("log_hazard: t must be > 0");
  if (!(cp.weibull_shape > 0.0)) throw std::domain_error("log_hazard: shape must be > 0");
  return std::log(cp.weibull_shape) + (cp.weibull_shape - 1.0) * std::log(t) +
         survival_linear_predictor(spec, cp, subj) +
         cp.alpha * current_value(spec, cp, b, t, subj);
}

// H(T) = integral of the hazard on (0, T], split at T/2 with `order` nodes
// per piece.
//   (0, T/2]: power substitution u = (2s/T)^shape removes the s^(shape-1)
//     factor, so this piece is exact for alpha = 0 at any order and the
//     integrable kink at s = 0 never meets a node.
//   [T/2, T]: plain Gauss-Legendre on fixed nodes. The integrand is smooth
//     away from zero, and because these nodes do not move with the shape, a
//     near-zero shape cannot squash every node toward s = 0 and hide the
//     hazard mass near T from the rule (which would otherwise open an
//     unbounded spurious mode where an event's log-hazard grows while the
//     quadrature reports a vanishing integral).
inline double cumulative_hazard(const ModelSpec& spec, const ClassParameters& cp, const double* b,
                                double upto, const SubjectData& subj, int order = 0) {
  if (!(upto >= 0.0)) throw std::domain_error("cumulative_hazard: negative endpoint");
  if (upto == 0.0) return 0.0;
  if (!(cp.weibull_shape > 0.0)) throw std::domain_error("cumulative_hazard: shape must be > 0");
  const GaussLegendre& gl = gauss_legendre(order > 0 ? order : spec.quad_order);
  const double shape = cp.weibull_shape;
  const double inv_shape = 1.0 / shape;
  const double half = 0.5 * upto, log_half = std::log(half);
  double acc_a = 0.0, acc_b = 0.0;
  for (int k = 0; k < gl.order; ++k) {
    double sa = half * std::exp(gl.log_node[k] * inv_shape);
    acc_a += gl.weight[k] * std::exp(cp.alpha * current_value(spec, cp, b, sa, subj));
    double sb = half * (1.0 + gl.node[k]);
    acc_b += gl.weight[k] * shape *
             std::exp((shape - 1.0) * std::log(sb) +
                      cp.alpha * current_value(spec, cp, b, sb, subj));
  }
  double eta = survival_linear_predictor(spec, cp, subj);
  return std::exp(eta + shape * log_half + std::log(acc_a)) +
         std::exp(eta + log_half + std::log(acc_b));
}

// event * log h(T) - H(T)
inline double survival_loglik(const ModelSpec& spec, const ClassParameters& cp, const double* b,
                              const SubjectData& subj) {
  double ll = -cumulative_hazard(spec, cp, b, subj.event_time, subj);
  if (subj.event) ll += log_hazard(spec, cp, b, subj.event_time, subj);
  return ll;
}

// Class-marginalized subject likelihood ------------------------------------------
//
// log sum_g pi_g(W_i) * exp(LL_ig + SL_ig); random-effect priors are not
// included here (they enter the posterior separately).
inline double subject_marginal_loglik(const ModelSpec& spec, const Parameters& params,
                                      const LatentEffects& effects, int i,
                                      const SubjectData& subj) {
  std::vector<double> lw = log_membership_probs(params, spec, subj);
  for (int g = 0; g < spec.n_classes; ++g) {
    const ClassParameters& cp = params.classes[g];
    const double* b = effects.row(i, g);
    double term = lw[g];
    if (std::isfinite(term)) {
      term += longitudinal_loglik(spec, cp, b, subj);
      if (std::isfinite(term)) term += survival_loglik(spec, cp, b, subj);
    }
    lw[g] = term;
  }
  return logsumexp(lw);
}

// Priors -----------------------------------------------------------------------

inline double prior_logpdf(const Prior& prior, double x) {
  switch (prior.family) {
    case PriorFamily::Normal: {
      double z = (x - prior.p1) / prior.p2;
      return -0.5 * kLog2Pi - std::log(prior.p2) - 0.5 * z * z;
    }
    case PriorFamily::Gamma: {
      if (!(x > 0.0)) return kNegInf;
      return prior.p1 * std::log(prior.p2) - std::lgamma(prior.p1) +
             (prior.p1 - 1.0) * std::log(x) - prior.p2 * x;
    }
    case PriorFamily::HalfNormal: {
      if (x < 0.0) return kNegInf;
      return std::log(2.0) - 0.5 * kLog2Pi - std::log(prior.p1) -
             x * x / (2.0 * prior.p1 * prior.p1);
    }
    case PriorFamily::InverseGamma: {
      if (!(x > 0.0)) return kNegInf;
      return prior.p1 * std::log(prior.p2) - std::lgamma(prior.p1) -
             (prior.p1 + 1.0) * std::log(x) - prior.p2 / x;
    }
  }
  return kNegInf;
}

// d/dx log prior density (finite x inside the support).
inline double prior_score(const Prior& prior, double x) {
  switch (prior.family) {
    case PriorFamily::Normal: return -(x - prior.p1) / (prior.p2 * prior.p2);
    case PriorFamily::Gamma: return (prior.p1 - 1.0) / x - prior.p2;
    case PriorFamily::HalfNormal: return -x / (prior.p1 * prior.p1);
    case PriorFamily::InverseGamma: return -(prior.p1 + 1.0) / x + prior.p2 / x / x;
  }
  return 0.0;
}

// Joint log prior over all named model parameters (latent effects excluded).
inline double log_prior(const Parameters& params, const PriorSpec& priors, const ModelSpec& spec) {
  double lp = 0.0;
  for (int g = 0; g < spec.n_classes; ++g) {
    const ClassParameters& cp = params.classes[g];
    for (double v : cp.beta) lp += prior_logpdf(priors.beta, v);
    lp += prior_logpdf(priors.sigma2, cp.sigma2);
    lp += prior_logpdf(priors.weibull_shape, cp.weibull_shape);
    lp += prior_logpdf(priors.weibull_log_scale, cp.weibull_log_scale);
    for (double v : cp.gamma) lp += prior_logpdf(priors.gamma, v);
    lp += prior_logpdf(priors.alpha, cp.alpha);
    for (double v : cp.re_variances) lp += prior_logpdf(priors.re_variance, v);
  }
  for (int k = 0; k + 1 < spec.n_classes; ++k) {
    lp += prior_logpdf(priors.psi, params.psi0[k]);
    for (double v : params.psi[k]) lp += prior_logpdf(priors.psi, v);
  }
  return lp;
}

// Transforms ------------------------------------------------------------------
//
// Positive parameters live on the log scale in the sampler; everything else is
// identity. log |J| of the inverse map is the sum of the log-scale coordinates.

inline std::vector<double> transform(const Parameters& params, const LatentEffects& effects,
                                     const ModelSpec& spec) {
  ParamLayout lay = ParamLayout::make(spec, effects.n);
  std::vector<double> theta(static_cast<std::size_t>(lay.dim), 0.0);
  for (int g = 0; g < lay.G; ++g) {
    const ClassParameters& cp = params.classes[g];
    for (int j = 0; j < lay.F; ++j) theta[lay.beta(g, j)] = cp.beta[j];
    theta[lay.sigma2(g)] = std::log(cp.sigma2);
    theta[lay.shape(g)] = std::log(cp.weibull_shape);
    theta[lay.lscale(g)] = cp.weibull_log_scale;
    for (int q = 0; q < lay.Q; ++q) theta[lay.gamma(g, q)] = cp.gamma[q];
    theta[lay.alpha(g)] = cp.alpha;
    for (int l = 0; l < lay.R; ++l) theta[lay.revar(g, l)] = std::log(cp.re_variances[l]);
  }
  for (int k = 0; k < lay.G - 1; ++k) {
    theta[lay.psi0(k)] = params.psi0[k];
    for (int j = 0; j < lay.P; ++j) theta[lay.psi(k, j)] = params.psi[k][j];
  }
  for (int i = 0; i < lay.n; ++i)
    for (int g = 0; g < lay.G; ++g)
      for (int l = 0; l < lay.R; ++l) theta[lay.latent(i, g, l)] = effects.at(i, g, l);
  return theta;
}

struct Untransformed {
  Parameters params;
  LatentEffects effects;
  double log_jacobian = 0.0;
};

inline Untransformed untransform(const std::vector<double>& theta, const ModelSpec& spec,
                                 int n_subjects) {
  ParamLayout lay = ParamLayout::make(spec, n_subjects);
  if (static_cast<int>(theta.size()) != lay.dim)
    throw ConfigError("untransform: theta has dimension " + std::to_string(theta.size()) +
                      ", expected " + std::to_string(lay.dim));
  Untransformed u;
  u.params.classes.resize(lay.G);
  for (int g = 0; g < lay.G; ++g) {
    ClassParameters& cp = u.params.classes[g];
    cp.beta.resize(lay.F);
    for (int j = 0; j < lay.F; ++j) cp.beta[j] = theta[lay.beta(g, j)];
    cp.sigma2 = std::exp(theta[lay.sigma2(g)]);
    cp.weibull_shape = std::exp(theta[lay.shape(g)]);
    cp.weibull_log_scale = theta[lay.lscale(g)];
    cp.gamma.resize(lay.Q);
    for (int q = 0; q < lay.Q; ++q) cp.gamma[q] = theta[lay.gamma(g, q)];
    cp.alpha = theta[lay.alpha(g)];
    cp.re_variances.resize(lay.R);
    for (int l = 0; l < lay.R; ++l) cp.re_variances[l] = std::exp(theta[lay.revar(g, l)]);
    u.log_jacobian += theta[lay.sigma2(g)] + theta[lay.shape(g)];
    for (int l = 0; l < lay.R; ++l) u.log_jacobian += theta[lay.revar(g, l)];
  }
  u.params.psi0.resize(std::max(0, lay.G - 1));
  u.params.psi.assign(std::max(0, lay.G - 1), std::vector<double>(lay.P, 0.0));
  for (int k = 0; k < lay.G - 1; ++k) {
    u.params.psi0[k] = theta[lay.psi0(k)];
    for (int j = 0; j < lay.P; ++j) u.params.psi[k][j] = theta[lay.psi(k, j)];
  }
  u.effects = LatentEffects(n_subjects, lay.G, lay.R);
  for (int i = 0; i < n_subjects; ++i)
    for (int g = 0; g < lay.G; ++g)
      for (int l = 0; l < lay.R; ++l) u.effects.at(i, g, l) = theta[lay.latent(i, g, l)];
  return u;
}

// Full unconstrained log posterior (reference path):
// class-marginalized data likelihood + random-effect priors + parameter priors
// + log |Jacobian| of the constraining map.
inline double log_posterior_unconstrained(const std::vector<double>& theta, const Dataset& data,
                                          const ModelSpec& spec, const PriorSpec& priors) {
  int n = static_cast<int>(data.subjects.size());
  Untransformed u = untransform(theta, spec, n);
  for (const auto& cp : u.params.classes) {
    // exp() under/overflow of a log-scale coordinate: out of support
    if (!(cp.sigma2 > 0.0) || !std::isfinite(cp.sigma2)) return kNegInf;
    if (!(cp.weibull_shape > 0.0) || !std::isfinite(cp.weibull_shape)) return kNegInf;
    for (double v : cp.re_variances)
      if (!(v > 0.0) || !std::isfinite(v)) return kNegInf;
  }
  double lp = log_prior(u.params, priors, spec) + u.log_jacobian;
  if (!std::isfinite(lp)) return kNegInf;
  for (int g = 0; g < spec.n_classes; ++g) {
    const auto& v = u.params.classes[g].re_variances;
    for (int i = 0; i < n; ++i)
      for (std::size_t l = 0; l < v.size(); ++l) {
        double b = u.effects.at(i, g, static_cast<int>(l));
        lp += -0.5 * (kLog2Pi + std::log(v[l])) - b * b / (2.0 * v[l]);
      }
  }
  for (int i = 0; i < n; ++i) {
    lp += subject_marginal_loglik(spec, u.params, u.effects, i, data.subjects[i]);
    if (!std::isfinite(lp)) return kNegInf;
  }
  return std::isfinite(lp) ? lp : kNegInf;
}

}  // namespace jlcm
