#pragma once
// Domain types: data containers, basis grammar, model/prior specification,
// and the flat unconstrained parameter layout used by the sampler.

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "jlcm/util.hpp"

namespace jlcm {

// Basis terms for trajectory design rows ------------------------------------

enum class BasisKind { Intercept, TimePower, Covariate, TimeCovariate };

struct BasisTerm {
  BasisKind kind = BasisKind::Intercept;
  int power = 0;          // time exponent, 0..2
  std::string cov;  // for Covariate / TimeCovariate

  static BasisTerm intercept() { return {BasisKind::Intercept, 0, {}}; }
  static BasisTerm time_power(int k) {
    if (k < 1 || k > 2) throw ConfigError("time power must be 1 or 2");
    return {BasisKind::TimePower, k, {}};
  }
  static BasisTerm covariate(std::string name) { return {BasisKind::Covariate, 0, std::move(name)}; }
  static BasisTerm time_covariate(int k, std::string name) {
    if (k < 1 || k > 2) throw ConfigError("time power must be 1 or 2");
    return {BasisKind::TimeCovariate, k, std::move(name)};
  }

  // "intercept", "time", "time^2", "male", "time*male", "time^2*male"
  static BasisTerm parse(const std::string& s) {
    if (s == "intercept" || s == "1") return intercept();
    if (s == "time") return time_power(1);
    if (s == "time^2") return time_power(2);
    auto star = s.find('*');
    if (star == std::string::npos) {
      if (s.empty()) throw ConfigError("empty basis term");
      if (s.rfind("time^", 0) == 0)
        throw ConfigError("basis term '" + s + "': time power must be 1 or 2");
      return covariate(s);
    }
    std::string lhs = s.substr(0, star), rhs = s.substr(star + 1);
    int k;
    if (lhs == "time") k = 1;
    else if (lhs == "time^2") k = 2;
    else throw ConfigError("basis term '" + s + "': left factor must be time or time^2");
    if (rhs.empty()) throw ConfigError("basis term '" + s + "': missing covariate name");
    return time_covariate(k, rhs);
  }

  std::string label() const {
    switch (kind) {
      case BasisKind::Intercept: return "intercept";
      case BasisKind::TimePower: return power == 1 ? "time" : "time^2";
      case BasisKind::Covariate: return cov;
      case BasisKind::TimeCovariate:
        return (power == 1 ? std::string("time*") : std::string("time^2*")) + cov;
    }
    return {};
  }
};

// Data -----------------------------------------------------------------------

struct LongitudinalRecord {
  double time = 0.0;
  double value = 0.0;
};

struct SubjectData {
  std::string id;
  std::vector<LongitudinalRecord> records;  // sorted ascending by time
  double event_time = 0.0;
  int event = 0;  // 1 observed, 0 censored
  std::map<std::string, double> covariates;

  void validate() const {
    if (!(event_time > 0.0)) throw ConfigError("subject " + id + ": event_time must be > 0");
    if (event != 0 && event != 1) throw ConfigError("subject " + id + ": event must be 0 or 1");
    double prev = -kPosInf;
    for (const auto& r : records) {
      if (r.time < 0.0) throw ConfigError("subject " + id + ": negative record time");
      if (r.time < prev) throw ConfigError("subject " + id + ": record times not sorted");
      if (r.time > event_time)
        throw ConfigError("subject " + id + ": record time exceeds event time");
      prev = r.time;
    }
  }

  double covariate(const std::string& name) const {
    auto it = covariates.find(name);
    if (it == covariates.end())
      throw ConfigError("subject " + id + ": unknown covariate '" + name + "'");
    return it->second;
  }
};

struct Dataset {
  std::vector<SubjectData> subjects;

  void validate() const {
    if (subjects.empty()) throw ConfigError("dataset has no subjects");
    for (const auto& s : subjects) s.validate();
  }
};

// Model / prior specification --------------------------------------------------

struct ModelSpec {
  int n_classes = 1;
  std::vector<BasisTerm> fixed_basis;   // trajectory fixed effects
  std::vector<BasisTerm> random_basis;  // subject random effects
  std::vector<std::string> survival_covariates;
  std::vector<std::string> membership_covariates;
  int quad_order = 15;

  void validate() const {
    if (n_classes < 1) throw ConfigError("n_classes must be >= 1");
    if (fixed_basis.empty()) throw ConfigError("fixed basis must be non-empty");
    if (random_basis.empty()) throw ConfigError("random basis must be non-empty");
    if (quad_order < 2) throw ConfigError("quad_order must be >= 2");
  }
};

enum class PriorFamily { Normal, Gamma, HalfNormal, InverseGamma };

// p1/p2 meaning: Normal(mean, sd); Gamma(shape, rate);
// HalfNormal(scale), p2 unused; InverseGamma(shape, scale).
struct Prior {
  PriorFamily family = PriorFamily::Normal;
  double p1 = 0.0;
  double p2 = 1.0;

  static Prior normal(double mean, double sd) { return {PriorFamily::Normal, mean, sd}; }
  static Prior gamma(double shape, double rate) { return {PriorFamily::Gamma, shape, rate}; }
  static Prior half_normal(double scale) { return {PriorFamily::HalfNormal, scale, 0.0}; }
  static Prior inverse_gamma(double shape, double scale) {
    return {PriorFamily::InverseGamma, shape, scale};
  }
};

struct PriorSpec {
  Prior beta = Prior::normal(0.0, 5.0);
  Prior gamma = Prior::normal(0.0, 5.0);
  Prior weibull_log_scale = Prior::normal(0.0, 5.0);
  Prior alpha = Prior::normal(0.0, 5.0);
  Prior psi = Prior::normal(0.0, 2.0);
  Prior weibull_shape = Prior::gamma(2.0, 0.5);
  Prior sigma2 = Prior::half_normal(0.5);
  Prior re_variance = Prior::gamma(1.5, 1.5);

  void validate() const {
    auto require_normal = [](const Prior& p, const char* what) {
      if (p.family != PriorFamily::Normal)
        throw ConfigError(std::string(what) + ": unconstrained parameters take normal priors");
      if (!(p.p2 > 0.0)) throw ConfigError(std::string(what) + ": sd must be > 0");
    };
    auto require_positive_family = [](const Prior& p, const char* what) {
      switch (p.family) {
        case PriorFamily::Gamma:
          if (!(p.p1 > 0.0 && p.p2 > 0.0))
            throw ConfigError(std::string(what) + ": gamma shape/rate must be > 0");
          break;
        case PriorFamily::HalfNormal:
          if (!(p.p1 > 0.0)) throw ConfigError(std::string(what) + ": scale must be > 0");
          break;
        case PriorFamily::InverseGamma:
          if (!(p.p1 > 0.0 && p.p2 > 0.0))
            throw ConfigError(std::string(what) + ": shape/scale must be > 0");
          break;
        default:
          throw ConfigError(std::string(what) + ": positive parameters take a positive-support prior");
      }
    };
    require_normal(beta, "beta prior");
    require_normal(gamma, "gamma prior");
    require_normal(weibull_log_scale, "weibull_log_scale prior");
    require_normal(alpha, "alpha prior");
    require_normal(psi, "psi prior");
    require_positive_family(weibull_shape, "weibull_shape prior");
    require_positive_family(sigma2, "sigma2 prior");
    require_positive_family(re_variance, "re_variance prior");
  }
};

// Parameter containers ---------------------------------------------------------

struct ClassParameters {
  std::vector<double> beta;          // fixed trajectory effects, length F
  double sigma2 = 1.0;               // measurement-error variance
  double weibull_shape = 1.0;        // baseline hazard shape
  double weibull_log_scale = 0.0;    // baseline hazard log-scale intercept
  std::vector<double> gamma;         // survival covariate effects, length Q
  double alpha = 0.0;                // current-value association
  std::vector<double> re_variances;  // diagonal random-effect variances, length R
};

struct Parameters {
  std::vector<ClassParameters> classes;   // length G
  std::vector<double> psi0;               // membership intercepts, length G-1
  std::vector<std::vector<double>> psi;   // membership covariate effects, (G-1) x P
};

// Subject random effects b[i][g][l], stored flat.
struct LatentEffects {
  int n = 0, n_classes = 0, n_random = 0;
  std::vector<double> b;

  LatentEffects() = default;
  LatentEffects(int n_, int g_, int r_)
      : n(n_), n_classes(g_), n_random(r_),
        b(static_cast<std::size_t>(n_) * g_ * r_, 0.0) {}

  double& at(int i, int g, int l) {
    return b[(static_cast<std::size_t>(i) * n_classes + g) * n_random + l];
  }
  double at(int i, int g, int l) const {
    return b[(static_cast<std::size_t>(i) * n_classes + g) * n_random + l];
  }
  const double* row(int i, int g) const {
    return b.data() + (static_cast<std::size_t>(i) * n_classes + g) * n_random;
  }
};

// Flat unconstrained layout ------------------------------------------------------
//
// Per class g: beta (F) | sigma2 (log) | weibull_shape (log) | weibull_log_scale |
//              gamma (Q) | alpha | re_variances (R, log)
// then psi0 (G-1), psi row-major (G-1) x P, then latent effects subject-major.

struct ParamLayout {
  int G = 1, F = 0, R = 0, Q = 0, P = 0, n = 0;
  int per_class = 0;
  int n_params = 0;  // named model parameters (excludes latent effects)
  int dim = 0;       // full sampler dimension

  static ParamLayout make(const ModelSpec& spec, int n_subjects) {
    ParamLayout lay;
    lay.G = spec.n_classes;
    lay.F = static_cast<int>(spec.fixed_basis.size());
    lay.R = static_cast<int>(spec.random_basis.size());
    lay.Q = static_cast<int>(spec.survival_covariates.size());
    lay.P = static_cast<int>(spec.membership_covariates.size());
    lay.n = n_subjects;
    lay.per_class = lay.F + 3 + lay.Q + 1 + lay.R;
    lay.n_params = lay.G * lay.per_class + (lay.G - 1) * (1 + lay.P);
    lay.dim = lay.n_params + n_subjects * lay.G * lay.R;
    return lay;
  }

  int beta(int g, int j) const { return g * per_class + j; }
  int sigma2(int g) const { return g * per_class + F; }
  int shape(int g) const { return g * per_class + F + 1; }
  int lscale(int g) const { return g * per_class + F + 2; }
  int gamma(int g, int q) const { return g * per_class + F + 3 + q; }
  int alpha(int g) const { return g * per_class + F + 3 + Q; }
  int revar(int g, int l) const { return g * per_class + F + 3 + Q + 1 + l; }
  int psi0(int k) const { return G * per_class + k; }
  int psi(int k, int j) const { return G * per_class + (G - 1) + k * P + j; }
  int latent(int i, int g, int l) const { return n_params + (i * G + g) * R + l; }

  // Coordinates stored on the log scale.
  bool is_positive(int c) const {
    if (c >= n_params) return false;
    int within = c % per_class;
    if (c >= G * per_class) return false;
    return within == F || within == F + 1 || (within >= F + 3 + Q + 1);
  }

  std::vector<std::string> param_names(const ModelSpec& spec) const {
    std::vector<std::string> names(static_cast<std::size_t>(n_params));
    for (int g = 0; g < G; ++g) {
      std::string cg = std::to_string(g + 1);
      for (int j = 0; j < F; ++j)
        names[beta(g, j)] = "beta[" + cg + "][" + spec.fixed_basis[j].label() + "]";
      names[sigma2(g)] = "sigma2[" + cg + "]";
      names[shape(g)] = "weibull_shape[" + cg + "]";
      names[lscale(g)] = "weibull_log_scale[" + cg + "]";
      for (int q = 0; q < Q; ++q)
        names[gamma(g, q)] = "gamma[" + cg + "][" + spec.survival_covariates[q] + "]";
      names[alpha(g)] = "alpha[" + cg + "]";
      for (int l = 0; l < R; ++l)
        names[revar(g, l)] = "re_var[" + cg + "][" + spec.random_basis[l].label() + "]";
    }
    for (int k = 0; k < G - 1; ++k) {
      std::string ck = std::to_string(k + 1);
      names[psi0(k)] = "psi0[" + ck + "]";
      for (int j = 0; j < P; ++j)
        names[psi(k, j)] = "psi[" + ck + "][" + spec.membership_covariates[j] + "]";
    }
    return names;
  }
};

}  // namespace jlcm
