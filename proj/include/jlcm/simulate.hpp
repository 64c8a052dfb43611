#pragma once
// Synthetic data generation for the joint latent class model. Each subject
// gets covariates, a class label (fixed proportions or covariate softmax), a
// random-effect vector, noisy longitudinal measurements on a jittered visit
// schedule, and an event time drawn from the class-specific hazard by
// inverting H(t) = e with e ~ Exponential(1) via bracketing + bisection.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "jlcm/model.hpp"
#include "jlcm/rng.hpp"
#include "jlcm/types.hpp"
#include "jlcm/util.hpp"

namespace jlcm {

struct ScenarioConfig {
  std::string name;
  int n_subjects = 0;
  ModelSpec spec;     // generating model structure (membership covariates drive labels)
  Parameters truth;   // generating parameter values
  std::vector<double> class_proportions;  // used when spec.membership_covariates empty
  double censor_max = 17.5;
  std::vector<double> visit_times;  // nominal measurement schedule
  double visit_jitter = 0.25;
  double t_max = 200.0;  // administrative horizon for event-time inversion
  std::uint64_t seed = 1;

  void validate() const {
    if (n_subjects <= 0) throw ConfigError("scenario: n_subjects must be > 0");
    spec.validate();
    if (static_cast<int>(truth.classes.size()) != spec.n_classes)
      throw ConfigError("scenario: truth must provide one parameter block per class");
    if (spec.membership_covariates.empty() && spec.n_classes > 1) {
      if (static_cast<int>(class_proportions.size()) != spec.n_classes)
        throw ConfigError("scenario: class proportions must have one entry per class");
      double s = 0.0;
      for (double p : class_proportions) {
        if (!(p > 0.0)) throw ConfigError("scenario: class proportions must be positive");
        s += p;
      }
      if (std::abs(s - 1.0) > 1e-8) throw ConfigError("scenario: class proportions must sum to 1");
    }
    if (!(censor_max > 0.0)) throw ConfigError("scenario: censor_max must be > 0");
    if (!(t_max >= censor_max)) throw ConfigError("scenario: t_max must be >= censor_max");
    if (visit_times.empty()) throw ConfigError("scenario: empty visit schedule");
  }
};

struct SimulatedDataset {
  Dataset data;
  std::vector<int> true_labels;  // 1-based generating class
  LatentEffects true_effects;    // populated only in each subject's generating class
};

// Solve H(t) = e for t by bisection on [0, t_max]; returns t_max when the
// cumulative hazard never reaches e (administrative censoring).
inline double event_time_given(const ModelSpec& spec, const ClassParameters& cp, const double* b,
                               const SubjectData& subj, double e, double t_max) {
  if (cumulative_hazard(spec, cp, b, t_max, subj) < e) return t_max;
  double lo = 0.0, hi = t_max;
  while (hi - lo > 1e-10) {
    double mid = 0.5 * (lo + hi);
    if (cumulative_hazard(spec, cp, b, mid, subj) < e)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

inline double sample_event_time(const ModelSpec& spec, const ClassParameters& cp, const double* b,
                                const SubjectData& subj, Rng& rng, double t_max) {
  return event_time_given(spec, cp, b, subj, rng.expo(), t_max);
}

// Class label (1-based) from fixed proportions or the membership softmax.
inline int assign_membership(const ScenarioConfig& config, const SubjectData& subj, Rng& rng) {
  const int G = config.spec.n_classes;
  if (G == 1) return 1;
  if (config.spec.membership_covariates.empty()) {
    double u = rng.u01(), acc = 0.0;
    for (int g = 0; g < G; ++g) {
      acc += config.class_proportions[g];
      if (u < acc) return g + 1;
    }
    return G;
  }
  std::vector<double> lp = log_membership_probs(config.truth, config.spec, subj);
  return rng.categorical_logw(lp.data(), G) + 1;
}

inline SimulatedDataset simulate_dataset(const ScenarioConfig& config) {
  config.validate();
  const ModelSpec& spec = config.spec;
  const int G = spec.n_classes;
  const int R = static_cast<int>(spec.random_basis.size());

  SimulatedDataset out{Dataset{}, {}, LatentEffects(config.n_subjects, G, R)};
  out.data.subjects.resize(config.n_subjects);
  out.true_labels.resize(config.n_subjects);

  for (int i = 0; i < config.n_subjects; ++i) {
    Rng rng(mix_seed({config.seed, stream::kSubject, static_cast<std::uint64_t>(i)}));
    SubjectData& subj = out.data.subjects[i];
    subj.id = "s" + std::to_string(i + 1);
    subj.covariates["male"] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    subj.covariates["age"] = rng.normal(45.0, 15.70);
    subj.covariates["xtilde"] = rng.normal();

    int label = assign_membership(config, subj, rng);
    out.true_labels[i] = label;
    const ClassParameters& cp = config.truth.classes[label - 1];

    double* b = &out.true_effects.at(i, label - 1, 0);
    for (int l = 0; l < R; ++l) b[l] = rng.normal(0.0, std::sqrt(cp.re_variances[l]));

    double tstar = sample_event_time(spec, cp, b, subj, rng, config.t_max);
    double censor = rng.uniform(0.0, config.censor_max);
    if (censor <= 0.0) censor = config.censor_max;  // keep event_time strictly positive
    subj.event = tstar <= censor ? 1 : 0;
    subj.event_time = subj.event ? tstar : censor;

    std::vector<double> times;
    times.reserve(config.visit_times.size());
    for (double nominal : config.visit_times) {
      double t = nominal + rng.uniform(-config.visit_jitter, config.visit_jitter);
      times.push_back(std::max(0.0, t));
    }
    double sd = std::sqrt(cp.sigma2);
    for (double t : times) {
      if (t > subj.event_time) continue;
      double y = current_value(spec, cp, b, t, subj) + rng.normal(0.0, sd);
      subj.records.push_back({t, y});
    }
    subj.validate();
  }
  out.data.validate();
  return out;
}

// Built-in scenarios. "setting1-g{1,2,3}" draw labels from fixed proportions;
// "setting2-s{1..4}" use n=900-style membership structures: s1 fixed (0.5,0.5),
// s2 softmax on xtilde, s3 on (male, age), s4 on (male, age, xtilde).
inline ScenarioConfig builtin_scenario(const std::string& name, int n_subjects,
                                       std::uint64_t seed) {
  ClassParameters c1{{8.03, -0.16, -5.86}, 0.4761, 1.8, -4.85, {-0.02}, 0.38, {0.87, 0.02}};
  ClassParameters c2{{-8.03, 0.46, 12.2}, 0.4761, 1.4, -4.85, {0.09}, 0.08, {0.02, 0.91}};
  ClassParameters c3{{0.03, -0.01, -1.96}, 0.4761, 1.8, 2.85, {-0.12}, 0.58, {0.28, 0.31}};

  ScenarioConfig config;
  config.name = name;
  config.n_subjects = n_subjects;
  config.seed = seed;
  config.spec.fixed_basis = {BasisTerm::intercept(), BasisTerm::time_power(1),
                             BasisTerm::covariate("male")};
  config.spec.random_basis = {BasisTerm::intercept(), BasisTerm::time_power(1)};
  config.spec.survival_covariates = {"age"};
  for (double t = 0.0; t <= 17.5 + 1e-9; t += 1.75) config.visit_times.push_back(t);

  if (name == "setting1-g1") {
    config.spec.n_classes = 1;
    config.truth.classes = {c1};
    config.class_proportions = {1.0};
  } else if (name == "setting1-g2" || name == "setting2-s1") {
    config.spec.n_classes = 2;
    config.truth.classes = {c1, c2};
    config.class_proportions = {0.5, 0.5};
  } else if (name == "setting1-g3") {
    config.spec.n_classes = 3;
    config.truth.classes = {c1, c2, c3};
    config.class_proportions = {0.4, 0.35, 0.25};
  } else if (name == "setting2-s2") {
    config.spec.n_classes = 2;
    config.truth.classes = {c1, c2};
    config.spec.membership_covariates = {"xtilde"};
    config.truth.psi0 = {-0.4};
    config.truth.psi = {{1.0}};
  } else if (name == "setting2-s3") {
    config.spec.n_classes = 2;
    config.truth.classes = {c1, c2};
    config.spec.membership_covariates = {"male", "age"};
    config.truth.psi0 = {2.0};
    config.truth.psi = {{4.0, -0.1}};
  } else if (name == "setting2-s4") {
    config.spec.n_classes = 2;
    config.truth.classes = {c1, c2};
    config.spec.membership_covariates = {"male", "age", "xtilde"};
    config.truth.psi0 = {2.0};
    config.truth.psi = {{4.0, -0.1, 1.0}};
  } else {
    throw ConfigError("unknown scenario '" + name +
                      "' (expected setting1-g{1,2,3} or setting2-s{1,2,3,4})");
  }
  config.validate();
  return config;
}

}  // namespace jlcm
