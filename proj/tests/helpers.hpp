#pragma once
// Shared fixtures for the test suite.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "jlcm/simulate.hpp"
#include "jlcm/types.hpp"

namespace testutil {

inline jlcm::SubjectData subject(std::string id, std::vector<double> times,
                                 std::vector<double> values, double event_time, int event,
                                 std::map<std::string, double> covariates = {}) {
  jlcm::SubjectData s;
  s.id = std::move(id);
  for (std::size_t k = 0; k < times.size(); ++k) s.records.push_back({times[k], values[k]});
  s.event_time = event_time;
  s.event = event;
  s.covariates = std::move(covariates);
  return s;
}

// Random-intercept-only G=1 model: y = beta0 + b_i + noise, Weibull survival
// with no covariates and no association.
inline jlcm::ModelSpec intercept_spec() {
  jlcm::ModelSpec spec;
  spec.n_classes = 1;
  spec.fixed_basis = {jlcm::BasisTerm::intercept()};
  spec.random_basis = {jlcm::BasisTerm::intercept()};
  return spec;
}

// A small dataset drawn from a built-in scenario.
inline jlcm::SimulatedDataset scenario_data(const std::string& name, int n, std::uint64_t seed) {
  jlcm::ScenarioConfig config = jlcm::builtin_scenario(name, n, seed);
  return jlcm::simulate_dataset(config);
}

inline double log_normal_pdf(double x, double mean, double var) {
  return -0.5 * (std::log(2.0 * 3.14159265358979323846 * var) + (x - mean) * (x - mean) / var);
}

}  // namespace testutil
