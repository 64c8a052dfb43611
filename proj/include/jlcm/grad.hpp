#pragma once
// Gradient entry points: the analytic gradient of the unconstrained log
// posterior, plus a central finite-difference fallback used as the oracle in
// the verification suite (it differentiates the reference-path density, so
// the two computations share no code).

#include <functional>
#include <memory>
#include <vector>

#include "jlcm/posterior.hpp"

namespace jlcm {

struct GradientResult {
  double value = kNegInf;
  std::vector<double> grad;
  bool ok = false;  // false: non-finite density or gradient at theta
};

inline GradientResult grad_log_posterior(const std::vector<double>& theta, const Dataset& data,
                                         const ModelSpec& spec, const PriorSpec& priors) {
  auto cd = std::make_shared<const CompiledData>(CompiledData::build(data, spec, priors));
  Posterior post(cd);
  GradientResult r;
  r.grad.assign(theta.size(), 0.0);
  r.ok = post.value_grad(theta.data(), r.value, r.grad.data());
  return r;
}

// Central differences, one coordinate at a time.
template <class F>
std::vector<double> finite_difference_gradient(F&& f, std::vector<double> theta, double h = 1e-5) {
  std::vector<double> g(theta.size());
  for (std::size_t c = 0; c < theta.size(); ++c) {
    double orig = theta[c];
    theta[c] = orig + h;
    double up = f(theta);
    theta[c] = orig - h;
    double down = f(theta);
    theta[c] = orig;
    g[c] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace jlcm
