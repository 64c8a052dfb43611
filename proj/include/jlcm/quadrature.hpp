#pragma once
// Gauss-Legendre rules mapped to (0, 1), computed on demand by Newton
// iteration on the Legendre polynomial (machine precision, any order).

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "jlcm/util.hpp"

namespace jlcm {

struct GaussLegendre {
  int order = 0;
  std::vector<double> node;      // on (0, 1), ascending
  std::vector<double> weight;    // sums to 1
  std::vector<double> log_node;  // cached log(node)
};

inline GaussLegendre make_gauss_legendre(int order) {
  if (order < 2) throw std::invalid_argument("quadrature order must be >= 2");
  GaussLegendre gl;
  gl.order = order;
  gl.node.resize(order);
  gl.weight.resize(order);
  int n = order;
  int half = (n + 1) / 2;
  for (int k = 0; k < half; ++k) {
    // root of P_n near cos(pi*(k+3/4)/(n+1/2)), refined by Newton
    double x = std::cos(kPi * (k + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-15) {
        // one more sweep to settle the derivative
        p0 = 1.0;
        p1 = x;
        for (int j = 2; j <= n; ++j) {
          double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        break;
      }
    }
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    // map [-1,1] -> (0,1); x descending in k, so k goes to the upper half
    gl.node[n - 1 - k] = 0.5 * (1.0 + x);
    gl.node[k] = 0.5 * (1.0 - x);
    gl.weight[n - 1 - k] = 0.5 * w;
    gl.weight[k] = 0.5 * w;
  }
  gl.log_node.resize(order);
  for (int k = 0; k < order; ++k) gl.log_node[k] = std::log(gl.node[k]);
  return gl;
}

// Shared cache; rules are immutable once built.
inline const GaussLegendre& gauss_legendre(int order) {
  static std::map<int, GaussLegendre> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, make_gauss_legendre(order)).first;
  return it->second;
}

}  // namespace jlcm
