#pragma once
// Latent class recovery: for each retained posterior draw, sample one class
// label per subject from the conditional class membership probabilities
// (prior membership times longitudinal and survival likelihood contributions,
// normalized within subject). Aggregating label draws gives per-subject
// posterior class probabilities and a maximum-a-posteriori assignment.

#include <cstdint>
#include <vector>

#include "jlcm/nuts.hpp"
#include "jlcm/posterior.hpp"
#include "jlcm/rng.hpp"
#include "jlcm/util.hpp"

namespace jlcm {

struct ClassDraws {
  int n_draws = 0;
  int n_subjects = 0;
  int n_classes = 0;
  std::vector<int> labels;  // draw-major, values in 1..n_classes

  int at(int s, int i) const { return labels[static_cast<std::size_t>(s) * n_subjects + i]; }
};

inline ClassDraws sample_class_labels(const ChainDraws& chain, Posterior& post,
                                      std::uint64_t seed) {
  const auto& data = post.data();
  if (chain.dim != post.dim())
    throw ConfigError("sample_class_labels: draw dimension does not match the model");
  if (chain.n_kept <= 0) throw ConfigError("sample_class_labels: chain has no kept draws");

  ClassDraws out;
  out.n_draws = chain.n_kept;
  out.n_subjects = data.n;
  out.n_classes = data.spec.n_classes;
  out.labels.resize(static_cast<std::size_t>(out.n_draws) * out.n_subjects);

  Rng rng(mix_seed({seed, stream::kLabels}));
  std::vector<double> lw(out.n_classes);
  for (int s = 0; s < out.n_draws; ++s) {
    const double* ct = chain.cdraw(s);
    post.precompute_nodes(ct);
    for (int i = 0; i < out.n_subjects; ++i) {
      post.class_logweights_prepared(ct, i, lw.data());
      int g = rng.categorical_logw(lw.data(), out.n_classes);
      out.labels[static_cast<std::size_t>(s) * out.n_subjects + i] = g + 1;
    }
  }
  return out;
}

// n_subjects x n_classes matrix of label frequencies across draws.
inline std::vector<double> posterior_class_probs(const ClassDraws& cd) {
  std::vector<double> probs(static_cast<std::size_t>(cd.n_subjects) * cd.n_classes, 0.0);
  for (int s = 0; s < cd.n_draws; ++s)
    for (int i = 0; i < cd.n_subjects; ++i)
      probs[static_cast<std::size_t>(i) * cd.n_classes + cd.at(s, i) - 1] += 1.0;
  for (double& p : probs) p /= cd.n_draws;
  return probs;
}

// Modal class per subject (1-based); ties resolve to the lowest class index.
inline std::vector<int> map_classes(const std::vector<double>& probs, int n_subjects,
                                    int n_classes) {
  std::vector<int> out(n_subjects);
  for (int i = 0; i < n_subjects; ++i) {
    const double* row = probs.data() + static_cast<std::size_t>(i) * n_classes;
    int best = 0;
    for (int g = 1; g < n_classes; ++g)
      if (row[g] > row[best]) best = g;
    out[i] = best + 1;
  }
  return out;
}

}  // namespace jlcm
