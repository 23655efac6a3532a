#pragma once

#include "gmddf/gaussian.hpp"

namespace gmddf {

struct RandomProblemConfig {
  Index dim = 2;
  int min_components = 10;
  int max_components = 11;
  double box_low = -14.0;
  double box_high = 14.0;
  double wishart_dof = 10.0;
  double wishart_scale = 0.75;
  // true: Σ = W/dof, so wishart_scale is the expected covariance.
  // false: Σ = W, expected covariance dof·scale·I.
  bool normalize_by_dof = true;

  void validate() const {
    if (dim < 1) throw Error("random problem: dim must be >= 1");
    if (min_components < 1 || max_components < min_components) throw Error("random problem: bad component-count range");
    if (!(box_low < box_high)) throw Error("random problem: box low must be < high");
    if (!(wishart_dof >= static_cast<double>(dim))) throw Error("random problem: Wishart dof must be >= dim");
    if (!(wishart_scale > 0.0)) throw Error("random problem: Wishart scale must be positive");
  }
};

/// Bartlett decomposition draw of Wishart(dof, scale·I).
inline Mat sample_wishart(Index d, double dof, double scale, Rng& rng) {
  Mat a = Mat::Zero(d, d);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (Index i = 0; i < d; ++i) {
    std::chi_squared_distribution<double> chi2(dof - static_cast<double>(i));
    a(i, i) = std::sqrt(chi2(rng));
    for (Index j = 0; j < i; ++j) a(i, j) = n01(rng);
  }
  return symmetrized(scale * (a * a.transpose()));
}

inline GaussianMixture random_gm(const RandomProblemConfig& cfg, Rng& rng) {
  cfg.validate();
  const int m = std::uniform_int_distribution<int>(cfg.min_components, cfg.max_components)(rng);
  std::uniform_real_distribution<double> box(cfg.box_low, cfg.box_high);
  std::vector<double> weights(static_cast<std::size_t>(m));
  std::vector<Vec> means;
  std::vector<Mat> covs;
  for (int q = 0; q < m; ++q) {
    weights[static_cast<std::size_t>(q)] = uniform01(rng);
    Vec mu(cfg.dim);
    for (Index k = 0; k < cfg.dim; ++k) mu(k) = box(rng);
    means.push_back(mu);
    Mat w = sample_wishart(cfg.dim, cfg.wishart_dof, cfg.wishart_scale, rng);
    if (cfg.normalize_by_dof) w /= cfg.wishart_dof;
    covs.push_back(w);
  }
  double total = 0.0;
  for (double w : weights) total += w;
  std::vector<GaussianComponent> comps;
  for (int q = 0; q < m; ++q) {
    const auto i = static_cast<std::size_t>(q);
    comps.emplace_back(weights[i] / total, means[i], covs[i]);
  }
  return GaussianMixture(std::move(comps));
}

/// Reference generator settings: agent beliefs and common information.
/// Raw Wishart draws (expected covariance 7.5·I); with the /dof scaling the
/// common mixture leaves gaps where the exact quotient concentrates its mass.
inline RandomProblemConfig reference_agent_config() {
  RandomProblemConfig c;
  c.normalize_by_dof = false;
  return c;
}

inline RandomProblemConfig reference_common_config() {
  RandomProblemConfig c;
  c.normalize_by_dof = false;
  c.min_components = 40;
  c.max_components = 41;
  c.box_low = -20.0;
  c.box_high = 20.0;
  return c;
}

}  // namespace gmddf
