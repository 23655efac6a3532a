#pragma once

#include "gmddf/quotient.hpp"

#include <functional>

namespace gmddf {

/// Importance samples with log-space unnormalized weights. Optional caches are empty when unused.
struct WeightedSampleSet {
  Mat points;       ///< d × n, one sample per column
  Vec log_theta;    ///< log θ_s
  Vec log_q;        ///< log proposal density
  Vec log_pi;       ///< cached log p_i(x_s)
  Vec log_pj;       ///< cached log p_j(x_s)
  Mat log_numer;    ///< n × Z, log N(x_s; μ_z, Σ_z) for each posterior mixand z

  [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(points.cols()); }
  [[nodiscard]] Index dim() const noexcept { return points.rows(); }

  /// θ normalized to sum to one.
  [[nodiscard]] Vec normalized_weights() const {
    if (log_theta.size() == 0) return {};
    const double peak = log_theta.maxCoeff();
    if (!std::isfinite(peak)) throw Error("sample set has no positive weight");
    Vec w = (log_theta.array() - peak).exp();
    return w / w.sum();
  }
};

/// N/(1 + cv²) with the unbiased cv² estimate; scale invariant, so log weights are rescaled first.
inline double ess_from_log(const Vec& log_theta) {
  const auto n = static_cast<double>(log_theta.size());
  if (log_theta.size() < 2) throw Error("ess needs at least two weights");
  const double peak = log_theta.maxCoeff();
  if (!std::isfinite(peak)) throw Error("ess: all weights are zero");
  const Vec t = (log_theta.array() - peak).exp();
  const double mean = t.mean();
  const double cv2 = (t.array() - mean).square().sum() / ((n - 1.0) * mean * mean);
  return n / (1.0 + cv2);
}

inline double ess(std::span<const double> theta) {
  if (theta.size() < 2) throw Error("ess needs at least two weights");
  const auto n = static_cast<double>(theta.size());
  double sum = 0.0;
  for (double t : theta) {
    if (!(t >= 0.0)) throw Error("ess: weights must be nonnegative");
    sum += t;
  }
  if (!(sum > 0.0)) throw Error("ess: all weights are zero");
  const double mean = sum / n;
  double ss = 0.0;
  for (double t : theta) ss += (t - mean) * (t - mean);
  return n / (1.0 + ss / ((n - 1.0) * mean * mean));
}

struct ImportanceEstimate {
  double log_w0;  ///< log of the zeroth-moment estimate (1/N)Σ target/proposal
  Vec mean;
  Mat cov;
  double ess;
  WeightedSampleSet samples;
};

/// Relative eigenvalue floor keeping estimated covariances within the accepted condition number.
inline Mat floor_covariance(const Mat& cov) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(cov), Eigen::EigenvaluesOnly);
  const double hi = std::max(es.eigenvalues().maxCoeff(), 0.0);
  return eigen_floored(cov, std::max(1e-10, 1e-11 * hi));
}

using LogDensityFn = std::function<double(const Vec&)>;

/// Importance estimate that never throws on low ESS; callers decide what to do with `ess`.
inline ImportanceEstimate estimate_moments(const LogDensityFn& log_target, const GaussianMixture& proposal, std::size_t n, Rng& rng) {
  if (n < 2) throw Error("importance sampling needs at least two samples");
  WeightedSampleSet set;
  set.points = gm_sample(proposal, n, rng);
  set.log_q.resize(static_cast<Index>(n));
  set.log_theta.resize(static_cast<Index>(n));
  for (Index s = 0; s < static_cast<Index>(n); ++s) {
    const Vec x = set.points.col(s);
    set.log_q(s) = proposal.log_pdf(x);
    set.log_theta(s) = log_target(x) - set.log_q(s);
  }
  const double peak = set.log_theta.maxCoeff();
  if (!std::isfinite(peak)) throw Error("importance sampling: target vanishes at every sample");
  const Vec t = (set.log_theta.array() - peak).exp();
  const double sum = t.sum();
  const Vec w = t / sum;
  const Vec mean = set.points * w;
  const Mat centered = set.points.colwise() - mean;
  const Mat cov = floor_covariance(centered * w.asDiagonal() * centered.transpose());
  const double log_w0 = peak + std::log(sum) - std::log(static_cast<double>(n));
  const double e = ess_from_log(set.log_theta);
  return {log_w0, mean, cov, e, std::move(set)};
}

/// As estimate_moments, but an ESS below two raises EstimateUnreliable.
inline ImportanceEstimate importance_moments(const LogDensityFn& log_target, const GaussianMixture& proposal, std::size_t n, Rng& rng) {
  auto est = estimate_moments(log_target, proposal, n, rng);
  if (est.ess < 2.0) throw EstimateUnreliable("importance sampling estimate unreliable: ESS below 2", est.ess);
  return est;
}

/// Single Gaussian at μ_vr with the largest-determinant covariance among Σ_v, Σ_r and α·I.
inline GaussianMixture ingis_proposal(const QuotientMixand& m, double alpha) {
  if (!(alpha > 0.0)) throw Error("INGIS inflation alpha must be positive");
  const Index d = m.numerator.dim();
  Mat best = alpha * Mat::Identity(d, d);
  double best_logdet = static_cast<double>(d) * std::log(alpha);
  for (const auto* c : {&m.source_cov_v, &m.source_cov_r}) {
    if (!c->has_value()) continue;
    const double ld = GaussianComponent(1.0, Vec::Zero(d), **c).log_det();
    if (ld > best_logdet) {
      best_logdet = ld;
      best = **c;
    }
  }
  return single_gaussian(m.numerator.mean(), best);
}

/// Σ_c β_c N(μ⁺, ξ_c Σ⁺).
inline GaussianMixture heavy_tail_proposal(const Vec& mean, const Mat& cov, const std::vector<double>& scales, const std::vector<double>& weights) {
  if (scales.empty() || scales.size() != weights.size()) throw Error("heavy-tail proposal: scales and weights must be nonempty and equal length");
  double total = 0.0;
  for (std::size_t c = 0; c < scales.size(); ++c) {
    if (!(scales[c] >= 1.0)) throw Error("heavy-tail proposal: scales must be >= 1");
    if (!(weights[c] >= 0.0)) throw Error("heavy-tail proposal: weights must be nonnegative");
    total += weights[c];
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error("heavy-tail proposal: weights must sum to one");
  std::vector<GaussianComponent> comps;
  for (std::size_t c = 0; c < scales.size(); ++c) comps.emplace_back(weights[c], mean, scales[c] * cov);
  return GaussianMixture(std::move(comps));
}

/// `count` scales spaced geometrically in [1, max_scale], equal weights.
inline std::pair<std::vector<double>, std::vector<double>> geometric_scales(double max_scale, std::size_t count) {
  if (count == 0) throw Error("geometric_scales: need at least one scale");
  max_scale = std::max(1.0, max_scale);
  std::vector<double> xi, beta(count, 1.0 / static_cast<double>(count));
  for (std::size_t c = 0; c < count; ++c)
    xi.push_back(count == 1 ? 1.0 : std::pow(max_scale, static_cast<double>(c) / static_cast<double>(count - 1)));
  return {xi, beta};
}

}  // namespace gmddf
