#pragma once

#include "gmddf/sampling.hpp"

namespace gmddf {

/// Component covariance floor: absolute 1e-8 and relative to the largest eigenvalue.
inline Mat em_floor(const Mat& cov) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(cov), Eigen::EigenvaluesOnly);
  const double hi = std::max(es.eigenvalues().maxCoeff(), 0.0);
  return eigen_floored(cov, std::max(1e-8, 1e-11 * hi));
}

/// γ (n × M) with row sums equal to the normalized sample weights, plus column sums N̄.
struct ResponsibilityMatrix {
  Mat gamma;
  Vec totals;
};

namespace detail {

/// Log-space weighted responsibilities from per-sample component log terms.
inline ResponsibilityMatrix responsibilities(const Mat& log_terms, const Vec& sample_weights) {
  const Index n = log_terms.rows();
  const Index m = log_terms.cols();
  ResponsibilityMatrix r{Mat::Zero(n, m), Vec::Zero(m)};
  for (Index s = 0; s < n; ++s) {
    if (sample_weights(s) == 0.0) continue;
    const double peak = log_terms.row(s).maxCoeff();
    if (!std::isfinite(peak)) continue;
    const Eigen::RowVectorXd e = (log_terms.row(s).array() - peak).exp();
    r.gamma.row(s) = sample_weights(s) * e / e.sum();
  }
  // fixed-order column sums keep results independent of threading
  for (Index z = 0; z < m; ++z) r.totals(z) = r.gamma.col(z).sum();
  return r;
}

struct MStepResult {
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<Mat> covs;
  std::vector<std::size_t> kept;  ///< source column of each surviving component
};

inline MStepResult m_step(const Mat& points, const ResponsibilityMatrix& r, double drop_floor) {
  MStepResult out;
  for (Index z = 0; z < r.gamma.cols(); ++z) {
    const double nz = r.totals(z);
    if (!(nz > drop_floor)) continue;
    const Vec g = r.gamma.col(z) / nz;
    const Vec mu = points * g;
    const Mat c = points.colwise() - mu;
    out.weights.push_back(nz);
    out.means.push_back(mu);
    out.covs.push_back(symmetrized(c * g.asDiagonal() * c.transpose()));
    out.kept.push_back(static_cast<std::size_t>(z));
  }
  return out;
}

inline Mat component_log_terms(const Mat& points, const GaussianMixture& gm) {
  Mat lt(points.cols(), static_cast<Index>(gm.size()));
  for (Index s = 0; s < points.cols(); ++s) {
    const Vec x = points.col(s);
    for (std::size_t z = 0; z < gm.size(); ++z)
      lt(s, static_cast<Index>(z)) = gm[z].weight() > 0.0 ? std::log(gm[z].weight()) + gm[z].log_density(x) : -std::numeric_limits<double>::infinity();
  }
  return lt;
}

inline double weighted_log_likelihood(const Mat& log_terms, const Vec& w) {
  double ll = 0.0;
  for (Index s = 0; s < log_terms.rows(); ++s) {
    if (w(s) == 0.0) continue;
    const Eigen::RowVectorXd row = log_terms.row(s);
    ll += w(s) * log_sum_exp(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
  }
  return ll;
}

}  // namespace detail

struct WemOptions {
  int max_steps = 200;
  double rel_tol = 1e-6;  ///< max relative parameter change
  double collapse = 1e-12;
};

struct WemResult {
  GaussianMixture gm;
  std::vector<double> log_likelihood;  ///< one entry per completed E-step
  int steps = 0;
};

/**
 * Weighted EM from a given initialization. Weighted log-likelihood
 * Σ_s w_s log p(x_s) is non-decreasing across steps.
 */
inline WemResult wem_fit(const WeightedSampleSet& set, const GaussianMixture& init, const WemOptions& opt = {}, Flags* flags = nullptr) {
  const Vec w = set.normalized_weights();
  if (init.dim() != set.dim()) throw DimensionMismatch("wem_fit: initialization dimension differs from samples");
  GaussianMixture gm = init;
  WemResult res{gm, {}, 0};
  for (int step = 0; step < opt.max_steps; ++step) {
    const Mat lt = detail::component_log_terms(set.points, gm);
    res.log_likelihood.push_back(detail::weighted_log_likelihood(lt, w));
    const auto r = detail::responsibilities(lt, w);
    const auto ms = detail::m_step(set.points, r, opt.collapse);
    if (ms.weights.empty()) throw Error("wem_fit: every component collapsed");
    if (ms.kept.size() < gm.size()) add_flag(flags, "wem_dropped_components=" + std::to_string(gm.size() - ms.kept.size()));
    std::vector<GaussianComponent> comps;
    double change = 0.0;
    for (std::size_t k = 0; k < ms.kept.size(); ++k) {
      const Mat cov = em_floor(ms.covs[k]);
      const auto& old = gm[ms.kept[k]];
      const double scale = 1.0 + old.mean().norm() + old.cov().norm();
      change = std::max({change, std::abs(ms.weights[k] - old.weight()), (ms.means[k] - old.mean()).norm() / scale,
                         (cov - old.cov()).norm() / scale});
      comps.emplace_back(ms.weights[k], ms.means[k], cov);
    }
    const bool dropped = ms.kept.size() < gm.size();
    gm = GaussianMixture(std::move(comps)).normalized();
    res.steps = step + 1;
    if (!dropped && change < opt.rel_tol) break;
  }
  res.gm = gm;
  return res;
}

/// Weighted resampling followed by k-means++ seeding; covariances start at the global weighted covariance.
inline GaussianMixture kmeanspp_init(const WeightedSampleSet& set, std::size_t m, Rng& rng) {
  const Vec w = set.normalized_weights();
  const Index n = set.points.cols();
  std::vector<double> cdf(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (Index s = 0; s < n; ++s) cdf[static_cast<std::size_t>(s)] = (acc += w(s));
  const std::size_t pool_size = std::min<std::size_t>(static_cast<std::size_t>(n), 2000);
  Mat pool(set.dim(), static_cast<Index>(pool_size));
  for (std::size_t k = 0; k < pool_size; ++k) {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), uniform01(rng) * acc);
    pool.col(static_cast<Index>(k)) = set.points.col(std::min<Index>(it - cdf.begin(), n - 1));
  }
  const Vec mean = set.points * w;
  const Mat c = set.points.colwise() - mean;
  const Mat global = em_floor(symmetrized(c * w.asDiagonal() * c.transpose()));
  std::vector<Vec> centers{pool.col(std::uniform_int_distribution<Index>(0, pool.cols() - 1)(rng))};
  Vec d2 = Vec::Constant(pool.cols(), std::numeric_limits<double>::infinity());
  while (centers.size() < m) {
    for (Index k = 0; k < pool.cols(); ++k) d2(k) = std::min(d2(k), (pool.col(k) - centers.back()).squaredNorm());
    const double total = d2.sum();
    if (!(total > 0.0)) {
      centers.push_back(centers.back());
      continue;
    }
    double u = uniform01(rng) * total;
    Index pick = 0;
    for (; pick < pool.cols() - 1; ++pick) {
      u -= d2(pick);
      if (u <= 0.0) break;
    }
    centers.push_back(pool.col(pick));
  }
  std::vector<GaussianComponent> comps;
  for (const auto& ctr : centers) comps.emplace_back(1.0 / static_cast<double>(m), ctr, global);
  return GaussianMixture(std::move(comps));
}

/// Best-likelihood weighted EM over `restarts` k-means++ initializations.
inline WemResult wem_fit_restarts(const WeightedSampleSet& set, std::size_t m, int restarts, Rng& rng, const WemOptions& opt = {},
                                  Flags* flags = nullptr) {
  if (m == 0 || restarts < 1) throw Error("wem_fit_restarts: need at least one component and one restart");
  std::optional<WemResult> best;
  for (int k = 0; k < restarts; ++k) {
    auto r = wem_fit(set, kmeanspp_init(set, m, rng), opt, flags);
    if (!best || r.log_likelihood.back() > best->log_likelihood.back()) best = std::move(r);
  }
  return *best;
}

/// Fills set.log_numer with log N(x_s; μ_z, Σ_z) for every posterior mixand z.
inline void cache_numerators(WeightedSampleSet& set, const QuotientPosterior& q) {
  set.log_numer.resize(set.points.cols(), static_cast<Index>(q.size()));
  parallel_for(static_cast<std::size_t>(set.points.cols()), [&](std::size_t s) {
    const Vec x = set.points.col(static_cast<Index>(s));
    for (std::size_t z = 0; z < q.size(); ++z) set.log_numer(static_cast<Index>(s), static_cast<Index>(z)) = q[z].numerator.log_density(x);
  });
}

/**
 * Constrained E-step: γ_sz ∝ θ_s w̃_z N_z(x_s) / Σ_z' w̃_z' N_z'(x_s). The shared
 * denominator u(x_s) cancels, so only the cached numerator values are read.
 */
inline ResponsibilityMatrix sswem_responsibilities(const WeightedSampleSet& set, const QuotientPosterior& q) {
  if (set.log_numer.rows() != set.points.cols() || set.log_numer.cols() != static_cast<Index>(q.size()))
    throw Error("sswem: sample set lacks cached numerator values for this posterior");
  Mat lt = set.log_numer;
  for (std::size_t z = 0; z < q.size(); ++z) lt.col(static_cast<Index>(z)).array() += q[z].log_pre_weight;
  auto r = detail::responsibilities(lt, set.normalized_weights());
  if (!(r.totals.sum() > 0.0)) throw Error("sswem: all responsibilities underflow");
  return r;
}

struct SswemOptions {
  double drop_floor = 1e-10;  ///< components with smaller N̄ are dropped
  double min_effective = 0.0;  ///< Kish count below which Σ_vr replaces the sample covariance; 0 selects d + 1
};

/// One constrained E-step then one M-step; output has one component per surviving posterior mixand.
inline GaussianMixture sswem_fit(const WeightedSampleSet& set, const QuotientPosterior& q, const SswemOptions& opt = {}, Flags* flags = nullptr) {
  const auto r = sswem_responsibilities(set, q);
  const auto ms = detail::m_step(set.points, r, opt.drop_floor);
  if (ms.weights.empty()) throw Error("sswem: every component was dropped");
  if (ms.kept.size() < q.size()) add_flag(flags, "sswem_dropped_components=" + std::to_string(q.size() - ms.kept.size()));
  std::vector<GaussianComponent> comps;
  std::size_t fallback = 0;
  const auto d = static_cast<double>(set.dim());
  for (std::size_t k = 0; k < ms.kept.size(); ++k) {
    const Index z = static_cast<Index>(ms.kept[k]);
    // Kish effective count of the component's responsibilities
    const double n_eff = r.totals(z) * r.totals(z) / r.gamma.col(z).squaredNorm();
    Mat cov = em_floor(ms.covs[k]);
    if (n_eff < (opt.min_effective > 0.0 ? opt.min_effective : d + 1.0)) {
      cov = q[ms.kept[k]].numerator.cov();
      ++fallback;
    }
    comps.emplace_back(ms.weights[k], ms.means[k], cov);
  }
  if (fallback > 0) add_flag(flags, "sswem_covariance_fallback=" + std::to_string(fallback));
  return GaussianMixture(std::move(comps)).normalized();
}

// ---- compression ----

/// Runnalls upper bound on the KLD cost of merging components a and b.
inline double runnalls_cost(const GaussianComponent& a, const GaussianComponent& b) {
  const double w = a.weight() + b.weight();
  if (w <= 0.0) return 0.0;
  const double fa = a.weight() / w, fb = b.weight() / w;
  const Vec dm = a.mean() - b.mean();
  const Mat merged = fa * a.cov() + fb * b.cov() + fa * fb * dm * dm.transpose();
  Eigen::LLT<Mat> llt(merged);
  const double log_det = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
  return 0.5 * (w * log_det - a.weight() * a.log_det() - b.weight() * b.log_det());
}

/// Moment-preserving merge of two components.
inline GaussianComponent merge_pair(const GaussianComponent& a, const GaussianComponent& b) {
  const double w = a.weight() + b.weight();
  if (w <= 0.0) return a;
  const double fa = a.weight() / w, fb = b.weight() / w;
  const Vec mu = fa * a.mean() + fb * b.mean();
  const Vec dm = a.mean() - b.mean();
  const Mat cov = symmetrized(fa * a.cov() + fb * b.cov() + fa * fb * dm * dm.transpose());
  return {w, mu, cov};
}

/// Greedy Runnalls reduction to at most m_max components.
inline GaussianMixture runnalls_compress(const GaussianMixture& gm, std::size_t m_max) {
  if (m_max < 1) throw Error("runnalls_compress: m_max must be >= 1");
  if (gm.size() <= m_max) return gm;
  std::vector<std::optional<GaussianComponent>> comps(gm.components().begin(), gm.components().end());
  const std::size_t n = comps.size();
  const double inf = std::numeric_limits<double>::infinity();
  Mat cost = Mat::Constant(static_cast<Index>(n), static_cast<Index>(n), inf);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) cost(static_cast<Index>(i), static_cast<Index>(j)) = runnalls_cost(*comps[i], *comps[j]);
  std::size_t alive = n;
  while (alive > m_max) {
    Index bi = 0, bj = 0;
    cost.minCoeff(&bi, &bj);
    const auto i = static_cast<std::size_t>(bi), j = static_cast<std::size_t>(bj);
    comps[i] = merge_pair(*comps[i], *comps[j]);
    comps[j].reset();
    --alive;
    cost.row(bj).setConstant(inf);
    cost.col(bj).setConstant(inf);
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i || !comps[k]) continue;
      const double c = runnalls_cost(*comps[i], *comps[k]);
      if (k < i) cost(static_cast<Index>(k), bi) = c;
      else cost(bi, static_cast<Index>(k)) = c;
    }
  }
  std::vector<GaussianComponent> out;
  for (auto& c : comps)
    if (c) out.push_back(std::move(*c));
  return GaussianMixture(std::move(out));
}

inline GaussianMixture prune_small_weights(const GaussianMixture& gm, double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw Error("prune_small_weights: eps must lie in [0, 1)");
  if (eps == 0.0) return gm;
  std::vector<GaussianComponent> kept;
  for (const auto& c : gm.components())
    if (c.weight() >= eps) kept.push_back(c);
  if (kept.empty()) throw Error("prune_small_weights: every component fell below eps");
  return GaussianMixture(std::move(kept)).normalized();
}

}  // namespace gmddf
