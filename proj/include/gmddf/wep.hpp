#pragma once

#include "gmddf/golden_section.hpp"
#include "gmddf/sampling.hpp"

namespace gmddf {

namespace detail {
/// ω·l with the convention 0·(−∞) = 0, so endpoint exponents drop the unused factor.
inline double scaled(double coef, double l) { return coef == 0.0 ? 0.0 : coef * l; }
}  // namespace detail

/// ω log p_i(x) + (1−ω) log p_j(x).
inline double wep_log_eval(const GaussianMixture& p_i, const GaussianMixture& p_j, double omega, const Vec& x) {
  if (!(omega >= 0.0 && omega <= 1.0)) throw Error("wep_eval: omega must lie in [0, 1]");
  const double li = p_i.log_pdf(x);
  const double lj = p_j.log_pdf(x);
  if (!std::isfinite(li) && !std::isfinite(lj)) throw DensityUnderflow("wep_eval: both densities underflow");
  return detail::scaled(omega, li) + detail::scaled(1.0 - omega, lj);
}

inline double wep_eval(const GaussianMixture& p_i, const GaussianMixture& p_j, double omega, const Vec& x) {
  return std::exp(wep_log_eval(p_i, p_j, omega, x));
}

enum class WepRule { Chernoff, Minimax };

inline const char* to_string(WepRule r) { return r == WepRule::Chernoff ? "chernoff" : "minimax"; }

struct WepObjective {
  WepRule rule = WepRule::Minimax;
  double kappa = 0.0;  ///< E_NB[log(p_j/p_i)], minimax only
};

/// log θ_s(ω) from the cached log p_i, log p_j and log q; never touches p_i or p_j.
inline Vec wep_log_weights(const WeightedSampleSet& set, double omega) {
  Vec out(set.log_q.size());
  for (Index s = 0; s < out.size(); ++s)
    out(s) = detail::scaled(omega, set.log_pi(s)) + detail::scaled(1.0 - omega, set.log_pj(s)) - set.log_q(s);
  return out;
}

/// Σ_s θ_s(ω): the sampled Chernoff objective.
inline double chernoff_sum(const WeightedSampleSet& set, double omega) {
  return wep_log_weights(set, omega).array().exp().sum();
}

/// The minimized objective: log Σθ, plus ω·κ for the minimax rule.
inline double wep_objective(const WeightedSampleSet& set, const WepObjective& obj, double omega) {
  const Vec lw = wep_log_weights(set, omega);
  const double base = log_sum_exp(std::span<const double>(lw.data(), static_cast<std::size_t>(lw.size())));
  return obj.rule == WepRule::Minimax ? base + omega * obj.kappa : base;
}

/// Self-normalized estimate of E_NB[log(p_j/p_i)] from proposal samples.
inline double estimate_kappa(const WeightedSampleSet& set) {
  const Vec la = set.log_pi + set.log_pj - set.log_q;
  const double peak = la.maxCoeff();
  if (!std::isfinite(peak)) throw Error("kappa estimate: naive-Bayes density vanishes at every sample");
  double num = 0.0, den = 0.0;
  for (Index s = 0; s < la.size(); ++s) {
    const double a = std::exp(la(s) - peak);
    if (a == 0.0) continue;
    num += a * (set.log_pj(s) - set.log_pi(s));
    den += a;
  }
  return num / den;
}

struct OmegaResult {
  double omega;
  WepObjective objective;
  WeightedSampleSet samples;  ///< log_theta set at ω*
  double ess;
};

/**
 * Samples a FOCI(ω̄ = 0.5) proposal once, caches log p_i, log p_j, log q, then
 * golden-section searches ω over [0, 1] by reweighting the cached values only.
 */
inline OmegaResult optimize_omega(const GaussianMixture& p_i, const GaussianMixture& p_j, WepRule rule, std::size_t n, Rng& rng,
                                  double tol = 1e-3) {
  if (n < 100) throw Error("optimize_omega: need at least 100 samples");
  if (!(tol > 0.0 && tol <= 0.1)) throw Error("optimize_omega: tolerance must lie in (0, 0.1]");
  if (p_i.dim() != p_j.dim()) throw DimensionMismatch("optimize_omega: dimension mismatch");
  const auto q = foci_fuse(p_i, p_j, 0.5);
  WeightedSampleSet set;
  set.points = gm_sample(q, n, rng);
  const auto ns = static_cast<Index>(n);
  set.log_q.resize(ns);
  set.log_pi.resize(ns);
  set.log_pj.resize(ns);
  for (Index s = 0; s < ns; ++s) {
    const Vec x = set.points.col(s);
    set.log_q(s) = q.log_pdf(x);
    set.log_pi(s) = p_i.log_pdf(x);
    set.log_pj(s) = p_j.log_pdf(x);
  }
  WepObjective obj{rule, 0.0};
  if (rule == WepRule::Minimax) obj.kappa = estimate_kappa(set);
  const auto f = [&](double w) { return wep_objective(set, obj, w); };
  if (!std::isfinite(f(0.0)) && !std::isfinite(f(1.0))) throw Error("optimize_omega: objective is not finite at either end of [0, 1]");
  const double omega = golden_section_minimize(f, 0.0, 1.0, tol);
  set.log_theta = wep_log_weights(set, omega);
  const double e = ess_from_log(set.log_theta);
  return {omega, obj, std::move(set), e};
}

}  // namespace gmddf
