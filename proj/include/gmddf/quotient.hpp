#pragma once

#include "gmddf/gaussian.hpp"

#include <memory>
#include <optional>
#include <variant>

namespace gmddf {

/// Exact fusion: u is the common-information mixture itself.
struct ExactGM {
  GaussianMixture gm;
};

/// Conservative fusion: u = p_i^{1−ω} p_j^{ω}, so p_i p_j / u = p_i^{ω} p_j^{1−ω}.
/// Never materialized as a mixture; only evaluated pointwise.
struct WepPower {
  GaussianMixture p_i;
  GaussianMixture p_j;
  double omega;
};

class CommonInfo {
 public:
  explicit CommonInfo(ExactGM e) : v_(std::move(e)) {
    const auto& gm = std::get<ExactGM>(v_).gm;
    if (gm.empty() || !gm.is_normalized(1e-8)) throw Error("exact common information must be a normalized mixture");
  }
  explicit CommonInfo(WepPower w) : v_(std::move(w)) {
    const auto& wp = std::get<WepPower>(v_);
    if (!(wp.omega >= 0.0 && wp.omega <= 1.0)) throw Error("WEP weight omega must lie in [0, 1]");
    if (wp.p_i.dim() != wp.p_j.dim()) throw DimensionMismatch("WEP common information: p_i and p_j dimensions differ");
  }

  [[nodiscard]] bool is_exact() const noexcept { return std::holds_alternative<ExactGM>(v_); }
  [[nodiscard]] const GaussianMixture& exact() const {
    if (!is_exact()) throw Error("common information is not an exact mixture");
    return std::get<ExactGM>(v_).gm;
  }
  [[nodiscard]] const WepPower& wep() const {
    if (is_exact()) throw Error("common information is not a WEP power");
    return std::get<WepPower>(v_);
  }
  [[nodiscard]] Index dim() const { return is_exact() ? exact().dim() : wep().p_i.dim(); }

  [[nodiscard]] double log_eval(const Vec& x) const {
    if (is_exact()) return exact().log_pdf(x);
    const auto& w = wep();
    // exponent endpoints skip the unused factor so 0·(−∞) never appears
    if (w.omega == 0.0) return w.p_i.log_pdf(x);
    if (w.omega == 1.0) return w.p_j.log_pdf(x);
    return (1.0 - w.omega) * w.p_i.log_pdf(x) + w.omega * w.p_j.log_pdf(x);
  }

  /// Gradient and Hessian of log u.
  [[nodiscard]] LogDerivatives log_derivatives(const Vec& x) const {
    if (is_exact()) return gm_log_derivatives(exact(), x);
    const auto& w = wep();
    if (w.omega == 0.0) return gm_log_derivatives(w.p_i, x);
    if (w.omega == 1.0) return gm_log_derivatives(w.p_j, x);
    const auto a = gm_log_derivatives(w.p_i, x);
    const auto b = gm_log_derivatives(w.p_j, x);
    const double o = w.omega;
    return {(1 - o) * a.log_density + o * b.log_density, (1 - o) * a.gradient + o * b.gradient,
            symmetrized((1 - o) * a.hessian + o * b.hessian)};
  }

 private:
  std::variant<ExactGM, WepPower> v_;
};

using CommonInfoPtr = std::shared_ptr<const CommonInfo>;

inline CommonInfoPtr make_exact_common(GaussianMixture gm) { return std::make_shared<const CommonInfo>(ExactGM{std::move(gm)}); }

inline CommonInfoPtr make_wep_common(GaussianMixture p_i, GaussianMixture p_j, double omega) {
  return std::make_shared<const CommonInfo>(WepPower{std::move(p_i), std::move(p_j), omega});
}

/// One term N(x; μ_vr, Σ_vr)/u(x) of the fusion posterior, with analytic pre-weight w̃ = w_v w_r z̄.
struct QuotientMixand {
  std::size_t v = 0;
  std::size_t r = 0;
  GaussianComponent numerator;  ///< weight 1
  double log_pre_weight;        ///< log w̃; −∞ for an exactly zero pre-weight
  CommonInfoPtr common;
  std::optional<Mat> source_cov_v;  ///< Σ_v, Σ_r when built from source mixtures
  std::optional<Mat> source_cov_r;

  [[nodiscard]] double pre_weight() const { return std::exp(log_pre_weight); }

  /// log m_vr(x). An underflowed u is clamped at exp(−700) and reported through `clamped`.
  [[nodiscard]] double log_eval(const Vec& x, bool* clamped = nullptr) const {
    double lu = common->log_eval(x);
    if (std::isnan(lu)) throw DensityUnderflow("mixand_eval: common-information density is not evaluable");
    if (!std::isfinite(lu)) {
      if (clamped != nullptr) *clamped = true;
      lu = kLogUnderflow;
    }
    return numerator.log_density(x) - lu;
  }
};

inline double mixand_log_eval(const QuotientMixand& m, const Vec& x, bool* clamped = nullptr) { return m.log_eval(x, clamped); }
inline double mixand_eval(const QuotientMixand& m, const Vec& x) { return std::exp(m.log_eval(x)); }

/// Σ_vr w̃_vr m_vr(x): the unnormalized fusion posterior.
class QuotientPosterior {
 public:
  QuotientPosterior(std::vector<QuotientMixand> mixands, CommonInfoPtr common) : mixands_(std::move(mixands)), common_(std::move(common)) {
    if (mixands_.empty()) throw Error("quotient posterior has no mixands");
    for (const auto& m : mixands_)
      if (m.common != common_) throw Error("all quotient mixands must share one common-information density");
  }

  [[nodiscard]] const std::vector<QuotientMixand>& mixands() const noexcept { return mixands_; }
  [[nodiscard]] const QuotientMixand& operator[](std::size_t k) const { return mixands_[k]; }
  [[nodiscard]] std::size_t size() const noexcept { return mixands_.size(); }
  [[nodiscard]] const CommonInfoPtr& common() const noexcept { return common_; }
  [[nodiscard]] Index dim() const { return mixands_.front().numerator.dim(); }

  /// log Σ w̃ N_vr(x): the numerator mixture, without dividing by u.
  [[nodiscard]] double log_numerator(const Vec& x) const {
    thread_local std::vector<double> terms;
    terms.resize(mixands_.size());
    for (std::size_t k = 0; k < mixands_.size(); ++k)
      terms[k] = mixands_[k].log_pre_weight + mixands_[k].numerator.log_density(x);
    return log_sum_exp(terms);
  }

  [[nodiscard]] double log_eval(const Vec& x) const { return log_numerator(x) - common_->log_eval(x); }

  /// Pre-weights normalized to one.
  [[nodiscard]] std::vector<double> normalized_pre_weights() const {
    std::vector<double> lw;
    for (const auto& m : mixands_) lw.push_back(m.log_pre_weight);
    const double total = log_sum_exp(lw);
    std::vector<double> w;
    for (double l : lw) w.push_back(std::exp(l - total));
    return w;
  }

  /// The numerator Gaussians as a normalized mixture weighted by w̃.
  [[nodiscard]] GaussianMixture numerator_mixture() const {
    const auto w = normalized_pre_weights();
    std::vector<GaussianComponent> comps;
    for (std::size_t k = 0; k < mixands_.size(); ++k) comps.push_back(mixands_[k].numerator.with_weight(w[k]));
    return GaussianMixture(std::move(comps));
  }

  /// Posterior built directly from a weighted Gaussian numerator mixture over a shared u.
  static QuotientPosterior from_numerators(const GaussianMixture& numer, CommonInfoPtr common) {
    std::vector<QuotientMixand> ms;
    for (std::size_t k = 0; k < numer.size(); ++k) {
      const auto& c = numer[k];
      const double lw = c.weight() > 0.0 ? std::log(c.weight()) : -std::numeric_limits<double>::infinity();
      ms.push_back({k, 0, c.with_weight(1.0), lw, common, std::nullopt, std::nullopt});
    }
    return QuotientPosterior(std::move(ms), std::move(common));
  }

 private:
  std::vector<QuotientMixand> mixands_;
  CommonInfoPtr common_;
};

inline QuotientPosterior expand_quotient(const GaussianMixture& p_i, const GaussianMixture& p_j, CommonInfoPtr u) {
  if (p_i.dim() != p_j.dim() || p_i.dim() != u->dim()) throw DimensionMismatch("expand_quotient: dimension mismatch");
  std::vector<QuotientMixand> ms;
  ms.reserve(p_i.size() * p_j.size());
  for (std::size_t v = 0; v < p_i.size(); ++v) {
    for (std::size_t r = 0; r < p_j.size(); ++r) {
      const auto& a = p_i[v];
      const auto& b = p_j[r];
      auto prod = gaussian_product(a, b);
      const double lw = (a.weight() > 0.0 && b.weight() > 0.0) ? std::log(a.weight()) + std::log(b.weight()) + prod.log_zbar
                                                              : -std::numeric_limits<double>::infinity();
      ms.push_back({v, r, std::move(prod.component), lw, u, a.cov(), b.cov()});
    }
  }
  return QuotientPosterior(std::move(ms), std::move(u));
}

// ---- Gaussian ratio N_num(x)/N_den(x) ----

struct GaussianRatio {
  Vec mean;             ///< Σ#(P_num μ_num − P_den μ_den)
  Mat precision;        ///< P_num − P_den (possibly clamped)
  double log_integral;  ///< log ∫ N_num/N_den dx
  bool clamped = false;
};

/**
 * Closed-form ratio of two Gaussians. Returns nullopt when P_num − P_den is not
 * SPD unless `clamp_rel` > 0, in which case eigenvalues are raised to
 * clamp_rel·(largest eigenvalue).
 */
inline std::optional<GaussianRatio> gaussian_ratio(const GaussianComponent& num, const Vec& den_mean, const Mat& den_prec,
                                                   double den_log_det, double clamp_rel = 0.0) {
  const Index d = num.dim();
  Mat p = symmetrized(num.precision() - den_prec);
  Eigen::SelfAdjointEigenSolver<Mat> es(p);
  const double hi = es.eigenvalues().maxCoeff();
  const double lo = es.eigenvalues().minCoeff();
  bool clamped = false;
  // Reject near-singular differences as well: they integrate to an astronomically loose value.
  if (!(lo > 1e-12 * std::max(hi, 0.0))) {
    if (clamp_rel <= 0.0 || !(hi > 0.0)) return std::nullopt;
    p = eigen_floored(p, clamp_rel * hi);
    clamped = true;
  }
  Eigen::LLT<Mat> llt(p);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Vec b = num.precision() * num.mean() - den_prec * den_mean;
  const Vec mu = llt.solve(b);
  const double log_det_sigma_sharp = -2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
  const double quad_num = num.mean().dot(num.precision() * num.mean());
  const double quad_den = den_mean.dot(den_prec * den_mean);
  const double log_int = 0.5 * (den_log_det - num.log_det()) + 0.5 * b.dot(mu) - 0.5 * quad_num + 0.5 * quad_den +
                         0.5 * static_cast<double>(d) * kLog2Pi + 0.5 * log_det_sigma_sharp;
  return GaussianRatio{mu, p, log_int, clamped};
}

/// The common component t minimizing log ∫N_vr/N_t − log w_t, with its closed-form ratio.
struct BoundRatio {
  std::size_t t;
  double log_bound;  ///< log ∫N_vr/N_t − log w_t, excluding the pre-weight
  GaussianRatio ratio;
};

inline std::optional<BoundRatio> best_bound_ratio(const QuotientMixand& m) {
  const auto& u = m.common->exact();
  std::optional<BoundRatio> best;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const auto& t = u[k];
    if (t.weight() <= 0.0) continue;
    auto ratio = gaussian_ratio(m.numerator, t.mean(), t.precision(), t.log_det());
    if (!ratio) continue;
    const double b = ratio->log_integral - std::log(t.weight());
    if (!best || b < best->log_bound) best = BoundRatio{k, b, std::move(*ratio)};
  }
  return best;
}

/**
 * Upper bound on the true posterior weight w̃·∫m_vr dx, using u ≥ w_t N_t for each
 * common component t. Returns log of the bound; +∞ when no component gives an
 * integrable ratio.
 */
inline double log_weight_upper_bound(const QuotientMixand& m) {
  const auto best = best_bound_ratio(m);
  return best ? m.log_pre_weight + best->log_bound : std::numeric_limits<double>::infinity();
}

inline double weight_upper_bound(const QuotientMixand& m) { return std::exp(log_weight_upper_bound(m)); }

/// Keeps mixands whose bound is at least threshold·(largest finite bound). Infinite bounds and the
/// argmax set are always kept, so any threshold above one leaves exactly those.
inline QuotientPosterior prune_by_bound(const QuotientPosterior& q, double threshold) {
  if (!(threshold >= 0.0)) throw Error("prune_by_bound: threshold must be nonnegative");
  if (!q.common()->is_exact()) throw Error("prune_by_bound requires exact common information");
  if (threshold == 0.0) return q;
  std::vector<double> lb(q.size());
  parallel_for(q.size(), [&](std::size_t k) { lb[k] = log_weight_upper_bound(q[k]); });
  double best = -std::numeric_limits<double>::infinity();
  for (double b : lb)
    if (std::isfinite(b)) best = std::max(best, b);
  const double cut = best + std::log(threshold);
  std::vector<QuotientMixand> kept;
  for (std::size_t k = 0; k < q.size(); ++k) {
    const bool finite_max = std::isfinite(best);
    if (lb[k] == std::numeric_limits<double>::infinity() || (finite_max && (lb[k] >= cut || lb[k] == best))) kept.push_back(q[k]);
  }
  if (kept.empty()) throw Error("prune_by_bound: threshold removed every mixand; lower the threshold");
  return QuotientPosterior(std::move(kept), q.common());
}

// ---- closed-form baselines ----

namespace detail {
/// Normalizes log weights with log-sum-exp and builds the mixture.
inline GaussianMixture mixture_from_log_weights(const std::vector<double>& log_w, std::vector<Vec> means, std::vector<Mat> covs) {
  const double total = log_sum_exp(log_w);
  if (!std::isfinite(total)) throw Error("all fused component weights vanish");
  std::vector<GaussianComponent> comps;
  comps.reserve(log_w.size());
  for (std::size_t k = 0; k < log_w.size(); ++k) comps.emplace_back(std::exp(log_w[k] - total), std::move(means[k]), std::move(covs[k]));
  return GaussianMixture(std::move(comps));
}
}  // namespace detail

inline GaussianMixture naive_bayes_fuse(const GaussianMixture& p_i, const GaussianMixture& p_j) {
  if (p_i.dim() != p_j.dim()) throw DimensionMismatch("naive_bayes_fuse: dimension mismatch");
  std::vector<double> lw;
  std::vector<Vec> means;
  std::vector<Mat> covs;
  for (const auto& a : p_i.components()) {
    for (const auto& b : p_j.components()) {
      const auto prod = gaussian_product(a, b);
      lw.push_back(std::log(a.weight()) + std::log(b.weight()) + prod.log_zbar);
      means.push_back(prod.component.mean());
      covs.push_back(prod.component.cov());
    }
  }
  return detail::mixture_from_log_weights(lw, std::move(means), std::move(covs));
}

/// Relative eigenvalue floor applied to indefinite MMGD result precisions.
inline constexpr double kMmgdClamp = 1e-6;

/**
 * Replaces p_c by its moment-matched Gaussian and divides exactly. Components whose
 * quotient precision is indefinite are clamped and reported in `flags`.
 */
inline GaussianMixture mmgd_fuse(const GaussianMixture& p_i, const GaussianMixture& p_j, const GaussianMixture& p_c, Flags* flags = nullptr) {
  if (p_i.dim() != p_j.dim() || p_i.dim() != p_c.dim()) throw DimensionMismatch("mmgd_fuse: dimension mismatch");
  const Moments mom = mixture_moments(p_c);
  const GaussianComponent den(1.0, mom.mean, mom.cov);
  std::vector<double> lw;
  std::vector<Vec> means;
  std::vector<Mat> covs;
  std::size_t n_clamped = 0;
  for (const auto& a : p_i.components()) {
    for (const auto& b : p_j.components()) {
      const auto prod = gaussian_product(a, b);
      const auto ratio = gaussian_ratio(prod.component, den.mean(), den.precision(), den.log_det(), kMmgdClamp);
      if (!ratio) {
        ++n_clamped;
        continue;
      }
      if (ratio->clamped) ++n_clamped;
      lw.push_back(std::log(a.weight()) + std::log(b.weight()) + prod.log_zbar + ratio->log_integral);
      means.push_back(ratio->mean);
      covs.push_back(symmetrized(Mat(ratio->precision.llt().solve(Mat::Identity(p_i.dim(), p_i.dim())))));
    }
  }
  if (lw.empty()) throw Error("mmgd_fuse: every quotient component is indefinite");
  if (n_clamped > 0) add_flag(flags, "mmgd_clamped_components=" + std::to_string(n_clamped));
  return detail::mixture_from_log_weights(lw, std::move(means), std::move(covs));
}

/// Pairwise precision blend ωP_q + (1−ω)P_r with weights w_q^ω w_r^{1−ω}.
inline GaussianMixture foci_fuse(const GaussianMixture& p_i, const GaussianMixture& p_j, double omega) {
  if (!(omega >= 0.0 && omega <= 1.0)) throw Error("foci_fuse: omega must lie in [0, 1]");
  if (p_i.dim() != p_j.dim()) throw DimensionMismatch("foci_fuse: dimension mismatch");
  const Index d = p_i.dim();
  auto scaled_log = [](double coef, double w) { return coef == 0.0 ? 0.0 : coef * std::log(w); };
  std::vector<double> lw;
  std::vector<Vec> means;
  std::vector<Mat> covs;
  for (const auto& a : p_i.components()) {
    for (const auto& b : p_j.components()) {
      const Mat prec = symmetrized(omega * a.precision() + (1.0 - omega) * b.precision());
      Eigen::LLT<Mat> llt(prec);
      if (llt.info() != Eigen::Success) throw InvalidCovariance("foci_fuse: blended precision is not positive definite");
      const Mat cov = symmetrized(llt.solve(Mat::Identity(d, d)));
      const Vec mean = llt.solve(omega * a.precision() * a.mean() + (1.0 - omega) * b.precision() * b.mean());
      lw.push_back(scaled_log(omega, a.weight()) + scaled_log(1.0 - omega, b.weight()));
      means.push_back(mean);
      covs.push_back(cov);
    }
  }
  return detail::mixture_from_log_weights(lw, std::move(means), std::move(covs));
}

}  // namespace gmddf
