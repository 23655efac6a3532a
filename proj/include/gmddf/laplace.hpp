#pragma once

#include "gmddf/quotient.hpp"

#include <sstream>

namespace gmddf {

struct LaplaceOptions {
  /// Converged when ‖∇g‖ < grad_tol·max(1, ‖Σ_vr⁻¹(x−μ_vr)‖ + ‖∇log u‖).
  double grad_tol = 1e-8;
  int max_iters = 100;
  bool multi_start = true;
  double ambiguity_nats = 1.0;
  /// Divergence once ‖x − μ_vr‖ exceeds this many numerator standard deviations.
  double divergence_sigmas = 1e6;
};

struct LaplaceComponent {
  Vec mode;
  Mat cov;                ///< inverse Hessian of g at the mode, or Σ_vr when flat
  double g_min = 0.0;     ///< g(x̂) = −log m_vr(x̂)
  double log_pre_weight;  ///< log w̃_vr
  int iterations = 0;
  double grad_norm = 0.0;
  bool flat_fallback = false;
  bool unconverged = false;  ///< max_iters reached or stalled above grad_tol
  bool multimodal = false;      ///< starts converged to distinct modes
  bool mode_ambiguous = false;  ///< a distinct mode lies within ambiguity_nats of the best

  [[nodiscard]] bool flagged() const { return flat_fallback || unconverged || mode_ambiguous; }
};

/// Newton iterates left ‖x − μ_vr‖ unbounded; carries the iterate trace.
class LaplaceDiverged : public Error {
 public:
  LaplaceDiverged(const std::string& what, std::vector<Vec> trace) : Error(what), trace_(std::move(trace)) {}
  [[nodiscard]] const std::vector<Vec>& trace() const noexcept { return trace_; }

 private:
  std::vector<Vec> trace_;
};

/// g(x) = −log N(x; μ_vr, Σ_vr) + log u(x) with its gradient and Hessian.
struct MixandObjective {
  const QuotientMixand& m;

  [[nodiscard]] double value(const Vec& x) const { return -m.numerator.log_density(x) + m.common->log_eval(x); }

  struct Derivatives {
    double log_density;  ///< g itself
    Vec gradient;
    Mat hessian;
    double grad_scale;  ///< magnitude of the two cancelling gradient terms
  };

  [[nodiscard]] Derivatives derivatives(const Vec& x) const {
    const auto u = m.common->log_derivatives(x);
    const Mat& p = m.numerator.precision();
    const Vec pull = p * (x - m.numerator.mean());
    return {-m.numerator.log_density(x) + u.log_density, pull + u.gradient, symmetrized(p + u.hessian), pull.norm() + u.gradient.norm()};
  }
};

namespace detail {

struct NewtonRun {
  Vec x;
  double g;
  Mat hessian;
  double grad_norm;
  int iterations;
  bool spd;
  bool flat;
  bool unconverged;
};

inline bool is_spd(const Mat& h, double* min_eig = nullptr, Vec* min_vec = nullptr) {
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  const double lo = es.eigenvalues()(0);
  const double hi = es.eigenvalues()(es.eigenvalues().size() - 1);
  if (min_eig != nullptr) *min_eig = lo;
  if (min_vec != nullptr) *min_vec = es.eigenvectors().col(0);
  return lo > 0.0 && hi / lo <= kMaxCondition;
}

inline NewtonRun damped_newton(const MixandObjective& obj, Vec x, const LaplaceOptions& opt) {
  const auto& num = obj.m.numerator;
  const Index d = num.dim();
  const double sigma = std::sqrt(num.cov().trace());
  const double bound = opt.divergence_sigmas * sigma;
  std::vector<Vec> trace{x};
  auto check_divergence = [&](const Vec& y) {
    if (!((y - num.mean()).norm() <= bound)) {
      std::ostringstream os;
      os << "Laplace optimization diverged for mixand (" << obj.m.v << ", " << obj.m.r << ") after " << trace.size() << " iterates";
      throw LaplaceDiverged(os.str(), trace);
    }
  };
  double lambda = 0.0;
  auto cur = obj.derivatives(x);
  if (!std::isfinite(cur.log_density)) throw DensityUnderflow("Laplace objective is not finite at the initial point");
  for (int it = 0; it < opt.max_iters; ++it) {
    const double gn = cur.gradient.norm();
    double lo = 0.0;
    Vec lo_vec;
    const bool spd = is_spd(cur.hessian, &lo, &lo_vec);
    if (gn < opt.grad_tol * std::max(1.0, cur.grad_scale)) {
      if (spd) return {x, cur.log_density, cur.hessian, gn, it, true, false, false};
      // saddle or flat: probe along the most negative curvature direction
      const double reach = std::sqrt(lo_vec.dot(num.cov() * lo_vec));
      bool moved = false;
      for (double t = reach; t > 1e-6 * reach && !moved; t *= 0.5) {
        for (double sgn : {1.0, -1.0}) {
          const Vec y = x + sgn * t * lo_vec;
          const double gy = obj.value(y);
          if (gy < cur.log_density - 1e-12 * (1.0 + std::abs(cur.log_density))) {
            x = y;
            moved = true;
            break;
          }
        }
      }
      if (!moved) return {x, cur.log_density, cur.hessian, gn, it, false, true, false};
      trace.push_back(x);
      check_divergence(x);
      cur = obj.derivatives(x);
      continue;
    }
    // λ = 0 while H is SPD; otherwise mirror the most negative eigenvalue
    double shift = spd ? lambda : std::max(lambda, -2.0 * lo + 1e-8 * std::max(1.0, cur.hessian.norm()));
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      const Mat a = cur.hessian + shift * Mat::Identity(d, d);
      Eigen::LLT<Mat> llt(a);
      if (llt.info() == Eigen::Success) {
        const Vec y = x - llt.solve(cur.gradient);
        const double gy = obj.value(y);
        // rounding slack: near the optimum g cannot resolve the remaining decrease
        if (std::isfinite(gy) && gy <= cur.log_density + 1e-13 * (1.0 + std::abs(cur.log_density))) {
          x = y;
          accepted = true;
          break;
        }
      }
      shift = shift == 0.0 ? 1e-8 * std::max(1.0, cur.hessian.norm()) : 2.0 * shift;
    }
    lambda = accepted ? (shift < 1e-6 ? 0.0 : shift * 0.1) : shift;
    trace.push_back(x);
    check_divergence(x);
    if (!accepted) {
      // no descent possible at working precision
      return {x, cur.log_density, cur.hessian, gn, it + 1, spd, !spd, true};
    }
    cur = obj.derivatives(x);
  }
  double lo = 0.0;
  const bool spd = is_spd(cur.hessian, &lo);
  const double gn = cur.gradient.norm();
  return {x, cur.log_density, cur.hessian, gn, opt.max_iters, spd, false, gn >= opt.grad_tol * std::max(1.0, cur.grad_scale)};
}

inline std::vector<Vec> laplace_starts(const QuotientMixand& m, bool multi) {
  std::vector<Vec> starts{m.numerator.mean()};
  if (!multi) return starts;
  Eigen::SelfAdjointEigenSolver<Mat> es(m.numerator.cov());
  for (Index k = 0; k < es.eigenvalues().size(); ++k) {
    const Vec step = std::sqrt(es.eigenvalues()(k)) * es.eigenvectors().col(k);
    starts.push_back(m.numerator.mean() + step);
    starts.push_back(m.numerator.mean() - step);
  }
  if (m.common->is_exact()) {
    for (const auto& t : m.common->exact().components()) {
      const auto ratio = gaussian_ratio(m.numerator, t.mean(), t.precision(), t.log_det());
      if (ratio) starts.push_back(ratio->mean);
    }
  }
  return starts;
}

}  // namespace detail

/// Minimizes g from μ_vr (and optional extra starts), then takes Σ̂ = H⁻¹ at the best mode.
inline LaplaceComponent laplace_mixand(const QuotientMixand& m, const LaplaceOptions& opt = {}) {
  const MixandObjective obj{m};
  const auto starts = detail::laplace_starts(m, opt.multi_start);
  std::vector<detail::NewtonRun> runs;
  runs.push_back(detail::damped_newton(obj, starts.front(), opt));
  // auxiliary starts are exploratory: a diverging one is simply discarded
  for (std::size_t k = 1; k < starts.size(); ++k) {
    try {
      runs.push_back(detail::damped_newton(obj, starts[k], opt));
    } catch (const LaplaceDiverged&) {
    }
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < runs.size(); ++k)
    if (runs[k].g < runs[best].g) best = k;
  const auto& b = runs[best];
  LaplaceComponent out;
  out.mode = b.x;
  out.g_min = b.g;
  out.log_pre_weight = m.log_pre_weight;
  out.iterations = b.iterations;
  out.grad_norm = b.grad_norm;
  out.unconverged = b.unconverged;
  if (b.spd && !b.flat) {
    out.cov = symmetrized(b.hessian.llt().solve(Mat::Identity(m.numerator.dim(), m.numerator.dim())));
  } else {
    out.cov = m.numerator.cov();
    out.flat_fallback = true;
  }
  // distinct modes measured in the numerator metric
  for (std::size_t k = 0; k < runs.size(); ++k) {
    if (k == best || !runs[k].spd) continue;
    const Vec gap = runs[k].x - b.x;
    if (m.numerator.mahalanobis2(m.numerator.mean() + gap) < 0.25) continue;
    out.multimodal = true;
    if (runs[k].g - b.g < opt.ambiguity_nats) out.mode_ambiguous = true;
  }
  return out;
}

/// log of the Laplace zeroth moment w̃·∫m_vr ≈ w̃·e^{−g(x̂)}(2π)^{d/2}|Σ̂|^{1/2}.
inline double laplace_log_mass(const LaplaceComponent& c) {
  const auto d = static_cast<double>(c.mode.size());
  const double log_det = 2.0 * Mat(c.cov.llt().matrixL()).diagonal().array().log().sum();
  return c.log_pre_weight - c.g_min + 0.5 * d * kLog2Pi + 0.5 * log_det;
}

struct LaplaceMoments {
  double log_w0;
  Vec mean;
  Mat cov;
};

inline LaplaceMoments laplace_moment_estimate(const QuotientMixand& m, const LaplaceOptions& opt = {}) {
  const auto c = laplace_mixand(m, opt);
  return {laplace_log_mass(c), c.mode, c.cov};
}

/// Laplace components for every mixand, in parallel. Diverged mixands are collected and reported together.
inline std::vector<LaplaceComponent> laplace_all(const QuotientPosterior& q, const LaplaceOptions& opt = {}) {
  std::vector<std::optional<LaplaceComponent>> out(q.size());
  std::vector<std::string> errors(q.size());
  parallel_for(q.size(), [&](std::size_t k) {
    try {
      out[k] = laplace_mixand(q[k], opt);
    } catch (const Error& e) {
      errors[k] = e.what();
    }
  });
  std::ostringstream bad;
  for (std::size_t k = 0; k < q.size(); ++k)
    if (!out[k]) bad << " " << k << " (" << errors[k] << ")";
  if (!bad.str().empty()) throw Error("Laplace optimization failed for mixands:" + bad.str());
  std::vector<LaplaceComponent> res;
  for (auto& c : out) res.push_back(std::move(*c));
  return res;
}

/// Proposal mixture N(x̂_vr, Σ̂_vr) weighted by the renormalized pre-weights w̃_vr.
inline GaussianMixture laplace_gm_proposal(const QuotientPosterior& q, const std::vector<LaplaceComponent>& comps) {
  std::vector<double> lw;
  for (const auto& c : comps) lw.push_back(c.log_pre_weight);
  const double total = log_sum_exp(lw);
  std::vector<GaussianComponent> gs;
  for (std::size_t k = 0; k < comps.size(); ++k) gs.emplace_back(std::exp(lw[k] - total), comps[k].mode, comps[k].cov);
  (void)q;
  return GaussianMixture(std::move(gs));
}

inline GaussianMixture laplace_gm_proposal(const QuotientPosterior& q, const LaplaceOptions& opt = {}) {
  return laplace_gm_proposal(q, laplace_all(q, opt));
}

/// Non-sampling baseline: each mixand replaced by its Laplace Gaussian, weighted by its Laplace mass.
inline GaussianMixture laplace_mixture(const QuotientPosterior& q, const LaplaceOptions& opt = {}, Flags* flags = nullptr) {
  const auto comps = laplace_all(q, opt);
  std::vector<double> lw;
  std::size_t n_flag = 0;
  for (const auto& c : comps) {
    lw.push_back(laplace_log_mass(c));
    if (c.flagged()) ++n_flag;
  }
  if (n_flag > 0) add_flag(flags, "laplace_flagged_mixands=" + std::to_string(n_flag));
  const double total = log_sum_exp(lw);
  if (!std::isfinite(total)) throw Error("laplace_mixture: all Laplace masses vanish");
  std::vector<GaussianComponent> gs;
  for (std::size_t k = 0; k < comps.size(); ++k) gs.emplace_back(std::exp(lw[k] - total), comps[k].mode, comps[k].cov);
  return GaussianMixture(std::move(gs));
}

}  // namespace gmddf
