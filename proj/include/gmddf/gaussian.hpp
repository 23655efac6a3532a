#pragma once

#include "gmddf/core.hpp"

#include <sstream>
#include <utility>

namespace gmddf {

/// Largest covariance condition number accepted at construction.
inline constexpr double kMaxCondition = 1e12;

/**
 * One weighted Gaussian term. Immutable after construction; the Cholesky factor,
 * precision and log-determinant are computed once here because evaluation dominates.
 */
class GaussianComponent {
 public:
  GaussianComponent(double weight, Vec mean, Mat cov) : weight_(weight), mean_(std::move(mean)), cov_(std::move(cov)) {
    validate_and_factor();
  }

  [[nodiscard]] double weight() const noexcept { return weight_; }
  [[nodiscard]] const Vec& mean() const noexcept { return mean_; }
  [[nodiscard]] const Mat& cov() const noexcept { return cov_; }
  [[nodiscard]] const Mat& precision() const noexcept { return precision_; }
  [[nodiscard]] const Mat& chol_lower() const noexcept { return lower_; }
  [[nodiscard]] double log_det() const noexcept { return log_det_; }
  [[nodiscard]] Index dim() const noexcept { return mean_.size(); }

  [[nodiscard]] GaussianComponent with_weight(double w) const {
    GaussianComponent c = *this;
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error("component weight must be finite and nonnegative");
    c.weight_ = w;
    return c;
  }

  /// Squared Mahalanobis distance of x from the mean.
  [[nodiscard]] double mahalanobis2(const Vec& x) const {
    const Vec z = lower_.triangularView<Eigen::Lower>().solve(x - mean_);
    return z.squaredNorm();
  }

  /// log N(x; mean, cov), ignoring the weight.
  [[nodiscard]] double log_density(const Vec& x) const {
    return -0.5 * (static_cast<double>(dim()) * kLog2Pi + log_det_ + mahalanobis2(x));
  }

 private:
  void validate_and_factor() {
    const Index d = mean_.size();
    if (d == 0) throw DimensionMismatch("Gaussian component must have dimension >= 1");
    if (cov_.rows() != d || cov_.cols() != d) {
      std::ostringstream os;
      os << "covariance is " << cov_.rows() << "x" << cov_.cols() << " but mean has length " << d;
      throw DimensionMismatch(os.str());
    }
    if (!(weight_ >= 0.0) || !std::isfinite(weight_)) throw Error("component weight must be finite and nonnegative");
    if (!mean_.allFinite() || !cov_.allFinite()) throw InvalidCovariance("non-finite mean or covariance entry");
    const double scale = cov_.cwiseAbs().maxCoeff();
    if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1e-300))
      throw InvalidCovariance("covariance is not symmetric");
    cov_ = symmetrized(cov_);
    Eigen::SelfAdjointEigenSolver<Mat> es(cov_, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) throw InvalidCovariance("covariance is not positive definite");
    if (hi / lo > kMaxCondition) {
      std::ostringstream os;
      os << "covariance condition number " << hi / lo << " exceeds " << kMaxCondition;
      throw InvalidCovariance(os.str());
    }
    Eigen::LLT<Mat> llt(cov_);
    if (llt.info() != Eigen::Success) throw InvalidCovariance("Cholesky factorization failed");
    lower_ = llt.matrixL();
    log_det_ = 2.0 * lower_.diagonal().array().log().sum();
    precision_ = symmetrized(llt.solve(Mat::Identity(d, d)));
  }

  double weight_;
  Vec mean_;
  Mat cov_;
  Mat lower_;
  Mat precision_;
  double log_det_ = 0.0;
};

/// Weighted list of Gaussian components sharing one dimension (Σ w = 1 in normalized form).
class GaussianMixture {
 public:
  GaussianMixture() = default;

  explicit GaussianMixture(std::vector<GaussianComponent> components) : components_(std::move(components)) {
    if (components_.empty()) throw Error("Gaussian mixture needs at least one component");
    const Index d = components_.front().dim();
    for (const auto& c : components_)
      if (c.dim() != d) throw DimensionMismatch("mixture components have different dimensions");
  }

  [[nodiscard]] std::size_t size() const noexcept { return components_.size(); }
  [[nodiscard]] bool empty() const noexcept { return components_.empty(); }
  [[nodiscard]] Index dim() const noexcept { return components_.empty() ? 0 : components_.front().dim(); }
  [[nodiscard]] const std::vector<GaussianComponent>& components() const noexcept { return components_; }
  [[nodiscard]] const GaussianComponent& operator[](std::size_t i) const { return components_[i]; }

  [[nodiscard]] double weight_sum() const {
    double s = 0.0;
    for (const auto& c : components_) s += c.weight();
    return s;
  }

  [[nodiscard]] bool is_normalized(double tol = 1e-10) const { return std::abs(weight_sum() - 1.0) <= tol; }

  [[nodiscard]] GaussianMixture normalized() const {
    const double s = weight_sum();
    if (!(s > 0.0) || !std::isfinite(s)) throw Error("cannot normalize a mixture with zero or non-finite total weight");
    std::vector<GaussianComponent> out;
    out.reserve(size());
    for (const auto& c : components_) out.push_back(c.with_weight(c.weight() / s));
    return GaussianMixture(std::move(out));
  }

  /// log Σ w_q N(x; μ_q, Σ_q) via log-sum-exp; zero-weight terms are skipped.
  [[nodiscard]] double log_pdf(const Vec& x) const {
    check_point(x);
    double peak = -std::numeric_limits<double>::infinity();
    thread_local std::vector<double> terms;
    terms.clear();
    for (const auto& c : components_) {
      if (c.weight() <= 0.0) continue;
      const double t = std::log(c.weight()) + c.log_density(x);
      terms.push_back(t);
      peak = std::max(peak, t);
    }
    if (terms.empty() || !std::isfinite(peak)) return -std::numeric_limits<double>::infinity();
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - peak);
    return peak + std::log(acc);
  }

  [[nodiscard]] double pdf(const Vec& x) const { return std::exp(log_pdf(x)); }

  void check_point(const Vec& x) const {
    if (x.size() != dim()) {
      std::ostringstream os;
      os << "point has dimension " << x.size() << " but mixture has dimension " << dim();
      throw DimensionMismatch(os.str());
    }
  }

 private:
  std::vector<GaussianComponent> components_;
};

inline GaussianMixture single_gaussian(const Vec& mean, const Mat& cov) {
  return GaussianMixture({GaussianComponent(1.0, mean, cov)});
}

// ---- evaluation ----

inline double gm_eval(const GaussianMixture& gm, const Vec& x) { return gm.pdf(x); }
inline double gm_log_eval(const GaussianMixture& gm, const Vec& x) { return gm.log_pdf(x); }

// ---- sampling ----

/// Draws n points (as columns). Categorical pick on the weights, then a Gaussian draw.
inline Mat gm_sample(const GaussianMixture& gm, std::size_t n, Rng& rng) {
  if (!gm.is_normalized(1e-8)) throw Error("gm_sample requires a normalized mixture");
  const Index d = gm.dim();
  Mat out(d, static_cast<Index>(n));
  std::vector<double> cumulative;
  cumulative.reserve(gm.size());
  double acc = 0.0;
  for (const auto& c : gm.components()) {
    acc += c.weight();
    cumulative.push_back(acc);
  }
  for (std::size_t s = 0; s < n; ++s) {
    const double u = uniform01(rng) * acc;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t q = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), gm.size() - 1);
    // skip zero-weight components hit by the clamp
    while (gm[q].weight() <= 0.0 && q > 0) --q;
    const auto& c = gm[q];
    out.col(static_cast<Index>(s)) = c.mean() + c.chol_lower() * standard_normal(d, rng);
  }
  return out;
}

// ---- products and moments ----

struct ProductResult {
  GaussianComponent component;  ///< normalized product Gaussian, weight 1
  double log_zbar;              ///< log N(μ_a; μ_b, Σ_a + Σ_b)

  [[nodiscard]] double zbar() const { return std::exp(log_zbar); }
};

/**
 * N(x; μ_a, Σ_a)·N(x; μ_b, Σ_b) = z̄·N(x; μ_ab, Σ_ab). Evaluated through the
 * factor of Σ_a + Σ_b so neither input precision is formed explicitly.
 */
inline ProductResult gaussian_product(const GaussianComponent& a, const GaussianComponent& b) {
  if (a.dim() != b.dim()) throw DimensionMismatch("gaussian_product: dimension mismatch");
  const Index d = a.dim();
  const Mat sum = a.cov() + b.cov();
  Eigen::LLT<Mat> llt(sum);
  if (llt.info() != Eigen::Success) throw InvalidCovariance("gaussian_product: singular covariance sum");
  const Mat lower = llt.matrixL();
  const Vec diff = a.mean() - b.mean();
  const Vec white = lower.triangularView<Eigen::Lower>().solve(diff);
  const double log_det_sum = 2.0 * lower.diagonal().array().log().sum();
  const double log_zbar = -0.5 * (static_cast<double>(d) * kLog2Pi + log_det_sum + white.squaredNorm());
  // Σ_ab = Σ_a (Σ_a+Σ_b)^{-1} Σ_b ; μ_ab = Σ_b (Σ_a+Σ_b)^{-1} μ_a + Σ_a (Σ_a+Σ_b)^{-1} μ_b
  const Mat cov = symmetrized(a.cov() * llt.solve(b.cov()));
  const Vec mean = b.cov() * llt.solve(a.mean()) + a.cov() * llt.solve(b.mean());
  return {GaussianComponent(1.0, mean, cov), log_zbar};
}

struct Moments {
  Vec mean;
  Mat cov;
};

inline Moments mixture_moments(const GaussianMixture& gm) {
  if (gm.empty()) throw Error("mixture_moments: empty mixture");
  const double total = gm.weight_sum();
  if (!(total > 0.0)) throw Error("mixture_moments: zero total weight");
  const Index d = gm.dim();
  Vec mean = Vec::Zero(d);
  for (const auto& c : gm.components()) mean += (c.weight() / total) * c.mean();
  Mat cov = Mat::Zero(d, d);
  for (const auto& c : gm.components()) {
    const Vec dev = c.mean() - mean;
    cov += (c.weight() / total) * (c.cov() + dev * dev.transpose());
  }
  return {mean, symmetrized(cov)};
}

struct LogDerivatives {
  double log_density;
  Vec gradient;
  Mat hessian;
};

/**
 * log p, ∇log p and ∇²log p for a mixture. With responsibilities r_q and
 * g_q = Σ_q⁻¹(μ_q − x):  ∇ = Σ r_q g_q,  ∇² = Σ r_q (g_q g_qᵀ − Σ_q⁻¹) − ∇∇ᵀ.
 */
inline LogDerivatives gm_log_derivatives(const GaussianMixture& gm, const Vec& x) {
  gm.check_point(x);
  const Index d = gm.dim();
  std::vector<double> logs;
  logs.reserve(gm.size());
  for (const auto& c : gm.components())
    logs.push_back(c.weight() > 0.0 ? std::log(c.weight()) + c.log_density(x) : -std::numeric_limits<double>::infinity());
  const double log_p = log_sum_exp(logs);
  if (!std::isfinite(log_p)) throw DensityUnderflow("gm_log_derivatives: mixture density underflows at the query point");
  Vec grad = Vec::Zero(d);
  Mat second = Mat::Zero(d, d);
  for (std::size_t q = 0; q < gm.size(); ++q) {
    const double r = std::exp(logs[q] - log_p);
    if (r == 0.0) continue;
    const auto& c = gm[q];
    const Vec g = c.precision() * (c.mean() - x);
    grad += r * g;
    second += r * (g * g.transpose() - c.precision());
  }
  Mat hess = symmetrized(second - grad * grad.transpose());
  return {log_p, grad, hess};
}

/**
 * Bayes update of a mixture by a linear-Gaussian likelihood N(z; Hx, R): a Kalman
 * update per component, reweighted by the predictive likelihood N(z; Hμ, HΣHᵀ + R).
 */
inline GaussianMixture gm_linear_update(const GaussianMixture& gm, const Mat& h, const Vec& z, const Mat& r) {
  if (h.cols() != gm.dim() || h.rows() != z.size() || r.rows() != z.size() || r.cols() != z.size())
    throw DimensionMismatch("gm_linear_update: H, z and R disagree with the mixture dimension");
  std::vector<double> logs;
  std::vector<GaussianComponent> comps;
  for (const auto& c : gm.components()) {
    const Mat s = symmetrized(h * c.cov() * h.transpose() + r);
    const GaussianComponent pred(1.0, h * c.mean(), s);
    const Mat k = c.cov() * h.transpose() * s.inverse();
    const Mat cov = symmetrized((Mat::Identity(gm.dim(), gm.dim()) - k * h) * c.cov());
    logs.push_back(c.weight() > 0.0 ? std::log(c.weight()) + pred.log_density(z) : -std::numeric_limits<double>::infinity());
    comps.emplace_back(1.0, c.mean() + k * (z - h * c.mean()), cov);
  }
  const double total = log_sum_exp(logs);
  if (!std::isfinite(total)) throw DensityUnderflow("gm_linear_update: measurement has zero likelihood under every component");
  for (std::size_t q = 0; q < comps.size(); ++q) comps[q] = comps[q].with_weight(std::exp(logs[q] - total));
  return GaussianMixture(std::move(comps));
}

}  // namespace gmddf
