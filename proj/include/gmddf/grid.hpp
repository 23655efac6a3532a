#pragma once

#include "gmddf/sampling.hpp"

namespace gmddf {

/// A normalized density tabulated at cell centers of a regular grid in at most 3 dimensions.
struct GridDensity {
  Vec lo, hi;
  std::vector<int> res;
  std::vector<double> values;  ///< normalized density at each cell center, first dimension fastest
  double cell_volume = 0.0;
  double log_normalizer = 0.0;  ///< log of the tabulated mass before normalization
  double boundary_mass = 0.0;   ///< probability in the outermost cell layer

  [[nodiscard]] Index dim() const noexcept { return lo.size(); }
  [[nodiscard]] std::size_t cells() const noexcept { return values.size(); }

  [[nodiscard]] Vec center(std::size_t flat) const {
    Vec x(dim());
    for (Index k = 0; k < dim(); ++k) {
      const auto n = static_cast<std::size_t>(res[static_cast<std::size_t>(k)]);
      const auto i = flat % n;
      flat /= n;
      x(k) = lo(k) + (static_cast<double>(i) + 0.5) * (hi(k) - lo(k)) / static_cast<double>(n);
    }
    return x;
  }

  [[nodiscard]] bool on_boundary(std::size_t flat) const {
    for (Index k = 0; k < dim(); ++k) {
      const auto n = static_cast<std::size_t>(res[static_cast<std::size_t>(k)]);
      const auto i = flat % n;
      flat /= n;
      if (i == 0 || i + 1 == n) return true;
    }
    return false;
  }

  [[nodiscard]] Moments moments() const {
    Vec mean = Vec::Zero(dim());
    Mat second = Mat::Zero(dim(), dim());
    for (std::size_t c = 0; c < cells(); ++c) {
      const double p = values[c] * cell_volume;
      if (p == 0.0) continue;
      const Vec x = center(c);
      mean += p * x;
      second += p * x * x.transpose();
    }
    return {mean, symmetrized(second - mean * mean.transpose())};
  }
};

/// Per-dimension bounds covering every component mean ± `sigmas` marginal standard deviations.
inline std::pair<Vec, Vec> grid_bounds(const std::vector<const GaussianMixture*>& gms, double sigmas = 5.0) {
  if (gms.empty()) throw Error("grid_bounds: no mixtures given");
  const Index d = gms.front()->dim();
  Vec lo = Vec::Constant(d, std::numeric_limits<double>::infinity());
  Vec hi = -lo;
  for (const auto* gm : gms)
    for (const auto& c : gm->components()) {
      const Vec sd = c.cov().diagonal().cwiseSqrt();
      lo = lo.cwiseMin(c.mean() - sigmas * sd);
      hi = hi.cwiseMax(c.mean() + sigmas * sd);
    }
  return {lo, hi};
}

inline constexpr double kGridBoundaryWarn = 0.01;

/// Tabulates exp(log_f) on the grid and normalizes it. Flags boundary mass above 1%.
inline GridDensity grid_truth(const LogDensityFn& log_f, const Vec& lo, const Vec& hi, const std::vector<int>& res, Flags* flags = nullptr) {
  const Index d = lo.size();
  if (d < 1 || d > 3) throw Error("grid_truth: grids are limited to 1 to 3 dimensions");
  if (hi.size() != d || static_cast<Index>(res.size()) != d) throw DimensionMismatch("grid_truth: bounds and resolution disagree in dimension");
  GridDensity g{lo, hi, res, {}, 1.0, 0.0, 0.0};
  std::size_t total = 1;
  for (Index k = 0; k < d; ++k) {
    if (res[static_cast<std::size_t>(k)] < 2 || !(hi(k) > lo(k))) throw Error("grid_truth: need res >= 2 and hi > lo per dimension");
    total *= static_cast<std::size_t>(res[static_cast<std::size_t>(k)]);
    g.cell_volume *= (hi(k) - lo(k)) / res[static_cast<std::size_t>(k)];
  }
  std::vector<double> logs(total);
  parallel_for(total, [&](std::size_t c) { logs[c] = log_f(g.center(c)); });
  const double peak = *std::max_element(logs.begin(), logs.end());
  if (!std::isfinite(peak)) throw Error("grid_truth: density has zero mass on the grid");
  g.values.resize(total);
  double mass = 0.0, edge = 0.0;
  for (std::size_t c = 0; c < total; ++c) {
    g.values[c] = std::exp(logs[c] - peak);
    mass += g.values[c];
    if (g.on_boundary(c)) edge += g.values[c];
  }
  g.log_normalizer = peak + std::log(mass * g.cell_volume);
  g.boundary_mass = edge / mass;
  for (double& v : g.values) v /= mass * g.cell_volume;
  if (g.boundary_mass > kGridBoundaryWarn) add_flag(flags, "grid_boundary_mass=" + std::to_string(g.boundary_mass));
  return g;
}

inline GridDensity grid_truth(const LogDensityFn& log_f, const Vec& lo, const Vec& hi, int res, Flags* flags = nullptr) {
  return grid_truth(log_f, lo, hi, std::vector<int>(static_cast<std::size_t>(lo.size()), res), flags);
}

inline constexpr double kKldFloor = 1e-300;

/// Σ p log(p/q)·volume with q floored at 1e-300; the number of floored cells goes to `clamped`.
inline double kld_grid(const GridDensity& truth, const LogDensityFn& log_approx, std::size_t* clamped = nullptr) {
  const double log_floor = std::log(kKldFloor);
  std::vector<double> terms(truth.cells(), 0.0);
  std::vector<char> hit(truth.cells(), 0);
  parallel_for(truth.cells(), [&](std::size_t c) {
    const double p = truth.values[c];
    if (p <= 0.0) return;
    double lq = log_approx(truth.center(c));
    if (!(lq >= log_floor)) {
      lq = log_floor;
      hit[c] = 1;
    }
    terms[c] = p * (std::log(p) - lq);
  });
  if (clamped != nullptr) *clamped = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
  double acc = 0.0;
  for (double t : terms) acc += t;
  return acc * truth.cell_volume;
}

inline double kld_grid(const GridDensity& truth, const GaussianMixture& approx, std::size_t* clamped = nullptr) {
  return kld_grid(truth, [&](const Vec& x) { return approx.log_pdf(x); }, clamped);
}

/// Monte Carlo KLD(p‖q) for mixtures in any dimension, using samples from p.
inline double kld_monte_carlo(const GaussianMixture& p, const GaussianMixture& q, std::size_t n, Rng& rng) {
  const Mat xs = gm_sample(p, n, rng);
  double acc = 0.0;
  const double log_floor = std::log(kKldFloor);
  for (Index s = 0; s < xs.cols(); ++s) {
    const Vec x = xs.col(s);
    acc += p.log_pdf(x) - std::max(q.log_pdf(x), log_floor);
  }
  return acc / static_cast<double>(n);
}

}  // namespace gmddf
