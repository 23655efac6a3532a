#pragma once

#include "gmddf/benchmark.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <map>

namespace gmddf {

/// State layout for the tracking model: [x, xdot, y, ydot] in East-North coordinates.
inline constexpr int kTrackDim = 4;
inline constexpr int kModes = 5;

// ---- target model ----

/// Continuous-time generator of the coordinated turn at rate Ω (Ω = 0 is constant velocity).
inline Mat turn_generator(double omega) {
  Mat a = Mat::Zero(kTrackDim, kTrackDim);
  a(0, 1) = 1.0;
  a(2, 3) = 1.0;
  a(1, 3) = -omega;
  a(3, 1) = omega;
  return a;
}

/// Closed-form discrete coordinated-turn transition.
inline Mat turn_transition(double omega, double dt) {
  Mat f = Mat::Identity(kTrackDim, kTrackDim);
  if (omega == 0.0) {
    f(0, 1) = dt;
    f(2, 3) = dt;
    return f;
  }
  const double s = std::sin(omega * dt), c = std::cos(omega * dt);
  f(0, 1) = s / omega;
  f(0, 3) = -(1.0 - c) / omega;
  f(1, 1) = c;
  f(1, 3) = -s;
  f(2, 1) = (1.0 - c) / omega;
  f(2, 3) = s / omega;
  f(3, 1) = s;
  f(3, 3) = c;
  return f;
}

struct VanLoanResult {
  Mat f;
  Mat q;
};

/// Van Loan discretization of dx = A x dt + dw with white-noise density W.
inline VanLoanResult van_loan(const Mat& a, const Mat& w, double dt) {
  const Index n = a.rows();
  Mat m = Mat::Zero(2 * n, 2 * n);
  m.topLeftCorner(n, n) = -a * dt;
  m.topRightCorner(n, n) = w * dt;
  m.bottomRightCorner(n, n) = a.transpose() * dt;
  const Mat e = m.exp();
  const Mat f = e.bottomRightCorner(n, n).transpose();
  return {f, symmetrized(f * e.topRightCorner(n, n))};
}

/// Discrete process noise of the turn model driven by white acceleration of the given intensity per axis.
inline Mat van_loan_q(double intensity, double omega, double dt) {
  if (!(intensity >= 0.0) || !(dt > 0.0)) throw Error("van_loan_q: need intensity >= 0 and dt > 0");
  Mat w = Mat::Zero(kTrackDim, kTrackDim);
  w(1, 1) = intensity;
  w(3, 3) = intensity;
  return van_loan(turn_generator(omega), w, dt).q;
}

/// Five-mode jump Markov linear model; A is column-stochastic (π_{k+1} = A π_k).
struct JmlsModel {
  double dt = 1.0;
  double intensity = 2.0;
  std::array<double, kModes> omega{0.0, -0.05, 0.05, -0.15, 0.15};
  std::vector<Mat> f, q;
  Mat a;

  static JmlsModel make(double dt = 1.0, double intensity = 2.0, double self_transition = 0.85,
                        std::array<double, kModes> omega = {0.0, -0.05, 0.05, -0.15, 0.15}) {
    if (!(self_transition > 0.0 && self_transition <= 1.0)) throw InputError("self_transition must lie in (0, 1]");
    JmlsModel m;
    m.dt = dt;
    m.intensity = intensity;
    m.omega = omega;
    for (double w : omega) {
      m.f.push_back(turn_transition(w, dt));
      m.q.push_back(van_loan_q(intensity, w, dt));
    }
    m.a = Mat::Constant(kModes, kModes, (1.0 - self_transition) / (kModes - 1));
    m.a.diagonal().setConstant(self_transition);
    return m;
  }
};

struct Trajectory {
  std::vector<Vec> states;  ///< states[k] for k = 0..steps
  std::vector<int> modes;   ///< modes[k] drives the transition from k to k+1
};

namespace detail {
/// Symmetric square root; tolerates the rank-deficient Q of a zero intensity.
inline Mat psd_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(m));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

inline int draw_index(const Vec& p, Rng& rng) {
  double u = uniform01(rng), acc = 0.0;
  for (Index k = 0; k < p.size(); ++k) {
    acc += p(k);
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(p.size() - 1);
}
}  // namespace detail

inline Trajectory simulate_truth(const JmlsModel& model, const Vec& x0, int steps, int initial_mode, Rng& rng) {
  if (x0.size() != kTrackDim) throw DimensionMismatch("simulate_truth: x0 must have length 4");
  if (steps < 0 || initial_mode < 0 || initial_mode >= kModes) throw Error("simulate_truth: bad step count or initial mode");
  std::vector<Mat> roots;
  for (const auto& q : model.q) roots.push_back(detail::psd_sqrt(q));
  Trajectory t;
  t.states.push_back(x0);
  int m = initial_mode;
  for (int k = 0; k < steps; ++k) {
    t.modes.push_back(m);
    const auto mu = static_cast<std::size_t>(m);
    t.states.push_back(model.f[mu] * t.states.back() + roots[mu] * standard_normal(kTrackDim, rng));
    m = detail::draw_index(model.a.col(m), rng);
  }
  t.modes.push_back(m);
  return t;
}

// ---- sensing ----

struct Platform {
  double x = 0.0, y = 0.0;
  double r_range = 400.0;  ///< m²
  double r_rate = 1.0;     ///< (m/s)²
};

inline constexpr double kMinRange = 1.0;

/// Noise-free range and range rate of a static platform.
inline Vec measure_exact(const Platform& p, const Vec& s) {
  const double dx = s(0) - p.x, dy = s(2) - p.y;
  const double r = std::hypot(dx, dy);
  if (r <= kMinRange) throw Error("measure: target within 1 m of the platform");
  Vec z(2);
  z << r, (dx * s(1) + dy * s(3)) / r;
  return z;
}

/// Jacobian of measure_exact with respect to the state.
inline Mat measurement_jacobian(const Platform& p, const Vec& s) {
  const double dx = s(0) - p.x, dy = s(2) - p.y;
  const double r = std::hypot(dx, dy);
  if (r <= kMinRange) throw Error("measurement_jacobian: target within 1 m of the platform");
  const double rdot = (dx * s(1) + dy * s(3)) / r;
  Mat h = Mat::Zero(2, kTrackDim);
  h(0, 0) = dx / r;
  h(0, 2) = dy / r;
  h(1, 0) = (s(1) - rdot * dx / r) / r;
  h(1, 1) = dx / r;
  h(1, 2) = (s(3) - rdot * dy / r) / r;
  h(1, 3) = dy / r;
  return h;
}

inline Vec measure(const Platform& p, const Vec& s, Rng& rng) {
  Vec z = measure_exact(p, s);
  z(0) += std::sqrt(p.r_range) * standard_normal(1, rng)(0);
  z(1) += std::sqrt(p.r_rate) * standard_normal(1, rng)(0);
  return z;
}

/// A set of platforms whose measurements are processed together (one for a local filter, all for the centralized one).
struct SensorGroup {
  std::vector<Platform> platforms;

  [[nodiscard]] Index rows() const { return 2 * static_cast<Index>(platforms.size()); }

  [[nodiscard]] Vec h(const Vec& s) const {
    Vec z(rows());
    for (std::size_t i = 0; i < platforms.size(); ++i) z.segment(2 * static_cast<Index>(i), 2) = measure_exact(platforms[i], s);
    return z;
  }
  [[nodiscard]] Mat jacobian(const Vec& s) const {
    Mat j(rows(), kTrackDim);
    for (std::size_t i = 0; i < platforms.size(); ++i) j.middleRows(2 * static_cast<Index>(i), 2) = measurement_jacobian(platforms[i], s);
    return j;
  }
  [[nodiscard]] Mat noise() const {
    Mat r = Mat::Zero(rows(), rows());
    for (std::size_t i = 0; i < platforms.size(); ++i) {
      r(2 * static_cast<Index>(i), 2 * static_cast<Index>(i)) = platforms[i].r_range;
      r(2 * static_cast<Index>(i) + 1, 2 * static_cast<Index>(i) + 1) = platforms[i].r_rate;
    }
    return r;
  }
};

// ---- IMM with a Gaussian-mixture bank per mode ----

struct ImmOptions {
  std::size_t max_components = 12;
  double negligible_weight = 1e-12;  ///< relative weight below which a component is dropped
};

/// Mode-conditional mixture bank and mode probabilities of one estimator.
struct PlatformState {
  std::vector<GaussianMixture> banks;  ///< p(x | m), each normalized
  Vec pi;                              ///< P(m)

  void validate(std::size_t cap) const {
    if (banks.size() != static_cast<std::size_t>(kModes) || pi.size() != kModes) throw Error("platform state must hold five modes");
    if (std::abs(pi.sum() - 1.0) > 1e-9 || (pi.array() < 0.0).any()) throw Error("mode probabilities are not a distribution");
    for (const auto& b : banks)
      if (b.size() > cap) throw Error("mode bank exceeds its component cap");
  }
};

namespace detail {
inline GaussianMixture tidy_bank(const GaussianMixture& gm, const ImmOptions& opt) {
  const auto g = gm.normalized();
  return runnalls_compress(prune_small_weights(g, std::min(opt.negligible_weight, 0.5 / static_cast<double>(g.size()))), opt.max_components);
}

inline Vec normalized_from_log(const Vec& lw) {
  const double top = lw.maxCoeff();
  Vec p = (lw.array() - top).exp();
  return p / p.sum();
}
}  // namespace detail

/// Equally weighted bank: per_mode components per mode, means perturbed about x0 by N(0, P0).
inline PlatformState initial_state(const Vec& x0, const Vec& p0_diag, const Vec& component_cov_diag, std::size_t per_mode, Rng& rng) {
  if (x0.size() != kTrackDim || p0_diag.size() != kTrackDim || component_cov_diag.size() != kTrackDim)
    throw DimensionMismatch("initial_state: vectors must have length 4");
  if (per_mode < 1) throw Error("initial_state: need at least one component per mode");
  PlatformState st;
  const Vec sd = p0_diag.cwiseSqrt();
  const Mat cov = component_cov_diag.asDiagonal();
  for (int m = 0; m < kModes; ++m) {
    std::vector<GaussianComponent> comps;
    for (std::size_t c = 0; c < per_mode; ++c)
      comps.emplace_back(1.0 / static_cast<double>(per_mode), x0 + sd.cwiseProduct(standard_normal(kTrackDim, rng)), cov);
    st.banks.emplace_back(std::move(comps));
  }
  st.pi = Vec::Constant(kModes, 1.0 / kModes);
  return st;
}

/// Each mode bank goes through its own dynamics; bank m' is then the A(m', m)π(m)-weighted mixture, compressed.
inline PlatformState imm_predict(const PlatformState& st, const JmlsModel& model, const ImmOptions& opt = {}) {
  std::vector<std::vector<GaussianComponent>> moved(kModes);
  for (int m = 0; m < kModes; ++m) {
    const auto mu = static_cast<std::size_t>(m);
    for (const auto& c : st.banks[mu].components())
      moved[mu].emplace_back(c.weight(), model.f[mu] * c.mean(), symmetrized(model.f[mu] * c.cov() * model.f[mu].transpose() + model.q[mu]));
  }
  PlatformState out;
  out.pi = model.a * st.pi;
  out.pi /= out.pi.sum();
  for (int to = 0; to < kModes; ++to) {
    std::vector<GaussianComponent> mix;
    for (int from = 0; from < kModes; ++from) {
      const double w = model.a(to, from) * st.pi(from);
      if (w <= 0.0) continue;
      for (const auto& c : moved[static_cast<std::size_t>(from)]) mix.push_back(c.with_weight(w * c.weight()));
    }
    out.banks.push_back(detail::tidy_bank(GaussianMixture(std::move(mix)), opt));
  }
  return out;
}

struct EkfResult {
  GaussianMixture gm;
  double log_likelihood;  ///< log p(z | this mixture)
};

/// EKF update of every component (Joseph form), reweighted by its predictive likelihood.
inline EkfResult ekf_update(const GaussianMixture& gm, const SensorGroup& sensors, const Vec& z) {
  if (z.size() != sensors.rows()) throw DimensionMismatch("ekf_update: measurement length disagrees with the sensor group");
  const Mat r = sensors.noise();
  const Mat eye = Mat::Identity(kTrackDim, kTrackDim);
  std::vector<double> logs;
  std::vector<GaussianComponent> comps;
  for (const auto& c : gm.components()) {
    const Mat h = sensors.jacobian(c.mean());
    const Mat s = symmetrized(h * c.cov() * h.transpose() + r);
    const GaussianComponent pred(1.0, sensors.h(c.mean()), s);
    const Mat k = c.cov() * h.transpose() * pred.precision();
    const Mat ikh = eye - k * h;
    const Mat cov = symmetrized(ikh * c.cov() * ikh.transpose() + k * r * k.transpose());
    logs.push_back(c.weight() > 0.0 ? std::log(c.weight()) + pred.log_density(z) : -std::numeric_limits<double>::infinity());
    comps.emplace_back(1.0, c.mean() + k * (z - pred.mean()), cov);
  }
  const double total = log_sum_exp(logs);
  if (std::isfinite(total))
    for (std::size_t q = 0; q < comps.size(); ++q) comps[q] = comps[q].with_weight(std::exp(logs[q] - total));
  return {GaussianMixture(std::move(comps)), total};
}

/// Measurement update of every bank and of π. If every mode likelihood underflows the
/// measurement is skipped, π is reset to uniform and the step is flagged.
inline PlatformState imm_update(const PlatformState& st, const SensorGroup& sensors, const Vec& z, const ImmOptions& opt = {},
                                Flags* flags = nullptr) {
  PlatformState out;
  Vec lw(kModes);
  for (int m = 0; m < kModes; ++m) {
    auto r = ekf_update(st.banks[static_cast<std::size_t>(m)], sensors, z);
    lw(m) = std::log(st.pi(m)) + r.log_likelihood;
    out.banks.push_back(std::isfinite(r.log_likelihood) ? detail::tidy_bank(r.gm, opt) : st.banks[static_cast<std::size_t>(m)]);
  }
  if (!std::isfinite(lw.maxCoeff())) {
    add_flag(flags, "imm_likelihood_underflow");
    out.banks = st.banks;
    out.pi = Vec::Constant(kModes, 1.0 / kModes);
    return out;
  }
  out.pi = detail::normalized_from_log(lw);
  return out;
}

inline PlatformState imm_step(const PlatformState& st, const JmlsModel& model, const SensorGroup& sensors, const Vec& z,
                              const ImmOptions& opt = {}, Flags* flags = nullptr) {
  return imm_update(imm_predict(st, model, opt), sensors, z, opt, flags);
}

/// Mode-marginal mixture Σ_m π(m) p(x | m).
inline GaussianMixture marginal_mixture(const PlatformState& st) {
  std::vector<GaussianComponent> all;
  for (int m = 0; m < kModes; ++m)
    for (const auto& c : st.banks[static_cast<std::size_t>(m)].components()) all.push_back(c.with_weight(st.pi(m) * c.weight()));
  return GaussianMixture(std::move(all));
}

/// 2·sqrt(P_xx + P_yy) of a marginal covariance.
inline double two_sigma_trace(const Mat& cov) { return 2.0 * std::sqrt(cov(0, 0) + cov(2, 2)); }

// ---- decentralized fusion ----

struct DdfOptions {
  FusionMethod method;  ///< IGS or FOCI
  WepRule rule = WepRule::Minimax;
  std::size_t eta_samples = 1000;
};

struct DdfOutcome {
  PlatformState state;
  std::array<double, kModes> omega{};
  std::array<double, kModes> log_eta{};
};

/// log ∫ p_i^ω p_j^(1−ω) by importance sampling from the FOCI mixture at the same ω.
inline double wep_log_normalizer(const GaussianMixture& p_i, const GaussianMixture& p_j, double omega, std::size_t n, Rng& rng) {
  const auto q = foci_fuse(p_i, p_j, omega);
  const Mat xs = gm_sample(q, n, rng);
  std::vector<double> lw(n);
  for (std::size_t s = 0; s < n; ++s) {
    const Vec x = xs.col(static_cast<Index>(s));
    lw[s] = wep_log_eval(p_i, p_j, omega, x) - q.log_pdf(x);
  }
  return log_sum_exp(lw) - std::log(static_cast<double>(n));
}

/**
 * WEP fusion of a's mode banks with b's, mode by mode, at the rule's ω. π is reweighted
 * by the per-mode normalizers η(m). A mode whose fusion fails keeps a's bank and the π
 * reweighting is skipped for the whole event.
 */
inline DdfOutcome ddf_event(const PlatformState& a, const PlatformState& b, const DdfOptions& opt, Rng& rng, const ImmOptions& imm = {},
                            Flags* flags = nullptr) {
  if (opt.method.kind != MethodKind::Igs && opt.method.kind != MethodKind::Foci) throw Error("ddf_event: method must be igs or foci");
  DdfOutcome out;
  out.state = a;
  bool all_ok = true;
  for (int m = 0; m < kModes; ++m) {
    const auto mu = static_cast<std::size_t>(m);
    try {
      auto rep = fuse(a.banks[mu], b.banks[mu], FusionCommon::wep(opt.rule), opt.method, rng);
      if (flags != nullptr) flags->insert(flags->end(), rep.flags.begin(), rep.flags.end());
      out.omega[mu] = rep.omega.value();
      out.log_eta[mu] = wep_log_normalizer(a.banks[mu], b.banks[mu], out.omega[mu], opt.eta_samples, rng);
      out.state.banks[mu] = detail::tidy_bank(rep.gm, imm);
    } catch (const Error& e) {
      all_ok = false;
      out.omega[mu] = std::numeric_limits<double>::quiet_NaN();
      add_flag(flags, "ddf_mode_failed=" + std::to_string(m + 1) + ": " + e.what());
    }
  }
  if (all_ok) {
    Vec lw(kModes);
    for (int m = 0; m < kModes; ++m) lw(m) = std::log(a.pi(m)) + out.log_eta[static_cast<std::size_t>(m)];
    if (std::isfinite(lw.maxCoeff())) out.state.pi = detail::normalized_from_log(lw);
  }
  return out;
}

// ---- scenario ----

struct ScenarioConfig {
  int runs = 5;
  int steps = 120;
  std::uint64_t seed = 1;
  std::vector<int> fusion_steps{60, 120};
  std::vector<Platform> platforms{{0.0, 0.0}, {20000.0, 0.0}, {10000.0, 30000.0}};
  Vec x0 = (Vec(4) << 5000.0, 0.0, 100.0, 375.0).finished();
  Vec p0_diag = (Vec(4) << 500.0, 100.0, 500.0, 100.0).finished();
  Vec component_cov_diag = (Vec(4) << 2000.0, 1000.0, 2000.0, 1000.0).finished();
  std::size_t components_per_mode = 12;
  int initial_mode = 0;
  double dt = 1.0;
  double intensity = 2.0;
  double self_transition = 0.85;
  ImmOptions imm;
  WepRule rule = WepRule::Minimax;
  std::size_t igs_samples = 1000;
  std::size_t omega_samples = 1000;
  std::size_t eta_samples = 1000;
  std::vector<MethodKind> ddf_methods{MethodKind::Igs, MethodKind::Foci};

  void validate() const {
    if (runs < 1 || steps < 1) throw InputError("scenario: runs and steps must be positive");
    if (platforms.size() < 2) throw InputError("scenario: need at least two platforms");
    for (int k : fusion_steps)
      if (k < 1 || k > steps) throw InputError("scenario: fusion step " + std::to_string(k) + " outside 1.." + std::to_string(steps));
    if (components_per_mode < 1 || imm.max_components < 1) throw InputError("scenario: component counts must be positive");
    if (initial_mode < 0 || initial_mode >= kModes) throw InputError("scenario: initial_mode must lie in 0..4");
    for (auto m : ddf_methods)
      if (m != MethodKind::Igs && m != MethodKind::Foci) throw InputError("scenario: ddf methods must be igs or foci");
    if (igs_samples < 100 || omega_samples < 100 || eta_samples < 1) throw InputError("scenario: sample counts too small");
  }

  /// The 422-step, 7-fusion, 50-run configuration.
  static ScenarioConfig full_scale() {
    ScenarioConfig c;
    c.runs = 50;
    c.steps = 422;
    c.fusion_steps = {60, 120, 180, 240, 300, 360, 420};
    return c;
  }
};

inline std::string variant_name(std::optional<MethodKind> ddf, bool centralized) {
  if (centralized) return "centralized";
  if (!ddf) return "independent";
  return std::string("ddf-") + to_string(*ddf);
}

struct TrackRow {
  int run = 0;
  int k = 0;
  std::string variant;
  int platform = 0;  ///< 1-based; 0 for the centralized estimator
  Vec est, err;
  double sigma2_trace = 0.0;
  bool fused = false;
  std::vector<double> omega;  ///< per mode, fused rows only
};

struct FusionRecord {
  int run = 0;
  int k = 0;
  std::string variant;
  int platform = 0;
  int sender = 0;
  double pre_trace = 0.0, post_trace = 0.0;
  double pre_pos_err = 0.0, post_pos_err = 0.0;
};

struct ScenarioResult {
  std::vector<TrackRow> rows;
  std::vector<FusionRecord> fusions;
  std::vector<std::string> failures;  ///< "run r variant v: message"
  Flags flags;
};

namespace detail {
inline TrackRow track_row(int run, int k, const std::string& variant, int platform, const PlatformState& st, const Vec& truth) {
  const auto mom = mixture_moments(marginal_mixture(st));
  return {run, k, variant, platform, mom.mean, mom.mean - truth, two_sigma_trace(mom.cov), false, {}};
}

inline double position_error(const TrackRow& r) { return std::hypot(r.err(0), r.err(2)); }

/// One Monte Carlo run: shared truth and measurements, then every estimator variant.
inline ScenarioResult run_one(const ScenarioConfig& cfg, const JmlsModel& model, int run) {
  const std::uint64_t run_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(run));
  Rng truth_rng = derive_stream(run_seed, 0);
  const auto truth = simulate_truth(model, cfg.x0, cfg.steps, cfg.initial_mode, truth_rng);
  Rng noise_rng = derive_stream(run_seed, 1);
  std::vector<std::vector<Vec>> z(static_cast<std::size_t>(cfg.steps) + 1);
  for (int k = 1; k <= cfg.steps; ++k)
    for (const auto& p : cfg.platforms) z[static_cast<std::size_t>(k)].push_back(measure(p, truth.states[static_cast<std::size_t>(k)], noise_rng));
  Rng init_rng = derive_stream(run_seed, 2);
  const auto prior = initial_state(cfg.x0, cfg.p0_diag, cfg.component_cov_diag, cfg.components_per_mode, init_rng);

  ScenarioResult res;
  const auto n_plat = cfg.platforms.size();
  std::vector<SensorGroup> local;
  for (const auto& p : cfg.platforms) local.push_back({{p}});
  const SensorGroup all{cfg.platforms};

  // centralized
  try {
    auto st = prior;
    for (int k = 1; k <= cfg.steps; ++k) {
      Vec stacked(all.rows());
      for (std::size_t i = 0; i < n_plat; ++i) stacked.segment(2 * static_cast<Index>(i), 2) = z[static_cast<std::size_t>(k)][i];
      st = imm_step(st, model, all, stacked, cfg.imm, &res.flags);
      res.rows.push_back(track_row(run, k, "centralized", 0, st, truth.states[static_cast<std::size_t>(k)]));
    }
  } catch (const Error& e) {
    res.failures.push_back("run " + std::to_string(run) + " centralized: " + e.what());
  }

  std::vector<std::optional<MethodKind>> variants{std::nullopt};
  for (auto m : cfg.ddf_methods) variants.emplace_back(m);
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    const auto name = variant_name(variants[vi], false);
    Rng fuse_rng = derive_stream(run_seed, 100 + vi);
    DdfOptions ddf;
    if (variants[vi]) {
      ddf.method.kind = *variants[vi];
      ddf.method.n_samples = cfg.igs_samples;
      ddf.method.omega_samples = cfg.omega_samples;
      ddf.rule = cfg.rule;
      ddf.eta_samples = cfg.eta_samples;
    }
    try {
      std::vector<PlatformState> st(n_plat, prior);
      for (int k = 1; k <= cfg.steps; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        const Vec& x = truth.states[ks];
        for (std::size_t i = 0; i < n_plat; ++i) st[i] = imm_step(st[i], model, local[i], z[ks][i], cfg.imm, &res.flags);
        const std::size_t first = res.rows.size();
        for (std::size_t i = 0; i < n_plat; ++i) res.rows.push_back(track_row(run, k, name, static_cast<int>(i) + 1, st[i], x));
        const bool fusing = variants[vi] && std::find(cfg.fusion_steps.begin(), cfg.fusion_steps.end(), k) != cfg.fusion_steps.end();
        if (!fusing) continue;
        // ring 1 -> 2 -> ... -> n -> 1, simultaneous: every receiver uses pre-fusion copies
        const auto before = st;
        for (std::size_t i = 0; i < n_plat; ++i) {
          const std::size_t sender = (i + n_plat - 1) % n_plat;
          auto out = ddf_event(before[i], before[sender], ddf, fuse_rng, cfg.imm, &res.flags);
          st[i] = std::move(out.state);
          auto& row = res.rows[first + i];
          const auto pre = row;
          row = track_row(run, k, name, static_cast<int>(i) + 1, st[i], x);
          row.fused = true;
          row.omega.assign(out.omega.begin(), out.omega.end());
          res.fusions.push_back({run, k, name, static_cast<int>(i) + 1, static_cast<int>(sender) + 1, pre.sigma2_trace, row.sigma2_trace,
                                 position_error(pre), position_error(row)});
        }
      }
    } catch (const Error& e) {
      res.failures.push_back("run " + std::to_string(run) + " " + name + ": " + e.what());
    }
  }
  return res;
}
}  // namespace detail

/// All runs (parallel across runs), each on its own derived stream.
inline ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const auto model = JmlsModel::make(cfg.dt, cfg.intensity, cfg.self_transition);
  std::vector<ScenarioResult> per(static_cast<std::size_t>(cfg.runs));
  parallel_for(per.size(), [&](std::size_t r) { per[r] = detail::run_one(cfg, model, static_cast<int>(r)); });
  ScenarioResult all;
  std::map<std::string, std::size_t> flag_counts;  // flags repeat every step, so they are tallied by name
  for (auto& p : per) {
    all.rows.insert(all.rows.end(), p.rows.begin(), p.rows.end());
    all.fusions.insert(all.fusions.end(), p.fusions.begin(), p.fusions.end());
    all.failures.insert(all.failures.end(), p.failures.begin(), p.failures.end());
    for (const auto& f : p.flags) ++flag_counts[f.substr(0, f.find_first_of("=:"))];
  }
  for (const auto& [name, n] : flag_counts) all.flags.push_back(name + " occurrences=" + std::to_string(n));
  return all;
}

// ---- reports ----

inline std::string track_csv(const ScenarioResult& res, int run = -1) {
  std::ostringstream os;
  os << "run,k,variant,platform,est_x,est_xdot,est_y,est_ydot,err_x,err_xdot,err_y,err_ydot,sigma2_trace,fused,omega\n";
  for (const auto& r : res.rows) {
    if (run >= 0 && r.run != run) continue;
    os << r.run << ',' << r.k << ',' << r.variant << ',' << r.platform;
    for (Index i = 0; i < kTrackDim; ++i) os << ',' << detail::fmt_num(r.est(i));
    for (Index i = 0; i < kTrackDim; ++i) os << ',' << detail::fmt_num(r.err(i));
    os << ',' << detail::fmt_num(r.sigma2_trace) << ',' << (r.fused ? 1 : 0) << ',';
    for (std::size_t m = 0; m < r.omega.size(); ++m) os << (m ? ";" : "") << detail::fmt_num(r.omega[m]);
    os << '\n';
  }
  return os.str();
}

/// Paired statistics at fusion steps that the qualitative tracking claims are checked against.
struct TrackingSummary {
  std::map<std::string, std::vector<double>> rmse_per_run;  ///< position RMSE over fusion steps and platforms
  std::map<std::string, double> median_rmse;
  double median_igs_minus_independent = std::numeric_limits<double>::quiet_NaN();
  double igs_trace_drop_fraction = std::numeric_limits<double>::quiet_NaN();
  double foci_trace_drop_fraction = std::numeric_limits<double>::quiet_NaN();
  double centralized_tighter_fraction = std::numeric_limits<double>::quiet_NaN();  ///< centralized 2σ ≤ DDF 2σ
  std::size_t failures = 0;
};

inline TrackingSummary summarize_tracking(const ScenarioResult& res, const ScenarioConfig& cfg) {
  TrackingSummary s;
  s.failures = res.failures.size();
  std::map<std::pair<std::string, int>, std::vector<double>> sq;
  std::map<std::pair<int, int>, double> central_trace;
  for (const auto& r : res.rows) {
    if (std::find(cfg.fusion_steps.begin(), cfg.fusion_steps.end(), r.k) == cfg.fusion_steps.end()) continue;
    const double e = detail::position_error(r);
    sq[{r.variant, r.run}].push_back(e * e);
    if (r.variant == "centralized") central_trace[{r.run, r.k}] = r.sigma2_trace;
  }
  for (const auto& [key, v] : sq) {
    double acc = 0.0;
    for (double x : v) acc += x;
    s.rmse_per_run[key.first].push_back(std::sqrt(acc / static_cast<double>(v.size())));
  }
  for (const auto& [name, v] : s.rmse_per_run) s.median_rmse[name] = detail::median(v);

  std::vector<double> diffs;
  for (int run = 0; run < cfg.runs; ++run) {
    const auto a = sq.find({"ddf-igs", run}), b = sq.find({"independent", run});
    if (a == sq.end() || b == sq.end()) continue;
    const auto rmse = [](const std::vector<double>& v) {
      double acc = 0.0;
      for (double x : v) acc += x;
      return std::sqrt(acc / static_cast<double>(v.size()));
    };
    diffs.push_back(rmse(a->second) - rmse(b->second));
  }
  if (!diffs.empty()) s.median_igs_minus_independent = detail::median(diffs);

  const auto drop_fraction = [&](const std::string& name) {
    std::size_t n = 0, drops = 0;
    for (const auto& f : res.fusions)
      if (f.variant == name) {
        ++n;
        if (f.post_trace <= f.pre_trace) ++drops;
      }
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(drops) / static_cast<double>(n);
  };
  s.igs_trace_drop_fraction = drop_fraction("ddf-igs");
  s.foci_trace_drop_fraction = drop_fraction("ddf-foci");

  std::size_t n = 0, tighter = 0;
  for (const auto& f : res.fusions) {
    const auto it = central_trace.find({f.run, f.k});
    if (it == central_trace.end()) continue;
    ++n;
    if (it->second <= f.post_trace) ++tighter;
  }
  if (n > 0) s.centralized_tighter_fraction = static_cast<double>(tighter) / static_cast<double>(n);
  return s;
}

inline Json tracking_summary_json(const ScenarioResult& res, const ScenarioConfig& cfg) {
  const auto s = summarize_tracking(res, cfg);
  const auto num = [](double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); };
  Json j;
  j["runs"] = cfg.runs;
  j["steps"] = cfg.steps;
  j["seed"] = cfg.seed;
  j["fusion_steps"] = cfg.fusion_steps;
  j["median_position_rmse_at_fusion"] = s.median_rmse;
  j["position_rmse_at_fusion_per_run"] = s.rmse_per_run;
  j["median_igs_minus_independent_rmse"] = num(s.median_igs_minus_independent);
  j["igs_trace_drop_fraction"] = num(s.igs_trace_drop_fraction);
  j["foci_trace_drop_fraction"] = num(s.foci_trace_drop_fraction);
  j["centralized_tighter_fraction"] = num(s.centralized_tighter_fraction);
  Json events = Json::array();
  for (const auto& f : res.fusions)
    events.push_back({{"run", f.run}, {"k", f.k}, {"variant", f.variant}, {"platform", f.platform}, {"sender", f.sender},
                      {"pre_sigma2_trace", f.pre_trace}, {"post_sigma2_trace", f.post_trace}, {"pre_position_error", f.pre_pos_err},
                      {"post_position_error", f.post_pos_err}});
  j["fusion_events"] = std::move(events);
  j["failures"] = res.failures;
  j["flags"] = res.flags;
  return j;
}

inline ScenarioConfig scenario_from_json(const Json& j) {
  ScenarioConfig c = config_get<bool>(j, "full_scale", false) ? ScenarioConfig::full_scale() : ScenarioConfig{};
  c.runs = config_get(j, "runs", c.runs);
  c.steps = config_get(j, "steps", c.steps);
  c.seed = config_get<std::uint64_t>(j, "seed", c.seed);
  c.fusion_steps = config_get(j, "fusion_steps", c.fusion_steps);
  c.components_per_mode = config_get(j, "components_per_mode", c.components_per_mode);
  c.imm.max_components = config_get(j, "max_components", c.imm.max_components);
  c.initial_mode = config_get(j, "initial_mode", c.initial_mode);
  c.dt = config_get(j, "dt", c.dt);
  c.intensity = config_get(j, "intensity", c.intensity);
  c.self_transition = config_get(j, "self_transition", c.self_transition);
  c.igs_samples = config_get(j, "igs_samples", c.igs_samples);
  c.omega_samples = config_get(j, "omega_samples", c.omega_samples);
  c.eta_samples = config_get(j, "eta_samples", c.eta_samples);
  if (j.contains("rule")) c.rule = parse_rule(config_get<std::string>(j, "rule", "minimax"));
  const auto vec4 = [&](const char* key, Vec& v) {
    if (!j.contains(key)) return;
    const auto xs = config_get<std::vector<double>>(j, key, {});
    if (xs.size() != 4) throw InputError(std::string("scenario: '") + key + "' needs 4 entries");
    v = Eigen::Map<const Vec>(xs.data(), 4);
  };
  vec4("x0", c.x0);
  vec4("p0_diag", c.p0_diag);
  vec4("component_cov_diag", c.component_cov_diag);
  if (j.contains("platforms")) {
    c.platforms.clear();
    for (const auto& p : j.at("platforms")) {
      const auto xy = config_get<std::vector<double>>(p, "position", {});
      if (xy.size() != 2) throw InputError("scenario: platform 'position' needs 2 entries");
      c.platforms.push_back({xy[0], xy[1], config_get(p, "r_range", 400.0), config_get(p, "r_rate", 1.0)});
    }
  }
  if (j.contains("methods")) {
    c.ddf_methods.clear();
    for (const auto& m : config_get<std::vector<std::string>>(j, "methods", {})) c.ddf_methods.push_back(parse_method_kind(m));
  }
  c.validate();
  return c;
}

}  // namespace gmddf
