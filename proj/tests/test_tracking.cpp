#include "gmddf/tracking.hpp"

#include <gtest/gtest.h>

namespace {

using namespace gmddf;

Vec state(double x, double xd, double y, double yd) { return (Vec(4) << x, xd, y, yd).finished(); }

TEST(VanLoan, StraightModeMatchesConstantVelocityClosedForm) {
  for (double dt : {0.5, 1.0, 2.0}) {
    const Mat q = van_loan_q(2.0, 0.0, dt);
    Mat block(2, 2);
    block << dt * dt * dt / 3.0, dt * dt / 2.0, dt * dt / 2.0, dt;
    block *= 2.0;
    EXPECT_LT((q.block(0, 0, 2, 2) - block).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((q.block(2, 2, 2, 2) - block).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(q.block(0, 2, 2, 2).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(VanLoan, ZeroIntensityGivesZero) { EXPECT_LT(van_loan_q(0.0, 0.15, 1.0).cwiseAbs().maxCoeff(), 1e-15); }

TEST(VanLoan, TransitionMatchesTurnClosedFormAndNoiseIsPsd) {
  const auto model = JmlsModel::make();
  for (int m = 0; m < kModes; ++m) {
    const auto mu = static_cast<std::size_t>(m);
    const auto vl = van_loan(turn_generator(model.omega[mu]), Mat::Identity(4, 4), 1.0);
    EXPECT_LT((vl.f - model.f[mu]).cwiseAbs().maxCoeff(), 1e-12) << "mode " << m;
    Eigen::SelfAdjointEigenSolver<Mat> es(model.q[mu]);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0) << "mode " << m;
    EXPECT_LT((model.q[mu] - model.q[mu].transpose()).cwiseAbs().maxCoeff(), 1e-15);
  }
  // a turn keeps speed
  const Vec v = model.f[4] * state(0, 300, 0, 200);
  EXPECT_NEAR(std::hypot(v(1), v(3)), std::hypot(300.0, 200.0), 1e-9);
}

TEST(JmlsModel, TransitionMatrixIsColumnStochastic) {
  const auto model = JmlsModel::make();
  for (int c = 0; c < kModes; ++c) EXPECT_NEAR(model.a.col(c).sum(), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(model.a(0, 0), 0.85);
  EXPECT_DOUBLE_EQ(model.a(3, 1), 0.0375);
}

TEST(SimulateTruth, EmpiricalSelfTransitionFrequency) {
  const auto model = JmlsModel::make();
  Rng rng(3);
  const auto t = simulate_truth(model, state(0, 0, 0, 10), 100000, 0, rng);
  std::size_t same = 0;
  for (std::size_t k = 0; k + 1 < t.modes.size(); ++k) same += t.modes[k] == t.modes[k + 1] ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(same) / static_cast<double>(t.modes.size() - 1), 0.85, 0.01);
}

TEST(SimulateTruth, StraightModeOnlyKeepsSpeed) {
  auto model = JmlsModel::make(1.0, 1e-6, 1.0);
  Rng rng(4);
  const auto t = simulate_truth(model, state(5000, 0, 100, 375), 100, 0, rng);
  for (int m : t.modes) EXPECT_EQ(m, 0);
  EXPECT_NEAR(t.states.back()(2), 100 + 375 * 100, 1.0);
  EXPECT_NEAR(std::hypot(t.states.back()(1), t.states.back()(3)), 375.0, 0.1);
}

TEST(Measurement, GeometryAndHandFormula) {
  const Platform p{100.0, -50.0};
  // on the platform's +x axis, moving +x
  const Vec z = measure_exact(p, state(1100, 30, -50, 0));
  EXPECT_DOUBLE_EQ(z(0), 1000.0);
  EXPECT_DOUBLE_EQ(z(1), 30.0);
  const Vec s = state(-2000, 120, 3000, -75);
  const double dx = -2100, dy = 3050, r = std::sqrt(dx * dx + dy * dy);
  const Vec w = measure_exact(p, s);
  EXPECT_NEAR(w(0), r, 1e-12 * r);
  EXPECT_NEAR(w(1), (dx * 120 + dy * -75) / r, 1e-12);
  EXPECT_THROW(measure_exact(p, state(100.5, 0, -50, 0)), Error);
}

TEST(Measurement, JacobianMatchesFiniteDifferences) {
  Rng rng(5);
  const Platform p{3000.0, -1000.0};
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const Vec s = state(20000 * (uniform01(rng) - 0.5), 400 * (uniform01(rng) - 0.5), 20000 * (uniform01(rng) - 0.5), 400 * (uniform01(rng) - 0.5));
    const Mat h = measurement_jacobian(p, s);
    for (int i = 0; i < 4; ++i) {
      const double step = 1e-3;
      Vec a = s, b = s;
      a(i) += step;
      b(i) -= step;
      const Vec fd = (measure_exact(p, a) - measure_exact(p, b)) / (2 * step);
      worst = std::max(worst, (fd - h.col(i)).cwiseAbs().maxCoeff());
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Imm, SingleGaussianSingleModeReproducesKalmanRecursion) {
  // one effective mode (A = I, every bank identical) and a near-linear update:
  // the EKF update must equal the textbook Kalman step at the linearization point
  auto model = JmlsModel::make(1.0, 2.0, 1.0);
  const Vec mu = state(8000, 10, 6000, -20);
  const Mat p0 = Vec(state(400, 25, 300, 16)).asDiagonal();
  PlatformState st;
  for (int m = 0; m < kModes; ++m) st.banks.push_back(single_gaussian(mu, p0));
  st.pi = Vec::Constant(kModes, 0.2);
  const SensorGroup g{{Platform{0.0, 0.0}}};
  const Vec z = (Vec(2) << 10010.0, 2.0).finished();
  const auto next = imm_step(st, model, g, z);

  const Mat f = model.f[0];
  const Vec xp = f * mu;
  const Mat pp = f * p0 * f.transpose() + model.q[0];
  const Mat h = measurement_jacobian(g.platforms[0], xp);
  const Mat s = h * pp * h.transpose() + g.noise();
  const Mat k = pp * h.transpose() * s.inverse();
  const Vec xu = xp + k * (z - measure_exact(g.platforms[0], xp));
  const Mat pu = (Mat::Identity(4, 4) - k * h) * pp;
  const auto& c = next.banks[0][0];
  EXPECT_LT((c.mean() - xu).cwiseAbs().maxCoeff(), 1e-8 * xu.cwiseAbs().maxCoeff());
  EXPECT_LT((c.cov() - pu).cwiseAbs().maxCoeff(), 1e-8 * pu.cwiseAbs().maxCoeff());
}

TEST(Imm, ModeProbabilitiesStayNormalizedAndBanksCapped) {
  const auto model = JmlsModel::make();
  Rng rng(6);
  const Vec x0 = state(5000, 0, 100, 375);
  auto st = initial_state(x0, state(500, 100, 500, 100), state(2000, 1000, 2000, 1000), 12, rng);
  const auto truth = simulate_truth(model, x0, 20, 0, rng);
  const SensorGroup g{{Platform{0.0, 0.0}}};
  for (int k = 1; k <= 20; ++k) {
    st = imm_step(st, model, g, measure(g.platforms[0], truth.states[static_cast<std::size_t>(k)], rng));
    EXPECT_NEAR(st.pi.sum(), 1.0, 1e-12);
    EXPECT_NO_THROW(st.validate(12));
  }
}

TEST(Imm, CentralizedFilterTrilaterates) {
  const auto model = JmlsModel::make();
  ScenarioConfig cfg;
  Rng rng(7);
  auto st = initial_state(cfg.x0, cfg.p0_diag, cfg.component_cov_diag, 12, rng);
  const auto truth = simulate_truth(model, cfg.x0, 60, 0, rng);
  const SensorGroup all{cfg.platforms};
  double sq = 0.0;
  int n = 0;
  for (int k = 1; k <= 60; ++k) {
    const auto& x = truth.states[static_cast<std::size_t>(k)];
    Vec z(6);
    for (int i = 0; i < 3; ++i) z.segment(2 * i, 2) = measure(all.platforms[static_cast<std::size_t>(i)], x, rng);
    st = imm_step(st, model, all, z);
    if (k > 30) {
      const Vec e = mixture_moments(marginal_mixture(st)).mean - x;
      sq += e(0) * e(0) + e(2) * e(2);
      ++n;
    }
  }
  EXPECT_LT(std::sqrt(sq / n), 50.0);
}

TEST(Ddf, IdenticalPlatformsLeaveBeliefUnchanged) {
  const auto model = JmlsModel::make();
  Rng rng(8);
  ScenarioConfig cfg;
  auto st = initial_state(cfg.x0, cfg.p0_diag, cfg.component_cov_diag, 4, rng);
  const SensorGroup g{{cfg.platforms[0]}};
  const auto truth = simulate_truth(model, cfg.x0, 5, 0, rng);
  for (int k = 1; k <= 5; ++k) st = imm_step(st, model, g, measure(g.platforms[0], truth.states[static_cast<std::size_t>(k)], rng));
  DdfOptions opt;
  opt.method.kind = MethodKind::Igs;
  opt.method.n_samples = 20000;
  opt.eta_samples = 20000;
  const auto out = ddf_event(st, st, opt, rng);
  for (int m = 0; m < kModes; ++m) {
    const auto mu = static_cast<std::size_t>(m);
    EXPECT_LT(kld_monte_carlo(st.banks[mu], out.state.banks[mu], 20000, rng), 0.02) << "mode " << m;
    EXPECT_NEAR(out.log_eta[mu], 0.0, 0.02);  // p^ω p^(1−ω) = p integrates to one
  }
  EXPECT_LT((out.state.pi - st.pi).cwiseAbs().maxCoeff(), 0.02);
}

TEST(Ddf, RejectsNonWepMethods) {
  PlatformState st;
  DdfOptions opt;
  opt.method.kind = MethodKind::Dls;
  Rng rng(9);
  EXPECT_THROW(ddf_event(st, st, opt, rng), Error);
}

TEST(Scenario, ConfigParsingAndValidation) {
  const auto c = scenario_from_json(Json::parse(R"({"runs": 2, "steps": 30, "fusion_steps": [10, 30], "methods": ["igs"],
    "platforms": [{"position": [0, 0]}, {"position": [1000, 0], "r_range": 100}]})"));
  EXPECT_EQ(c.runs, 2);
  EXPECT_EQ(c.platforms.size(), 2u);
  EXPECT_DOUBLE_EQ(c.platforms[1].r_range, 100.0);
  EXPECT_EQ(c.ddf_methods.size(), 1u);
  EXPECT_THROW(scenario_from_json(Json::parse(R"({"steps": 30, "fusion_steps": [40]})")), InputError);
  EXPECT_THROW(scenario_from_json(Json::parse(R"({"methods": ["dls"]})")), InputError);
  const auto full = scenario_from_json(Json::parse(R"({"full_scale": true})"));
  EXPECT_EQ(full.steps, 422);
  EXPECT_EQ(full.fusion_steps.size(), 7u);
}

TEST(Scenario, SmallRunIsCompleteAndDeterministic) {
  ScenarioConfig cfg;
  cfg.runs = 2;
  cfg.steps = 12;
  cfg.fusion_steps = {6, 12};
  cfg.components_per_mode = 3;
  cfg.imm.max_components = 3;
  cfg.igs_samples = cfg.omega_samples = cfg.eta_samples = 200;
  set_thread_count(1);
  const auto a = run_scenario(cfg);
  set_thread_count(2);
  const auto b = run_scenario(cfg);
  set_thread_count(0);
  EXPECT_TRUE(a.failures.empty());
  // centralized + 3 platforms for each of independent, igs, foci
  EXPECT_EQ(a.rows.size(), 2u * 12u * (1 + 3 * 3));
  EXPECT_EQ(a.fusions.size(), 2u * 2u * 3u * 2u);
  EXPECT_EQ(track_csv(a), track_csv(b));
  const auto j = tracking_summary_json(a, cfg);
  EXPECT_EQ(j["fusion_events"].size(), a.fusions.size());
  EXPECT_TRUE(j["median_position_rmse_at_fusion"].contains("ddf-igs"));
}

}  // namespace
