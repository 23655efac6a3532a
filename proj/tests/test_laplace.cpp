#include "gmddf/laplace.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

namespace {

using namespace gmddf;
using gmddf::testing::fd_gradient;
using gmddf::testing::fd_jacobian;
using gmddf::testing::random_mixture;
using gmddf::testing::random_spd;
using gmddf::testing::random_vec;

QuotientMixand mixand(const GaussianComponent& num, CommonInfoPtr u, double log_w = 0.0) {
  return {0, 0, num.with_weight(1.0), log_w, std::move(u), std::nullopt, std::nullopt};
}

TEST(LaplaceMixand, GaussianDenominatorIsOneNewtonStep) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianComponent num(1, random_vec(2, rng, -2, 2), random_spd(2, rng, 0.3, 1.0));
    const Mat su = random_spd(2, rng, 4.0, 8.0);
    const Vec mu_u = random_vec(2, rng, -2, 2);
    const auto m = mixand(num, make_exact_common(single_gaussian(mu_u, su)));
    LaplaceOptions opt;
    opt.multi_start = false;
    const auto c = laplace_mixand(m, opt);
    const Mat p = num.precision() - su.inverse();
    const Vec mode = p.inverse() * (num.precision() * num.mean() - su.inverse() * mu_u);
    EXPECT_LE(c.iterations, 2);
    EXPECT_LT((c.mode - mode).norm(), 1e-9);
    EXPECT_LT((c.cov - p.inverse()).norm(), 1e-9);
    EXPECT_FALSE(c.flagged());
  }
}

TEST(LaplaceMixand, FlatObjectiveFallsBackToNumerator) {
  Rng rng(2);
  const Vec mu = random_vec(2, rng, -1, 1);
  const Mat s = random_spd(2, rng);
  const auto m = mixand(GaussianComponent(1, mu, s), make_exact_common(single_gaussian(mu, s)));
  const auto c = laplace_mixand(m);
  EXPECT_TRUE(c.flat_fallback);
  EXPECT_LT((c.mode - mu).norm(), 1e-12);
  EXPECT_EQ(c.cov, s);
}

TEST(LaplaceMixand, ModeBeatsRandomSearch) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pi = random_mixture(2, 2, rng, 2.0, 0.5, 1.5);
    const auto pj = random_mixture(2, 2, rng, 2.0, 0.5, 1.5);
    const auto pc = random_mixture(2, 3, rng, 3.0, 2.0, 5.0);
    const auto q = expand_quotient(pi, pj, make_exact_common(pc));
    for (const auto& m : q.mixands()) {
      const auto c = laplace_mixand(m);
      const MixandObjective obj{m};
      const Vec sd = m.numerator.cov().diagonal().cwiseSqrt();
      std::uniform_real_distribution<double> u(-4, 4);
      for (int k = 0; k < 1000; ++k) {
        Vec x = m.numerator.mean();
        for (Index i = 0; i < 2; ++i) x(i) += u(rng) * sd(i);
        ASSERT_LE(c.g_min, obj.value(x) + 1e-9);
      }
      if (!c.flat_fallback) {
        EXPECT_FALSE(c.unconverged);
        EXPECT_LT(c.grad_norm, 1e-6);
        EXPECT_GT(c.cov.llt().matrixL().toDenseMatrix().diagonal().minCoeff(), 0.0);
      }
    }
  }
}

TEST(LaplaceMixand, AnalyticDerivativesMatchFiniteDifferences) {
  Rng rng(4);
  double max_err = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto pi = random_mixture(2, 2, rng);
    const auto pj = random_mixture(2, 2, rng);
    const bool exact = trial % 2 == 0;
    auto u = exact ? make_exact_common(random_mixture(2, 3, rng, 3.0, 1.0, 4.0)) : make_wep_common(pi, pj, uniform01(rng));
    const auto q = expand_quotient(pi, pj, u);
    const auto& m = q[trial % q.size()];
    const MixandObjective obj{m};
    const Vec x = m.numerator.mean() + random_vec(2, rng, -1, 1);
    const auto d = obj.derivatives(x);
    const Vec g = fd_gradient([&](const Vec& y) { return obj.value(y); }, x);
    const Mat h = fd_jacobian([&](const Vec& y) { return Vec(obj.derivatives(y).gradient); }, x);
    max_err = std::max({max_err, (g - d.gradient).cwiseAbs().maxCoeff(), (h - d.hessian).cwiseAbs().maxCoeff()});
  }
  EXPECT_LT(max_err, 1e-4);
}

TEST(LaplaceMixand, SymmetricBimodalIsFlaggedAmbiguous) {
  // u is a narrow bump at the numerator mean; dividing carves two symmetric modes
  const auto u_gm = GaussianMixture({GaussianComponent(0.5, Vec::Zero(1), Mat::Constant(1, 1, 0.2)),
                                     GaussianComponent(0.5, Vec::Zero(1), Mat::Constant(1, 1, 100.0))});
  const auto m = mixand(GaussianComponent(1, Vec::Zero(1), Mat::Constant(1, 1, 4.0)), make_exact_common(u_gm));
  const auto c = laplace_mixand(m);
  EXPECT_TRUE(c.multimodal);
  EXPECT_TRUE(c.mode_ambiguous);
  EXPECT_GT(std::abs(c.mode(0)), 0.5);
}

TEST(LaplaceMoments, ExactForGaussianQuotient) {
  const GaussianComponent num(1, Vec::Constant(1, 1.0), Mat::Constant(1, 1, 1.0));
  const auto m = mixand(num, make_exact_common(single_gaussian(Vec::Zero(1), Mat::Constant(1, 1, 2.0))), std::log(0.4));
  const auto est = laplace_moment_estimate(m);
  // same completed square as the bound test: ∫ = √2·√(4π)·e^{1/2}, mode 2, variance 2
  EXPECT_NEAR(std::exp(est.log_w0), 0.4 * std::sqrt(2.0) * std::sqrt(4 * M_PI) * std::exp(0.5), 1e-10);
  EXPECT_NEAR(est.mean(0), 2.0, 1e-10);
  EXPECT_NEAR(est.cov(0, 0), 2.0, 1e-10);
}

TEST(LaplaceMoments, SkewedMixandWithinSanityBand) {
  Rng rng(5);
  const auto pi = random_mixture(2, 1, rng, 1.0, 0.5, 1.0);
  const auto pc = GaussianMixture({GaussianComponent(0.3, random_vec(2, rng, -1, 1), random_spd(2, rng, 1.0, 2.0)),
                                   GaussianComponent(0.7, random_vec(2, rng, -1, 1), random_spd(2, rng, 3.0, 6.0))});
  const auto q = expand_quotient(pi, pi, make_exact_common(pc));
  const auto est = laplace_moment_estimate(q[0]);
  const double h = 0.02;
  double acc = 0;
  for (double a = -10; a < 10; a += h)
    for (double b = -10; b < 10; b += h) {
      Vec x(2);
      x << a, b;
      acc += std::exp(q[0].log_pre_weight + q[0].log_eval(x)) * h * h;
    }
  EXPECT_NEAR(std::exp(est.log_w0) / acc, 1.0, 0.3);
}

TEST(LaplaceProposal, SingleMixandAndNormalizedWeights) {
  Rng rng(6);
  const auto pi = random_mixture(2, 1, rng);
  const auto q1 = expand_quotient(pi, pi, make_exact_common(random_mixture(2, 2, rng, 3, 3, 6)));
  const auto prop1 = laplace_gm_proposal(q1);
  ASSERT_EQ(prop1.size(), 1u);
  EXPECT_LT((prop1[0].mean() - laplace_mixand(q1[0]).mode).norm(), 1e-12);
  const auto q = expand_quotient(random_mixture(2, 3, rng), random_mixture(2, 3, rng), make_exact_common(random_mixture(2, 3, rng, 3, 3, 6)));
  const auto prop = laplace_gm_proposal(q);
  EXPECT_EQ(prop.size(), q.size());
  EXPECT_TRUE(prop.is_normalized());
  const auto w = q.normalized_pre_weights();
  for (std::size_t k = 0; k < q.size(); ++k) EXPECT_NEAR(prop[k].weight(), w[k], 1e-12);
}

TEST(LaplaceProposal, DivergenceListsMixands) {
  // u narrower than the numerator: g is unbounded below, Newton must run away
  const auto m = mixand(GaussianComponent(1, Vec::Constant(1, 0.5), Mat::Constant(1, 1, 1.0)),
                        make_exact_common(single_gaussian(Vec::Zero(1), Mat::Constant(1, 1, 0.25))));
  QuotientPosterior q({m}, m.common);
  EXPECT_THROW(laplace_mixand(m), LaplaceDiverged);
  try {
    laplace_gm_proposal(q);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("mixands: 0"), std::string::npos);
  }
}

}  // namespace
