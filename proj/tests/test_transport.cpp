#include <gtest/gtest.h>

#include <cmath>

#include "plt/transport.hpp"

using namespace plt;

namespace {

GaussianMeasure random_gaussian(std::size_t d, RngStream& rng) {
  Matrix g(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) g(i, j) = rng.normal() / std::sqrt(static_cast<double>(d));
  Matrix cov = symmetrized(g * g.transpose());
  for (std::size_t k = 0; k < d; ++k) cov(k, k) += 0.3;
  Vector mean(d);
  for (double& m : mean) m = rng.normal();
  return {mean, cov};
}

TransportParams random_params(std::size_t d, RngStream& rng) {
  TransportParams p = TransportParams::identity(d, 1.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) p.A(i, j) += 0.3 * rng.normal();
    p.b[i] = 0.5 * rng.normal();
    p.log_d[i] = std::log(0.1) + rng.uniform() * std::log(20.0);
  }
  return p;
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

Vector finite_difference(const TransportParams& p, const GaussianMeasure& gs, const GaussianMeasure& gt, double lambda) {
  const Vector x = p.flatten();
  Vector out(x.size());
  const double h = 1e-5;
  for (std::size_t k = 0; k < x.size(); ++k) {
    Vector xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    const double fp = transport_loss(TransportParams::unflatten(p.dim(), xp), gs, gt, lambda).total;
    const double fm = transport_loss(TransportParams::unflatten(p.dim(), xm), gs, gt, lambda).total;
    out[k] = (fp - fm) / (2 * h);
  }
  return out;
}

}  // namespace

TEST(TransportMean, HandCases) {
  const TransportParams id = TransportParams::identity(2, 1.0);
  EXPECT_EQ(transport_mean(id, std::vector<double>{1.5, -2.0}), (Vector{1.5, -2.0}));
  TransportParams constant{Matrix(2, 2, 0.0), {3.0, 4.0}, {0.0, 0.0}};
  EXPECT_EQ(transport_mean(constant, std::vector<double>{9.0, 9.0}), (Vector{3.0, 4.0}));
  TransportParams p{2.0 * Matrix::identity(2), {1.0, 1.0}, {0.0, 0.0}};
  EXPECT_EQ(transport_mean(p, std::vector<double>{1.0, 0.0}), (Vector{3.0, 1.0}));
  EXPECT_THROW(transport_mean(p, std::vector<double>{1.0}), Error);
}

TEST(TransportSample, VanishingNoiseMatchesMean) {
  TransportParams p = TransportParams::identity(3, 1.0);
  std::fill(p.log_d.begin(), p.log_d.end(), -1e300);
  RngStream rng(1, 0);
  const Vector z{0.1, 0.2, 0.3};
  const Vector s = transport_sample(p, z, rng);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(s[k], z[k], 1e-5);
}

TEST(TransportSample, UnitNoiseVariance) {
  const TransportParams p = TransportParams::identity(2, 1.0);
  RngStream rng(1, 1);
  const Vector z{0.0, 0.0};
  const int n = 100000;
  Vector s(2, 0.0), s2(2, 0.0);
  for (int i = 0; i < n; ++i) {
    const Vector x = transport_sample(p, z, rng);
    for (int k = 0; k < 2; ++k) {
      s[k] += x[k];
      s2[k] += x[k] * x[k];
    }
  }
  for (int k = 0; k < 2; ++k) EXPECT_NEAR(s2[k] / n - (s[k] / n) * (s[k] / n), 1.0, 0.02);
}

TEST(TransportSample, Deterministic) {
  const TransportParams p = TransportParams::identity(2, 0.5);
  RngStream a(4, 4), b(4, 4);
  EXPECT_EQ(transport_sample(p, std::vector<double>{1, 2}, a), transport_sample(p, std::vector<double>{1, 2}, b));
}

TEST(Pushforward, ClosedFormCases) {
  RngStream rng(2, 0);
  const GaussianMeasure g = random_gaussian(3, rng);
  TransportParams id = TransportParams::identity(3, 1.0);
  std::fill(id.log_d.begin(), id.log_d.end(), kMinLogVariance);
  const GaussianMeasure same = pushforward_gaussian(id, g);
  EXPECT_LE((same.covariance - g.covariance).max_abs(), 1e-11);
  EXPECT_EQ(same.mean, g.mean);

  TransportParams scale{Matrix(1, 1, 2.0), {0.0}, {0.0}};
  EXPECT_NEAR(pushforward_gaussian(scale, GaussianMeasure::standard(1)).covariance(0, 0), 5.0, 1e-14);

  TransportParams constant{Matrix(3, 3, 0.0), {1.0, 2.0, 3.0}, Vector(3, std::log(0.7))};
  const GaussianMeasure c = pushforward_gaussian(constant, g);
  EXPECT_EQ(c.mean, (Vector{1.0, 2.0, 3.0}));
  EXPECT_LE((c.covariance - 0.7 * Matrix::identity(3)).max_abs(), 1e-14);
}

TEST(Pushforward, CovarianceAlwaysPsd) {
  RngStream rng(2, 1);
  for (int t = 0; t < 50; ++t) {
    const GaussianMeasure g = random_gaussian(4, rng);
    const TransportParams p = random_params(4, rng);
    EXPECT_NO_THROW(cholesky(pushforward_gaussian(p, g).covariance));
  }
}

TEST(TransportLoss, PerfectAlignmentIsZero) {
  RngStream rng(3, 0);
  const GaussianMeasure g = random_gaussian(3, rng);
  TransportParams id = TransportParams::identity(3, 1.0);
  std::fill(id.log_d.begin(), id.log_d.end(), kMinLogVariance);
  const TransportLossValue v = transport_loss(id, g, g, 2.0);
  EXPECT_NEAR(v.total, 0.0, 1e-9);
}

TEST(TransportLoss, OneDimensionalCostExpansion) {
  const double t = 0.7, var = 0.3;
  TransportParams p{Matrix(1, 1, 1.0), {t}, {std::log(var)}};
  for (double s2 : {0.5, 3.0}) {
    const GaussianMeasure gs({1.0}, Matrix(1, 1, s2));
    EXPECT_NEAR(transport_loss(p, gs, gs, 0.0).cost_term, t * t + var, 1e-14);
  }
}

TEST(TransportLoss, DecompositionIdentityAndLambdaZero) {
  RngStream rng(3, 1);
  for (int t = 0; t < 50; ++t) {
    const GaussianMeasure gs = random_gaussian(3, rng);
    const GaussianMeasure gt = random_gaussian(3, rng);
    const TransportParams p = random_params(3, rng);
    const double lambda = 3.0 * rng.uniform();
    const TransportLossValue v = transport_loss(p, gs, gt, lambda);
    EXPECT_NEAR(v.total, v.cost_term + lambda * v.kl_term, 1e-12 * std::max(1.0, std::abs(v.total)));
    EXPECT_GE(v.kl_term, -1e-12);
    EXPECT_GE(v.cost_term, 0.0);
    EXPECT_EQ(transport_loss(p, gs, gt, 0.0).total, v.cost_term);
  }
}

TEST(TransportLoss, CostMatchesMonteCarloOracle) {
  RngStream rng(3, 2);
  const GaussianMeasure gs = random_gaussian(2, rng);
  const GaussianMeasure gt = random_gaussian(2, rng);
  const TransportParams p = random_params(2, rng);
  RngStream mc_rng(3, 3);
  const MonteCarloLoss mc = transport_loss_monte_carlo(p, Measure(gs), gt, 1.0, 200000, mc_rng);
  const TransportLossValue exact = transport_loss(p, gs, gt, 1.0);
  EXPECT_LE(std::abs(mc.value.cost_term - exact.cost_term), 3.0 * mc.cost_standard_error);
  EXPECT_NEAR(mc.value.kl_term, exact.kl_term, 0.02 * std::max(1.0, exact.kl_term));
}

TEST(TransportLossGrad, LambdaZeroOffsetGradientByHand) {
  RngStream rng(4, 0);
  const GaussianMeasure gs = random_gaussian(3, rng);
  const TransportParams p = random_params(3, rng);
  const Vector g = transport_loss_grad(p, gs, gs, 0.0);
  const auto [r, ami] = detail::displacement(p, gs);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(g[9 + k], 2.0 * r[k], 1e-12);
}

TEST(TransportLossGrad, MatchesFiniteDifferences) {
  RngStream rng(4, 1);
  double worst = 0.0;
  for (std::size_t d : {1, 2, 8}) {
    for (int t = 0; t < 34; ++t) {
      const GaussianMeasure gs = random_gaussian(d, rng);
      const GaussianMeasure gt = random_gaussian(d, rng);
      const TransportParams p = random_params(d, rng);
      const double lambda = 2.0 * rng.uniform();
      const Vector g = transport_loss_grad(p, gs, gt, lambda);
      const Vector fd = finite_difference(p, gs, gt, lambda);
      for (std::size_t k = 0; k < g.size(); ++k) worst = std::max(worst, relative_error(g[k], fd[k]));
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(TransportLossGrad, StationaryAtMatchedMinimum) {
  // With g_s = g_t the identity map has zero displacement cost and zero KL;
  // noise variances sit at the lower clamp where their slope vanishes.
  RngStream rng(4, 2);
  const GaussianMeasure g = random_gaussian(4, rng);
  TransportParams p = TransportParams::identity(4, 1.0);
  std::fill(p.log_d.begin(), p.log_d.end(), kMinLogVariance);
  const Vector grad = transport_loss_grad(p, g, g, 1.5);
  EXPECT_LE(std::sqrt(squared_norm(grad)), 1e-8);
}

TEST(TransportParams, FlattenRoundTripAndJson) {
  RngStream rng(5, 0);
  const TransportParams p = random_params(3, rng);
  EXPECT_EQ(TransportParams::unflatten(3, p.flatten()), p);
  const nlohmann::json j = to_json(p);
  EXPECT_EQ(j.at("dim"), 3);
  EXPECT_EQ(transport_params_from_json(nlohmann::json::parse(j.dump())), p);
  EXPECT_THROW(transport_params_from_json(nlohmann::json{{"dim", 2}}), Error);
}
