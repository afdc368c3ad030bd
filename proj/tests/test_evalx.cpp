#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "plt/evalx.hpp"
#include "support.hpp"

using namespace plt;
using plt::testing::exact_moment_sample;

namespace {

Matrix random_spd(std::size_t d, RngStream& rng) {
  Matrix g(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) g(i, j) = rng.normal();
  Matrix m = symmetrized(g * g.transpose());
  for (std::size_t k = 0; k < d; ++k) m(k, k) += 0.5;
  return m;
}

Matrix random_rotation(std::size_t d, RngStream& rng) {
  // Gram–Schmidt on a Gaussian matrix
  Matrix q(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) q(i, j) = rng.normal();
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double proj = 0.0;
      for (std::size_t r = 0; r < d; ++r) proj += q(r, c) * q(r, p);
      for (std::size_t r = 0; r < d; ++r) q(r, c) -= proj * q(r, p);
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < d; ++r) norm += q(r, c) * q(r, c);
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < d; ++r) q(r, c) /= norm;
  }
  return q;
}

TransportParams noiseless_identity(std::size_t d) {
  TransportParams p = TransportParams::identity(d, 1.0);
  std::fill(p.log_d.begin(), p.log_d.end(), kMinLogVariance);
  return p;
}

}  // namespace

TEST(GeometryDiscrepancy, IdenticalModelsGiveZero) {
  RngStream rng(1, 0);
  const GaussianMeasure g(Vector{1.0, -1.0}, random_spd(2, rng));
  const ParticleCloud cloud = sample(GaussianMeasure::standard(2), 50, rng);
  EXPECT_NEAR(geometry_discrepancy(cloud, g, g), 0.0, 1e-24);
}

TEST(GeometryDiscrepancy, ConstantMeanGap) {
  const GaussianMeasure a(Vector{0.0, 0.0}, Matrix::identity(2));
  const GaussianMeasure b(Vector{0.3, 0.4}, Matrix::identity(2));
  RngStream rng(1, 1);
  EXPECT_NEAR(geometry_discrepancy(sample(GaussianMeasure::standard(2), 20, rng), a, b), 0.25, 1e-14);
}

TEST(GeometryDiscrepancy, OneDimensionalVarianceMismatch) {
  const GaussianMeasure target({0.0}, Matrix(1, 1, 1.0));
  const GaussianMeasure transported({0.0}, Matrix(1, 1, 2.0));
  RngStream rng(1, 2);
  const ParticleCloud cloud = sample(transported, 100000, rng);
  EXPECT_NEAR(geometry_discrepancy(cloud, target, transported), 0.5, 0.01);
}

TEST(GeometryDiscrepancy, MatchesDirectScoreDifference) {
  RngStream rng(1, 3);
  const GaussianMeasure t(Vector{0.5, 0.0, -1.0}, random_spd(3, rng));
  const GaussianMeasure q(Vector{0.0, 1.0, 0.0}, random_spd(3, rng));
  const ParticleCloud cloud = sample(q, 200, rng);
  double direct = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vector st = gaussian_score(t, cloud.point(i));
    const Vector sq = gaussian_score(q, cloud.point(i));
    for (std::size_t k = 0; k < 3; ++k) direct += (st[k] - sq[k]) * (st[k] - sq[k]);
  }
  direct /= 200.0;
  EXPECT_NEAR(geometry_discrepancy(cloud, t, q), direct, 1e-10 * direct);
}

TEST(GeometryDiscrepancy, ZeroOnlyWhenModelsCoincide) {
  RngStream rng(1, 4);
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianMeasure a(Vector{rng.normal(), rng.normal()}, random_spd(2, rng));
    GaussianMeasure b = a;
    const ParticleCloud cloud = sample(a, 30, rng);
    EXPECT_LE(geometry_discrepancy(cloud, a, b), 1e-20);
    b.mean[trial % 2] += 0.1;
    EXPECT_GT(geometry_discrepancy(cloud, a, b), 1e-6);
    GaussianMeasure c = a;
    c.covariance(0, 0) *= 1.5;
    EXPECT_GT(geometry_discrepancy(cloud, a, c), 1e-6);
  }
}

TEST(GeometryDiscrepancy, Preconditions) {
  const GaussianMeasure g = GaussianMeasure::standard(2);
  EXPECT_THROW(geometry_discrepancy(ParticleCloud(2, {0, 0}), g, g), Error);
  EXPECT_THROW(geometry_discrepancy(ParticleCloud(3, {0, 0, 0, 1, 1, 1}), g, g), Error);
  try {
    geometry_discrepancy(ParticleCloud(2, {0, 0, 1, 1}), g, GaussianMeasure({0, 0}, Matrix(2, 2, 0.0)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotPSD);
  }
}

TEST(CovarianceCalibration, HandValues) {
  TransportParams p = TransportParams::identity(2, 1.0);
  p.log_d = {std::log(2.0), std::log(0.5)};
  const GaussianMeasure matched(Vector(2, 0.0), Matrix::diagonal(Vector{2.0, 0.5}));
  EXPECT_NEAR(covariance_calibration(p, GaussianMeasure::standard(2), matched), 0.0, 1e-28);

  const TransportParams one = TransportParams::identity(1, 1.0);
  EXPECT_NEAR(covariance_calibration(one, GaussianMeasure::standard(1), GaussianMeasure({0.0}, Matrix(1, 1, 2.0))), 1.0, 1e-14);
  EXPECT_THROW(covariance_calibration(one, GaussianMeasure::standard(2), GaussianMeasure::standard(2)), Error);
}

TEST(CovarianceCalibration, QuadraticHomogeneity) {
  RngStream rng(2, 0);
  const Matrix a = random_spd(3, rng);
  const Matrix b = random_spd(3, rng);
  const double base = covariance_calibration(a, b);
  // scaling the mismatch Σ_t − Σ_φ by c = 3
  const Matrix scaled = b + 3.0 * (a - b);
  EXPECT_NEAR(covariance_calibration(scaled, b), 9.0 * base, 1e-10 * base);
}

TEST(CovarianceCalibration, RotationInvariance) {
  RngStream rng(2, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_spd(3, rng);
    const Matrix b = random_spd(3, rng);
    const Matrix q = random_rotation(3, rng);
    const double base = covariance_calibration(a, b);
    const double rotated = covariance_calibration(q * a * q.transpose(), q * b * q.transpose());
    EXPECT_NEAR(rotated, base, 1e-10 * std::max(1.0, base));
  }
}

TEST(TransportEnergy, BuresOracleForIdentityParams) {
  const GaussianMeasure gs = GaussianMeasure::standard(2);
  const GaussianMeasure gt(Vector{2.0, 0.0}, Matrix::identity(2));
  const ParticleCloud src = exact_moment_sample(gs, 500, 3, 0);
  const ParticleCloud tgt = exact_moment_sample(gt, 500, 3, 1);
  RngStream rng(3, 2);
  const double e = transport_energy(src, noiseless_identity(2), tgt, 0.05, 200, rng);
  EXPECT_NEAR(e, 4.0, 0.2);

  TransportParams shifted = noiseless_identity(2);
  shifted.b = {2.0, 0.0};
  RngStream rng2(3, 2);
  const double e2 = transport_energy(src, shifted, tgt, 0.05, 200, rng2);
  EXPECT_LT(e2, e);
  EXPECT_LT(e2, 0.5);
}

TEST(TransportEnergy, IdentityParamsMatchPlainSinkhorn) {
  RngStream rng(4, 0);
  const ParticleCloud src = sample(GaussianMeasure::standard(2), 200, rng);
  const ParticleCloud tgt = sample(GaussianMeasure(Vector{1.0, 0.5}, Matrix::identity(2)), 200, rng);
  const double plain = sinkhorn_between(src, tgt, 0.05, 100).cost;
  RngStream energy_rng(4, 1);
  EXPECT_NEAR(transport_energy(src, noiseless_identity(2), tgt, 0.05, 100, energy_rng), plain, 1e-5);
}

TEST(TransportEnergy, SameCloudStaysNearEntropicFloor) {
  const ParticleCloud x = exact_moment_sample(GaussianMeasure::standard(2), 300, 5, 0);
  RngStream rng(5, 1);
  const double e = transport_energy(x, noiseless_identity(2), x, 0.05, 200, rng);
  EXPECT_GE(e, 0.0);
  EXPECT_LT(e, 0.2);
}

TEST(VarianceTrace, ArithmeticMean) {
  EXPECT_NEAR(variance_trace(TransportParams::identity(3, 1.0)), 1.0, 1e-15);
  TransportParams p = TransportParams::identity(3, 1.0);
  p.log_d = {0.0, std::log(2.0), std::log(3.0)};
  EXPECT_NEAR(variance_trace(p), 2.0, 1e-14);
}

TEST(ZStatistic, HandCases) {
  try {
    z_statistic(std::vector<double>{0, 0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroVariance);
  }
  const ZTest zero = z_statistic(std::vector<double>{1, -1, 1, -1});
  EXPECT_EQ(zero.z, 0.0);
  EXPECT_EQ(zero.p_two_sided, 1.0);
  const ZTest t = z_statistic(std::vector<double>{2, 0, 2, 0});
  EXPECT_NEAR(t.z, std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(t.z, 1.7321, 1e-4);
  EXPECT_NEAR(t.p_two_sided, 0.0833, 1e-4);
  EXPECT_THROW(z_statistic(std::vector<double>{1.0}), Error);
}

TEST(ZStatistic, SignFollowsMean) {
  RngStream rng(6, 0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> d(5);
    for (double& x : d) x = rng.normal() + 0.3;
    double mean = 0.0;
    for (double x : d) mean += x;
    const ZTest t = z_statistic(d);
    EXPECT_EQ(t.z > 0, mean > 0);
    EXPECT_GE(t.p_two_sided, 0.0);
    EXPECT_LE(t.p_two_sided, 1.0);
  }
}

TEST(LinearHead, LeastSquaresRecoversNoiselessWeights) {
  RngStream rng(7, 0);
  const ParticleCloud x = sample(GaussianMeasure::standard(3), 100, rng);
  const LinearHead truth{Vector{0.5, -1.0, 2.0}, 0.25};
  std::vector<double> y;
  for (std::size_t i = 0; i < x.size(); ++i) y.push_back(truth.predict(x.point(i)));
  const LinearHead fit = fit_least_squares(x, y);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(fit.w[k], truth.w[k], 1e-8);
  EXPECT_NEAR(fit.w0, truth.w0, 1e-8);
  EXPECT_NEAR(mean_squared_error(fit, x, y), 0.0, 1e-14);
  EXPECT_EQ(LinearHead::unflatten(truth.flatten()), truth);
}

TEST(MetricCsv, HeaderQuotingAndLineEndings) {
  std::ostringstream os;
  write_metric_csv(os, {{"severe.proposed", 3, 0.5, 1.25, 0.01, 2.0}, {"odd,\"name\"", 4, 0, 0, 0, 0}});
  EXPECT_EQ(os.str(),
            "method,seed,geometry,risk,variance,energy\r\n"
            "severe.proposed,3,0.5,1.25,0.01,2\r\n"
            "\"odd,\"\"name\"\"\",4,0,0,0,0\r\n");
  MetricRecord bad{"x", 0, -1.0, 0, 0, 0};
  EXPECT_THROW(bad.validate(), Error);
}
