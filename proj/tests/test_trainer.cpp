#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "plt/trainer.hpp"

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

// Source N(0, I), target a shifted and stretched copy, labels linear in the source point.
TrainingData shifted_problem(std::size_t d, std::size_t n, double shift, std::uint64_t seed) {
  RngStream rng(seed, 0);
  Vector mean(d, 0.0);
  mean[0] = shift;
  Matrix cov = Matrix::identity(d);
  cov(0, 0) = 2.0;
  const ParticleCloud src = sample(GaussianMeasure::standard(d), n, rng);
  ParticleCloud tgt = sample(GaussianMeasure(mean, cov), n, rng, DomainTag::Target);
  Vector labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    double y = 0.5;
    for (std::size_t k = 0; k < d; ++k) y += (k % 2 ? -0.5 : 1.0) * src.point(i)[k];
    labels[i] = y + 0.1 * rng.normal();
  }
  return {src, labels, tgt, std::nullopt, std::nullopt};
}

TrainConfig small_config() {
  TrainConfig c;
  c.batch = 64;
  c.epochs = 30;
  c.eval_size = 200;
  c.sinkhorn_k = 10;
  c.lr = 1e-2;
  return c;
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

std::string step_csv(const TraceLog& t) {
  std::ostringstream os;
  write_step_csv(os, t);
  return os.str();
}

std::string epoch_csv(const TraceLog& t) {
  std::ostringstream os;
  write_epoch_csv(os, t);
  return os.str();
}

}  // namespace

TEST(TrainConfig, DefaultsMatchPublishedHyperparameters) {
  const TrainConfig c;
  EXPECT_EQ(c.lr, 1e-3);
  EXPECT_EQ(c.batch, 256u);
  EXPECT_EQ(c.alpha, 0.8);
  EXPECT_EQ(c.beta, 0.2);
  EXPECT_EQ(c.sinkhorn_k, 20u);
  EXPECT_EQ(c.epochs, 200u);
  EXPECT_EQ(c.posterior_var, 1e-2);
  EXPECT_EQ(c.eval_size, 1000u);
  EXPECT_NO_THROW(c.validate());
}

TEST(TrainConfig, ValidationRejectsBadValues) {
  TrainConfig c;
  c.alpha = -1;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.lr = 0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.batch = 1;
  EXPECT_THROW(c.validate(), Error);
}

TEST(UnifiedLoss, AblationIdentityAndPerfectHead) {
  const TrainingData data = shifted_problem(3, 50, 1.0, 1);
  const GaussianMeasure gs = gaussian_fit(data.source), gt = gaussian_fit(data.target);
  TrainConfig c;
  c.alpha = 0;
  c.beta = 0;
  const TransportParams p = initial_params(3, c);
  const LinearHead h{Vector{0.3, 0.2, 0.1}, 0.0};
  const LossComponents l = unified_loss(p, h, data.source, data.labels, gs, gt, c);
  EXPECT_EQ(l.total, l.task);
  EXPECT_NEAR(l.task, mean_squared_error(h, transport_cloud_mean(p, data.source), data.labels), 1e-12);

  Vector clean(data.source.size());
  for (std::size_t i = 0; i < clean.size(); ++i) clean[i] = h.predict(data.source.point(i));
  EXPECT_NEAR(unified_loss(p, h, data.source, clean, gs, gt, c).total, 0.0, 1e-24);
}

TEST(UnifiedLoss, ComponentsRecombine) {
  RngStream rng(2, 0);
  const TrainingData data = shifted_problem(4, 80, 2.0, 2);
  const GaussianMeasure gs = gaussian_fit(data.source), gt = gaussian_fit(data.target);
  for (int t = 0; t < 10; ++t) {
    TrainConfig c;
    c.alpha = 2 * rng.uniform();
    c.beta = rng.uniform();
    TransportParams p = initial_params(4, c);
    for (double& b : p.b) b = rng.normal();
    const LinearHead h{Vector{rng.normal(), rng.normal(), rng.normal(), rng.normal()}, rng.normal()};
    const LossComponents l = unified_loss(p, h, data.source, data.labels, gs, gt, c);
    EXPECT_NEAR(l.total, l.task + c.alpha * l.transport + c.beta * l.pac, 1e-12 * std::max(1.0, std::abs(l.total)));
    EXPECT_GE(l.pac, 0.0);
  }
  TrainConfig c;
  EXPECT_THROW(unified_loss(initial_params(3, c), LinearHead::zeros(3), data.source, data.labels, gs, gt, c), Error);
}

TEST(UnifiedLoss, GradientMatchesFiniteDifferences) {
  RngStream rng(3, 0);
  const std::size_t d = 4;
  const TrainingData data = shifted_problem(d, 60, 1.5, 3);
  const GaussianMeasure gs = gaussian_fit(data.source), gt = random_gaussian(d, rng);
  TrainConfig c;
  const TransportParams init = initial_params(d, c);
  double worst = 0.0;
  for (int point = 0; point <= 10; ++point) {
    TransportParams p = init;
    LinearHead h = LinearHead::zeros(d);
    if (point > 0) {
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) p.A(i, j) += 0.3 * rng.normal();
        p.b[i] = 0.5 * rng.normal();
        p.log_d[i] = std::log(0.05) + 2.0 * rng.uniform();
        h.w[i] = rng.normal();
      }
      h.w0 = rng.normal();
    }
    Vector x = p.flatten();
    const Vector hf = h.flatten();
    x.insert(x.end(), hf.begin(), hf.end());
    auto f = [&](const Vector& v) {
      const TransportParams pp = TransportParams::unflatten(d, std::span<const double>(v).subspan(0, p.flat_size()));
      const LinearHead hh = LinearHead::unflatten(std::span<const double>(v).subspan(p.flat_size()));
      return unified_loss(pp, hh, data.source, data.labels, gs, gt, c).total;
    };
    const Vector g = unified_loss_grad(p, h, data.source, data.labels, gs, gt, c);
    ASSERT_EQ(g.size(), x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
      Vector xp = x, xm = x;
      xp[k] += 1e-5;
      xm[k] -= 1e-5;
      worst = std::max(worst, relative_error(g[k], (f(xp) - f(xm)) / 2e-5));
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  AdamState s(3);
  Vector x{1.0, -2.0, 3.0};
  adam_step(s, x, Vector(3, 0.0), 1e-3, 0.9, 0.999, 1e-8);
  EXPECT_EQ(x, (Vector{1.0, -2.0, 3.0}));
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  AdamState s(3);
  Vector x(3, 0.0);
  const Vector g{0.5, -20.0, 1e-3};
  adam_step(s, x, g, 1e-3, 0.9, 0.999, 1e-8);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(x[k], -1e-3 * g[k] / (std::abs(g[k]) + 1e-8), 1e-15);
    EXPECT_NEAR(x[k], -1e-3 * (g[k] > 0 ? 1.0 : -1.0), 1e-8);
  }
  EXPECT_THROW(adam_step(s, x, Vector(2, 0.0), 1e-3, 0.9, 0.999, 1e-8), Error);
}

TEST(Adam, DeterministicSequences) {
  auto run = [] {
    AdamState s(2);
    Vector x{1.0, 1.0};
    std::vector<Vector> seq;
    for (int t = 0; t < 50; ++t) {
      adam_step(s, x, Vector{2 * x[0], std::sin(x[1])}, 0.05, 0.9, 0.999, 1e-8);
      seq.push_back(x);
    }
    return seq;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, MinimizesQuadratic) {
  AdamState s(2);
  Vector x{3.0, -4.0};
  for (int t = 0; t < 3000; ++t) adam_step(s, x, Vector{2 * x[0], 2 * x[1]}, 0.01, 0.9, 0.999, 1e-8);
  EXPECT_NEAR(x[0], 0.0, 1e-2);
  EXPECT_NEAR(x[1], 0.0, 1e-2);
}

TEST(Lyapunov, HandSeries) {
  EXPECT_TRUE(lyapunov_trace(std::vector<double>{5, 4, 3, 2, 1, 0.5}, 2).verdict);
  EXPECT_FALSE(lyapunov_trace(std::vector<double>{1, 2, 3, 4, 5, 6}, 2).verdict);
  // one spike of +0.5 on a unit-step descent, averaged over a window of 4,
  // lifts a window by 0.125 but the descent per window is 1
  const std::vector<double> spiky{10, 9, 8, 7, 6.5, 5, 4, 3, 2, 1};
  const LyapunovResult r = lyapunov_trace(spiky, 4);
  EXPECT_TRUE(r.verdict);
  EXPECT_NEAR(r.series[3], (10 + 9 + 8 + 7) / 4.0 - 1.0, 1e-12);
  EXPECT_NEAR(r.series[4], (9 + 8 + 7 + 6.5) / 4.0 - 1.0, 1e-12);
  // without smoothing the same spike is visible
  EXPECT_FALSE(lyapunov_trace(std::vector<double>{10, 9, 8, 8.5, 6, 5}, 1).verdict);
}

TEST(Lyapunov, SeriesIsNonnegativeAndErrors) {
  const LyapunovResult r = lyapunov_trace(std::vector<double>{3, 1, 2, 0.5}, 2);
  for (double v : r.series) EXPECT_GE(v, 0.0);
  try {
    lyapunov_trace(std::vector<double>{}, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyTrace);
  }
  EXPECT_THROW(lyapunov_trace(std::vector<double>{1.0}, 0), Error);
}

TEST(Train, ZeroEpochsReturnsInitialization) {
  const TrainingData data = shifted_problem(3, 100, 1.0, 4);
  TrainConfig c = small_config();
  c.epochs = 0;
  const TrainResult r = train(data, c);
  EXPECT_EQ(r.model.params, initial_params(3, c));
  EXPECT_EQ(r.model.head, LinearHead::zeros(3));
  EXPECT_TRUE(r.trace.steps.empty());
  ASSERT_EQ(r.trace.epochs.size(), 1u);
  EXPECT_EQ(r.model.summary.epochs_run, 0u);
  for (double v : r.model.params.log_d) EXPECT_NEAR(std::exp(v), 1e-2, 1e-15);
}

TEST(Train, DeterministicTraces) {
  const TrainingData data = shifted_problem(3, 300, 1.5, 5);
  const TrainConfig c = small_config();
  const TrainResult a = train(data, c);
  const TrainResult b = train(data, c);
  EXPECT_EQ(step_csv(a.trace), step_csv(b.trace));
  EXPECT_EQ(epoch_csv(a.trace), epoch_csv(b.trace));
  EXPECT_EQ(a.model.params, b.model.params);
  EXPECT_EQ(to_json(a.model).dump(), to_json(b.model).dump());
  TrainConfig other = c;
  other.seed = 9;
  EXPECT_NE(step_csv(train(data, other).trace), step_csv(a.trace));
}

TEST(Train, LoggedStepsDecomposeAndIncrease) {
  const TrainingData data = shifted_problem(3, 300, 1.5, 6);
  const TrainConfig c = small_config();
  const TrainResult r = train(data, c);
  ASSERT_FALSE(r.trace.steps.empty());
  for (std::size_t i = 0; i < r.trace.steps.size(); ++i) {
    const StepRecord& s = r.trace.steps[i];
    EXPECT_EQ(s.step, i + 1);
    EXPECT_NEAR(s.total_loss, s.task_loss + c.alpha * s.transport_loss + c.beta * s.pac_kl,
                1e-12 * std::max(1.0, std::abs(s.total_loss)));
    for (double v : {s.total_loss, s.task_loss, s.transport_loss, s.pac_kl, s.grad_norm}) EXPECT_TRUE(std::isfinite(v));
  }
  for (std::size_t e = 0; e < r.trace.epochs.size(); ++e) EXPECT_EQ(r.trace.epochs[e].epoch, e);
}

TEST(Train, ReducesTransportEnergyWithMonotoneLyapunov) {
  const TrainingData data = shifted_problem(4, 600, 2.0, 7);
  TrainConfig c = small_config();
  c.epochs = 100;
  const TrainResult r = train(data, c);
  EXPECT_LE(r.model.summary.final_w2_energy, 0.5 * r.model.summary.initial_w2_energy);
  EXPECT_TRUE(lyapunov_trace(r.trace, 20).verdict);
  EXPECT_LT(r.model.summary.final_geometry, r.trace.epochs.front().geometry);
  const double v0 = r.model.summary.initial_variance_trace;
  for (const auto& e : r.trace.epochs) {
    EXPECT_GE(e.variance_trace, 0.5 * v0);
    EXPECT_LE(e.variance_trace, 2.0 * v0);
  }
}

TEST(Train, TransportTermImprovesGeometry) {
  const TrainingData data = shifted_problem(3, 400, 2.0, 8);
  TrainConfig full = small_config();
  TrainConfig none = full;
  none.alpha = 0.0;
  const TrainResult a = train(data, full);
  const TrainResult b = train(data, none);
  EXPECT_LT(a.model.summary.final_geometry, b.model.summary.final_geometry);
  for (const auto& s : b.trace.steps) EXPECT_EQ(s.transport_loss, 0.0);
}

TEST(Train, NoiseCanBeDisabled) {
  const TrainingData data = shifted_problem(2, 200, 1.0, 9);
  TrainConfig c = small_config();
  c.train_noise = false;
  const TrainResult r = train(data, c);
  for (double v : r.model.params.log_d) EXPECT_EQ(v, kMinLogVariance);
}

TEST(Train, VariationalModeLogsPosteriorVariance) {
  const TrainingData data = shifted_problem(2, 200, 1.0, 10);
  TrainConfig c = small_config();
  c.variational = true;
  c.epochs = 5;
  const TrainResult r = train(data, c);
  EXPECT_EQ(r.model.posterior_log_var.size(), r.model.params.flat_size());
  EXPECT_NE(r.trace.epochs.back().posterior_variance, c.posterior_var);
}

TEST(Train, DivergenceIsReported) {
  const TrainingData data = shifted_problem(2, 100, 1.0, 11);
  TrainConfig c = small_config();
  c.lr = 1e200;
  try {
    train(data, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Divergence);
  }
}

TEST(Train, RejectsMismatchedDomains) {
  TrainingData data = shifted_problem(2, 50, 1.0, 12);
  data.target = ParticleCloud(3, std::vector<double>(30, 0.0));
  EXPECT_THROW(train(data, small_config()), Error);
}

TEST(TraceExport, StepCsvHeaderAndTimingColumn) {
  TraceLog t;
  t.steps.push_back({1, 1, 2.5, 2.0, 0.5, 0.25, 1.0, 3.0});
  EXPECT_EQ(step_csv(t), "step,epoch,total_loss,task_loss,transport_loss,pac_kl,grad_norm\r\n1,1,2.5,2,0.5,0.25,1\r\n");
  std::ostringstream os;
  write_step_csv(os, t, true);
  EXPECT_NE(os.str().find(",wall_ms\r\n"), std::string::npos);
}
