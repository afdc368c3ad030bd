#pragma once

// Minibatch Adam optimization of task + α·transport + β·KL(ρ‖π), with
// per-epoch evaluation and the smoothed-energy (Lyapunov) monitor.

#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>

#include <nlohmann/json.hpp>

#include "plt/evalx.hpp"
#include "plt/measures.hpp"
#include "plt/numkit.hpp"
#include "plt/pacbayes.hpp"
#include "plt/sinkhorn.hpp"
#include "plt/transport.hpp"

namespace plt {

struct TrainConfig {
  double alpha = 0.8;
  double beta = 0.2;
  double lambda = 10.0;
  double lr = 1e-3;
  std::size_t batch = 256;
  std::size_t epochs = 200;
  std::int64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double sinkhorn_eps = 0.05;
  std::size_t sinkhorn_k = 20;
  double posterior_var = 1e-2;
  double prior_var = 1.0;
  double init_noise_var = 1e-2;
  bool train_noise = true;       // false pins log_d at the lower clamp (no transport noise)
  bool variational = false;      // also learn per-parameter posterior log-variances
  bool refit_head = true;        // closed-form least-squares head on the final transported source
  std::size_t eval_size = 1000;
  std::int64_t eval_seed = 4242;
  std::size_t patience = 10;
  double plateau_tol = 1e-6;

  void validate() const {
    require(alpha >= 0.0 && beta >= 0.0 && lambda >= 0.0, ErrorKind::InvalidArgument, "alpha, beta, lambda must be >= 0");
    require(lr > 0.0, ErrorKind::InvalidArgument, "lr must be > 0");
    require(batch >= 2, ErrorKind::InvalidArgument, "batch must be >= 2");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0, ErrorKind::InvalidArgument,
            "adam betas must lie in [0, 1)");
    require(adam_eps > 0.0, ErrorKind::InvalidArgument, "adam eps must be > 0");
    require(sinkhorn_eps > 0.0 && sinkhorn_k >= 1, ErrorKind::InvalidArgument, "sinkhorn eps/k invalid");
    require(posterior_var > 0.0 && prior_var > 0.0 && init_noise_var > 0.0, ErrorKind::InvalidArgument,
            "variances must be > 0");
    require(eval_size >= 2, ErrorKind::InvalidArgument, "eval_size must be >= 2");
    require(patience >= 1, ErrorKind::InvalidArgument, "patience must be >= 1");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"alpha", c.alpha},
          {"beta", c.beta},
          {"lambda", c.lambda},
          {"lr", c.lr},
          {"batch", c.batch},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"sinkhorn_eps", c.sinkhorn_eps},
          {"sinkhorn_k", c.sinkhorn_k},
          {"posterior_var", c.posterior_var},
          {"prior_var", c.prior_var},
          {"init_noise_var", c.init_noise_var},
          {"train_noise", c.train_noise},
          {"variational", c.variational},
          {"refit_head", c.refit_head},
          {"eval_size", c.eval_size},
          {"eval_seed", c.eval_seed},
          {"patience", c.patience},
          {"plateau_tol", c.plateau_tol}};
}

/// Parameters at initialization; also the prior mean.
inline TransportParams initial_params(std::size_t d, const TrainConfig& c) {
  TransportParams p = TransportParams::identity(d, c.init_noise_var);
  if (!c.train_noise) std::fill(p.log_d.begin(), p.log_d.end(), kMinLogVariance);
  return p;
}

// ---------------------------------------------------------------------------

struct LossComponents {
  double total = 0.0;
  double task = 0.0;
  double transport = 0.0;
  double pac = 0.0;
};

namespace detail {

// task + α·transport and its gradient over [transport flat, head flat].
inline LossComponents data_terms(const TransportParams& p, const LinearHead& head, const ParticleCloud& batch,
                                 std::span<const double> labels, const GaussianMeasure& gs, const GaussianMeasure& gt,
                                 const TrainConfig& c, Vector* grad) {
  require(batch.size() >= 1 && batch.size() == labels.size(), ErrorKind::InvalidArgument, "batch/labels mismatch or empty");
  require(batch.dim() == p.dim() && head.dim() == p.dim() && gs.dim() == p.dim() && gt.dim() == p.dim(),
          ErrorKind::DimMismatch, "unified_loss dimension mismatch");
  const std::size_t d = p.dim();
  const std::size_t flat = p.flat_size();
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  LossComponents out;
  if (grad) grad->assign(flat + d + 1, 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto z = batch.point(i);
    const Vector t = transport_mean(p, z);
    const double e = head.predict(t) - labels[i];
    out.task += e * e * inv_n;
    if (!grad) continue;
    const double s = 2.0 * e * inv_n;
    auto& g = *grad;
    for (std::size_t j = 0; j < d; ++j) {
      const double sw = s * head.w[j];
      for (std::size_t k = 0; k < d; ++k) g[j * d + k] += sw * z[k];
      g[d * d + j] += sw;
      g[flat + j] += s * t[j];
    }
    g[flat + d] += s;
  }
  if (c.alpha != 0.0) {
    out.transport = transport_loss(p, gs, gt, c.lambda).total;
    if (grad) {
      const Vector tg = transport_loss_grad(p, gs, gt, c.lambda);
      for (std::size_t k = 0; k < flat; ++k) (*grad)[k] += c.alpha * tg[k];
    }
  }
  out.total = out.task + c.alpha * out.transport;
  return out;
}

}  // namespace detail

/// task = MSE of the head on transported batch means; transport = closed-form
/// transport loss; pac = KL(ρ‖π) with ρ centred at `params` (variance
/// config.posterior_var) and π centred at the initialization.
inline LossComponents unified_loss(const TransportParams& params, const LinearHead& head, const ParticleCloud& batch,
                                   std::span<const double> labels, const GaussianMeasure& gs, const GaussianMeasure& gt,
                                   const TrainConfig& c) {
  LossComponents out = detail::data_terms(params, head, batch, labels, gs, gt, c, nullptr);
  out.pac = posterior_kl(PosteriorSpec::around(params, c.posterior_var, initial_params(params.dim(), c), c.prior_var));
  out.total += c.beta * out.pac;
  return out;
}

/// Gradient of unified_loss(...).total; layout [A, b, log_d, w, w0].
inline Vector unified_loss_grad(const TransportParams& params, const LinearHead& head, const ParticleCloud& batch,
                                std::span<const double> labels, const GaussianMeasure& gs, const GaussianMeasure& gt,
                                const TrainConfig& c) {
  Vector grad;
  detail::data_terms(params, head, batch, labels, gs, gt, c, &grad);
  if (c.beta != 0.0) {
    const auto kg =
        posterior_kl_grad(PosteriorSpec::around(params, c.posterior_var, initial_params(params.dim(), c), c.prior_var));
    for (std::size_t k = 0; k < kg.mean.size(); ++k) grad[k] += c.beta * kg.mean[k];
  }
  return grad;
}

// ---------------------------------------------------------------------------

struct AdamState {
  Vector m;
  Vector v;
  std::uint64_t t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update of `x` in place.
inline void adam_step(AdamState& s, Vector& x, std::span<const double> grad, double lr, double beta1, double beta2,
                      double eps) {
  require(s.m.size() == x.size() && grad.size() == x.size(), ErrorKind::DimMismatch, "adam_step shape mismatch");
  ++s.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(s.t));
  for (std::size_t k = 0; k < x.size(); ++k) {
    s.m[k] = beta1 * s.m[k] + (1.0 - beta1) * grad[k];
    s.v[k] = beta2 * s.v[k] + (1.0 - beta2) * grad[k] * grad[k];
    x[k] -= lr * (s.m[k] / c1) / (std::sqrt(s.v[k] / c2) + eps);
  }
}

// ---------------------------------------------------------------------------

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double total_loss = 0.0;
  double task_loss = 0.0;
  double transport_loss = 0.0;
  double pac_kl = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double w2_energy = 0.0;
  double geometry = 0.0;
  double variance_trace = 0.0;
  double objective = 0.0;          // unified loss on the full training set
  double transport_loss = 0.0;     // closed-form transport loss on the full training set
  double posterior_variance = 0.0; // mean parameter-posterior variance
};

struct TraceLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

struct TrainSummary {
  std::size_t epochs_run = 0;
  std::size_t steps_run = 0;
  bool stopped_early = false;
  double initial_w2_energy = 0.0;
  double final_w2_energy = 0.0;
  double final_geometry = 0.0;
  double initial_variance_trace = 0.0;
  double final_variance_trace = 0.0;
  double final_objective = 0.0;
  double smoothness_probe = 0.0;  // max ‖Δ∇L‖/‖Δθ‖ between consecutive epochs
};

struct TrainedModel {
  TransportParams params;
  LinearHead head;
  TrainConfig config;
  TrainSummary summary;
  Vector posterior_log_var;  // empty unless variational
};

struct TrainResult {
  TrainedModel model;
  TraceLog trace;
};

struct TrainingData {
  ParticleCloud source;
  Vector labels;
  ParticleCloud target;
  std::optional<ParticleCloud> eval_source;  // defaults to a seeded subsample of `source`
  std::optional<ParticleCloud> eval_target;  // defaults to a seeded subsample of `target`
};

namespace detail {

inline constexpr std::uint64_t kShuffleStream = 0x5348;
inline constexpr std::uint64_t kEvalStream = 0x4556;
inline constexpr std::uint64_t kParamNoiseStream = 0x504e;

inline std::vector<std::size_t> permutation(std::size_t n, RngStream& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

inline ParticleCloud gather(const ParticleCloud& cloud, std::span<const std::size_t> idx) {
  std::vector<double> coords;
  coords.reserve(idx.size() * cloud.dim());
  for (std::size_t i : idx) {
    auto p = cloud.point(i);
    coords.insert(coords.end(), p.begin(), p.end());
  }
  return ParticleCloud(cloud.dim(), std::move(coords), cloud.tag());
}

inline ParticleCloud eval_subsample(const ParticleCloud& cloud, std::size_t size, std::int64_t seed, std::uint64_t salt) {
  if (cloud.size() <= size) return cloud;
  RngStream rng(static_cast<std::uint64_t>(seed), kEvalStream + salt);
  auto idx = permutation(cloud.size(), rng);
  idx.resize(size);
  return gather(cloud, idx);
}

inline double norm(std::span<const double> v) { return std::sqrt(squared_norm(v)); }

}  // namespace detail

/// Windowed excess-energy series and its monotonicity verdict.
struct LyapunovResult {
  Vector series;
  bool verdict = false;
};

/// V̄(t) = (moving average over `window` values ending at t) − min(values).
/// Verdict: after the first full window, V̄(t) ≤ V̄(t−1) + 1e-3·V̄(first full window).
inline LyapunovResult lyapunov_trace(std::span<const double> values, std::size_t window) {
  require(!values.empty(), ErrorKind::EmptyTrace, "lyapunov_trace: empty trace");
  require(window >= 1, ErrorKind::InvalidArgument, "lyapunov_trace: window must be >= 1");
  const double floor = *std::min_element(values.begin(), values.end());
  LyapunovResult r;
  double running = 0.0;
  for (std::size_t t = 0; t < values.size(); ++t) {
    running += values[t];
    if (t >= window) running -= values[t - window];
    const double count = static_cast<double>(std::min(t + 1, window));
    r.series.push_back(running / count - floor);
  }
  if (values.size() < window) {
    r.verdict = true;
    return r;
  }
  const double slack = 1e-3 * std::abs(r.series[window - 1]);
  r.verdict = true;
  for (std::size_t t = window; t < r.series.size(); ++t)
    if (r.series[t] > r.series[t - 1] + slack) r.verdict = false;
  return r;
}

/// Runs the monitor over the per-epoch full-data objective.
inline LyapunovResult lyapunov_trace(const TraceLog& trace, std::size_t window) {
  Vector values;
  for (const auto& e : trace.epochs) values.push_back(e.objective);
  return lyapunov_trace(values, window);
}

inline TrainResult train(const TrainingData& data, const TrainConfig& c) {
  c.validate();
  const ParticleCloud& source = data.source;
  const std::size_t d = source.dim();
  require(data.target.dim() == d, ErrorKind::DimMismatch,
          "source dim " + std::to_string(d) + " differs from target dim " + std::to_string(data.target.dim()));
  require(source.size() >= 2 && data.target.size() >= 2, ErrorKind::InvalidArgument, "need at least 2 points per domain");
  require(data.labels.size() == source.size(), ErrorKind::DimMismatch, "one label per source point required");

  const ParticleCloud eval_src = data.eval_source ? *data.eval_source : detail::eval_subsample(source, c.eval_size, c.eval_seed, 0);
  const ParticleCloud eval_tgt =
      data.eval_target ? *data.eval_target : detail::eval_subsample(data.target, c.eval_size, c.eval_seed, 1);
  require(eval_src.dim() == d && eval_tgt.dim() == d, ErrorKind::DimMismatch, "evaluation cloud dimension mismatch");

  const GaussianMeasure gs_full = gaussian_fit(source);
  const GaussianMeasure gt = gaussian_fit(data.target);
  const GaussianMeasure gt_eval = gaussian_fit(eval_tgt);
  const TransportParams prior = initial_params(d, c);
  const std::size_t flat = prior.flat_size();

  Vector x = prior.flatten();
  const Vector head0 = LinearHead::zeros(d).flatten();
  x.insert(x.end(), head0.begin(), head0.end());
  Vector log_var(c.variational ? flat : 0, std::log(c.posterior_var));
  AdamState adam(x.size());
  AdamState adam_var(log_var.size());

  auto unpack_params = [&](std::span<const double> v) { return TransportParams::unflatten(d, v.subspan(0, flat)); };
  auto unpack_head = [&](std::span<const double> v) { return LinearHead::unflatten(v.subspan(flat)); };

  TrainResult result;
  TraceLog& trace = result.trace;

  auto full_objective = [&](const TransportParams& p, const LinearHead& h, Vector* grad) {
    LossComponents l = unified_loss(p, h, source, data.labels, gs_full, gt, c);
    if (c.variational && c.beta != 0.0) {
      PosteriorSpec rho{p.flatten(), log_var, prior.flatten(), c.prior_var};
      l.total += c.beta * (posterior_kl(rho) - l.pac);
      l.pac = posterior_kl(rho);
    }
    if (grad) *grad = unified_loss_grad(p, h, source, data.labels, gs_full, gt, c);
    return l;
  };

  auto evaluate = [&](std::size_t epoch, const TransportParams& p, const LinearHead& h) {
    RngStream rng(static_cast<std::uint64_t>(c.eval_seed), detail::kEvalStream + 2);
    const ParticleCloud moved = transport_cloud(p, eval_src, rng);
    for (double v : moved.coords())
      if (!std::isfinite(v * v))
        fail(ErrorKind::Divergence, "train: transported points overflow at epoch " + std::to_string(epoch));
    EpochRecord e;
    e.epoch = epoch;
    e.w2_energy = sinkhorn_between(moved, eval_tgt, c.sinkhorn_eps, c.sinkhorn_k).cost;
    e.geometry = geometry_discrepancy(moved, gt_eval);
    e.variance_trace = variance_trace(p);
    const LossComponents l = full_objective(p, h, nullptr);
    e.objective = l.total;
    e.transport_loss = transport_loss(p, gs_full, gt, c.lambda).total;
    if (c.variational) {
      double s = 0.0;
      for (double v : log_var) s += std::exp(v);
      e.posterior_variance = s / static_cast<double>(log_var.size());
    } else {
      e.posterior_variance = c.posterior_var;
    }
    for (double v : {e.w2_energy, e.geometry, e.variance_trace, e.objective, e.transport_loss})
      if (!std::isfinite(v)) fail(ErrorKind::Divergence, "train: non-finite evaluation metric at epoch " + std::to_string(epoch));
    trace.epochs.push_back(e);
  };

  evaluate(0, prior, LinearHead::zeros(d));

  const std::size_t n = source.size();
  const std::size_t n_batches = std::max<std::size_t>(1, n / c.batch);
  RngStream shuffle_root(static_cast<std::uint64_t>(c.seed), detail::kShuffleStream);
  RngStream param_noise(static_cast<std::uint64_t>(c.seed), detail::kParamNoiseStream);
  Vector prev_x;
  Vector prev_grad;
  double probe = 0.0;
  std::size_t step = 0;
  std::size_t epochs_run = 0;
  bool stopped = false;
  Vector grad;

  // A singular fit or overflow mid-training means the iterates left the
  // stable region, which is divergence rather than bad input.
  try {
    for (std::size_t epoch = 1; epoch <= c.epochs; ++epoch) {
      RngStream shuffle = shuffle_root.substream(epoch);
      const auto perm = detail::permutation(n, shuffle);
      for (std::size_t bi = 0; bi < n_batches; ++bi) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::size_t lo = bi * n / n_batches;
        const std::size_t hi = (bi + 1) * n / n_batches;
        const auto idx = std::span<const std::size_t>(perm).subspan(lo, hi - lo);
        const ParticleCloud batch = detail::gather(source, idx);
        Vector labels(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) labels[k] = data.labels[idx[k]];
        const GaussianMeasure gs = gaussian_fit(batch);

        Vector eps_draw;
        Vector theta = x;
        if (c.variational) {
          eps_draw.resize(flat);
          for (std::size_t k = 0; k < flat; ++k) {
            eps_draw[k] = param_noise.normal();
            theta[k] += std::exp(0.5 * log_var[k]) * eps_draw[k];
          }
        }
        const TransportParams p = unpack_params(theta);
        const LinearHead h = unpack_head(theta);
        Vector g;
        LossComponents l = detail::data_terms(p, h, batch, labels, gs, gt, c, &g);
        PosteriorSpec rho{unpack_params(x).flatten(), c.variational ? log_var : Vector(flat, std::log(c.posterior_var)),
                          prior.flatten(), c.prior_var};
        l.pac = posterior_kl(rho);
        l.total += c.beta * l.pac;
        if (!std::isfinite(l.total))
          fail(ErrorKind::Divergence, "train: non-finite loss at step " + std::to_string(step + 1));
        const PosteriorKlGrad kg = posterior_kl_grad(rho);
        Vector g_var;
        if (c.variational) {
          g_var.resize(flat);
          for (std::size_t k = 0; k < flat; ++k)
            g_var[k] = g[k] * eps_draw[k] * 0.5 * std::exp(0.5 * log_var[k]) + c.beta * kg.log_var[k];
        }
        for (std::size_t k = 0; k < flat; ++k) g[k] += c.beta * kg.mean[k];
        if (!c.train_noise)
          for (std::size_t k = 0; k < d; ++k) g[d * d + d + k] = 0.0;
        const double gn = detail::norm(g);
        if (!std::isfinite(gn)) fail(ErrorKind::Divergence, "train: non-finite gradient at step " + std::to_string(step + 1));

        adam_step(adam, x, g, c.lr, c.adam_beta1, c.adam_beta2, c.adam_eps);
        if (c.variational) {
          adam_step(adam_var, log_var, g_var, c.lr, c.adam_beta1, c.adam_beta2, c.adam_eps);
          for (double& v : log_var) v = std::clamp(v, -30.0, 10.0);
        }
        for (std::size_t k = d * d + d; k < flat; ++k) x[k] = std::clamp(x[k], kMinLogVariance, kMaxLogVariance);

        ++step;
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        trace.steps.push_back({step, epoch, l.total, l.task, l.transport, l.pac, gn, ms});
      }
      epochs_run = epoch;
      const TransportParams p = unpack_params(x);
      const LinearHead h = unpack_head(x);
      evaluate(epoch, p, h);

      Vector full_grad;
      full_objective(p, h, &full_grad);
      if (!prev_x.empty()) {
        const double dx = detail::norm(subtract(x, prev_x));
        if (dx > 0.0) probe = std::max(probe, detail::norm(subtract(full_grad, prev_grad)) / dx);
      }
      prev_x = x;
      prev_grad = std::move(full_grad);

      // Plateau on the transport divergence; without a transport term (α = 0)
      // nothing drives it, so the full objective is monitored instead.
      if (epoch >= c.patience) {
        auto monitored = [&](const EpochRecord& e) { return c.alpha > 0.0 ? e.transport_loss : e.objective; };
        const double past = monitored(trace.epochs[epoch - c.patience]);
        const double now = monitored(trace.epochs[epoch]);
        if (past - now < c.plateau_tol * std::max(std::abs(past), 1e-300)) {
          stopped = true;
          break;
        }
      }
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NotPSD && e.kind() != ErrorKind::Asymmetric && e.kind() != ErrorKind::NumericOverflow)
      throw;
    fail(ErrorKind::Divergence, "train: iterates degenerated in epoch " + std::to_string(epochs_run + 1) + ": " + e.what());
  }

  TrainedModel& m = result.model;
  m.params = unpack_params(x);
  m.head = unpack_head(x);
  m.config = c;
  if (c.variational) m.posterior_log_var = log_var;
  if (c.refit_head && epochs_run > 0) m.head = fit_least_squares(transport_cloud_mean(m.params, source), data.labels);

  TrainSummary& s = m.summary;
  s.epochs_run = epochs_run;
  s.steps_run = step;
  s.stopped_early = stopped;
  s.initial_w2_energy = trace.epochs.front().w2_energy;
  s.final_w2_energy = trace.epochs.back().w2_energy;
  s.final_geometry = trace.epochs.back().geometry;
  s.initial_variance_trace = trace.epochs.front().variance_trace;
  s.final_variance_trace = trace.epochs.back().variance_trace;
  s.final_objective = trace.epochs.back().objective;
  s.smoothness_probe = probe;
  return result;
}

// ---------------------------------------------------------------------------

inline void write_step_csv(std::ostream& os, const TraceLog& trace, bool timing = false) {
  os << "step,epoch,total_loss,task_loss,transport_loss,pac_kl,grad_norm";
  if (timing) os << ",wall_ms";
  os << "\r\n";
  for (const auto& r : trace.steps) {
    os << r.step << "," << r.epoch << "," << format_real(r.total_loss) << "," << format_real(r.task_loss) << ","
       << format_real(r.transport_loss) << "," << format_real(r.pac_kl) << "," << format_real(r.grad_norm);
    if (timing) os << "," << format_real(r.wall_ms);
    os << "\r\n";
  }
}

inline void write_epoch_csv(std::ostream& os, const TraceLog& trace) {
  os << "epoch,w2_energy,geometry,variance_trace,objective,transport_loss,posterior_variance\r\n";
  for (const auto& e : trace.epochs)
    os << e.epoch << "," << format_real(e.w2_energy) << "," << format_real(e.geometry) << ","
       << format_real(e.variance_trace) << "," << format_real(e.objective) << "," << format_real(e.transport_loss) << ","
       << format_real(e.posterior_variance) << "\r\n";
}

inline nlohmann::json to_json(const TrainSummary& s) {
  return {{"epochs_run", s.epochs_run},
          {"steps_run", s.steps_run},
          {"stopped_early", s.stopped_early},
          {"initial_w2_energy", s.initial_w2_energy},
          {"final_w2_energy", s.final_w2_energy},
          {"final_geometry", s.final_geometry},
          {"initial_variance_trace", s.initial_variance_trace},
          {"final_variance_trace", s.final_variance_trace},
          {"final_objective", s.final_objective},
          {"smoothness_probe", s.smoothness_probe}};
}

inline nlohmann::json epoch_curves_json(const TraceLog& trace) {
  nlohmann::json j = {{"epoch", nlohmann::json::array()},
                      {"w2_energy", nlohmann::json::array()},
                      {"geometry", nlohmann::json::array()},
                      {"variance_trace", nlohmann::json::array()},
                      {"objective", nlohmann::json::array()}};
  for (const auto& e : trace.epochs) {
    j["epoch"].push_back(e.epoch);
    j["w2_energy"].push_back(e.w2_energy);
    j["geometry"].push_back(e.geometry);
    j["variance_trace"].push_back(e.variance_trace);
    j["objective"].push_back(e.objective);
  }
  return j;
}

inline nlohmann::json to_json(const TrainedModel& m) {
  nlohmann::json j = {{"params", to_json(m.params)},
                      {"head", {{"w", m.head.w}, {"w0", m.head.w0}}},
                      {"config", to_json(m.config)},
                      {"summary", to_json(m.summary)}};
  if (!m.posterior_log_var.empty()) j["posterior_log_var"] = m.posterior_log_var;
  return j;
}

}  // namespace plt
