#pragma once

// Synthetic shift scenarios, baseline adaptation methods and the suite runner.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "plt/evalx.hpp"
#include "plt/measures.hpp"
#include "plt/numkit.hpp"
#include "plt/trainer.hpp"
#include "plt/transport.hpp"

namespace plt {

enum class Severity { Matched, Synthetic, Moderate, Severe };

inline std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::Matched: return "matched";
    case Severity::Synthetic: return "synthetic";
    case Severity::Moderate: return "moderate";
    case Severity::Severe: return "severe";
  }
  return "?";
}

inline Severity parse_severity(std::string_view s) {
  for (Severity v : {Severity::Matched, Severity::Synthetic, Severity::Moderate, Severity::Severe})
    if (to_string(v) == s) return v;
  fail(ErrorKind::InvalidArgument,
       "unknown severity '" + std::string(s) + "' (valid: matched, synthetic, moderate, severe)");
}

/// Mean-shift magnitude s and eigenvalue spread κ of the target warp.
struct ShiftShape {
  double shift = 0.0;
  double spread = 1.0;
};

inline ShiftShape shift_shape(Severity s) {
  switch (s) {
    case Severity::Matched: return {0.0, 1.0};
    case Severity::Synthetic: return {0.5, 1.5};
    case Severity::Moderate: return {1.5, 2.5};
    case Severity::Severe: return {3.0, 4.0};
  }
  return {};
}

enum class Method { FinetuneDet, MmdAlign, DetOt, Proposed };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::FinetuneDet: return "finetune_det";
    case Method::MmdAlign: return "mmd_align";
    case Method::DetOt: return "det_ot";
    case Method::Proposed: return "proposed";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::FinetuneDet, Method::MmdAlign, Method::DetOt, Method::Proposed})
    if (to_string(m) == s) return m;
  fail(ErrorKind::UnknownMethod,
       "unknown method '" + std::string(s) + "' (valid: finetune_det, mmd_align, det_ot, proposed)");
}

/// Labels are y = w·u + w0 + N(0, noise_std²) where u is the latent content
/// coordinate: a source point is u itself and its target counterpart is the
/// Monge image of u. Both domains therefore share one labelling of content.
struct Scenario {
  std::string name;
  Severity severity;
  std::size_t dim;
  Measure source;
  Measure target;
  Vector label_weights;  // w (dim entries) then w0
  double noise_std = 0.1;
  std::size_t n_s = 0;
  std::size_t n_t = 0;
  std::int64_t seed = 0;
};

inline nlohmann::json to_json(const GaussianMeasure& g) {
  return {{"kind", "gaussian"}, {"dim", g.dim()}, {"mean", g.mean}, {"covariance", g.covariance.entries()}};
}

inline nlohmann::json to_json(const Measure& m) {
  if (const auto* g = std::get_if<GaussianMeasure>(&m)) return to_json(*g);
  const auto& mix = std::get<MixtureMeasure>(m);
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : mix.components) comps.push_back({{"weight", c.weight}, {"gaussian", to_json(c.gaussian)}});
  return {{"kind", "mixture"}, {"components", comps}};
}

inline nlohmann::json to_json(const Scenario& s) {
  return {{"name", s.name},       {"severity", to_string(s.severity)}, {"dim", s.dim},
          {"source", to_json(s.source)}, {"target", to_json(s.target)},       {"label_weights", s.label_weights},
          {"noise_std", s.noise_std}, {"n_s", s.n_s},                      {"n_t", s.n_t},
          {"seed", s.seed}};
}

namespace detail {

inline constexpr std::uint64_t kScenarioStream = 0x5343;
inline constexpr std::uint64_t kDrawStream = 0x4452;

// Haar-like rotation via modified Gram–Schmidt on a Gaussian matrix.
inline Matrix random_rotation(std::size_t d, RngStream& rng) {
  Matrix q(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) q(i, j) = rng.normal();
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double proj = 0.0;
      for (std::size_t i = 0; i < d; ++i) proj += q(i, j) * q(i, k);
      for (std::size_t i = 0; i < d; ++i) q(i, j) -= proj * q(i, k);
    }
    double nrm = 0.0;
    for (std::size_t i = 0; i < d; ++i) nrm += q(i, j) * q(i, j);
    nrm = std::sqrt(nrm);
    for (std::size_t i = 0; i < d; ++i) q(i, j) /= nrm;
  }
  return q;
}

}  // namespace detail

inline Scenario generate_scenario(Severity severity, std::size_t dim, std::size_t n_s, std::size_t n_t, std::int64_t seed) {
  require(dim >= 1, ErrorKind::InvalidArgument, "scenario dim must be >= 1");
  RngStream rng(static_cast<std::uint64_t>(seed), detail::kScenarioStream);
  const ShiftShape shape = shift_shape(severity);

  Vector direction(dim);
  for (double& x : direction) x = rng.normal();
  const double nrm = std::sqrt(squared_norm(direction));
  Vector mean(dim);
  for (std::size_t k = 0; k < dim; ++k) mean[k] = shape.shift * direction[k] / nrm;

  const Matrix rot = detail::random_rotation(dim, rng);
  Vector eig(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    const double t = dim == 1 ? 1.0 : 2.0 * static_cast<double>(k) / static_cast<double>(dim - 1) - 1.0;
    eig[k] = std::pow(shape.spread, t);
  }
  Matrix cov = symmetrized(rot * Matrix::diagonal(eig) * rot.transpose());
  if (severity == Severity::Matched) cov = Matrix::identity(dim);

  Vector weights(dim + 1);
  for (std::size_t k = 0; k < dim; ++k) weights[k] = rng.normal() / std::sqrt(static_cast<double>(dim));
  weights[dim] = rng.normal();

  return Scenario{std::string(to_string(severity)) + "_d" + std::to_string(dim) + "_s" + std::to_string(seed),
                  severity,
                  dim,
                  GaussianMeasure::standard(dim),
                  GaussianMeasure(std::move(mean), std::move(cov)),
                  std::move(weights),
                  0.1,
                  n_s,
                  n_t,
                  seed};
}

/// Zero-noise affine Monge map between Gaussians:
/// A = Σ_t^{1/2}(Σ_t^{1/2}Σ_sΣ_t^{1/2})^{-1/2}Σ_t^{1/2}, b = μ_t − Aμ_s.
inline TransportParams gaussian_monge_map(const GaussianMeasure& gs, const GaussianMeasure& gt) {
  require(gs.dim() == gt.dim(), ErrorKind::DimMismatch, "monge map dimension mismatch");
  const Matrix rt = psd_sqrt(gt.covariance);
  const Matrix middle = psd_inv_sqrt(symmetrized(rt * gs.covariance * rt));
  TransportParams p;
  p.A = rt * middle * rt;
  p.b = gt.mean;
  const Vector am = p.A * gs.mean;
  for (std::size_t k = 0; k < p.b.size(); ++k) p.b[k] -= am[k];
  p.log_d.assign(gs.dim(), kMinLogVariance);
  return p;
}

/// Labelled draws from a scenario.
struct DomainDraw {
  ParticleCloud source;
  Vector source_labels;
  ParticleCloud target;
  Vector target_labels;
};

namespace detail {

inline const GaussianMeasure& gaussian_domain(const Measure& m) {
  const auto* g = std::get_if<GaussianMeasure>(&m);
  require(g != nullptr, ErrorKind::InvalidArgument, "labelled draws need Gaussian domains");
  return *g;
}

inline Vector content_labels(const Scenario& s, const ParticleCloud& content, RngStream& rng) {
  LinearHead truth = LinearHead::unflatten(s.label_weights);
  Vector y(content.size());
  for (std::size_t i = 0; i < content.size(); ++i) y[i] = truth.predict(content.point(i)) + s.noise_std * rng.normal();
  return y;
}

}  // namespace detail

/// Draws content coordinates for each domain. With `paired`, the target points
/// are the images of the very same content draws (common random numbers);
/// otherwise source and target content are independent.
inline DomainDraw draw_domains(const Scenario& s, std::size_t n_source, std::size_t n_target, bool paired,
                               std::uint64_t stream) {
  const GaussianMeasure& gs = detail::gaussian_domain(s.source);
  const GaussianMeasure& gt = detail::gaussian_domain(s.target);
  RngStream root(static_cast<std::uint64_t>(s.seed), detail::kDrawStream + stream);
  RngStream src_rng = root.substream(0);
  RngStream tgt_rng = root.substream(1);
  RngStream lab_rng = root.substream(2);
  const TransportParams monge = gaussian_monge_map(gs, gt);

  ParticleCloud source = sample(gs, n_source, src_rng, DomainTag::Source);
  Vector source_labels = detail::content_labels(s, source, lab_rng);
  if (paired) {
    require(n_target == n_source, ErrorKind::InvalidArgument, "paired draws need equal sizes");
    ParticleCloud target = transport_cloud_mean(monge, source);
    target.set_tag(DomainTag::Target);
    Vector target_labels = detail::content_labels(s, source, lab_rng);
    return {std::move(source), std::move(source_labels), std::move(target), std::move(target_labels)};
  }
  const ParticleCloud content = sample(gs, n_target, tgt_rng, DomainTag::Source);
  ParticleCloud target = transport_cloud_mean(monge, content);
  target.set_tag(DomainTag::Target);
  Vector target_labels = detail::content_labels(s, content, lab_rng);
  DomainDraw out{std::move(source), std::move(source_labels), std::move(target), std::move(target_labels)};
  return out;
}

// ---------------------------------------------------------------------------

/// Suite runs monitor on 500 held-out pairs instead of 1000 to keep the
/// default suite inside its time budget.
inline TrainConfig suite_train_defaults() {
  TrainConfig c;
  c.eval_size = 500;
  return c;
}

struct SuiteConfig {
  TrainConfig train = suite_train_defaults();
  std::size_t dim = 16;
  std::size_t n_s = 2000;
  std::size_t n_t = 2000;
  std::size_t test_size = 1000;
  std::size_t jobs = 1;  // concurrency only; never affects results
};

inline nlohmann::json to_json(const SuiteConfig& c) {
  return {{"train", to_json(c.train)}, {"dim", c.dim}, {"n_s", c.n_s}, {"n_t", c.n_t}, {"test_size", c.test_size}};
}

struct RunResult {
  MetricRecord record;
  TrainedModel model;
  TraceLog trace;
};

namespace detail {

inline constexpr std::uint64_t kTrainDraw = 1;
inline constexpr std::uint64_t kMonitorDraw = 2;
inline constexpr std::uint64_t kTestDraw = 3;
inline constexpr std::uint64_t kMetricNoise = 0x4d4e;

inline TrainedModel closed_form_model(const TransportParams& params, const LinearHead& head, const TrainConfig& c) {
  TrainedModel m;
  m.params = params;
  m.head = head;
  m.config = c;
  m.summary.final_variance_trace = m.summary.initial_variance_trace = variance_trace(params);
  return m;
}

}  // namespace detail

/// Held-out metrics of a fitted transport and head on paired test draws.
inline MetricRecord evaluate_model(const Scenario& s, const TrainedModel& model, std::string method, std::size_t test_size) {
  const DomainDraw test = draw_domains(s, test_size, test_size, true, detail::kTestDraw);
  RngStream noise(static_cast<std::uint64_t>(s.seed), detail::kMetricNoise);
  const ParticleCloud moved = transport_cloud(model.params, test.source, noise);
  MetricRecord r;
  r.method = std::move(method);
  r.seed = s.seed;
  r.geometry = geometry_discrepancy(moved, gaussian_fit(test.target));
  r.risk = mean_squared_error(model.head, test.target, test.target_labels);
  r.variance = variance_trace(model.params);
  r.energy = sinkhorn_between(moved, test.target, model.config.sinkhorn_eps, model.config.sinkhorn_k).cost;
  r.validate();
  return r;
}

inline RunResult run_baseline(Method method, const Scenario& s, const SuiteConfig& cfg, std::string label = {}) {
  if (label.empty()) label = std::string(to_string(s.severity)) + "." + std::string(to_string(method));
  const DomainDraw draw = draw_domains(s, s.n_s, s.n_t, false, detail::kTrainDraw);
  TrainConfig tc = cfg.train;
  tc.seed = s.seed;
  RunResult out;
  switch (method) {
    case Method::FinetuneDet: {
      TransportParams id = TransportParams::identity(s.dim, 1.0);
      std::fill(id.log_d.begin(), id.log_d.end(), kMinLogVariance);
      out.model = detail::closed_form_model(id, fit_least_squares(draw.source, draw.source_labels), tc);
      break;
    }
    case Method::MmdAlign:
    case Method::DetOt: {
      const TransportParams map = gaussian_monge_map(gaussian_fit(draw.source), gaussian_fit(draw.target));
      const LinearHead head = fit_least_squares(transport_cloud_mean(map, draw.source), draw.source_labels);
      out.model = detail::closed_form_model(map, head, tc);
      break;
    }
    case Method::Proposed: {
      const DomainDraw monitor = draw_domains(s, tc.eval_size, tc.eval_size, true, detail::kMonitorDraw);
      TrainingData data{draw.source, draw.source_labels, draw.target, monitor.source, monitor.target};
      TrainResult tr = train(data, tc);
      out.model = std::move(tr.model);
      out.trace = std::move(tr.trace);
      break;
    }
  }
  out.record = evaluate_model(s, out.model, std::move(label), cfg.test_size);
  return out;
}

// ---------------------------------------------------------------------------

struct ZComparison {
  std::string severity;
  std::string metric;
  std::string baseline;
  std::optional<ZTest> test;  // empty when the per-seed differences have zero variance
};

struct TraceSummary {
  std::string key;  // "<label>_<seed>"
  TrainSummary summary;
  TraceLog trace;
};

struct ExperimentReport {
  std::string suite;
  nlohmann::json config;
  std::vector<MetricRecord> records;
  std::vector<TraceSummary> traces;
  std::vector<ZComparison> z_tests;
};

inline nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& m : r.records)
    records.push_back({{"method", m.method},
                       {"seed", m.seed},
                       {"geometry", m.geometry},
                       {"risk", m.risk},
                       {"variance", m.variance},
                       {"energy", m.energy}});
  nlohmann::json traces = nlohmann::json::object();
  for (const auto& t : r.traces)
    traces[t.key] = {{"summary", to_json(t.summary)}, {"epochs", epoch_curves_json(t.trace)}};
  nlohmann::json z = nlohmann::json::array();
  for (const auto& c : r.z_tests) {
    nlohmann::json e = {{"severity", c.severity}, {"metric", c.metric}, {"comparison", "proposed_vs_" + c.baseline}};
    if (c.test) {
      e["z"] = c.test->z;
      e["p_two_sided"] = c.test->p_two_sided;
      e["mean_improvement"] = c.test->mean;
      e["n"] = c.test->n;
    } else {
      e["z"] = nullptr;
      e["note"] = "zero variance in per-seed differences";
    }
    z.push_back(std::move(e));
  }
  return {{"suite", r.suite}, {"config", r.config}, {"records", records}, {"traces", traces}, {"z_tests", z}};
}

namespace detail {

// Runs cells [0, n) on up to `jobs` threads; results land in their own slot.
template <typename F>
void run_cells(std::size_t n, std::size_t jobs, F&& cell) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        cell(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::vector<std::int64_t> sorted_unique(std::vector<std::int64_t> seeds) {
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
  return seeds;
}

inline void add_z_tests(ExperimentReport& report, std::span<const Severity> severities, std::span<const Method> methods,
                        std::span<const std::int64_t> seeds) {
  if (seeds.size() < 2 || std::find(methods.begin(), methods.end(), Method::Proposed) == methods.end()) return;
  auto find = [&](const std::string& label, std::int64_t seed) -> const MetricRecord& {
    for (const auto& r : report.records)
      if (r.method == label && r.seed == seed) return r;
    fail(ErrorKind::InvalidArgument, "missing record " + label);
  };
  for (Severity sev : severities) {
    const std::string sv(to_string(sev));
    for (Method base : methods) {
      if (base == Method::Proposed) continue;
      for (const char* metric : {"risk", "geometry"}) {
        Vector deltas;
        for (std::int64_t seed : seeds) {
          const MetricRecord& p = find(sv + ".proposed", seed);
          const MetricRecord& b = find(sv + "." + std::string(to_string(base)), seed);
          deltas.push_back(std::string_view(metric) == "risk" ? b.risk - p.risk : b.geometry - p.geometry);
        }
        ZComparison c{sv, metric, std::string(to_string(base)), std::nullopt};
        try {
          c.test = z_statistic(deltas);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::ZeroVariance) throw;
        }
        report.z_tests.push_back(std::move(c));
      }
    }
  }
}

}  // namespace detail

/// Cross product severity × method × seed; records sorted by (severity, method, seed).
inline ExperimentReport run_suite(std::vector<Severity> severities, std::vector<Method> methods,
                                  std::vector<std::int64_t> seeds, const SuiteConfig& cfg) {
  require(!severities.empty() && !methods.empty() && !seeds.empty(), ErrorKind::InvalidArgument,
          "suite needs at least one severity, method and seed");
  std::sort(severities.begin(), severities.end());
  severities.erase(std::unique(severities.begin(), severities.end()), severities.end());
  std::sort(methods.begin(), methods.end());
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());
  seeds = detail::sorted_unique(std::move(seeds));

  struct Cell {
    Severity severity;
    Method method;
    std::int64_t seed;
  };
  std::vector<Cell> cells;
  for (Severity sev : severities)
    for (Method m : methods)
      for (std::int64_t seed : seeds) cells.push_back({sev, m, seed});

  std::vector<RunResult> results(cells.size());
  detail::run_cells(cells.size(), cfg.jobs, [&](std::size_t i) {
    const Scenario s = generate_scenario(cells[i].severity, cfg.dim, cfg.n_s, cfg.n_t, cells[i].seed);
    results[i] = run_baseline(cells[i].method, s, cfg);
  });

  ExperimentReport report;
  report.suite = "default";
  nlohmann::json sev_json = nlohmann::json::array();
  for (Severity s : severities) sev_json.push_back(to_string(s));
  nlohmann::json method_json = nlohmann::json::array();
  for (Method m : methods) method_json.push_back(to_string(m));
  report.config = to_json(cfg);
  report.config["severities"] = sev_json;
  report.config["methods"] = method_json;
  report.config["seeds"] = seeds;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    report.records.push_back(results[i].record);
    report.traces.push_back({results[i].record.method + "_" + std::to_string(cells[i].seed), results[i].model.summary,
                             std::move(results[i].trace)});
  }
  detail::add_z_tests(report, severities, methods, seeds);
  return report;
}

enum class AblationArm { Full, NoTransport, NoPac, NoUncertainty };

inline std::string_view to_string(AblationArm a) {
  switch (a) {
    case AblationArm::Full: return "full";
    case AblationArm::NoTransport: return "no_transport";
    case AblationArm::NoPac: return "no_pac";
    case AblationArm::NoUncertainty: return "no_uncertainty";
  }
  return "?";
}

inline TrainConfig ablated(TrainConfig c, AblationArm arm) {
  switch (arm) {
    case AblationArm::Full: break;
    case AblationArm::NoTransport: c.alpha = 0.0; break;
    case AblationArm::NoPac: c.beta = 0.0; break;
    case AblationArm::NoUncertainty: c.train_noise = false; break;
  }
  return c;
}

/// Four training configurations per seed on scenarios of one severity.
inline ExperimentReport ablation_suite(Severity severity, const SuiteConfig& cfg, std::vector<std::int64_t> seeds) {
  require(!seeds.empty(), ErrorKind::InvalidArgument, "ablation needs at least one seed");
  seeds = detail::sorted_unique(std::move(seeds));
  const std::vector<AblationArm> arms = {AblationArm::Full, AblationArm::NoTransport, AblationArm::NoPac,
                                         AblationArm::NoUncertainty};
  struct Cell {
    AblationArm arm;
    std::int64_t seed;
  };
  std::vector<Cell> cells;
  for (AblationArm a : arms)
    for (std::int64_t seed : seeds) cells.push_back({a, seed});

  std::vector<RunResult> results(cells.size());
  detail::run_cells(cells.size(), cfg.jobs, [&](std::size_t i) {
    const Scenario s = generate_scenario(severity, cfg.dim, cfg.n_s, cfg.n_t, cells[i].seed);
    SuiteConfig arm_cfg = cfg;
    arm_cfg.train = ablated(cfg.train, cells[i].arm);
    results[i] = run_baseline(Method::Proposed, s, arm_cfg,
                              std::string(to_string(severity)) + "." + std::string(to_string(cells[i].arm)));
  });

  ExperimentReport report;
  report.suite = "ablation";
  report.config = to_json(cfg);
  report.config["severity"] = to_string(severity);
  report.config["seeds"] = seeds;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    report.records.push_back(results[i].record);
    report.traces.push_back({results[i].record.method + "_" + std::to_string(cells[i].seed), results[i].model.summary,
                             std::move(results[i].trace)});
  }
  return report;
}

// ---------------------------------------------------------------------------

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string run_directory_name(const nlohmann::json& canonical_args) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "run_%016llx", static_cast<unsigned long long>(fnv1a(canonical_args.dump())));
  return buf;
}

/// Writes report.json, records.csv and one step trace per run into
/// `root/run_<hash>`; returns that directory.
inline std::filesystem::path write_report(const ExperimentReport& report, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const fs::path dir = root / run_directory_name({{"suite", report.suite}, {"config", report.config}});
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  auto open = [&](const std::string& name) {
    std::ofstream os(dir / name, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::Io, "cannot write " + (dir / name).string());
    return os;
  };
  {
    auto os = open("report.json");
    os << to_json(report).dump(2) << "\n";
  }
  {
    auto os = open("records.csv");
    write_metric_csv(os, report.records);
  }
  for (const auto& t : report.traces) {
    auto os = open("trace_" + t.key + ".csv");
    write_step_csv(os, t.trace);
  }
  return dir;
}

}  // namespace plt
