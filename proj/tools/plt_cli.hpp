#pragma once

// The plt command-line tool: subcommands over the library, flat key = value
// config files and exit-code mapping. Header-only so tests can drive it
// in-process.

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "plt/benchsuite.hpp"
#include "plt/diffusion.hpp"
#include "plt/evalx.hpp"
#include "plt/pacbayes.hpp"
#include "plt/sinkhorn.hpp"
#include "plt/trainer.hpp"

#ifndef PLT_VERSION
#define PLT_VERSION "unknown"
#endif

namespace plt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

/// Numerical breakdowns exit 3; everything else a caller can fix exits 2.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotPSD:
    case ErrorKind::Asymmetric:
    case ErrorKind::NumericOverflow:
    case ErrorKind::Divergence:
    case ErrorKind::ZeroVariance:
      return kExitNumeric;
    default:
      return kExitUsage;
  }
}

// ---------------------------------------------------------------------------
// Config files

struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

inline std::string trimmed(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

/// One `key = value` per line; `#` starts a comment; blank lines are ignored.
inline std::vector<ConfigEntry> parse_config(std::istream& is, const std::string& path) {
  std::vector<ConfigEntry> out;
  std::set<std::string> seen;
  std::string line;
  for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
    const std::string body = trimmed(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = path + ":" + std::to_string(lineno);
    if (eq == std::string::npos) fail(ErrorKind::Parse, where + ": expected 'key = value'");
    ConfigEntry e{trimmed(std::string_view(body).substr(0, eq)), trimmed(std::string_view(body).substr(eq + 1)), lineno};
    if (e.key.empty()) fail(ErrorKind::Parse, where + ": empty key");
    std::replace(e.key.begin(), e.key.end(), '_', '-');
    if (!seen.insert(e.key).second) fail(ErrorKind::Parse, where + ": duplicate key '" + e.key + "'");
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<ConfigEntry> read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Io, "cannot read config file '" + path + "'");
  return parse_config(is, path);
}

/// Fills options the command line and environment left unset.
inline void apply_config(CLI::App& app, const std::vector<ConfigEntry>& entries, const std::string& path) {
  for (const auto& e : entries) {
    const std::string where = path + ":" + std::to_string(e.line);
    CLI::Option* opt = e.key == "config" || e.key == "help" ? nullptr : app.get_option_no_throw("--" + e.key);
    if (!opt) fail(ErrorKind::InvalidArgument, where + ": unknown key '" + e.key + "' for '" + app.get_name() + "'");
    if (opt->count() > 0) continue;
    try {
      opt->add_result(e.value);
      opt->run_callback();
    } catch (const CLI::Error& err) {
      fail(ErrorKind::InvalidArgument, where + ": " + err.what());
    }
  }
}

// ---------------------------------------------------------------------------
// File helpers

inline ParticleCloud load_cloud(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot read '" + path + "'");
  try {
    return read_cloud_csv(is);
  } catch (const Error& e) {
    fail(e.kind(), path + ": " + e.what());
  }
}

/// Single-column CSV with header `label`.
inline Vector load_labels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot read '" + path + "'");
  std::string line;
  if (!std::getline(is, line) || trimmed(line) != "label") fail(ErrorKind::Parse, path + ": line 1: expected header 'label'");
  Vector out;
  for (std::size_t lineno = 2; std::getline(is, line); ++lineno) {
    if (trimmed(line).empty()) continue;
    try {
      out.push_back(parse_real(line, lineno));
    } catch (const Error& e) {
      fail(ErrorKind::Parse, path + ": " + e.what());
    }
  }
  return out;
}

inline void write_labels(std::ostream& os, std::span<const double> labels) {
  os << "label\n";
  for (double y : labels) os << format_real(y) << "\n";
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
  return os;
}

inline void make_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create '" + dir.string() + "': " + ec.message());
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string_view rest(text);
  while (true) {
    const auto comma = rest.find(',');
    const std::string item = trimmed(rest.substr(0, comma));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

inline std::vector<std::int64_t> parse_seed_list(const std::string& text) {
  std::vector<std::int64_t> seeds;
  for (const std::string& item : split_list(text)) {
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size())
      fail(ErrorKind::InvalidArgument, "bad seed '" + item + "' in --seeds");
    seeds.push_back(v);
  }
  require(!seeds.empty(), ErrorKind::InvalidArgument, "--seeds is empty");
  return seeds;
}

inline nlohmann::json to_json(const MetricRecord& r) {
  return {{"method", r.method}, {"seed", r.seed},         {"geometry", r.geometry},
          {"risk", r.risk},     {"variance", r.variance}, {"energy", r.energy}};
}

// ---------------------------------------------------------------------------
// Option storage. One instance per invocation; CLI11 binds into it.

struct Common {
  std::string config;
  std::int64_t seed = 0;
  std::string output_dir = "plt_out";
  CLI::Option* seed_opt = nullptr;
};

struct ScenarioArgs {
  std::string severity = "moderate";
  std::size_t dim = 16;
  std::size_t n_s = 2000;
  std::size_t n_t = 2000;
  std::size_t test_size = 1000;
};

struct TrainArgs {
  Common common;
  ScenarioArgs scenario;
  TrainConfig train;
  std::string source, target, labels;
  bool timing = false;
};

struct BenchArgs {
  Common common;
  ScenarioArgs scenario;
  TrainConfig train = suite_train_defaults();
  std::string suite = "default";
  std::string seeds = "1,2,3,4,5";
  std::string severities = "synthetic,moderate,severe";
  std::string methods = "proposed,det_ot,mmd_align,finetune_det";
  std::string ablation_severity = "severe";
  std::size_t jobs = 1;
  CLI::Option* seeds_opt = nullptr;
};

struct SinkhornArgs {
  Common common;
  std::string x, y;
  double eps = 0.05;
  std::size_t iterations = 20;
};

struct BoundArgs {
  Common common;
  double risk = 0.0, w2 = 0.0, kl = 0.0;
  std::uint64_t n_s = 100;
  double delta = 0.05;
  double epsilon = 0.0;
  std::size_t dim = 16;
};

struct SimulateArgs {
  Common common;
  std::size_t dim = 1;
  double theta = 1.0, mean = 0.0, sigma = 1.0;
  double step = 0.01;
  std::size_t steps = 100;
  std::size_t particles = 10000;
  double x0 = 0.0;
  std::string init;
  std::size_t trajectory_every = 0;
  bool fokker_planck = false;
  std::size_t cells = 50;
  std::size_t refine = 8;
  double lo = -5.0, hi = 5.0;
};

struct MetricsArgs {
  Common common;
  std::string cloud, target, model, source, labels;
  double eps = 0.05;
  std::size_t iterations = 20;
};

inline void add_common(CLI::App& sub, Common& c, bool writes_files) {
  sub.add_option("--config", c.config, "flat 'key = value' file; command-line flags take precedence");
  c.seed_opt = sub.add_option("--seed", c.seed, "random seed");
  if (writes_files)
    sub.add_option("--output-dir", c.output_dir, "output directory")->envname("LT_OUTPUT_DIR");
}

inline void add_scenario_options(CLI::App& sub, ScenarioArgs& s, bool with_severity) {
  if (with_severity) sub.add_option("--severity", s.severity, "scenario: matched|synthetic|moderate|severe");
  sub.add_option("--dim", s.dim, "latent dimension");
  sub.add_option("--n-s", s.n_s, "source sample size");
  sub.add_option("--n-t", s.n_t, "target sample size");
  sub.add_option("--test-size", s.test_size, "held-out test pairs");
}

inline void add_train_options(CLI::App& sub, TrainConfig& c) {
  sub.add_option("--alpha", c.alpha, "transport weight");
  sub.add_option("--beta", c.beta, "PAC-Bayes weight");
  sub.add_option("--lambda", c.lambda, "weight of the pushforward-to-target KL inside the transport term");
  sub.add_option("--lr", c.lr, "Adam learning rate");
  sub.add_option("--batch", c.batch, "minibatch size");
  sub.add_option("--epochs", c.epochs, "maximum epochs");
  sub.add_option("--adam-beta1", c.adam_beta1, "Adam first-moment decay");
  sub.add_option("--adam-beta2", c.adam_beta2, "Adam second-moment decay");
  sub.add_option("--adam-eps", c.adam_eps, "Adam denominator offset");
  sub.add_option("--sinkhorn-eps", c.sinkhorn_eps, "entropic regularization for energy monitoring");
  sub.add_option("--sinkhorn-k", c.sinkhorn_k, "Sinkhorn iterations");
  sub.add_option("--posterior-var", c.posterior_var, "posterior variance per parameter");
  sub.add_option("--prior-var", c.prior_var, "prior variance per parameter");
  sub.add_option("--init-noise-var", c.init_noise_var, "initial transport noise variance");
  sub.add_option("--train-noise", c.train_noise, "learn the transport noise");
  sub.add_option("--variational", c.variational, "learn per-parameter posterior variances");
  sub.add_option("--refit-head", c.refit_head, "least-squares head refit after training");
  sub.add_option("--eval-size", c.eval_size, "monitoring subsample size");
  sub.add_option("--eval-seed", c.eval_seed, "monitoring subsample seed");
  sub.add_option("--patience", c.patience, "plateau window in epochs");
  sub.add_option("--plateau-tol", c.plateau_tol, "plateau tolerance");
}

// ---------------------------------------------------------------------------
// Subcommands

inline nlohmann::json manifest(const std::string& command) {
  return {{"tool", "plt"}, {"version", PLT_VERSION}, {"command", command}};
}

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
  namespace fs = std::filesystem;
  TrainConfig tc = a.train;
  tc.seed = a.common.seed;
  tc.validate();
  nlohmann::json man = manifest("train");
  man["seed"] = a.common.seed;

  TrainedModel model;
  TraceLog trace;
  const bool loaded = !a.source.empty() || !a.target.empty() || !a.labels.empty();
  if (loaded) {
    require(!a.source.empty() && !a.target.empty() && !a.labels.empty(), ErrorKind::InvalidArgument,
            "--source, --target and --labels must be given together");
    TrainingData data{load_cloud(a.source), load_labels(a.labels), load_cloud(a.target), std::nullopt, std::nullopt};
    TrainResult r = train(data, tc);
    model = std::move(r.model);
    trace = std::move(r.trace);
    man["inputs"] = {{"source", a.source}, {"target", a.target}, {"labels", a.labels}};
  } else {
    const Scenario s = generate_scenario(parse_severity(a.scenario.severity), a.scenario.dim, a.scenario.n_s,
                                         a.scenario.n_t, a.common.seed);
    SuiteConfig cfg;
    cfg.train = tc;
    cfg.dim = a.scenario.dim;
    cfg.n_s = a.scenario.n_s;
    cfg.n_t = a.scenario.n_t;
    cfg.test_size = a.scenario.test_size;
    RunResult r = run_baseline(Method::Proposed, s, cfg);
    model = std::move(r.model);
    trace = std::move(r.trace);
    man["scenario"] = to_json(s);
    man["test_metrics"] = to_json(r.record);
  }
  man["train_config"] = plt::to_json(tc);
  man["files"] = {"model.json", "trace.csv", "epochs.csv"};

  const fs::path dir(a.common.output_dir);
  make_directory(dir);
  open_output(dir / "model.json") << plt::to_json(model).dump(2) << "\n";
  {
    auto os = open_output(dir / "trace.csv");
    write_step_csv(os, trace, a.timing);
  }
  {
    auto os = open_output(dir / "epochs.csv");
    write_epoch_csv(os, trace);
  }
  open_output(dir / "manifest.json") << man.dump(2) << "\n";

  nlohmann::json summary = {{"output_dir", dir.string()}, {"summary", plt::to_json(model.summary)}};
  if (man.contains("test_metrics")) summary["test_metrics"] = man["test_metrics"];
  out << summary.dump(2) << "\n";
  return kExitOk;
}

inline int cmd_bench(const BenchArgs& a, std::ostream& out) {
  if (a.suite != "default" && a.suite != "ablation")
    fail(ErrorKind::InvalidArgument, "unknown suite '" + a.suite + "' (valid suites: default, ablation)");
  std::vector<std::int64_t> seeds;
  if (a.common.seed_opt->count() > 0) {
    require(a.seeds_opt->count() == 0, ErrorKind::InvalidArgument, "give either --seed or --seeds, not both");
    seeds = {a.common.seed};
  } else {
    seeds = parse_seed_list(a.seeds);
  }
  SuiteConfig cfg;
  cfg.train = a.train;
  cfg.train.validate();
  cfg.dim = a.scenario.dim;
  cfg.n_s = a.scenario.n_s;
  cfg.n_t = a.scenario.n_t;
  cfg.test_size = a.scenario.test_size;
  cfg.jobs = a.jobs;

  ExperimentReport report;
  if (a.suite == "default") {
    std::vector<Severity> severities;
    for (const auto& s : split_list(a.severities)) severities.push_back(parse_severity(s));
    std::vector<Method> methods;
    for (const auto& m : split_list(a.methods)) methods.push_back(parse_method(m));
    report = run_suite(severities, methods, seeds, cfg);
  } else {
    report = ablation_suite(parse_severity(a.ablation_severity), cfg, seeds);
  }
  make_directory(a.common.output_dir);
  const std::filesystem::path dir = write_report(report, a.common.output_dir);
  nlohmann::json man = manifest("bench");
  man["suite"] = report.suite;
  man["files"] = {"report.json", "records.csv"};
  open_output(dir / "manifest.json") << man.dump(2) << "\n";
  out << nlohmann::json{{"report_dir", dir.string()}, {"records", report.records.size()}}.dump(2) << "\n";
  return kExitOk;
}

inline int cmd_sinkhorn(const SinkhornArgs& a, std::ostream& out) {
  require(!a.x.empty() && !a.y.empty(), ErrorKind::InvalidArgument, "sinkhorn needs two cloud files");
  const ParticleCloud x = load_cloud(a.x);
  const ParticleCloud y = load_cloud(a.y);
  require(x.dim() == y.dim(), ErrorKind::DimMismatch,
          "dimension mismatch: '" + a.x + "' has dim " + std::to_string(x.dim()) + ", '" + a.y + "' has dim " +
              std::to_string(y.dim()));
  constexpr double kMaxCostEntries = 1e8;  // 800 MB of doubles
  require(static_cast<double>(x.size()) * static_cast<double>(y.size()) <= kMaxCostEntries, ErrorKind::InvalidArgument,
          "clouds of " + std::to_string(x.size()) + " and " + std::to_string(y.size()) +
              " points exceed the dense cost-matrix limit");
  const SinkhornSummary s = sinkhorn_between(x, y, a.eps, a.iterations);
  out << nlohmann::json{{"cost", s.cost}, {"marginal_error", s.marginal_error}, {"iterations_run", s.iterations_run}}.dump(2)
      << "\n";
  return kExitOk;
}

inline int cmd_bound(const BoundArgs& a, std::ostream& out) {
  nlohmann::json j = {{"transfer_bound", plt::to_json(transfer_bound(a.risk, a.w2, a.kl, a.n_s, a.delta))},
                      {"theorem3_bound", plt::to_json(theorem3_bound(a.risk, a.w2, a.kl, a.n_s, a.delta))}};
  if (a.epsilon != 0.0)
    j["sample_complexity"] = {{"dim", a.dim}, {"epsilon", a.epsilon}, {"kl", a.kl},
                              {"n_s", sample_complexity(a.dim, a.epsilon, a.kl)}};
  out << j.dump(2) << "\n";
  return kExitOk;
}

inline constexpr std::uint64_t kSimulateStream = 0x53494d;

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  namespace fs = std::filesystem;
  require(a.dim >= 1, ErrorKind::InvalidArgument, "--dim must be >= 1");
  SdeSpec spec{a.theta * Matrix::identity(a.dim), Vector(a.dim, a.mean), Vector(a.dim, a.sigma), a.step, a.steps};
  spec.validate();
  ParticleCloud z0 = a.init.empty() ? ParticleCloud(a.dim, std::vector<double>(a.particles * a.dim, a.x0), DomainTag::Source)
                                    : load_cloud(a.init);
  require(z0.size() >= 1, ErrorKind::InvalidArgument, "--particles must be >= 1");
  require(z0.dim() == a.dim, ErrorKind::DimMismatch,
          "initial cloud has dim " + std::to_string(z0.dim()) + ", --dim is " + std::to_string(a.dim));

  if (a.fokker_planck) {
    require(a.dim == 1, ErrorKind::InvalidArgument, "--fokker-planck needs --dim 1");
    require(a.cells >= 1 && a.refine >= 1 && a.hi > a.lo, ErrorKind::InvalidArgument,
            "--cells and --refine must be >= 1 and --hi must exceed --lo");
  }

  const fs::path dir(a.common.output_dir);
  make_directory(dir);
  const RngStream rng(static_cast<std::uint64_t>(a.common.seed), kSimulateStream);
  ParticleCloud final_cloud = [&] {
    if (a.trajectory_every == 0) return euler_maruyama(spec, z0, rng);
    auto os = open_output(dir / "trajectory.csv");
    TrajectoryWriter writer(os, a.dim, a.trajectory_every);
    writer.write(0.0, z0.coords());
    return euler_maruyama(spec, z0, rng, writer.observer());
  }();
  {
    auto os = open_output(dir / "final.csv");
    write_cloud_csv(os, final_cloud);
  }

  const GaussianMeasure fit = gaussian_fit(final_cloud, 0.0);
  Vector variances(a.dim);
  for (std::size_t k = 0; k < a.dim; ++k) variances[k] = fit.covariance(k, k);
  nlohmann::json j = {{"particles", final_cloud.size()},
                      {"dim", a.dim},
                      {"horizon", spec.horizon()},
                      {"mean", fit.mean},
                      {"variance", variances}};
  if (a.theta > 0.0) j["stationary_variance"] = ou_stationary_variance(a.theta, a.sigma);

  if (a.fokker_planck) {
    const std::size_t fine = a.cells * a.refine;
    const DensityGrid initial = DensityGrid::histogram(z0, a.lo, a.hi, fine);
    require(initial.mass() > 0.0, ErrorKind::InvalidArgument, "initial particles lie outside [--lo, --hi)");
    const double dz = initial.width();
    double limit = a.sigma > 0.0 ? 0.4 * dz * dz / (a.sigma * a.sigma) : spec.horizon();
    const double reach = std::abs(a.theta) * std::max(std::abs(a.lo - a.mean), std::abs(a.hi - a.mean));
    if (reach > 0.0) limit = std::min(limit, dz / reach);
    const auto fp_steps = static_cast<std::size_t>(std::ceil(spec.horizon() / (0.9 * limit)));
    const DensityGrid fp = fp_steps == 0 ? initial
                                         : fokker_planck_1d(a.theta, a.mean, a.sigma, initial,
                                                            spec.horizon() / static_cast<double>(fp_steps), fp_steps);
    j["fokker_planck"] = {{"cells", a.cells},
                          {"fine_cells", fine},
                          {"steps", fp_steps},
                          {"total_variation", total_variation(DensityGrid::histogram(final_cloud, a.lo, a.hi, a.cells),
                                                              fp.coarsened(a.cells))}};
  }
  open_output(dir / "summary.json") << j.dump(2) << "\n";
  out << j.dump(2) << "\n";
  return kExitOk;
}

inline constexpr std::uint64_t kMetricsStream = 0x4d4554;

inline int cmd_metrics(const MetricsArgs& a, std::ostream& out) {
  require(!a.target.empty(), ErrorKind::InvalidArgument, "metrics needs --target");
  const ParticleCloud target = load_cloud(a.target);
  std::optional<TrainedModel> model;
  if (!a.model.empty()) {
    std::ifstream is(a.model);
    if (!is) fail(ErrorKind::Io, "cannot read '" + a.model + "'");
    try {
      const nlohmann::json j = nlohmann::json::parse(is);
      TrainedModel m;
      m.params = transport_params_from_json(j.at("params"));
      m.head.w = j.at("head").at("w").get<Vector>();
      m.head.w0 = j.at("head").at("w0").get<double>();
      model = std::move(m);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Parse, a.model + ": " + e.what());
    }
  }
  ParticleCloud moved = [&] {
    if (!a.cloud.empty()) return load_cloud(a.cloud);
    require(model.has_value() && !a.source.empty(), ErrorKind::InvalidArgument,
            "metrics needs --cloud, or --model with --source");
    RngStream rng(static_cast<std::uint64_t>(a.common.seed), kMetricsStream);
    return transport_cloud(model->params, load_cloud(a.source), rng);
  }();
  require(moved.dim() == target.dim(), ErrorKind::DimMismatch,
          "dimension mismatch: transported cloud has dim " + std::to_string(moved.dim()) + ", target has dim " +
              std::to_string(target.dim()));
  const GaussianMeasure target_fit = gaussian_fit(target);
  nlohmann::json j = {{"geometry", geometry_discrepancy(moved, target_fit)},
                      {"energy", sinkhorn_between(moved, target, a.eps, a.iterations).cost}};
  if (model) {
    require(model->params.dim() == target.dim(), ErrorKind::DimMismatch, "model dimension differs from target");
    j["variance"] = variance_trace(model->params);
    j["calibration"] =
        covariance_calibration(target_fit.covariance, Matrix::diagonal(model->params.noise_variances()));
    if (!a.labels.empty()) {
      const Vector labels = load_labels(a.labels);
      j["risk"] = mean_squared_error(model->head, target, labels);
    }
  }
  out << j.dump(2) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

/// Runs one invocation; `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Probabilistic latent transport: training, benchmarks and diagnostics", "plt"};
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_version_flag("--version", std::string(PLT_VERSION));
  app.require_subcommand(1);

  TrainArgs train_args;
  BenchArgs bench_args;
  SinkhornArgs sinkhorn_args;
  BoundArgs bound_args;
  SimulateArgs simulate_args;
  MetricsArgs metrics_args;

  CLI::App* train_cmd = app.add_subcommand("train", "train the stochastic transport on a generated or loaded scenario");
  add_common(*train_cmd, train_args.common, true);
  add_scenario_options(*train_cmd, train_args.scenario, true);
  add_train_options(*train_cmd, train_args.train);
  train_cmd->add_option("--source", train_args.source, "source cloud CSV (with --target and --labels)");
  train_cmd->add_option("--target", train_args.target, "target cloud CSV");
  train_cmd->add_option("--labels", train_args.labels, "source labels CSV");
  train_cmd->add_flag("--timing", train_args.timing, "add wall_ms to the step trace");

  CLI::App* bench_cmd = app.add_subcommand("bench", "run the method comparison or ablation suite");
  add_common(*bench_cmd, bench_args.common, true);
  add_scenario_options(*bench_cmd, bench_args.scenario, false);
  add_train_options(*bench_cmd, bench_args.train);
  bench_cmd->add_option("--suite", bench_args.suite, "default|ablation");
  bench_args.seeds_opt = bench_cmd->add_option("--seeds", bench_args.seeds, "comma-separated seeds");
  bench_cmd->add_option("--severities", bench_args.severities, "default suite severities");
  bench_cmd->add_option("--methods", bench_args.methods, "default suite methods");
  bench_cmd->add_option("--severity", bench_args.ablation_severity, "ablation suite severity");
  bench_cmd->add_option("--jobs", bench_args.jobs, "maximum concurrent suite cells");

  CLI::App* sinkhorn_cmd = app.add_subcommand("sinkhorn", "entropic transport cost between two cloud CSV files");
  add_common(*sinkhorn_cmd, sinkhorn_args.common, false);
  sinkhorn_cmd->add_option("--x,x", sinkhorn_args.x, "first cloud CSV");
  sinkhorn_cmd->add_option("--y,y", sinkhorn_args.y, "second cloud CSV");
  sinkhorn_cmd->add_option("--eps", sinkhorn_args.eps, "entropic regularization");
  sinkhorn_cmd->add_option("--iterations", sinkhorn_args.iterations, "Sinkhorn iterations");

  CLI::App* bound_cmd = app.add_subcommand("bound", "evaluate the transfer bounds");
  add_common(*bound_cmd, bound_args.common, false);
  bound_cmd->add_option("--risk", bound_args.risk, "empirical source risk");
  bound_cmd->add_option("--w2", bound_args.w2, "squared transport distance term");
  bound_cmd->add_option("--kl", bound_args.kl, "posterior-to-prior KL");
  bound_cmd->add_option("--ns", bound_args.n_s, "source sample size");
  bound_cmd->add_option("--delta", bound_args.delta, "confidence parameter in (0, 1)");
  bound_cmd->add_option("--epsilon", bound_args.epsilon, "target accuracy for the sample-complexity estimate (0 = off)");
  bound_cmd->add_option("--dim", bound_args.dim, "dimension for the sample-complexity estimate");

  CLI::App* simulate_cmd = app.add_subcommand("simulate", "Euler-Maruyama simulation of an isotropic OU process");
  add_common(*simulate_cmd, simulate_args.common, true);
  simulate_cmd->add_option("--dim", simulate_args.dim, "state dimension");
  simulate_cmd->add_option("--theta", simulate_args.theta, "mean-reversion rate");
  simulate_cmd->add_option("--mean", simulate_args.mean, "long-run mean (every coordinate)");
  simulate_cmd->add_option("--sigma", simulate_args.sigma, "diffusion coefficient");
  simulate_cmd->add_option("--step", simulate_args.step, "time step");
  simulate_cmd->add_option("--steps", simulate_args.steps, "number of steps");
  simulate_cmd->add_option("--particles", simulate_args.particles, "particles started at --x0");
  simulate_cmd->add_option("--x0", simulate_args.x0, "starting coordinate");
  simulate_cmd->add_option("--init", simulate_args.init, "initial cloud CSV (overrides --particles/--x0)");
  simulate_cmd->add_option("--trajectory-every", simulate_args.trajectory_every,
                           "write trajectory.csv every N steps (0 = off)");
  simulate_cmd->add_option("--fokker-planck", simulate_args.fokker_planck, "compare against the 1-D Fokker-Planck solver");
  simulate_cmd->add_option("--cells", simulate_args.cells, "histogram cells for the comparison");
  simulate_cmd->add_option("--refine", simulate_args.refine, "Fokker-Planck cells per histogram cell");
  simulate_cmd->add_option("--lo", simulate_args.lo, "grid lower edge");
  simulate_cmd->add_option("--hi", simulate_args.hi, "grid upper edge");

  CLI::App* metrics_cmd = app.add_subcommand("metrics", "evaluation metrics on saved clouds and models");
  add_common(*metrics_cmd, metrics_args.common, false);
  metrics_cmd->add_option("--cloud", metrics_args.cloud, "transported cloud CSV");
  metrics_cmd->add_option("--target", metrics_args.target, "target cloud CSV");
  metrics_cmd->add_option("--model", metrics_args.model, "model JSON written by train");
  metrics_cmd->add_option("--source", metrics_args.source, "source cloud CSV to transport with --model");
  metrics_cmd->add_option("--labels", metrics_args.labels, "target labels CSV for the risk");
  metrics_cmd->add_option("--eps", metrics_args.eps, "entropic regularization for the energy");
  metrics_cmd->add_option("--iterations", metrics_args.iterations, "Sinkhorn iterations for the energy");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    const std::map<CLI::App*, Common*> commons = {
        {train_cmd, &train_args.common},       {bench_cmd, &bench_args.common},   {sinkhorn_cmd, &sinkhorn_args.common},
        {bound_cmd, &bound_args.common},       {simulate_cmd, &simulate_args.common}, {metrics_cmd, &metrics_args.common}};
    const Common& common = *commons.at(active);
    if (!common.config.empty()) apply_config(*active, read_config_file(common.config), common.config);

    if (active == train_cmd) return cmd_train(train_args, out);
    if (active == bench_cmd) return cmd_bench(bench_args, out);
    if (active == sinkhorn_cmd) return cmd_sinkhorn(sinkhorn_args, out);
    if (active == bound_cmd) return cmd_bound(bound_args, out);
    if (active == simulate_cmd) return cmd_simulate(simulate_args, out);
    return cmd_metrics(metrics_args, out);
  } catch (const Error& e) {
    err << "plt " << active->get_name() << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "plt " << active->get_name() << ": " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace plt::cli
