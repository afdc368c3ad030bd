#pragma once

// Diagonal-Gaussian posteriors over transport parameters, transfer bounds and
// the sample-complexity calculator.

#include <cmath>
#include <cstdint>

#include <nlohmann/json.hpp>

#include "plt/numkit.hpp"
#include "plt/transport.hpp"

namespace plt {

/// ρ = N(mean, diag(exp(log_var))) against π = N(prior_mean, prior_var·I).
struct PosteriorSpec {
  Vector mean;
  Vector log_var;
  Vector prior_mean;
  double prior_var = 1.0;

  /// Posterior centred at `params` with a shared variance, prior centred at `prior`.
  static PosteriorSpec around(const TransportParams& params, double posterior_var, const TransportParams& prior,
                              double prior_var) {
    require(posterior_var > 0.0, ErrorKind::InvalidArgument, "posterior variance must be > 0");
    Vector mean = params.flatten();
    Vector log_var(mean.size(), std::log(posterior_var));
    return {std::move(mean), std::move(log_var), prior.flatten(), prior_var};
  }

  void validate() const {
    require(mean.size() == log_var.size() && mean.size() == prior_mean.size(), ErrorKind::DimMismatch,
            "posterior/prior lengths differ");
    require(prior_var > 0.0 && std::isfinite(prior_var), ErrorKind::InvalidArgument, "prior variance must be > 0");
    for (double v : log_var) require(std::isfinite(v), ErrorKind::InvalidArgument, "posterior log-variance not finite");
  }
};

/// ½Σ(v/v_π − 1 − ln(v/v_π)) + ½Σ(μ − μ_π)²/v_π.
inline double posterior_kl(const PosteriorSpec& rho) {
  rho.validate();
  const double log_prior = std::log(rho.prior_var);
  double s = 0.0;
  for (std::size_t k = 0; k < rho.mean.size(); ++k) {
    const double log_ratio = rho.log_var[k] - log_prior;
    const double dm = rho.mean[k] - rho.prior_mean[k];
    s += std::expm1(log_ratio) - log_ratio + dm * dm / rho.prior_var;
  }
  return std::max(0.0, 0.5 * s);
}

struct PosteriorKlGrad {
  Vector mean;
  Vector log_var;
};

inline PosteriorKlGrad posterior_kl_grad(const PosteriorSpec& rho) {
  rho.validate();
  PosteriorKlGrad g{Vector(rho.mean.size()), Vector(rho.mean.size())};
  for (std::size_t k = 0; k < rho.mean.size(); ++k) {
    g.mean[k] = (rho.mean[k] - rho.prior_mean[k]) / rho.prior_var;
    g.log_var[k] = 0.5 * (std::exp(rho.log_var[k]) / rho.prior_var - 1.0);
  }
  return g;
}

struct BoundReport {
  double source_risk = 0.0;
  double w2_term = 0.0;
  double kl_term = 0.0;
  double confidence_term = 0.0;
  double bound = 0.0;
  std::uint64_t n_s = 0;
  double delta = 0.0;
};

inline nlohmann::json to_json(const BoundReport& r) {
  return {{"source_risk", r.source_risk}, {"w2_term", r.w2_term}, {"kl_term", r.kl_term},
          {"confidence_term", r.confidence_term}, {"bound", r.bound}, {"n_s", r.n_s}, {"delta", r.delta}};
}

namespace detail {

inline void check_bound_inputs(double source_risk, double w2, double kl, std::uint64_t n_s) {
  require(n_s >= 1, ErrorKind::InvalidArgument, "n_s must be >= 1");
  require(std::isfinite(source_risk), ErrorKind::InvalidArgument, "source risk must be finite");
  require(w2 >= 0.0 && std::isfinite(w2), ErrorKind::InvalidArgument, "w2 must be finite and >= 0");
  require(kl >= 0.0 && std::isfinite(kl), ErrorKind::InvalidArgument, "kl must be finite and >= 0");
}

inline BoundReport compose_bound(double source_risk, double w2, double kl, std::uint64_t n_s, double delta,
                                 double log_term) {
  BoundReport r{source_risk, w2, kl, 0.0, 0.0, n_s, delta};
  r.confidence_term = std::sqrt(std::max(0.0, kl + log_term) / (2.0 * static_cast<double>(n_s)));
  r.bound = source_risk + w2 + r.confidence_term;
  return r;
}

}  // namespace detail

/// R̂_s + W₂ + √((KL + ln(2√n_s/δ)) / (2n_s)).
inline BoundReport transfer_bound(double source_risk, double w2, double kl, std::uint64_t n_s, double delta) {
  require(delta > 0.0 && delta < 1.0, ErrorKind::BadDelta, "delta must lie in (0, 1), got " + std::to_string(delta));
  detail::check_bound_inputs(source_risk, w2, kl, n_s);
  const double log_term = std::log(2.0 * std::sqrt(static_cast<double>(n_s)) / delta);
  return detail::compose_bound(source_risk, w2, kl, n_s, delta, log_term);
}

/// R̂_s + W₂ + √((KL + ln(1/δ)) / (2n_s)). δ = 1 is accepted as the limiting case.
inline BoundReport theorem3_bound(double source_risk, double w2, double kl, std::uint64_t n_s, double delta) {
  require(delta > 0.0 && delta <= 1.0, ErrorKind::BadDelta, "delta must lie in (0, 1], got " + std::to_string(delta));
  detail::check_bound_inputs(source_risk, w2, kl, n_s);
  return detail::compose_bound(source_risk, w2, kl, n_s, delta, -std::log(delta));
}

/// ceil((d·ln(1/ε) + KL)/ε²) with unit constants, at least 1. Illustrative units.
inline std::uint64_t sample_complexity(std::uint64_t d, double epsilon, double kl) {
  require(epsilon > 0.0 && epsilon < 1.0, ErrorKind::BadEpsilon,
          "epsilon must lie in (0, 1), got " + std::to_string(epsilon));
  require(kl >= 0.0 && std::isfinite(kl), ErrorKind::InvalidArgument, "kl must be finite and >= 0");
  const double n = std::ceil((static_cast<double>(d) * std::log(1.0 / epsilon) + kl) / (epsilon * epsilon));
  require(n < 1.8e19, ErrorKind::NumericOverflow, "sample complexity overflows");
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(n));
}

}  // namespace plt
