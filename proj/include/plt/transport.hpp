#pragma once

// Affine-Gaussian stochastic transport z ↦ A·z + b + diag(exp(log_d))^{1/2}·ε.

#include <cmath>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "plt/measures.hpp"
#include "plt/numkit.hpp"

namespace plt {

inline const double kMinLogVariance = std::log(1e-12);
inline const double kMaxLogVariance = std::log(1e6) - 1e-9;

struct TransportParams {
  Matrix A;
  Vector b;
  Vector log_d;

  static TransportParams identity(std::size_t d, double noise_variance) {
    require(noise_variance > 0.0, ErrorKind::InvalidArgument, "noise variance must be positive");
    return {Matrix::identity(d), Vector(d, 0.0), Vector(d, std::log(noise_variance))};
  }

  std::size_t dim() const noexcept { return b.size(); }
  std::size_t flat_size() const noexcept { return dim() * dim() + 2 * dim(); }

  void validate() const {
    const std::size_t d = dim();
    require(d >= 1, ErrorKind::InvalidArgument, "transport dimension must be >= 1");
    require(A.rows() == d && A.cols() == d && log_d.size() == d, ErrorKind::DimMismatch,
            "transport parameter shapes disagree");
    for (double x : A.entries()) require(std::isfinite(x), ErrorKind::InvalidArgument, "non-finite A entry");
    for (double x : b) require(std::isfinite(x), ErrorKind::InvalidArgument, "non-finite b entry");
    for (double x : log_d)
      require(!std::isnan(x) && x < kMaxLogVariance + 1e-9, ErrorKind::InvalidArgument, "noise variance out of range");
  }

  /// Noise variance of coordinate k, clamped to [1e-12, 1e6).
  double noise_variance(std::size_t k) const { return std::exp(std::clamp(log_d[k], kMinLogVariance, kMaxLogVariance)); }

  /// d(noise_variance)/d(log_d[k]); zero where the clamp is active.
  double noise_variance_slope(std::size_t k) const {
    return (log_d[k] > kMinLogVariance && log_d[k] < kMaxLogVariance) ? std::exp(log_d[k]) : 0.0;
  }

  Vector noise_variances() const {
    Vector v(dim());
    for (std::size_t k = 0; k < dim(); ++k) v[k] = noise_variance(k);
    return v;
  }

  /// Layout: A row-major, then b, then log_d.
  Vector flatten() const {
    Vector out(A.entries());
    out.insert(out.end(), b.begin(), b.end());
    out.insert(out.end(), log_d.begin(), log_d.end());
    return out;
  }

  static TransportParams unflatten(std::size_t d, std::span<const double> flat) {
    require(flat.size() == d * d + 2 * d, ErrorKind::DimMismatch, "flat parameter length mismatch");
    TransportParams p{Matrix(d, d, std::vector<double>(flat.begin(), flat.begin() + d * d)),
                      Vector(flat.begin() + d * d, flat.begin() + d * d + d), Vector(flat.begin() + d * d + d, flat.end())};
    return p;
  }

  friend bool operator==(const TransportParams&, const TransportParams&) = default;
};

inline nlohmann::json to_json(const TransportParams& p) {
  return {{"dim", p.dim()}, {"A", p.A.entries()}, {"b", p.b}, {"log_d", p.log_d}};
}

inline TransportParams transport_params_from_json(const nlohmann::json& j) {
  try {
    const std::size_t d = j.at("dim").get<std::size_t>();
    auto a = j.at("A").get<std::vector<double>>();
    require(a.size() == d * d, ErrorKind::Parse, "A must hold dim*dim entries");
    TransportParams p{Matrix(d, d, std::move(a)), j.at("b").get<Vector>(), j.at("log_d").get<Vector>()};
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("transport params: ") + e.what());
  }
}

inline Vector transport_mean(const TransportParams& p, std::span<const double> z) {
  require(z.size() == p.dim(), ErrorKind::DimMismatch, "transport_mean dimension mismatch");
  Vector out = p.A * z;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += p.b[k];
  return out;
}

/// Reparameterized draw: mean plus independent per-coordinate noise.
inline Vector transport_sample(const TransportParams& p, std::span<const double> z, RngStream& rng) {
  Vector out = transport_mean(p, z);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += std::sqrt(p.noise_variance(k)) * rng.normal();
  return out;
}

inline ParticleCloud transport_cloud(const TransportParams& p, const ParticleCloud& cloud, RngStream& rng) {
  require(cloud.dim() == p.dim(), ErrorKind::DimMismatch, "transport_cloud dimension mismatch");
  std::vector<double> coords;
  coords.reserve(cloud.coords().size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vector t = transport_sample(p, cloud.point(i), rng);
    coords.insert(coords.end(), t.begin(), t.end());
  }
  return ParticleCloud(cloud.dim(), std::move(coords), DomainTag::Transported);
}

inline ParticleCloud transport_cloud_mean(const TransportParams& p, const ParticleCloud& cloud) {
  require(cloud.dim() == p.dim(), ErrorKind::DimMismatch, "transport_cloud_mean dimension mismatch");
  std::vector<double> coords;
  coords.reserve(cloud.coords().size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vector t = transport_mean(p, cloud.point(i));
    coords.insert(coords.end(), t.begin(), t.end());
  }
  return ParticleCloud(cloud.dim(), std::move(coords), DomainTag::Transported);
}

/// N(A·μ + b, A·Σ·Aᵀ + diag(exp(log_d))).
inline GaussianMeasure pushforward_gaussian(const TransportParams& p, const GaussianMeasure& g) {
  require(g.dim() == p.dim(), ErrorKind::DimMismatch, "pushforward dimension mismatch");
  Matrix cov = symmetrized(p.A * g.covariance * p.A.transpose());
  for (std::size_t k = 0; k < p.dim(); ++k) cov(k, k) += p.noise_variance(k);
  return {transport_mean(p, g.mean), std::move(cov)};
}

struct TransportLossValue {
  double total = 0.0;
  double cost_term = 0.0;
  double kl_term = 0.0;
  double lambda = 0.0;
};

namespace detail {

// r = (A−I)μ + b and (A−I)
inline std::pair<Vector, Matrix> displacement(const TransportParams& p, const GaussianMeasure& gs) {
  Matrix a_minus_i = p.A;
  for (std::size_t k = 0; k < p.dim(); ++k) a_minus_i(k, k) -= 1.0;
  Vector r = a_minus_i * gs.mean;
  for (std::size_t k = 0; k < r.size(); ++k) r[k] += p.b[k];
  return {std::move(r), std::move(a_minus_i)};
}

inline double expected_cost(const TransportParams& p, const GaussianMeasure& gs) {
  const auto [r, ami] = displacement(p, gs);
  const Matrix m = ami * gs.covariance;
  double tr = 0.0;
  for (std::size_t i = 0; i < p.dim(); ++i)
    for (std::size_t j = 0; j < p.dim(); ++j) tr += m(i, j) * ami(i, j);
  double noise = 0.0;
  for (std::size_t k = 0; k < p.dim(); ++k) noise += p.noise_variance(k);
  return squared_norm(r) + tr + noise;
}

}  // namespace detail

/// E‖z_s − z_t‖² under the transport plus λ·KL(pushforward ‖ target).
inline TransportLossValue transport_loss(const TransportParams& p, const GaussianMeasure& gs, const GaussianMeasure& gt,
                                         double lambda) {
  require(lambda >= 0.0, ErrorKind::InvalidArgument, "lambda must be >= 0");
  require(gs.dim() == p.dim() && gt.dim() == p.dim(), ErrorKind::DimMismatch, "transport_loss dimension mismatch");
  TransportLossValue v;
  v.lambda = lambda;
  v.cost_term = detail::expected_cost(p, gs);
  v.kl_term = gaussian_kl(pushforward_gaussian(p, gs), gt);
  v.total = v.cost_term + lambda * v.kl_term;
  return v;
}

/// Exact gradient of transport_loss(...).total in flatten() layout.
inline Vector transport_loss_grad(const TransportParams& p, const GaussianMeasure& gs, const GaussianMeasure& gt,
                                  double lambda) {
  require(lambda >= 0.0, ErrorKind::InvalidArgument, "lambda must be >= 0");
  require(gs.dim() == p.dim() && gt.dim() == p.dim(), ErrorKind::DimMismatch, "transport_loss_grad dimension mismatch");
  const std::size_t d = p.dim();
  Vector grad(p.flat_size(), 0.0);
  auto ga = std::span<double>(grad).subspan(0, d * d);
  auto gb = std::span<double>(grad).subspan(d * d, d);
  auto gl = std::span<double>(grad).subspan(d * d + d, d);

  // cost = ‖r‖² + tr((A−I)Σ(A−I)ᵀ) + Σ D
  const auto [r, ami] = detail::displacement(p, gs);
  const Matrix ami_sigma = ami * gs.covariance;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) ga[i * d + j] = 2.0 * r[i] * gs.mean[j] + 2.0 * ami_sigma(i, j);
    gb[i] = 2.0 * r[i];
    gl[i] = p.noise_variance_slope(i);
  }
  if (lambda == 0.0) return grad;

  // KL(q ‖ p_t): ∂/∂S_q = ½(P − S_q⁻¹), ∂/∂m_q = P(m_q − μ_t)
  const GaussianMeasure q = pushforward_gaussian(p, gs);
  const Matrix prec_t = SpdFactor(gt.covariance).inverse();
  const Matrix prec_q = SpdFactor(q.covariance).inverse();
  const Matrix diff = prec_t - prec_q;
  const Vector mean_grad = prec_t * subtract(q.mean, gt.mean);
  const Matrix cov_grad_a = diff * p.A * gs.covariance;  // 2·½(P − S⁻¹)·A·Σ
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += lambda * (cov_grad_a(i, j) + mean_grad[i] * gs.mean[j]);
    gb[i] += lambda * mean_grad[i];
    gl[i] += lambda * 0.5 * diff(i, i) * p.noise_variance_slope(i);
  }
  return grad;
}

struct MonteCarloLoss {
  TransportLossValue value;
  double cost_standard_error = 0.0;
  std::size_t draws = 0;
};

/// Reparameterized Monte Carlo estimate of the loss for an arbitrary source
/// measure. The cost term averages ‖z_s − T(z_s)‖² over `draws` source
/// samples; the KL term uses the moment-matched Gaussian of the transported draws.
inline MonteCarloLoss transport_loss_monte_carlo(const TransportParams& p, const Measure& source, const GaussianMeasure& gt,
                                                 double lambda, std::size_t draws, RngStream& rng) {
  require(draws >= 2, ErrorKind::InvalidArgument, "monte carlo needs at least 2 draws");
  require(dim_of(source) == p.dim(), ErrorKind::DimMismatch, "monte carlo dimension mismatch");
  const ParticleCloud zs = sample(source, draws, rng);
  RngStream noise = rng.substream(1);
  const ParticleCloud zt = transport_cloud(p, zs, noise);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double c = squared_norm(subtract(zs.point(i), zt.point(i)));
    const double delta = c - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (c - mean);
  }
  MonteCarloLoss out;
  out.draws = draws;
  out.value.lambda = lambda;
  out.value.cost_term = mean;
  out.value.kl_term = gaussian_kl(gaussian_fit(zt), gt);
  out.value.total = out.value.cost_term + lambda * out.value.kl_term;
  out.cost_standard_error = std::sqrt(m2 / static_cast<double>(draws - 1) / static_cast<double>(draws));
  return out;
}

}  // namespace plt
