#pragma once

// Evaluation metrics: score-field geometry, covariance calibration, transport
// energy, noise-variance trace, linear-head risk and the paired Z-test.

#include <cmath>
#include <ostream>
#include <string>

#include "plt/measures.hpp"
#include "plt/numkit.hpp"
#include "plt/sinkhorn.hpp"
#include "plt/transport.hpp"

namespace plt {

struct MetricRecord {
  std::string method;
  std::int64_t seed = 0;
  double geometry = 0.0;
  double risk = 0.0;
  double variance = 0.0;
  double energy = 0.0;

  void validate() const {
    for (double v : {geometry, risk, variance, energy})
      require(std::isfinite(v) && v >= 0.0, ErrorKind::InvalidArgument, "metric values must be finite and >= 0");
  }

  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline constexpr std::string_view kMetricCsvHeader = "method,seed,geometry,risk,variance,energy";

inline void write_metric_csv(std::ostream& os, const std::vector<MetricRecord>& records) {
  os << kMetricCsvHeader << "\r\n";
  for (const auto& r : records)
    os << csv_field(r.method) << "," << r.seed << "," << format_real(r.geometry) << "," << format_real(r.risk) << ","
       << format_real(r.variance) << "," << format_real(r.energy) << "\r\n";
}

// ---------------------------------------------------------------------------

/// Mean over the cloud of ‖∇log p_target(z) − ∇log p_transported(z)‖².
inline double geometry_discrepancy(const ParticleCloud& transported, const GaussianMeasure& target_model,
                                   const GaussianMeasure& transported_model) {
  require(transported.size() >= 2, ErrorKind::InvalidArgument, "geometry_discrepancy needs at least 2 points");
  require(transported.dim() == target_model.dim() && transported.dim() == transported_model.dim(), ErrorKind::DimMismatch,
          "geometry_discrepancy dimension mismatch");
  const std::size_t d = transported.dim();
  const Matrix prec_t = SpdFactor(target_model.covariance).inverse();
  const Matrix prec_q = SpdFactor(transported_model.covariance).inverse();
  // s_t(z) − s_q(z) = (P_q − P_t)·z + (P_t·μ_t − P_q·μ_q)
  const Matrix m = prec_q - prec_t;
  Vector c = prec_t * target_model.mean;
  const Vector pq_mu = prec_q * transported_model.mean;
  for (std::size_t k = 0; k < d; ++k) c[k] -= pq_mu[k];
  double total = 0.0;
  for (std::size_t i = 0; i < transported.size(); ++i) {
    Vector diff = m * transported.point(i);
    for (std::size_t k = 0; k < d; ++k) diff[k] += c[k];
    total += squared_norm(diff);
  }
  return total / static_cast<double>(transported.size());
}

/// Variant that fits the transported model to the cloud itself.
inline double geometry_discrepancy(const ParticleCloud& transported, const GaussianMeasure& target_model) {
  return geometry_discrepancy(transported, target_model, gaussian_fit(transported));
}

/// ‖Σ_t − Σ_φ‖_F² for a full state-independent noise covariance.
inline double covariance_calibration(const Matrix& target_cov, const Matrix& noise_cov) {
  require(target_cov.rows() == noise_cov.rows() && target_cov.cols() == noise_cov.cols(), ErrorKind::DimMismatch,
          "covariance_calibration dimension mismatch");
  const double f = (target_cov - noise_cov).frobenius_norm();
  return f * f;
}

/// ‖Σ_t − diag(exp(log_d))‖_F². The source model does not enter because the
/// transport noise does not depend on the source point.
inline double covariance_calibration(const TransportParams& params, const GaussianMeasure& source_model,
                                     const GaussianMeasure& target) {
  require(source_model.dim() == params.dim() && target.dim() == params.dim(), ErrorKind::DimMismatch,
          "covariance_calibration dimension mismatch");
  return covariance_calibration(target.covariance, Matrix::diagonal(params.noise_variances()));
}

/// Entropic transport cost between the stochastically transported source and the target.
inline double transport_energy(const ParticleCloud& source, const TransportParams& params, const ParticleCloud& target,
                               double eps, std::size_t iterations, RngStream& rng) {
  require(source.size() >= 1 && target.size() >= 1, ErrorKind::InvalidArgument, "transport_energy needs nonempty clouds");
  return sinkhorn_between(transport_cloud(params, source, rng), target, eps, iterations).cost;
}

/// Mean transported noise variance.
inline double variance_trace(const TransportParams& params) {
  double s = 0.0;
  for (std::size_t k = 0; k < params.dim(); ++k) s += params.noise_variance(k);
  return s / static_cast<double>(params.dim());
}

// ---------------------------------------------------------------------------

/// y ≈ w·z + w0.
struct LinearHead {
  Vector w;
  double w0 = 0.0;

  static LinearHead zeros(std::size_t d) { return {Vector(d, 0.0), 0.0}; }

  std::size_t dim() const noexcept { return w.size(); }
  double predict(std::span<const double> z) const { return dot(w, z) + w0; }

  Vector flatten() const {
    Vector out(w);
    out.push_back(w0);
    return out;
  }

  static LinearHead unflatten(std::span<const double> flat) {
    require(!flat.empty(), ErrorKind::DimMismatch, "head needs at least the intercept");
    return {Vector(flat.begin(), flat.end() - 1), flat.back()};
  }

  friend bool operator==(const LinearHead&, const LinearHead&) = default;
};

inline double mean_squared_error(const LinearHead& head, const ParticleCloud& cloud, std::span<const double> labels) {
  require(cloud.size() == labels.size() && cloud.size() >= 1, ErrorKind::DimMismatch, "labels do not match cloud");
  require(cloud.dim() == head.dim(), ErrorKind::DimMismatch, "head dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double e = head.predict(cloud.point(i)) - labels[i];
    s += e * e;
  }
  return s / static_cast<double>(cloud.size());
}

/// Ordinary least squares with intercept; `ridge` is added to the normal
/// equations' diagonal (intercept excluded).
inline LinearHead fit_least_squares(const ParticleCloud& cloud, std::span<const double> labels, double ridge = 1e-10) {
  require(cloud.size() == labels.size() && cloud.size() >= 1, ErrorKind::DimMismatch, "labels do not match cloud");
  const std::size_t d = cloud.dim();
  Matrix gram(d + 1, d + 1);
  Vector rhs(d + 1, 0.0);
  Vector x(d + 1, 1.0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto z = cloud.point(i);
    std::copy(z.begin(), z.end(), x.begin());
    for (std::size_t a = 0; a <= d; ++a) {
      rhs[a] += x[a] * labels[i];
      for (std::size_t b = 0; b <= a; ++b) gram(a, b) += x[a] * x[b];
    }
  }
  const double n = static_cast<double>(cloud.size());
  for (std::size_t a = 0; a <= d; ++a) {
    rhs[a] /= n;
    for (std::size_t b = 0; b <= a; ++b) gram(b, a) = gram(a, b) /= n;
    if (a < d) gram(a, a) += ridge;
  }
  return LinearHead::unflatten(SpdFactor(gram).solve(rhs));
}

// ---------------------------------------------------------------------------

struct ZTest {
  double z = 0.0;
  double p_two_sided = 1.0;
  std::size_t n = 0;
  double mean = 0.0;
};

/// Z = mean(Δ)/(σ̂/√n) with the unbiased σ̂; p from the standard normal.
inline ZTest z_statistic(std::span<const double> deltas) {
  require(deltas.size() >= 2, ErrorKind::InvalidArgument, "z_statistic needs at least two values");
  const double n = static_cast<double>(deltas.size());
  double mean = 0.0;
  for (double x : deltas) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : deltas) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 1e-300)) fail(ErrorKind::ZeroVariance, "z_statistic: sample standard deviation is zero");
  ZTest t;
  t.n = deltas.size();
  t.mean = mean;
  t.z = mean / (sd / std::sqrt(n));
  t.p_two_sided = std::erfc(std::abs(t.z) / std::sqrt(2.0));
  return t;
}

}  // namespace plt
