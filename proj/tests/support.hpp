#pragma once

// Shared helpers for the test binaries.

#include "plt/measures.hpp"

namespace plt::testing {

/// Affinely standardizes a cloud so its sample mean and population covariance
/// equal the target moments exactly; removes moment sampling noise from
/// oracle comparisons while keeping the cloud's shape.
inline ParticleCloud moment_matched(const ParticleCloud& cloud, const GaussianMeasure& target) {
  const GaussianMeasure fit = gaussian_fit(cloud, 0.0);
  const Matrix map = psd_sqrt(target.covariance) * psd_inv_sqrt(fit.covariance);
  std::vector<double> coords;
  coords.reserve(cloud.coords().size());
  Vector centered(cloud.dim());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (std::size_t k = 0; k < cloud.dim(); ++k) centered[k] = cloud.point(i)[k] - fit.mean[k];
    const Vector y = map * centered;
    for (std::size_t k = 0; k < cloud.dim(); ++k) coords.push_back(y[k] + target.mean[k]);
  }
  return ParticleCloud(cloud.dim(), std::move(coords), cloud.tag());
}

/// n draws from `g` standardized to its exact moments.
inline ParticleCloud exact_moment_sample(const GaussianMeasure& g, std::size_t n, std::uint64_t seed, std::uint64_t stream) {
  RngStream rng(seed, stream);
  return moment_matched(sample(g, n, rng), g);
}

}  // namespace plt::testing
