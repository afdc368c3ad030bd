#pragma once

// Euler–Maruyama simulation of affine-drift SDEs and a 1-D Fokker–Planck
// reference solver.

#include <cmath>
#include <functional>
#include <ostream>

#include "plt/measures.hpp"
#include "plt/numkit.hpp"

namespace plt {

/// dz = −Θ(z − m)·dt + diag(σ)·dW, integrated with `steps` steps of size `step`.
struct SdeSpec {
  Matrix theta;
  Vector m;
  Vector sigma;
  double step = 0.01;
  std::size_t steps = 0;

  static SdeSpec ornstein_uhlenbeck_1d(double theta, double mean, double sigma, double step, std::size_t steps) {
    return {Matrix(1, 1, std::vector<double>{theta}), Vector{mean}, Vector{sigma}, step, steps};
  }

  std::size_t dim() const noexcept { return m.size(); }
  double horizon() const noexcept { return step * static_cast<double>(steps); }

  void validate() const {
    require(step > 0.0 && std::isfinite(step), ErrorKind::InvalidArgument, "sde step must be > 0");
    require(theta.rows() == dim() && theta.cols() == dim() && sigma.size() == dim(), ErrorKind::DimMismatch,
            "sde drift/diffusion shapes disagree");
    for (double s : sigma) require(s >= 0.0 && std::isfinite(s), ErrorKind::InvalidArgument, "sigma must be >= 0");
  }
};

/// Called after every step with (step index starting at 1, time, row-major coordinates).
using StepObserver = std::function<void(std::size_t, double, std::span<const double>)>;

inline constexpr double kDivergenceBound = 1e9;

/// Advances each particle independently; particle i draws its noise from
/// rng.substream(i), so results do not depend on evaluation order.
inline ParticleCloud euler_maruyama(const SdeSpec& spec, const ParticleCloud& z0, const RngStream& rng,
                                   const StepObserver& observer = {}) {
  spec.validate();
  require(z0.dim() == spec.dim(), ErrorKind::DimMismatch, "initial cloud dimension differs from sde dimension");
  const std::size_t d = spec.dim();
  const std::size_t n = z0.size();
  std::vector<double> z = z0.coords();
  std::vector<RngStream> streams;
  streams.reserve(n);
  for (std::size_t i = 0; i < n; ++i) streams.push_back(rng.substream(i));

  const double h = spec.step;
  const double sqrt_h = std::sqrt(h);
  Vector drift(d);
  for (std::size_t s = 1; s <= spec.steps; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      double* zi = z.data() + i * d;
      for (std::size_t a = 0; a < d; ++a) {
        double acc = 0.0;
        for (std::size_t b = 0; b < d; ++b) acc += spec.theta(a, b) * (zi[b] - spec.m[b]);
        drift[a] = -acc;
      }
      for (std::size_t a = 0; a < d; ++a) {
        double next = zi[a] + drift[a] * h;
        if (spec.sigma[a] != 0.0) next += spec.sigma[a] * sqrt_h * streams[i].normal();
        if (!(std::abs(next) <= kDivergenceBound))
          fail(ErrorKind::Divergence, "euler_maruyama: particle " + std::to_string(i) + " left the bounded region at step " +
                                          std::to_string(s));
        zi[a] = next;
      }
    }
    if (observer) observer(s, h * static_cast<double>(s), z);
  }
  return ParticleCloud(d, std::move(z), z0.tag());
}

/// Writes `time,particle_id,x0,...` rows every `every` steps.
class TrajectoryWriter {
 public:
  TrajectoryWriter(std::ostream& os, std::size_t dim, std::size_t every) : os_(os), dim_(dim), every_(every == 0 ? 1 : every) {
    os_ << "time,particle_id";
    for (std::size_t k = 0; k < dim_; ++k) os_ << ",x" << k;
    os_ << "\n";
  }

  void write(double time, std::span<const double> coords) {
    for (std::size_t i = 0; i < coords.size() / dim_; ++i) {
      os_ << format_real(time) << "," << i;
      for (std::size_t k = 0; k < dim_; ++k) os_ << "," << format_real(coords[i * dim_ + k]);
      os_ << "\n";
    }
  }

  StepObserver observer() {
    return [this](std::size_t step, double time, std::span<const double> coords) {
      if (step % every_ == 0) write(time, coords);
    };
  }

 private:
  std::ostream& os_;
  std::size_t dim_;
  std::size_t every_;
};

inline double ou_stationary_variance(double theta, double sigma) {
  require(theta > 0.0, ErrorKind::NonpositiveTheta, "theta must be > 0");
  return sigma * sigma / (2.0 * theta);
}

// ---------------------------------------------------------------------------

/// Piecewise-constant density on [lo, hi] with `values.size()` equal cells.
struct DensityGrid {
  double lo = 0.0;
  double hi = 1.0;
  Vector values;

  std::size_t cells() const noexcept { return values.size(); }
  double width() const noexcept { return (hi - lo) / static_cast<double>(values.size()); }
  double center(std::size_t i) const noexcept { return lo + (static_cast<double>(i) + 0.5) * width(); }

  double mass() const noexcept {
    double s = 0.0;
    for (double v : values) s += v;
    return s * width();
  }

  /// Cell-centre evaluation of `density`, renormalized to unit mass.
  template <typename F>
  static DensityGrid from_density(double lo, double hi, std::size_t cells, F&& density) {
    require(hi > lo && cells >= 1, ErrorKind::InvalidArgument, "density grid needs hi > lo and cells >= 1");
    DensityGrid g{lo, hi, Vector(cells)};
    for (std::size_t i = 0; i < cells; ++i) g.values[i] = density(g.center(i));
    const double m = g.mass();
    require(m > 0.0, ErrorKind::InvalidArgument, "density has no mass on the grid");
    for (double& v : g.values) v /= m;
    return g;
  }

  /// Normalized histogram of the first coordinate; points outside [lo, hi) are dropped.
  static DensityGrid histogram(const ParticleCloud& cloud, double lo, double hi, std::size_t cells) {
    require(hi > lo && cells >= 1, ErrorKind::InvalidArgument, "histogram needs hi > lo and cells >= 1");
    DensityGrid g{lo, hi, Vector(cells, 0.0)};
    const double w = g.width();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const double x = cloud.point(i)[0];
      if (x < lo || x >= hi) continue;
      const auto k = std::min(cells - 1, static_cast<std::size_t>((x - lo) / w));
      g.values[k] += 1.0;
    }
    for (double& v : g.values) v /= static_cast<double>(cloud.size()) * w;
    return g;
  }

  /// Sums adjacent cells so the result has `cells` cells (must divide evenly).
  DensityGrid coarsened(std::size_t target_cells) const {
    require(target_cells >= 1 && cells() % target_cells == 0, ErrorKind::InvalidArgument,
            "coarsened cell count must divide the grid");
    const std::size_t k = cells() / target_cells;
    DensityGrid g{lo, hi, Vector(target_cells, 0.0)};
    for (std::size_t i = 0; i < cells(); ++i) g.values[i / k] += values[i] / static_cast<double>(k);
    return g;
  }
};

inline double total_variation(const DensityGrid& a, const DensityGrid& b) {
  require(a.cells() == b.cells() && a.lo == b.lo && a.hi == b.hi, ErrorKind::DimMismatch, "grids differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.cells(); ++i) s += std::abs(a.values[i] - b.values[i]);
  return 0.5 * s * a.width();
}

/// Explicit conservative finite-volume update of
/// ∂p/∂t = −∂(μp)/∂z + ½σ²∂²p/∂z² with μ(z) = −θ(z − m) and zero-flux walls.
/// Face values are central, falling back to upwind where the cell Péclet
/// number reaches 2.
inline DensityGrid fokker_planck_1d(double theta, double m, double sigma, const DensityGrid& initial, double step,
                                    std::size_t steps) {
  require(step > 0.0, ErrorKind::InvalidArgument, "fokker_planck_1d: step must be > 0");
  require(initial.cells() >= 2, ErrorKind::InvalidArgument, "fokker_planck_1d: need at least two cells");
  const double dz = initial.width();
  const double diff = 0.5 * sigma * sigma;
  if (sigma > 0.0 && step > 0.4 * dz * dz / (sigma * sigma))
    fail(ErrorKind::UnstableStep, "fokker_planck_1d: step " + std::to_string(step) + " exceeds 0.4*dz^2/sigma^2 = " +
                                      std::to_string(0.4 * dz * dz / (sigma * sigma)));
  const double max_drift = std::abs(theta) * std::max(std::abs(initial.lo - m), std::abs(initial.hi - m));
  if (step * max_drift > dz)
    fail(ErrorKind::UnstableStep, "fokker_planck_1d: advective CFL violated (step*max|mu| > dz)");

  const std::size_t n = initial.cells();
  DensityGrid g = initial;
  Vector flux(n + 1, 0.0);
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t k = 1; k < n; ++k) {
      const double x = g.lo + static_cast<double>(k) * dz;
      const double mu = -theta * (x - m);
      const double left = g.values[k - 1];
      const double right = g.values[k];
      const bool upwind = diff <= 0.0 || std::abs(mu) * dz >= 4.0 * diff;
      const double face = upwind ? (mu > 0.0 ? left : right) : 0.5 * (left + right);
      flux[k] = mu * face - diff * (right - left) / dz;
    }
    const double ratio = step / dz;
    for (std::size_t i = 0; i < n; ++i) g.values[i] -= ratio * (flux[i + 1] - flux[i]);
  }
  return g;
}

}  // namespace plt
