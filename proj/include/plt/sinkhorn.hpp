#pragma once

// Entropic optimal transport between uniform empirical measures.

#include <cmath>
#include <limits>

#include "plt/measures.hpp"
#include "plt/numkit.hpp"

namespace plt {

struct TransportPlan {
  Matrix coupling;
  double epsilon = 0.0;
  std::size_t iterations_run = 0;
  double marginal_error = 0.0;  // max-norm violation over row and column marginals
};

/// C[i][j] = ‖x_i − y_j‖².
inline Matrix cost_matrix(const ParticleCloud& x, const ParticleCloud& y) {
  require(x.dim() == y.dim(), ErrorKind::DimMismatch,
          "cost_matrix: dims " + std::to_string(x.dim()) + " and " + std::to_string(y.dim()));
  const std::size_t d = x.dim();
  Matrix c(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto xi = x.point(i);
    auto row = c.row(i);
    for (std::size_t j = 0; j < y.size(); ++j) {
      auto yj = y.point(j);
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = xi[k] - yj[k];
        s += diff * diff;
      }
      row[j] = s;
    }
  }
  return c;
}

namespace detail {

// Terms more than e^-50 below the row maximum cannot change a double-precision sum.
inline constexpr double kLogSumCutoff = 50.0;
// Over-relaxation weight applied once the schedule has reached the target eps.
inline constexpr double kRelaxation = 1.9;

// out[r] ← (1−ω)·out[r] + ω·(eps·log_weight − eps·log Σ_j exp((pot_j − cost_rj)/eps)).
inline void softmin_update(const Matrix& cost, const Vector& pot, double eps, double log_weight, double omega,
                           Vector& out, Vector& scratch) {
  const double inv_eps = 1.0 / eps;
  const std::size_t cols = cost.cols();
  double* buf = scratch.data();
  const double* p = pot.data();
  for (std::size_t r = 0; r < cost.rows(); ++r) {
    const double* row = cost.row(r).data();
    double mx = -std::numeric_limits<double>::infinity();
#pragma omp simd reduction(max : mx)
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = p[j] - row[j];
      buf[j] = v;
      mx = v > mx ? v : mx;
    }
    const double threshold = mx - kLogSumCutoff * eps;
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j)
      if (buf[j] > threshold) s += std::exp((buf[j] - mx) * inv_eps);
    const double fresh = eps * log_weight - (mx + eps * std::log(s));
    out[r] = omega == 1.0 ? fresh : (1.0 - omega) * out[r] + omega * fresh;
  }
}

// Geometric eps schedule (ratio 0.7) from the largest cost down to the
// target; the final sweep always runs at the target.
inline constexpr double kScheduleRatio = 0.7;

inline double scheduled_eps(double target, double start, std::size_t it, std::size_t iterations) {
  if (it + 1 == iterations) return target;
  return std::max(target, start * std::pow(kScheduleRatio, static_cast<double>(std::min<std::size_t>(it, 4000))));
}

}  // namespace detail

/// Exactly `iterations` log-domain Sinkhorn sweeps (row then column update) on
/// uniform marginals. Sweeps anneal eps down from the cost diameter and are
/// over-relaxed once the target eps is reached; the last sweep is a plain
/// update, so column marginals hold to rounding and row marginals carry the
/// reported residual.
inline TransportPlan sinkhorn_plan(const Matrix& cost, double eps, std::size_t iterations) {
  require(eps > 0.0 && std::isfinite(eps), ErrorKind::InvalidArgument, "sinkhorn: eps must be > 0");
  require(iterations >= 1, ErrorKind::InvalidArgument, "sinkhorn: iteration count must be >= 1");
  const std::size_t n = cost.rows();
  const std::size_t m = cost.cols();
  require(n >= 1 && m >= 1, ErrorKind::InvalidArgument, "sinkhorn: empty cost matrix");
  double max_cost = 0.0;
  for (double c : cost.entries()) {
    require(c >= 0.0 && std::isfinite(c), ErrorKind::InvalidArgument, "sinkhorn: cost entries must be finite and >= 0");
    max_cost = std::max(max_cost, c);
  }

  const Matrix cost_t = cost.transpose();
  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  const double start = std::max(eps, max_cost);
  Vector f(n, 0.0);
  Vector g(m, 0.0);
  Vector scratch(std::max(n, m));
  double previous_eps = start * 2.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    const double e = detail::scheduled_eps(eps, start, it, iterations);
    const bool relax = e == eps && previous_eps == eps && it + 1 < iterations;
    const double omega = relax ? detail::kRelaxation : 1.0;
    detail::softmin_update(cost, g, e, log_a, omega, f, scratch);
    detail::softmin_update(cost_t, f, e, log_b, omega, g, scratch);
    previous_eps = e;
  }
  for (double x : f) require(std::isfinite(x), ErrorKind::NumericOverflow, "sinkhorn: non-finite row potential");
  for (double x : g) require(std::isfinite(x), ErrorKind::NumericOverflow, "sinkhorn: non-finite column potential");

  TransportPlan plan{Matrix(n, m), eps, iterations, 0.0};
  Vector col_sums(m, 0.0);
  const double inv_eps = 1.0 / eps;
  const double a = 1.0 / static_cast<double>(n);
  const double b = 1.0 / static_cast<double>(m);
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto crow = cost.row(i);
    auto prow = plan.coupling.row(i);
    double row_sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double x = (f[i] + g[j] - crow[j]) * inv_eps;
      if (x < -745.0) continue;
      const double p = std::exp(x);
      prow[j] = p;
      row_sum += p;
      col_sums[j] += p;
    }
    err = std::max(err, std::abs(row_sum - a));
  }
  for (double s : col_sums) err = std::max(err, std::abs(s - b));
  require(std::isfinite(err), ErrorKind::NumericOverflow, "sinkhorn: non-finite coupling");
  plan.marginal_error = err;
  return plan;
}

/// Σ_ij P_ij·C_ij, without the entropy term.
inline double transport_cost(const TransportPlan& plan, const Matrix& cost) {
  require(plan.coupling.rows() == cost.rows() && plan.coupling.cols() == cost.cols(), ErrorKind::DimMismatch,
          "transport_cost: plan/cost shape mismatch");
  double s = 0.0;
  const auto& p = plan.coupling.entries();
  const auto& c = cost.entries();
  for (std::size_t k = 0; k < p.size(); ++k) s += p[k] * c[k];
  return s;
}

struct SinkhornSummary {
  double cost = 0.0;
  double marginal_error = 0.0;
  std::size_t iterations_run = 0;
};

inline SinkhornSummary sinkhorn_between(const ParticleCloud& x, const ParticleCloud& y, double eps, std::size_t iterations) {
  const Matrix c = cost_matrix(x, y);
  const TransportPlan plan = sinkhorn_plan(c, eps, iterations);
  return {transport_cost(plan, c), plan.marginal_error, plan.iterations_run};
}

}  // namespace plt
