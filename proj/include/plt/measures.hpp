#pragma once

// Probability measures on latent space: Gaussians, mixtures and particle clouds.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "plt/numkit.hpp"

namespace plt {

enum class DomainTag { Source, Target, Transported };

inline std::string_view to_string(DomainTag tag) {
  switch (tag) {
    case DomainTag::Source: return "source";
    case DomainTag::Target: return "target";
    case DomainTag::Transported: return "transported";
  }
  return "source";
}

inline DomainTag parse_domain_tag(std::string_view s) {
  if (s == "source") return DomainTag::Source;
  if (s == "target") return DomainTag::Target;
  if (s == "transported") return DomainTag::Transported;
  fail(ErrorKind::Parse, "unknown domain tag '" + std::string(s) + "'");
}

/// n points of equal dimension, stored row-major.
class ParticleCloud {
 public:
  ParticleCloud(std::size_t dim, std::vector<double> coords, DomainTag tag = DomainTag::Source)
      : dim_(dim), coords_(std::move(coords)), tag_(tag) {
    require(dim_ >= 1, ErrorKind::InvalidArgument, "cloud dimension must be >= 1");
    require(!coords_.empty() && coords_.size() % dim_ == 0, ErrorKind::DimMismatch,
            "cloud coordinate count must be a positive multiple of dim");
    for (double x : coords_) require(std::isfinite(x), ErrorKind::InvalidArgument, "non-finite cloud coordinate");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return coords_.size() / dim_; }
  DomainTag tag() const noexcept { return tag_; }
  void set_tag(DomainTag tag) noexcept { tag_ = tag; }

  std::span<const double> point(std::size_t i) const noexcept { return {coords_.data() + i * dim_, dim_}; }
  const std::vector<double>& coords() const noexcept { return coords_; }

  /// Points [first, first + count).
  ParticleCloud slice(std::size_t first, std::size_t count) const {
    require(first + count <= size() && count > 0, ErrorKind::InvalidArgument, "cloud slice out of range");
    return ParticleCloud(dim_, std::vector<double>(coords_.begin() + first * dim_, coords_.begin() + (first + count) * dim_), tag_);
  }

  friend bool operator==(const ParticleCloud&, const ParticleCloud&) = default;

 private:
  std::size_t dim_;
  std::vector<double> coords_;
  DomainTag tag_;
};

struct GaussianMeasure {
  Vector mean;
  Matrix covariance;

  GaussianMeasure(Vector m, Matrix cov) : mean(std::move(m)), covariance(std::move(cov)) {
    require(covariance.rows() == mean.size() && covariance.cols() == mean.size(), ErrorKind::DimMismatch,
            "gaussian mean/covariance dimension mismatch");
    require(is_symmetric(covariance), ErrorKind::Asymmetric, "gaussian covariance is not symmetric");
  }

  static GaussianMeasure standard(std::size_t d) { return {Vector(d, 0.0), Matrix::identity(d)}; }

  std::size_t dim() const noexcept { return mean.size(); }

  friend bool operator==(const GaussianMeasure&, const GaussianMeasure&) = default;
};

struct MixtureComponent {
  double weight;
  GaussianMeasure gaussian;
};

struct MixtureMeasure {
  std::vector<MixtureComponent> components;

  explicit MixtureMeasure(std::vector<MixtureComponent> comps) : components(std::move(comps)) {
    require(!components.empty(), ErrorKind::InvalidArgument, "mixture needs at least one component");
    double total = 0.0;
    for (const auto& c : components) {
      require(c.weight > 0.0, ErrorKind::InvalidArgument, "mixture weights must be positive");
      require(c.gaussian.dim() == components.front().gaussian.dim(), ErrorKind::DimMismatch,
              "mixture component dimensions differ");
      total += c.weight;
    }
    require(std::abs(total - 1.0) <= 1e-12, ErrorKind::InvalidArgument, "mixture weights must sum to 1");
  }

  std::size_t dim() const noexcept { return components.front().gaussian.dim(); }
};

using Measure = std::variant<GaussianMeasure, MixtureMeasure>;

inline std::size_t dim_of(const Measure& m) {
  return std::visit([](const auto& x) { return x.dim(); }, m);
}

namespace detail {

inline void append_gaussian_draw(const GaussianMeasure& g, const Matrix& chol, RngStream& rng, std::vector<double>& out) {
  const std::size_t d = g.dim();
  Vector eps(d);
  for (double& e : eps) e = rng.normal();
  for (std::size_t i = 0; i < d; ++i) {
    double s = g.mean[i];
    for (std::size_t k = 0; k <= i; ++k) s += chol(i, k) * eps[k];
    out.push_back(s);
  }
}

}  // namespace detail

/// n draws; Gaussian draws are μ + L·ε with L = cholesky(Σ).
inline ParticleCloud sample(const GaussianMeasure& g, std::size_t n, RngStream& rng, DomainTag tag = DomainTag::Source) {
  require(n >= 1, ErrorKind::InvalidArgument, "sample size must be >= 1");
  const Matrix chol = cholesky(g.covariance);
  std::vector<double> coords;
  coords.reserve(n * g.dim());
  for (std::size_t i = 0; i < n; ++i) detail::append_gaussian_draw(g, chol, rng, coords);
  return ParticleCloud(g.dim(), std::move(coords), tag);
}

inline ParticleCloud sample(const MixtureMeasure& mix, std::size_t n, RngStream& rng, DomainTag tag = DomainTag::Source) {
  require(n >= 1, ErrorKind::InvalidArgument, "sample size must be >= 1");
  std::vector<Matrix> chols;
  for (const auto& c : mix.components) chols.push_back(cholesky(c.gaussian.covariance));
  std::vector<double> coords;
  coords.reserve(n * mix.dim());
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    std::size_t k = 0;
    double acc = mix.components[0].weight;
    while (u >= acc && k + 1 < mix.components.size()) acc += mix.components[++k].weight;
    detail::append_gaussian_draw(mix.components[k].gaussian, chols[k], rng, coords);
  }
  return ParticleCloud(mix.dim(), std::move(coords), tag);
}

inline ParticleCloud sample(const Measure& m, std::size_t n, RngStream& rng, DomainTag tag = DomainTag::Source) {
  return std::visit([&](const auto& x) { return sample(x, n, rng, tag); }, m);
}

/// Sample mean and population (1/n) covariance plus ridge·I.
inline GaussianMeasure gaussian_fit(const ParticleCloud& cloud, double ridge) {
  require(ridge >= 0.0, ErrorKind::InvalidArgument, "ridge must be nonnegative");
  const std::size_t d = cloud.dim();
  const std::size_t n = cloud.size();
  Vector mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = cloud.point(i);
    for (std::size_t k = 0; k < d; ++k) mean[k] += p[k];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  Matrix cov(d, d);
  Vector centered(d);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = cloud.point(i);
    for (std::size_t k = 0; k < d; ++k) centered[k] = p[k] - mean[k];
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) cov(a, b) += centered[a] * centered[b];
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      cov(a, b) /= static_cast<double>(n);
      cov(b, a) = cov(a, b);
    }
    cov(a, a) += ridge;
  }
  return {std::move(mean), std::move(cov)};
}

/// Gaussian fit with the default ridge 1e-6·mean-diagonal.
inline GaussianMeasure gaussian_fit(const ParticleCloud& cloud) {
  GaussianMeasure raw = gaussian_fit(cloud, 0.0);
  const double ridge = default_ridge(raw.covariance);
  for (std::size_t k = 0; k < raw.dim(); ++k) raw.covariance(k, k) += ridge;
  return raw;
}

inline double gaussian_logpdf(const GaussianMeasure& g, std::span<const double> z) {
  require(z.size() == g.dim(), ErrorKind::DimMismatch, "logpdf dimension mismatch");
  const SpdFactor f(g.covariance);
  const Vector w = f.forward(subtract(z, g.mean));
  const double d = static_cast<double>(g.dim());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + f.log_det() + squared_norm(w));
}

/// ∇ log p(z) = −Σ⁻¹(z − μ).
inline Vector gaussian_score(const GaussianMeasure& g, std::span<const double> z) {
  require(z.size() == g.dim(), ErrorKind::DimMismatch, "score dimension mismatch");
  Vector s = SpdFactor(g.covariance).solve(subtract(z, g.mean));
  for (double& x : s) x = -x;
  return s;
}

/// KL(g0 ‖ g1) in closed form.
inline double gaussian_kl(const GaussianMeasure& g0, const GaussianMeasure& g1) {
  require(g0.dim() == g1.dim(), ErrorKind::DimMismatch, "kl dimension mismatch");
  if (g0 == g1) {
    SpdFactor check(g1.covariance);
    return 0.0;
  }
  const std::size_t d = g0.dim();
  const SpdFactor f1(g1.covariance);
  const SpdFactor f0(g0.covariance);
  const Matrix p1 = f1.inverse();
  double tr = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) tr += p1(i, j) * g0.covariance(j, i);
  const Vector dm = subtract(g1.mean, g0.mean);
  const double maha = dot(dm, f1.solve(dm));
  const double kl = 0.5 * (tr + maha - static_cast<double>(d) + f1.log_det() - f0.log_det());
  return std::max(kl, 0.0);
}

/// Closed-form 2-Wasserstein distance between Gaussians.
inline double bures_w2(const GaussianMeasure& g0, const GaussianMeasure& g1) {
  require(g0.dim() == g1.dim(), ErrorKind::DimMismatch, "bures dimension mismatch");
  const Matrix s1 = psd_sqrt(g1.covariance);
  const Matrix cross = psd_sqrt(symmetrized(s1 * g0.covariance * s1));
  const double cov_term = g0.covariance.trace() + g1.covariance.trace() - 2.0 * cross.trace();
  const double mean_term = squared_norm(subtract(g0.mean, g1.mean));
  return std::sqrt(std::max(mean_term + cov_term, 0.0));
}

// ---------------------------------------------------------------------------
// CSV: header `dim=<d>,tag=<tag>`, then one row per point, 17 significant digits.

inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_cloud_csv(std::ostream& os, const ParticleCloud& cloud) {
  os << "dim=" << cloud.dim() << ",tag=" << to_string(cloud.tag()) << "\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto p = cloud.point(i);
    for (std::size_t k = 0; k < p.size(); ++k) os << (k ? "," : "") << format_real(p[k]);
    os << "\n";
  }
}

inline double parse_real(std::string_view text, std::size_t line) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value))
    fail(ErrorKind::Parse, "line " + std::to_string(line) + ": bad number '" + std::string(text) + "'");
  return value;
}

inline ParticleCloud read_cloud_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line)) fail(ErrorKind::Parse, "line 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::size_t dim = 0;
  DomainTag tag = DomainTag::Source;
  {
    const auto comma = line.find(',');
    if (line.rfind("dim=", 0) != 0 || comma == std::string::npos || line.compare(comma + 1, 4, "tag=") != 0)
      fail(ErrorKind::Parse, "line 1: expected header 'dim=<d>,tag=<tag>'");
    const std::string dim_text = line.substr(4, comma - 4);
    const auto [ptr, ec] = std::from_chars(dim_text.data(), dim_text.data() + dim_text.size(), dim);
    if (ec != std::errc() || ptr != dim_text.data() + dim_text.size() || dim == 0)
      fail(ErrorKind::Parse, "line 1: bad dim '" + dim_text + "'");
    try {
      tag = parse_domain_tag(line.substr(comma + 5));
    } catch (const Error& e) {
      fail(ErrorKind::Parse, std::string("line 1: ") + e.what());
    }
  }
  std::vector<double> coords;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t fields = 0;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      coords.push_back(parse_real(rest.substr(0, comma), lineno));
      ++fields;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields != dim)
      fail(ErrorKind::Parse, "line " + std::to_string(lineno) + ": expected " + std::to_string(dim) + " fields, got " +
                                 std::to_string(fields));
  }
  if (coords.empty()) fail(ErrorKind::Parse, "line " + std::to_string(lineno) + ": cloud has no points");
  return ParticleCloud(dim, std::move(coords), tag);
}

}  // namespace plt
