#pragma once

// Synthetic instance generation: Gaussian-mixture clients, candidate sets,
// and the fixed five-component benchmark preset.  Everything here is a pure
// function of (spec, seed); the RNG contract lives in rng.hpp and its version
// tag is written into generated files.
//
// Seed streams (child_seed tags): client s cloud -> tag s; candidate
// generation -> tag 63.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fedbary/error.hpp"
#include "fedbary/measures.hpp"
#include "fedbary/rng.hpp"

namespace fedbary {

inline constexpr std::uint64_t kCandidateSeedTag = 63;

struct GmmComponent {
  double weight = 0.0;
  Point mean;
  std::vector<std::vector<double>> cov;
};

struct GmmSpec {
  std::vector<GmmComponent> components;
  std::size_t dim = 0;
};

namespace detail {

// Lower-triangular Cholesky factor; throws if the matrix is not symmetric
// positive definite.
inline std::vector<std::vector<double>> cholesky(
    const std::vector<std::vector<double>>& a) {
  const std::size_t n = a.size();
  for (const auto& row : a)
    if (row.size() != n)
      throw ValidationError("covariance matrix is not square");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(a[i][j] - a[j][i]) > 1e-12)
        throw ValidationError("covariance matrix is not symmetric");
  std::vector<std::vector<double>> l(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      if (i == j) {
        if (!(s > 0.0))
          throw ValidationError("covariance matrix is not positive definite");
        l[i][j] = std::sqrt(s);
      } else {
        l[i][j] = s / l[j][j];
      }
    }
  }
  return l;
}

}  // namespace detail

inline void validate_gmm(const GmmSpec& spec) {
  if (spec.components.empty())
    throw ValidationError("mixture needs at least one component");
  if (spec.dim == 0) throw ValidationError("mixture dimension must be >= 1");
  double wsum = 0.0;
  for (const GmmComponent& c : spec.components) {
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight))
      throw ValidationError("mixture weight must be non-negative");
    wsum += c.weight;
    if (c.mean.size() != spec.dim)
      throw ValidationError("mixture mean dimension mismatch");
    if (c.cov.size() != spec.dim)
      throw ValidationError("mixture covariance dimension mismatch");
    detail::cholesky(c.cov);
  }
  if (std::abs(wsum - 1.0) > 1e-9)
    throw ValidationError("mixture weights must sum to 1");
}

// n i.i.d. mixture draws.  Per sample: one uniform for the component choice,
// then dim normal deviates pushed through the component's Cholesky factor.
inline ParticleCloud sample_gmm(const GmmSpec& spec, std::size_t n,
                                std::uint64_t seed) {
  validate_gmm(spec);
  if (n < 1) throw ValidationError("sample count must be >= 1");
  std::vector<std::vector<std::vector<double>>> chol;
  chol.reserve(spec.components.size());
  for (const GmmComponent& c : spec.components)
    chol.push_back(detail::cholesky(c.cov));

  Rng rng(seed);
  std::vector<Point> pts;
  pts.reserve(n);
  std::vector<double> z(spec.dim);
  for (std::size_t t = 0; t < n; ++t) {
    const double u = rng.uniform();
    std::size_t comp = spec.components.size() - 1;
    double cum = 0.0;
    for (std::size_t c = 0; c < spec.components.size(); ++c) {
      cum += spec.components[c].weight;
      if (u < cum) {
        comp = c;
        break;
      }
    }
    for (std::size_t d = 0; d < spec.dim; ++d) z[d] = rng.normal();
    Point x = spec.components[comp].mean;
    const auto& l = chol[comp];
    for (std::size_t d = 0; d < spec.dim; ++d)
      for (std::size_t k = 0; k <= d; ++k) x[d] += l[d][k] * z[k];
    pts.push_back(std::move(x));
  }
  return make_cloud(std::move(pts));
}

enum class CandidateMode { grid, normal, pooled };

inline CandidateMode parse_candidate_mode(const std::string& s) {
  if (s == "grid") return CandidateMode::grid;
  if (s == "normal") return CandidateMode::normal;
  if (s == "pooled") return CandidateMode::pooled;
  throw ValidationError("unknown candidate mode: " + s);
}

// grid: regular lattice, ceil(K^(1/dim)) ticks per axis spanning
// [-scale, scale] inclusive, truncated to the first K points in row-major
// order.  normal: K i.i.d. draws from a centered isotropic normal with
// variance `scale` per coordinate.
inline CandidateSet make_candidates(CandidateMode mode, std::size_t K,
                                    std::size_t dim, double scale,
                                    std::uint64_t seed) {
  if (K < 1) throw ValidationError("candidate count must be >= 1");
  if (dim < 1) throw ValidationError("candidate dimension must be >= 1");
  std::vector<Point> pts;
  pts.reserve(K);
  if (mode == CandidateMode::grid) {
    std::size_t ticks = static_cast<std::size_t>(std::ceil(
        std::pow(static_cast<double>(K), 1.0 / static_cast<double>(dim)) -
        1e-9));
    if (ticks < 1) ticks = 1;
    auto lattice_size = [&](std::size_t t) {
      std::size_t total = 1;
      for (std::size_t d = 0; d < dim; ++d) {
        if (total > K) break;
        total *= t;
      }
      return total;
    };
    while (lattice_size(ticks) < K) ++ticks;
    std::vector<double> axis(ticks);
    for (std::size_t t = 0; t < ticks; ++t)
      axis[t] = (ticks == 1)
                    ? 0.0
                    : -scale + static_cast<double>(t) * (2.0 * scale) /
                                   static_cast<double>(ticks - 1);
    // First K lattice points in row-major order (last axis fastest).
    for (std::size_t t = 0; t < K; ++t) {
      Point p(dim);
      std::size_t rem = t;
      for (std::size_t d = dim; d > 0; --d) {
        p[d - 1] = axis[rem % ticks];
        rem /= ticks;
      }
      pts.push_back(std::move(p));
    }
  } else if (mode == CandidateMode::normal) {
    Rng rng(seed);
    const double sd = std::sqrt(scale);
    for (std::size_t t = 0; t < K; ++t) {
      Point p(dim);
      for (std::size_t d = 0; d < dim; ++d) p[d] = sd * rng.normal();
      pts.push_back(std::move(p));
    }
  } else {
    throw ValidationError(
        "pooled candidates need client clouds; use make_candidates_pooled");
  }
  return make_candidate_set(std::move(pts));
}

// Test-only candidate source: K particles drawn uniformly without replacement
// from the union of the client clouds.  This hands client data to whoever
// builds the candidate set, so it is unusable under the privacy model and
// exists for benchmarks and tests.
inline CandidateSet make_candidates_pooled(
    const std::vector<ParticleCloud>& clouds, std::size_t K,
    std::uint64_t seed) {
  std::vector<Point> pool;
  for (const ParticleCloud& c : clouds)
    pool.insert(pool.end(), c.points.begin(), c.points.end());
  if (K < 1) throw ValidationError("candidate count must be >= 1");
  if (K > pool.size())
    throw ValidationError("pooled candidates: K exceeds the particle total");
  Rng rng(seed);
  const std::vector<int> pick =
      rng.sample_indices(static_cast<int>(pool.size()), static_cast<int>(K));
  std::vector<Point> pts;
  pts.reserve(K);
  for (int i : pick) pts.push_back(pool[static_cast<std::size_t>(i)]);
  return make_candidate_set(std::move(pts));
}

// The five fixed benchmark components: the four corners of the square of
// half-width 2 plus the origin, all sharing covariance [[0.5,-0.2],[-0.2,0.5]].
inline std::vector<GmmComponent> benchmark_components() {
  const std::vector<std::vector<double>> cov{{0.5, -0.2}, {-0.2, 0.5}};
  std::vector<GmmComponent> comps;
  const std::vector<Point> means{
      {-2.0, -2.0}, {2.0, 2.0}, {2.0, -2.0}, {-2.0, 2.0}, {0.0, 0.0}};
  for (const Point& mu : means)
    comps.push_back(GmmComponent{0.2, mu, cov});
  return comps;
}

// Benchmark preset: five clients, one per component; client s samples n
// particles from component s with seed stream child_seed(seed, s).  With
// `mixture_clients` every client instead samples the full weighted mixture.
inline ProblemInstance benchmark_preset(const std::vector<double>& weights,
                                        std::size_t n, std::uint64_t seed,
                                        CandidateSet candidates, int M,
                                        bool mixture_clients = false) {
  if (weights.size() != 5)
    throw ValidationError("benchmark preset needs exactly 5 client weights");
  const std::vector<GmmComponent> comps = benchmark_components();
  ProblemInstance inst;
  inst.candidates = std::move(candidates);
  inst.support_size = M;
  inst.order = 2.0;
  for (std::size_t s = 0; s < 5; ++s) {
    GmmSpec spec;
    spec.dim = 2;
    if (mixture_clients) {
      spec.components = comps;
      for (std::size_t c = 0; c < 5; ++c)
        spec.components[c].weight = weights[c];
    } else {
      GmmComponent one = comps[s];
      one.weight = 1.0;
      spec.components = {one};
    }
    Client cl;
    cl.weight = weights[s];
    cl.cloud = sample_gmm(spec, n, child_seed(seed, s));
    inst.clients.push_back(std::move(cl));
  }
  return validate_instance(std::move(inst));
}

}  // namespace fedbary
