#pragma once

// Entropic-regularization baseline: Sinkhorn transport plans and a
// free-support fixed-point barycenter driven by them.  Objectives reported to
// callers are always re-evaluated with the exact oracle so the baseline and
// the dual solver are scored by the same functional; regularized values never
// leave this header except as diagnostics.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fedbary/error.hpp"
#include "fedbary/measures.hpp"
#include "fedbary/rng.hpp"
#include "fedbary/transport.hpp"

namespace fedbary {

struct SinkhornConfig {
  double reg = 0.1;
  double tol = 1e-9;  // marginal violation accepted as converged
  int maxiter = 1000;
  bool log_domain = true;

  void validate() const {
    if (!(reg > 0.0)) throw ValidationError("sinkhorn reg must be positive");
    if (!(tol > 0.0)) throw ValidationError("sinkhorn tol must be positive");
    if (maxiter < 1) throw ValidationError("sinkhorn maxiter must be >= 1");
  }
};

struct SinkhornResult {
  Matrix plan;
  double value = 0.0;  // unregularized <cost, plan>
  int iterations = 0;
  bool converged = false;
  double marginal_error = 0.0;
};

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  return v[mid];
}

// log sum_i exp(x_i) with terms more than 40 nats under the max skipped;
// such terms are < 5e-18 relative and below double resolution of the sum.
inline double logsumexp(const double* x, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, x[i]);
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - mx;
    if (d >= -40.0) acc += std::exp(d);
  }
  return mx + std::log(acc);
}

}  // namespace detail

// Entropic OT between measures a (rows) and b (cols).  Log-domain updates by
// default; log-domain is forced when reg < 0.1 * median(cost), where plain
// scaling under/overflows.  `warm_f`/`warm_g` carry dual potentials across
// calls (pass empty vectors for a cold start); on return they hold the final
// potentials.
inline SinkhornResult sinkhorn(const Matrix& cost, const std::vector<double>& a,
                               const std::vector<double>& b,
                               const SinkhornConfig& cfg,
                               std::vector<double>* warm_f = nullptr,
                               std::vector<double>* warm_g = nullptr) {
  cfg.validate();
  const std::size_t n = a.size(), m = b.size();
  if (cost.rows != n || cost.cols != m)
    throw ValidationError("cost matrix shape does not match the marginals");
  for (double v : a)
    if (!(v > 0.0) || !std::isfinite(v))
      throw ValidationError("sinkhorn marginals must be strictly positive");
  for (double v : b)
    if (!(v > 0.0) || !std::isfinite(v))
      throw ValidationError("sinkhorn marginals must be strictly positive");
  for (double v : cost.data)
    if (!std::isfinite(v)) throw ValidationError("non-finite cost entry");

  const double reg = cfg.reg;
  const bool force_log = reg < 0.1 * detail::median_of(cost.data);
  const bool log_domain = cfg.log_domain || force_log;

  SinkhornResult out;

  if (!log_domain) {
    // Plain scaling iterations; kept for the small-problem fast path and for
    // the overflow diagnostic.
    Matrix kern(n, m);
    for (std::size_t i = 0; i < n * m; ++i)
      kern.data[i] = std::exp(-cost.data[i] / reg);
    std::vector<double> u(n, 1.0), v(m, 1.0);
    double err = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < cfg.maxiter; ++it) {
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += kern(i, j) * u[i];
        v[j] = b[j] / s;
      }
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        const double* kr = kern.row(i);
        for (std::size_t j = 0; j < m; ++j) s += kr[j] * v[j];
        u[i] = a[i] / s;
      }
      for (double x : u)
        if (!std::isfinite(x))
          throw SolverError(
              "numeric overflow in scaling-mode sinkhorn; use log_domain");
      for (double x : v)
        if (!std::isfinite(x))
          throw SolverError(
              "numeric overflow in scaling-mode sinkhorn; use log_domain");
      err = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += kern(i, j) * u[i];
        err = std::max(err, std::abs(s * v[j] - b[j]));
      }
      if (err <= cfg.tol) {
        ++it;
        out.converged = true;
        break;
      }
    }
    out.iterations = it;
    out.marginal_error = err;
    out.plan = Matrix(n, m);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double p = u[i] * kern(i, j) * v[j];
        out.plan(i, j) = p;
        acc += cost(i, j) * p;
      }
    out.value = acc;
    return out;
  }

  std::vector<double> f(n, 0.0), g(m, 0.0);
  if (warm_f && warm_f->size() == n) f = *warm_f;
  if (warm_g && warm_g->size() == m) g = *warm_g;
  std::vector<double> scratch(std::max(n, m));
  std::vector<double> log_a(n), log_b(m);
  for (std::size_t i = 0; i < n; ++i) log_a[i] = std::log(a[i]);
  for (std::size_t j = 0; j < m; ++j) log_b[j] = std::log(b[j]);

  double err = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < cfg.maxiter; ++it) {
    // g half-step; the gap between the old and new g doubles as a free
    // column-marginal error estimate: colsum_j = b_j * exp((g_j - g_new_j)/reg).
    err = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i)
        scratch[i] = (f[i] - cost(i, j)) / reg;
      const double gn = reg * (log_b[j] - detail::logsumexp(scratch.data(), n));
      if (it > 0)
        err = std::max(err, std::abs(b[j] * (std::exp((g[j] - gn) / reg) - 1.0)));
      g[j] = gn;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double* cr = cost.row(i);
      for (std::size_t j = 0; j < m; ++j) scratch[j] = (g[j] - cr[j]) / reg;
      f[i] = reg * (log_a[i] - detail::logsumexp(scratch.data(), m));
    }
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(f[i])) throw SolverError("non-finite sinkhorn potential");
    if (it > 0 && err <= cfg.tol) {
      ++it;
      out.converged = true;
      break;
    }
  }
  out.iterations = it;
  out.marginal_error = err;

  // Plan entries more than 40 nats below their row peak are written as exact
  // zeros; everything they could contribute is below one ulp of the row sum.
  out.plan = Matrix(n, m);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* cr = cost.row(i);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j)
      peak = std::max(peak, (f[i] + g[j] - cr[j]) / reg);
    for (std::size_t j = 0; j < m; ++j) {
      const double e = (f[i] + g[j] - cr[j]) / reg;
      if (e - peak >= -40.0) {
        const double p = std::exp(e);
        out.plan(i, j) = p;
        acc += cr[j] * p;
      }
    }
  }
  out.value = acc;
  if (warm_f) *warm_f = f;
  if (warm_g) *warm_g = g;
  return out;
}

struct FreeSupportConfig {
  SinkhornConfig sinkhorn;
  double tol = 1e-4;  // relative support movement treated as converged
  int maxiter = 1000;
  std::uint64_t seed = 0;  // used only to re-seed zero-mass support points
};

struct BaselineResult {
  std::vector<Point> support;
  double objective = 0.0;  // exact-oracle value of the final support
  int iterations = 0;
  bool converged = false;
  double total_ms = 0.0;
  double per_iter_ms = 0.0;
  // Per-sweep diagnostics, aligned: unregularized plan cost and relative
  // support movement.
  std::vector<double> sweep_value;
  std::vector<double> sweep_move;
  std::vector<double> sweep_ms;
};

// Fixed-point iteration: Sinkhorn plans from every client cloud to the
// uniform measure on the current support, then each support point moves to
// the weight-combined barycentric projection of the particles assigned to it.
// A support point receiving no mass from some client is re-seeded to a random
// particle of that client.
inline BaselineResult free_support_barycenter(const ProblemInstance& inst,
                                              std::vector<Point> init,
                                              const FreeSupportConfig& cfg) {
  if (init.empty() || static_cast<int>(init.size()) != inst.support_size)
    throw ValidationError("baseline init support must have M points");
  for (const Point& p : init)
    if (p.size() != inst.dim())
      throw ValidationError("baseline init support dimension mismatch");
  cfg.sinkhorn.validate();
  if (cfg.maxiter < 1) throw ValidationError("baseline maxiter must be >= 1");
  if (!(cfg.tol > 0.0)) throw ValidationError("baseline tol must be positive");

  const std::size_t N = inst.n_clients();
  const std::size_t M = init.size();
  const std::size_t dim = inst.dim();
  const std::vector<double> bw(M, 1.0 / static_cast<double>(M));

  std::vector<std::vector<double>> warm_f(N), warm_g(N);
  Rng reseed_rng(child_seed(cfg.seed, 0));

  BaselineResult out;
  out.support = std::move(init);
  const auto t0 = std::chrono::steady_clock::now();

  int it = 0;
  for (; it < cfg.maxiter; ++it) {
    const auto s0 = std::chrono::steady_clock::now();
    double sweep_value = 0.0;

    // Per client: normalized barycentric projection of its particles onto
    // every support point.  Columns are normalized before accumulation, so a
    // column fed by a single particle reproduces that particle exactly.
    std::vector<std::vector<Point>> proj(N, std::vector<Point>(M, Point(dim, 0.0)));
    std::vector<std::vector<char>> starved(N, std::vector<char>(M, 0));
    for (std::size_t s = 0; s < N; ++s) {
      const ParticleCloud& cloud = inst.clients[s].cloud;
      const Matrix cost = pairwise_cost(cloud.points, out.support, inst.order);
      const std::vector<double> aw(cloud.size(),
                                   1.0 / static_cast<double>(cloud.size()));
      const SinkhornResult sr =
          sinkhorn(cost, aw, bw, cfg.sinkhorn, &warm_f[s], &warm_g[s]);
      sweep_value += inst.clients[s].weight * sr.value;
      std::vector<double> mass(M, 0.0);
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double* pr = sr.plan.row(i);
        for (std::size_t j = 0; j < M; ++j) mass[j] += pr[j];
      }
      for (std::size_t j = 0; j < M; ++j)
        if (mass[j] <= 1e-12 / static_cast<double>(M)) starved[s][j] = 1;
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double* pr = sr.plan.row(i);
        for (std::size_t j = 0; j < M; ++j) {
          if (pr[j] == 0.0 || starved[s][j]) continue;
          const double q = pr[j] / mass[j];
          for (std::size_t d = 0; d < dim; ++d)
            proj[s][j][d] += q * cloud.points[i][d];
        }
      }
    }

    bool reseeded = false;
    std::vector<Point> next(M, Point(dim, 0.0));
    for (std::size_t j = 0; j < M; ++j) {
      std::size_t starved_by = N;
      for (std::size_t s = 0; s < N; ++s)
        if (starved[s][j]) {
          starved_by = s;
          break;
        }
      if (starved_by < N) {
        const ParticleCloud& cloud = inst.clients[starved_by].cloud;
        next[j] = cloud.points[static_cast<std::size_t>(
            reseed_rng.below(static_cast<int>(cloud.size())))];
        reseeded = true;
        continue;
      }
      for (std::size_t s = 0; s < N; ++s)
        for (std::size_t d = 0; d < dim; ++d)
          next[j][d] += inst.clients[s].weight * proj[s][j][d];
    }

    double move2 = 0.0, norm2 = 0.0;
    for (std::size_t j = 0; j < M; ++j)
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = next[j][d] - out.support[j][d];
        move2 += diff * diff;
        norm2 += out.support[j][d] * out.support[j][d];
      }
    const double rel =
        std::sqrt(move2) / std::max(std::sqrt(norm2), 1e-30);
    out.support = std::move(next);
    out.sweep_value.push_back(sweep_value);
    out.sweep_move.push_back(rel);
    out.sweep_ms.push_back(std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - s0)
                               .count());
    if (!reseeded && rel < cfg.tol) {
      ++it;
      out.converged = true;
      break;
    }
  }

  out.iterations = it;
  out.total_ms = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
  out.per_iter_ms = out.total_ms / std::max(1, out.iterations);
  out.objective = objective_at_points(inst, out.support);
  return out;
}

}  // namespace fedbary
