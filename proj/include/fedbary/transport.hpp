#pragma once

// Exact discrete transport oracle.
//
// Strategy: both marginals are converted to integer unit masses over a common
// denominator (smallest-denominator rational reconstruction per weight,
// largest-remainder apportionment as the fallback), then the transportation
// problem is solved as an integer min-cost flow by successive shortest paths
// with node potentials.  Flows are integers throughout, so returned plans
// satisfy their marginals exactly up to the single final division by the
// common denominator.  The only tolerances live at the boundary: input
// weights must sum to 1 within 1e-9, and rational reconstruction accepts a
// denominator only if it reproduces the weight within 1e-11.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "fedbary/error.hpp"
#include "fedbary/measures.hpp"

namespace fedbary {

inline constexpr std::int64_t kMaxDenominator = 1000000;

struct TransportPlan {
  Matrix plan;   // n x m, entries are the transported mass
  double value;  // sum of cost * mass
};

namespace detail {

// Smallest q <= cap with |w - p/q| <= tol, via continued-fraction
// convergents.  Returns false if none exists.
inline bool smallest_denominator(double w, double tol, std::int64_t cap,
                                 std::int64_t& p_out, std::int64_t& q_out) {
  std::int64_t p2 = 0, p1 = 1;  // h_{k-2}, h_{k-1}
  std::int64_t q2 = 1, q1 = 0;  // k_{k-2}, k_{k-1}
  double x = w;
  for (int it = 0; it < 64; ++it) {
    const double fa = std::floor(x);
    if (fa > static_cast<double>(cap)) return false;
    const std::int64_t a = static_cast<std::int64_t>(fa);
    const std::int64_t p = a * p1 + p2;
    const std::int64_t q = a * q1 + q2;
    if (q > cap || q <= 0) return false;
    if (std::abs(w - static_cast<double>(p) / static_cast<double>(q)) <= tol) {
      p_out = p;
      q_out = q;
      return true;
    }
    const double frac = x - fa;
    if (frac < 1e-15) return false;
    x = 1.0 / frac;
    p2 = p1;
    p1 = p;
    q2 = q1;
    q1 = q;
  }
  return false;
}

// Adjusts `units` so it sums to `target`, spending the corrections on the
// entries whose real-valued residue `ideal - units` is most in favor.
// Deterministic: ties break on the lower index.
inline void correct_to_total(std::vector<std::int64_t>& units,
                             const std::vector<double>& ideal,
                             std::int64_t target) {
  std::int64_t total = std::accumulate(units.begin(), units.end(),
                                       static_cast<std::int64_t>(0));
  if (total == target) return;
  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), 0);
  if (total < target) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return ideal[a] - static_cast<double>(units[a]) >
                              ideal[b] - static_cast<double>(units[b]);
                     });
    std::size_t pos = 0;
    while (total < target) {
      ++units[order[pos % order.size()]];
      ++pos;
      ++total;
    }
  } else {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return ideal[a] - static_cast<double>(units[a]) <
                              ideal[b] - static_cast<double>(units[b]);
                     });
    std::size_t pos = 0;
    while (total > target && pos < 4 * order.size()) {
      std::size_t i = order[pos % order.size()];
      if (units[i] > 0) {
        --units[i];
        --total;
      }
      ++pos;
    }
    if (total != target)
      throw SolverError("marginal apportionment failed to balance");
  }
}

struct CommonUnits {
  std::int64_t denom;
  std::vector<std::int64_t> a, b;
};

// Integer unit masses for both marginals over one common denominator.  Both
// sides are forced to total exactly `denom` units.
inline CommonUnits rationalize_marginals(const std::vector<double>& wa,
                                         const std::vector<double>& wb) {
  std::int64_t lcm = 1;
  bool exact = true;
  auto feed = [&](const std::vector<double>& ws) {
    for (double w : ws) {
      std::int64_t p, q;
      if (!smallest_denominator(w, 1e-11, kMaxDenominator, p, q)) {
        exact = false;
        return;
      }
      const std::int64_t g = std::gcd(lcm, q);
      lcm = lcm / g * q;
      if (lcm > kMaxDenominator) {
        exact = false;
        return;
      }
    }
  };
  feed(wa);
  if (exact) feed(wb);

  CommonUnits out;
  out.denom = exact ? lcm : kMaxDenominator;
  auto to_units = [&](const std::vector<double>& ws) {
    std::vector<std::int64_t> u(ws.size());
    std::vector<double> ideal(ws.size());
    for (std::size_t i = 0; i < ws.size(); ++i) {
      ideal[i] = ws[i] * static_cast<double>(out.denom);
      u[i] = static_cast<std::int64_t>(std::llround(ideal[i]));
      if (u[i] < 0) u[i] = 0;
    }
    correct_to_total(u, ideal, out.denom);
    return u;
  };
  out.a = to_units(wa);
  out.b = to_units(wb);
  return out;
}

// Min-cost transportation with integer supplies/demands on a complete
// bipartite graph.  Successive shortest paths; reduced costs kept
// non-negative via node potentials; dense Dijkstra (graphs here are small).
inline std::vector<std::int64_t> min_cost_flow_units(
    const Matrix& cost, std::vector<std::int64_t> sup,
    std::vector<std::int64_t> dem) {
  const std::size_t n = sup.size(), m = dem.size(), V = n + m;
  std::vector<std::int64_t> flow(n * m, 0);
  std::int64_t remaining = std::accumulate(sup.begin(), sup.end(),
                                           static_cast<std::int64_t>(0));
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> phi(V, 0.0), dist(V);
  std::vector<int> parent(V);
  std::vector<char> settled(V);

  while (remaining > 0) {
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(settled.begin(), settled.end(), 0);
    for (std::size_t i = 0; i < n; ++i)
      if (sup[i] > 0) dist[i] = 0.0;

    std::size_t t = V;
    while (true) {
      std::size_t u = V;
      double du = inf;
      for (std::size_t v = 0; v < V; ++v)
        if (!settled[v] && dist[v] < du) {
          du = dist[v];
          u = v;
        }
      if (u == V) throw SolverError("transport network is disconnected");
      settled[u] = 1;
      if (u >= n && dem[u - n] > 0) {
        t = u;
        break;
      }
      if (u < n) {
        const double* crow = cost.row(u);
        for (std::size_t j = 0; j < m; ++j) {
          const double rc = std::max(0.0, crow[j] + phi[u] - phi[n + j]);
          if (du + rc < dist[n + j]) {
            dist[n + j] = du + rc;
            parent[n + j] = static_cast<int>(u);
          }
        }
      } else {
        const std::size_t j = u - n;
        for (std::size_t i = 0; i < n; ++i) {
          if (flow[i * m + j] <= 0) continue;
          const double rc = std::max(0.0, -cost(i, j) + phi[u] - phi[i]);
          if (du + rc < dist[i]) {
            dist[i] = du + rc;
            parent[i] = static_cast<int>(u);
          }
        }
      }
    }

    const double dt = dist[t];
    for (std::size_t v = 0; v < V; ++v) phi[v] += std::min(dist[v], dt);

    std::int64_t delta = dem[t - n];
    for (std::size_t v = t; parent[v] != -1; v = parent[v]) {
      const std::size_t u = static_cast<std::size_t>(parent[v]);
      if (v < n) delta = std::min(delta, flow[v * m + (u - n)]);
    }
    {
      std::size_t v = t;
      while (parent[v] != -1) v = static_cast<std::size_t>(parent[v]);
      delta = std::min(delta, sup[v]);
      sup[v] -= delta;
    }
    dem[t - n] -= delta;
    remaining -= delta;
    for (std::size_t v = t; parent[v] != -1; v = parent[v]) {
      const std::size_t u = static_cast<std::size_t>(parent[v]);
      if (v >= n)
        flow[u * m + (v - n)] += delta;
      else
        flow[v * m + (u - n)] -= delta;
    }
  }
  return flow;
}

inline void validate_marginal(const std::vector<double>& w, const char* side) {
  if (w.empty())
    throw ValidationError(std::string(side) + " marginal is empty");
  double total = 0.0;
  for (double v : w) {
    if (!std::isfinite(v) || v < 0.0)
      throw ValidationError(std::string(side) +
                            " marginal has a negative or non-finite weight");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ValidationError(std::string(side) + " marginal sums to " +
                          std::to_string(total) + ", expected 1 within 1e-9");
}

}  // namespace detail

// Optimal transport between two finite measures given their cost matrix.
// Weights must each sum to 1 within 1e-9.  Zero-weight atoms take no flow.
// The returned plan's marginals equal the rationalized weights exactly (in
// units); against the raw inputs they agree within the reconstruction
// tolerance.
inline TransportPlan exact_transport(const std::vector<double>& a,
                                     const std::vector<double>& b,
                                     const Matrix& cost) {
  detail::validate_marginal(a, "source");
  detail::validate_marginal(b, "target");
  if (cost.rows != a.size() || cost.cols != b.size())
    throw ValidationError("cost matrix shape does not match the marginals");
  for (double v : cost.data)
    if (!std::isfinite(v)) throw ValidationError("non-finite cost entry");

  const detail::CommonUnits cu = detail::rationalize_marginals(a, b);
  const std::vector<std::int64_t> flow =
      detail::min_cost_flow_units(cost, cu.a, cu.b);

  TransportPlan out;
  out.plan = Matrix(a.size(), b.size());
  double acc = 0.0;
  const double inv = 1.0 / static_cast<double>(cu.denom);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      const std::int64_t f = flow[i * b.size() + j];
      if (f == 0) continue;
      out.plan(i, j) = static_cast<double>(f) * inv;
      acc += cost(i, j) * static_cast<double>(f);
    }
  out.value = acc * inv;
  return out;
}

// p-th power of the p-Wasserstein distance between a uniform particle cloud
// and the discrete measure (support, weights).
inline double wasserstein_pp(const ParticleCloud& cloud,
                             const std::vector<Point>& support,
                             const std::vector<double>& weights, double p) {
  const Matrix cost = pairwise_cost(cloud.points, support, p);
  const std::vector<double> a(cloud.size(), 1.0 / static_cast<double>(cloud.size()));
  return exact_transport(a, weights, cost).value;
}

// Weighted sum of client transport costs to the uniform measure on `points`.
inline double objective_at_points(const ProblemInstance& inst,
                                  const std::vector<Point>& points) {
  if (points.empty()) throw ValidationError("support is empty");
  const std::vector<double> b(points.size(),
                              1.0 / static_cast<double>(points.size()));
  double obj = 0.0;
  for (const Client& c : inst.clients)
    obj += c.weight * wasserstein_pp(c.cloud, points, b, inst.order);
  return obj;
}

// Objective of selecting candidate indices `sel`, computed from precomputed
// cost blocks.  `lambdas` are the client coefficients.
inline double selection_objective(const CostProfile& prof,
                                  const std::vector<double>& lambdas,
                                  const std::vector<int>& sel) {
  if (sel.empty()) throw ValidationError("selection is empty");
  const std::size_t m = sel.size();
  const std::vector<double> b(m, 1.0 / static_cast<double>(m));
  double obj = 0.0;
  for (std::size_t s = 0; s < prof.client_cost.size(); ++s) {
    const Matrix& full = prof.client_cost[s];
    Matrix sub(full.rows, m);
    for (std::size_t i = 0; i < full.rows; ++i)
      for (std::size_t j = 0; j < m; ++j)
        sub(i, j) = full(i, static_cast<std::size_t>(sel[j]));
    const std::vector<double> a(full.rows, 1.0 / static_cast<double>(full.rows));
    obj += lambdas[s] * exact_transport(a, b, sub).value;
  }
  return obj;
}

inline double selection_objective(const ProblemInstance& inst,
                                  const CostProfile& prof,
                                  const std::vector<int>& sel) {
  std::vector<double> lambdas;
  lambdas.reserve(inst.n_clients());
  for (const Client& c : inst.clients) lambdas.push_back(c.weight);
  return selection_objective(prof, lambdas, sel);
}

struct BruteForceResult {
  std::vector<int> selection;
  double value;
};

inline double binomial_estimate(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double v = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    v *= static_cast<double>(n - k + i) / static_cast<double>(i);
    if (v > 1e18) return v;
  }
  return v;
}

// Exhaustive optimum over all M-subsets of the candidates.  Guarded by a
// subset-count cap; ties keep the lexicographically first subset.
inline BruteForceResult brute_force_selection(const ProblemInstance& inst,
                                              const CostProfile& prof,
                                              double cap = 1e5) {
  const std::size_t K = inst.n_candidates();
  const std::size_t M = static_cast<std::size_t>(inst.support_size);
  const double count = binomial_estimate(K, M);
  if (count > cap)
    throw BudgetError("exhaustive selection needs " + std::to_string(count) +
                      " subsets, cap is " + std::to_string(cap));
  std::vector<int> sel(M);
  for (std::size_t j = 0; j < M; ++j) sel[j] = static_cast<int>(j);
  BruteForceResult best{{}, std::numeric_limits<double>::infinity()};
  while (true) {
    const double v = selection_objective(inst, prof, sel);
    if (v < best.value) {
      best.value = v;
      best.selection = sel;
    }
    // next combination, lexicographic
    std::size_t j = M;
    while (j > 0 && sel[j - 1] == static_cast<int>(K - M + j - 1)) --j;
    if (j == 0) break;
    ++sel[j - 1];
    for (std::size_t l = j; l < M; ++l) sel[l] = sel[l - 1] + 1;
  }
  return best;
}

inline BruteForceResult brute_force_selection(const ProblemInstance& inst,
                                              double cap = 1e5) {
  const CostProfile prof = build_cost_profile(inst);
  return brute_force_selection(inst, prof, cap);
}

}  // namespace fedbary
