#pragma once

// Core data model: particle clouds held by clients, the shared candidate set,
// and the problem instance that ties them together.  Everything downstream
// (transport oracle, dual solver, baseline) consumes these types.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fedbary/error.hpp"

namespace fedbary {

using Point = std::vector<double>;

// Dense row-major matrix.  Small and unclever on purpose; the hot loops that
// care about layout make their own transposed copies.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data[i * cols + j];
  }
  const double* row(std::size_t i) const { return data.data() + i * cols; }
  double* row(std::size_t i) { return data.data() + i * cols; }
};

// One client's empirical measure: the uniform measure on `points`.
struct ParticleCloud {
  std::vector<Point> points;
  std::size_t dim = 0;

  std::size_t size() const { return points.size(); }
};

// Candidate support locations shared by every client.
struct CandidateSet {
  std::vector<Point> points;
  std::size_t dim = 0;

  std::size_t size() const { return points.size(); }
};

struct Client {
  ParticleCloud cloud;
  double weight = 0.0;  // this client's convex coefficient in the objective
};

struct ProblemInstance {
  std::vector<Client> clients;
  CandidateSet candidates;
  int support_size = 0;  // number of candidates to select
  double order = 2.0;    // exponent p of the ground cost |y - z|^p

  std::size_t n_clients() const { return clients.size(); }
  std::size_t n_candidates() const { return candidates.size(); }
  std::size_t dim() const { return candidates.dim; }

  // Per-client coefficient in the rescaled formulation: weight / support_size.
  double w(std::size_t s) const {
    return clients[s].weight / static_cast<double>(support_size);
  }
};

inline ParticleCloud make_cloud(std::vector<Point> points) {
  if (points.empty()) throw ValidationError("particle cloud is empty");
  const std::size_t dim = points.front().size();
  if (dim == 0) throw ValidationError("particle has zero dimension");
  for (const Point& p : points) {
    if (p.size() != dim)
      throw ValidationError("dimension mismatch inside particle cloud");
    for (double v : p)
      if (!std::isfinite(v))
        throw ValidationError("non-finite particle coordinate");
  }
  return ParticleCloud{std::move(points), dim};
}

inline CandidateSet make_candidate_set(std::vector<Point> points) {
  if (points.empty()) throw ValidationError("candidate set is empty");
  const std::size_t dim = points.front().size();
  if (dim == 0) throw ValidationError("candidate has zero dimension");
  for (const Point& p : points) {
    if (p.size() != dim)
      throw ValidationError("dimension mismatch inside candidate set");
    for (double v : p)
      if (!std::isfinite(v))
        throw ValidationError("non-finite candidate coordinate");
  }
  return CandidateSet{std::move(points), dim};
}

// Validates every structural invariant and returns the instance.  Client
// weights must already sum to 1 (tolerance 1e-12); renormalization is a
// separate, explicit call and never happens implicitly.
inline ProblemInstance validate_instance(ProblemInstance raw) {
  if (raw.clients.empty()) throw ValidationError("instance has no clients");
  if (raw.candidates.size() == 0)
    throw ValidationError("instance has no candidates");
  if (raw.support_size < 1)
    throw ValidationError("support size M must be >= 1");
  if (static_cast<std::size_t>(raw.support_size) > raw.candidates.size())
    throw ValidationError("M exceeds candidate count");
  if (!(raw.order >= 1.0) || !std::isfinite(raw.order))
    throw ValidationError("cost order p must be finite and >= 1");
  const std::size_t dim = raw.candidates.dim;
  double wsum = 0.0;
  for (const Client& c : raw.clients) {
    if (c.cloud.size() == 0) throw ValidationError("particle cloud is empty");
    if (c.cloud.dim != dim)
      throw ValidationError("client/candidate dimension mismatch");
    if (!(c.weight > 0.0) || !std::isfinite(c.weight))
      throw ValidationError("client weight must be positive and finite");
    wsum += c.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-12)
    throw ValidationError("weights must sum to 1 (got " +
                          std::to_string(wsum) + ")");
  return raw;
}

// Explicit opt-in weight renormalization.
inline void renormalize_weights(ProblemInstance& inst) {
  double wsum = 0.0;
  for (const Client& c : inst.clients) wsum += c.weight;
  if (!(wsum > 0.0) || !std::isfinite(wsum))
    throw ValidationError("weights cannot be renormalized (sum not positive)");
  for (Client& c : inst.clients) c.weight /= wsum;
}

// |a_i - b_j|^p for Euclidean |.|.  p = 2 stays in squared coordinates and is
// exact for integer inputs (no sqrt/pow round trip); p = 1 takes one sqrt.
inline Matrix pairwise_cost(const std::vector<Point>& a,
                            const std::vector<Point>& b, double p) {
  if (!(p >= 1.0)) throw ValidationError("cost order p must be >= 1");
  Matrix c(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!b.empty() && a[i].size() != b.front().size())
      throw ValidationError("dimension mismatch in pairwise cost");
    for (std::size_t j = 0; j < b.size(); ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < a[i].size(); ++d) {
        const double diff = a[i][d] - b[j][d];
        s += diff * diff;
      }
      double v;
      if (p == 2.0)
        v = s;
      else if (p == 1.0)
        v = std::sqrt(s);
      else
        v = std::pow(s, 0.5 * p);
      c(i, j) = v;
    }
  }
  return c;
}

// Per-client cost blocks against the shared candidate set, |cloud_s| x K.
struct CostProfile {
  std::vector<Matrix> client_cost;
};

inline CostProfile build_cost_profile(const ProblemInstance& inst) {
  CostProfile prof;
  prof.client_cost.reserve(inst.n_clients());
  for (const Client& c : inst.clients)
    prof.client_cost.push_back(
        pairwise_cost(c.cloud.points, inst.candidates.points, inst.order));
  return prof;
}

}  // namespace fedbary
