#pragma once

// Hand-verifiable fixtures and tiny-instance generators shared by the test
// binaries.  The two named fixtures below have every intermediate quantity
// worked out by hand in the test files that use them.

#include <cmath>
#include <cstdint>
#include <vector>

#include "fedbary/datagen.hpp"
#include "fedbary/measures.hpp"
#include "fedbary/rng.hpp"

namespace testfix {

// One client holding particles {0, 2} on the line, candidates {0, 1, 2},
// p = 2.  Cost block rows: (0,1,4) and (4,1,0).
inline fedbary::ProblemInstance pair_cloud(int M) {
  fedbary::ProblemInstance inst;
  fedbary::Client c;
  c.weight = 1.0;
  c.cloud = fedbary::make_cloud({{0.0}, {2.0}});
  inst.clients.push_back(std::move(c));
  inst.candidates = fedbary::make_candidate_set({{0.0}, {1.0}, {2.0}});
  inst.support_size = M;
  inst.order = 2.0;
  return fedbary::validate_instance(std::move(inst));
}

// Two clients holding one particle each ({0} and {2}), equal weights,
// candidates {0, 1, 2}, M = 1, p = 2.  The best single support point is the
// midpoint candidate with objective 1.
inline fedbary::ProblemInstance two_singletons() {
  fedbary::ProblemInstance inst;
  fedbary::Client a, b;
  a.weight = 0.5;
  a.cloud = fedbary::make_cloud({{0.0}});
  b.weight = 0.5;
  b.cloud = fedbary::make_cloud({{2.0}});
  inst.clients.push_back(std::move(a));
  inst.clients.push_back(std::move(b));
  inst.candidates = fedbary::make_candidate_set({{0.0}, {1.0}, {2.0}});
  inst.support_size = 1;
  inst.order = 2.0;
  return fedbary::validate_instance(std::move(inst));
}

struct TinyOptions {
  std::size_t max_clients = 3;
  std::size_t max_particles = 4;
  std::size_t min_candidates = 2;
  std::size_t max_candidates = 7;
  int max_support = 3;
};

// Random tiny instance: coordinates uniform on [0, sqrt(5)] per axis with
// p = 2, so every pairwise cost lands in [0, 10].  Weights are random
// positive reals normalized to 1.
inline fedbary::ProblemInstance random_tiny(fedbary::Rng& rng,
                                            const TinyOptions& opt = {}) {
  const std::size_t n_clients = 1 + static_cast<std::size_t>(rng.below(
                                        static_cast<int>(opt.max_clients)));
  const std::size_t dim = 1 + static_cast<std::size_t>(rng.below(2));
  const std::size_t K =
      opt.min_candidates +
      static_cast<std::size_t>(rng.below(
          static_cast<int>(opt.max_candidates - opt.min_candidates + 1)));
  const double span = std::sqrt(5.0);
  auto point = [&] {
    fedbary::Point p(dim);
    for (std::size_t d = 0; d < dim; ++d) p[d] = span * rng.uniform();
    return p;
  };

  fedbary::ProblemInstance inst;
  std::vector<double> raw(n_clients);
  double wsum = 0.0;
  for (double& w : raw) {
    w = 0.1 + rng.uniform();
    wsum += w;
  }
  for (std::size_t s = 0; s < n_clients; ++s) {
    fedbary::Client c;
    c.weight = raw[s] / wsum;
    const std::size_t n = 1 + static_cast<std::size_t>(rng.below(
                                  static_cast<int>(opt.max_particles)));
    std::vector<fedbary::Point> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back(point());
    c.cloud = fedbary::make_cloud(std::move(pts));
    inst.clients.push_back(std::move(c));
  }
  // Normalized quotients can miss 1 by a few ulps; pin the last weight.
  double partial = 0.0;
  for (std::size_t s = 0; s + 1 < n_clients; ++s)
    partial += inst.clients[s].weight;
  inst.clients.back().weight = 1.0 - partial;

  std::vector<fedbary::Point> cands;
  for (std::size_t k = 0; k < K; ++k) cands.push_back(point());
  inst.candidates = fedbary::make_candidate_set(std::move(cands));
  const int max_m = std::min<int>(opt.max_support, static_cast<int>(K));
  inst.support_size = 1 + rng.below(max_m);
  inst.order = 2.0;
  return fedbary::validate_instance(std::move(inst));
}

// Tiny instance in which every quantity the report pipeline touches is a
// dyadic rational of small magnitude: integer coordinates, weights with
// denominator 8, M a power of two, cloud sizes powers of two.  On such
// instances theta arithmetic in the report formula is exact, which makes
// bit-level invariance tests meaningful.
inline fedbary::ProblemInstance dyadic_tiny(fedbary::Rng& rng) {
  const std::size_t n_clients = 2 + static_cast<std::size_t>(rng.below(2));
  const std::size_t dim = 1 + static_cast<std::size_t>(rng.below(2));
  const std::size_t K = 2 + static_cast<std::size_t>(rng.below(5));
  auto point = [&] {
    fedbary::Point p(dim);
    for (std::size_t d = 0; d < dim; ++d)
      p[d] = static_cast<double>(rng.below(17) - 8);
    return p;
  };

  // Split 8 eighths over the clients, at least one eighth each.
  std::vector<int> eighths(n_clients, 1);
  for (int rest = 8 - static_cast<int>(n_clients); rest > 0; --rest)
    ++eighths[static_cast<std::size_t>(rng.below(static_cast<int>(n_clients)))];

  fedbary::ProblemInstance inst;
  for (std::size_t s = 0; s < n_clients; ++s) {
    fedbary::Client c;
    c.weight = static_cast<double>(eighths[s]) / 8.0;
    const std::size_t n = static_cast<std::size_t>(1) << rng.below(3);
    std::vector<fedbary::Point> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back(point());
    c.cloud = fedbary::make_cloud(std::move(pts));
    inst.clients.push_back(std::move(c));
  }
  std::vector<fedbary::Point> cands;
  for (std::size_t k = 0; k < K; ++k) cands.push_back(point());
  inst.candidates = fedbary::make_candidate_set(std::move(cands));
  const int log_cap = (K >= 4) ? 3 : 2;  // M in {1, 2, 4} capped by K
  inst.support_size = 1 << rng.below(log_cap);
  inst.order = 2.0;
  return fedbary::validate_instance(std::move(inst));
}

// Multiplier vector on the 1/16 grid, |theta| <= 4: exact dyadics.
inline std::vector<std::vector<double>> dyadic_theta(
    const fedbary::ProblemInstance& inst, fedbary::Rng& rng) {
  std::vector<std::vector<double>> theta;
  for (const fedbary::Client& c : inst.clients) {
    std::vector<double> t(c.cloud.size());
    for (double& v : t) v = static_cast<double>(rng.below(129) - 64) / 16.0;
    theta.push_back(std::move(t));
  }
  return theta;
}

inline std::vector<std::vector<double>> random_theta(
    const fedbary::ProblemInstance& inst, fedbary::Rng& rng,
    double scale = 2.0) {
  std::vector<std::vector<double>> theta;
  for (const fedbary::Client& c : inst.clients) {
    std::vector<double> t(c.cloud.size());
    for (double& v : t) v = scale * (2.0 * rng.uniform() - 1.0);
    theta.push_back(std::move(t));
  }
  return theta;
}

}  // namespace testfix
