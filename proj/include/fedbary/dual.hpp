#pragma once

// Subgradient solver for the dual of the fixed-cardinality support selection
// problem.  Clients hold multipliers theta_si (one per particle); the
// coordinator holds the cardinality multiplier theta0.  Per round, each
// client reports the per-candidate totals
//
//   t_k = max_i(theta_i - w * d_ik) - (1/|I|) * sum_i theta_i,
//
// the coordinator selects gamma_k = 1 iff sum_s t_sk > theta0 (strict; an
// exact tie keeps the candidate out), and both sides take a momentum-smoothed
// supergradient step with step size alpha0 / sqrt(j + 1).  The dual value has
// the closed form
//
//   L(theta) = sum_k min(0, theta0 - sum_s t_sk) - M * theta0.
//
// In stochastic mode only a random B-subset of candidates is scored per round
// and both subgradients are scaled by K/B, which keeps them unbiased; a dense
// evaluation every ceil(K/B) rounds drives the stopping test.
//
// Seed streams (child_seed tags): 0 batch sampling, 1 primal recovery,
// 2 + s tie-breaking for client s.  Tie RNGs advance only when an argmax
// tie actually occurs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "fedbary/error.hpp"
#include "fedbary/measures.hpp"
#include "fedbary/rng.hpp"
#include "fedbary/transport.hpp"

namespace fedbary {

struct DualHyper {
  double alpha0 = 1.0;
  double kappa1 = 0.9;   // momentum on theta0
  double kappa2 = 0.9;   // momentum on client multipliers
  double epsilon = 1e-4;
  bool epsilon_relative = true;  // |dL| <= eps * max(|L_prev|, 1e-12)
  int max_rounds = 5000;
  int batch = 0;  // candidates scored per round; 0 means all of them
  int window = 50;
  double support_band = 0.10;  // accepted |sum(gamma) - M| / M at stopping
  bool sample_recovery = false;
  double theta0_init = 0.0;
  std::uint64_t seed = 0;

  int effective_batch(std::size_t K) const {
    const int k = static_cast<int>(K);
    return (batch <= 0 || batch >= k) ? k : batch;
  }

  void validate(std::size_t K) const {
    if (!(alpha0 > 0.0)) throw ValidationError("alpha0 must be positive");
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
    if (kappa1 < 0.0 || kappa1 >= 1.0 || kappa2 < 0.0 || kappa2 >= 1.0)
      throw ValidationError("momentum factors must lie in [0, 1)");
    if (max_rounds < 1) throw ValidationError("round cap must be >= 1");
    if (batch < 0 || batch > static_cast<int>(K))
      throw ValidationError("batch size must lie in [0, K]");
    if (window < 1) throw ValidationError("recovery window must be >= 1");
    if (support_band < 0.0)
      throw ValidationError("support band must be non-negative");
  }
};

struct DualState {
  double theta0 = 0.0, m0 = 0.0;
  std::vector<std::vector<double>> theta, m;  // per client, per particle

  static DualState zeros(const CostProfile& prof, double theta0_init = 0.0) {
    DualState st;
    st.theta0 = theta0_init;
    for (const Matrix& c : prof.client_cost) {
      st.theta.emplace_back(c.rows, 0.0);
      st.m.emplace_back(c.rows, 0.0);
    }
    return st;
  }
};

struct ClientReport {
  int client_id = 0;
  long round = 0;
  // Dense over candidates; entries outside the round's scored set are NaN.
  std::vector<double> t;
};

inline double step_size(const DualHyper& h, long j) {
  return h.alpha0 / std::sqrt(static_cast<double>(j + 1));
}

inline Matrix transpose(const Matrix& m) {
  Matrix out(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out(j, i) = m(i, j);
  return out;
}

// costT is the client's cost block transposed: K x |I|.
inline ClientReport client_report(const Matrix& costT, double w,
                                  const std::vector<double>& theta,
                                  const std::vector<int>& scored, int client_id,
                                  long round) {
  const std::size_t n = theta.size();
  ClientReport r;
  r.client_id = client_id;
  r.round = round;
  r.t.assign(costT.rows, std::numeric_limits<double>::quiet_NaN());
  double mean = 0.0;
  for (double v : theta) mean += v;
  mean /= static_cast<double>(n);
  for (int k : scored) {
    const double* d = costT.row(static_cast<std::size_t>(k));
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const double v = theta[i] - w * d[i];
      if (v > best) best = v;
    }
    r.t[static_cast<std::size_t>(k)] = best - mean;
  }
  return r;
}

namespace detail {

// Client totals reduced in ascending client_id order so the sum is the same
// no matter how the reports arrived.
inline std::vector<const ClientReport*> ordered(
    const std::vector<ClientReport>& reports) {
  std::vector<const ClientReport*> p;
  p.reserve(reports.size());
  for (const ClientReport& r : reports) p.push_back(&r);
  std::sort(p.begin(), p.end(), [](const ClientReport* a, const ClientReport* b) {
    return a->client_id < b->client_id;
  });
  for (std::size_t s = 1; s < p.size(); ++s)
    if (p[s]->client_id == p[s - 1]->client_id)
      throw ValidationError("duplicate client id in reports");
  return p;
}

}  // namespace detail

// gamma over all K candidates: entries in `update` follow the strict
// threshold rule, the rest carry over from `prev` (zeros if absent).
inline std::vector<std::uint8_t> select_support(
    const std::vector<ClientReport>& reports, double theta0,
    const std::vector<int>& update, std::size_t K,
    const std::vector<std::uint8_t>* prev = nullptr) {
  std::vector<std::uint8_t> gamma =
      prev ? *prev : std::vector<std::uint8_t>(K, 0);
  const auto ord = detail::ordered(reports);
  for (int k : update) {
    const std::size_t kk = static_cast<std::size_t>(k);
    double total = 0.0;
    for (const ClientReport* r : ord) total += r->t[kk];
    gamma[kk] = (total > theta0) ? 1 : 0;
  }
  return gamma;
}

// (K/B)-scaled partial dual value over `scored`; exact when `scored` covers
// all K candidates.
inline double batch_dual_value(const std::vector<ClientReport>& reports,
                               double theta0, int M,
                               const std::vector<int>& scored, std::size_t K) {
  const auto ord = detail::ordered(reports);
  double acc = 0.0;
  for (int k : scored) {
    const std::size_t kk = static_cast<std::size_t>(k);
    double total = 0.0;
    for (const ClientReport* r : ord) total += r->t[kk];
    acc += std::min(0.0, theta0 - total);
  }
  const double scale =
      static_cast<double>(K) / static_cast<double>(scored.size());
  return scale * acc - static_cast<double>(M) * theta0;
}

inline double dual_value(const std::vector<ClientReport>& reports,
                         double theta0, int M, std::size_t K) {
  std::vector<int> all(K);
  std::iota(all.begin(), all.end(), 0);
  return batch_dual_value(reports, theta0, M, all, K);
}

// d L / d theta0 restricted to the scored set, scaled by K/B.
inline double global_subgradient(const std::vector<std::uint8_t>& gamma, int M,
                                 const std::vector<int>& scored,
                                 std::size_t K) {
  long count = 0;
  for (int k : scored) count += gamma[static_cast<std::size_t>(k)];
  const double scale =
      static_cast<double>(K) / static_cast<double>(scored.size());
  return scale * static_cast<double>(count) - static_cast<double>(M);
}

// For every selected candidate, the particle index attaining
// max_i(theta_i - w * d_ik); exact FP ties are broken uniformly at random.
// Unselected candidates get -1.
inline std::vector<int> local_couplings(const Matrix& costT, double w,
                                        const std::vector<double>& theta,
                                        const std::vector<std::uint8_t>& gamma,
                                        Rng& tie_rng) {
  const std::size_t K = costT.rows, n = theta.size();
  std::vector<int> istar(K, -1);
  for (std::size_t k = 0; k < K; ++k) {
    if (!gamma[k]) continue;
    const double* d = costT.row(k);
    double best = -std::numeric_limits<double>::infinity();
    int arg = 0, ties = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = theta[i] - w * d[i];
      if (v > best) {
        best = v;
        arg = static_cast<int>(i);
        ties = 1;
      } else if (v == best) {
        ++ties;
      }
    }
    if (ties > 1) {
      int pick = tie_rng.below(ties);
      for (std::size_t i = 0; i < n; ++i) {
        if (theta[i] - w * d[i] == best && pick-- == 0) {
          arg = static_cast<int>(i);
          break;
        }
      }
    }
    istar[k] = arg;
  }
  return istar;
}

// g_i = (K/B) * sum over scored selected k of (1/|I| - [istar_k == i]).
inline std::vector<double> local_subgradient(const std::vector<int>& istar,
                                             const std::vector<std::uint8_t>& gamma,
                                             std::size_t cloud_size,
                                             const std::vector<int>& scored,
                                             std::size_t K) {
  std::vector<double> g(cloud_size, 0.0);
  long n_sel = 0;
  std::vector<long> hits(cloud_size, 0);
  for (int k : scored) {
    const std::size_t kk = static_cast<std::size_t>(k);
    if (!gamma[kk]) continue;
    ++n_sel;
    ++hits[static_cast<std::size_t>(istar[kk])];
  }
  const double scale =
      static_cast<double>(K) / static_cast<double>(scored.size());
  const double inv = 1.0 / static_cast<double>(cloud_size);
  for (std::size_t i = 0; i < cloud_size; ++i)
    g[i] = scale * (static_cast<double>(n_sel) * inv -
                    static_cast<double>(hits[i]));
  return g;
}

inline void momentum_step(double& x, double& m, double g, double alpha,
                          double kappa) {
  m = (1.0 - kappa) * g + kappa * m;
  x += alpha * m;
}

struct RoundTrace {
  long iter = 0;
  double dual_value = 0.0;  // exact on dense rounds, batch estimate otherwise
  int support_size = 0;
  double step_size = 0.0;
  double theta0 = 0.0;  // value the round was scored at (before the step)
  double wall_ms = 0.0;
};

struct Recovery {
  std::vector<double> gamma_bar;
  std::vector<int> support;
};

// Ergodic primal recovery: over the `window` recorded rounds with the highest
// dual value (ties favor earlier rounds), average gamma with weights
// proportional to the round step sizes, then either take the top-M entries
// (ties favor the smaller candidate index) or, in sample mode, draw M
// distinct candidates with probability proportional to gamma_bar.
inline Recovery recover_support(
    const std::vector<RoundTrace>& trace,
    const std::vector<std::vector<std::uint8_t>>& gammas, int window, int M,
    bool sample_mode, std::uint64_t seed) {
  if (trace.empty() || gammas.size() != trace.size())
    throw ValidationError("recovery needs a non-empty aligned round history");
  const std::size_t K = gammas.front().size();
  const std::size_t J =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(window, 1)),
                            trace.size());

  std::vector<std::size_t> order(trace.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return trace[a].dual_value > trace[b].dual_value;
                   });
  order.resize(J);

  double wsum = 0.0;
  for (std::size_t r : order) wsum += trace[r].step_size;
  Recovery out;
  out.gamma_bar.assign(K, 0.0);
  for (std::size_t r : order) {
    const double w = trace[r].step_size / wsum;
    const std::vector<std::uint8_t>& g = gammas[r];
    for (std::size_t k = 0; k < K; ++k)
      if (g[k]) out.gamma_bar[k] += w;
  }

  std::vector<char> chosen(K, 0);
  if (!sample_mode) {
    std::vector<int> idx(K);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      return out.gamma_bar[static_cast<std::size_t>(a)] >
             out.gamma_bar[static_cast<std::size_t>(b)];
    });
    for (int t = 0; t < M; ++t) chosen[static_cast<std::size_t>(idx[t])] = 1;
  } else {
    Rng rng(child_seed(seed, 1));
    std::vector<double> w = out.gamma_bar;
    int drawn = 0;
    while (drawn < M) {
      double total = 0.0;
      for (double v : w) total += v;
      if (!(total > 0.0)) break;
      double u = rng.uniform() * total;
      std::size_t pick = K - 1;
      for (std::size_t k = 0; k < K; ++k) {
        if (w[k] <= 0.0) continue;
        u -= w[k];
        if (u <= 0.0) {
          pick = k;
          break;
        }
      }
      chosen[pick] = 1;
      w[pick] = 0.0;
      ++drawn;
    }
    for (std::size_t k = 0; k < K && drawn < M; ++k)
      if (!chosen[k]) {
        chosen[k] = 1;
        ++drawn;
      }
  }
  for (std::size_t k = 0; k < K; ++k)
    if (chosen[k]) out.support.push_back(static_cast<int>(k));
  return out;
}

struct SolveResult {
  std::vector<RoundTrace> trace;
  std::vector<std::vector<std::uint8_t>> gammas;
  double theta0_final = 0.0;
  std::vector<std::vector<double>> theta_final;  // empty in distributed runs
  double best_dual = -std::numeric_limits<double>::infinity();
  long best_round = -1;
  bool converged = false;
  long rounds = 0;
  std::vector<double> gamma_bar;
  std::vector<int> support;
  double objective = 0.0;
  double wall_ms_total = 0.0;
};

// Fills the primal-recovery fields from the recorded history.
inline void attach_recovery(const ProblemInstance& inst, const CostProfile& prof,
                            const DualHyper& hyper, SolveResult& r) {
  const Recovery rec =
      recover_support(r.trace, r.gammas, hyper.window, inst.support_size,
                      hyper.sample_recovery, hyper.seed);
  r.gamma_bar = rec.gamma_bar;
  r.support = rec.support;
  r.objective = selection_objective(inst, prof, rec.support);
}

// Reference single-process engine.  The federated coordinator/client pair in
// federation.hpp runs the same per-round functions in the same order; this
// one exists for tests and for callers that want no messaging at all.
inline SolveResult run_dual(const ProblemInstance& inst,
                            const CostProfile& prof, const DualHyper& hyper,
                            const DualState* init = nullptr) {
  const std::size_t K = inst.n_candidates();
  const std::size_t N = inst.n_clients();
  hyper.validate(K);
  const int B = hyper.effective_batch(K);
  const long period = static_cast<long>(
      (K + static_cast<std::size_t>(B) - 1) / static_cast<std::size_t>(B));

  DualState st = init ? *init : DualState::zeros(prof, hyper.theta0_init);
  if (st.theta.size() != N)
    throw ValidationError("initial state does not match the client count");

  std::vector<Matrix> costT;
  costT.reserve(N);
  for (const Matrix& c : prof.client_cost) costT.push_back(transpose(c));

  Rng batch_rng(child_seed(hyper.seed, 0));
  std::vector<Rng> tie_rng;
  tie_rng.reserve(N);
  for (std::size_t s = 0; s < N; ++s)
    tie_rng.emplace_back(child_seed(hyper.seed, 2 + s));

  std::vector<int> all(K);
  std::iota(all.begin(), all.end(), 0);

  SolveResult out;
  std::vector<std::uint8_t> gamma(K, 0);
  double prev_full = 0.0;
  bool have_prev = false;
  const auto t0 = std::chrono::steady_clock::now();

  for (long j = 0; j < hyper.max_rounds; ++j) {
    const auto r0 = std::chrono::steady_clock::now();
    const bool dense = (B == static_cast<int>(K)) || (j % period == 0);
    const std::vector<int> batch = (B == static_cast<int>(K))
                                       ? all
                                       : batch_rng.sample_indices(
                                             static_cast<int>(K), B);
    const std::vector<int>& scored = dense ? all : batch;

    std::vector<ClientReport> reports;
    reports.reserve(N);
    for (std::size_t s = 0; s < N; ++s)
      reports.push_back(client_report(costT[s], inst.w(s), st.theta[s], scored,
                                      static_cast<int>(s), j));

    gamma = select_support(reports, st.theta0, batch, K, &gamma);
    const double Lrec =
        batch_dual_value(reports, st.theta0, inst.support_size, scored, K);
    if (!std::isfinite(Lrec))
      throw SolverError("non-finite dual value at round " + std::to_string(j));
    int count = 0;
    for (std::uint8_t g : gamma) count += g;
    const double alpha = step_size(hyper, j);

    out.trace.push_back({j, Lrec, count, alpha, st.theta0, 0.0});
    out.gammas.push_back(gamma);

    if (dense) {
      if (Lrec > out.best_dual) {
        out.best_dual = Lrec;
        out.best_round = j;
      }
      if (have_prev) {
        const double diff = std::abs(Lrec - prev_full);
        const double tol = hyper.epsilon_relative
                               ? hyper.epsilon * std::max(std::abs(prev_full),
                                                          1e-12)
                               : hyper.epsilon;
        const double band =
            hyper.support_band * static_cast<double>(inst.support_size);
        if (diff <= tol &&
            std::abs(count - inst.support_size) <= band + 1e-12)
          out.converged = true;
      }
      prev_full = Lrec;
      have_prev = true;
    }

    if (out.converged) {
      out.trace.back().wall_ms =
          std::chrono::duration<double, std::milli>(
              std::chrono::steady_clock::now() - r0)
              .count();
      break;
    }

    const double g0 = global_subgradient(gamma, inst.support_size, batch, K);
    momentum_step(st.theta0, st.m0, g0, alpha, hyper.kappa1);
    for (std::size_t s = 0; s < N; ++s) {
      const std::vector<int> istar =
          local_couplings(costT[s], inst.w(s), st.theta[s], gamma, tie_rng[s]);
      const std::vector<double> gs = local_subgradient(
          istar, gamma, st.theta[s].size(), batch, K);
      for (std::size_t i = 0; i < st.theta[s].size(); ++i)
        momentum_step(st.theta[s][i], st.m[s][i], gs[i], alpha, hyper.kappa2);
    }
    out.trace.back().wall_ms =
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - r0)
            .count();
  }

  out.rounds = static_cast<long>(out.trace.size());
  out.theta0_final = st.theta0;
  out.theta_final = st.theta;
  attach_recovery(inst, prof, hyper, out);
  out.wall_ms_total = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
  return out;
}

}  // namespace fedbary
