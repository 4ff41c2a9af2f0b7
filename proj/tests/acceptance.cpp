// Acceptance gate: ten criteria, one TEST_CASE each, one PASS/FAIL line each.
// Criterion 7 and 8 share one desk-scale federated run; everything else is
// self-contained.  Tolerances are pinned here, next to the assertion they
// guard.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "fedbary/bregman.hpp"
#include "fedbary/datagen.hpp"
#include "fedbary/dual.hpp"
#include "fedbary/federation.hpp"
#include "fedbary/measures.hpp"
#include "fedbary/rng.hpp"
#include "fedbary/transport.hpp"
#include "oracles.hpp"
#include "tiny_instances.hpp"

using namespace fedbary;
using Catch::Matchers::WithinAbs;

namespace {

// One "CRITERION n: PASS|FAIL" line per finished test case.
class CriterionReporter : public Catch::EventListenerBase {
 public:
  using Catch::EventListenerBase::EventListenerBase;

  void testCaseEnded(const Catch::TestCaseStats& stats) override {
    const std::string& name = stats.testInfo->name;
    const std::string prefix = "criterion ";
    if (name.rfind(prefix, 0) != 0) return;
    int n = 0;
    std::size_t i = prefix.size();
    while (i < name.size() && std::isdigit(static_cast<unsigned char>(name[i])))
      n = 10 * n + (name[i++] - '0');
    const bool ok = stats.totals.assertions.allPassed();
    std::cout << "CRITERION " << n << ": " << (ok ? "PASS" : "FAIL")
              << std::endl;
  }
};

bool same_bits(double a, double b) {
  return std::memcmp(&a, &b, sizeof a) == 0;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// Three clients, one benchmark mixture component each, grid candidates.
ProblemInstance desk3_instance() {
  const std::vector<GmmComponent> comps = benchmark_components();
  const double weights[3] = {0.25, 0.25, 0.5};
  ProblemInstance inst;
  for (std::size_t s = 0; s < 3; ++s) {
    GmmComponent one = comps[s];
    one.weight = 1.0;
    GmmSpec spec;
    spec.dim = 2;
    spec.components = {one};
    Client c;
    c.weight = weights[s];
    c.cloud = sample_gmm(spec, 120, child_seed(2026, s));
    inst.clients.push_back(std::move(c));
  }
  inst.candidates = make_candidates(CandidateMode::grid, 64, 2, 4.0, 0);
  inst.support_size = 16;
  inst.order = 2.0;
  return validate_instance(std::move(inst));
}

// Full federated run over a real TCP loopback socket; clients run on threads.
CoordinatorOutcome run_over_tcp(const ProblemInstance& inst,
                                const CostProfile& prof,
                                const DualHyper& hyper, RoundLogWriter* log) {
  FedConfig cfg;
  cfg.hyper = hyper;
  cfg.n_clients = static_cast<int>(inst.n_clients());
  cfg.k = static_cast<int>(inst.n_candidates());
  cfg.m = inst.support_size;
  cfg.timeout = std::chrono::milliseconds(30000);

  TcpListener listener("127.0.0.1:0");
  const std::string addr = "127.0.0.1:" + std::to_string(listener.port());
  std::vector<std::thread> clients;
  for (std::size_t s = 0; s < inst.n_clients(); ++s)
    clients.emplace_back([&, s] {
      try {
        run_client_tcp(addr, prof.client_cost[s], inst.w(s),
                       static_cast<int>(s), cfg);
      } catch (...) {
      }
    });
  std::vector<std::unique_ptr<Conn>> owned;
  for (std::size_t s = 0; s < inst.n_clients(); ++s)
    owned.push_back(listener.accept(cfg.timeout));
  std::vector<Conn*> conns;
  for (auto& c : owned) conns.push_back(c.get());
  CoordinatorOutcome out;
  std::exception_ptr err;
  try {
    out = coordinate(conns, cfg, log);
  } catch (...) {
    err = std::current_exception();
  }
  for (auto& t : clients) t.join();
  if (err) std::rethrow_exception(err);
  return out;
}

// Desk-scale benchmark shared by criteria 7 and 8: five weighted clients of
// 500 particles, 1000 normal(0,5) candidates, M = 250, solved once over TCP
// with a round log, then the two regularized baselines on the same instance.
struct DeskRun {
  ProblemInstance inst;
  CostProfile prof;
  DualHyper hyper;
  SolveResult dual;
  BaselineResult b01, b05;
  std::string log_path;
  double build_seconds = 0.0;
};

// Threshold on the round-0 report totals that admits exactly M candidates.
// Starting the cardinality multiplier there removes the huge initial
// count-mismatch kick (|g0| = M at a cold start), which otherwise sends the
// momentum iterate on a long excursion before any productive ascent.
double count_matching_theta0(const ProblemInstance& inst,
                             const CostProfile& prof) {
  const std::size_t K = inst.candidates.size();
  std::vector<double> totals(K, 0.0);
  for (std::size_t s = 0; s < inst.clients.size(); ++s) {
    const double w = inst.w(s);
    const Matrix& c = prof.client_cost[s];
    for (std::size_t k = 0; k < K; ++k) {
      double mind = c(0, k);
      for (std::size_t i = 1; i < c.rows; ++i) mind = std::min(mind, c(i, k));
      totals[k] -= w * mind;
    }
  }
  std::sort(totals.begin(), totals.end(), std::greater<double>());
  const auto m = static_cast<std::size_t>(inst.support_size);
  return 0.5 * (totals[m - 1] + totals[m]);
}

const DeskRun& desk_run() {
  static const DeskRun run = [] {
    DeskRun d;
    const auto t0 = std::chrono::steady_clock::now();
    d.inst = benchmark_preset(
        {0.7, 0.1, 0.05, 0.05, 0.1}, 500, 42,
        make_candidates(CandidateMode::normal, 1000, 2, 5.0,
                        child_seed(42, kCandidateSeedTag)),
        250);
    d.prof = build_cost_profile(d.inst);
    d.hyper.seed = 42;
    // The default step scale overshoots on this instance: report totals are
    // spaced ~1e-3 apart while the count subgradient is O(hundreds), so
    // alpha0 = 1 slams the selection between empty and full.  0.003 with the
    // count-matched start ascends monotonically; the tight epsilon keeps the
    // rule from firing at momentum turning points during the climb.
    d.hyper.alpha0 = 0.003;
    d.hyper.epsilon = 1e-7;
    d.hyper.theta0_init = count_matching_theta0(d.inst, d.prof);
    d.log_path = (std::filesystem::temp_directory_path() /
                  "fedbary_acceptance_desk_roundlog.jsonl")
                     .string();
    {
      RoundLogWriter log(d.log_path);
      log.meta(nlohmann::json{{"k", 1000}, {"n_clients", 5}});
      const CoordinatorOutcome out =
          run_over_tcp(d.inst, d.prof, d.hyper, &log);
      SolveResult r;
      r.trace = out.trace;
      r.gammas = out.gammas;
      r.theta0_final = out.theta0_final;
      r.best_dual = out.best_dual;
      r.best_round = out.best_round;
      r.converged = out.converged;
      r.rounds = out.rounds;
      attach_recovery(d.inst, d.prof, d.hyper, r);
      d.dual = std::move(r);
    }
    std::vector<Point> init;
    {
      Rng pick(child_seed(42, 1));
      for (int k : pick.sample_indices(1000, 250))
        init.push_back(d.inst.candidates.points[static_cast<std::size_t>(k)]);
    }
    FreeSupportConfig bcfg;
    // Both runs stop by their own support-movement rule well before this cap
    // (248 and 337 sweeps); the cap only bounds the build if that changes.
    bcfg.maxiter = 400;
    bcfg.seed = 42;
    bcfg.sinkhorn.reg = 0.1;
    d.b01 = free_support_barycenter(d.inst, init, bcfg);
    bcfg.sinkhorn.reg = 0.5;
    d.b05 = free_support_barycenter(d.inst, init, bcfg);
    d.build_seconds = seconds_since(t0);
    return d;
  }();
  return run;
}

}  // namespace

CATCH_REGISTER_LISTENER(CriterionReporter)

TEST_CASE("criterion 1: hand-checked fixtures", "[c1]") {
  // Pair cloud, M = 2: at theta = 0, theta0 = -1/4 the dual value and every
  // subgradient component are exactly zero, and exhaustive search selects
  // the two particle locations at objective zero.
  {
    const auto t0 = std::chrono::steady_clock::now();
    const ProblemInstance inst = testfix::pair_cloud(2);
    const CostProfile prof = build_cost_profile(inst);
    const std::vector<std::vector<double>> theta{{0.0, 0.0}};
    const auto reports = testoracle::dense_reports(inst, prof, theta);
    const auto all = testoracle::all_indices(3);
    REQUIRE(dual_value(reports, -0.25, 2, 3) == 0.0);
    const auto gamma = select_support(reports, -0.25, all, 3);
    REQUIRE(gamma == std::vector<std::uint8_t>{1, 0, 1});
    REQUIRE(global_subgradient(gamma, 2, all, 3) == 0.0);
    Rng tie(child_seed(1, 0));
    const auto istar = local_couplings(transpose(prof.client_cost[0]),
                                       inst.w(0), theta[0], gamma, tie);
    REQUIRE(istar == std::vector<int>{0, -1, 1});
    const auto g = local_subgradient(istar, gamma, 2, all, 3);
    REQUIRE(g[0] == 0.0);
    REQUIRE(g[1] == 0.0);
    const BruteForceResult brute = brute_force_selection(inst, prof);
    REQUIRE(brute.selection == std::vector<int>{0, 2});
    REQUIRE(brute.value == 0.0);
    REQUIRE(seconds_since(t0) < 1.0);
  }
  // Two singletons, M = 1: ascent from theta0 = 0 climbs onto the dual
  // plateau at exactly 1, stops there, and recovery returns the midpoint
  // candidate with exact objective 1.
  {
    const auto t0 = std::chrono::steady_clock::now();
    const ProblemInstance inst = testfix::two_singletons();
    const CostProfile prof = build_cost_profile(inst);
    DualHyper hyper;
    hyper.seed = 1;
    const SolveResult r = run_dual(inst, prof, hyper);
    REQUIRE(r.converged);
    REQUIRE_THAT(r.best_dual, WithinAbs(1.0, 1e-3));
    REQUIRE(r.support == std::vector<int>{1});
    REQUIRE(r.objective == 1.0);
    REQUIRE(seconds_since(t0) < 1.0);
  }
  // Pair cloud, M = 1: primal optimum is the midpoint at exactly 1, the
  // dual tops out at 0, and the unit gap is genuine and recorded.
  {
    const auto t0 = std::chrono::steady_clock::now();
    const ProblemInstance inst = testfix::pair_cloud(1);
    const CostProfile prof = build_cost_profile(inst);
    const BruteForceResult brute = brute_force_selection(inst, prof);
    REQUIRE(brute.selection == std::vector<int>{1});
    REQUIRE(brute.value == 1.0);
    DualHyper hyper;
    hyper.seed = 1;
    hyper.max_rounds = 300;
    const SolveResult r = run_dual(inst, prof, hyper);
    REQUIRE(r.best_dual <= 1.0 + 1e-9);
    REQUIRE(r.best_dual <= 1e-9);
    const double gap = brute.value - r.best_dual;
    INFO("duality gap " << gap);
    REQUIRE(gap >= 1.0 - 1e-9);
    REQUIRE_FALSE(r.converged);
    REQUIRE(seconds_since(t0) < 1.0);
  }
}

TEST_CASE("criterion 2: weak duality on random tiny instances", "[c2]") {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(41);
  for (int t = 0; t < 200; ++t) {
    const ProblemInstance inst = testfix::random_tiny(rng);
    const CostProfile prof = build_cost_profile(inst);
    const BruteForceResult brute = brute_force_selection(inst, prof);
    const std::size_t K = inst.n_candidates();
    for (int q = 0; q < 50; ++q) {
      const auto theta = testfix::random_theta(inst, rng);
      const double theta0 = 4.0 * rng.uniform() - 2.0;
      const double L =
          dual_value(testoracle::dense_reports(inst, prof, theta), theta0,
                     inst.support_size, K);
      REQUIRE(L <= brute.value + 1e-9);
    }
  }
  REQUIRE(seconds_since(t0) < 30.0);
}

TEST_CASE("criterion 3: supergradient inequality", "[c3]") {
  Rng rng(53);
  Rng tie(child_seed(53, 7));
  int pairs = 0;
  for (int t = 0; t < 20; ++t) {
    const ProblemInstance inst = testfix::random_tiny(rng);
    const CostProfile prof = build_cost_profile(inst);
    const std::size_t K = inst.n_candidates();
    const auto all = testoracle::all_indices(K);
    for (int q = 0; q < 5; ++q) {
      const auto theta = testfix::random_theta(inst, rng);
      const double theta0 = 4.0 * rng.uniform() - 2.0;
      const auto theta2 = testfix::random_theta(inst, rng);
      const double theta02 = 4.0 * rng.uniform() - 2.0;
      const auto reports = testoracle::dense_reports(inst, prof, theta);
      const double L = dual_value(reports, theta0, inst.support_size, K);
      const auto gamma = select_support(reports, theta0, all, K);
      double inner = global_subgradient(gamma, inst.support_size, all, K) *
                     (theta02 - theta0);
      for (std::size_t s = 0; s < inst.n_clients(); ++s) {
        const auto istar = local_couplings(transpose(prof.client_cost[s]),
                                           inst.w(s), theta[s], gamma, tie);
        const auto g =
            local_subgradient(istar, gamma, theta[s].size(), all, K);
        for (std::size_t i = 0; i < g.size(); ++i)
          inner += g[i] * (theta2[s][i] - theta[s][i]);
      }
      const double L2 = dual_value(testoracle::dense_reports(inst, prof, theta2),
                                   theta02, inst.support_size, K);
      REQUIRE(L2 <= L + inner + 1e-9);
      ++pairs;
    }
  }
  REQUIRE(pairs == 100);
}

TEST_CASE("criterion 4: closed form matches exhaustive Lagrangian", "[c4]") {
  Rng rng(67);
  for (int t = 0; t < 50; ++t) {
    const ProblemInstance inst = testfix::random_tiny(rng);
    const CostProfile prof = build_cost_profile(inst);
    const auto theta = testfix::random_theta(inst, rng);
    const double theta0 = 4.0 * rng.uniform() - 2.0;
    const double L =
        dual_value(testoracle::dense_reports(inst, prof, theta), theta0,
                   inst.support_size, inst.n_candidates());
    const double enumerated =
        testoracle::lagrangian_enumeration(inst, prof, theta0, theta);
    REQUIRE_THAT(L, WithinAbs(enumerated, 1e-12));
  }
}

TEST_CASE("criterion 5: stochastic subgradients average to deterministic",
          "[c5]") {
  Rng rng(31);
  testfix::TinyOptions opt;
  opt.min_candidates = 6;
  opt.max_candidates = 6;
  const ProblemInstance inst = testfix::random_tiny(rng, opt);
  const std::size_t K = inst.n_candidates();
  REQUIRE(K == 6);
  const CostProfile prof = build_cost_profile(inst);
  const auto theta = testfix::random_theta(inst, rng);
  const auto reports = testoracle::dense_reports(inst, prof, theta);
  const auto all = testoracle::all_indices(K);

  // Threshold between the 3rd and 4th largest column totals, so exactly
  // three candidates are selected and no total sits on the boundary.
  std::vector<double> totals(K, 0.0);
  for (const ClientReport& r : reports)
    for (std::size_t k = 0; k < K; ++k) totals[k] += r.t[k];
  std::vector<double> sorted = totals;
  std::sort(sorted.begin(), sorted.end());
  REQUIRE(sorted[2] < sorted[3]);
  const double theta0 = 0.5 * (sorted[2] + sorted[3]);

  const auto gamma = select_support(reports, theta0, all, K);
  long count = 0;
  for (std::uint8_t g : gamma) count += g;
  REQUIRE(count == 3);
  const int M = inst.support_size;
  const double g0_full = global_subgradient(gamma, M, all, K);

  Rng tie(child_seed(31, 9));
  std::vector<std::vector<int>> istar;
  std::vector<std::vector<double>> g_full;
  for (std::size_t s = 0; s < inst.n_clients(); ++s) {
    istar.push_back(local_couplings(transpose(prof.client_cost[s]), inst.w(s),
                                    theta[s], gamma, tie));
    g_full.push_back(
        local_subgradient(istar[s], gamma, theta[s].size(), all, K));
  }

  double g0_acc = 0.0;
  std::vector<std::vector<double>> g_acc;
  for (const auto& g : g_full) g_acc.emplace_back(g.size(), 0.0);
  int batches = 0;
  for (int a = 0; a < 6; ++a)
    for (int b = a + 1; b < 6; ++b) {
      const std::vector<int> batch{a, b};
      const auto gb = select_support(reports, theta0, batch, K, &gamma);
      REQUIRE(gb == gamma);
      g0_acc += global_subgradient(gb, M, batch, K);
      for (std::size_t s = 0; s < inst.n_clients(); ++s) {
        const auto gs =
            local_subgradient(istar[s], gb, theta[s].size(), batch, K);
        for (std::size_t i = 0; i < gs.size(); ++i) g_acc[s][i] += gs[i];
      }
      ++batches;
    }
  REQUIRE(batches == 15);
  REQUIRE_THAT(g0_acc / 15.0, WithinAbs(g0_full, 1e-12));
  for (std::size_t s = 0; s < g_acc.size(); ++s)
    for (std::size_t i = 0; i < g_acc[s].size(); ++i)
      REQUIRE_THAT(g_acc[s][i] / 15.0, WithinAbs(g_full[s][i], 1e-12));
}

TEST_CASE("criterion 6: exact transport matches the 1-D rearrangement",
          "[c6]") {
  Rng rng(87);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.below(6));
    const std::size_t m = 1 + static_cast<std::size_t>(rng.below(6));
    std::vector<double> xs(n), ys(m), wa(n), wb(m);
    for (double& x : xs) x = 10.0 * rng.uniform() - 5.0;
    for (double& y : ys) y = 10.0 * rng.uniform() - 5.0;
    auto masses = [&](std::vector<double>& w) {
      double tot = 0.0;
      for (double& v : w) {
        v = static_cast<double>(1 + rng.below(15));
        tot += v;
      }
      for (double& v : w) v /= tot;
    };
    masses(wa);
    masses(wb);
    const double p = (t % 3 == 0) ? 1.0 : (t % 3 == 1) ? 2.0 : 3.0;
    std::vector<Point> xp, yp;
    for (double x : xs) xp.push_back({x});
    for (double y : ys) yp.push_back({y});
    const TransportPlan plan = exact_transport(wa, wb, pairwise_cost(xp, yp, p));
    const double sweep = testoracle::monotone_1d_value(xs, wa, ys, wb, p);
    REQUIRE_THAT(plan.value, WithinAbs(sweep, 1e-9));
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < m; ++j) row += plan.plan(i, j);
      REQUIRE_THAT(row, WithinAbs(wa[i], 1e-9));
    }
    for (std::size_t j = 0; j < m; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < n; ++i) col += plan.plan(i, j);
      REQUIRE_THAT(col, WithinAbs(wb[j], 1e-9));
    }
  }
}

TEST_CASE("criterion 7: desk-scale benchmark against the regularized baseline",
          "[c7]") {
  const DeskRun& d = desk_run();
  INFO("build took " << d.build_seconds << " s, " << d.dual.rounds
                     << " rounds, dual objective " << d.dual.objective
                     << ", baseline reg 0.1 " << d.b01.objective
                     << " in " << d.b01.iterations << " sweeps, reg 0.5 "
                     << d.b05.objective);
  REQUIRE(d.dual.converged);
  REQUIRE(d.dual.trace.back().support_size >= 225);
  REQUIRE(d.dual.trace.back().support_size <= 275);
  REQUIRE(d.dual.support.size() == 250);

  REQUIRE(d.b01.objective > 0.0);
  REQUIRE(std::abs(d.dual.objective - d.b01.objective) <=
          0.05 * d.b01.objective);
  REQUIRE(d.b05.objective > d.b01.objective);

  double mean_round_ms = 0.0;
  for (const RoundTrace& row : d.dual.trace) mean_round_ms += row.wall_ms;
  mean_round_ms /= static_cast<double>(d.dual.trace.size());
  INFO("per round " << mean_round_ms << " ms vs baseline per sweep "
                    << d.b01.per_iter_ms << " ms");
  REQUIRE(d.b01.per_iter_ms >= 5.0 * mean_round_ms);

  REQUIRE(d.build_seconds < 900.0);
}

TEST_CASE("criterion 8: round log passes the privacy audit", "[c8]") {
  const DeskRun& d = desk_run();
  const AuditReport rep = privacy_audit_file(d.log_path, 1000);
  INFO(rep.message);
  REQUIRE(rep.pass);
  REQUIRE(rep.k == 1000);
  REQUIRE(rep.max_upstream_reals == 1000);
  REQUIRE(rep.upstream_records == 5 + 5 * d.dual.rounds);
  REQUIRE(rep.max_upstream_bytes >= 2000);
  REQUIRE(rep.max_upstream_bytes <= 32000);

  // A single leaked field must be caught at its exact record index.
  const std::string tampered = d.log_path + ".tampered";
  {
    std::ifstream in(d.log_path, std::ios::binary);
    std::ofstream out(tampered, std::ios::binary);
    out << in.rdbuf();
    out << "{\"dir\":\"up\",\"round\":0,\"bytes\":64,\"msg\":{\"type\":"
           "\"report\",\"round\":0,\"client_id\":0,\"t\":[0,0],\"particles\":"
           "[1.5,-2.5]}}\n";
  }
  const AuditReport bad = privacy_audit_file(tampered, 1000);
  REQUIRE_FALSE(bad.pass);
  REQUIRE(bad.violation_index == rep.records);
  REQUIRE(bad.message.find("particles") != std::string::npos);
}

TEST_CASE("criterion 9: seed determinism and transport independence", "[c9]") {
  const ProblemInstance desk = desk3_instance();
  const CostProfile desk_prof = build_cost_profile(desk);

  // Same seed, same trace, down to the bit, on the stochastic path.
  {
    DualHyper hyper;
    hyper.seed = 11;
    hyper.batch = 16;
    hyper.max_rounds = 120;
    const SolveResult a = run_dual(desk, desk_prof, hyper);
    const SolveResult b = run_dual(desk, desk_prof, hyper);
    REQUIRE(a.rounds == b.rounds);
    REQUIRE(a.converged == b.converged);
    REQUIRE(a.gammas == b.gammas);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t j = 0; j < a.trace.size(); ++j) {
      REQUIRE(a.trace[j].iter == b.trace[j].iter);
      REQUIRE(same_bits(a.trace[j].dual_value, b.trace[j].dual_value));
      REQUIRE(a.trace[j].support_size == b.trace[j].support_size);
      REQUIRE(same_bits(a.trace[j].step_size, b.trace[j].step_size));
      REQUIRE(same_bits(a.trace[j].theta0, b.trace[j].theta0));
    }
    REQUIRE(same_bits(a.best_dual, b.best_dual));
    REQUIRE(same_bits(a.objective, b.objective));
    REQUIRE(a.support == b.support);
  }

  // Pipes and sockets must drive the identical round sequence.
  auto require_same_rounds = [](const ProblemInstance& inst,
                                const CostProfile& prof,
                                const DualHyper& hyper) {
    const SolveResult inproc = run_federated_inprocess(inst, prof, hyper);
    const CoordinatorOutcome tcp = run_over_tcp(inst, prof, hyper, nullptr);
    REQUIRE(inproc.rounds == tcp.rounds);
    REQUIRE(inproc.converged == tcp.converged);
    REQUIRE(inproc.gammas == tcp.gammas);
    REQUIRE(inproc.trace.size() == tcp.trace.size());
    for (std::size_t j = 0; j < tcp.trace.size(); ++j) {
      REQUIRE(same_bits(inproc.trace[j].theta0, tcp.trace[j].theta0));
      REQUIRE(same_bits(inproc.trace[j].dual_value, tcp.trace[j].dual_value));
    }
    REQUIRE(same_bits(inproc.theta0_final, tcp.theta0_final));
  };

  {
    const ProblemInstance t3 = testfix::two_singletons();
    const CostProfile prof = build_cost_profile(t3);
    DualHyper hyper;
    hyper.seed = 3;
    require_same_rounds(t3, prof, hyper);
  }
  {
    DualHyper hyper;
    hyper.seed = 11;
    hyper.batch = 16;
    hyper.max_rounds = 60;
    hyper.epsilon = 1e-9;
    require_same_rounds(desk, desk_prof, hyper);
  }
}

TEST_CASE("criterion 10: constant shifts cancel out of reports", "[c10]") {
  Rng rng(77);
  Rng tie(child_seed(77, 5));
  for (int t = 0; t < 20; ++t) {
    const ProblemInstance inst = testfix::dyadic_tiny(rng);
    const std::size_t K = inst.n_candidates();
    const CostProfile prof = build_cost_profile(inst);
    const auto theta = testfix::dyadic_theta(inst, rng);
    const double theta0 =
        static_cast<double>(rng.below(129) - 64) / 16.0;
    const auto all = testoracle::all_indices(K);
    const auto reports = testoracle::dense_reports(inst, prof, theta);
    const auto gamma = select_support(reports, theta0, all, K);
    for (std::size_t s = 0; s < inst.n_clients(); ++s) {
      for (const double c : {-5.0, 1.0, 100.0}) {
        auto shifted = theta;
        for (double& v : shifted[s]) v += c;
        const auto reports2 = testoracle::dense_reports(inst, prof, shifted);
        for (std::size_t k = 0; k < K; ++k)
          REQUIRE(same_bits(reports2[s].t[k], reports[s].t[k]));
        const auto gamma2 = select_support(reports2, theta0, all, K);
        REQUIRE(gamma2 == gamma);
      }
    }
  }
}
