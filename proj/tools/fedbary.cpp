// Operator surface: generate benchmark instances, run the dual solver in any
// federation role, run the regularized baseline, compare results, query the
// exact oracles, and audit round logs.
//
// Exit codes: 0 success/converged, 2 iteration cap, 3 input error,
// 4 protocol or numeric-solver error.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedbary/bregman.hpp"
#include "fedbary/datagen.hpp"
#include "fedbary/dual.hpp"
#include "fedbary/federation.hpp"
#include "fedbary/instance_io.hpp"
#include "fedbary/measures.hpp"
#include "fedbary/rng.hpp"
#include "fedbary/transport.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fedbary;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIterationCap = 2;
constexpr int kExitInputError = 3;
constexpr int kExitProtocolError = 4;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_label(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::uint64_t env_seed_default() {
  const char* s = std::getenv("FEDBARY_SEED");
  if (!s || !*s) return 0;
  char* end = nullptr;
  const std::uint64_t v = std::strtoull(s, &end, 10);
  if (end == s || *end != '\0')
    throw ValidationError(std::string("FEDBARY_SEED is not an integer: ") + s);
  return v;
}

std::string env_listen_default() {
  const char* s = std::getenv("FEDBARY_LISTEN");
  return s ? std::string(s) : std::string();
}

std::vector<double> parse_reals(const std::string& csv, const char* what) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ValidationError(std::string("bad ") + what + " entry '" + tok +
                            "' in '" + csv + "'");
    }
  }
  if (out.empty())
    throw ValidationError(std::string(what) + " list is empty: '" + csv + "'");
  return out;
}

std::vector<int> parse_ints(const std::string& csv, const char* what) {
  std::vector<int> out;
  for (double v : parse_reals(csv, what)) {
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
      throw ValidationError(std::string(what) + " entries must be integers: '" +
                            csv + "'");
    out.push_back(i);
  }
  return out;
}

struct CandidateSpec {
  CandidateMode mode = CandidateMode::grid;
  std::size_t k = 0;
  double scale = 1.0;
};

// "mode:K" or "mode:K:scale", e.g. normal:1000:5 or grid:25:4.
CandidateSpec parse_candidate_spec(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ':')) parts.push_back(tok);
  if (parts.size() < 2 || parts.size() > 3)
    throw ValidationError("candidate spec must be mode:K[:scale], got '" + s +
                          "'");
  CandidateSpec spec;
  spec.mode = parse_candidate_mode(parts[0]);
  try {
    spec.k = static_cast<std::size_t>(std::stoul(parts[1]));
    if (parts.size() == 3) spec.scale = std::stod(parts[2]);
  } catch (const std::exception&) {
    throw ValidationError("bad number in candidate spec '" + s + "'");
  }
  return spec;
}

json hyper_json(const DualHyper& h) {
  return json{{"epsilon", h.epsilon},
              {"epsilon_relative", h.epsilon_relative},
              {"alpha0", h.alpha0},
              {"kappa1", h.kappa1},
              {"kappa2", h.kappa2},
              {"max_rounds", h.max_rounds},
              {"batch", h.batch},
              {"window", h.window},
              {"support_band", h.support_band},
              {"sample_recovery", h.sample_recovery},
              {"theta0_init", h.theta0_init},
              {"seed", h.seed}};
}

void write_dual_trace(const std::string& path,
                      const std::vector<RoundTrace>& trace) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write trace file: " + path);
  out << "iter,dual_value,support_size,step_size,theta0,wall_ms\n";
  for (const RoundTrace& r : trace)
    out << r.iter << ',' << fmt17(r.dual_value) << ',' << r.support_size << ','
        << fmt17(r.step_size) << ',' << fmt17(r.theta0) << ','
        << fmt17(r.wall_ms) << '\n';
}

void write_barycenter(const std::string& path, const ProblemInstance& inst,
                      const SolveResult& r, const DualHyper& hyper,
                      const std::string& role) {
  json support = json::array();
  for (int k : r.support)
    support.push_back(inst.candidates.points[static_cast<std::size_t>(k)]);
  double mean_ms = 0.0;
  for (const RoundTrace& row : r.trace) mean_ms += row.wall_ms;
  mean_ms /= static_cast<double>(std::max<std::size_t>(1, r.trace.size()));
  json j{{"support", std::move(support)},
         {"gamma_bar", r.gamma_bar},
         {"objective", r.objective},
         {"support_indices", r.support},
         {"converged", r.converged},
         {"rounds", r.rounds},
         {"best_dual", r.best_dual},
         {"best_round", r.best_round},
         {"theta0_final", r.theta0_final},
         {"total_time_s", r.wall_ms_total / 1000.0},
         {"time_per_iter_ms", mean_ms},
         {"method", "dual"},
         {"role", role},
         {"instance_hash", instance_hash(inst)},
         {"config", hyper_json(hyper)}};
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write barycenter file: " + path);
  out << j.dump(2) << '\n';
}

void write_points_csv(const std::string& path, const char* id_column,
                      const std::vector<std::pair<int, const Point*>>& rows,
                      std::size_t dim) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write point file: " + path);
  out << id_column;
  for (std::size_t d = 0; d < dim; ++d) out << ",d" << d;
  out << '\n';
  for (const auto& [id, p] : rows) {
    out << id;
    for (double v : *p) out << ',' << fmt17(v);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// gen

struct GenArgs {
  std::string preset = "bench5";
  std::string weights = "0.2,0.2,0.2,0.2,0.2";
  std::string candidates = "normal:1000:5";
  std::size_t n = 500;
  int m = 0;
  bool mixture_clients = false;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gen(const GenArgs& a) {
  if (a.preset != "bench5")
    throw ValidationError("unknown preset '" + a.preset +
                          "' (available: bench5)");
  const std::vector<double> weights = parse_reals(a.weights, "weight");
  const CandidateSpec spec = parse_candidate_spec(a.candidates);

  ProblemInstance inst;
  if (spec.mode == CandidateMode::pooled) {
    // Clouds must exist before pooled candidates can be drawn from them, so
    // build the preset around a placeholder set first.
    CandidateSet placeholder = make_candidates(
        CandidateMode::grid, std::max<std::size_t>(spec.k, 1), 2, 1.0, 0);
    inst = benchmark_preset(weights, a.n, a.seed, std::move(placeholder), a.m,
                            a.mixture_clients);
    std::vector<ParticleCloud> clouds;
    for (const Client& c : inst.clients) clouds.push_back(c.cloud);
    inst.candidates = make_candidates_pooled(
        clouds, spec.k, child_seed(a.seed, kCandidateSeedTag));
    inst = validate_instance(std::move(inst));
  } else {
    CandidateSet cands = make_candidates(spec.mode, spec.k, 2, spec.scale,
                                         child_seed(a.seed, kCandidateSeedTag));
    inst = benchmark_preset(weights, a.n, a.seed, std::move(cands), a.m,
                            a.mixture_clients);
  }

  json meta{{"generator", a.preset},
            {"seed", a.seed},
            {"n_per_client", a.n},
            {"weights", weights},
            {"candidates", a.candidates},
            {"mixture_clients", a.mixture_clients},
            {"rng", "mt19937_64; stream k of seed s keyed by "
                    "splitmix64(s xor (k+1)*0x9e3779b97f4a7c15); v1"}};
  save_instance(inst, a.out, meta);
  std::cout << "wrote " << a.out << ": " << inst.n_clients() << " clients x "
            << a.n << " particles, K=" << inst.n_candidates()
            << ", M=" << inst.support_size << ", hash "
            << instance_hash(inst) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// solve

struct SolveArgs {
  std::string instance;
  std::string role = "all-in-one";
  std::string listen;
  std::string connect;
  int client_id = -1;
  long timeout_ms = 30000;
  std::string outdir = ".";
  DualHyper hyper;
};

int cmd_solve(const SolveArgs& a) {
  const ProblemInstance inst = load_instance(a.instance);
  const std::size_t K = inst.n_candidates();
  const std::size_t N = inst.n_clients();

  FedConfig cfg;
  cfg.hyper = a.hyper;
  cfg.n_clients = static_cast<int>(N);
  cfg.k = static_cast<int>(K);
  cfg.m = inst.support_size;
  cfg.timeout = std::chrono::milliseconds(a.timeout_ms);

  if (a.role == "client") {
    if (a.connect.empty())
      throw ValidationError("client role needs --connect host:port");
    if (a.client_id < 0 || a.client_id >= static_cast<int>(N))
      throw ValidationError("client role needs --client-id in [0, " +
                            std::to_string(N) + ")");
    const std::size_t s = static_cast<std::size_t>(a.client_id);
    const Matrix block = pairwise_cost(inst.clients[s].cloud.points,
                                       inst.candidates.points, inst.order);
    run_client_tcp(a.connect, block, inst.w(s), a.client_id, cfg);
    std::cout << "client " << a.client_id << " finished\n";
    return kExitOk;
  }

  fs::create_directories(a.outdir);
  const std::string log_path = (fs::path(a.outdir) / "roundlog.jsonl").string();
  const std::string trace_path = (fs::path(a.outdir) / "trace.csv").string();
  const std::string bary_path =
      (fs::path(a.outdir) / "barycenter.json").string();
  const CostProfile prof = build_cost_profile(inst);

  RoundLogWriter log(log_path);
  log.meta(json{{"k", cfg.k},
                {"n_clients", cfg.n_clients},
                {"m", cfg.m},
                {"instance_hash", instance_hash(inst)}});

  SolveResult r;
  if (a.role == "all-in-one") {
    r = run_federated_inprocess(inst, prof, a.hyper, &log, cfg.timeout);
  } else if (a.role == "coordinator") {
    std::string listen = a.listen.empty() ? env_listen_default() : a.listen;
    if (listen.empty())
      throw ValidationError(
          "coordinator role needs --listen host:port or FEDBARY_LISTEN");
    std::cout << "listening on " << listen << " for " << N << " clients\n";
    const auto t0 = std::chrono::steady_clock::now();
    CoordinatorOutcome out = run_coordinator_tcp(listen, cfg, &log);
    r.trace = std::move(out.trace);
    r.gammas = std::move(out.gammas);
    r.theta0_final = out.theta0_final;
    r.best_dual = out.best_dual;
    r.best_round = out.best_round;
    r.converged = out.converged;
    r.rounds = out.rounds;
    attach_recovery(inst, prof, a.hyper, r);
    r.wall_ms_total = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
  } else {
    throw ValidationError("unknown role '" + a.role +
                          "' (all-in-one | coordinator | client)");
  }
  log.flush();

  write_dual_trace(trace_path, r.trace);
  write_barycenter(bary_path, inst, r, a.hyper, a.role);
  std::cout << (r.converged ? "converged" : "round cap reached") << " after "
            << r.rounds << " rounds: best dual " << r.best_dual
            << ", support objective " << r.objective << "; outputs in "
            << a.outdir << "\n";
  return r.converged ? kExitOk : kExitIterationCap;
}

// ---------------------------------------------------------------------------
// baseline

struct BaselineArgs {
  std::string instance;
  std::string regs = "0.05,0.1,0.5";
  int maxiter = 1000;
  double tol = 1e-4;
  int sinkhorn_maxiter = 1000;
  double sinkhorn_tol = 1e-9;
  bool scaling_mode = false;
  std::uint64_t seed = 0;
  std::string outdir = ".";
};

int cmd_baseline(const BaselineArgs& a) {
  const ProblemInstance inst = load_instance(a.instance);
  fs::create_directories(a.outdir);
  const std::vector<double> regs = parse_reals(a.regs, "regularization");
  const std::string hash = instance_hash(inst);

  // Shared deterministic start: M candidate points drawn by a dedicated
  // seed stream, so dual and baseline runs stay independently reproducible.
  std::vector<Point> init;
  {
    Rng pick(child_seed(a.seed, 1));
    for (int k : pick.sample_indices(static_cast<int>(inst.n_candidates()),
                                     inst.support_size))
      init.push_back(inst.candidates.points[static_cast<std::size_t>(k)]);
  }

  FreeSupportConfig cfg;
  cfg.maxiter = a.maxiter;
  cfg.tol = a.tol;
  cfg.seed = a.seed;
  cfg.sinkhorn.maxiter = a.sinkhorn_maxiter;
  cfg.sinkhorn.tol = a.sinkhorn_tol;
  cfg.sinkhorn.log_domain = !a.scaling_mode;

  bool all_converged = true;
  for (double reg : regs) {
    cfg.sinkhorn.reg = reg;
    const BaselineResult b = free_support_barycenter(inst, init, cfg);
    all_converged = all_converged && b.converged;
    const std::string label = fmt_label(reg);
    const std::string base =
        (fs::path(a.outdir) / ("baseline_reg" + label)).string();

    std::ofstream trace(base + "_trace.csv");
    if (!trace)
      throw ValidationError("cannot write trace file: " + base + "_trace.csv");
    trace << "iter,sweep_value,support_move,wall_ms\n";
    for (std::size_t i = 0; i < b.sweep_value.size(); ++i)
      trace << i << ',' << fmt17(b.sweep_value[i]) << ','
            << fmt17(b.sweep_move[i]) << ',' << fmt17(b.sweep_ms[i]) << '\n';

    json support = json::array();
    for (const Point& p : b.support) support.push_back(p);
    json j{{"method", "bregman"},
           {"regularization", reg},
           {"support", std::move(support)},
           {"objective", b.objective},
           {"iterations", b.iterations},
           {"converged", b.converged},
           {"total_time_s", b.total_ms / 1000.0},
           {"time_per_iter_ms", b.per_iter_ms},
           {"instance_hash", hash},
           {"config", json{{"regularization", reg},
                           {"tol", a.tol},
                           {"maxiter", a.maxiter},
                           {"sinkhorn_tol", a.sinkhorn_tol},
                           {"sinkhorn_maxiter", a.sinkhorn_maxiter},
                           {"log_domain", cfg.sinkhorn.log_domain},
                           {"seed", a.seed},
                           {"init", "candidate-sample"}}}};
    std::ofstream out(base + ".json");
    if (!out) throw ValidationError("cannot write result file: " + base + ".json");
    out << j.dump(2) << '\n';

    std::cout << "reg " << label << ": objective " << b.objective << " after "
              << b.iterations << " sweeps ("
              << (b.converged ? "converged" : "cap reached") << "), "
              << b.per_iter_ms << " ms/sweep\n";
  }
  return all_converged ? kExitOk : kExitIterationCap;
}

// ---------------------------------------------------------------------------
// compare

struct CompareArgs {
  std::string instance;
  std::string solve_file;
  std::vector<std::string> baseline_files;
  std::string outdir = ".";
};

struct CompareRow {
  std::string method;
  std::string regularization;
  bool converged = false;
  double total_time_s = 0.0;
  long iterations = 0;
  double time_per_iter_ms = 0.0;
  double exact_objective = 0.0;
};

json load_result_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open result file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("result file is not valid JSON: " + path + ": " +
                          e.what());
  }
  return j;
}

int cmd_compare(const CompareArgs& a) {
  const ProblemInstance inst = load_instance(a.instance);
  const std::string want = instance_hash(inst);
  if (a.solve_file.empty() && a.baseline_files.empty())
    throw ValidationError("nothing to compare: pass --solve and/or --baseline");

  std::vector<CompareRow> rows;
  auto ingest = [&](const std::string& path) {
    const json j = load_result_json(path);
    const std::string got = j.value("instance_hash", std::string("missing"));
    if (got != want)
      throw ValidationError("instance hash mismatch: " + path + " carries " +
                            got + " but " + a.instance + " hashes to " + want);
    CompareRow row;
    row.method = j.value("method", std::string("dual"));
    if (j.contains("regularization"))
      row.regularization = fmt_label(j["regularization"].get<double>());
    row.converged = j.value("converged", false);
    row.total_time_s = j.value("total_time_s", 0.0);
    row.iterations = j.contains("rounds") ? j["rounds"].get<long>()
                                          : j.value("iterations", 0L);
    row.time_per_iter_ms = j.value("time_per_iter_ms", 0.0);
    if (!j.contains("objective"))
      throw ValidationError("result file has no objective: " + path);
    row.exact_objective = j["objective"].get<double>();
    rows.push_back(std::move(row));
    return j;
  };

  json solve_json;
  if (!a.solve_file.empty()) solve_json = ingest(a.solve_file);
  for (const std::string& f : a.baseline_files) ingest(f);

  fs::create_directories(a.outdir);
  const std::string csv_path = (fs::path(a.outdir) / "compare.csv").string();
  {
    std::ofstream out(csv_path);
    if (!out) throw ValidationError("cannot write comparison: " + csv_path);
    out << "method,regularization,converged,total_time_s,iterations,"
           "time_per_iter_ms,exact_objective\n";
    for (const CompareRow& r : rows)
      out << r.method << ',' << r.regularization << ','
          << (r.converged ? "yes" : "no") << ',' << fmt17(r.total_time_s)
          << ',' << r.iterations << ',' << fmt17(r.time_per_iter_ms) << ','
          << fmt17(r.exact_objective) << '\n';
  }

  const std::string txt_path = (fs::path(a.outdir) / "compare.txt").string();
  {
    std::ofstream out(txt_path);
    char line[256];
    std::snprintf(line, sizeof line, "%-10s %-6s %-9s %12s %10s %14s %16s\n",
                  "method", "reg", "converged", "time_s", "iters",
                  "ms_per_iter", "objective");
    out << line;
    for (const CompareRow& r : rows) {
      std::snprintf(line, sizeof line,
                    "%-10s %-6s %-9s %12.3f %10ld %14.3f %16.6f\n",
                    r.method.c_str(),
                    r.regularization.empty() ? "-" : r.regularization.c_str(),
                    r.converged ? "yes" : "no", r.total_time_s, r.iterations,
                    r.time_per_iter_ms, r.exact_objective);
      out << line;
    }
    std::ifstream echo(txt_path);
    std::cout << echo.rdbuf();
  }

  // Plot-ready point clouds: client particles, candidates, and the selected
  // support from the solve output when present.
  {
    std::vector<std::pair<int, const Point*>> pts;
    for (std::size_t s = 0; s < inst.n_clients(); ++s)
      for (const Point& p : inst.clients[s].cloud.points)
        pts.emplace_back(static_cast<int>(s), &p);
    write_points_csv((fs::path(a.outdir) / "clients.csv").string(), "client",
                     pts, inst.dim());
  }
  {
    std::vector<std::pair<int, const Point*>> pts;
    for (std::size_t k = 0; k < inst.n_candidates(); ++k)
      pts.emplace_back(static_cast<int>(k), &inst.candidates.points[k]);
    write_points_csv((fs::path(a.outdir) / "candidates.csv").string(),
                     "candidate", pts, inst.dim());
  }
  if (!a.solve_file.empty() && solve_json.contains("support_indices")) {
    std::vector<int> sel =
        solve_json["support_indices"].get<std::vector<int>>();
    std::vector<std::pair<int, const Point*>> pts;
    for (int k : sel)
      pts.emplace_back(k, &inst.candidates.points[static_cast<std::size_t>(k)]);
    write_points_csv((fs::path(a.outdir) / "support.csv").string(),
                     "candidate", pts, inst.dim());
  }
  std::cout << "wrote " << csv_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// oracle

struct OracleArgs {
  std::string instance;
  std::string support;
  std::string pair;
  bool brute_force = false;
  double cap = 1e5;
};

int cmd_oracle(const OracleArgs& a) {
  const ProblemInstance inst = load_instance(a.instance);
  const int given = (!a.support.empty() ? 1 : 0) + (!a.pair.empty() ? 1 : 0) +
                    (a.brute_force ? 1 : 0);
  if (given != 1)
    throw ValidationError(
        "pick exactly one of --support, --brute-force, --pair");

  if (a.brute_force) {
    const BruteForceResult best = brute_force_selection(inst, a.cap);
    std::cout << "selection";
    for (int k : best.selection) std::cout << ' ' << k;
    std::cout << "\nobjective " << fmt17(best.value) << "\n";
    return kExitOk;
  }
  if (!a.support.empty()) {
    const std::vector<int> sel = parse_ints(a.support, "support index");
    for (int k : sel)
      if (k < 0 || k >= static_cast<int>(inst.n_candidates()))
        throw ValidationError("support index " + std::to_string(k) +
                              " outside [0, " +
                              std::to_string(inst.n_candidates()) + ")");
    const CostProfile prof = build_cost_profile(inst);
    std::cout << "objective " << fmt17(selection_objective(inst, prof, sel))
              << "\n";
    return kExitOk;
  }
  const std::vector<int> st = parse_ints(a.pair, "client index");
  if (st.size() != 2)
    throw ValidationError("--pair needs exactly two client indices");
  for (int s : st)
    if (s < 0 || s >= static_cast<int>(inst.n_clients()))
      throw ValidationError("client index " + std::to_string(s) +
                            " outside [0, " + std::to_string(inst.n_clients()) +
                            ")");
  const ParticleCloud& ca = inst.clients[static_cast<std::size_t>(st[0])].cloud;
  const ParticleCloud& cb = inst.clients[static_cast<std::size_t>(st[1])].cloud;
  const std::vector<double> wb(cb.size(), 1.0 / static_cast<double>(cb.size()));
  std::cout << "distance " << fmt17(wasserstein_pp(ca, cb.points, wb, inst.order))
            << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// audit

struct AuditArgs {
  std::string log;
  int k = -1;
};

int cmd_audit(const AuditArgs& a) {
  const AuditReport rep = privacy_audit_file(a.log, a.k);
  std::cout << "records " << rep.records << ", upstream " << rep.upstream_records
            << ", max upstream reals " << rep.max_upstream_reals
            << ", max upstream bytes " << rep.max_upstream_bytes << ", k "
            << rep.k << "\n";
  if (rep.pass) {
    std::cout << "audit passed\n";
    return kExitOk;
  }
  std::cout << "audit FAILED at record " << rep.violation_index << ": "
            << rep.message << "\n";
  return kExitProtocolError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variable-support barycenter toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed_default = 0;
  try {
    seed_default = env_seed_default();
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  }

  GenArgs gen;
  gen.seed = seed_default;
  CLI::App* cgen = app.add_subcommand("gen", "generate a benchmark instance");
  cgen->add_option("--preset", gen.preset, "instance family (bench5)")
      ->capture_default_str();
  cgen->add_option("--weights", gen.weights, "comma-separated client weights")
      ->capture_default_str();
  cgen->add_option("--n", gen.n, "particles per client")->capture_default_str();
  cgen->add_option("--candidates", gen.candidates,
                   "candidate spec mode:K[:scale] (grid|normal|pooled)")
      ->capture_default_str();
  cgen->add_option("--M", gen.m, "support size to select")->required();
  cgen->add_flag("--mixture-clients", gen.mixture_clients,
                 "every client samples the full mixture");
  cgen->add_option("--seed", gen.seed, "generator seed (default FEDBARY_SEED)");
  cgen->add_option("--out", gen.out, "instance file to write")->required();

  SolveArgs solve;
  solve.hyper.seed = seed_default;
  CLI::App* csolve = app.add_subcommand("solve", "run the dual solver");
  csolve->add_option("--instance", solve.instance, "instance file")->required();
  csolve->add_option("--role", solve.role,
                     "all-in-one | coordinator | client")
      ->capture_default_str();
  csolve->add_option("--listen", solve.listen,
                     "coordinator bind address (default FEDBARY_LISTEN)");
  csolve->add_option("--connect", solve.connect, "coordinator address");
  csolve->add_option("--client-id", solve.client_id, "client index");
  csolve->add_option("--timeout-ms", solve.timeout_ms, "per-message timeout")
      ->capture_default_str();
  csolve->add_option("--out", solve.outdir, "output directory")
      ->capture_default_str();
  csolve->add_option("--epsilon", solve.hyper.epsilon,
                     "relative stopping tolerance")
      ->capture_default_str();
  csolve->add_option("--alpha0", solve.hyper.alpha0, "base step size")
      ->capture_default_str();
  csolve->add_option("--kappa1", solve.hyper.kappa1, "momentum, global")
      ->capture_default_str();
  csolve->add_option("--kappa2", solve.hyper.kappa2, "momentum, clients")
      ->capture_default_str();
  csolve->add_option("--maxiter", solve.hyper.max_rounds, "round cap")
      ->capture_default_str();
  csolve->add_option("--batch", solve.hyper.batch,
                     "candidates scored per round (0 = all)")
      ->capture_default_str();
  csolve->add_option("--window", solve.hyper.window, "recovery window")
      ->capture_default_str();
  csolve->add_option("--band", solve.hyper.support_band,
                     "accepted |support - M| / M at stopping")
      ->capture_default_str();
  csolve->add_option("--theta0", solve.hyper.theta0_init,
                     "initial cardinality multiplier")
      ->capture_default_str();
  csolve->add_flag("--sample-recovery", solve.hyper.sample_recovery,
                   "sample the recovered support instead of top-M");
  csolve->add_option("--seed", solve.hyper.seed,
                     "run seed (default FEDBARY_SEED)");

  BaselineArgs baseline;
  baseline.seed = seed_default;
  CLI::App* cbase =
      app.add_subcommand("baseline", "run the regularized fixed-point solver");
  cbase->add_option("--instance", baseline.instance, "instance file")
      ->required();
  cbase->add_option("--reg", baseline.regs,
                    "comma-separated regularization grid")
      ->capture_default_str();
  cbase->add_option("--maxiter", baseline.maxiter, "sweep cap")
      ->capture_default_str();
  cbase->add_option("--tol", baseline.tol, "relative movement tolerance")
      ->capture_default_str();
  cbase->add_option("--sinkhorn-maxiter", baseline.sinkhorn_maxiter,
                    "inner iteration cap")
      ->capture_default_str();
  cbase->add_option("--sinkhorn-tol", baseline.sinkhorn_tol,
                    "inner marginal tolerance")
      ->capture_default_str();
  cbase->add_flag("--scaling-mode", baseline.scaling_mode,
                  "plain scaling updates instead of log-domain");
  cbase->add_option("--seed", baseline.seed, "run seed (default FEDBARY_SEED)");
  cbase->add_option("--out", baseline.outdir, "output directory")
      ->capture_default_str();

  CompareArgs compare;
  CLI::App* ccomp =
      app.add_subcommand("compare", "tabulate solver and baseline results");
  ccomp->add_option("--instance", compare.instance, "instance file")
      ->required();
  ccomp->add_option("--solve", compare.solve_file, "barycenter.json to include");
  ccomp->add_option("--baseline", compare.baseline_files,
                    "baseline result files to include");
  ccomp->add_option("--out", compare.outdir, "output directory")
      ->capture_default_str();

  OracleArgs oracle;
  CLI::App* corc = app.add_subcommand("oracle", "exact transport queries");
  corc->add_option("--instance", oracle.instance, "instance file")->required();
  corc->add_option("--support", oracle.support,
                   "candidate indices to evaluate, comma-separated");
  corc->add_flag("--brute-force", oracle.brute_force,
                 "exhaustive optimum over all M-subsets");
  corc->add_option("--pair", oracle.pair,
                   "two client indices for a pairwise distance");
  corc->add_option("--cap", oracle.cap, "subset-count guard")
      ->capture_default_str();

  AuditArgs audit;
  CLI::App* caud = app.add_subcommand("audit", "check a round log");
  caud->add_option("--log", audit.log, "round log (JSON lines)")->required();
  caud->add_option("--k", audit.k, "expected candidate count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (cgen->parsed()) return cmd_gen(gen);
    if (csolve->parsed()) return cmd_solve(solve);
    if (cbase->parsed()) return cmd_baseline(baseline);
    if (ccomp->parsed()) return cmd_compare(compare);
    if (corc->parsed()) return cmd_oracle(oracle);
    if (caud->parsed()) return cmd_audit(audit);
  } catch (const ProtocolError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitProtocolError;
  } catch (const SolverError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitProtocolError;
  } catch (const BudgetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  }
  return kExitOk;
}
