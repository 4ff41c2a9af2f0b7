#pragma once

// Instance file format (JSON) and content hashing.
//
//   {
//     "version": 1,
//     "p": 2.0,
//     "M": 250,
//     "candidates": [[x, y], ...],
//     "clients": [{"weight": 0.2, "particles": [[x, y], ...]}, ...],
//     "meta": {...}            // optional, ignored by the solvers
//   }
//
// The identity hash covers the canonical dump of the core fields only
// (version, p, M, candidates, clients), so editing "meta" or whitespace never
// changes an instance's identity.  Output files record this hash and
// `compare` refuses to mix files with different hashes.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "fedbary/error.hpp"
#include "fedbary/measures.hpp"

namespace fedbary {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string to_hex16(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

namespace detail {

inline nlohmann::json points_to_json(const std::vector<Point>& pts) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Point& p : pts) arr.push_back(p);
  return arr;
}

inline std::vector<Point> points_from_json(const nlohmann::json& arr,
                                           const char* what) {
  if (!arr.is_array())
    throw ValidationError(std::string(what) + " must be an array of points");
  std::vector<Point> pts;
  pts.reserve(arr.size());
  for (const auto& row : arr) {
    if (!row.is_array())
      throw ValidationError(std::string(what) + " entries must be arrays");
    Point p;
    p.reserve(row.size());
    for (const auto& v : row) {
      if (!v.is_number())
        throw ValidationError(std::string(what) + " coordinates must be numbers");
      p.push_back(v.get<double>());
    }
    pts.push_back(std::move(p));
  }
  return pts;
}

// Core fields only, keys in nlohmann's sorted order.  This is the hashing
// preimage; keep it stable.
inline nlohmann::json core_json(const ProblemInstance& inst) {
  nlohmann::json j;
  j["version"] = 1;
  j["p"] = inst.order;
  j["M"] = inst.support_size;
  j["candidates"] = points_to_json(inst.candidates.points);
  nlohmann::json clients = nlohmann::json::array();
  for (const Client& c : inst.clients) {
    nlohmann::json jc;
    jc["weight"] = c.weight;
    jc["particles"] = points_to_json(c.cloud.points);
    clients.push_back(std::move(jc));
  }
  j["clients"] = std::move(clients);
  return j;
}

}  // namespace detail

inline std::string instance_hash(const ProblemInstance& inst) {
  return to_hex16(fnv1a64(detail::core_json(inst).dump()));
}

inline ProblemInstance parse_instance(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("instance file is not a JSON object");
  if (!j.contains("version") || !j["version"].is_number_integer() ||
      j["version"].get<int>() != 1)
    throw ValidationError("instance file version must be 1");
  for (const char* key : {"p", "M", "candidates", "clients"})
    if (!j.contains(key))
      throw ValidationError(std::string("instance file missing field '") + key +
                            "'");
  ProblemInstance inst;
  if (!j["p"].is_number()) throw ValidationError("field 'p' must be a number");
  inst.order = j["p"].get<double>();
  if (!j["M"].is_number_integer())
    throw ValidationError("field 'M' must be an integer");
  inst.support_size = j["M"].get<int>();
  inst.candidates =
      make_candidate_set(detail::points_from_json(j["candidates"], "candidates"));
  if (!j["clients"].is_array() || j["clients"].empty())
    throw ValidationError("field 'clients' must be a non-empty array");
  for (const auto& jc : j["clients"]) {
    if (!jc.is_object() || !jc.contains("weight") || !jc.contains("particles"))
      throw ValidationError("each client needs 'weight' and 'particles'");
    if (!jc["weight"].is_number())
      throw ValidationError("client weight must be a number");
    Client c;
    c.weight = jc["weight"].get<double>();
    c.cloud = make_cloud(detail::points_from_json(jc["particles"], "particles"));
    inst.clients.push_back(std::move(c));
  }
  return validate_instance(std::move(inst));
}

inline ProblemInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open instance file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("instance file is not valid JSON: " +
                          std::string(e.what()));
  }
  return parse_instance(j);
}

// meta: free-form provenance block (generator settings, seed, rng id).
inline void save_instance(const ProblemInstance& inst, const std::string& path,
                          const nlohmann::json& meta = nlohmann::json()) {
  nlohmann::json j = detail::core_json(inst);
  if (!meta.is_null()) j["meta"] = meta;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write instance file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace fedbary
