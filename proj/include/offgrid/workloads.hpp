#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "offgrid/object_model.hpp"
#include "offgrid/tasks.hpp"

namespace offgrid::workloads {

// Deterministic surrogates for the evaluation applications. Identical
// (kind, seed, scale) builds an identical graph and produces identical
// results on any placement.
enum class Kind {
  kGameTree,       // compute-heavy, tiny state
  kLinSolve,       // dense linear system, repeated
  kBlobDetect,     // N large proxyable blobs, all touched
  kBlobDetect1ofN, // same graph, only the last blob touched
  kPiMachin,       // arbitrary-precision pi, higher-fidelity alternative
};

Kind kind_from_name(const std::string& name);
const char* kind_name(Kind k);

struct WorkloadSpec {
  Kind kind = Kind::kBlobDetect;
  uint64_t seed = 1;
  // game_tree
  uint32_t depth = 4;
  // linsolve
  uint32_t size = 32;
  uint32_t iterations = 2;
  // blob workloads
  uint32_t blob_count = 10;
  uint32_t blob_bytes = 150000;
  uint32_t rounds = 10;
  // pi
  uint32_t digits = 200;
};

struct BuiltGraph {
  ObjectGraph graph;
  Guid target;
  std::vector<Guid> params;
};

// Throws ConfigError on out-of-range scale parameters.
BuiltGraph build_graph(const WorkloadSpec& spec);

inline constexpr uint32_t kGameTreeTask = 1;
inline constexpr uint32_t kLinSolveTask = 2;
inline constexpr uint32_t kBlobDetectTask = 3;
inline constexpr uint32_t kPiTask = 4;
inline constexpr uint32_t kPiAltTask = 5;  // twice the digits, server-side

uint32_t task_id_for(Kind k);

// Registers the client-side descriptors. pi_alternative controls whether the
// pi descriptor names the double-precision server substitute.
void register_tasks(TaskRegistry& registry, bool pi_alternative);

// The code bundle these tasks ship as, and the server-side loader for it.
std::vector<uint8_t> bundle_bytes();
std::shared_ptr<const TaskRegistry> resolve_bundle(std::span<const uint8_t> bundle);

// --- inner computations, exposed for independent verification ---

// "3." followed by `digits` decimal digits of pi (Machin's formula,
// truncated, 10 guard digits).
std::string pi_digits(uint32_t digits);

// Solution of the deterministic diagonally dominant system (seed, n).
std::vector<double> linsolve_solution(uint64_t seed, uint32_t n);
// The system itself, for residual checks: row-major A and b.
void linsolve_system(uint64_t seed, uint32_t n, std::vector<double>& a,
                     std::vector<double>& b);

// Negamax over the synthetic tree: branching 8, leaf scores from the seeded
// splitmix stream. visited (when non-null) counts evaluated tree nodes.
int32_t game_tree_search(uint64_t seed, uint32_t depth, uint64_t* visited = nullptr);

}  // namespace offgrid::workloads
