#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "offgrid/client.hpp"
#include "offgrid/errors.hpp"
#include "offgrid/netsim.hpp"
#include "offgrid/workloads.hpp"

namespace offgrid::bench {

// A report row aborts the run when its results diverge from the local
// reference; see run_matrix.
class EquivalenceError : public Error {
 public:
  using Error::Error;
};

struct MatrixOptions {
  std::vector<workloads::WorkloadSpec> workloads;
  std::vector<PlacementOverride> strategies;
  std::vector<LinkConfig> links;
  std::vector<bool> cache_modes;
  uint32_t trials = 1;
  bool real_clock = false;
  double timeout_s = 10.0;
  DecisionConstants decision;
  bool pi_alternative = false;  // off keeps placements result-equivalent
  std::optional<uint64_t> blackhole_after_bytes;
};

struct ExperimentRow {
  std::string workload;
  std::string strategy;
  std::string link;
  bool cache = false;
  uint32_t trials = 0;
  double wall_s = 0;       // mean
  double up_bytes = 0;     // mean, from the link counters
  double down_bytes = 0;   // mean
  double fetches = 0;      // mean fetch round trips
  double speedup = 0;      // local mean wall / this mean wall
  bool has_speedup = false;
  uint64_t code_bytes = 0;  // one-time registration cost, outside trials
};

// Runs every (workload x strategy x link x cache) cell on a fresh pair
// (cache cells warm the pair with one unrecorded eager invocation), checks
// each cell's returns and final graph digest against a pure-local replay, and
// aggregates means. Throws EquivalenceError on any divergence.
std::vector<ExperimentRow> run_matrix(const MatrixOptions& opts);

enum class ReportFormat { kTable, kCsv };

// CSV header is fixed:
// workload,strategy,link,cache,trials,wall_s,up_bytes,down_bytes,fetches,speedup
std::string emit_report(std::span<const ExperimentRow> rows, ReportFormat format,
                        bool real_clock = false);

}  // namespace offgrid::bench
