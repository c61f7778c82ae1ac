#include "offgrid/bench.hpp"

#include "doctest.h"
#include "helpers.hpp"

using namespace offgrid;
using namespace offgrid::test;
namespace wl = offgrid::workloads;

namespace {

wl::WorkloadSpec small_blob() {
  wl::WorkloadSpec spec;
  spec.kind = wl::Kind::kBlobDetect;
  spec.seed = 3;
  spec.blob_count = 3;
  spec.blob_bytes = 4000;
  spec.rounds = 2;
  return spec;
}

bench::MatrixOptions base_options() {
  bench::MatrixOptions opts;
  opts.workloads = {small_blob()};
  opts.links = {presets().at("3g")};
  opts.cache_modes = {false};
  opts.trials = 1;
  return opts;
}

}  // namespace

TEST_CASE("matrix over all placements agrees with the local reference") {
  bench::MatrixOptions opts = base_options();
  opts.strategies = {PlacementOverride::kLocal, PlacementOverride::kEager,
                     PlacementOverride::kLazy, PlacementOverride::kPipelined};
  auto rows = bench::run_matrix(opts);  // throws on any divergence
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].strategy == "local");
  CHECK(rows[0].up_bytes == 0);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].up_bytes > 0);
    CHECK(rows[i].has_speedup);
  }
  // All blobs touched: lazy pays one fetch round trip per blob.
  CHECK(rows[2].fetches == doctest::Approx(3));
  CHECK(rows[3].fetches == doctest::Approx(0));
}

TEST_CASE("warm cache cell uploads a fraction of the eager bytes") {
  bench::MatrixOptions opts = base_options();
  opts.strategies = {PlacementOverride::kEager};
  opts.cache_modes = {false, true};
  auto rows = bench::run_matrix(opts);
  REQUIRE(rows.size() == 2);
  const auto& cold = rows[0];
  const auto& warm = rows[1];
  CHECK(cold.cache == false);
  CHECK(warm.cache == true);
  CHECK(warm.up_bytes < 0.05 * cold.up_bytes);
}

TEST_CASE("virtual-clock matrix runs are byte-identical across repeats") {
  bench::MatrixOptions opts = base_options();
  opts.strategies = {PlacementOverride::kEager, PlacementOverride::kLazy};
  auto a = bench::run_matrix(opts);
  auto b = bench::run_matrix(opts);
  CHECK(bench::emit_report(a, bench::ReportFormat::kCsv) ==
        bench::emit_report(b, bench::ReportFormat::kCsv));
}

TEST_CASE("empty rows emit the bare CSV header") {
  CHECK(bench::emit_report({}, bench::ReportFormat::kCsv) ==
        "workload,strategy,link,cache,trials,wall_s,up_bytes,down_bytes,fetches,speedup\n");
}

TEST_CASE("csv output matches the golden fixture") {
  bench::MatrixOptions opts;
  wl::WorkloadSpec spec;
  spec.kind = wl::Kind::kGameTree;
  spec.seed = 11;
  spec.depth = 3;
  opts.workloads = {spec};
  opts.strategies = {PlacementOverride::kLocal, PlacementOverride::kEager};
  opts.links = {presets().at("wifi")};
  opts.cache_modes = {false};
  opts.trials = 1;
  auto rows = bench::run_matrix(opts);
  std::string got = bench::emit_report(rows, bench::ReportFormat::kCsv);
  CHECK(got == read_file(std::string(FIXTURE_DIR) + "/bench_game_tree.csv"));
}

TEST_CASE("table report aligns and labels the clock") {
  bench::MatrixOptions opts = base_options();
  opts.strategies = {PlacementOverride::kLocal};
  auto rows = bench::run_matrix(opts);
  std::string table = bench::emit_report(rows, bench::ReportFormat::kTable);
  CHECK(table.find("workload") != std::string::npos);
  CHECK(table.find("# clock: virtual") != std::string::npos);
  auto header_end = table.find('\n');
  auto second_end = table.find('\n', header_end + 1);
  auto third_end = table.find('\n', second_end + 1);
  CHECK(second_end - header_end == third_end - second_end);  // aligned widths
}

TEST_CASE("auto strategy cells run the decision engine end to end") {
  bench::MatrixOptions opts = base_options();
  // Heavy compute, tiny state: the engine should offload.
  wl::WorkloadSpec spec;
  spec.kind = wl::Kind::kGameTree;
  spec.seed = 2;
  spec.depth = 6;
  opts.workloads = {spec};
  opts.strategies = {PlacementOverride::kAuto, PlacementOverride::kLocal};
  auto rows = bench::run_matrix(opts);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].up_bytes > 0);  // it chose to offload
  CHECK(rows[0].wall_s < rows[1].wall_s);
}
