#include "doctest.h"
#include "helpers.hpp"
#include "offgrid/client.hpp"
#include "offgrid/config.hpp"
#include "offgrid/errors.hpp"
#include "offgrid/splitmix.hpp"
#include "offgrid/workloads.hpp"

using namespace offgrid;
using namespace offgrid::test;

namespace {

NetworkProfile profile_3g() {
  NetworkProfile p;
  p.rtt = 0.150;
  p.uplink = 125e3;
  p.downlink = 500e3;
  p.reachable = true;
  p.last_updated = 1;
  return p;
}

}  // namespace

TEST_CASE("unreachable profile forces local placement") {
  StateSizing s{1000, 0, 0, 1e9};
  NetworkProfile p = profile_3g();
  p.reachable = false;
  CHECK(decide(s, p, {}, true).kind == Placement::Kind::kLocal);
}

TEST_CASE("zero compute hint stays local") {
  StateSizing s{1000, 0, 0, 0};
  CHECK(decide(s, profile_3g(), {}, true).kind == Placement::Kind::kLocal);
}

TEST_CASE("non-offloadable tasks stay local") {
  StateSizing s{1000, 0, 0, 1e9};
  CHECK(decide(s, profile_3g(), {}, false).kind == Placement::Kind::kLocal);
}

TEST_CASE("one-of-ten blob profile on 3g prefers lazy over eager") {
  // 1.5 MB state of which 1.4 MB is ten elidable blobs; the task touches one.
  StateSizing s;
  s.state_size = 1500000;
  s.elidable_size = 1400000;
  s.n_proxies = 10;
  s.compute_hint = 3e6;  // enough work to offload at all
  DecisionConstants c;
  Placement p = decide(s, profile_3g(), c, true);
  CHECK(p.is_remote());
  CHECK(p.strategy == Strategy::kLazy);
  CHECK(estimate_remote_seconds(s, profile_3g(), c, Strategy::kLazy) <
        estimate_remote_seconds(s, profile_3g(), c, Strategy::kEager));
}

TEST_CASE("small linear solves stay local, scaled ones offload") {
  // n=24, k=1: compute/server_speed = 0.0104 s < rtt, and the 10x speed gap
  // keeps the round trip unprofitable.
  DecisionConstants c;
  double flops1 = 1 * (2.0 * 24 * 24 * 24 / 3.0 + 2.0 * 24 * 24);
  StateSizing small{150, 0, 0, flops1};
  CHECK(flops1 / c.server_speed < profile_3g().rtt);
  CHECK(decide(small, profile_3g(), c, true).kind == Placement::Kind::kLocal);

  StateSizing big{150, 0, 0, flops1 * 100};
  Placement p = decide(big, profile_3g(), c, true);
  CHECK(p.is_remote());
}

TEST_CASE("decision monotonicity: more compute never flips remote to local") {
  SplitMix64 rng(0xDEC1DE);
  for (int i = 0; i < 500; ++i) {
    NetworkProfile p;
    p.rtt = rng.next_unit();
    p.uplink = 1e3 + rng.next_unit() * 1e7;
    p.downlink = 1e3 + rng.next_unit() * 1e7;
    p.reachable = true;
    DecisionConstants c;
    c.local_speed = 1e4 + rng.next_unit() * 1e6;
    c.server_speed = c.local_speed * (1 + rng.next_unit() * 20);  // server >= local
    StateSizing s;
    s.state_size = rng.next() % 2000000;
    s.elidable_size = rng.next() % (s.state_size + 1);
    s.n_proxies = static_cast<uint32_t>(rng.next() % 20);
    s.compute_hint = rng.next_unit() * 1e8;

    if (decide(s, p, c, true).is_remote()) {
      StateSizing more = s;
      more.compute_hint *= 1 + rng.next_unit() * 10;
      CHECK(decide(more, p, c, true).is_remote());
    }
  }
}

TEST_CASE("exact ties prefer eager over lazy") {
  // No proxyable state: lazy and pipelined collapse onto eager's cost.
  StateSizing s{1000, 0, 0, 1e8};
  Placement p = decide(s, profile_3g(), {}, true);
  CHECK(p.is_remote());
  CHECK(p.strategy == Strategy::kEager);
}

TEST_CASE("should_elide matches only acknowledged digests of proxyable nodes") {
  ObjectNode n = node(1, {1, 2, 3}, {}, true);
  ClientCacheView cache;
  CHECK_FALSE(should_elide(n, cache));
  cache.entries[n.guid] = content_hash(n);
  CHECK(should_elide(n, cache));
  n.payload[0] ^= 1;
  CHECK_FALSE(should_elide(n, cache));
  ObjectNode plain = node(2, {1});
  cache.entries[plain.guid] = content_hash(plain);
  CHECK_FALSE(should_elide(plain, cache));
}

TEST_CASE("run config parses the documented keys") {
  RunConfig cfg = parse_run_config(
      "# offload endpoint\n"
      "server_address = 10.0.0.7\n"
      "server_port = 9999\n"
      "cache_enabled = false\n"
      "static_roots = assets, lookup_table\n"
      "timeout_s = 2.5\n"
      "strategy = pipelined\n");
  CHECK(cfg.server_address == "10.0.0.7");
  CHECK(cfg.server_port == 9999);
  CHECK_FALSE(cfg.cache_enabled);
  CHECK(cfg.static_roots == std::vector<std::string>{"assets", "lookup_table"});
  CHECK(cfg.timeout_s == doctest::Approx(2.5));
  CHECK(cfg.strategy == PlacementOverride::kPipelined);
}

TEST_CASE("run config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(parse_run_config("proxy_ip = 1.2.3.4\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("server_port = 99999\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("cache_enabled = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("timeout_s = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("strategy = warp\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("flag without equals\n"), ConfigError);
}

TEST_CASE("defaults survive an empty config") {
  RunConfig cfg = parse_run_config("\n# nothing\n");
  CHECK(cfg.server_port == 9470);
  CHECK(cfg.cache_enabled);
  CHECK(cfg.strategy == PlacementOverride::kAuto);
}
