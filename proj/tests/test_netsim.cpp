#include "offgrid/netsim.hpp"

#include <thread>

#include "doctest.h"
#include "helpers.hpp"
#include "offgrid/errors.hpp"

using namespace offgrid;
using namespace offgrid::test;

TEST_CASE("delivery arithmetic: latency-free pipe") {
  LinkConfig cfg;
  cfg.rtt = 0;
  cfg.up_bandwidth = 1000;
  double free_time = 0;
  CHECK(schedule_delivery(cfg, Direction::kUp, 500, 0.0, free_time) ==
        doctest::Approx(0.5));
  // FIFO: the second frame serializes behind the first.
  CHECK(schedule_delivery(cfg, Direction::kUp, 500, 0.0, free_time) ==
        doctest::Approx(1.0));
}

TEST_CASE("delivery arithmetic: rtt halves and per-direction bandwidth") {
  LinkConfig cfg;
  cfg.rtt = 0.2;
  cfg.up_bandwidth = 1000;
  cfg.down_bandwidth = 500;
  double up_free = 0, down_free = 0;
  CHECK(schedule_delivery(cfg, Direction::kUp, 100, 1.0, up_free) ==
        doctest::Approx(1.0 + 0.1 + 0.1));
  CHECK(schedule_delivery(cfg, Direction::kDown, 100, 1.0, down_free) ==
        doctest::Approx(1.0 + 0.1 + 0.2));
}

TEST_CASE("preset 3g is at least ten times slower than wifi on a bulk upload") {
  auto p = presets();
  double wifi_free = 0, g3_free = 0;
  double wifi = schedule_delivery(p.at("wifi"), Direction::kUp, 1500000, 0, wifi_free);
  double g3 = schedule_delivery(p.at("3g"), Direction::kUp, 1500000, 0, g3_free);
  CHECK(g3 >= 10 * wifi);
}

TEST_CASE("presets contain exactly wifi, 3g, loopback with pinned values") {
  auto p = presets();
  CHECK(p.size() == 3);
  CHECK(p.at("wifi").rtt == doctest::Approx(0.010));
  CHECK(p.at("wifi").up_bandwidth == doctest::Approx(2.5e6));
  CHECK(p.at("wifi").down_bandwidth == doctest::Approx(2.5e6));
  CHECK(p.at("3g").rtt == doctest::Approx(0.150));
  CHECK(p.at("3g").up_bandwidth == doctest::Approx(125e3));
  CHECK(p.at("3g").down_bandwidth == doctest::Approx(500e3));
  CHECK(p.at("loopback").rtt == doctest::Approx(0.0001));
  CHECK(p.at("loopback").up_bandwidth == doctest::Approx(1e9));
}

TEST_CASE("rtt override is reflected in delivery times") {
  auto cfg = presets().at("wifi");
  cfg.rtt = 1.0;
  double free_time = 0;
  CHECK(schedule_delivery(cfg, Direction::kUp, 0, 0, free_time) == doctest::Approx(0.5));
}

TEST_CASE("parse_network handles presets and custom specs") {
  CHECK(parse_network("3g").name == "3g");
  LinkConfig c = parse_network("custom:20,1000,2000");
  CHECK(c.rtt == doctest::Approx(0.020));
  CHECK(c.up_bandwidth == doctest::Approx(1000));
  CHECK(c.down_bandwidth == doctest::Approx(2000));
  CHECK_THROWS_AS(parse_network("lte"), ConfigError);
  CHECK_THROWS_AS(parse_network("custom:1,0,5"), ConfigError);
}

TEST_CASE("virtual link delivers frames at computed times") {
  VirtualWorld world;
  LinkConfig cfg;
  cfg.rtt = 0.2;
  cfg.up_bandwidth = 1000;
  cfg.down_bandwidth = 1000;
  VirtualLink link(world, cfg);
  VirtualWorld::Scope scope(world);

  link.client_end().send(std::vector<uint8_t>(500, 1));
  link.client_end().send(std::vector<uint8_t>(500, 2));
  std::vector<uint8_t> got;
  CHECK(link.server_end().recv(10.0, got) == RecvStatus::kOk);
  CHECK(world.now() == doctest::Approx(0.1 + 0.5));
  CHECK(got[0] == 1);
  CHECK(link.server_end().recv(10.0, got) == RecvStatus::kOk);
  CHECK(world.now() == doctest::Approx(0.1 + 1.0));
  CHECK(got[0] == 2);

  SUBCASE("conservation: offered equals delivered after drain") {
    auto c = link.counters();
    CHECK(c.offered_up == 1000);
    CHECK(c.delivered_up == 1000);
  }
}

TEST_CASE("recv honors its deadline under virtual time") {
  VirtualWorld world;
  VirtualLink link(world, presets().at("wifi"));
  VirtualWorld::Scope scope(world);
  std::vector<uint8_t> got;
  double t0 = world.now();
  CHECK(link.client_end().recv(2.5, got) == RecvStatus::kTimeout);
  CHECK(world.now() - t0 == doctest::Approx(2.5));
}

TEST_CASE("charge advances virtual time") {
  VirtualWorld world;
  VirtualWorld::Scope scope(world);
  world.charge(1.25);
  CHECK(world.now() == doctest::Approx(1.25));
}

TEST_CASE("blackhole by bytes silently drops later frames") {
  VirtualWorld world;
  LinkConfig cfg;
  cfg.rtt = 0;
  cfg.up_bandwidth = 1e6;
  cfg.down_bandwidth = 1e6;
  cfg.blackhole_after_bytes = 600;
  VirtualLink link(world, cfg);
  VirtualWorld::Scope scope(world);

  link.client_end().send(std::vector<uint8_t>(500, 1));  // passes (500 <= 600)
  link.client_end().send(std::vector<uint8_t>(500, 2));  // trips (1000 > 600)
  std::vector<uint8_t> got;
  CHECK(link.server_end().recv(1.0, got) == RecvStatus::kOk);
  CHECK(got[0] == 1);
  CHECK(link.server_end().recv(1.0, got) == RecvStatus::kTimeout);
  auto c = link.counters();
  CHECK(c.offered_up == 1000);
  CHECK(c.delivered_up == 500);
}

TEST_CASE("virtual schedules are identical across runs") {
  auto run = [] {
    std::vector<double> trace;
    VirtualWorld world;
    VirtualLink link(world, presets().at("3g"));
    std::thread echo;
    {
      VirtualWorld::Scope scope(world);
      echo = world.spawn([&] {
        VirtualWorld& w = world;
        std::vector<uint8_t> f;
        while (link.server_end().recv(30.0, f) == RecvStatus::kOk) {
          w.charge(0.01);
          link.server_end().send(std::move(f));
        }
      });
      std::vector<uint8_t> got;
      for (int i = 0; i < 5; ++i) {
        link.client_end().send(std::vector<uint8_t>(100 * (i + 1), 7));
        CHECK(link.client_end().recv(30.0, got) == RecvStatus::kOk);
        trace.push_back(world.now());
      }
      link.close();
    }
    echo.join();
    return trace;
  };
  CHECK(run() == run());
}

TEST_CASE("real link delivers FIFO with sleep-based timing") {
  RealClock clock;
  LinkConfig cfg;
  cfg.rtt = 0.01;
  cfg.up_bandwidth = 1e6;
  cfg.down_bandwidth = 1e6;
  RealLink link(clock, cfg);
  link.client_end().send({1});
  link.client_end().send({2});
  std::vector<uint8_t> got;
  CHECK(link.server_end().recv(1.0, got) == RecvStatus::kOk);
  CHECK(got == std::vector<uint8_t>{1});
  CHECK(link.server_end().recv(1.0, got) == RecvStatus::kOk);
  CHECK(got == std::vector<uint8_t>{2});
  CHECK(clock.now() >= 0.005);
  link.close();
  CHECK(link.server_end().recv(0.5, got) == RecvStatus::kClosed);
}
