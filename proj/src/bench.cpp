#include "offgrid/bench.hpp"

#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

#include "offgrid/config.hpp"
#include "offgrid/server.hpp"

namespace offgrid::bench {

namespace {

struct CellOutcome {
  ExperimentRow row;
  std::vector<std::vector<uint8_t>> returns;  // every execution, preload first
  Md5Digest final_digest{};
  uint32_t executions = 0;
};

struct Reference {
  Md5Digest digest{};
  std::vector<std::vector<uint8_t>> returns;
};

void register_into(Client& client, bool pi_alternative) {
  TaskRegistry reg;
  workloads::register_tasks(reg, pi_alternative);
  for (const auto& [id, d] : reg.all()) client.register_task(d);
}

Reference local_reference(const workloads::WorkloadSpec& spec, uint32_t executions,
                          const MatrixOptions& opts) {
  VirtualWorld world;
  VirtualWorld::Scope scope(world);
  VirtualLink link(world, presets().at("loopback"));
  ClientOptions copts;
  copts.cache_enabled = false;
  copts.placement = PlacementOverride::kLocal;
  copts.timeout_s = opts.timeout_s;
  copts.decision = opts.decision;
  Client client(link.client_end(), world, workloads::bundle_bytes(), copts);
  register_into(client, opts.pi_alternative);

  workloads::BuiltGraph bg = workloads::build_graph(spec);
  Reference ref;
  for (uint32_t i = 0; i < executions; ++i) {
    InvokeResult r =
        client.invoke(workloads::task_id_for(spec.kind), bg.graph, bg.target, bg.params);
    ref.returns.push_back(std::move(r.return_payload));
  }
  ref.digest = graph_digest(bg.graph);
  return ref;
}

// One cell's client-side sequence: profile, register code, optional cache
// preload, then the recorded trials. Byte counts come from the link counters,
// the single source of truth.
CellOutcome drive_cell(FrameTransport& client_end, Clock& clock,
                       const std::function<LinkCounters()>& counters,
                       const workloads::WorkloadSpec& spec, PlacementOverride strategy,
                       bool cache, const MatrixOptions& opts) {
  ClientOptions copts;
  copts.cache_enabled = cache;
  copts.placement = strategy;
  copts.timeout_s = opts.timeout_s;
  copts.decision = opts.decision;
  Client client(client_end, clock, workloads::bundle_bytes(), copts);
  register_into(client, opts.pi_alternative);

  client.profile_network();
  LinkCounters before_code = counters();
  client.ensure_code_registered();
  LinkCounters after_code = counters();

  workloads::BuiltGraph bg = workloads::build_graph(spec);
  uint32_t task_id = workloads::task_id_for(spec.kind);

  CellOutcome out;
  out.row.workload = workloads::kind_name(spec.kind);
  out.row.strategy = placement_name(strategy);
  out.row.cache = cache;
  out.row.trials = opts.trials;
  out.row.code_bytes = (after_code.offered_up + after_code.offered_down) -
                       (before_code.offered_up + before_code.offered_down);

  if (cache) {
    // Warm pair: preload the object cache with one unrecorded full transfer.
    PlacementOverride saved = client.options().placement;
    client.options().placement = PlacementOverride::kEager;
    InvokeResult warm = client.invoke(task_id, bg.graph, bg.target, bg.params);
    client.options().placement = saved;
    out.returns.push_back(std::move(warm.return_payload));
    out.executions++;
  }

  for (uint32_t t = 0; t < opts.trials; ++t) {
    LinkCounters before = counters();
    InvokeResult r = client.invoke(task_id, bg.graph, bg.target, bg.params);
    LinkCounters after = counters();
    out.row.wall_s += r.metrics.wall_time;
    out.row.up_bytes += static_cast<double>(after.offered_up - before.offered_up);
    out.row.down_bytes += static_cast<double>(after.offered_down - before.offered_down);
    out.row.fetches += r.metrics.fetch_round_trips;
    out.returns.push_back(std::move(r.return_payload));
    out.executions++;
  }
  out.row.wall_s /= opts.trials;
  out.row.up_bytes /= opts.trials;
  out.row.down_bytes /= opts.trials;
  out.row.fetches /= opts.trials;
  out.final_digest = graph_digest(bg.graph);
  return out;
}

CellOutcome run_cell(const workloads::WorkloadSpec& spec, PlacementOverride strategy,
                     const LinkConfig& link_cfg, bool cache, const MatrixOptions& opts) {
  LinkConfig cfg = link_cfg;
  if (opts.blackhole_after_bytes) cfg.blackhole_after_bytes = opts.blackhole_after_bytes;

  ServerOptions sopts;
  sopts.server_speed = opts.decision.server_speed;
  sopts.fault_timeout_s = std::max(60.0, opts.timeout_s * 6);

  CellOutcome out;
  if (opts.real_clock) {
    RealClock clock;
    RealLink link(clock, cfg);
    Server server(workloads::resolve_bundle, sopts);
    std::thread ingest =
        clock.spawn([&] { server.serve_connection(link.server_end(), clock); });
    out = drive_cell(link.client_end(), clock, [&] { return link.counters(); }, spec,
                     strategy, cache, opts);
    link.close();
    ingest.join();
  } else {
    VirtualWorld world;
    VirtualLink link(world, cfg);
    Server server(workloads::resolve_bundle, sopts);
    std::thread ingest;
    {
      VirtualWorld::Scope scope(world);
      ingest = world.spawn([&] { server.serve_connection(link.server_end(), world); });
      out = drive_cell(link.client_end(), world, [&] { return link.counters(); }, spec,
                       strategy, cache, opts);
      link.close();
    }
    ingest.join();
  }
  out.row.link = cfg.name;
  return out;
}

}  // namespace

std::vector<ExperimentRow> run_matrix(const MatrixOptions& opts) {
  if (opts.workloads.empty() || opts.strategies.empty() || opts.links.empty() ||
      opts.cache_modes.empty() || opts.trials < 1)
    throw ConfigError("bench matrix needs workloads, strategies, links, cache modes, trials");

  std::map<std::pair<std::size_t, uint32_t>, Reference> references;
  std::vector<ExperimentRow> rows;

  for (std::size_t wi = 0; wi < opts.workloads.size(); ++wi) {
    const workloads::WorkloadSpec& spec = opts.workloads[wi];
    for (PlacementOverride strategy : opts.strategies) {
      for (const LinkConfig& link : opts.links) {
        for (bool cache : opts.cache_modes) {
          CellOutcome cell = run_cell(spec, strategy, link, cache, opts);

          auto key = std::make_pair(wi, cell.executions);
          auto it = references.find(key);
          if (it == references.end())
            it = references.emplace(key, local_reference(spec, cell.executions, opts)).first;
          const Reference& ref = it->second;

          std::string cell_name = cell.row.workload + "/" + cell.row.strategy + "/" +
                                  cell.row.link + "/" + (cache ? "cache" : "nocache");
          if (cell.final_digest != ref.digest)
            throw EquivalenceError("final graph diverges from local reference in cell " +
                                   cell_name);
          // An alternative implementation intentionally raises fidelity, so
          // return payloads are only required to match without one.
          bool has_alternative =
              opts.pi_alternative && spec.kind == workloads::Kind::kPiMachin;
          if (!has_alternative) {
            for (std::size_t i = 0; i < cell.returns.size(); ++i) {
              if (cell.returns[i] != ref.returns[i])
                throw EquivalenceError("return payload " + std::to_string(i) +
                                       " diverges from local reference in cell " +
                                       cell_name);
            }
          }
          rows.push_back(cell.row);
        }
      }
    }
  }

  // Speedup against the local row of the same workload, when one exists.
  std::map<std::string, double> local_wall;
  for (const ExperimentRow& r : rows)
    if (r.strategy == "local" && !local_wall.count(r.workload))
      local_wall[r.workload] = r.wall_s;
  for (ExperimentRow& r : rows) {
    auto it = local_wall.find(r.workload);
    if (it != local_wall.end() && r.wall_s > 0) {
      r.speedup = it->second / r.wall_s;
      r.has_speedup = true;
    }
  }
  return rows;
}

std::string emit_report(std::span<const ExperimentRow> rows, ReportFormat format,
                        bool real_clock) {
  std::ostringstream out;
  char buf[256];
  if (format == ReportFormat::kCsv) {
    out << "workload,strategy,link,cache,trials,wall_s,up_bytes,down_bytes,fetches,speedup\n";
    for (const ExperimentRow& r : rows) {
      std::snprintf(buf, sizeof buf, "%s,%s,%s,%s,%u,%.6f,%.1f,%.1f,%.2f,", r.workload.c_str(),
                    r.strategy.c_str(), r.link.c_str(), r.cache ? "on" : "off", r.trials,
                    r.wall_s, r.up_bytes, r.down_bytes, r.fetches);
      out << buf;
      if (r.has_speedup) {
        std::snprintf(buf, sizeof buf, "%.3f", r.speedup);
        out << buf;
      }
      out << "\n";
    }
    return out.str();
  }

  std::snprintf(buf, sizeof buf, "%-18s %-10s %-9s %-6s %7s %12s %12s %12s %8s %8s\n",
                "workload", "strategy", "link", "cache", "trials", "wall_s", "up_bytes",
                "down_bytes", "fetches", "speedup");
  out << buf;
  out << std::string(110, '-') << "\n";
  for (const ExperimentRow& r : rows) {
    std::string speed = "-";
    if (r.has_speedup) {
      std::snprintf(buf, sizeof buf, "%.2fx", r.speedup);
      speed = buf;
    }
    std::snprintf(buf, sizeof buf, "%-18s %-10s %-9s %-6s %7u %12.6f %12.1f %12.1f %8.2f %8s\n",
                  r.workload.c_str(), r.strategy.c_str(), r.link.c_str(),
                  r.cache ? "on" : "off", r.trials, r.wall_s, r.up_bytes, r.down_bytes,
                  r.fetches, speed.c_str());
    out << buf;
  }
  if (!rows.empty()) {
    out << "# clock: " << (real_clock ? "real" : "virtual") << "\n";
    out << "# code registration (per session, excluded from trials): " << rows[0].code_bytes
        << " bytes\n";
  }
  return out.str();
}

}  // namespace offgrid::bench
