#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "offgrid/client.hpp"

namespace offgrid {

// Run configuration, key = value per line, '#' comments. Keys:
//   server_address  string   offloading server address
//   server_port     int      offloading server port
//   cache_enabled   bool     object cache on/off
//   static_roots    list     comma-separated static root names
//   timeout_s       float    remote timeout before local fallback
//   strategy        enum     auto|local|eager|lazy|pipelined
struct RunConfig {
  std::string server_address = "127.0.0.1";
  uint16_t server_port = 9470;
  bool cache_enabled = true;
  std::vector<std::string> static_roots;
  double timeout_s = 10.0;
  PlacementOverride strategy = PlacementOverride::kAuto;
};

// Throws ConfigError on unknown keys or unparsable values.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

PlacementOverride placement_from_name(const std::string& name);
const char* placement_name(PlacementOverride p);

}  // namespace offgrid
