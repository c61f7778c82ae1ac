#include "offgrid/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "offgrid/errors.hpp"

namespace offgrid {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for " + key + ": " + v);
}

}  // namespace

PlacementOverride placement_from_name(const std::string& name) {
  if (name == "auto") return PlacementOverride::kAuto;
  if (name == "local") return PlacementOverride::kLocal;
  if (name == "eager") return PlacementOverride::kEager;
  if (name == "lazy") return PlacementOverride::kLazy;
  if (name == "pipelined") return PlacementOverride::kPipelined;
  throw ConfigError("unknown strategy: " + name);
}

const char* placement_name(PlacementOverride p) {
  switch (p) {
    case PlacementOverride::kAuto: return "auto";
    case PlacementOverride::kLocal: return "local";
    case PlacementOverride::kEager: return "eager";
    case PlacementOverride::kLazy: return "lazy";
    case PlacementOverride::kPipelined: return "pipelined";
  }
  return "?";
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "server_address") {
        cfg.server_address = value;
      } else if (key == "server_port") {
        int p = std::stoi(value);
        if (p < 1 || p > 65535) throw ConfigError("port out of range");
        cfg.server_port = static_cast<uint16_t>(p);
      } else if (key == "cache_enabled") {
        cfg.cache_enabled = parse_bool(value, key);
      } else if (key == "static_roots") {
        cfg.static_roots.clear();
        std::istringstream items(value);
        std::string item;
        while (std::getline(items, item, ',')) {
          item = trim(item);
          if (!item.empty()) cfg.static_roots.push_back(item);
        }
      } else if (key == "timeout_s") {
        cfg.timeout_s = std::stod(value);
        if (cfg.timeout_s <= 0) throw ConfigError("timeout must be positive");
      } else if (key == "strategy") {
        cfg.strategy = placement_from_name(value);
      } else {
        throw ConfigError("unknown key: " + key);
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

}  // namespace offgrid
