#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dbb/harness.hpp"

namespace dbb {

// Raised for any malformed config, unknown key, or bad override; the CLI maps
// it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat INI-style config: [section] headers, key = value lines, '#' or ';'
// comments. Keys are stored as "section.key".
struct ConfigMap {
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
};

ConfigMap parse_config_text(const std::string& text, const std::string& origin = "<string>");
ConfigMap parse_config_file(const std::filesystem::path& file);

// key=value pairs, e.g. "solver.method=DS"; applied after the file parse.
void apply_overrides(ConfigMap& cfg, const std::vector<std::string>& overrides);

// Section extractors; every present key in the section must be known.
HestonParams market_from_config(const ConfigMap& cfg);
SolverConfig solver_from_config(const ConfigMap& cfg);
ExperimentSpec experiment_from_config(const ConfigMap& cfg);

// FNV-1a over the sorted resolved key=value entries.
std::uint64_t config_hash(const ConfigMap& cfg);

}  // namespace dbb
