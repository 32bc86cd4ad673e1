#pragma once

#include "scoreopt/error.hpp"
#include "scoreopt/optimizer.hpp"
#include "scoreopt/problems.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace scoreopt {

inline constexpr int kFormatVersion = 1;

/// Parse or validation failure tied to a config line and/or key.
class ConfigError : public Error {
 public:
  ConfigError(std::size_t line, std::string field, const std::string& what);
  std::size_t line() const { return line_; }  // 0 when not tied to a line
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

/// Flat key/value text. `[section]` headers prefix the following keys as
/// "section.key"; '#' and ';' start comments.
struct ConfigEntry {
  std::string value;
  std::size_t line = 0;
  bool operator==(const ConfigEntry&) const = default;
};
using ConfigMap = std::map<std::string, ConfigEntry>;

ConfigMap parse_config_text(std::string_view text);
ConfigMap parse_config_file(const std::string& path);
/// "key=value" from the command line; the key must be fully qualified.
void apply_override(ConfigMap& map, std::string_view assignment);

struct RefineConfig {
  std::size_t stages = 0;  // restarts after the first run
  double shrink = 0.02;    // new half-width as a fraction of the original one
};

struct RunConfig {
  std::string problem = "fractal";
  ProblemParams params;
  RunSettings settings;
  ExploreConfig explore;  // kept even when exploration is off
  RefineConfig refine;
  bool seed_set = false;

  /// Full resolved text, stable field order; parse_config_text of it gives
  /// back the same RunConfig.
  std::string to_text() const;
  /// FNV-1a 64 of to_text(), as 16 hex digits.
  std::string hash() const;
};

/// Builds a RunConfig from defaults plus the given keys. Unknown keys,
/// malformed values and missing seeds raise ConfigError.
RunConfig resolve_config(const ConfigMap& map, bool require_seed = true);

/// Built-in experiment presets; `load_config` accepts "preset:<name>".
std::vector<std::string> preset_names();
std::string preset_text(const std::string& name);
ConfigMap load_config(const std::string& source);

}  // namespace scoreopt
