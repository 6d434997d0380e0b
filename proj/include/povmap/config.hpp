#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace povmap {

using KeyValues = std::map<std::string, std::string>;

/// Flat `key = value` lines; `#` starts a comment line.
KeyValues parse_config(std::istream& in);

/// Environment variables are looked up as POVMAP_<KEY> (upper case).
inline constexpr std::string_view kEnvPrefix = "POVMAP_";
std::string env_name(std::string_view key);

/// Layered key lookup: flag > environment > config file > default.
class Settings {
 public:
  using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

  Settings(KeyValues defaults, KeyValues file, KeyValues flags, EnvLookup env = {});

  std::optional<std::string> get(const std::string& key) const;
  /// Throws InputError naming the key.
  std::string require(const std::string& key) const;
  /// "flag", "env", "config", "default" or "unset".
  std::string source(const std::string& key) const;

 private:
  KeyValues defaults_;
  KeyValues file_;
  KeyValues flags_;
  EnvLookup env_;
};

KeyValues default_settings();

/// Every tunable of the pipeline, validated.
struct PipelineConfig {
  double tile_side_m = 450.0;
  double min_pop = 2.0;
  int gmm_k = 3;
  int chip_size = 416;
  int chips_per_image = 4;
  double conf_threshold = 0.5;
  double iou_threshold = 0.5;
  double test_fraction = 0.2;
  int cv_k = 5;
  std::vector<double> lambda_grid;
  std::optional<double> lambda;
  std::optional<std::uint64_t> seed;
  double clip_retention = 0.25;
  std::int64_t min_instances = 10;
  unsigned threads = 1;
  std::string out = ".";
  bool permissive = false;

  /// Throws InputError naming the key when no seed was configured.
  std::uint64_t require_seed() const;
};

PipelineConfig resolve_config(const Settings& settings);

}  // namespace povmap
