#include "povmap/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>

#include "povmap/error.hpp"
#include "povmap/geo_formats.hpp"
#include "povmap/regression.hpp"

namespace povmap {

KeyValues parse_config(std::istream& in) {
  KeyValues kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    const std::string key(trim(body.substr(0, eq)));
    if (key.empty()) throw ParseError(line_no, "empty key");
    if (kv.count(key)) throw ParseError(line_no, "duplicate key '" + key + "'");
    kv[key] = std::string(trim(body.substr(eq + 1)));
  }
  return kv;
}

std::string env_name(std::string_view key) {
  std::string out(kEnvPrefix);
  for (char c : key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

Settings::Settings(KeyValues defaults, KeyValues file, KeyValues flags, EnvLookup env)
    : defaults_(std::move(defaults)), file_(std::move(file)), flags_(std::move(flags)), env_(std::move(env)) {}

std::optional<std::string> Settings::get(const std::string& key) const {
  if (const auto it = flags_.find(key); it != flags_.end()) return it->second;
  if (env_) {
    if (auto v = env_(env_name(key))) return v;
  }
  if (const auto it = file_.find(key); it != file_.end()) return it->second;
  if (const auto it = defaults_.find(key); it != defaults_.end()) return it->second;
  return std::nullopt;
}

std::string Settings::require(const std::string& key) const {
  if (auto v = get(key); v && !v->empty()) return *v;
  throw InputError("missing config key '" + key + "' (flag --" + key + ", config file, or " + env_name(key) + ")");
}

std::string Settings::source(const std::string& key) const {
  if (flags_.count(key)) return "flag";
  if (env_ && env_(env_name(key))) return "env";
  if (file_.count(key)) return "config";
  if (defaults_.count(key)) return "default";
  return "unset";
}

KeyValues default_settings() {
  return {{"tile_side_m", "450"},   {"min_pop", "2"},         {"gmm_k", "3"},
          {"chip_size", "416"},     {"chips_per_image", "4"}, {"conf_threshold", "0.5"},
          {"iou_threshold", "0.5"}, {"test_fraction", "0.2"}, {"cv_k", "5"},
          {"clip_retention", "0.25"}, {"min_instances", "10"}, {"threads", "1"},
          {"out", "."},             {"permissive", "false"}};
}

namespace {

double real_key(const Settings& s, const std::string& key) {
  const auto text = s.require(key);
  const auto v = parse_real(text);
  if (!v || !std::isfinite(*v)) throw InputError("config key '" + key + "': not a number: '" + text + "'");
  return *v;
}

std::int64_t int_key(const Settings& s, const std::string& key) {
  const auto text = s.require(key);
  const auto v = parse_integer(text);
  if (!v) throw InputError("config key '" + key + "': not an integer: '" + text + "'");
  return *v;
}

void check(bool ok, const std::string& key, const std::string& rule) {
  if (!ok) throw InputError("config key '" + key + "' must be " + rule);
}

bool bool_key(const Settings& s, const std::string& key) {
  auto v = s.get(key).value_or("false");
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no" || v.empty()) return false;
  throw InputError("config key '" + key + "': expected true/false, got '" + v + "'");
}

}  // namespace

std::uint64_t PipelineConfig::require_seed() const {
  if (!seed) throw InputError("missing config key 'seed' (required by randomized subcommands)");
  return *seed;
}

PipelineConfig resolve_config(const Settings& s) {
  PipelineConfig c;
  c.tile_side_m = real_key(s, "tile_side_m");
  check(c.tile_side_m > 0.0, "tile_side_m", "positive");
  c.min_pop = real_key(s, "min_pop");
  check(c.min_pop >= 0.0, "min_pop", "non-negative");
  c.gmm_k = static_cast<int>(int_key(s, "gmm_k"));
  check(c.gmm_k >= 1 && c.gmm_k <= 100, "gmm_k", "between 1 and 100");
  c.chip_size = static_cast<int>(int_key(s, "chip_size"));
  check(c.chip_size >= 1, "chip_size", "positive");
  c.chips_per_image = static_cast<int>(int_key(s, "chips_per_image"));
  check(c.chips_per_image >= 0, "chips_per_image", "non-negative");
  c.conf_threshold = real_key(s, "conf_threshold");
  check(c.conf_threshold >= 0.0 && c.conf_threshold <= 1.0, "conf_threshold", "in [0, 1]");
  c.iou_threshold = real_key(s, "iou_threshold");
  check(c.iou_threshold > 0.0 && c.iou_threshold <= 1.0, "iou_threshold", "in (0, 1]");
  c.test_fraction = real_key(s, "test_fraction");
  check(c.test_fraction > 0.0 && c.test_fraction < 1.0, "test_fraction", "in (0, 1)");
  c.cv_k = static_cast<int>(int_key(s, "cv_k"));
  check(c.cv_k >= 2, "cv_k", "at least 2");
  c.clip_retention = real_key(s, "clip_retention");
  check(c.clip_retention >= 0.0 && c.clip_retention <= 1.0, "clip_retention", "in [0, 1]");
  c.min_instances = int_key(s, "min_instances");
  check(c.min_instances >= 0, "min_instances", "non-negative");
  const auto threads = int_key(s, "threads");
  check(threads >= 1 && threads <= 1024, "threads", "between 1 and 1024");
  c.threads = static_cast<unsigned>(threads);
  c.out = s.require("out");
  c.permissive = bool_key(s, "permissive");

  if (auto grid = s.get("lambda_grid"); grid && !grid->empty()) {
    for (const auto& tok : split_on(*grid, ',')) {
      const auto v = parse_real(tok);
      if (!v || !(*v >= 0.0) || !std::isfinite(*v)) throw InputError("config key 'lambda_grid': bad value '" + tok + "'");
      c.lambda_grid.push_back(*v);
    }
  } else {
    c.lambda_grid = default_lambda_grid();
  }
  if (auto lam = s.get("lambda"); lam && !lam->empty()) {
    c.lambda = real_key(s, "lambda");
    check(*c.lambda >= 0.0, "lambda", "non-negative");
  }
  if (auto seed = s.get("seed"); seed && !seed->empty()) {
    const auto v = parse_integer(*seed);
    if (!v || *v < 0) throw InputError("config key 'seed' must be a non-negative integer");
    c.seed = static_cast<std::uint64_t>(*v);
  }
  return c;
}

}  // namespace povmap
