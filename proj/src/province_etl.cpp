#include "povmap/province_etl.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <ostream>
#include <set>

#include "povmap/error.hpp"
#include "povmap/random.hpp"

namespace povmap {

std::map<std::string, ProvinceRecord> read_provinces(const TextTable& t) {
  const auto code = t.column("geocode");
  const auto name = t.column("name");
  const auto rate = t.column("poverty_rate");
  const auto pop = t.column("population");
  std::map<std::string, ProvinceRecord> out;
  for (std::size_t r = 0; r < t.size(); ++r) {
    ProvinceRecord p{t.text(r, code), t.text(r, name), t.real(r, rate), t.real(r, pop)};
    if (p.geocode.empty()) throw ParseError(t.line_of(r), "empty geocode");
    if (!(p.poverty_rate >= 0.0 && p.poverty_rate <= 1.0)) {
      throw ParseError(t.line_of(r), "poverty_rate must lie in [0, 1]");
    }
    if (!(p.population >= 0.0)) throw ParseError(t.line_of(r), "population must be non-negative");
    const auto key = p.geocode;
    if (!out.emplace(key, std::move(p)).second) throw ParseError(t.line_of(r), "duplicate geocode '" + key + "'");
  }
  return out;
}

std::map<std::string, std::string> read_image_geocodes(const TextTable& t) {
  const auto id = t.column("image_id");
  const auto code = t.column("geocode");
  std::map<std::string, std::string> out;
  for (std::size_t r = 0; r < t.size(); ++r) {
    const auto [it, inserted] = out.emplace(t.text(r, id), t.text(r, code));
    if (!inserted && it->second != t.text(r, code)) {
      throw ParseError(t.line_of(r), "image '" + t.text(r, id) + "' assigned to two provinces");
    }
  }
  return out;
}

std::map<std::string, ClassCounts> aggregate_counts(std::span<const Detection> dets,
                                                    const std::map<std::string, std::string>& image_geocodes,
                                                    double conf_threshold) {
  std::map<std::string, ClassCounts> out;
  for (const auto& [image, code] : image_geocodes) out.emplace(code, ClassCounts{});

  std::set<std::string> unmapped;
  for (const auto& d : dets) {
    const auto it = image_geocodes.find(d.image_id);
    if (it == image_geocodes.end()) {
      unmapped.insert(d.image_id);
      continue;
    }
    if (d.class_index < 0 || d.class_index >= kNumParentClasses) throw InputError("detection class out of range");
    if (d.confidence >= conf_threshold) ++out[it->second][d.class_index];
  }
  if (!unmapped.empty()) {
    std::string msg = "images without a province:";
    for (const auto& u : unmapped) msg += " " + u;
    throw InputError(msg);
  }
  return out;
}

RelativeCounts relativize(const ClassCounts& counts) {
  RelativeCounts rel;
  for (auto c : counts) {
    if (c < 0) throw InputError("negative object count");
  }
  const auto trucks = counts[kTruckClass];
  double divisor = static_cast<double>(trucks);
  if (trucks == 0) {
    divisor = 1.0;
    rel.truck_fallback = true;
  }
  for (int c = 0; c < kNumParentClasses; ++c) rel.values[c] = static_cast<double>(counts[c]) / divisor;
  return rel;
}

DetectorFeatureRow detector_features(const std::string& geocode, const RelativeCounts& rel,
                                     std::span<const double> tile_populations, double pop_province) {
  DetectorFeatureRow row;
  row.geocode = geocode;
  row.rel_counts = rel.values;
  row.truck_fallback = rel.truck_fallback;
  row.n_samples = static_cast<std::int64_t>(tile_populations.size());
  for (double p : tile_populations) row.pop_sampled += p;
  row.pop_province = pop_province;
  row.no_tiles = tile_populations.empty();
  return row;
}

namespace {

std::string column_slug(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  return out;
}

}  // namespace

std::vector<Column> detector_feature_schema() {
  std::vector<Column> cols{{"geocode", ColumnType::Text}};
  for (auto name : kParentClassNames) cols.push_back({"rel_" + column_slug(name), ColumnType::Real});
  cols.push_back({"n_samples", ColumnType::Integer});
  cols.push_back({"pop_sampled", ColumnType::Real});
  cols.push_back({"pop_province", ColumnType::Real});
  return cols;
}

std::vector<Row> detector_feature_rows(std::span<const DetectorFeatureRow> rows) {
  std::vector<Row> out;
  for (const auto& r : rows) {
    Row row{r.geocode};
    for (double v : r.rel_counts) row.emplace_back(v);
    row.emplace_back(r.n_samples);
    row.emplace_back(r.pop_sampled);
    row.emplace_back(r.pop_province);
    out.push_back(std::move(row));
  }
  return out;
}

FeatureTable read_feature_table(const TextTable& t) {
  const auto code = t.column("geocode");
  FeatureTable ft;
  std::vector<std::size_t> numeric;
  for (std::size_t c = 0; c < t.columns().size(); ++c) {
    if (c == code) continue;
    ft.columns.push_back(t.columns()[c]);
    numeric.push_back(c);
  }
  if (numeric.empty()) throw InputError("feature table has no feature columns");
  for (std::size_t r = 0; r < t.size(); ++r) {
    std::vector<double> vals;
    vals.reserve(numeric.size());
    for (auto c : numeric) {
      const double v = t.real(r, c);
      if (!std::isfinite(v)) throw ParseError(t.line_of(r), "missing or non-finite feature value");
      vals.push_back(v);
    }
    if (!ft.rows.emplace(t.text(r, code), std::move(vals)).second) {
      throw ParseError(t.line_of(r), "duplicate geocode '" + t.text(r, code) + "'");
    }
  }
  return ft;
}

EnsembleDataset concat_features(std::span<const FeatureTable> tables,
                                const std::map<std::string, ProvinceRecord>& provinces, bool permissive) {
  if (tables.empty()) throw InputError("at least one feature table is required");

  EnsembleDataset data;
  for (std::size_t t = 0; t < tables.size(); ++t) {
    for (const auto& c : tables[t].columns) data.feature_names.push_back("m" + std::to_string(t + 1) + "_" + c);
  }

  std::set<std::string> all;
  for (const auto& t : tables) {
    for (const auto& [code, _] : t.rows) all.insert(code);
  }
  for (const auto& [code, _] : provinces) all.insert(code);

  std::vector<std::string> mismatched;
  for (const auto& code : all) {
    bool everywhere = provinces.count(code) != 0;
    for (const auto& t : tables) everywhere = everywhere && t.rows.count(code) != 0;
    if (!everywhere) {
      mismatched.push_back(code);
      continue;
    }
    EnsembleRow row;
    row.geocode = code;
    for (const auto& t : tables) {
      const auto& v = t.rows.at(code);
      row.features.insert(row.features.end(), v.begin(), v.end());
    }
    row.poverty_rate = provinces.at(code).poverty_rate;
    data.rows.push_back(std::move(row));
  }

  if (!mismatched.empty()) {
    std::string list;
    for (const auto& m : mismatched) list += " " + m;
    if (!permissive) throw InputError("geocodes not present in every input:" + list);
    data.warnings.push_back("dropped geocodes not present in every input:" + list);
  }
  return data;
}

void write_ensemble(std::ostream& out, const EnsembleDataset& data) {
  std::vector<Column> schema{{"geocode", ColumnType::Text}};
  for (const auto& f : data.feature_names) schema.push_back({f, ColumnType::Real});
  schema.push_back({"poverty_rate", ColumnType::Real});
  std::vector<Row> rows;
  for (const auto& r : data.rows) {
    if (r.features.size() != data.feature_names.size()) throw InvariantError("ensemble row width mismatch");
    Row row{r.geocode};
    for (double v : r.features) row.emplace_back(v);
    row.emplace_back(r.poverty_rate);
    rows.push_back(std::move(row));
  }
  write_table(out, schema, rows);
}

EnsembleDataset read_ensemble(const TextTable& t) {
  const auto code = t.column("geocode");
  const auto target = t.column("poverty_rate");
  EnsembleDataset data;
  std::vector<std::size_t> feats;
  for (std::size_t c = 0; c < t.columns().size(); ++c) {
    if (c == code || c == target) continue;
    data.feature_names.push_back(t.columns()[c]);
    feats.push_back(c);
  }
  for (std::size_t r = 0; r < t.size(); ++r) {
    EnsembleRow row;
    row.geocode = t.text(r, code);
    for (auto c : feats) row.features.push_back(t.real(r, c));
    row.poverty_rate = t.real(r, target);
    data.rows.push_back(std::move(row));
  }
  return data;
}

ProvinceSplit split_provinces(std::vector<std::string> geocodes, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InputError("test fraction must lie in (0, 1)");
  std::sort(geocodes.begin(), geocodes.end());
  geocodes.erase(std::unique(geocodes.begin(), geocodes.end()), geocodes.end());
  if (geocodes.size() < 5) throw InputError("need at least 5 provinces to split");

  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(geocodes.size())));
  Rng rng(seed);
  rng.shuffle(geocodes);

  ProvinceSplit split;
  split.test.assign(geocodes.begin(), geocodes.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.train.assign(geocodes.begin() + static_cast<std::ptrdiff_t>(n_test), geocodes.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

std::vector<int> check_class_coverage(const ClassCounts& counts, std::int64_t min_instances) {
  std::vector<int> deficient;
  for (int c = 0; c < kNumParentClasses; ++c) {
    if (counts[c] < min_instances) deficient.push_back(c);
  }
  return deficient;
}

}  // namespace povmap
