#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "povmap/annotation_pipeline.hpp"
#include "povmap/detection_eval.hpp"
#include "povmap/geo_formats.hpp"

namespace povmap {

struct ProvinceRecord {
  std::string geocode;
  std::string name;
  double poverty_rate = 0.0;
  double population = 0.0;
};

/// Columns: geocode, name, poverty_rate, population. Geocodes must be unique.
std::map<std::string, ProvinceRecord> read_provinces(const TextTable& table);

/// image_id -> geocode. Columns: image_id, geocode.
std::map<std::string, std::string> read_image_geocodes(const TextTable& table);

/// Per-province detection counts above `conf_threshold`. Every geocode in
/// the map's codomain appears, with zeros when nothing was detected.
std::map<std::string, ClassCounts> aggregate_counts(std::span<const Detection> dets,
                                                    const std::map<std::string, std::string>& image_geocodes,
                                                    double conf_threshold);

struct RelativeCounts {
  std::array<double, kNumParentClasses> values{};
  bool truck_fallback = false;  // no trucks; counts left absolute
};

/// Counts divided by the truck count (divisor 1 when there are no trucks).
RelativeCounts relativize(const ClassCounts& counts);

struct DetectorFeatureRow {
  std::string geocode;
  std::array<double, kNumParentClasses> rel_counts{};
  std::int64_t n_samples = 0;
  double pop_sampled = 0.0;
  double pop_province = 0.0;
  bool truck_fallback = false;
  bool no_tiles = false;
};

DetectorFeatureRow detector_features(const std::string& geocode, const RelativeCounts& rel,
                                     std::span<const double> tile_populations, double pop_province);

std::vector<Column> detector_feature_schema();
std::vector<Row> detector_feature_rows(std::span<const DetectorFeatureRow> rows);

/// Geocode-keyed numeric feature table (geocode column + numeric columns).
struct FeatureTable {
  std::vector<std::string> columns;  // numeric column names, geocode excluded
  std::map<std::string, std::vector<double>> rows;
};

FeatureTable read_feature_table(const TextTable& table);

struct EnsembleRow {
  std::string geocode;
  std::vector<double> features;
  double poverty_rate = 0.0;
};

struct EnsembleDataset {
  std::vector<std::string> feature_names;
  std::vector<EnsembleRow> rows;  // sorted by geocode
  std::vector<std::string> warnings;
};

/// Inner join of all feature tables and the province table on geocode.
/// Unless `permissive`, any geocode missing from some input is an error.
EnsembleDataset concat_features(std::span<const FeatureTable> tables,
                                const std::map<std::string, ProvinceRecord>& provinces, bool permissive = false);

void write_ensemble(std::ostream& out, const EnsembleDataset& data);
EnsembleDataset read_ensemble(const TextTable& table);

struct ProvinceSplit {
  std::vector<std::string> train;  // sorted
  std::vector<std::string> test;   // sorted
};

/// round(test_fraction * n) provinces, chosen by a seeded shuffle of the
/// sorted geocodes.
ProvinceSplit split_provinces(std::vector<std::string> geocodes, double test_fraction, std::uint64_t seed);

/// Parent classes with fewer than `min_instances` objects.
std::vector<int> check_class_coverage(const ClassCounts& counts, std::int64_t min_instances = 10);

}  // namespace povmap
