#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "povmap/geo_formats.hpp"

namespace povmap {

struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;
  bool operator==(const GeoPoint&) const = default;
};

/// Meters per degree of latitude (and of longitude at the equator).
inline constexpr double kMetersPerDegree = 111320.0;
inline constexpr double kDefaultTileSideM = 450.0;

struct TileFootprint {
  GeoPoint center;
  double side_m = kDefaultTileSideM;
  double min_lon = 0.0;
  double max_lon = 0.0;
  double min_lat = 0.0;
  double max_lat = 0.0;

  bool contains(double lon, double lat) const {
    return lon >= min_lon && lon <= max_lon && lat >= min_lat && lat <= max_lat;
  }
};

/// One training-tile anchor aligned to a nightlight raster pixel.
struct CentroidRecord {
  int row = 0;
  int col = 0;
  GeoPoint center;
  TileFootprint footprint;
  double population = 0.0;
  double nightlight_sum = 0.0;
  std::optional<int> night_class;
};

/// Center of a raster cell. Throws InputError when out of range.
GeoPoint pixel_center(const AsciiGridRaster& raster, int row, int col);

/// Even-odd ray casting. Points on an edge or vertex count as inside.
bool point_in_polygon(GeoPoint p, std::span<const LonLat> ring);
bool inside_any(GeoPoint p, const PolygonSet& aois);

/// Square ground footprint of `side_m` meters around `center`, converted to
/// degrees with the equirectangular approximation.
TileFootprint tile_footprint(GeoPoint center, double side_m = kDefaultTileSideM);

/// Sum of cells whose centers lie inside the footprint (bounds inclusive).
/// Nodata cells contribute nothing.
double sum_raster_in_footprint(const AsciiGridRaster& raster, const TileFootprint& fp);

struct CentroidOptions {
  double side_m = kDefaultTileSideM;
  double min_pop = 2.0;
  unsigned threads = 1;
};

/// Every nightlight pixel whose center falls in an AOI and whose footprint
/// holds at least `min_pop` people, sorted by (row, col).
std::vector<CentroidRecord> extract_centroids(const AsciiGridRaster& vnl, const AsciiGridRaster& worldpop,
                                              const PolygonSet& aois, const CentroidOptions& options = {});

/// Identifier used for the imagery tile downloaded at a centroid.
std::string tile_id(int row, int col);

std::vector<Column> centroid_table_schema();
std::vector<Row> centroid_rows(std::span<const CentroidRecord> records);

/// Reads a centroid table back. Footprints are rebuilt from `side_m`.
std::vector<CentroidRecord> read_centroid_table(const TextTable& table, double side_m = kDefaultTileSideM);

}  // namespace povmap
