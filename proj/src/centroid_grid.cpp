#include "povmap/centroid_grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include "povmap/error.hpp"

namespace povmap {

GeoPoint pixel_center(const AsciiGridRaster& raster, int row, int col) {
  if (row < 0 || row >= raster.nrows || col < 0 || col >= raster.ncols) {
    throw InputError("pixel (" + std::to_string(row) + ", " + std::to_string(col) + ") outside " +
                     std::to_string(raster.nrows) + "x" + std::to_string(raster.ncols) + " raster");
  }
  return {raster.xll + (col + 0.5) * raster.cellsize,
          raster.yll + (raster.nrows - row - 0.5) * raster.cellsize};
}

namespace {

bool on_segment(GeoPoint p, LonLat a, LonLat b) {
  const double cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
  if (cross != 0.0) return false;
  return p.lon >= std::min(a.lon, b.lon) && p.lon <= std::max(a.lon, b.lon) &&
         p.lat >= std::min(a.lat, b.lat) && p.lat <= std::max(a.lat, b.lat);
}

}  // namespace

bool point_in_polygon(GeoPoint p, std::span<const LonLat> ring) {
  const std::size_t n = ring.size();
  if (n < 3) return false;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const LonLat& a = ring[i];
    const LonLat& b = ring[j];
    if (on_segment(p, a, b)) return true;
    if ((a.lat > p.lat) != (b.lat > p.lat)) {
      const double x_cross = (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon;
      if (p.lon < x_cross) inside = !inside;
    }
  }
  return inside;
}

bool inside_any(GeoPoint p, const PolygonSet& aois) {
  return std::any_of(aois.polygons.begin(), aois.polygons.end(),
                     [&](const Ring& ring) { return point_in_polygon(p, ring); });
}

TileFootprint tile_footprint(GeoPoint center, double side_m) {
  if (!(side_m > 0.0) || !std::isfinite(side_m)) throw InputError("tile side must be positive");
  if (!(std::abs(center.lat) < 89.0)) throw InputError("latitude too close to a pole for a tile footprint");
  const double half_h = (side_m / 2.0) / kMetersPerDegree;
  const double half_w = (side_m / 2.0) / (kMetersPerDegree * std::cos(center.lat * std::numbers::pi / 180.0));
  TileFootprint fp;
  fp.center = center;
  fp.side_m = side_m;
  fp.min_lon = center.lon - half_w;
  fp.max_lon = center.lon + half_w;
  fp.min_lat = center.lat - half_h;
  fp.max_lat = center.lat + half_h;
  return fp;
}

double sum_raster_in_footprint(const AsciiGridRaster& raster, const TileFootprint& fp) {
  const double cs = raster.cellsize;
  // Candidate index window, widened by one cell; exact membership is decided
  // per cell against the same center formula as pixel_center.
  const double col_lo = std::floor((fp.min_lon - raster.xll) / cs - 0.5) - 1;
  const double col_hi = std::ceil((fp.max_lon - raster.xll) / cs - 0.5) + 1;
  const double row_lo = std::floor(raster.nrows - 0.5 - (fp.max_lat - raster.yll) / cs) - 1;
  const double row_hi = std::ceil(raster.nrows - 0.5 - (fp.min_lat - raster.yll) / cs) + 1;

  const int c0 = static_cast<int>(std::max(0.0, col_lo));
  const int c1 = static_cast<int>(std::min(static_cast<double>(raster.ncols - 1), col_hi));
  const int r0 = static_cast<int>(std::max(0.0, row_lo));
  const int r1 = static_cast<int>(std::min(static_cast<double>(raster.nrows - 1), row_hi));

  double sum = 0.0;
  for (int row = r0; row <= r1; ++row) {
    const double lat = raster.yll + (raster.nrows - row - 0.5) * cs;
    if (lat < fp.min_lat || lat > fp.max_lat) continue;
    for (int col = c0; col <= c1; ++col) {
      const double lon = raster.xll + (col + 0.5) * cs;
      if (lon < fp.min_lon || lon > fp.max_lon) continue;
      const double v = raster.at(row, col);
      if (!raster.is_nodata(v)) sum += v;
    }
  }
  return sum;
}

std::vector<CentroidRecord> extract_centroids(const AsciiGridRaster& vnl, const AsciiGridRaster& worldpop,
                                              const PolygonSet& aois, const CentroidOptions& options) {
  if (aois.polygons.empty()) throw InputError("no areas of interest given");
  if (!(options.min_pop >= 0.0)) throw InputError("min_pop must be non-negative");

  const auto scan_rows = [&](int row_begin, int row_end) {
    std::vector<CentroidRecord> out;
    for (int row = row_begin; row < row_end; ++row) {
      for (int col = 0; col < vnl.ncols; ++col) {
        const GeoPoint c = pixel_center(vnl, row, col);
        if (!inside_any(c, aois)) continue;
        CentroidRecord rec;
        rec.row = row;
        rec.col = col;
        rec.center = c;
        rec.footprint = tile_footprint(c, options.side_m);
        rec.population = sum_raster_in_footprint(worldpop, rec.footprint);
        if (rec.population < options.min_pop) continue;
        rec.nightlight_sum = sum_raster_in_footprint(vnl, rec.footprint);
        out.push_back(std::move(rec));
      }
    }
    return out;
  };

  const unsigned threads = std::clamp(options.threads, 1u, static_cast<unsigned>(std::max(1, vnl.nrows)));
  if (threads == 1) return scan_rows(0, vnl.nrows);

  // Contiguous row bands concatenated in band order keep (row, col) order.
  std::vector<std::vector<CentroidRecord>> bands(threads);
  std::vector<std::thread> workers;
  for (unsigned t = 0; t < threads; ++t) {
    const int begin = static_cast<int>(static_cast<long long>(vnl.nrows) * t / threads);
    const int end = static_cast<int>(static_cast<long long>(vnl.nrows) * (t + 1) / threads);
    workers.emplace_back([&, t, begin, end] { bands[t] = scan_rows(begin, end); });
  }
  for (auto& w : workers) w.join();

  std::vector<CentroidRecord> out;
  for (auto& band : bands) {
    out.insert(out.end(), std::make_move_iterator(band.begin()), std::make_move_iterator(band.end()));
  }
  return out;
}

std::string tile_id(int row, int col) { return "r" + std::to_string(row) + "_c" + std::to_string(col); }

std::vector<Column> centroid_table_schema() {
  return {{"row", ColumnType::Integer},        {"col", ColumnType::Integer},
          {"lon", ColumnType::Real},           {"lat", ColumnType::Real},
          {"population", ColumnType::Real},    {"nightlight_sum", ColumnType::Real}};
}

std::vector<Row> centroid_rows(std::span<const CentroidRecord> records) {
  std::vector<Row> rows;
  rows.reserve(records.size());
  for (const auto& r : records) {
    rows.push_back({std::int64_t{r.row}, std::int64_t{r.col}, r.center.lon, r.center.lat, r.population,
                    r.nightlight_sum});
  }
  return rows;
}

std::vector<CentroidRecord> read_centroid_table(const TextTable& table, double side_m) {
  const auto row_c = table.column("row");
  const auto col_c = table.column("col");
  const auto lon_c = table.column("lon");
  const auto lat_c = table.column("lat");
  const auto pop_c = table.column("population");
  const auto nl_c = table.column("nightlight_sum");
  std::vector<CentroidRecord> out;
  out.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    CentroidRecord r;
    r.row = static_cast<int>(table.integer(i, row_c));
    r.col = static_cast<int>(table.integer(i, col_c));
    r.center = {table.real(i, lon_c), table.real(i, lat_c)};
    r.footprint = tile_footprint(r.center, side_m);
    r.population = table.real(i, pop_c);
    r.nightlight_sum = table.real(i, nl_c);
    if (!std::isfinite(r.nightlight_sum)) {
      throw ParseError(table.line_of(i), "nightlight_sum must be finite");
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace povmap
