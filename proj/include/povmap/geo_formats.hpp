#pragma once

// On-disk formats: ESRI ASCII grids, the AOI polygon text format, and the
// tab-separated tables used everywhere else in the pipeline.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace povmap {

// ---------------------------------------------------------------------------
// ESRI ASCII grid

/// Georeferenced scalar grid. `xll`/`yll` always hold the lower-left corner
/// (center-form headers are converted on parse). Row 0 is the northernmost.
struct AsciiGridRaster {
  int ncols = 0;
  int nrows = 0;
  double xll = 0.0;
  double yll = 0.0;
  double cellsize = 0.0;
  std::optional<double> nodata;
  std::vector<double> values;  // row-major, nrows * ncols

  double at(int row, int col) const {
    return values[static_cast<std::size_t>(row) * static_cast<std::size_t>(ncols) +
                  static_cast<std::size_t>(col)];
  }
  bool is_nodata(double v) const;

  bool operator==(const AsciiGridRaster&) const = default;
};

AsciiGridRaster parse_ascii_grid(std::istream& in);
void write_ascii_grid(std::ostream& out, const AsciiGridRaster& raster);

// ---------------------------------------------------------------------------
// Polygons
//
// One ring per non-comment line: `lon lat lon lat ...`. Rings are implicitly
// closed; a repeated closing vertex is dropped.

struct LonLat {
  double lon = 0.0;
  double lat = 0.0;
  bool operator==(const LonLat&) const = default;
};

using Ring = std::vector<LonLat>;

struct PolygonSet {
  std::vector<Ring> polygons;
  std::size_t size() const { return polygons.size(); }
};

PolygonSet parse_polygons(std::istream& in);
void write_polygons(std::ostream& out, const PolygonSet& set);

// ---------------------------------------------------------------------------
// Tab-separated tables

/// Header-bearing table of raw text fields. Keeps the source line of every
/// row so typed accessors can report where a bad value came from.
class TextTable {
 public:
  TextTable() = default;
  TextTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }

  const std::vector<std::string>& row(std::size_t i) const { return rows_[i]; }
  std::size_t line_of(std::size_t i) const { return lines_[i]; }

  std::optional<std::size_t> find_column(std::string_view name) const;
  /// Throws InputError naming the missing column.
  std::size_t column(std::string_view name) const;

  const std::string& text(std::size_t row, std::size_t col) const { return rows_[row][col]; }
  double real(std::size_t row, std::size_t col) const;
  std::int64_t integer(std::size_t row, std::size_t col) const;

  void add_row(std::vector<std::string> fields, std::size_t line);

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::size_t> lines_;
};

TextTable parse_table(std::istream& in);

enum class ColumnType { Text, Integer, Real };

struct Column {
  std::string name;
  ColumnType type = ColumnType::Real;
};

using Cell = std::variant<std::string, std::int64_t, double>;
using Row = std::vector<Cell>;

/// Writes header plus rows in the given order. Reals use 6 decimal places.
void write_table(std::ostream& out, std::span<const Column> schema, std::span<const Row> rows);

/// Parses a table written by write_table back into typed cells. The header
/// must match the schema's column names in order.
std::vector<Row> parse_typed_table(std::istream& in, std::span<const Column> schema);

std::string format_real(double v);
/// Shortest text that parses back to exactly `v`.
std::string format_exact(double v);

/// Strict numeric parsing of a whole token. Returns nullopt on any junk.
std::optional<double> parse_real(std::string_view s);
std::optional<std::int64_t> parse_integer(std::string_view s);

std::vector<std::string> split_whitespace(std::string_view s);
std::vector<std::string> split_on(std::string_view s, char delim);
std::string_view trim(std::string_view s);

// ---------------------------------------------------------------------------
// Annotations

/// Pixel-corner box (xView convention).
struct BoundingBox {
  int tlx = 0;
  int tly = 0;
  int brx = 0;
  int bry = 0;
  bool operator==(const BoundingBox&) const = default;
};

struct RawAnnotation {
  std::string image_id;
  BoundingBox box;
  std::string class_name;
  std::size_t line = 0;
};

struct ImageDims {
  int width = 0;
  int height = 0;
};

struct RawAnnotationTable {
  std::vector<RawAnnotation> rows;
  std::map<std::string, ImageDims> dims;
};

/// Columns: image_id, tlx, tly, brx, bry, class_name (any order).
std::vector<RawAnnotation> parse_annotations(std::istream& in);
/// Columns: image_id, width, height.
std::map<std::string, ImageDims> parse_image_dims(std::istream& in);

void write_annotations(std::ostream& out, std::span<const RawAnnotation> rows);

}  // namespace povmap
