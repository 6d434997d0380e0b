#include "povmap/geo_formats.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>

#include "povmap/error.hpp"

namespace povmap {

// ---------------------------------------------------------------------------
// Text helpers

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.emplace_back(s.substr(start, i - start));
  }
  return out;
}

std::vector<std::string> split_on(std::string_view s, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(delim, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::optional<double> parse_real(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::int64_t> parse_integer(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string format_real(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                       std::chars_format::fixed, 6);
  if (ec != std::errc()) {
    // Magnitudes too large for the buffer; fall back to exact form.
    return format_exact(v);
  }
  return std::string(buf.data(), ptr);
}

std::string format_exact(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), ptr);
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

// ---------------------------------------------------------------------------
// ESRI ASCII grid

bool AsciiGridRaster::is_nodata(double v) const {
  if (std::isnan(v)) return true;
  return nodata.has_value() && v == *nodata;
}

AsciiGridRaster parse_ascii_grid(std::istream& in) {
  std::map<std::string, double> header;
  std::map<std::string, std::size_t> header_line;
  AsciiGridRaster r;

  std::string line;
  std::size_t line_no = 0;
  bool in_data = false;
  std::size_t rows_read = 0;

  const auto finish_header = [&](std::size_t at_line) {
    const auto need = [&](const char* key) {
      const auto it = header.find(key);
      if (it == header.end()) throw ParseError(at_line, std::string("missing header key '") + key + "'");
      return it->second;
    };
    const auto positive_int = [&](const char* key) {
      const double v = need(key);
      if (v < 1 || v != std::floor(v) || v > 1e9) {
        throw ParseError(header_line[key], std::string(key) + " must be a positive integer");
      }
      return static_cast<int>(v);
    };
    r.ncols = positive_int("ncols");
    r.nrows = positive_int("nrows");
    r.cellsize = need("cellsize");
    if (!(r.cellsize > 0.0) || !std::isfinite(r.cellsize)) {
      throw ParseError(header_line["cellsize"], "cellsize must be positive");
    }
    const auto corner = [&](const char* corner_key, const char* center_key) {
      const bool has_corner = header.count(corner_key) != 0;
      const bool has_center = header.count(center_key) != 0;
      if (has_corner && has_center) {
        throw ParseError(header_line[center_key],
                         std::string("both ") + corner_key + " and " + center_key + " given");
      }
      if (has_center) return header[center_key] - r.cellsize / 2.0;
      return need(corner_key);
    };
    r.xll = corner("xllcorner", "xllcenter");
    r.yll = corner("yllcorner", "yllcenter");
    if (const auto it = header.find("nodata_value"); it != header.end()) r.nodata = it->second;
    r.values.reserve(static_cast<std::size_t>(r.ncols) * static_cast<std::size_t>(r.nrows));
    in_data = true;
  };

  static const std::set<std::string> known_keys = {
      "ncols", "nrows", "xllcorner", "yllcorner", "xllcenter", "yllcenter", "cellsize", "nodata_value"};

  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    const auto tokens = split_whitespace(line);
    if (tokens.empty()) continue;

    if (!in_data) {
      const bool numeric_start = parse_real(tokens.front()).has_value();
      if (!numeric_start) {
        const std::string key = lower(tokens[0]);
        if (!known_keys.count(key)) throw ParseError(line_no, "unknown header key '" + tokens[0] + "'");
        if (tokens.size() != 2) throw ParseError(line_no, "header line must be 'key value'");
        const auto v = parse_real(tokens[1]);
        if (!v) throw ParseError(line_no, "non-numeric header value '" + tokens[1] + "'");
        if (header.count(key)) throw ParseError(line_no, "duplicate header key '" + tokens[0] + "'");
        header[key] = *v;
        header_line[key] = line_no;
        continue;
      }
      finish_header(line_no);
    }

    if (rows_read == static_cast<std::size_t>(r.nrows)) {
      throw ParseError(line_no, "more than nrows=" + std::to_string(r.nrows) + " data rows");
    }
    if (tokens.size() != static_cast<std::size_t>(r.ncols)) {
      throw ParseError(line_no, "row has " + std::to_string(tokens.size()) + " values, expected " +
                                    std::to_string(r.ncols));
    }
    for (const auto& t : tokens) {
      const auto v = parse_real(t);
      if (!v) throw ParseError(line_no, "non-numeric value '" + t + "'");
      r.values.push_back(*v);
    }
    ++rows_read;
  }

  if (!in_data) finish_header(line_no + 1);
  if (rows_read != static_cast<std::size_t>(r.nrows)) {
    throw ParseError(line_no + 1, "expected " + std::to_string(r.nrows) + " data rows, found " +
                                      std::to_string(rows_read));
  }
  return r;
}

void write_ascii_grid(std::ostream& out, const AsciiGridRaster& r) {
  out << "ncols " << r.ncols << '\n'
      << "nrows " << r.nrows << '\n'
      << "xllcorner " << format_exact(r.xll) << '\n'
      << "yllcorner " << format_exact(r.yll) << '\n'
      << "cellsize " << format_exact(r.cellsize) << '\n';
  if (r.nodata) out << "NODATA_value " << format_exact(*r.nodata) << '\n';
  for (int row = 0; row < r.nrows; ++row) {
    for (int col = 0; col < r.ncols; ++col) {
      if (col) out << ' ';
      out << format_exact(r.at(row, col));
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Polygons

PolygonSet parse_polygons(std::istream& in) {
  PolygonSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto tokens = split_whitespace(body);
    if (tokens.size() % 2 != 0) throw ParseError(line_no, "odd coordinate count");

    Ring ring;
    for (std::size_t i = 0; i < tokens.size(); i += 2) {
      const auto lon = parse_real(tokens[i]);
      const auto lat = parse_real(tokens[i + 1]);
      if (!lon || !lat) throw ParseError(line_no, "non-numeric coordinate");
      if (std::isnan(*lon) || std::isnan(*lat)) throw ParseError(line_no, "NaN coordinate");
      ring.push_back({*lon, *lat});
    }
    if (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();

    std::vector<LonLat> distinct = ring;
    std::sort(distinct.begin(), distinct.end(),
              [](const LonLat& a, const LonLat& b) { return a.lon < b.lon || (a.lon == b.lon && a.lat < b.lat); });
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3) throw ParseError(line_no, "ring needs at least 3 distinct vertices");

    set.polygons.push_back(std::move(ring));
  }
  return set;
}

void write_polygons(std::ostream& out, const PolygonSet& set) {
  for (const auto& ring : set.polygons) {
    for (std::size_t i = 0; i < ring.size(); ++i) {
      if (i) out << ' ';
      out << format_exact(ring[i].lon) << ' ' << format_exact(ring[i].lat);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Tables

std::optional<std::size_t> TextTable::find_column(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t TextTable::column(std::string_view name) const {
  if (auto i = find_column(name)) return *i;
  throw InputError("missing column '" + std::string(name) + "'");
}

double TextTable::real(std::size_t row, std::size_t col) const {
  const auto v = parse_real(rows_[row][col]);
  if (!v) {
    throw ParseError(lines_[row], "column '" + columns_[col] + "': non-numeric value '" + rows_[row][col] + "'");
  }
  return *v;
}

std::int64_t TextTable::integer(std::size_t row, std::size_t col) const {
  const auto v = parse_integer(rows_[row][col]);
  if (!v) {
    throw ParseError(lines_[row], "column '" + columns_[col] + "': expected integer, got '" + rows_[row][col] + "'");
  }
  return *v;
}

void TextTable::add_row(std::vector<std::string> fields, std::size_t line) {
  if (fields.size() != columns_.size()) {
    throw ParseError(line, "row has " + std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(columns_.size()));
  }
  rows_.push_back(std::move(fields));
  lines_.push_back(line);
}

TextTable parse_table(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  TextTable table;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (trim(line).empty()) continue;
    auto fields = split_on(line, '\t');
    if (!have_header) {
      std::set<std::string> seen;
      for (const auto& f : fields) {
        if (!seen.insert(f).second) throw ParseError(line_no, "duplicate column '" + f + "'");
      }
      table = TextTable(std::move(fields));
      have_header = true;
      continue;
    }
    table.add_row(std::move(fields), line_no);
  }
  if (!have_header) throw ParseError(line_no + 1, "missing header line");
  return table;
}

void write_table(std::ostream& out, std::span<const Column> schema, std::span<const Row> rows) {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (i) out << '\t';
    out << schema[i].name;
  }
  out << '\n';
  for (const auto& row : rows) {
    if (row.size() != schema.size()) throw InvariantError("write_table: row width does not match schema");
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << '\t';
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>) {
              out << format_real(v);
            } else {
              out << v;
            }
          },
          row[i]);
    }
    out << '\n';
  }
}

std::vector<Row> parse_typed_table(std::istream& in, std::span<const Column> schema) {
  const auto table = parse_table(in);
  if (table.columns().size() != schema.size()) {
    throw ParseError(1, "expected " + std::to_string(schema.size()) + " columns, found " +
                            std::to_string(table.columns().size()));
  }
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (table.columns()[i] != schema[i].name) {
      throw ParseError(1, "column " + std::to_string(i + 1) + " should be '" + schema[i].name + "', found '" +
                              table.columns()[i] + "'");
    }
  }
  std::vector<Row> rows;
  rows.reserve(table.size());
  for (std::size_t r = 0; r < table.size(); ++r) {
    Row row;
    for (std::size_t c = 0; c < schema.size(); ++c) {
      switch (schema[c].type) {
        case ColumnType::Text: row.emplace_back(table.text(r, c)); break;
        case ColumnType::Integer: row.emplace_back(table.integer(r, c)); break;
        case ColumnType::Real: row.emplace_back(table.real(r, c)); break;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Annotations

std::vector<RawAnnotation> parse_annotations(std::istream& in) {
  const auto table = parse_table(in);
  const auto id = table.column("image_id");
  const auto tlx = table.column("tlx");
  const auto tly = table.column("tly");
  const auto brx = table.column("brx");
  const auto bry = table.column("bry");
  const auto cls = table.column("class_name");

  const auto pixel = [&](std::size_t r, std::size_t c) {
    const auto v = table.integer(r, c);
    if (v < INT32_MIN || v > INT32_MAX) throw ParseError(table.line_of(r), "pixel coordinate out of range");
    return static_cast<int>(v);
  };

  std::vector<RawAnnotation> rows;
  rows.reserve(table.size());
  for (std::size_t r = 0; r < table.size(); ++r) {
    RawAnnotation a;
    a.image_id = table.text(r, id);
    a.box = {pixel(r, tlx), pixel(r, tly), pixel(r, brx), pixel(r, bry)};
    a.class_name = table.text(r, cls);
    a.line = table.line_of(r);
    if (a.image_id.empty()) throw ParseError(a.line, "empty image_id");
    rows.push_back(std::move(a));
  }
  return rows;
}

std::map<std::string, ImageDims> parse_image_dims(std::istream& in) {
  const auto table = parse_table(in);
  const auto id = table.column("image_id");
  const auto w = table.column("width");
  const auto h = table.column("height");
  std::map<std::string, ImageDims> dims;
  for (std::size_t r = 0; r < table.size(); ++r) {
    const auto width = table.integer(r, w);
    const auto height = table.integer(r, h);
    if (width < 1 || height < 1 || width > INT32_MAX || height > INT32_MAX) {
      throw ParseError(table.line_of(r), "image dimensions must be positive");
    }
    if (!dims.emplace(table.text(r, id), ImageDims{static_cast<int>(width), static_cast<int>(height)}).second) {
      throw ParseError(table.line_of(r), "duplicate image_id '" + table.text(r, id) + "'");
    }
  }
  return dims;
}

void write_annotations(std::ostream& out, std::span<const RawAnnotation> rows) {
  out << "image_id\ttlx\ttly\tbrx\tbry\tclass_name\n";
  for (const auto& a : rows) {
    out << a.image_id << '\t' << a.box.tlx << '\t' << a.box.tly << '\t' << a.box.brx << '\t' << a.box.bry << '\t'
        << a.class_name << '\n';
  }
}

}  // namespace povmap
