#include "povmap/annotation_pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <istream>

#include "povmap/error.hpp"

namespace povmap {

// ---------------------------------------------------------------------------
// Class grouping

std::string ClassMap::key(std::string_view name) {
  std::string out(trim(name));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void ClassMap::add(std::string_view child, int parent) {
  if (parent < 0 || parent >= kNumParentClasses) throw InputError("parent class index out of range");
  const auto k = key(child);
  if (rejects_.count(k)) throw InputError("class '" + std::string(child) + "' is both mapped and rejected");
  const auto [it, inserted] = parents_.emplace(k, parent);
  if (!inserted && it->second != parent) {
    throw InputError("class '" + std::string(child) + "' mapped to two parents");
  }
}

void ClassMap::reject(std::string_view child) {
  const auto k = key(child);
  if (parents_.count(k)) throw InputError("class '" + std::string(child) + "' is both mapped and rejected");
  rejects_.insert(k);
}

bool ClassMap::known(std::string_view name) const {
  const auto k = key(name);
  return parents_.count(k) != 0 || rejects_.count(k) != 0;
}

bool ClassMap::rejected(std::string_view name) const { return rejects_.count(key(name)) != 0; }

std::optional<int> ClassMap::group(std::string_view name) const {
  const auto k = key(name);
  if (const auto it = parents_.find(k); it != parents_.end()) return it->second;
  if (rejects_.count(k)) return std::nullopt;
  throw InputError("unknown object class '" + std::string(name) + "'");
}

ClassMap ClassMap::xview_default() {
  ClassMap m;
  for (int p = 0; p < kNumParentClasses; ++p) m.add(kParentClassNames[p], p);

  const auto add_all = [&](ParentClass parent, std::initializer_list<std::string_view> children) {
    for (auto c : children) m.add(c, static_cast<int>(parent));
  };
  add_all(ParentClass::FixedWingAircraft, {"Small Aircraft", "Cargo Plane"});
  add_all(ParentClass::PassengerVehicle, {"Small Car", "Bus"});
  add_all(ParentClass::Truck, {"Pickup Truck", "Utility Truck", "Cargo Truck", "Truck w/Box", "Truck Tractor",
                               "Trailer", "Truck w/Flatbed", "Truck w/Liquid"});
  add_all(ParentClass::RailwayVehicle, {"Passenger Car", "Cargo Car", "Flat Car", "Tank Car", "Locomotive"});
  // "Motoboat" is how the grouping table spells xView's "Motorboat"; accept both.
  add_all(ParentClass::MaritimeVessel, {"Motoboat", "Motorboat", "Sailboat", "Tugboat", "Barge", "Fishing Vessel",
                                        "Ferry", "Yacht", "Container Ship", "Oil Tanker"});
  add_all(ParentClass::EngineeringVehicle,
          {"Tower Crane", "Container Crane", "Reach Stacker", "Straddle Carrier", "Mobile Crane", "Dump Truck",
           "Haul Truck", "Scraper/Tractor", "Front Loader", "Excavator", "Cement Mixer", "Ground Grader",
           "Crane Truck"});
  add_all(ParentClass::Building, {"Hut/Tent", "Shed", "Aircraft Hangar", "Damaged Building", "Facility"});

  for (auto c : {"Pylon", "Shipping Container", "Shipping Container Lot", "Storage Tank", "Tower Structure",
                 "Helicopter"}) {
    m.reject(c);
  }
  return m;
}

ClassMap ClassMap::parse(std::istream& in) {
  ClassMap m;
  for (int p = 0; p < kNumParentClasses; ++p) m.add(kParentClassNames[p], p);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line).front() == '#') continue;
    const auto fields = split_on(line, '\t');
    if (fields.size() != 2) throw ParseError(line_no, "expected 'child<TAB>parent'");
    const auto parent = key(fields[1]);
    if (parent == "none") {
      m.reject(fields[0]);
      continue;
    }
    int idx = -1;
    for (int p = 0; p < kNumParentClasses; ++p) {
      if (key(kParentClassNames[p]) == parent) idx = p;
    }
    if (idx < 0) throw ParseError(line_no, "unknown parent class '" + fields[1] + "'");
    try {
      m.add(fields[0], idx);
    } catch (const InputError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return m;
}

std::optional<int> group_class(std::string_view child_name, const ClassMap& map) { return map.group(child_name); }

// ---------------------------------------------------------------------------
// Box conversion

NormalizedBox to_normalized(const BoundingBox& b, int class_index, int img_w, int img_h) {
  const double w = img_w;
  const double h = img_h;
  return {class_index, (b.tlx + b.brx) / (2.0 * w), (b.tly + b.bry) / (2.0 * h), (b.brx - b.tlx) / w,
          (b.bry - b.tly) / h};
}

BoundingBox denormalize(const NormalizedBox& n, int img_w, int img_h) {
  const double cx = n.cx * img_w;
  const double cy = n.cy * img_h;
  const double w = n.w * img_w;
  const double h = n.h * img_h;
  return {static_cast<int>(std::lround(cx - w / 2)), static_cast<int>(std::lround(cy - h / 2)),
          static_cast<int>(std::lround(cx + w / 2)), static_cast<int>(std::lround(cy + h / 2))};
}

std::string format_normalized(const NormalizedBox& b) {
  return std::to_string(b.class_index) + ' ' + format_real(b.cx) + ' ' + format_real(b.cy) + ' ' + format_real(b.w) +
         ' ' + format_real(b.h);
}

// ---------------------------------------------------------------------------
// Validation

Defect annotation_defect(const RawAnnotation& a, ImageDims dims, const ClassMap& map) {
  const auto& b = a.box;
  if (b.brx <= b.tlx || b.bry <= b.tly) return Defect::Degenerate;
  if (b.tlx < 0 || b.tly < 0 || b.brx > dims.width || b.bry > dims.height) return Defect::OutOfBounds;
  if (!map.known(a.class_name)) return Defect::UnknownClass;
  return Defect::None;
}

ValidationResult validate_image(std::span<const RawAnnotation> annotations, ImageDims dims, const ClassMap& map) {
  std::size_t incorrect = 0;
  std::vector<bool> bad(annotations.size(), false);
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    if (annotation_defect(annotations[i], dims, map) != Defect::None) {
      bad[i] = true;
      ++incorrect;
    }
  }
  if (incorrect >= 2) return DroppedImage{incorrect};

  KeptImage kept;
  kept.incorrect = incorrect;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    if (bad[i]) continue;
    const auto parent = map.group(annotations[i].class_name);
    if (!parent) {
      ++kept.rejected;
      continue;
    }
    kept.annotations.push_back({annotations[i].box, *parent});
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Class weights

ClassCounts count_instances(std::span<const GroupedAnnotation> annotations) {
  ClassCounts counts{};
  for (const auto& a : annotations) {
    if (a.class_index < 0 || a.class_index >= kNumParentClasses) throw InputError("class index out of range");
    ++counts[a.class_index];
  }
  return counts;
}

ClassWeights class_weights(const ClassCounts& counts) {
  const auto n_max = *std::max_element(counts.begin(), counts.end());
  if (n_max <= 0) throw InputError("cannot weight classes of an empty dataset");
  ClassWeights out;
  for (int c = 0; c < kNumParentClasses; ++c) {
    if (counts[c] < 0) throw InputError("negative class count");
    if (counts[c] == 0) {
      out.weights[c] = 0;
      out.warnings.push_back("class '" + std::string(kParentClassNames[c]) + "' has no instances; weight 0");
      continue;
    }
    out.weights[c] = (n_max + counts[c] - 1) / counts[c];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Quadrants

QuadrantTable quadrant_geometry(std::string_view filename, int img_w, int img_h) {
  if (img_w < 4 || img_h < 4) {
    throw InputError("image " + std::string(filename) + " too small for a 4x4 quadrant split");
  }
  const int qw = img_w / 4;
  const int qh = img_h / 4;
  QuadrantTable table;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      auto& q = table[static_cast<std::size_t>(i * 4 + j)];
      q.orig_filename = std::string(filename);
      q.row_i = i;
      q.col_j = j;
      q.toleft_x = i * qw;
      q.toleft_y = j * qh;
      q.orig_width = img_w;
      q.orig_height = img_h;
      q.quad_width = qw;
      q.quad_height = qh;
    }
  }
  return table;
}

void assign_probabilities(QuadrantTable& table) {
  std::int64_t total = 0;
  for (const auto& q : table) {
    if (q.sum_w < 0) throw InputError("negative quadrant weight");
    total += q.sum_w;
  }
  if (total == 0) {
    for (auto& q : table) q.prob = q.prob_from = q.prob_to = 0.0;
    return;
  }
  // Interval ends come from integer prefix sums, so consecutive intervals
  // share endpoints exactly and the last one closes at 1.
  const double t = static_cast<double>(total);
  std::int64_t cum = 0;
  for (auto& q : table) {
    q.prob = static_cast<double>(q.sum_w) / t;
    q.prob_from = static_cast<double>(cum) / t;
    cum += q.sum_w;
    q.prob_to = static_cast<double>(cum) / t;
  }
}

QuadrantTable quadrant_table(std::string_view filename, std::span<const GroupedAnnotation> annotations,
                             std::span<const std::int64_t> weights, int img_w, int img_h) {
  if (weights.size() != static_cast<std::size_t>(kNumParentClasses)) {
    throw InputError("expected one weight per parent class");
  }
  auto table = quadrant_geometry(filename, img_w, img_h);
  const int qw = table[0].quad_width;
  const int qh = table[0].quad_height;
  for (const auto& a : annotations) {
    if (a.class_index < 0 || a.class_index >= kNumParentClasses) throw InputError("class index out of range");
    // Doubled center coordinates keep the arithmetic in integers.
    const long long cx2 = static_cast<long long>(a.box.tlx) + a.box.brx;
    const long long cy2 = static_cast<long long>(a.box.tly) + a.box.bry;
    const int i = static_cast<int>(std::clamp(cx2 / (2LL * qw), 0LL, 3LL));
    const int j = static_cast<int>(std::clamp(cy2 / (2LL * qh), 0LL, 3LL));
    table[static_cast<std::size_t>(i * 4 + j)].sum_w += weights[a.class_index];
  }
  assign_probabilities(table);
  return table;
}

std::size_t sample_quadrant(const QuadrantTable& table, double u) {
  if (!(u >= 0.0 && u < 1.0)) throw InputError("sampling value must lie in [0, 1)");
  bool any = false;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].sum_w > 0) any = true;
    if (table[i].prob_from <= u && u < table[i].prob_to) return i;
  }
  if (!any) throw InputError("cannot sample from a quadrant table with zero total weight");
  // Unreachable with a table built by assign_probabilities (last prob_to == 1).
  throw InvariantError("quadrant intervals do not cover [0, 1)");
}

PixelRect quadrant_rect(const QuadrantRecord& q) {
  PixelRect r;
  r.x0 = q.toleft_x;
  r.y0 = q.toleft_y;
  r.x1 = q.row_i == 3 ? q.orig_width : q.toleft_x + q.quad_width;
  r.y1 = q.col_j == 3 ? q.orig_height : q.toleft_y + q.quad_height;
  return r;
}

Chip sample_chip(ImageDims dims, const PixelRect& region, int chip_size, std::span<const GroupedAnnotation> annotations,
                 Rng& rng, double min_retention) {
  if (chip_size < 1) throw InputError("chip size must be positive");
  if (chip_size > std::min(dims.width, dims.height)) throw InputError("chip larger than image");
  if (region.x1 <= region.x0 || region.y1 <= region.y0) throw InputError("empty sampling region");

  const int half = chip_size / 2;
  const auto draw = [&](int lo_center, int hi_center, int extent) {
    const auto origin = rng.uniform_int(lo_center - half, hi_center - half);
    return static_cast<int>(std::clamp<std::int64_t>(origin, 0, extent - chip_size));
  };

  Chip chip;
  chip.size = chip_size;
  chip.x0 = draw(region.x0, region.x1 - 1, dims.width);
  chip.y0 = draw(region.y0, region.y1 - 1, dims.height);

  const int cx1 = chip.x0 + chip_size;
  const int cy1 = chip.y0 + chip_size;
  for (const auto& a : annotations) {
    const auto& b = a.box;
    const int ix0 = std::max(b.tlx, chip.x0);
    const int iy0 = std::max(b.tly, chip.y0);
    const int ix1 = std::min(b.brx, cx1);
    const int iy1 = std::min(b.bry, cy1);
    if (ix1 <= ix0 || iy1 <= iy0) continue;
    const double area = static_cast<double>(b.brx - b.tlx) * (b.bry - b.tly);
    const double kept = static_cast<double>(ix1 - ix0) * (iy1 - iy0);
    if (kept < min_retention * area) continue;
    const BoundingBox local{ix0 - chip.x0, iy0 - chip.y0, ix1 - chip.x0, iy1 - chip.y0};
    chip.boxes.push_back(to_normalized(local, a.class_index, chip_size, chip_size));
  }
  return chip;
}

std::vector<Column> quadrant_table_schema() {
  return {{"orig_filename", ColumnType::Text}, {"row_i", ColumnType::Integer},      {"col_j", ColumnType::Integer},
          {"toleft_x", ColumnType::Integer},   {"toleft_y", ColumnType::Integer},   {"orig_width", ColumnType::Integer},
          {"orig_height", ColumnType::Integer}, {"quad_width", ColumnType::Integer}, {"quad_height", ColumnType::Integer},
          {"sum_w", ColumnType::Integer},      {"prob", ColumnType::Real},          {"prob_from", ColumnType::Real},
          {"prob_to", ColumnType::Real}};
}

std::vector<Row> quadrant_rows(const QuadrantTable& table) {
  std::vector<Row> rows;
  for (const auto& q : table) {
    rows.push_back({q.orig_filename, std::int64_t{q.row_i}, std::int64_t{q.col_j}, std::int64_t{q.toleft_x},
                    std::int64_t{q.toleft_y}, std::int64_t{q.orig_width}, std::int64_t{q.orig_height},
                    std::int64_t{q.quad_width}, std::int64_t{q.quad_height}, q.sum_w, q.prob, q.prob_from,
                    q.prob_to});
  }
  return rows;
}

}  // namespace povmap
