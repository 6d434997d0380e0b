#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "povmap/geo_formats.hpp"
#include "povmap/random.hpp"

namespace povmap {

inline constexpr int kNumParentClasses = 10;

enum class ParentClass : int {
  FixedWingAircraft = 0,
  PassengerVehicle,
  Truck,
  RailwayVehicle,
  MaritimeVessel,
  EngineeringVehicle,
  Building,
  Helipad,
  VehicleLot,
  ConstructionSite,
};

inline constexpr std::array<std::string_view, kNumParentClasses> kParentClassNames = {
    "Fixed-Wing Aircraft", "Passenger Vehicle", "Truck",    "Railway Vehicle", "Maritime Vessel",
    "Engineering Vehicle", "Building",          "Helipad",  "Vehicle Lot",     "Construction Site"};

inline constexpr int kTruckClass = static_cast<int>(ParentClass::Truck);

/// Per-class counts indexed by parent class.
using ClassCounts = std::array<std::int64_t, kNumParentClasses>;

/// Child class name -> parent class, plus the set of names that are
/// discarded. Lookups ignore case and surrounding whitespace.
class ClassMap {
 public:
  /// xView grouping into the 10 parent classes.
  static ClassMap xview_default();
  /// `child<TAB>parent` per line; parent `None` marks a rejected child.
  static ClassMap parse(std::istream& in);

  void add(std::string_view child, int parent);
  void reject(std::string_view child);

  bool known(std::string_view name) const;
  bool rejected(std::string_view name) const;
  /// Parent index, or nullopt for rejected names. Throws InputError when
  /// the name is unknown.
  std::optional<int> group(std::string_view name) const;

  std::size_t size() const { return parents_.size() + rejects_.size(); }

 private:
  static std::string key(std::string_view name);
  std::map<std::string, int> parents_;
  std::set<std::string> rejects_;
};

std::optional<int> group_class(std::string_view child_name, const ClassMap& map);

struct NormalizedBox {
  int class_index = 0;
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

NormalizedBox to_normalized(const BoundingBox& box, int class_index, int img_w, int img_h);
/// Nearest-pixel inverse of to_normalized.
BoundingBox denormalize(const NormalizedBox& box, int img_w, int img_h);

/// `class cx cy w h`, 6 decimals.
std::string format_normalized(const NormalizedBox& box);

struct GroupedAnnotation {
  BoundingBox box;
  int class_index = 0;
};

struct KeptImage {
  std::vector<GroupedAnnotation> annotations;  // reject-set objects removed
  std::size_t incorrect = 0;                   // 0 or 1
  std::size_t rejected = 0;
};

struct DroppedImage {
  std::size_t incorrect = 0;
};

using ValidationResult = std::variant<KeptImage, DroppedImage>;

enum class Defect { None, Degenerate, OutOfBounds, UnknownClass };

Defect annotation_defect(const RawAnnotation& a, ImageDims dims, const ClassMap& map);

/// A single incorrect annotation is removed; two or more drop the image.
ValidationResult validate_image(std::span<const RawAnnotation> annotations, ImageDims dims, const ClassMap& map);

struct ClassWeights {
  std::array<std::int64_t, kNumParentClasses> weights{};
  std::vector<std::string> warnings;
};

ClassCounts count_instances(std::span<const GroupedAnnotation> annotations);

/// ceil(N_max / N_c) per class; absent classes get weight 0 and a warning.
ClassWeights class_weights(const ClassCounts& counts);

struct QuadrantRecord {
  std::string orig_filename;
  int row_i = 0;
  int col_j = 0;
  int toleft_x = 0;
  int toleft_y = 0;
  int orig_width = 0;
  int orig_height = 0;
  int quad_width = 0;
  int quad_height = 0;
  std::int64_t sum_w = 0;
  double prob = 0.0;
  double prob_from = 0.0;
  double prob_to = 0.0;
};

using QuadrantTable = std::array<QuadrantRecord, 16>;

/// Geometry only (sum_w = 0). Quadrant (row_i, col_j) starts at
/// (row_i * quad_width, col_j * quad_height); index-3 quadrants run to the
/// image edge.
QuadrantTable quadrant_geometry(std::string_view filename, int img_w, int img_h);

/// Fills prob / prob_from / prob_to from sum_w in (row_i, col_j) order.
void assign_probabilities(QuadrantTable& table);

/// Each object adds its class weight to the quadrant holding its box center.
QuadrantTable quadrant_table(std::string_view filename, std::span<const GroupedAnnotation> annotations,
                             std::span<const std::int64_t> weights, int img_w, int img_h);

/// Index (row_i * 4 + col_j) of the quadrant with prob_from <= u < prob_to.
std::size_t sample_quadrant(const QuadrantTable& table, double u);

struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;  // exclusive
  int y1 = 0;  // exclusive
};

PixelRect quadrant_rect(const QuadrantRecord& q);

struct Chip {
  int x0 = 0;
  int y0 = 0;
  int size = 0;
  std::vector<NormalizedBox> boxes;
};

/// Draws a chip whose center lies in `region`, clamped inside the image, and
/// remaps the annotations that keep at least `min_retention` of their area.
Chip sample_chip(ImageDims dims, const PixelRect& region, int chip_size, std::span<const GroupedAnnotation> annotations,
                 Rng& rng, double min_retention = 0.25);

std::vector<Column> quadrant_table_schema();
std::vector<Row> quadrant_rows(const QuadrantTable& table);

}  // namespace povmap
