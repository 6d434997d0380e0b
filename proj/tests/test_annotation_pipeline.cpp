#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "povmap/annotation_pipeline.hpp"
#include "povmap/error.hpp"

using namespace povmap;

namespace {

RawAnnotation raw(std::string cls, BoundingBox b) { return {"img", b, std::move(cls), 0}; }

const std::array<std::int64_t, kNumParentClasses> kDigitWeights{1000, 100, 10, 1, 0, 0, 0, 0, 0, 0};

// Places sum_w (read as base-10 digits over classes 0..3) as small boxes at
// each reference quadrant's center.
std::vector<GroupedAnnotation> reference_annotations() {
  std::vector<GroupedAnnotation> out;
  for (const auto& r : oracle::kRefQuadrants) {
    const int cx = r.toleft_x + oracle::kRefQuadWidth / 2;
    const int cy = r.toleft_y + oracle::kRefQuadHeight / 2;
    std::int64_t rest = r.sum_w;
    for (int cls = 0; cls < 4; ++cls) {
      const auto w = kDigitWeights[cls];
      for (std::int64_t n = rest / w; n > 0; --n) out.push_back({{cx - 5, cy - 5, cx + 5, cy + 5}, cls});
      rest %= w;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("class grouping") {
  const auto map = ClassMap::xview_default();
  CHECK(map.group("Small Car") == 1);
  CHECK(map.group("Bus") == 1);
  CHECK(map.group("Cargo Plane") == 0);
  CHECK(map.group("Truck w/Flatbed") == 2);
  CHECK(map.group("Locomotive") == 3);
  CHECK(map.group("Motoboat") == 4);
  CHECK(map.group("Motorboat") == 4);
  CHECK(map.group("Excavator") == 5);
  CHECK(map.group("Shed") == 6);
  CHECK(map.group("Helipad") == 7);
  CHECK(map.group("Vehicle Lot") == 8);
  CHECK(map.group("Construction Site") == 9);
  CHECK(map.group("  small car ") == 1);
  CHECK_FALSE(map.group("Pylon").has_value());
  CHECK_FALSE(map.group("Helicopter").has_value());
  CHECK(map.rejected("Storage Tank"));
  CHECK_THROWS_AS(map.group("Spaceship"), InputError);
  CHECK(group_class("Ferry", map) == 4);
}

TEST_CASE("class map file") {
  std::istringstream in("Car\tPassenger Vehicle\nTower\tNone\n# comment\n");
  const auto map = ClassMap::parse(in);
  CHECK(map.group("car") == 1);
  CHECK(map.rejected("Tower"));
  std::istringstream bad("Car\tNonsense\n");
  CHECK_THROWS_AS(ClassMap::parse(bad), ParseError);
  ClassMap m;
  m.add("A", 1);
  CHECK_THROWS_AS(m.add("a", 2), InputError);
  CHECK_THROWS_AS(m.reject("A"), InputError);
}

TEST_CASE("normalized boxes") {
  const auto n = to_normalized({10, 20, 30, 60}, 3, 100, 200);
  CHECK(n.cx == doctest::Approx(0.2));
  CHECK(n.cy == doctest::Approx(0.2));
  CHECK(n.w == doctest::Approx(0.2));
  CHECK(n.h == doctest::Approx(0.2));
  CHECK(format_normalized(n) == "3 0.200000 0.200000 0.200000 0.200000");

  Rng rng(2);
  for (int t = 0; t < 500; ++t) {
    const int w = static_cast<int>(rng.uniform_int(16, 5000));
    const int h = static_cast<int>(rng.uniform_int(16, 5000));
    const int x0 = static_cast<int>(rng.uniform_int(0, w - 2));
    const int y0 = static_cast<int>(rng.uniform_int(0, h - 2));
    const BoundingBox b{x0, y0, static_cast<int>(rng.uniform_int(x0 + 1, w)), static_cast<int>(rng.uniform_int(y0 + 1, h))};
    const auto back = denormalize(to_normalized(b, 0, w, h), w, h);
    CHECK(back == b);
  }
}

TEST_CASE("validation: incorrect annotations") {
  const auto map = ClassMap::xview_default();
  const ImageDims dims{100, 100};
  CHECK(annotation_defect(raw("Bus", {10, 10, 10, 20}), dims, map) == Defect::Degenerate);
  CHECK(annotation_defect(raw("Bus", {10, 10, 101, 20}), dims, map) == Defect::OutOfBounds);
  CHECK(annotation_defect(raw("Bus", {-1, 10, 10, 20}), dims, map) == Defect::OutOfBounds);
  CHECK(annotation_defect(raw("Dragon", {1, 1, 5, 5}), dims, map) == Defect::UnknownClass);
  CHECK(annotation_defect(raw("Bus", {0, 0, 100, 100}), dims, map) == Defect::None);

  SUBCASE("single incorrect annotation is removed") {
    const std::vector<RawAnnotation> a{raw("Bus", {1, 1, 5, 5}), raw("Bus", {5, 5, 5, 9}), raw("Shed", {20, 20, 40, 40})};
    const auto res = validate_image(a, dims, map);
    REQUIRE(std::holds_alternative<KeptImage>(res));
    const auto& k = std::get<KeptImage>(res);
    CHECK(k.incorrect == 1);
    REQUIRE(k.annotations.size() == 2);
    CHECK(k.annotations[0].class_index == 1);
    CHECK(k.annotations[1].class_index == 6);
  }
  SUBCASE("two incorrect annotations drop the image") {
    const std::vector<RawAnnotation> a{raw("Bus", {1, 1, 5, 5}), raw("Bus", {5, 5, 5, 9}), raw("Nope", {1, 1, 2, 2})};
    const auto res = validate_image(a, dims, map);
    REQUIRE(std::holds_alternative<DroppedImage>(res));
    CHECK(std::get<DroppedImage>(res).incorrect == 2);
  }
  SUBCASE("reject-set objects are filtered, not counted as incorrect") {
    const std::vector<RawAnnotation> a{raw("Pylon", {1, 1, 5, 5}), raw("Helicopter", {1, 1, 5, 5}),
                                       raw("Small Car", {1, 1, 5, 5})};
    const auto res = validate_image(a, dims, map);
    REQUIRE(std::holds_alternative<KeptImage>(res));
    const auto& k = std::get<KeptImage>(res);
    CHECK(k.incorrect == 0);
    CHECK(k.rejected == 2);
    CHECK(k.annotations.size() == 1);
  }
}

TEST_CASE("class weights") {
  ClassCounts c{};
  c = {100, 40, 7, 100, 1, 3, 99, 50, 33, 0};
  const auto w = class_weights(c);
  const std::array<std::int64_t, 10> expected{1, 3, 15, 1, 100, 34, 2, 2, 4, 0};
  CHECK(w.weights == expected);
  REQUIRE(w.warnings.size() == 1);
  CHECK(w.warnings[0].find("Construction Site") != std::string::npos);
  CHECK_THROWS_AS(class_weights(ClassCounts{}), InputError);

  std::vector<GroupedAnnotation> anns{{{0, 0, 1, 1}, 2}, {{0, 0, 1, 1}, 2}, {{0, 0, 1, 1}, 5}};
  const auto counts = count_instances(anns);
  CHECK(counts[2] == 2);
  CHECK(counts[5] == 1);
  CHECK(counts[0] == 0);
}

TEST_CASE("quadrant geometry matches the 4763x3064 reference table") {
  const auto t = quadrant_geometry("311.jpg", oracle::kRefWidth, oracle::kRefHeight);
  for (std::size_t i = 0; i < 16; ++i) {
    const auto& exp = oracle::kRefQuadrants[i];
    CHECK(t[i].row_i == exp.row_i);
    CHECK(t[i].col_j == exp.col_j);
    CHECK(t[i].toleft_x == exp.toleft_x);
    CHECK(t[i].toleft_y == exp.toleft_y);
    CHECK(t[i].quad_width == oracle::kRefQuadWidth);
    CHECK(t[i].quad_height == oracle::kRefQuadHeight);
    CHECK(t[i].orig_width == oracle::kRefWidth);
  }
  CHECK_THROWS_AS(quadrant_geometry("tiny", 3, 100), InputError);
}

TEST_CASE("quadrant probabilities match the reference table") {
  const auto anns = reference_annotations();
  const auto t = quadrant_table("311.jpg", anns, kDigitWeights, oracle::kRefWidth, oracle::kRefHeight);
  double prev_to = 0.0;
  for (std::size_t i = 0; i < 16; ++i) {
    const auto& exp = oracle::kRefQuadrants[i];
    CHECK(t[i].sum_w == exp.sum_w);
    CHECK(std::abs(t[i].prob - exp.prob) <= 1e-6);
    CHECK(std::abs(t[i].prob_from - exp.prob_from) <= 1e-6);
    CHECK(std::abs(t[i].prob_to - exp.prob_to) <= 1e-6);
    CHECK(t[i].prob_from == prev_to);
    prev_to = t[i].prob_to;
  }
  CHECK(t[15].prob_to == 1.0);
}

TEST_CASE("quadrant assignment by box center") {
  const std::array<std::int64_t, 10> w{1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  // 400x400 image, 100 px quadrants. Center (99.5, 0.5) is quadrant (0,0);
  // center (100, 100) is quadrant (1,1); right/bottom edge boxes land in index 3.
  const std::vector<GroupedAnnotation> a{{{99, 0, 100, 1}, 0}, {{99, 99, 101, 101}, 0}, {{398, 398, 400, 400}, 0}};
  const auto t = quadrant_table("x", a, w, 400, 400);
  CHECK(t[0].sum_w == 1);
  CHECK(t[5].sum_w == 1);
  CHECK(t[15].sum_w == 1);
  // 403 px: quadrants of 100 px, the last one absorbs the remainder.
  const std::vector<GroupedAnnotation> b{{{400, 400, 403, 403}, 0}};
  CHECK(quadrant_table("x", b, w, 403, 403)[15].sum_w == 1);
  CHECK(quadrant_rect(quadrant_geometry("x", 403, 403)[15]).x1 == 403);
}

TEST_CASE("sample_quadrant") {
  const auto t = quadrant_table("311.jpg", reference_annotations(), kDigitWeights, oracle::kRefWidth, oracle::kRefHeight);
  CHECK(sample_quadrant(t, 0.0) == 0);
  CHECK(sample_quadrant(t, 0.0007) == 0);
  CHECK(sample_quadrant(t, 0.001) == 2);  // quadrant 1 has zero width
  CHECK(sample_quadrant(t, 0.999999) == 15);
  CHECK_THROWS_AS(sample_quadrant(t, 1.0), InputError);
  CHECK_THROWS_AS(sample_quadrant(t, -0.1), InputError);

  auto empty = quadrant_geometry("x", 100, 100);
  assign_probabilities(empty);
  CHECK_THROWS_AS(sample_quadrant(empty, 0.5), InputError);

  Rng rng(4);
  for (int i = 0; i < 10000; ++i) {
    const auto q = sample_quadrant(t, rng.uniform());
    CHECK(t[q].sum_w > 0);
  }
}

TEST_CASE("sample_chip") {
  const ImageDims dims{1000, 800};
  const PixelRect region{750, 600, 1000, 800};
  const std::vector<GroupedAnnotation> anns{{{900, 700, 920, 720}, 4}, {{0, 0, 10, 10}, 1}};
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    const auto chip = sample_chip(dims, region, 416, anns, rng);
    CHECK(chip.size == 416);
    CHECK(chip.x0 >= 0);
    CHECK(chip.y0 >= 0);
    CHECK(chip.x0 + 416 <= dims.width);
    CHECK(chip.y0 + 416 <= dims.height);
    for (const auto& b : chip.boxes) {
      CHECK(b.cx - b.w / 2 >= -1e-12);
      CHECK(b.cx + b.w / 2 <= 1 + 1e-12);
      CHECK(b.cy - b.h / 2 >= -1e-12);
      CHECK(b.cy + b.h / 2 <= 1 + 1e-12);
    }
  }

  SUBCASE("partially covered box obeys retention") {
    // A chip pinned at the image origin cuts a 100-px-wide box at x = 416.
    const PixelRect corner{0, 0, 1, 1};
    const std::vector<GroupedAnnotation> cut{{{386, 10, 486, 20}, 2}, {{406, 30, 506, 40}, 2}};
    Rng r(1);
    const auto chip = sample_chip(dims, corner, 416, cut, r);
    CHECK(chip.x0 == 0);
    CHECK(chip.y0 == 0);
    REQUIRE(chip.boxes.size() == 1);  // 30% kept vs 10% kept
    CHECK(chip.boxes[0].w == doctest::Approx(30.0 / 416));
  }
  CHECK_THROWS_AS(sample_chip({100, 100}, region, 416, anns, rng), InputError);
}

TEST_CASE("quadrant table schema") {
  const auto schema = quadrant_table_schema();
  REQUIRE(schema.size() == 13);
  CHECK(schema.front().name == "orig_filename");
  CHECK(schema.back().name == "prob_to");
  const auto t = quadrant_geometry("a.jpg", 8, 8);
  CHECK(quadrant_rows(t).size() == 16);
}
