#include <set>
#include <sstream>

#include "doctest.h"
#include "povmap/error.hpp"
#include "povmap/province_etl.hpp"

using namespace povmap;

namespace {

TextTable table(const std::string& text) {
  std::istringstream in(text);
  return parse_table(in);
}

Detection det(std::string img, int cls, double conf) { return {std::move(img), cls, {0, 0, 1, 1}, conf}; }

std::map<std::string, ProvinceRecord> provinces(std::initializer_list<std::string> codes) {
  std::map<std::string, ProvinceRecord> out;
  double r = 0.1;
  for (const auto& c : codes) {
    out[c] = {c, "P" + c, r, 1000};
    r += 0.1;
  }
  return out;
}

}  // namespace

TEST_CASE("read provinces") {
  const auto p = read_provinces(table("geocode\tname\tpoverty_rate\tpopulation\nPH01\tIlocos\t0.25\t5000\n"));
  CHECK(p.at("PH01").poverty_rate == 0.25);
  CHECK_THROWS_AS(read_provinces(table("geocode\tname\tpoverty_rate\tpopulation\nA\tx\t1.5\t1\n")), ParseError);
  CHECK_THROWS_AS(read_provinces(table("geocode\tname\tpoverty_rate\tpopulation\nA\tx\t0.5\t1\nA\ty\t0.2\t1\n")),
                  ParseError);
}

TEST_CASE("aggregate counts") {
  const std::map<std::string, std::string> geo{{"i1", "A"}, {"i2", "A"}, {"i3", "B"}, {"i4", "C"}};
  const std::vector<Detection> d{det("i1", 2, 0.9), det("i2", 2, 0.6), det("i2", 1, 0.45), det("i3", 1, 0.5)};
  const auto c = aggregate_counts(d, geo, 0.5);
  CHECK(c.at("A")[2] == 2);
  CHECK(c.at("A")[1] == 0);
  CHECK(c.at("B")[1] == 1);
  CHECK(c.at("C") == ClassCounts{});  // province without detections still present
  CHECK(aggregate_counts(d, geo, 0.4).at("A")[1] == 1);

  const std::vector<Detection> stray{det("i9", 0, 0.9)};
  CHECK_THROWS_WITH_AS(aggregate_counts(stray, geo, 0.5), doctest::Contains("i9"), InputError);
}

TEST_CASE("relative counts") {
  ClassCounts c{};
  c[kTruckClass] = 4;
  c[1] = 10;
  c[6] = 2;
  auto r = relativize(c);
  CHECK_FALSE(r.truck_fallback);
  CHECK(r.values[1] == 2.5);
  CHECK(r.values[kTruckClass] == 1.0);
  CHECK(r.values[6] == 0.5);

  c[kTruckClass] = 0;
  r = relativize(c);
  CHECK(r.truck_fallback);
  CHECK(r.values[1] == 10);
  CHECK(r.values[kTruckClass] == 0);
}

TEST_CASE("detector features") {
  RelativeCounts rel;
  rel.values[1] = 2;
  const std::vector<double> pops{10, 20.5};
  const auto row = detector_features("A", rel, pops, 1000);
  CHECK(row.n_samples == 2);
  CHECK(row.pop_sampled == 30.5);
  CHECK(row.pop_province == 1000);
  CHECK_FALSE(row.no_tiles);
  CHECK(detector_features("B", rel, {}, 5).no_tiles);

  const auto schema = detector_feature_schema();
  REQUIRE(schema.size() == 14);
  CHECK(schema[0].name == "geocode");
  CHECK(schema[1].name == "rel_fixed_wing_aircraft");
  CHECK(schema[3].name == "rel_truck");
  CHECK(schema[13].name == "pop_province");

  std::stringstream ss;
  const std::vector<DetectorFeatureRow> rows{row};
  write_table(ss, schema, detector_feature_rows(rows));
  const auto ft = read_feature_table(parse_table(ss));
  CHECK(ft.columns.size() == 13);
  CHECK(ft.rows.at("A")[1] == 2);
  CHECK(ft.rows.at("A")[11] == 30.5);
}

TEST_CASE("ensemble concatenation") {
  const auto t1 = read_feature_table(table("geocode\tx\ty\nA\t1\t2\nB\t3\t4\n"));
  const auto t2 = read_feature_table(table("geocode\tz\nB\t6\nA\t5\n"));
  const std::vector<FeatureTable> tables{t1, t2};

  SUBCASE("aligned inputs") {
    const auto d = concat_features(tables, provinces({"A", "B"}));
    CHECK(d.feature_names == std::vector<std::string>{"m1_x", "m1_y", "m2_z"});
    REQUIRE(d.rows.size() == 2);
    CHECK(d.rows[0].geocode == "A");
    CHECK(d.rows[0].features == std::vector<double>{1, 2, 5});
    CHECK(d.rows[1].features == std::vector<double>{3, 4, 6});
    CHECK(d.rows[1].poverty_rate == doctest::Approx(0.2));

    std::stringstream ss;
    write_ensemble(ss, d);
    const auto back = read_ensemble(parse_table(ss));
    CHECK(back.feature_names == d.feature_names);
    CHECK(back.rows[1].features == d.rows[1].features);
  }
  SUBCASE("mismatch is an error unless permissive") {
    const auto p = provinces({"A", "B", "C"});
    CHECK_THROWS_WITH_AS(concat_features(tables, p), doctest::Contains("C"), InputError);
    const auto d = concat_features(tables, p, true);
    CHECK(d.rows.size() == 2);
    CHECK(d.warnings.size() == 1);
  }
  SUBCASE("missing feature value") {
    CHECK_THROWS_AS(read_feature_table(table("geocode\tx\nA\tnan\n")), ParseError);
  }
}

TEST_CASE("province split") {
  std::vector<std::string> codes;
  for (int i = 0; i < 180; ++i) codes.push_back("G" + std::to_string(1000 + i));

  const auto s = split_provinces(codes, 0.2, 42);
  CHECK(s.test.size() == 36);
  CHECK(s.train.size() == 144);
  std::set<std::string> all(s.test.begin(), s.test.end());
  for (const auto& c : s.train) CHECK(all.insert(c).second);
  CHECK(all.size() == 180);

  // Input order does not matter; the seed does.
  auto reversed = codes;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(split_provinces(reversed, 0.2, 42).test == s.test);
  CHECK(split_provinces(codes, 0.2, 43).test != s.test);

  CHECK(split_provinces({"a", "b", "c", "d", "e"}, 0.2, 1).test.size() == 1);
  CHECK_THROWS_AS(split_provinces({"a", "b", "c", "d"}, 0.2, 1), InputError);
  CHECK_THROWS_AS(split_provinces(codes, 1.0, 1), InputError);
}

TEST_CASE("class coverage") {
  ClassCounts c{};
  c.fill(20);
  c[7] = 9;
  CHECK(check_class_coverage(c) == std::vector<int>{7});
  CHECK(check_class_coverage(c, 9).empty());
}
