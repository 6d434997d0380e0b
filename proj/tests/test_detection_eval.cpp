#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "povmap/detection_eval.hpp"
#include "povmap/error.hpp"
#include "povmap/random.hpp"

using namespace povmap;

namespace {

Detection det(std::string img, int cls, Box b, double conf) { return {std::move(img), cls, b, conf}; }
GroundTruth gt(std::string img, int cls, Box b) { return {std::move(img), cls, b}; }

Box random_box(Rng& rng) {
  const double x = rng.uniform() * 40;
  const double y = rng.uniform() * 40;
  return {x, y, x + 5 + rng.uniform() * 20, y + 5 + rng.uniform() * 20};
}

}  // namespace

TEST_CASE("iou") {
  CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 10}) == 1.0);
  CHECK(iou({0, 0, 10, 10}, {10, 0, 20, 10}) == 0.0);
  CHECK(iou({0, 0, 10, 10}, {5, 0, 15, 10}) == doctest::Approx(50.0 / 150.0));
  CHECK(iou({0, 0, 2, 2}, {1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("ap: perfect, empty and missed") {
  const std::vector<GroundTruth> g{gt("a", 0, {0, 0, 10, 10}), gt("a", 0, {20, 20, 30, 30})};
  SUBCASE("perfect detector") {
    const std::vector<Detection> d{det("a", 0, {0, 0, 10, 10}, 0.9), det("a", 0, {20, 20, 30, 30}, 0.8)};
    CHECK(*match_and_ap(d, g, 0, 0.5).ap == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("no detections") { CHECK(*match_and_ap({}, g, 0, 0.5).ap == 0.0); }
  SUBCASE("no ground truth: undefined") {
    const std::vector<Detection> d{det("a", 1, {0, 0, 10, 10}, 0.9)};
    CHECK_FALSE(match_and_ap(d, g, 1, 0.5).ap.has_value());
  }
  SUBCASE("half recall") {
    const std::vector<Detection> d{det("a", 0, {0, 0, 10, 10}, 0.9)};
    // Precision 1 up to recall 0.5: 51 of the 101 levels.
    CHECK(*match_and_ap(d, g, 0, 0.5).ap == doctest::Approx(51.0 / 101.0).epsilon(1e-12));
  }
  SUBCASE("detection on another image does not match") {
    const std::vector<Detection> d{det("b", 0, {0, 0, 10, 10}, 0.9)};
    const auto r = match_and_ap(d, g, 0, 0.5);
    CHECK(r.false_positives == 1);
    CHECK(*r.ap == 0.0);
  }
}

TEST_CASE("ap: duplicate detections count as false positives") {
  const std::vector<GroundTruth> g{gt("a", 0, {0, 0, 10, 10})};
  const std::vector<Detection> d{det("a", 0, {0, 0, 10, 10}, 0.9), det("a", 0, {0, 0, 10, 10}, 0.8)};
  const auto r = match_and_ap(d, g, 0, 0.5);
  CHECK(r.true_positives == 1);
  CHECK(r.false_positives == 1);
  CHECK(*r.ap == doctest::Approx(1.0));
}

TEST_CASE("ap matches brute-force enumeration") {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const int n_gt = static_cast<int>(rng.uniform_int(1, 3));
    const int n_det = static_cast<int>(rng.uniform_int(0, 5));
    std::vector<GroundTruth> gts;
    std::vector<oracle::SimpleGt> ogts;
    for (int i = 0; i < n_gt; ++i) {
      const int img = static_cast<int>(rng.uniform_int(0, 1));
      const auto b = random_box(rng);
      gts.push_back(gt(std::to_string(img), 0, b));
      ogts.push_back({img, {b.x0, b.y0, b.x1, b.y1}});
    }
    std::vector<Detection> dets;
    std::vector<oracle::SimpleDet> odets;
    for (int i = 0; i < n_det; ++i) {
      const int img = static_cast<int>(rng.uniform_int(0, 1));
      Box b;
      if (rng.uniform() < 0.6) {
        // Jitter a ground-truth box so matches actually occur.
        const auto& src = gts[static_cast<std::size_t>(rng.uniform_int(0, n_gt - 1))].box;
        const double j = rng.uniform() * 6 - 3;
        b = {src.x0 + j, src.y0 - j, src.x1 + j, src.y1};
      } else {
        b = random_box(rng);
      }
      const double conf = std::round(rng.uniform() * 10) / 10;  // ties on purpose
      dets.push_back(det(std::to_string(img), 0, b, conf));
      odets.push_back({img, {b.x0, b.y0, b.x1, b.y1}, conf});
    }
    for (double thr : {0.5, 0.75}) {
      const double expected = oracle::brute_force_ap(odets, ogts, thr);
      const auto got = match_and_ap(dets, gts, 0, thr);
      REQUIRE(got.ap.has_value());
      CHECK(std::abs(*got.ap - expected) <= 1e-9);
    }
  }
}

TEST_CASE("coco thresholds") {
  const auto t = coco_iou_thresholds();
  CHECK(t.front() == 0.5);
  CHECK(t.back() == doctest::Approx(0.95));
}

TEST_CASE("confusion matrix") {
  const std::vector<GroundTruth> g{gt("a", 1, {0, 0, 10, 10}), gt("a", 2, {50, 50, 60, 60}), gt("b", 3, {0, 0, 5, 5})};
  const std::vector<Detection> d{
      det("a", 1, {0, 0, 10, 10}, 0.9),      // correct
      det("a", 4, {50, 50, 60, 61}, 0.8),    // wrong class
      det("a", 1, {100, 100, 110, 110}, 0.9),  // spurious
      det("b", 3, {0, 0, 5, 5}, 0.1),        // below confidence: object missed
  };
  const auto m = confusion_matrix(d, g, 0.5, 0.25);
  CHECK(m[1][1] == 1);
  CHECK(m[2][4] == 1);
  CHECK(m[kBackground][1] == 1);
  CHECK(m[3][kBackground] == 1);
  std::int64_t total = 0;
  for (const auto& row : m) {
    for (auto v : row) total += v;
  }
  CHECK(total == 4);
}

TEST_CASE("evaluate") {
  const std::vector<GroundTruth> g{gt("a", 0, {0, 0, 10, 10}), gt("a", 2, {20, 20, 30, 30})};
  const std::vector<Detection> d{det("a", 0, {0, 0, 10, 10}, 0.9), det("a", 5, {0, 0, 3, 3}, 0.4)};
  const auto rep = evaluate(d, g, 0.5, 0.25);
  CHECK(rep.ap50[0] == doctest::Approx(1.0));
  CHECK(rep.ap50[2] == 0.0);
  CHECK_FALSE(rep.ap50[5].has_value());
  CHECK(rep.map50 == doctest::Approx(0.5));
  CHECK(rep.warnings.size() == 1);

  std::ostringstream out;
  write_eval_summary(out, rep);
  CHECK(out.str().find("map50=0.500000\n") != std::string::npos);
  CHECK(out.str().find("ap50_5=undefined\n") != std::string::npos);

  CHECK_THROWS_AS(evaluate(d, {}, 0.5, 0.25), InputError);
  const auto s = map_scores(d, g);
  CHECK(s.map50 == rep.map50);
}

TEST_CASE("read detections and ground truth") {
  std::istringstream in("image_id\tclass_index\ttlx\ttly\tbrx\tbry\tconfidence\na\t2\t0\t0\t4.5\t4\t0.75\n");
  const auto d = read_detections(parse_table(in));
  REQUIRE(d.size() == 1);
  CHECK(d[0].class_index == 2);
  CHECK(d[0].box.x1 == 4.5);
  CHECK(d[0].confidence == 0.75);

  std::istringstream bad("image_id\tclass_index\ttlx\ttly\tbrx\tbry\tconfidence\na\t2\t0\t0\t4\t4\t1.5\n");
  CHECK_THROWS_AS(read_detections(parse_table(bad)), ParseError);
  std::istringstream badcls("image_id\tclass_index\ttlx\ttly\tbrx\tbry\na\t10\t0\t0\t4\t4\n");
  CHECK_THROWS_AS(read_ground_truth(parse_table(badcls)), ParseError);
}
