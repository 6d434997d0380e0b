#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "povmap/annotation_pipeline.hpp"
#include "povmap/geo_formats.hpp"

namespace povmap {

/// Axis-aligned pixel box with real coordinates (detector output).
struct Box {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  static Box from(const BoundingBox& b) { return {double(b.tlx), double(b.tly), double(b.brx), double(b.bry)}; }
  double area() const { return (x1 - x0) * (y1 - y0); }
};

struct Detection {
  std::string image_id;
  int class_index = 0;
  Box box;
  double confidence = 0.0;
};

struct GroundTruth {
  std::string image_id;
  int class_index = 0;
  Box box;
};

double iou(const Box& a, const Box& b);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct ApResult {
  std::optional<double> ap;  // nullopt when the class has no ground truth
  std::vector<PrPoint> pr;   // one point per ranked detection
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t num_gt = 0;
};

/// 101-point interpolated AP over the precision envelope of `pr`.
double interpolated_ap(std::span<const PrPoint> pr);

/// Greedy confidence-ranked matching of one class at one IoU threshold.
ApResult match_and_ap(std::span<const Detection> dets, std::span<const GroundTruth> gts, int class_index,
                      double iou_threshold);

/// 0.50, 0.55, ..., 0.95
std::array<double, 10> coco_iou_thresholds();

inline constexpr int kBackground = kNumParentClasses;
using ConfusionMatrix = std::array<std::array<std::int64_t, kNumParentClasses + 1>, kNumParentClasses + 1>;

/// Rows are ground-truth classes, columns detected classes; index 10 is
/// background (missed objects / spurious detections).
ConfusionMatrix confusion_matrix(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                                 double iou_threshold = 0.5, double conf_threshold = 0.25);

struct EvalReport {
  std::array<std::optional<double>, kNumParentClasses> ap50{};
  std::array<std::optional<double>, kNumParentClasses> ap5095{};
  std::array<std::vector<PrPoint>, kNumParentClasses> pr50{};
  double map50 = 0.0;
  double map5095 = 0.0;
  ConfusionMatrix confusion{};
  std::vector<std::string> warnings;
};

struct MapScores {
  double map50 = 0.0;
  double map5095 = 0.0;
};

/// Means over classes with ground truth. Throws InputError if there are none.
MapScores map_scores(std::span<const Detection> dets, std::span<const GroundTruth> gts);

EvalReport evaluate(std::span<const Detection> dets, std::span<const GroundTruth> gts, double iou_threshold,
                    double conf_threshold);

/// Columns: image_id, class_index, tlx, tly, brx, bry, confidence.
std::vector<Detection> read_detections(const TextTable& table);
/// Columns: image_id, class_index, tlx, tly, brx, bry.
std::vector<GroundTruth> read_ground_truth(const TextTable& table);

void write_eval_summary(std::ostream& out, const EvalReport& report);

}  // namespace povmap
