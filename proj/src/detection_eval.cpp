#include "povmap/detection_eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

#include "povmap/error.hpp"

namespace povmap {

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double interpolated_ap(std::span<const PrPoint> pr) {
  // Precision envelope from the right: env[i] = max precision at index >= i.
  std::vector<double> env(pr.size());
  double running = 0.0;
  for (std::size_t i = pr.size(); i-- > 0;) {
    running = std::max(running, pr[i].precision);
    env[i] = running;
  }
  double total = 0.0;
  std::size_t idx = 0;
  for (int s = 0; s <= 100; ++s) {
    const double r = s / 100.0;
    while (idx < pr.size() && pr[idx].recall < r) ++idx;
    if (idx < pr.size()) total += env[idx];
  }
  return total / 101.0;
}

ApResult match_and_ap(std::span<const Detection> dets, std::span<const GroundTruth> gts, int class_index,
                      double iou_threshold) {
  ApResult res;

  std::map<std::string, std::vector<std::size_t>> gt_by_image;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gts[g].class_index == class_index) {
      gt_by_image[gts[g].image_id].push_back(g);
      ++res.num_gt;
    }
  }

  std::vector<std::size_t> order;
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (dets[d].class_index == class_index) order.push_back(d);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });

  std::vector<bool> used(gts.size(), false);
  for (const auto d : order) {
    const auto& det = dets[d];
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    if (const auto it = gt_by_image.find(det.image_id); it != gt_by_image.end()) {
      for (const auto g : it->second) {
        if (used[g]) continue;
        const double o = iou(det.box, gts[g].box);
        if (o >= iou_threshold && o > best_iou) {
          best_iou = o;
          best = g;
        }
      }
    }
    if (best) {
      used[*best] = true;
      ++res.true_positives;
    } else {
      ++res.false_positives;
    }
    const double tp = static_cast<double>(res.true_positives);
    const double n = static_cast<double>(res.true_positives + res.false_positives);
    res.pr.push_back({res.num_gt ? tp / static_cast<double>(res.num_gt) : 0.0, tp / n});
  }

  if (res.num_gt > 0) res.ap = interpolated_ap(res.pr);
  return res;
}

std::array<double, 10> coco_iou_thresholds() {
  std::array<double, 10> t{};
  for (int i = 0; i < 10; ++i) t[i] = 0.5 + 0.05 * i;
  return t;
}

ConfusionMatrix confusion_matrix(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                                 double iou_threshold, double conf_threshold) {
  ConfusionMatrix m{};
  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> by_image;
  for (std::size_t g = 0; g < gts.size(); ++g) by_image[gts[g].image_id].first.push_back(g);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (dets[d].confidence >= conf_threshold) by_image[dets[d].image_id].second.push_back(d);
  }

  struct Pair {
    double iou;
    std::size_t g;
    std::size_t d;
  };
  for (const auto& [image, idx] : by_image) {
    const auto& [g_idx, d_idx] = idx;
    std::vector<Pair> pairs;
    for (auto g : g_idx) {
      for (auto d : d_idx) {
        const double o = iou(gts[g].box, dets[d].box);
        if (o >= iou_threshold) pairs.push_back({o, g, d});
      }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.iou > b.iou; });
    std::map<std::size_t, bool> g_used;
    std::map<std::size_t, bool> d_used;
    for (const auto& p : pairs) {
      if (g_used[p.g] || d_used[p.d]) continue;
      g_used[p.g] = d_used[p.d] = true;
      ++m[gts[p.g].class_index][dets[p.d].class_index];
    }
    for (auto g : g_idx) {
      if (!g_used[g]) ++m[gts[g].class_index][kBackground];
    }
    for (auto d : d_idx) {
      if (!d_used[d]) ++m[kBackground][dets[d].class_index];
    }
  }
  return m;
}

namespace {

void check_inputs(std::span<const Detection> dets, std::span<const GroundTruth> gts) {
  for (const auto& d : dets) {
    if (d.class_index < 0 || d.class_index >= kNumParentClasses) throw InputError("detection class out of range");
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) throw InputError("detection confidence outside [0, 1]");
  }
  for (const auto& g : gts) {
    if (g.class_index < 0 || g.class_index >= kNumParentClasses) throw InputError("ground-truth class out of range");
  }
}

}  // namespace

EvalReport evaluate(std::span<const Detection> dets, std::span<const GroundTruth> gts, double iou_threshold,
                    double conf_threshold) {
  check_inputs(dets, gts);
  EvalReport rep;
  const auto thresholds = coco_iou_thresholds();
  double sum50 = 0.0;
  double sum5095 = 0.0;
  int defined = 0;
  for (int c = 0; c < kNumParentClasses; ++c) {
    auto r50 = match_and_ap(dets, gts, c, 0.5);
    if (!r50.ap) {
      if (r50.false_positives > 0) {
        rep.warnings.push_back("class " + std::to_string(c) + " has detections but no ground truth; AP undefined");
      }
      continue;
    }
    double acc = 0.0;
    for (double t : thresholds) acc += *match_and_ap(dets, gts, c, t).ap;
    rep.ap50[c] = r50.ap;
    rep.ap5095[c] = acc / static_cast<double>(thresholds.size());
    rep.pr50[c] = std::move(r50.pr);
    sum50 += *rep.ap50[c];
    sum5095 += *rep.ap5095[c];
    ++defined;
  }
  if (defined == 0) throw InputError("no class has ground truth; mAP undefined");
  rep.map50 = sum50 / defined;
  rep.map5095 = sum5095 / defined;
  rep.confusion = confusion_matrix(dets, gts, iou_threshold, conf_threshold);
  return rep;
}

MapScores map_scores(std::span<const Detection> dets, std::span<const GroundTruth> gts) {
  const auto rep = evaluate(dets, gts, 0.5, 0.0);
  return {rep.map50, rep.map5095};
}

namespace {

template <typename T>
T read_box_row(const TextTable& t, std::size_t r, std::size_t id, std::size_t cls, std::array<std::size_t, 4> box) {
  T out;
  out.image_id = t.text(r, id);
  const auto c = t.integer(r, cls);
  if (c < 0 || c >= kNumParentClasses) throw ParseError(t.line_of(r), "class_index out of range");
  out.class_index = static_cast<int>(c);
  out.box = {t.real(r, box[0]), t.real(r, box[1]), t.real(r, box[2]), t.real(r, box[3])};
  if (!(out.box.x1 > out.box.x0) || !(out.box.y1 > out.box.y0)) throw ParseError(t.line_of(r), "degenerate box");
  return out;
}

}  // namespace

std::vector<Detection> read_detections(const TextTable& t) {
  const auto id = t.column("image_id");
  const auto cls = t.column("class_index");
  const std::array<std::size_t, 4> box{t.column("tlx"), t.column("tly"), t.column("brx"), t.column("bry")};
  const auto conf = t.column("confidence");
  std::vector<Detection> out;
  out.reserve(t.size());
  for (std::size_t r = 0; r < t.size(); ++r) {
    auto d = read_box_row<Detection>(t, r, id, cls, box);
    d.confidence = t.real(r, conf);
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) throw ParseError(t.line_of(r), "confidence outside [0, 1]");
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<GroundTruth> read_ground_truth(const TextTable& t) {
  const auto id = t.column("image_id");
  const auto cls = t.column("class_index");
  const std::array<std::size_t, 4> box{t.column("tlx"), t.column("tly"), t.column("brx"), t.column("bry")};
  std::vector<GroundTruth> out;
  out.reserve(t.size());
  for (std::size_t r = 0; r < t.size(); ++r) out.push_back(read_box_row<GroundTruth>(t, r, id, cls, box));
  return out;
}

void write_eval_summary(std::ostream& out, const EvalReport& rep) {
  out << "map50=" << format_real(rep.map50) << '\n';
  out << "map5095=" << format_real(rep.map5095) << '\n';
  for (int c = 0; c < kNumParentClasses; ++c) {
    out << "ap50_" << c << '=' << (rep.ap50[c] ? format_real(*rep.ap50[c]) : "undefined") << '\n';
  }
  for (int c = 0; c < kNumParentClasses; ++c) {
    out << "ap5095_" << c << '=' << (rep.ap5095[c] ? format_real(*rep.ap5095[c]) : "undefined") << '\n';
  }
}

}  // namespace povmap
