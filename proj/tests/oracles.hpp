#pragma once

// Independent reference computations used to freeze expected values. None
// of these call into the library code they check.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

/// Solves A x = b by Gaussian elimination with partial pivoting.
std::vector<double> gauss_solve(Matrix A, std::vector<double> b);

/// Ridge weights on standardized columns (population std, zero std -> 1)
/// through explicit normal equations.
std::vector<double> ridge_weights(const Matrix& X, const std::vector<double>& y, double lambda);

struct SimpleBox {
  double x0, y0, x1, y1;
};

struct SimpleDet {
  int image;
  SimpleBox box;
  double conf;
};

struct SimpleGt {
  int image;
  SimpleBox box;
};

double box_iou(const SimpleBox& a, const SimpleBox& b);

/// AP by enumerating every rank cutoff: for each prefix of the
/// confidence-ranked detections, redo matching from scratch, take its
/// precision/recall, then average the best precision over 101 recall
/// levels. Single class.
double brute_force_ap(const std::vector<SimpleDet>& dets, const std::vector<SimpleGt>& gts, double iou_threshold);

/// Gaussian mixture posterior argmax by direct density evaluation.
int gmm_argmax(const std::vector<double>& weights, const std::vector<double>& means,
               const std::vector<double>& variances, double x);

/// Reference quadrant table for a 4763x3064 image (image 311.jpg).
struct RefQuadrantRow {
  int row_i, col_j, toleft_x, toleft_y;
  std::int64_t sum_w;
  double prob, prob_from, prob_to;
};
extern const std::array<RefQuadrantRow, 16> kRefQuadrants;
inline constexpr int kRefWidth = 4763;
inline constexpr int kRefHeight = 3064;
inline constexpr int kRefQuadWidth = 1190;
inline constexpr int kRefQuadHeight = 766;

}  // namespace oracle
