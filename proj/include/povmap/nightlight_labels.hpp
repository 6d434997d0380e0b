#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "povmap/centroid_grid.hpp"

namespace povmap {

/// One-dimensional Gaussian mixture. Components are kept sorted by
/// ascending mean, so component 0 is the darkest class.
struct Gmm1D {
  int k = 0;
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;
  double log_likelihood = 0.0;
};

struct GmmOptions {
  int k = 3;
  int max_iter = 500;
  double tol = 1e-8;
};

struct GmmFit {
  Gmm1D model;
  /// Total log-likelihood after each EM iteration (index 0 = initial model).
  std::vector<double> log_likelihood_trace;
  int iterations = 0;
  bool converged = false;
};

/// EM with quantile-seeded means, uniform weights and the global variance
/// as starting point. Deterministic for a given input.
GmmFit fit_gmm_1d(std::span<const double> values, const GmmOptions& options = {});

/// Posterior responsibilities p(component | value), summing to 1.
std::vector<double> posteriors(const Gmm1D& model, double value);

/// Argmax posterior; ties go to the lower index.
int assign_class(const Gmm1D& model, double value);

/// Sets night_class on every record from its nightlight_sum.
void label_centroids(std::span<CentroidRecord> records, const Gmm1D& model);

/// `key = value` text form; vectors are space-separated.
void write_gmm(std::ostream& out, const Gmm1D& model);
Gmm1D read_gmm(std::istream& in);

}  // namespace povmap
