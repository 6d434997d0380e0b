#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace povmap {

/// Ridge model on standardized features. `weights` act on standardized
/// columns; `intercept` is the training-target mean and is not penalized.
struct RidgeModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double lambda = 0.0;
  Eigen::VectorXd column_means;
  Eigen::VectorXd column_stds;

  Eigen::Index dims() const { return weights.size(); }
};

/// Column means and population standard deviations; zero stds become 1.
void column_moments(const Eigen::MatrixXd& X, Eigen::VectorXd& means, Eigen::VectorXd& stds);

Eigen::MatrixXd standardize(const Eigen::MatrixXd& X, const Eigen::VectorXd& means, const Eigen::VectorXd& stds);

/// Solves (Zᵀ Z + λ I) w = Zᵀ (y - ȳ) for standardized Z via Cholesky.
RidgeModel ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda);

Eigen::VectorXd predict(const RidgeModel& model, const Eigen::MatrixXd& X);

double r_squared(std::span<const double> y, std::span<const double> y_hat);
double rmse(std::span<const double> y, std::span<const double> y_hat);
double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat);
double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat);

struct EvalMetrics {
  double r_squared = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;
};

/// 9 values log-spaced over [1e-3, 1e3].
std::vector<double> default_lambda_grid();

/// fold_of[i] = fold holding sample i; fold sizes differ by at most one.
std::vector<int> kfold_assignment(std::size_t n, int k, std::uint64_t seed);

struct CvResult {
  std::vector<int> fold_of;
  std::vector<double> lambda_grid;
  std::vector<double> mean_r2_per_lambda;
  double best_lambda = 0.0;
  std::vector<EvalMetrics> fold_metrics;  // at best_lambda
  double mean_r2 = 0.0;
  double mean_rmse = 0.0;
};

/// k-fold CV over the λ grid; picks the λ with the highest mean validation
/// r² (ties go to the smaller λ).
CvResult kfold_cv(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int k, std::span<const double> lambda_grid,
                  std::uint64_t seed);

void write_ridge_model(std::ostream& out, const RidgeModel& model);
RidgeModel read_ridge_model(std::istream& in);

}  // namespace povmap
