#include "povmap/regression.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <string>

#include "povmap/error.hpp"
#include "povmap/geo_formats.hpp"
#include "povmap/random.hpp"

namespace povmap {

void column_moments(const Eigen::MatrixXd& X, Eigen::VectorXd& means, Eigen::VectorXd& stds) {
  const auto n = static_cast<double>(X.rows());
  means = X.colwise().mean().transpose();
  stds.resize(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double var = (X.col(j).array() - means(j)).square().sum() / n;
    const double sd = std::sqrt(var);
    // Constant columns standardize to zero and their weight shrinks away.
    stds(j) = sd > 0.0 ? sd : 1.0;
  }
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& X, const Eigen::VectorXd& means, const Eigen::VectorXd& stds) {
  return (X.rowwise() - means.transpose()).array().rowwise() / stds.transpose().array();
}

RidgeModel ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
  if (X.rows() < 2) throw InputError("ridge regression needs at least 2 samples");
  if (X.cols() < 1) throw InputError("ridge regression needs at least 1 feature");
  if (y.size() != X.rows()) throw InputError("target length does not match design matrix");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be finite and non-negative");
  if (!X.allFinite() || !y.allFinite()) throw InputError("non-finite value in regression input");

  RidgeModel m;
  m.lambda = lambda;
  column_moments(X, m.column_means, m.column_stds);
  const Eigen::MatrixXd Z = standardize(X, m.column_means, m.column_stds);
  m.intercept = y.mean();
  const Eigen::VectorXd yc = y.array() - m.intercept;

  Eigen::MatrixXd A = Z.transpose() * Z;
  A.diagonal().array() += lambda;
  const Eigen::VectorXd b = Z.transpose() * yc;

  const Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-12)) {
    throw InputError("singular normal equations (collinear or constant columns); use lambda > 0");
  }
  m.weights = llt.solve(b);
  if (!m.weights.allFinite()) throw InputError("ridge solve produced non-finite weights; use lambda > 0");
  return m;
}

Eigen::VectorXd predict(const RidgeModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != model.dims()) {
    throw InputError("feature width " + std::to_string(X.cols()) + " does not match model width " +
                     std::to_string(model.dims()));
  }
  const Eigen::VectorXd out = standardize(X, model.column_means, model.column_stds) * model.weights;
  return out.array() + model.intercept;
}

double r_squared(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) throw InputError("length mismatch");
  if (y.size() < 2) throw InputError("r-squared needs at least 2 samples");
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  if (!(ss_tot > 0.0)) throw InputError("r-squared undefined for a constant target");
  return 1.0 - ss_res / ss_tot;
}

double rmse(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) throw InputError("length mismatch");
  if (y.empty()) throw InputError("rmse of empty vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat) {
  return r_squared(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                   std::span<const double>(y_hat.data(), static_cast<std::size_t>(y_hat.size())));
}

double rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& y_hat) {
  return rmse(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
              std::span<const double>(y_hat.data(), static_cast<std::size_t>(y_hat.size())));
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int i = 0; i < 9; ++i) grid.push_back(std::pow(10.0, -3.0 + 0.75 * i));
  return grid;
}

std::vector<int> kfold_assignment(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw InputError("cross-validation needs k >= 2");
  if (static_cast<std::size_t>(k) > n) throw InputError("more folds than samples");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm);
  // The first n % k folds take one extra sample.
  std::vector<int> fold_of(n);
  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t extra = n % static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) fold_of[perm[pos++]] = f;
  }
  return fold_of;
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
  return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& y, const std::vector<Eigen::Index>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(idx[i]);
  return out;
}

}  // namespace

CvResult kfold_cv(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int k, std::span<const double> lambda_grid,
                  std::uint64_t seed) {
  if (y.size() != X.rows()) throw InputError("target length does not match design matrix");
  if (lambda_grid.empty()) throw InputError("empty lambda grid");

  CvResult res;
  res.fold_of = kfold_assignment(static_cast<std::size_t>(X.rows()), k, seed);
  res.lambda_grid.assign(lambda_grid.begin(), lambda_grid.end());

  std::vector<std::vector<Eigen::Index>> train_idx(k);
  std::vector<std::vector<Eigen::Index>> valid_idx(k);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (int f = 0; f < k; ++f) (res.fold_of[i] == f ? valid_idx : train_idx)[f].push_back(i);
  }

  std::vector<std::vector<EvalMetrics>> metrics(lambda_grid.size(), std::vector<EvalMetrics>(k));
  for (int f = 0; f < k; ++f) {
    const auto Xt = take_rows(X, train_idx[f]);
    const auto yt = take(y, train_idx[f]);
    const auto Xv = take_rows(X, valid_idx[f]);
    const auto yv = take(y, valid_idx[f]);
    for (std::size_t l = 0; l < lambda_grid.size(); ++l) {
      const auto model = ridge_fit(Xt, yt, lambda_grid[l]);
      const auto pred = predict(model, Xv);
      metrics[l][f] = {r_squared(yv, pred), rmse(yv, pred), valid_idx[f].size()};
    }
  }

  std::size_t best = 0;
  for (std::size_t l = 0; l < lambda_grid.size(); ++l) {
    double s = 0.0;
    for (const auto& m : metrics[l]) s += m.r_squared;
    res.mean_r2_per_lambda.push_back(s / k);
    const bool better = res.mean_r2_per_lambda[l] > res.mean_r2_per_lambda[best];
    const bool tie_smaller =
        res.mean_r2_per_lambda[l] == res.mean_r2_per_lambda[best] && lambda_grid[l] < lambda_grid[best];
    if (better || tie_smaller) best = l;
  }
  res.best_lambda = lambda_grid[best];
  res.fold_metrics = metrics[best];
  res.mean_r2 = res.mean_r2_per_lambda[best];
  double s = 0.0;
  for (const auto& m : res.fold_metrics) s += m.rmse;
  res.mean_rmse = s / k;
  return res;
}

void write_ridge_model(std::ostream& out, const RidgeModel& m) {
  const auto vec = [&](const char* key, const Eigen::VectorXd& v) {
    out << key << " =";
    for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << format_exact(v(i));
    out << '\n';
  };
  out << "lambda = " << format_exact(m.lambda) << '\n';
  out << "intercept = " << format_exact(m.intercept) << '\n';
  vec("weights", m.weights);
  vec("column_means", m.column_means);
  vec("column_stds", m.column_stds);
}

RidgeModel read_ridge_model(std::istream& in) {
  std::map<std::string, std::vector<double>> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    std::vector<double> vals;
    for (const auto& t : split_whitespace(body.substr(eq + 1))) {
      const auto v = parse_real(t);
      if (!v) throw ParseError(line_no, "non-numeric value '" + t + "'");
      vals.push_back(*v);
    }
    kv[std::string(trim(body.substr(0, eq)))] = std::move(vals);
  }
  const auto need = [&](const char* key) -> const std::vector<double>& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw InputError(std::string("ridge model file missing key '") + key + "'");
    return it->second;
  };
  const auto as_vec = [](const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
  };
  RidgeModel m;
  const auto& lam = need("lambda");
  const auto& icpt = need("intercept");
  if (lam.size() != 1 || icpt.size() != 1) throw InputError("lambda and intercept must be scalars");
  m.lambda = lam[0];
  m.intercept = icpt[0];
  m.weights = as_vec(need("weights"));
  m.column_means = as_vec(need("column_means"));
  m.column_stds = as_vec(need("column_stds"));
  if (m.column_means.size() != m.weights.size() || m.column_stds.size() != m.weights.size()) {
    throw InputError("ridge model vectors differ in length");
  }
  return m;
}

}  // namespace povmap
