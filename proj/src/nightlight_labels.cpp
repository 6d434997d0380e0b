#include "povmap/nightlight_labels.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>

#include "povmap/error.hpp"

namespace povmap {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

double log_density(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLogTwoPi + std::log(var) + d * d / var);
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Linear-interpolated quantile of sorted data.
double quantile(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double total_log_likelihood(const Gmm1D& m, std::span<const double> values, std::vector<double>& scratch) {
  double ll = 0.0;
  for (double x : values) {
    for (int j = 0; j < m.k; ++j) scratch[j] = std::log(m.weights[j]) + log_density(x, m.means[j], m.variances[j]);
    ll += log_sum_exp(scratch);
  }
  return ll;
}

void sort_components(Gmm1D& m) {
  std::vector<int> order(m.k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return m.means[a] < m.means[b]; });
  Gmm1D sorted = m;
  for (int j = 0; j < m.k; ++j) {
    sorted.weights[j] = m.weights[order[j]];
    sorted.means[j] = m.means[order[j]];
    sorted.variances[j] = m.variances[order[j]];
  }
  m = std::move(sorted);
}

}  // namespace

GmmFit fit_gmm_1d(std::span<const double> values, const GmmOptions& options) {
  const int k = options.k;
  if (k < 1) throw InputError("mixture needs at least one component");
  if (values.size() < static_cast<std::size_t>(k)) throw InputError("fewer values than mixture components");
  for (double v : values) {
    if (!std::isfinite(v)) throw InputError("non-finite value in mixture input");
  }

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto distinct = static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  if (distinct < static_cast<std::size_t>(k)) {
    throw InputError("only " + std::to_string(distinct) + " distinct values for " + std::to_string(k) +
                     " mixture components");
  }
  sorted.assign(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());

  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= n;
  const double floor = 1e-6 * (var + 1e-12);

  Gmm1D m;
  m.k = k;
  m.weights.assign(k, 1.0 / k);
  m.variances.assign(k, std::max(var, floor));
  for (int j = 0; j < k; ++j) m.means.push_back(quantile(sorted, (j + 0.5) / k));

  std::vector<double> scratch(k);
  std::vector<double> resp(values.size() * static_cast<std::size_t>(k));

  GmmFit fit;
  double ll = total_log_likelihood(m, values, scratch);
  fit.log_likelihood_trace.push_back(ll);

  for (int iter = 0; iter < options.max_iter; ++iter) {
    // E step
    for (std::size_t i = 0; i < values.size(); ++i) {
      for (int j = 0; j < k; ++j) {
        scratch[j] = std::log(m.weights[j]) + log_density(values[i], m.means[j], m.variances[j]);
      }
      const double lse = log_sum_exp(scratch);
      for (int j = 0; j < k; ++j) resp[i * k + j] = std::exp(scratch[j] - lse);
    }
    // M step
    for (int j = 0; j < k; ++j) {
      double nk = 0.0;
      double sx = 0.0;
      for (std::size_t i = 0; i < values.size(); ++i) {
        nk += resp[i * k + j];
        sx += resp[i * k + j] * values[i];
      }
      // A component that lost all support keeps its parameters with a tiny weight.
      nk = std::max(nk, 10 * std::numeric_limits<double>::min());
      const double mu = sx / nk;
      double sv = 0.0;
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = values[i] - mu;
        sv += resp[i * k + j] * d * d;
      }
      m.weights[j] = nk / n;
      m.means[j] = mu;
      m.variances[j] = std::max(sv / nk, floor);
    }
    const double wsum = std::accumulate(m.weights.begin(), m.weights.end(), 0.0);
    for (double& w : m.weights) w /= wsum;

    const double next = total_log_likelihood(m, values, scratch);
    fit.log_likelihood_trace.push_back(next);
    fit.iterations = iter + 1;
    const double delta = next - ll;
    ll = next;
    if (std::abs(delta) < options.tol) {
      fit.converged = true;
      break;
    }
  }

  m.log_likelihood = ll;
  sort_components(m);
  fit.model = std::move(m);
  return fit;
}

std::vector<double> posteriors(const Gmm1D& model, double value) {
  std::vector<double> logp(model.k);
  for (int j = 0; j < model.k; ++j) {
    logp[j] = std::log(model.weights[j]) + log_density(value, model.means[j], model.variances[j]);
  }
  const double lse = log_sum_exp(logp);
  for (double& p : logp) p = std::exp(p - lse);
  return logp;
}

int assign_class(const Gmm1D& model, double value) {
  // Compare unnormalized log posteriors; strict '>' keeps the lower index on ties.
  int best = 0;
  double best_lp = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < model.k; ++j) {
    const double lp = std::log(model.weights[j]) + log_density(value, model.means[j], model.variances[j]);
    if (lp > best_lp) {
      best_lp = lp;
      best = j;
    }
  }
  return best;
}

void label_centroids(std::span<CentroidRecord> records, const Gmm1D& model) {
  for (auto& r : records) r.night_class = assign_class(model, r.nightlight_sum);
}

void write_gmm(std::ostream& out, const Gmm1D& model) {
  const auto vec = [&](const char* key, const std::vector<double>& v) {
    out << key << " =";
    for (double x : v) out << ' ' << format_exact(x);
    out << '\n';
  };
  out << "k = " << model.k << '\n';
  vec("weights", model.weights);
  vec("means", model.means);
  vec("variances", model.variances);
  out << "log_likelihood = " << format_exact(model.log_likelihood) << '\n';
}

Gmm1D read_gmm(std::istream& in) {
  std::map<std::string, std::vector<double>> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    const std::string key(trim(body.substr(0, eq)));
    std::vector<double> vals;
    for (const auto& t : split_whitespace(body.substr(eq + 1))) {
      const auto v = parse_real(t);
      if (!v) throw ParseError(line_no, "non-numeric value '" + t + "'");
      vals.push_back(*v);
    }
    kv[key] = std::move(vals);
  }
  const auto need = [&](const char* key) -> const std::vector<double>& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw InputError(std::string("mixture model file missing key '") + key + "'");
    return it->second;
  };
  Gmm1D m;
  const auto& kk = need("k");
  if (kk.size() != 1 || kk[0] < 1 || kk[0] != std::floor(kk[0])) throw InputError("mixture k must be a positive integer");
  m.k = static_cast<int>(kk[0]);
  m.weights = need("weights");
  m.means = need("means");
  m.variances = need("variances");
  const auto& ll = need("log_likelihood");
  m.log_likelihood = ll.empty() ? 0.0 : ll[0];
  const auto k = static_cast<std::size_t>(m.k);
  if (m.weights.size() != k || m.means.size() != k || m.variances.size() != k) {
    throw InputError("mixture model vectors must have k entries");
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (!(m.weights[j] > 0.0) || !(m.variances[j] > 0.0)) {
      throw InputError("mixture weights and variances must be positive");
    }
  }
  return m;
}

}  // namespace povmap
