#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "povmap/error.hpp"
#include "povmap/nightlight_labels.hpp"
#include "povmap/random.hpp"

using namespace povmap;

namespace {

std::vector<double> three_clusters(std::uint64_t seed, int n) {
  Rng rng(seed);
  const double mu[3] = {0, 50, 200};
  const double sd[3] = {1, 5, 20};
  std::vector<double> v;
  for (int i = 0; i < n; ++i) {
    const int c = i % 3;
    v.push_back(rng.normal(mu[c], sd[c]));
  }
  return v;
}

Gmm1D equal_variance_model() {
  Gmm1D m;
  m.k = 3;
  m.weights = {0.3, 0.4, 0.3};
  m.means = {0, 10, 20};
  m.variances = {4, 4, 4};
  return m;
}

}  // namespace

TEST_CASE("gmm: three separated clusters are recovered") {
  const auto v = three_clusters(17, 3000);
  const auto fit = fit_gmm_1d(v);
  const auto& m = fit.model;
  REQUIRE(m.k == 3);
  CHECK(std::abs(m.means[0]) < 1.0);  // zero mean: within one sd
  CHECK(std::abs(m.means[1] - 50) < 5.0);
  CHECK(std::abs(m.means[2] - 200) < 20.0);
  CHECK(std::sqrt(m.variances[0]) == doctest::Approx(1).epsilon(0.1));
  CHECK(std::sqrt(m.variances[1]) == doctest::Approx(5).epsilon(0.1));
  CHECK(std::sqrt(m.variances[2]) == doctest::Approx(20).epsilon(0.1));
  for (double w : m.weights) CHECK(w == doctest::Approx(1.0 / 3).epsilon(0.05));
  CHECK(std::accumulate(m.weights.begin(), m.weights.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.converged);
  CHECK(std::is_sorted(m.means.begin(), m.means.end()));
}

TEST_CASE("gmm: log-likelihood never decreases") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const auto v = three_clusters(seed, 600);
    const auto fit = fit_gmm_1d(v);
    for (std::size_t i = 1; i < fit.log_likelihood_trace.size(); ++i) {
      CHECK(fit.log_likelihood_trace[i] >= fit.log_likelihood_trace[i - 1] - 1e-9);
    }
  }
}

TEST_CASE("gmm: deterministic") {
  const auto v = three_clusters(5, 500);
  const auto a = fit_gmm_1d(v).model;
  const auto b = fit_gmm_1d(v).model;
  CHECK(a.means == b.means);
  CHECK(a.variances == b.variances);
  CHECK(a.weights == b.weights);
}

TEST_CASE("gmm: degenerate inputs") {
  const std::vector<double> two{1, 2};
  CHECK_THROWS_AS(fit_gmm_1d(two), InputError);
  const std::vector<double> flat{4, 4, 4, 4, 4};
  CHECK_THROWS_AS(fit_gmm_1d(flat), InputError);
  const std::vector<double> with_nan{1, 2, std::nan(""), 4};
  CHECK_THROWS_AS(fit_gmm_1d(with_nan), InputError);

  const std::vector<double> exactly_three{1, 2, 3};
  const auto fit = fit_gmm_1d(exactly_three);
  for (double var : fit.model.variances) CHECK(var > 0);
}

TEST_CASE("gmm: assignment matches direct density argmax") {
  const auto m = equal_variance_model();
  CHECK(assign_class(m, -1e6) == 0);
  CHECK(assign_class(m, 1e6) == 2);
  CHECK(assign_class(m, 10) == 1);
  Rng rng(8);
  for (int t = 0; t < 2000; ++t) {
    const double x = rng.uniform() * 40 - 10;
    CHECK(assign_class(m, x) == oracle::gmm_argmax(m.weights, m.means, m.variances, x));
  }
  const auto fit = fit_gmm_1d(three_clusters(3, 900)).model;
  for (int t = 0; t < 2000; ++t) {
    const double x = rng.uniform() * 300 - 20;
    CHECK(assign_class(fit, x) == oracle::gmm_argmax(fit.weights, fit.means, fit.variances, x));
  }
}

TEST_CASE("gmm: tie goes to the lower index") {
  Gmm1D m;
  m.k = 2;
  m.weights = {0.5, 0.5};
  m.means = {0, 2};
  m.variances = {1, 1};
  CHECK(assign_class(m, 1.0) == 0);
  const auto p = posteriors(m, 1.0);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("label_centroids") {
  const auto m = equal_variance_model();
  std::vector<CentroidRecord> recs(3);
  recs[0].nightlight_sum = 0.5;
  recs[1].nightlight_sum = 19;
  recs[2].nightlight_sum = 11;
  label_centroids(recs, m);
  CHECK(recs[0].night_class == 0);
  CHECK(recs[1].night_class == 2);
  CHECK(recs[2].night_class == 1);
}

TEST_CASE("gmm text round trip is exact") {
  const auto m = fit_gmm_1d(three_clusters(9, 300)).model;
  std::stringstream ss;
  write_gmm(ss, m);
  const auto back = read_gmm(ss);
  CHECK(back.k == m.k);
  CHECK(back.weights == m.weights);
  CHECK(back.means == m.means);
  CHECK(back.variances == m.variances);
  CHECK(back.log_likelihood == m.log_likelihood);

  std::istringstream bad("k = 2\nweights = 0.5 0.5\nmeans = 1\nvariances = 1 1\n");
  CHECK_THROWS_AS(read_gmm(bad), InputError);
}
