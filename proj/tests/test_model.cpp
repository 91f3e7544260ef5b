#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "bpls/model.hpp"
#include "bpls/rng.hpp"

using namespace bpls;

namespace {

Matrix random_features(Rng& rng, std::size_t n, std::size_t p) {
  Matrix m(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) m.at(i, j) = rng.normal();
  return m;
}

struct Problem {
  DesignMatrix design;
  BinaryLabels labels;
  ObservationWeights weights;
};

Problem random_problem(Rng& rng, std::size_t n, std::size_t q, bool unit_weights = true) {
  Problem p;
  p.design.has_intercept = true;
  p.design.x = Matrix(n, q);
  for (std::size_t i = 0; i < n; ++i) {
    p.design.x.at(i, 0) = 1.0;
    for (std::size_t j = 1; j < q; ++j) p.design.x.at(i, j) = rng.normal();
  }
  p.labels.values.resize(n);
  for (auto& y : p.labels.values) y = rng.bernoulli(0.5) ? 1 : 0;
  p.weights = ObservationWeights::unit(n);
  if (!unit_weights)
    for (auto& w : p.weights.values) w = 0.25 + 2.0 * rng.uniform01();
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Basis expansion

TEST_CASE("identity basis prepends an intercept column", "[model]") {
  Rng rng(1);
  const Matrix raw = random_features(rng, 5, 3);
  const DesignMatrix design = expand_basis(raw, BasisSpec::identity());
  REQUIRE(design.n_cols() == 4);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(design.x.at(i, 0) == 1.0);
    for (std::size_t j = 0; j < 3; ++j) CHECK(design.x.at(i, j + 1) == raw.at(i, j));
  }
}

TEST_CASE("polynomial basis produces powers of the feature", "[model]") {
  Matrix raw(4, 1);
  raw.at(0, 0) = -1.0;
  raw.at(1, 0) = 0.5;
  raw.at(2, 0) = 2.0;
  raw.at(3, 0) = 3.0;
  const DesignMatrix design = expand_basis(raw, BasisSpec::polynomial(2));
  REQUIRE(design.n_cols() == 3);  // 1, x, x^2
  for (std::size_t i = 0; i < 4; ++i) {
    const double x = raw.at(i, 0);
    CHECK(design.x.at(i, 0) == 1.0);
    CHECK(design.x.at(i, 1) == Catch::Approx(x));
    CHECK(design.x.at(i, 2) == Catch::Approx(x * x));
  }
}

TEST_CASE("spline knots sit at the 33%/67% quantiles", "[model]") {
  Matrix raw(5, 1);
  const std::vector<double> values{3.0, 1.0, 5.0, 2.0, 4.0};
  for (std::size_t i = 0; i < 5; ++i) raw.at(i, 0) = values[i];
  const BasisExpander expander = BasisExpander::fit(raw, BasisSpec::spline(1, 2));
  const DesignMatrix design = expander.transform(raw);
  REQUIRE(design.n_cols() == 4);  // intercept + x + 2 truncated terms

  // quantiles recomputed by sorting: sorted = 1,2,3,4,5; type-7 interpolation
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const auto quantile = [&](double p) {
    const double pos = p * (sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - lo;
    return sorted[lo] * (1 - frac) + sorted[lo + 1] * frac;
  };
  const double k1 = quantile(1.0 / 3.0), k2 = quantile(2.0 / 3.0);
  for (std::size_t i = 0; i < 5; ++i) {
    const double x = raw.at(i, 0);
    CHECK(design.x.at(i, 2) == Catch::Approx(std::max(0.0, x - k1)));
    CHECK(design.x.at(i, 3) == Catch::Approx(std::max(0.0, x - k2)));
  }
}

TEST_CASE("spline expansion of a constant feature fails", "[model]") {
  Matrix raw(4, 1);
  for (std::size_t i = 0; i < 4; ++i) raw.at(i, 0) = 1.5;
  CHECK_THROWS_AS(expand_basis(raw, BasisSpec::spline(1, 2)), DegenerateFeature);
}

// ---------------------------------------------------------------------------
// Likelihood and prediction

TEST_CASE("log-likelihood at theta = 0 is n log(1/2)", "[model]") {
  Rng rng(3);
  const Problem p = random_problem(rng, 8, 3);
  const std::vector<double> theta(3, 0.0);
  CHECK(log_likelihood(theta, p.design, p.labels, p.weights) ==
        Catch::Approx(8.0 * std::log(0.5)));
}

TEST_CASE("weighted single observation doubles its term", "[model]") {
  DesignMatrix design;
  design.x = Matrix(1, 1);
  design.x.at(0, 0) = 1.0;
  const BinaryLabels labels{{1}};
  const ObservationWeights weights{{2.0}};
  const std::vector<double> theta{0.0};
  CHECK(log_likelihood(theta, design, labels, weights) == Catch::Approx(2.0 * std::log(0.5)));
}

TEST_CASE("log-likelihood matches extended-precision term-by-term oracle", "[model]") {
  Rng rng(17);
  const Problem p = random_problem(rng, 6, 3, /*unit_weights=*/false);
  std::vector<double> theta{0.3, -1.2, 0.7};
  // independent route: long double accumulation straight from the definition
  long double expected = 0.0L;
  for (std::size_t i = 0; i < 6; ++i) {
    long double eta = 0.0L;
    for (std::size_t j = 0; j < 3; ++j)
      eta += static_cast<long double>(theta[j]) * p.design.x.at(i, j);
    const long double prob = 1.0L / (1.0L + std::exp(-eta));
    expected += p.weights.values[i] *
                (p.labels.values[i] ? std::log(prob) : std::log(1.0L - prob));
  }
  CHECK(log_likelihood(theta, p.design, p.labels, p.weights) ==
        Catch::Approx(static_cast<double>(expected)).epsilon(1e-12));
}

TEST_CASE("predict_proba basics", "[model]") {
  const std::vector<double> theta{0.0, 1.0};
  const std::vector<double> x{1.0, 0.0};
  CHECK(predict_proba(theta, x) == Catch::Approx(0.5));

  const std::vector<double> theta2{std::log(3.0)};
  const std::vector<double> x2{1.0};
  CHECK(predict_proba(theta2, x2) == Catch::Approx(0.75));

  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> t{rng.normal(), rng.normal()};
    const std::vector<double> neg{-t[0], -t[1]};
    const std::vector<double> row{rng.normal(), rng.normal()};
    CHECK(predict_proba(t, row) + predict_proba(neg, row) == Catch::Approx(1.0));
  }
}

// ---------------------------------------------------------------------------
// Fisher information

TEST_CASE("observed_fisher at theta = 0 is XtX/(4 normalize_by)", "[model]") {
  Rng rng(21);
  const Problem p = random_problem(rng, 10, 3);
  const std::vector<double> theta(3, 0.0);
  const SpdMatrix info =
      observed_fisher(theta, p.design, p.labels, p.weights, static_cast<double>(10));
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) {
      double xtx = 0.0;
      for (std::size_t i = 0; i < 10; ++i) xtx += p.design.x.at(i, a) * p.design.x.at(i, b);
      CHECK(info.at(a, b) == Catch::Approx(0.25 * xtx / 10.0).margin(1e-12));
    }
}

TEST_CASE("observed_fisher with a single nonzero weight is rank one", "[model]") {
  Rng rng(23);
  Problem p = random_problem(rng, 5, 3);
  for (auto& w : p.weights.values) w = 0.0;
  p.weights.values[2] = 1.7;
  const std::vector<double> theta{0.4, -0.3, 0.2};
  const SpdMatrix info = observed_fisher(theta, p.design, p.labels, p.weights, 1.0);
  const auto x = p.design.row(2);
  const double prob = predict_proba(theta, x);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      CHECK(info.at(a, b) ==
            Catch::Approx(1.7 * prob * (1.0 - prob) * x[a] * x[b]).margin(1e-12));
}

TEST_CASE("observed_fisher equals the finite-difference Hessian", "[model]") {
  Rng rng(31);
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t q = 2 + rng.uniform_below(4);
    const std::size_t n = 10 + rng.uniform_below(30);
    const Problem p = random_problem(rng, n, q, /*unit_weights=*/false);
    std::vector<double> theta(q);
    for (auto& t : theta) t = rng.normal(0.0, 0.5);

    const SpdMatrix info = observed_fisher(theta, p.design, p.labels, p.weights, 2.5);
    double max_err = 0.0, max_ref = 0.0;
    for (std::size_t a = 0; a < q; ++a)
      for (std::size_t b = 0; b < q; ++b) {
        auto ll = [&](double da, double db) {
          std::vector<double> t = theta;
          t[a] += da;
          t[b] += db;
          return log_likelihood(t, p.design, p.labels, p.weights);
        };
        const double hess =
            (ll(h, h) - ll(h, -h) - ll(-h, h) + ll(-h, -h)) / (4.0 * h * h);
        const double ref = -hess / 2.5;
        max_err = std::max(max_err, std::abs(info.at(a, b) - ref));
        max_ref = std::max(max_ref, std::abs(ref));
      }
    CHECK(max_err / max_ref <= 1e-4);
  }
}

// ---------------------------------------------------------------------------
// Fitting

TEST_CASE("balanced labels with intercept-only design give theta = 0", "[model]") {
  DesignMatrix design;
  design.x = Matrix(4, 1, 1.0);
  const BinaryLabels labels{{0, 1, 0, 1}};
  const FittedModel model = fit(design, labels, ObservationWeights::unit(4));
  CHECK(model.converged);
  CHECK(std::abs(model.theta[0]) < 1e-8);
}

TEST_CASE("all-zero labels drive the intercept to the gradient boundary", "[model]") {
  DesignMatrix design;
  design.x = Matrix(5, 1, 1.0);
  const BinaryLabels labels{{0, 0, 0, 0, 0}};
  const FittedModel model = fit(design, labels, ObservationWeights::unit(5));
  // closed form: the gradient is -5 logistic(theta), so any theta at or below
  // logit(1e-8 / 5) satisfies the stopping rule
  const double boundary = std::log(2e-9 / (1.0 - 2e-9));
  CHECK(model.converged);
  CHECK(model.theta[0] <= boundary + 1e-6);
  CHECK(predict_proba(model.theta, std::vector<double>{1.0}) < 0.01);
}

TEST_CASE("doubling all weights leaves the fit unchanged", "[model]") {
  Rng rng(41);
  const Problem p = random_problem(rng, 20, 3);
  ObservationWeights doubled = p.weights;
  for (auto& w : doubled.values) w = 2.0;
  const FittedModel a = fit(p.design, p.labels, p.weights);
  const FittedModel b = fit(p.design, p.labels, doubled);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  for (std::size_t j = 0; j < 3; ++j) CHECK(a.theta[j] == Catch::Approx(b.theta[j]).margin(1e-10));
}

TEST_CASE("converged fits have vanishing gradient and honest loglik", "[model]") {
  Rng rng(43);
  for (int trial = 0; trial < 8; ++trial) {
    const Problem p = random_problem(rng, 25 + rng.uniform_below(20), 4);
    const FittedModel model = fit(p.design, p.labels, p.weights);
    if (!model.converged) continue;
    const auto grad = detail::loglik_gradient(model.theta, p.design, p.labels, p.weights);
    double norm = 0.0;
    for (double g : grad) norm = std::max(norm, std::abs(g));
    CHECK(norm <= 1e-8);
    CHECK(model.final_loglik ==
          Catch::Approx(log_likelihood(model.theta, p.design, p.labels, p.weights))
              .margin(1e-12));
  }
}

TEST_CASE("fit is invariant to row permutation", "[model]") {
  Rng rng(47);
  const Problem p = random_problem(rng, 15, 3);
  std::vector<std::size_t> perm(15);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Problem shuffled = p;
  for (std::size_t i = 0; i < 15; ++i) {
    for (std::size_t j = 0; j < 3; ++j) shuffled.design.x.at(i, j) = p.design.x.at(perm[i], j);
    shuffled.labels.values[i] = p.labels.values[perm[i]];
    shuffled.weights.values[i] = p.weights.values[perm[i]];
  }
  const FittedModel a = fit(p.design, p.labels, p.weights);
  const FittedModel b = fit(shuffled.design, shuffled.labels, shuffled.weights);
  for (std::size_t j = 0; j < 3; ++j) CHECK(a.theta[j] == Catch::Approx(b.theta[j]).margin(1e-7));
}

TEST_CASE("MAP fit with huge covariance converges to the ML fit", "[model]") {
  Rng rng(53);
  const Problem p = random_problem(rng, 30, 3);
  const FittedModel ml = fit(p.design, p.labels, p.weights);

  FitOptions map_options;
  map_options.mode = FitMode::Map;
  map_options.prior = Prior::isotropic_gaussian(std::vector<double>(3, 0.0), 1e6);
  const FittedModel map = fit(p.design, p.labels, p.weights, map_options);

  double delta = 0.0;
  for (std::size_t j = 0; j < 3; ++j) delta += (ml.theta[j] - map.theta[j]) * (ml.theta[j] - map.theta[j]);
  CHECK(std::sqrt(delta) <= 1e-3);
}
