#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "bpls/criteria.hpp"
#include "bpls/rng.hpp"

using namespace bpls;

namespace {

// Single-column design (no intercept), the workhorse for quadrature checks.
LabeledData one_dim_data(const std::vector<double>& x, const std::vector<int>& y) {
  LabeledData data;
  data.design.has_intercept = false;
  data.design.x = Matrix(x.size(), 1);
  for (std::size_t i = 0; i < x.size(); ++i) data.design.x.at(i, 0) = x[i];
  data.labels.values = y;
  return data;
}

LabeledData random_labeled(Rng& rng, std::size_t n, std::size_t q) {
  LabeledData data;
  data.design.has_intercept = true;
  data.design.x = Matrix(n, q);
  for (std::size_t i = 0; i < n; ++i) {
    data.design.x.at(i, 0) = 1.0;
    for (std::size_t j = 1; j < q; ++j) data.design.x.at(i, j) = rng.normal();
  }
  data.labels.values.resize(n);
  for (auto& y : data.labels.values) y = rng.bernoulli(0.5) ? 1 : 0;
  return data;
}

std::vector<Candidate> random_pool(Rng& rng, std::size_t count, std::size_t q) {
  std::vector<Candidate> pool(count);
  for (std::size_t i = 0; i < count; ++i) {
    pool[i].id = static_cast<int>(i);
    pool[i].features.assign(q, 0.0);
    pool[i].features[0] = 1.0;
    for (std::size_t j = 1; j < q; ++j) pool[i].features[j] = rng.normal();
    pool[i].pseudo_label = rng.bernoulli(0.5) ? 1 : 0;
  }
  return pool;
}

std::vector<double> ranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> r(values.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) r[order[pos]] = static_cast<double>(pos);
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

}  // namespace

// ---------------------------------------------------------------------------
// select_best

TEST_CASE("select_best basics", "[criteria]") {
  CHECK(select_best({{7, Criterion::PppU, 1.0}}) == 7);
  CHECK(select_best({{3, Criterion::PppU, 2.0}, {5, Criterion::PppU, 2.0}}) == 3);
  CHECK_THROWS_AS(select_best({}), EmptyPool);
  CHECK_THROWS_AS(select_best({{1, Criterion::PppU, kInvalidScore},
                               {2, Criterion::PppU, kInvalidScore}}),
                  AllCandidatesInvalid);
}

TEST_CASE("select_best ignores positive affine transforms", "[criteria]") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<CandidateScore> scores;
    for (int i = 0; i < 6; ++i)
      scores.push_back({i, Criterion::PppU, rng.normal(0.0, 10.0)});
    const int base = select_best(scores);
    const double scale = 0.1 + 5.0 * rng.uniform01();
    const double shift = rng.normal(0.0, 100.0);
    std::vector<CandidateScore> transformed = scores;
    for (auto& s : transformed) s.value = scale * s.value + shift;
    CHECK(select_best(transformed) == base);
  }
}

// ---------------------------------------------------------------------------
// Simplified criteria

TEST_CASE("duplicate candidates get identical uBPLS scores", "[criteria]") {
  Rng rng(7);
  const LabeledData labeled = random_labeled(rng, 10, 3);
  auto pool = random_pool(rng, 1, 3);
  Candidate twin = pool[0];
  twin.id = 99;
  const CandidateScore a = score_ubpls(labeled, pool[0]);
  const CandidateScore b = score_ubpls(labeled, twin);
  CHECK(a.value == b.value);
}

TEST_CASE("iBPLS with the uninformative prior equals uBPLS exactly", "[criteria]") {
  Rng rng(11);
  const LabeledData labeled = random_labeled(rng, 12, 3);
  const auto pool = random_pool(rng, 5, 3);
  for (const Candidate& cand : pool) {
    const double u = score_ubpls(labeled, cand).value;
    const double i = score_ibpls(labeled, cand, Prior::uninformative()).value;
    CHECK(u == i);
  }
}

TEST_CASE("iBPLS minus uBPLS is the prior log-density at the refit", "[criteria]") {
  Rng rng(13);
  const LabeledData labeled = random_labeled(rng, 10, 2);
  const auto pool = random_pool(rng, 3, 2);
  const Prior prior = Prior::isotropic_gaussian({0.0, 0.0}, 4.0);
  for (const Candidate& cand : pool) {
    const double u = score_ubpls(labeled, cand).value;
    const double i = score_ibpls(labeled, cand, prior).value;
    // recompute theta~ independently from the augmented problem
    const auto aug = detail::augment_unit(labeled, cand);
    const FittedModel refit = fit(aug.design, aug.labels, aug.weights);
    CHECK(i - u == Catch::Approx(prior.log_density(refit.theta)).margin(1e-9));
  }
}

TEST_CASE("maxmax equals uBPLS plus half the log-determinant", "[criteria]") {
  Rng rng(17);
  const LabeledData labeled = random_labeled(rng, 14, 3);
  const auto pool = random_pool(rng, 4, 3);
  for (const Candidate& cand : pool) {
    const double u = score_ubpls(labeled, cand).value;
    const double m = score_maxmax_likelihood(labeled, cand).value;
    const auto aug = detail::augment_unit(labeled, cand);
    const FittedModel refit = fit(aug.design, aug.labels, aug.weights);
    const SpdMatrix info = observed_fisher(refit.theta, aug.design, aug.labels, aug.weights,
                                           static_cast<double>(labeled.size() + 1));
    CHECK(m - u == Catch::Approx(0.5 * log_det_spd(info)).margin(1e-9));
  }
}

TEST_CASE("a confident prediction beats its flipped label under maxmax", "[criteria]") {
  // strongly positive-sloped data; a matching pseudo-label on a far-right row
  // must score above the flipped one
  const LabeledData labeled =
      one_dim_data({-2.0, -1.5, -1.0, 1.0, 1.5, 2.0}, {0, 0, 0, 1, 1, 1});
  Candidate matched{0, {1.8}, 1};
  Candidate flipped{0, {1.8}, 0};
  CHECK(score_maxmax_likelihood(labeled, matched).value >
        score_maxmax_likelihood(labeled, flipped).value);
}

TEST_CASE("Fisher normalization shifts every score by the same constant", "[criteria]") {
  Rng rng(19);
  const LabeledData labeled = random_labeled(rng, 10, 3);
  const auto pool = random_pool(rng, 5, 3);
  ScoreOptions raw_normalizer;
  raw_normalizer.fisher_normalizer = 1.0;

  std::vector<CandidateScore> default_scores, override_scores;
  for (const Candidate& cand : pool) {
    default_scores.push_back(score_ubpls(labeled, cand));
    override_scores.push_back(score_ubpls(labeled, cand, raw_normalizer));
  }
  const double expected_shift = 0.5 * 3.0 * std::log(static_cast<double>(labeled.size() + 1));
  for (std::size_t i = 0; i < pool.size(); ++i)
    CHECK(default_scores[i].value - override_scores[i].value ==
          Catch::Approx(expected_shift).margin(1e-9));
  CHECK(select_best(default_scores) == select_best(override_scores));
}

TEST_CASE("probability score and predictive variance baselines", "[criteria]") {
  FittedModel model;
  model.theta = {1.0};  // p = logistic(x)
  const Candidate at_half{0, {0.0}, 1};
  CHECK(score_probability(model, at_half).value == Catch::Approx(0.5));
  CHECK(score_predictive_variance(model, at_half).value == Catch::Approx(-0.25));

  const Candidate high{1, {std::log(9.0)}, 1};   // p = 0.9
  const Candidate low{2, {-std::log(9.0)}, 0};   // p = 0.1
  CHECK(score_probability(model, high).value == Catch::Approx(0.9));
  CHECK(score_probability(model, high).value ==
        Catch::Approx(score_probability(model, low).value));
  CHECK(score_predictive_variance(model, high).value ==
        Catch::Approx(score_predictive_variance(model, low).value));

  // both baselines rank any pool identically (monotone in |p - 1/2|)
  Rng rng(23);
  std::vector<CandidateScore> prob_scores, var_scores;
  for (int i = 0; i < 10; ++i) {
    const Candidate cand{i, {rng.normal(0.0, 2.0)}, 0};
    prob_scores.push_back(score_probability(model, cand));
    var_scores.push_back(score_predictive_variance(model, cand));
  }
  std::vector<double> pv, vv;
  for (std::size_t i = 0; i < 10; ++i) {
    pv.push_back(prob_scores[i].value);
    vv.push_back(var_scores[i].value);
  }
  CHECK(spearman(pv, vv) == Catch::Approx(1.0));
}

// ---------------------------------------------------------------------------
// Quadrature oracle

TEST_CASE("oracle with no labeled data reduces to the marginal likelihood", "[criteria]") {
  LabeledData empty;
  const Candidate cand{0, {0.8}, 1};
  const double oracle = oracle_log_ppp(empty, cand, Prior::uninformative());

  // independent trapezoid integration of p(i | theta) against the normalized
  // uniform prior on [-8, 8]
  const int points = 4001;
  const double h = 16.0 / (points - 1);
  double integral = 0.0;
  for (int k = 0; k < points; ++k) {
    const double theta = -8.0 + k * h;
    const double p = 1.0 / (1.0 + std::exp(-theta * 0.8));
    const double w = (k == 0 || k == points - 1) ? 0.5 : 1.0;
    integral += w * h * p / 16.0;
  }
  CHECK(oracle == Catch::Approx(std::log(integral)).margin(1e-4));
}

TEST_CASE("mirrored candidates score equally under the oracle", "[criteria]") {
  const LabeledData labeled = one_dim_data({1.0, -1.0}, {1, 0});  // its own mirror image
  const Candidate plus{0, {2.0}, 1};
  const Candidate minus{1, {-2.0}, 0};
  const double a = oracle_log_ppp(labeled, plus, Prior::uninformative());
  const double b = oracle_log_ppp(labeled, minus, Prior::uninformative());
  CHECK(a == Catch::Approx(b).margin(1e-10));
}

TEST_CASE("oracle rejects grids that do not resolve the posterior", "[criteria]") {
  // posterior width ~ 1/sqrt(n * 0.25 * x^2) ~ 0.008 with x = 100: far below
  // the 0.08 grid step, so doubling the resolution moves the value
  const LabeledData labeled = one_dim_data({100.0, 100.0, -100.0, 100.0, -100.0, 100.0},
                                           {1, 0, 0, 1, 1, 0});
  const Candidate cand{0, {100.0}, 1};
  CHECK_THROWS_AS(oracle_log_ppp(labeled, cand, Prior::uninformative()), GridTooCoarse);
}

TEST_CASE("uBPLS ranking agrees with the oracle on a 2-D toy", "[criteria]") {
  Rng rng(29);
  LabeledData labeled;
  labeled.design.has_intercept = true;
  labeled.design.x = Matrix(8, 2);
  for (std::size_t i = 0; i < 8; ++i) {
    labeled.design.x.at(i, 0) = 1.0;
    labeled.design.x.at(i, 1) = rng.normal();
  }
  labeled.labels.values = {0, 1, 0, 1, 1, 0, 1, 0};

  std::vector<Candidate> pool;
  for (int i = 0; i < 3; ++i)
    pool.push_back({i, {1.0, rng.normal()}, rng.bernoulli(0.5) ? 1 : 0});

  std::vector<double> laplace_scores, oracle_scores;
  for (const Candidate& cand : pool) {
    laplace_scores.push_back(score_ubpls(labeled, cand).value);
    oracle_scores.push_back(oracle_log_ppp(labeled, cand, Prior::uninformative()));
  }
  CHECK(ranks(laplace_scores) == ranks(oracle_scores));
}

TEST_CASE("iBPLS ranking with a Gaussian prior matches the weighted oracle", "[criteria]") {
  const LabeledData labeled = one_dim_data({0.4, -1.1, 0.9, -0.3, 1.4, -0.8}, {1, 0, 1, 0, 1, 0});
  const Prior prior = Prior::isotropic_gaussian({2.0}, 1.0);
  std::vector<Candidate> pool{{0, {1.2}, 1}, {1, {-0.5}, 0}, {2, {0.3}, 0}};

  std::vector<double> laplace_scores, oracle_scores;
  for (const Candidate& cand : pool) {
    laplace_scores.push_back(score_ibpls(labeled, cand, prior).value);
    oracle_scores.push_back(oracle_log_ppp(labeled, cand, prior));
  }
  CHECK(ranks(laplace_scores) == ranks(oracle_scores));
}

TEST_CASE("fine PPP stays within half a nat of the oracle after centering", "[criteria]") {
  const LabeledData labeled = one_dim_data({0.5, -0.7, 1.2, -0.2, 0.9, -1.0}, {1, 0, 1, 1, 1, 0});
  std::vector<Candidate> pool{{0, {0.8}, 1}, {1, {-1.3}, 0}, {2, {0.1}, 1}};

  std::vector<double> fine_scores, oracle_scores;
  for (const Candidate& cand : pool) {
    fine_scores.push_back(score_fine_ppp(labeled, cand, Prior::uninformative()).value);
    oracle_scores.push_back(oracle_log_ppp(labeled, cand, Prior::uninformative()));
  }
  const double mf = std::accumulate(fine_scores.begin(), fine_scores.end(), 0.0) / 3.0;
  const double mo = std::accumulate(oracle_scores.begin(), oracle_scores.end(), 0.0) / 3.0;
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(std::abs((fine_scores[i] - mf) - (oracle_scores[i] - mo)) <= 0.5);
}

TEST_CASE("fine and simplified argmax agree for large n", "[criteria]") {
  Rng rng(31);
  const std::size_t n = 2000;
  LabeledData labeled;
  labeled.design.has_intercept = true;
  labeled.design.x = Matrix(n, 2);
  labeled.labels.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    labeled.design.x.at(i, 0) = 1.0;
    const double x = rng.normal();
    labeled.design.x.at(i, 1) = x;
    labeled.labels.values[i] = rng.bernoulli(logistic(1.5 * x)) ? 1 : 0;
  }
  const auto pool = random_pool(rng, 10, 2);
  std::vector<CandidateScore> fine, simplified;
  for (const Candidate& cand : pool) {
    fine.push_back(score_fine_ppp(labeled, cand, Prior::uninformative()));
    simplified.push_back(score_ubpls(labeled, cand));
  }
  CHECK(select_best(fine) == select_best(simplified));
}

TEST_CASE("fine PPP tracks the oracle ranking across random instances", "[criteria]") {
  Rng rng(37);
  int done = 0;
  double correlation_sum = 0.0;
  while (done < 10) {
    const std::size_t n = 6 + rng.uniform_below(5);
    std::vector<double> x(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.normal();
      y[i] = rng.bernoulli(logistic(x[i])) ? 1 : 0;
    }
    const LabeledData labeled = one_dim_data(x, y);
    const std::size_t pool_size = 3 + rng.uniform_below(3);
    std::vector<Candidate> pool;
    for (std::size_t i = 0; i < pool_size; ++i)
      pool.push_back({static_cast<int>(i), {rng.normal()}, rng.bernoulli(0.5) ? 1 : 0});

    std::vector<double> fine, oracle;
    bool usable = true;
    for (const Candidate& cand : pool) {
      const auto aug = detail::augment_doubled(labeled, cand);
      const FittedModel refit = fit(aug.design, aug.labels, aug.weights);
      if (!refit.converged || std::abs(refit.theta[0]) > 4.0) {
        usable = false;  // Laplace validity needs the maximizer inside the grid box
        break;
      }
      fine.push_back(score_fine_ppp(labeled, cand, Prior::uninformative()).value);
      oracle.push_back(oracle_log_ppp(labeled, cand, Prior::uninformative()));
    }
    if (!usable) continue;
    ++done;
    correlation_sum += spearman(fine, oracle);
  }
  CHECK(correlation_sum / 10.0 >= 0.9);
}

// ---------------------------------------------------------------------------
// Discrete decision-theory oracle

TEST_CASE("discrete oracle with a single theta matches likelihood argmax", "[criteria]") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const LabeledData labeled = random_labeled(rng, 6, 2);
    const auto pool = random_pool(rng, 4, 2);
    const std::vector<std::vector<double>> grid{{rng.normal(), rng.normal()}};
    const int picked = oracle_discrete_bayes(grid, {1.0}, labeled, pool);

    int expected = -1;
    double best = -std::numeric_limits<double>::infinity();
    for (const Candidate& cand : pool) {
      const double value = detail::labeled_loglik(grid[0], labeled) +
                           detail::single_row_loglik(grid[0], cand.features, cand.pseudo_label);
      if (value > best) {
        best = value;
        expected = cand.id;
      }
    }
    CHECK(picked == expected);
  }
}

TEST_CASE("discrete oracle agrees with a direct probability-domain sum", "[criteria]") {
  Rng rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    const LabeledData labeled = random_labeled(rng, 5, 2);
    const auto pool = random_pool(rng, 4, 2);
    std::vector<std::vector<double>> grid;
    std::vector<double> weights;
    double total = 0.0;
    for (int j = 0; j < 5; ++j) {
      grid.push_back({rng.normal(), rng.normal()});
      const double w = 0.1 + rng.uniform01();
      weights.push_back(w);
      total += w;
    }
    for (auto& w : weights) w /= total;

    // independent route: plain probabilities, reversed iteration order
    std::vector<double> posterior(5);
    double z = 0.0;
    for (int j = 4; j >= 0; --j) {
      posterior[j] = weights[j] * std::exp(detail::labeled_loglik(grid[j], labeled));
      z += posterior[j];
    }
    int expected = -1;
    double best = -1.0;
    for (const Candidate& cand : pool) {
      double phi = 0.0;
      for (int j = 4; j >= 0; --j)
        phi += posterior[j] / z *
               std::exp(detail::labeled_loglik(grid[j], labeled) +
                        detail::single_row_loglik(grid[j], cand.features, cand.pseudo_label));
      if (phi > best) {
        best = phi;
        expected = cand.id;
      }
    }
    CHECK(oracle_discrete_bayes(grid, weights, labeled, pool) == expected);
  }
}

TEST_CASE("prior weighting reproduces marginal-likelihood selection", "[criteria]") {
  Rng rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    const LabeledData labeled = random_labeled(rng, 5, 2);
    const auto pool = random_pool(rng, 3, 2);
    std::vector<std::vector<double>> grid;
    std::vector<double> weights(4, 0.25);
    for (int j = 0; j < 4; ++j) grid.push_back({rng.normal(), rng.normal()});

    const int picked =
        oracle_discrete_bayes(grid, weights, labeled, pool, OracleWeighting::Prior);

    int expected = -1;
    double best = -1.0;
    for (const Candidate& cand : pool) {
      double marginal = 0.0;
      for (int j = 0; j < 4; ++j)
        marginal += weights[j] *
                    std::exp(detail::labeled_loglik(grid[j], labeled) +
                             detail::single_row_loglik(grid[j], cand.features,
                                                       cand.pseudo_label));
      if (marginal > best) {
        best = marginal;
        expected = cand.id;
      }
    }
    CHECK(picked == expected);
  }
}

TEST_CASE("uniform-prior iBPLS and uBPLS rank identically on random pools", "[criteria]") {
  Rng rng(53);
  for (int trial = 0; trial < 10; ++trial) {
    const LabeledData labeled = random_labeled(rng, 8 + rng.uniform_below(8), 3);
    const auto pool = random_pool(rng, 4 + rng.uniform_below(3), 3);
    std::vector<double> u_values, i_values;
    for (const Candidate& cand : pool) {
      u_values.push_back(score_ubpls(labeled, cand).value);
      i_values.push_back(score_ibpls(labeled, cand, Prior::uninformative()).value);
    }
    CHECK(ranks(u_values) == ranks(i_values));
  }
}
