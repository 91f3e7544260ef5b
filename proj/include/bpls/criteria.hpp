#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bpls/errors.hpp"
#include "bpls/model.hpp"
#include "bpls/numerics.hpp"
#include "bpls/prior.hpp"

namespace bpls {

enum class Criterion {
  PppU,
  PppI,
  PppFine,
  LikelihoodMaxmax,
  ProbScore,
  PredVariance,
  Random,
  PppRobust,
  PppFantasy,
  BplsNopred,
  BplsBivariate,
};

inline std::string_view criterion_tag(Criterion c) {
  switch (c) {
    case Criterion::PppU: return "ppp-u";
    case Criterion::PppI: return "ppp-i";
    case Criterion::PppFine: return "ppp-fine";
    case Criterion::LikelihoodMaxmax: return "likelihood-maxmax";
    case Criterion::ProbScore: return "prob-score";
    case Criterion::PredVariance: return "pred-variance";
    case Criterion::Random: return "random";
    case Criterion::PppRobust: return "ppp-robust";
    case Criterion::PppFantasy: return "ppp-fantasy";
    case Criterion::BplsNopred: return "bpls-nopred";
    case Criterion::BplsBivariate: return "bpls-bivariate";
  }
  return "unknown";
}

inline Criterion parse_criterion(std::string_view tag) {
  for (Criterion c : {Criterion::PppU, Criterion::PppI, Criterion::PppFine,
                      Criterion::LikelihoodMaxmax, Criterion::ProbScore,
                      Criterion::PredVariance, Criterion::Random, Criterion::PppRobust,
                      Criterion::PppFantasy, Criterion::BplsNopred,
                      Criterion::BplsBivariate}) {
    if (criterion_tag(c) == tag) return c;
  }
  throw ConfigError("unknown criterion tag: " + std::string(tag));
}

// One unlabeled instance with its predicted pseudo-label, features already
// expanded to design-matrix coordinates.
struct Candidate {
  int id = 0;
  std::vector<double> features;
  int pseudo_label = 0;
};

// Scores are argmax-oriented everywhere: larger value = preferred.
struct CandidateScore {
  int candidate_id = 0;
  Criterion criterion = Criterion::PppU;
  double value = 0.0;
};

// Sentinel for candidates whose evaluation failed (singular information);
// select_best never picks them.
inline constexpr double kInvalidScore = -std::numeric_limits<double>::infinity();

inline bool score_is_valid(const CandidateScore& s) {
  return std::isfinite(s.value);
}

// Labeled data in design-matrix coordinates.
struct LabeledData {
  DesignMatrix design;
  BinaryLabels labels;

  std::size_t size() const { return design.n_rows(); }
};

struct ScoreOptions {
  std::vector<double> warm_start;           // empty = start Newton from zero
  std::optional<double> fisher_normalizer;  // override, used by invariance tests
};

namespace detail {

struct AugmentedProblem {
  DesignMatrix design;
  BinaryLabels labels;
  ObservationWeights weights;
  double default_normalizer = 1.0;
};

// D u (x_i, y_i) with unit weights (simplified criteria, Eq.-8 path).
inline AugmentedProblem augment_unit(const LabeledData& labeled, const Candidate& cand) {
  const std::size_t n = labeled.size();
  const std::size_t q = labeled.design.n_cols();
  if (n == 0) throw std::invalid_argument("criteria: labeled data must be nonempty");
  if (cand.features.size() != q)
    throw std::invalid_argument("criteria: candidate feature dimension mismatch");
  AugmentedProblem aug;
  aug.design.has_intercept = labeled.design.has_intercept;
  aug.design.x = Matrix(n + 1, q);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < q; ++j) aug.design.x.at(i, j) = labeled.design.x.at(i, j);
  for (std::size_t j = 0; j < q; ++j) aug.design.x.at(n, j) = cand.features[j];
  aug.labels.values = labeled.labels.values;
  aug.labels.values.push_back(cand.pseudo_label);
  aug.weights = ObservationWeights::unit(n + 1);
  aug.default_normalizer = static_cast<double>(n + 1);
  return aug;
}

// Doubled likelihood of the unsimplified criterion: weight 2 on every row of
// D and weight 1 on the pseudo-row.
inline AugmentedProblem augment_doubled(const LabeledData& labeled, const Candidate& cand) {
  AugmentedProblem aug = augment_unit(labeled, cand);
  for (std::size_t i = 0; i + 1 < aug.weights.size(); ++i) aug.weights.values[i] = 2.0;
  aug.default_normalizer = static_cast<double>(2 * labeled.size() + 1);
  return aug;
}

// log|m|, retrying once with ridge jitter when the matrix is only PSD.
inline double log_det_with_jitter(SpdMatrix info, double jitter = kRidgeJitter) {
  try {
    return log_det_spd(info);
  } catch (const NotPositiveDefinite&) {
    info.add_diagonal(jitter);
    return log_det_spd(info);  // second failure propagates to the caller
  }
}

struct LaplaceParts {
  FittedModel model;
  double loglik = 0.0;       // weighted log-likelihood at the fitted maximizer
  double half_log_det = 0.0;
  bool det_valid = false;
};

inline LaplaceParts laplace_parts(const AugmentedProblem& aug, const ScoreOptions& options) {
  LaplaceParts parts;
  FitOptions fit_options;
  fit_options.initial_theta = options.warm_start;
  parts.model = fit(aug.design, aug.labels, aug.weights, fit_options);
  parts.loglik = parts.model.final_loglik;
  const double normalizer = options.fisher_normalizer.value_or(aug.default_normalizer);
  const SpdMatrix info =
      observed_fisher(parts.model.theta, aug.design, aug.labels, aug.weights, normalizer);
  try {
    parts.half_log_det = 0.5 * log_det_with_jitter(info);
    parts.det_valid = true;
  } catch (const NotPositiveDefinite&) {
    parts.det_valid = false;
  }
  return parts;
}

}  // namespace detail

// Uninformative BPLS: l_{D u (x_i,y_i)}(theta~) - 1/2 log|I(theta~)| with the
// Fisher matrix of the augmented unit-weight likelihood.
inline CandidateScore score_ubpls(const LabeledData& labeled, const Candidate& cand,
                                  const ScoreOptions& options = {}) {
  CandidateScore score{cand.id, Criterion::PppU, kInvalidScore};
  try {
    const auto parts = detail::laplace_parts(detail::augment_unit(labeled, cand), options);
    if (parts.det_valid) score.value = parts.loglik - parts.half_log_det;
  } catch (const SingularInformation&) {
    // leave the sentinel
  }
  return score;
}

// Informative BPLS: the uninformative value plus log pi(theta~).
inline CandidateScore score_ibpls(const LabeledData& labeled, const Candidate& cand,
                                  const Prior& prior, const ScoreOptions& options = {}) {
  CandidateScore score{cand.id, Criterion::PppI, kInvalidScore};
  try {
    const auto parts = detail::laplace_parts(detail::augment_unit(labeled, cand), options);
    if (parts.det_valid)
      score.value = parts.loglik - parts.half_log_det + prior.log_density(parts.model.theta);
  } catch (const SingularInformation&) {
  }
  return score;
}

// Unsimplified criterion: l~(theta~) - 1/2 log|I(theta~)| + log pi(theta~)
// where l~ = l_{D u (x_i,y_i)} + l_D is realized as a weight-2/weight-1 fit.
inline CandidateScore score_fine_ppp(const LabeledData& labeled, const Candidate& cand,
                                     const Prior& prior, const ScoreOptions& options = {}) {
  CandidateScore score{cand.id, Criterion::PppFine, kInvalidScore};
  try {
    const auto parts = detail::laplace_parts(detail::augment_doubled(labeled, cand), options);
    if (parts.det_valid)
      score.value = parts.loglik - parts.half_log_det + prior.log_density(parts.model.theta);
  } catch (const SingularInformation&) {
  }
  return score;
}

// Max-max criterion: the augmented-data likelihood at its ML fit, i.e. the
// uninformative value without the log-determinant penalty.
inline CandidateScore score_maxmax_likelihood(const LabeledData& labeled, const Candidate& cand,
                                              const ScoreOptions& options = {}) {
  CandidateScore score{cand.id, Criterion::LikelihoodMaxmax, kInvalidScore};
  try {
    const auto parts = detail::laplace_parts(detail::augment_unit(labeled, cand), options);
    score.value = parts.loglik;
  } catch (const SingularInformation&) {
  }
  return score;
}

// Probability-score baseline: max(p, 1-p) under the current fit; no refit.
inline CandidateScore score_probability(const FittedModel& model, const Candidate& cand) {
  const double p = predict_proba(model.theta, cand.features);
  return {cand.id, Criterion::ProbScore, std::max(p, 1.0 - p)};
}

// Predictive-variance baseline, negated so that larger = preferred.
inline CandidateScore score_predictive_variance(const FittedModel& model, const Candidate& cand) {
  const double p = predict_proba(model.theta, cand.features);
  return {cand.id, Criterion::PredVariance, -p * (1.0 - p)};
}

// Argmax over the pool; ties go to the smallest candidate id. Candidates at
// the -inf sentinel are skipped; if every score is invalid the pool is
// effectively empty and AllCandidatesInvalid is thrown.
inline int select_best(const std::vector<CandidateScore>& scores) {
  if (scores.empty()) throw EmptyPool("select_best: no scores");
  bool found = false;
  int best_id = 0;
  double best_value = kInvalidScore;
  for (const CandidateScore& s : scores) {
    if (!score_is_valid(s)) continue;
    if (!found || s.value > best_value ||
        (s.value == best_value && s.candidate_id < best_id)) {
      found = true;
      best_value = s.value;
      best_id = s.candidate_id;
    }
  }
  if (!found) throw AllCandidatesInvalid("select_best: every candidate score is invalid");
  return best_id;
}

// ---------------------------------------------------------------------------
// Test oracles

struct GridSpec {
  double lo = -8.0;
  double hi = 8.0;
  int points_per_axis = 201;
  bool refinement_check = true;
  double refinement_tol = 1e-3;
};

namespace detail {

inline double single_row_loglik(std::span<const double> theta, std::span<const double> x,
                                int label) {
  const double eta = clamp_eta(dot(theta, x));
  return label * eta - softplus(eta);
}

inline double labeled_loglik(std::span<const double> theta, const LabeledData& labeled) {
  double ll = 0.0;
  for (std::size_t i = 0; i < labeled.size(); ++i)
    ll += single_row_loglik(theta, labeled.design.row(i), labeled.labels.values[i]);
  return ll;
}

// Trapezoid log-quadrature of the PPP on a q-dimensional grid.
inline double grid_log_ppp(const LabeledData& labeled, const Candidate& cand,
                           const Prior& prior, const GridSpec& grid, int points) {
  const std::size_t q = cand.features.size();
  const double h = (grid.hi - grid.lo) / (points - 1);
  LogSumExp numerator;    // integrand: p(D u i | theta) p(theta | D)
  LogSumExp denominator;  // normalizes p(theta | D) on the same grid
  std::vector<int> index(q, 0);
  std::vector<double> theta(q, 0.0);
  const double log_half = std::log(0.5);
  while (true) {
    double log_w = q * std::log(h);
    for (std::size_t d = 0; d < q; ++d) {
      theta[d] = grid.lo + index[d] * h;
      if (index[d] == 0 || index[d] == points - 1) log_w += log_half;
    }
    const double base = labeled_loglik(theta, labeled) + prior.log_density(theta);
    const double aug = detail::single_row_loglik(theta, cand.features, cand.pseudo_label) +
                       detail::labeled_loglik(theta, labeled);
    numerator.add(log_w + base + aug);
    denominator.add(log_w + base);
    std::size_t d = 0;
    for (; d < q; ++d) {
      if (++index[d] < points) break;
      index[d] = 0;
    }
    if (d == q) break;
  }
  return numerator.value() - denominator.value();
}

}  // namespace detail

// Exact-by-quadrature log PPP for q <= 3, used as the independent reference
// for the Laplace approximations. The posterior is normalized on the same
// grid, so prior normalization constants cancel.
inline double oracle_log_ppp(const LabeledData& labeled, const Candidate& cand,
                             const Prior& prior, const GridSpec& grid = {}) {
  const std::size_t q = cand.features.size();
  if (q == 0 || q > 3) throw std::invalid_argument("oracle_log_ppp: requires 1 <= q <= 3");
  if (labeled.size() > 0 && labeled.design.n_cols() != q)
    throw std::invalid_argument("oracle_log_ppp: dimension mismatch");
  if (grid.lo > -8.0 || grid.hi < 8.0 || grid.points_per_axis < 201)
    throw std::invalid_argument("oracle_log_ppp: grid must cover [-8,8] with >= 201 points per axis");
  const double coarse = detail::grid_log_ppp(labeled, cand, prior, grid, grid.points_per_axis);
  if (grid.refinement_check) {
    const double fine =
        detail::grid_log_ppp(labeled, cand, prior, grid, 2 * grid.points_per_axis - 1);
    if (std::abs(fine - coarse) > grid.refinement_tol)
      throw GridTooCoarse("oracle_log_ppp: doubling the resolution moved the result by " +
                          std::to_string(std::abs(fine - coarse)));
  }
  return coarse;
}

enum class OracleWeighting { Prior, Posterior };

// Exact Bayes-criterion selection on a finite parameter grid: weights the
// pseudo-label likelihood by the prior or by the posterior over theta and
// returns the argmax candidate id (ties to the smallest id).
inline int oracle_discrete_bayes(const std::vector<std::vector<double>>& theta_grid,
                                 const std::vector<double>& prior_weights,
                                 const LabeledData& labeled, const std::vector<Candidate>& pool,
                                 OracleWeighting weighting = OracleWeighting::Posterior) {
  if (theta_grid.empty()) throw std::invalid_argument("oracle_discrete_bayes: empty theta grid");
  if (theta_grid.size() != prior_weights.size())
    throw std::invalid_argument("oracle_discrete_bayes: weight count mismatch");
  if (pool.empty()) throw EmptyPool("oracle_discrete_bayes: empty pool");
  double weight_sum = 0.0;
  for (double w : prior_weights) {
    if (w < 0.0) throw std::invalid_argument("oracle_discrete_bayes: negative prior weight");
    weight_sum += w;
  }
  if (std::abs(weight_sum - 1.0) > 1e-9)
    throw std::invalid_argument("oracle_discrete_bayes: prior weights must sum to 1");

  const std::size_t grid_size = theta_grid.size();
  std::vector<double> log_weight(grid_size);
  LogSumExp normalizer;
  for (std::size_t j = 0; j < grid_size; ++j) {
    double lw = prior_weights[j] > 0.0 ? std::log(prior_weights[j])
                                       : -std::numeric_limits<double>::infinity();
    if (weighting == OracleWeighting::Posterior && labeled.size() > 0)
      lw += detail::labeled_loglik(theta_grid[j], labeled);
    log_weight[j] = lw;
    normalizer.add(lw);
  }
  const double log_z = normalizer.value();

  bool found = false;
  int best_id = 0;
  double best_value = 0.0;
  for (const Candidate& cand : pool) {
    LogSumExp expectation;
    for (std::size_t j = 0; j < grid_size; ++j) {
      if (log_weight[j] == -std::numeric_limits<double>::infinity()) continue;
      double aug = detail::single_row_loglik(theta_grid[j], cand.features, cand.pseudo_label);
      if (labeled.size() > 0) aug += detail::labeled_loglik(theta_grid[j], labeled);
      expectation.add(log_weight[j] - log_z + aug);
    }
    const double value = expectation.value();
    if (!found || value > best_value || (value == best_value && cand.id < best_id)) {
      found = true;
      best_value = value;
      best_id = cand.id;
    }
  }
  return best_id;
}

}  // namespace bpls
