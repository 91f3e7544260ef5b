#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "bpls/criteria.hpp"
#include "bpls/data.hpp"
#include "bpls/errors.hpp"
#include "bpls/model.hpp"
#include "bpls/prior.hpp"

namespace bpls {

// Finite stand-in for the convex prior set of the Gamma-maximin criterion;
// the argmin is taken over the listed members (extreme points suffice for
// linear functionals).
struct PriorSet {
  std::vector<Prior> members;

  std::size_t size() const { return members.size(); }
};

struct OptimismWeight {
  double alpha = 0.5;  // in [0,1]; weight on the maximal per-label score

  explicit OptimismWeight(double a) : alpha(a) {
    if (!(a >= 0.0 && a <= 1.0))
      throw std::invalid_argument("OptimismWeight: alpha must be in [0,1]");
  }
};

// Gamma-maximin PPP: pick the prior with the smallest log-density at the
// current ML estimate, then score with the informative criterion under it.
inline CandidateScore score_robust_ppp(const LabeledData& labeled, const Candidate& cand,
                                       const PriorSet& prior_set,
                                       std::span<const double> theta_hat,
                                       const ScoreOptions& options = {}) {
  if (prior_set.members.empty())
    throw std::invalid_argument("score_robust_ppp: empty prior set");
  std::size_t worst = 0;
  double worst_density = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < prior_set.members.size(); ++k) {
    const double d = prior_set.members[k].log_density(theta_hat);
    if (d < worst_density) {
      worst_density = d;
      worst = k;
    }
  }
  CandidateScore score = score_ibpls(labeled, cand, prior_set.members[worst], options);
  score.criterion = Criterion::PppRobust;
  return score;
}

// Fantasy PPP: Hurwicz combination alpha * max + (1 - alpha) * min of the
// uninformative scores under both possible labels of the row.
inline CandidateScore score_fantasy_ppp(const LabeledData& labeled, int candidate_id,
                                        std::span<const double> cand_features,
                                        OptimismWeight optimism,
                                        const ScoreOptions& options = {}) {
  Candidate cand{candidate_id, {cand_features.begin(), cand_features.end()}, 0};
  const CandidateScore score0 = score_ubpls(labeled, cand, options);
  cand.pseudo_label = 1;
  const CandidateScore score1 = score_ubpls(labeled, cand, options);

  CandidateScore result{candidate_id, Criterion::PppFantasy, kInvalidScore};
  if (!score_is_valid(score0) && !score_is_valid(score1)) return result;
  if (!score_is_valid(score0)) {
    result.value = score1.value;
  } else if (!score_is_valid(score1)) {
    result.value = score0.value;
  } else {
    const double hi = std::max(score0.value, score1.value);
    const double lo = std::min(score0.value, score1.value);
    result.value = optimism.alpha * hi + (1.0 - optimism.alpha) * lo;
  }
  return result;
}

struct NopredSelection {
  int candidate_id = 0;
  int chosen_label = 0;
  double value = kInvalidScore;
};

// BPLS without predictions: evaluates the uninformative criterion for every
// (row, label) pair -- |U| * |Y| evaluations -- and returns the argmax pair.
// Ties break to the smaller id, then label 0.
inline NopredSelection select_without_predictions(const LabeledData& labeled,
                                                  const std::vector<int>& pool_ids,
                                                  const Matrix& pool_features,
                                                  const ScoreOptions& options = {}) {
  if (pool_ids.empty()) throw EmptyPool("select_without_predictions: empty pool");
  if (pool_ids.size() != pool_features.rows())
    throw std::invalid_argument("select_without_predictions: id/feature count mismatch");
  NopredSelection best;
  bool found = false;
  for (std::size_t i = 0; i < pool_ids.size(); ++i) {
    const auto row = pool_features.row(i);
    for (int label = 0; label <= 1; ++label) {
      const Candidate cand{pool_ids[i], {row.begin(), row.end()}, label};
      const CandidateScore score = score_ubpls(labeled, cand, options);
      if (!score_is_valid(score)) continue;
      const bool better =
          !found || score.value > best.value ||
          (score.value == best.value &&
           (cand.id < best.candidate_id ||
            (cand.id == best.candidate_id && label < best.chosen_label)));
      if (better) {
        found = true;
        best = {cand.id, label, score.value};
      }
    }
  }
  if (!found)
    throw AllCandidatesInvalid("select_without_predictions: every (row,label) pair invalid");
  return best;
}

// Bivariate BPLS: pick the basis from the ladder with the best labeled-data
// log-likelihood, evaluate the uninformative criterion under it and penalize
// the expanded model dimension: score = uBPLS - lambda * dim(Theta).
inline CandidateScore score_bivariate(const LabeledSet& raw_labeled, int candidate_id,
                                      std::span<const double> raw_features, int pseudo_label,
                                      const std::vector<BasisSpec>& basis_ladder,
                                      double lambda) {
  if (basis_ladder.empty()) throw std::invalid_argument("score_bivariate: empty basis ladder");
  if (lambda < 0.0) throw std::invalid_argument("score_bivariate: lambda must be >= 0");

  CandidateScore result{candidate_id, Criterion::BplsBivariate, kInvalidScore};
  bool have_best = false;
  std::size_t best_dim = 0;
  double best_loglik = 0.0;
  BasisExpander best_expander;

  std::size_t previous_dim = 0;
  for (const BasisSpec& spec : basis_ladder) {
    BasisExpander expander;
    try {
      expander = BasisExpander::fit(raw_labeled.features, spec);
    } catch (const DegenerateFeature&) {
      continue;
    }
    const std::size_t dim = expander.out_cols();
    if (dim < previous_dim)
      throw std::invalid_argument("score_bivariate: ladder not ordered by expanded dimension");
    previous_dim = dim;
    try {
      const DesignMatrix design = expander.transform(raw_labeled.features);
      const FittedModel model = fit(design, raw_labeled.labels,
                                    ObservationWeights::unit(design.n_rows()));
      if (!have_best || model.final_loglik > best_loglik) {
        have_best = true;
        best_loglik = model.final_loglik;
        best_dim = dim;
        best_expander = expander;
      }
    } catch (const SingularInformation&) {
      continue;
    }
  }
  if (!have_best) return result;  // all bases failed

  const LabeledData labeled{best_expander.transform(raw_labeled.features), raw_labeled.labels};
  const Candidate cand{candidate_id, best_expander.transform_row(raw_features), pseudo_label};
  const CandidateScore ubpls = score_ubpls(labeled, cand);
  if (score_is_valid(ubpls))
    result.value = ubpls.value - lambda * static_cast<double>(best_dim);
  return result;
}

}  // namespace bpls
