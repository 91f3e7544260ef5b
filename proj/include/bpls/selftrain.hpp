#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "bpls/criteria.hpp"
#include "bpls/data.hpp"
#include "bpls/errors.hpp"
#include "bpls/extensions.hpp"
#include "bpls/model.hpp"
#include "bpls/prior.hpp"
#include "bpls/rng.hpp"

namespace bpls {

struct SelfTrainConfig {
  Criterion criterion = Criterion::PppU;
  Prior prior;                        // ppp-i / ppp-fine / ppp-robust fallback
  PriorSet prior_set;                 // ppp-robust
  double alpha = 0.5;                 // ppp-fantasy optimism weight
  double lambda = 0.5;                // bpls-bivariate dimension penalty
  BasisSpec basis = BasisSpec::identity();
  std::vector<BasisSpec> basis_ladder;  // bpls-bivariate
  std::optional<int> max_iterations;    // nullopt = run to pool exhaustion
  std::uint64_t seed = 0;
  int threads = 1;
};

struct IterationRecord {
  int iteration = 0;  // 1-based
  int candidate_id = 0;
  int pseudo_label = 0;
  double value = 0.0;       // winning criterion value
  double test_accuracy = 0.0;
  int pool_size_remaining = 0;
};

struct SelfTrainTrace {
  SelfTrainConfig config;
  double initial_accuracy = 0.0;  // supervised baseline before any selection
  std::vector<IterationRecord> records;
  std::vector<std::string> warnings;
};

// Share of test rows classified correctly at threshold 0.5; a predicted
// probability of exactly 0.5 counts as class 1.
inline double evaluate_accuracy(const FittedModel& model, const DesignMatrix& test_design,
                                const BinaryLabels& test_labels) {
  if (test_design.n_rows() == 0) throw EmptyTestSet("evaluate_accuracy: empty test set");
  if (test_labels.size() != test_design.n_rows())
    throw std::invalid_argument("evaluate_accuracy: label count mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_design.n_rows(); ++i) {
    const double p = predict_proba(model.theta, test_design.row(i));
    const int predicted = p >= 0.5 ? 1 : 0;
    if (predicted == test_labels.values[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_design.n_rows());
}

namespace detail {

// Static-chunked parallel map; results land in caller-indexed slots so the
// output is independent of scheduling.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  const int workers =
      std::max(1, std::min<int>(threads, static_cast<int>(count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      const std::size_t begin = count * t / workers;
      const std::size_t end = count * (t + 1) / workers;
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Candidate-id-keyed uniform draw: invariant to pool row order.
inline double hashed_uniform(std::uint64_t seed, int iteration, int candidate_id) {
  const std::uint64_t s =
      derive_seed(derive_seed(seed, static_cast<std::uint64_t>(iteration)),
                  static_cast<std::uint64_t>(candidate_id));
  return static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
}

struct LoopState {
  LabeledData labeled;       // expanded
  LabeledSet raw_labeled;    // raw features, needed by the bivariate criterion
  std::vector<int> pool_ids;
  Matrix pool_design;        // expanded pool rows, index-aligned with pool_ids
  Matrix pool_raw;
  FittedModel model;
};

inline void remove_pool_row(LoopState& state, std::size_t idx) {
  const std::size_t last = state.pool_ids.size() - 1;
  const auto swap_rows = [&](Matrix& m) {
    if (idx != last)
      for (std::size_t j = 0; j < m.cols(); ++j) std::swap(m.at(idx, j), m.at(last, j));
    Matrix shrunk(last, m.cols());
    for (std::size_t i = 0; i < last; ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) shrunk.at(i, j) = m.at(i, j);
    m = std::move(shrunk);
  };
  std::swap(state.pool_ids[idx], state.pool_ids[last]);
  state.pool_ids.pop_back();
  swap_rows(state.pool_design);
  swap_rows(state.pool_raw);
}

inline void append_labeled_row(LoopState& state, std::size_t pool_idx, int label) {
  const auto append = [&](Matrix& m, const Matrix& src) {
    Matrix grown(m.rows() + 1, m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) grown.at(i, j) = m.at(i, j);
    for (std::size_t j = 0; j < m.cols(); ++j) grown.at(m.rows(), j) = src.at(pool_idx, j);
    m = std::move(grown);
  };
  append(state.labeled.design.x, state.pool_design);
  append(state.raw_labeled.features, state.pool_raw);
  state.labeled.labels.values.push_back(label);
  state.raw_labeled.labels.values.push_back(label);
}

inline std::vector<CandidateScore> score_pool(const SelfTrainConfig& cfg, const LoopState& state,
                                              const std::vector<Candidate>& candidates,
                                              int iteration) {
  std::vector<CandidateScore> scores(candidates.size());
  ScoreOptions warm;
  warm.warm_start = state.model.theta;
  const auto score_one = [&](std::size_t i) {
    const Candidate& cand = candidates[i];
    switch (cfg.criterion) {
      case Criterion::PppU:
        scores[i] = score_ubpls(state.labeled, cand, warm);
        break;
      case Criterion::PppI:
        scores[i] = score_ibpls(state.labeled, cand, cfg.prior, warm);
        break;
      case Criterion::PppFine:
        scores[i] = score_fine_ppp(state.labeled, cand, cfg.prior, warm);
        break;
      case Criterion::LikelihoodMaxmax:
        scores[i] = score_maxmax_likelihood(state.labeled, cand, warm);
        break;
      case Criterion::ProbScore:
        scores[i] = score_probability(state.model, cand);
        break;
      case Criterion::PredVariance:
        scores[i] = score_predictive_variance(state.model, cand);
        break;
      case Criterion::Random:
        scores[i] = {cand.id, Criterion::Random,
                     hashed_uniform(cfg.seed, iteration, cand.id)};
        break;
      case Criterion::PppRobust:
        scores[i] = score_robust_ppp(state.labeled, cand, cfg.prior_set, state.model.theta, warm);
        break;
      case Criterion::PppFantasy:
        scores[i] = score_fantasy_ppp(state.labeled, cand.id, cand.features,
                                      OptimismWeight(cfg.alpha), warm);
        break;
      case Criterion::BplsBivariate:
        scores[i] = score_bivariate(state.raw_labeled, cand.id, state.pool_raw.row(i),
                                    cand.pseudo_label, cfg.basis_ladder, cfg.lambda);
        break;
      case Criterion::BplsNopred:
        throw std::logic_error("score_pool: bpls-nopred selects directly");
    }
  };
  parallel_for(candidates.size(), cfg.threads, score_one);
  return scores;
}

}  // namespace detail

// The self-training loop: fit on labeled data, predict pseudo-labels for the
// whole remaining pool, score every candidate under the configured criterion,
// move the winner (with its pseudo-label) into the labeled set, refit and
// record test accuracy; repeat until the pool is empty or the iteration cap
// is reached.
inline SelfTrainTrace run_self_training(const SelfTrainConfig& cfg, const LabeledSet& labeled,
                                        const UnlabeledPool& pool, const TestSet& test) {
  if (labeled.features.rows() == 0)
    throw std::invalid_argument("run_self_training: labeled data must be nonempty");
  if (cfg.max_iterations && *cfg.max_iterations < 0)
    throw std::invalid_argument("run_self_training: max_iterations must be >= 0");
  if (cfg.criterion == Criterion::PppRobust && cfg.prior_set.members.empty())
    throw ConfigError("run_self_training: ppp-robust requires a nonempty prior set");
  if (cfg.criterion == Criterion::BplsBivariate && cfg.basis_ladder.empty())
    throw ConfigError("run_self_training: bpls-bivariate requires a basis ladder");

  // Knots (if any) come from the initial labeled rows only; pool and test
  // rows are expanded with the same transform.
  const BasisExpander expander = BasisExpander::fit(labeled.features, cfg.basis);

  detail::LoopState state;
  state.labeled.design = expander.transform(labeled.features);
  state.labeled.labels = labeled.labels;
  state.raw_labeled = labeled;
  state.pool_ids = pool.ids;
  state.pool_raw = pool.features;
  state.pool_design = expander.transform(pool.features).x;
  const DesignMatrix test_design = expander.transform(test.features);

  const ObservationWeights unit0 = ObservationWeights::unit(state.labeled.size());
  try {
    state.model = fit(state.labeled.design, state.labeled.labels, unit0);
  } catch (const SingularInformation& e) {
    throw UnfittableInitialModel(std::string("run_self_training: initial fit failed: ") +
                                 e.what());
  }

  SelfTrainTrace trace;
  trace.config = cfg;
  trace.initial_accuracy = evaluate_accuracy(state.model, test_design, test.labels);

  int iteration = 0;
  while (!state.pool_ids.empty()) {
    if (cfg.max_iterations && iteration >= *cfg.max_iterations) break;
    ++iteration;

    int winner_idx = -1;
    int winner_label = 0;
    double winner_value = 0.0;
    if (cfg.criterion == Criterion::BplsNopred) {
      const NopredSelection sel = select_without_predictions(
          state.labeled, state.pool_ids, state.pool_design,
          ScoreOptions{state.model.theta, {}});
      winner_label = sel.chosen_label;
      winner_value = sel.value;
      for (std::size_t i = 0; i < state.pool_ids.size(); ++i)
        if (state.pool_ids[i] == sel.candidate_id) winner_idx = static_cast<int>(i);
    } else {
      std::vector<Candidate> candidates(state.pool_ids.size());
      for (std::size_t i = 0; i < state.pool_ids.size(); ++i) {
        const auto row = state.pool_design.row(i);
        const double p = predict_proba(state.model.theta, row);
        candidates[i] = {state.pool_ids[i], {row.begin(), row.end()}, p >= 0.5 ? 1 : 0};
      }
      const std::vector<CandidateScore> scores =
          detail::score_pool(cfg, state, candidates, iteration);
      const std::size_t invalid =
          static_cast<std::size_t>(std::count_if(scores.begin(), scores.end(),
                                                 [](const CandidateScore& s) {
                                                   return !score_is_valid(s);
                                                 }));
      if (invalid > 0)
        trace.warnings.push_back("iteration " + std::to_string(iteration) + ": " +
                                 std::to_string(invalid) + " invalid candidate scores");
      const int best_id = select_best(scores);
      for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i].candidate_id == best_id) {
          winner_idx = static_cast<int>(i);
          winner_label = candidates[i].pseudo_label;
          winner_value = scores[i].value;
          break;
        }
      }
    }

    detail::append_labeled_row(state, static_cast<std::size_t>(winner_idx), winner_label);
    const int winner_id = state.pool_ids[static_cast<std::size_t>(winner_idx)];
    detail::remove_pool_row(state, static_cast<std::size_t>(winner_idx));

    FitOptions refit;
    refit.initial_theta = state.model.theta;
    state.model = fit(state.labeled.design, state.labeled.labels,
                      ObservationWeights::unit(state.labeled.size()), refit);

    IterationRecord record;
    record.iteration = iteration;
    record.candidate_id = winner_id;
    record.pseudo_label = winner_label;
    record.value = winner_value;
    record.test_accuracy = evaluate_accuracy(state.model, test_design, test.labels);
    record.pool_size_remaining = static_cast<int>(state.pool_ids.size());
    trace.records.push_back(record);
  }
  return trace;
}

}  // namespace bpls
