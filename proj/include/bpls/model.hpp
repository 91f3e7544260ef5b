#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpls/errors.hpp"
#include "bpls/numerics.hpp"
#include "bpls/prior.hpp"

namespace bpls {

// Linear predictors are clamped to +-35 before exponentiation; beyond that
// the logistic terms are saturated to machine precision anyway, and the
// clamp acts as the practical compactification of the parameter set.
inline constexpr double kLinearPredictorClamp = 35.0;

// Ridge added to an indefinite Newton / Fisher system. Tiny labeled sets
// separate frequently, so this path is routine rather than exceptional.
inline constexpr double kRidgeJitter = 1e-6;

inline constexpr double kGradientTol = 1e-8;
inline constexpr int kMaxNewtonIterations = 100;

// Feature rows with an optional leading all-ones intercept column.
struct DesignMatrix {
  Matrix x;
  bool has_intercept = true;

  std::size_t n_rows() const { return x.rows(); }
  std::size_t n_cols() const { return x.cols(); }
  std::span<const double> row(std::size_t i) const { return x.row(i); }
};

struct BinaryLabels {
  std::vector<int> values;  // each 0 or 1

  std::size_t size() const { return values.size(); }
};

struct ObservationWeights {
  std::vector<double> values;  // nonnegative, at least one positive

  static ObservationWeights unit(std::size_t n) {
    return {std::vector<double>(n, 1.0)};
  }
  std::size_t size() const { return values.size(); }
};

struct FittedModel {
  std::vector<double> theta;
  bool converged = false;
  int iterations = 0;
  double final_loglik = 0.0;
};

// ---------------------------------------------------------------------------
// Basis expansion

enum class BasisKind { Identity, Polynomial, TruncatedPowerSpline };

struct BasisSpec {
  BasisKind kind = BasisKind::Identity;
  int degree = 1;
  int knot_count = 0;
  // Per-feature application flags; empty means "expand every feature".
  std::vector<bool> apply_to;

  static BasisSpec identity() { return {}; }
  static BasisSpec polynomial(int degree) {
    if (degree < 1) throw std::invalid_argument("BasisSpec: degree must be >= 1");
    return {BasisKind::Polynomial, degree, 0, {}};
  }
  static BasisSpec spline(int degree, int knot_count) {
    if (degree < 1) throw std::invalid_argument("BasisSpec: degree must be >= 1");
    if (knot_count < 0) throw std::invalid_argument("BasisSpec: knot_count must be >= 0");
    return {BasisKind::TruncatedPowerSpline, degree, knot_count, {}};
  }

  bool applies_to(std::size_t feature) const {
    return apply_to.empty() || (feature < apply_to.size() && apply_to[feature]);
  }
};

namespace detail {

// Linear-interpolation quantile (R type 7) of an already sorted vector.
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty vector");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace detail

// Holds knots fitted on one matrix so the identical expansion can be applied
// to labeled, pool and test rows without quantile leakage.
class BasisExpander {
 public:
  static BasisExpander fit(const Matrix& raw, const BasisSpec& spec) {
    if (!raw.all_finite())
      throw std::invalid_argument("BasisExpander: non-finite features");
    BasisExpander e;
    e.spec_ = spec;
    e.n_features_ = raw.cols();
    if (spec.kind == BasisKind::TruncatedPowerSpline && spec.knot_count > 0) {
      e.knots_.resize(raw.cols());
      for (std::size_t j = 0; j < raw.cols(); ++j) {
        if (!spec.applies_to(j)) continue;
        std::vector<double> col(raw.rows());
        for (std::size_t i = 0; i < raw.rows(); ++i) col[i] = raw.at(i, j);
        std::sort(col.begin(), col.end());
        if (col.front() == col.back())
          throw DegenerateFeature("spline expansion of constant feature " +
                                  std::to_string(j));
        for (int k = 1; k <= spec.knot_count; ++k) {
          const double p = static_cast<double>(k) / (spec.knot_count + 1);
          e.knots_[j].push_back(detail::sorted_quantile(col, p));
        }
      }
    }
    return e;
  }

  std::size_t out_cols() const {
    std::size_t cols = 1;  // intercept
    for (std::size_t j = 0; j < n_features_; ++j) cols += cols_for_feature(j);
    return cols;
  }

  DesignMatrix transform(const Matrix& raw) const {
    if (raw.cols() != n_features_)
      throw std::invalid_argument("BasisExpander: feature count changed");
    DesignMatrix design;
    design.has_intercept = true;
    design.x = Matrix(raw.rows(), out_cols());
    for (std::size_t i = 0; i < raw.rows(); ++i) {
      std::size_t c = 0;
      design.x.at(i, c++) = 1.0;
      for (std::size_t j = 0; j < n_features_; ++j) {
        const double v = raw.at(i, j);
        if (!spec_.applies_to(j) || spec_.kind == BasisKind::Identity) {
          design.x.at(i, c++) = v;
          continue;
        }
        double power = 1.0;
        for (int d = 1; d <= spec_.degree; ++d) {
          power *= v;
          design.x.at(i, c++) = power;
        }
        if (spec_.kind == BasisKind::TruncatedPowerSpline) {
          for (double knot : knots_.empty() ? std::vector<double>{} : knots_[j]) {
            const double shifted = v - knot;
            design.x.at(i, c++) =
                shifted > 0.0 ? std::pow(shifted, spec_.degree) : 0.0;
          }
        }
      }
    }
    return design;
  }

  std::vector<double> transform_row(std::span<const double> raw_row) const {
    Matrix m(1, raw_row.size());
    for (std::size_t j = 0; j < raw_row.size(); ++j) m.at(0, j) = raw_row[j];
    const DesignMatrix d = transform(m);
    return {d.x.row(0).begin(), d.x.row(0).end()};
  }

  const BasisSpec& spec() const { return spec_; }

 private:
  std::size_t cols_for_feature(std::size_t j) const {
    if (!spec_.applies_to(j) || spec_.kind == BasisKind::Identity) return 1;
    std::size_t cols = static_cast<std::size_t>(spec_.degree);
    if (spec_.kind == BasisKind::TruncatedPowerSpline && !knots_.empty())
      cols += knots_[j].size();
    return cols;
  }

  BasisSpec spec_;
  std::size_t n_features_ = 0;
  std::vector<std::vector<double>> knots_;  // per raw feature, empty if unused
};

// One-shot expansion: knots (if any) come from the quantiles of `raw` itself.
inline DesignMatrix expand_basis(const Matrix& raw, const BasisSpec& spec) {
  return BasisExpander::fit(raw, spec).transform(raw);
}

// ---------------------------------------------------------------------------
// Logistic model

inline double clamp_eta(double eta) {
  return std::clamp(eta, -kLinearPredictorClamp, kLinearPredictorClamp);
}

// logistic(eta) without overflow in either tail.
inline double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// P(Y = 1 | x) = 1 / (1 + exp(-x^T theta)).
inline double predict_proba(std::span<const double> theta, std::span<const double> x_row) {
  if (theta.size() != x_row.size())
    throw std::invalid_argument("predict_proba: dimension mismatch");
  return logistic(dot(theta, x_row));
}

namespace detail {

inline void check_model_dims(const DesignMatrix& design, const BinaryLabels& labels,
                             const ObservationWeights& weights) {
  if (design.n_rows() == 0) throw std::invalid_argument("model: empty design matrix");
  if (labels.size() != design.n_rows() || weights.size() != design.n_rows())
    throw std::invalid_argument("model: row count mismatch");
}

// log(1 + exp(eta)) evaluated without overflow.
inline double softplus(double eta) {
  return std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta)));
}

}  // namespace detail

// Weighted Bernoulli log-likelihood sum_i w_i [y_i log p_i + (1-y_i) log(1-p_i)],
// with the linear predictor clamped before exponentiation.
inline double log_likelihood(std::span<const double> theta, const DesignMatrix& design,
                             const BinaryLabels& labels, const ObservationWeights& weights) {
  detail::check_model_dims(design, labels, weights);
  if (theta.size() != design.n_cols())
    throw std::invalid_argument("log_likelihood: theta dimension mismatch");
  double ll = 0.0;
  for (std::size_t i = 0; i < design.n_rows(); ++i) {
    const double eta = clamp_eta(dot(theta, design.row(i)));
    // y*eta - log(1 + exp(eta)) == y log p + (1-y) log(1-p)
    ll += weights.values[i] * (labels.values[i] * eta - detail::softplus(eta));
  }
  return ll;
}

// (1/normalize_by) * sum_i w_i p_i (1 - p_i) x_i x_i^T. May be only positive
// semidefinite; consumers apply their own jitter policy.
inline SpdMatrix observed_fisher(std::span<const double> theta, const DesignMatrix& design,
                                 const BinaryLabels& labels, const ObservationWeights& weights,
                                 double normalize_by) {
  detail::check_model_dims(design, labels, weights);
  if (!(normalize_by > 0.0))
    throw std::invalid_argument("observed_fisher: normalize_by must be positive");
  (void)labels;  // curvature of the Bernoulli log-likelihood does not involve y
  const std::size_t q = design.n_cols();
  SpdMatrix info(q);
  for (std::size_t i = 0; i < design.n_rows(); ++i) {
    const double w = weights.values[i];
    if (w == 0.0) continue;
    const auto x = design.row(i);
    const double p = logistic(clamp_eta(dot(theta, x)));
    const double coeff = w * p * (1.0 - p) / normalize_by;
    for (std::size_t a = 0; a < q; ++a)
      for (std::size_t b = a; b < q; ++b) {
        const double v = info.at(a, b) + coeff * x[a] * x[b];
        info.set_symmetric(a, b, v);
      }
  }
  return info;
}

enum class FitMode {
  MaximumLikelihood,  // prior ignored by the optimizer
  Map                 // Gaussian prior enters objective, gradient and curvature
};

struct FitOptions {
  Prior prior = Prior::uninformative();
  FitMode mode = FitMode::MaximumLikelihood;
  int max_iterations = kMaxNewtonIterations;
  double gradient_tol = kGradientTol;
  double jitter = kRidgeJitter;
  std::vector<double> initial_theta;  // empty = zeros
};

namespace detail {

inline std::vector<double> loglik_gradient(std::span<const double> theta,
                                           const DesignMatrix& design,
                                           const BinaryLabels& labels,
                                           const ObservationWeights& weights) {
  std::vector<double> grad(theta.size(), 0.0);
  for (std::size_t i = 0; i < design.n_rows(); ++i) {
    const auto x = design.row(i);
    const double p = logistic(clamp_eta(dot(theta, x)));
    const double coeff = weights.values[i] * (labels.values[i] - p);
    for (std::size_t j = 0; j < theta.size(); ++j) grad[j] += coeff * x[j];
  }
  return grad;
}

inline double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace detail

// Damped Newton on the weighted log-likelihood (plus Gaussian log-prior in
// MAP mode). Stops once the gradient infinity-norm reaches the tolerance or
// the iteration cap; the converged flag reports which it was. Indefinite
// Newton systems get one ridge jitter; failing that, SingularInformation.
inline FittedModel fit(const DesignMatrix& design, const BinaryLabels& labels,
                       const ObservationWeights& weights, const FitOptions& options = {}) {
  detail::check_model_dims(design, labels, weights);
  const std::size_t q = design.n_cols();
  const bool use_prior = options.mode == FitMode::Map && options.prior.is_gaussian();
  if (use_prior && options.prior.dim() != q)
    throw std::invalid_argument("fit: prior dimension mismatch");

  std::vector<double> theta = options.initial_theta;
  if (theta.empty()) theta.assign(q, 0.0);
  if (theta.size() != q) throw std::invalid_argument("fit: initial theta dimension mismatch");

  const auto objective = [&](std::span<const double> t) {
    double v = log_likelihood(t, design, labels, weights);
    if (use_prior) v += options.prior.log_density(t);
    return v;
  };

  SpdMatrix prior_precision;
  if (use_prior) prior_precision = options.prior.precision();

  FittedModel result;
  double current_obj = objective(theta);
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    std::vector<double> grad = detail::loglik_gradient(theta, design, labels, weights);
    if (use_prior) {
      const std::vector<double> pg = options.prior.log_density_gradient(theta);
      for (std::size_t j = 0; j < q; ++j) grad[j] += pg[j];
    }
    if (detail::inf_norm(grad) <= options.gradient_tol) {
      result.converged = true;
      break;
    }

    SpdMatrix curvature = observed_fisher(theta, design, labels, weights, 1.0);
    if (use_prior)
      for (std::size_t a = 0; a < q; ++a)
        for (std::size_t b = a; b < q; ++b)
          curvature.set_symmetric(a, b, curvature.at(a, b) + prior_precision.at(a, b));

    std::vector<double> step;
    try {
      step = solve_spd(curvature, grad);
    } catch (const NotPositiveDefinite&) {
      curvature.add_diagonal(options.jitter);
      try {
        step = solve_spd(curvature, grad);
      } catch (const NotPositiveDefinite&) {
        throw SingularInformation("fit: Newton system not positive definite after jitter");
      }
    }

    // Backtracking on the objective; bail out if no step length helps.
    double scale = 1.0;
    bool improved = false;
    std::vector<double> trial(q);
    for (int halving = 0; halving < 40; ++halving) {
      for (std::size_t j = 0; j < q; ++j) trial[j] = theta[j] + scale * step[j];
      const double trial_obj = objective(trial);
      if (trial_obj >= current_obj) {
        theta = trial;
        current_obj = trial_obj;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) {
      ++iter;
      break;  // stagnant; gradient check above decides convergence honestly
    }
  }

  result.theta = std::move(theta);
  result.iterations = iter;
  if (!result.converged) {
    std::vector<double> grad = detail::loglik_gradient(result.theta, design, labels, weights);
    if (use_prior) {
      const std::vector<double> pg = options.prior.log_density_gradient(result.theta);
      for (std::size_t j = 0; j < q; ++j) grad[j] += pg[j];
    }
    result.converged = detail::inf_norm(grad) <= options.gradient_tol;
  }
  result.final_loglik = log_likelihood(result.theta, design, labels, weights);
  return result;
}

}  // namespace bpls
