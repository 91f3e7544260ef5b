#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bpls/numerics.hpp"

namespace bpls {

// Prior over the model coefficients. Uninformative stands for the uniform
// prior on the (compact) parameter set; its log-density is taken as 0 so it
// drops out of every argmax comparison. The Gaussian variant is a full
// N(mean, covariance) with covariance admitting a Cholesky factor.
class Prior {
 public:
  enum class Kind { Uninformative, Gaussian };

  Prior() = default;

  static Prior uninformative() { return Prior(); }

  static Prior gaussian(std::vector<double> mean, SpdMatrix covariance) {
    if (mean.size() != covariance.dim())
      throw std::invalid_argument("Prior::gaussian: mean/covariance dimension mismatch");
    Prior p;
    p.kind_ = Kind::Gaussian;
    p.mean_ = std::move(mean);
    p.covariance_ = std::move(covariance);
    p.factor_ = cholesky(p.covariance_);  // validates positive definiteness
    return p;
  }

  // Isotropic helper: N(mean, scale * I).
  static Prior isotropic_gaussian(std::vector<double> mean, double scale) {
    SpdMatrix cov(mean.size());
    for (std::size_t i = 0; i < mean.size(); ++i) cov.at(i, i) = scale;
    return gaussian(std::move(mean), std::move(cov));
  }

  Kind kind() const { return kind_; }
  bool is_gaussian() const { return kind_ == Kind::Gaussian; }
  const std::vector<double>& mean() const { return mean_; }
  const SpdMatrix& covariance() const { return covariance_; }
  std::size_t dim() const { return mean_.size(); }

  // log pi(theta). Zero for the uninformative prior, full Gaussian
  // log-density otherwise.
  double log_density(std::span<const double> theta) const {
    if (kind_ == Kind::Uninformative) return 0.0;
    if (theta.size() != mean_.size())
      throw std::invalid_argument("Prior::log_density: dimension mismatch");
    const std::size_t q = mean_.size();
    std::vector<double> diff(q);
    for (std::size_t i = 0; i < q; ++i) diff[i] = theta[i] - mean_[i];
    // quad = diff^T Sigma^{-1} diff via the factor, log|Sigma| from its diagonal.
    const std::vector<double> half = factor_.forward_solve(diff);
    double quad = 0.0;
    for (double v : half) quad += v * v;
    double log_det = 0.0;
    for (std::size_t i = 0; i < q; ++i) log_det += std::log(factor_.at(i, i));
    log_det *= 2.0;
    constexpr double kLog2Pi = 1.8378770664093453;
    return -0.5 * (static_cast<double>(q) * kLog2Pi + log_det + quad);
  }

  // Gradient of log pi(theta); zero vector for the uninformative prior.
  std::vector<double> log_density_gradient(std::span<const double> theta) const {
    std::vector<double> grad(theta.size(), 0.0);
    if (kind_ == Kind::Uninformative) return grad;
    std::vector<double> diff(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) diff[i] = theta[i] - mean_[i];
    const std::vector<double> solved = solve_with_factor(factor_, diff);
    for (std::size_t i = 0; i < theta.size(); ++i) grad[i] = -solved[i];
    return grad;
  }

  // Sigma^{-1}, used as curvature contribution by the MAP-mode fit.
  SpdMatrix precision() const {
    if (kind_ == Kind::Uninformative)
      throw std::logic_error("Prior::precision: uninformative prior has none");
    const std::size_t q = mean_.size();
    SpdMatrix prec(q);
    std::vector<double> e(q, 0.0);
    for (std::size_t j = 0; j < q; ++j) {
      e[j] = 1.0;
      const std::vector<double> col = solve_with_factor(factor_, e);
      for (std::size_t i = 0; i < q; ++i) prec.at(i, j) = col[i];
      e[j] = 0.0;
    }
    // Symmetrize exactly; the solves can differ in the last ulp.
    for (std::size_t i = 0; i < q; ++i)
      for (std::size_t j = i + 1; j < q; ++j) {
        const double v = 0.5 * (prec.at(i, j) + prec.at(j, i));
        prec.set_symmetric(i, j, v);
      }
    return prec;
  }

 private:
  Kind kind_ = Kind::Uninformative;
  std::vector<double> mean_;
  SpdMatrix covariance_;
  LowerTriangular factor_;
};

}  // namespace bpls
