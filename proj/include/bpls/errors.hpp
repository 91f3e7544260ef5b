#pragma once

#include <stdexcept>
#include <string>

namespace bpls {

// Cholesky pivot fell below the positive-definiteness tolerance. Signals
// singular Fisher information (e.g. separable data); callers decide on a
// jitter policy.
struct NotPositiveDefinite : std::runtime_error {
  explicit NotPositiveDefinite(const std::string& what) : std::runtime_error(what) {}
};

// Newton system stayed indefinite even after ridge jitter (complete separation).
struct SingularInformation : std::runtime_error {
  explicit SingularInformation(const std::string& what) : std::runtime_error(what) {}
};

// Spline expansion requested for a constant feature.
struct DegenerateFeature : std::runtime_error {
  explicit DegenerateFeature(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyPool : std::runtime_error {
  explicit EmptyPool(const std::string& what) : std::runtime_error(what) {}
};

// Every candidate score came back as the -inf sentinel.
struct AllCandidatesInvalid : std::runtime_error {
  explicit AllCandidatesInvalid(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyTestSet : std::runtime_error {
  explicit EmptyTestSet(const std::string& what) : std::runtime_error(what) {}
};

// The very first model fit of a self-training run failed even with jitter.
struct UnfittableInitialModel : std::runtime_error {
  explicit UnfittableInitialModel(const std::string& what) : std::runtime_error(what) {}
};

// Labeled training part of a split has fewer than 2 rows or a single class.
struct LabeledTooSmall : std::runtime_error {
  explicit LabeledTooSmall(const std::string& what) : std::runtime_error(what) {}
};

struct MissingTarget : std::runtime_error {
  explicit MissingTarget(const std::string& what) : std::runtime_error(what) {}
};

struct NonNumericFeature : std::runtime_error {
  explicit NonNumericFeature(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyAfterDrop : std::runtime_error {
  explicit EmptyAfterDrop(const std::string& what) : std::runtime_error(what) {}
};

// Doubling the quadrature resolution moved the result by more than the bound.
struct GridTooCoarse : std::runtime_error {
  explicit GridTooCoarse(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bpls
