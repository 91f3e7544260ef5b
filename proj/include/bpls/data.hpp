#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "bpls/errors.hpp"
#include "bpls/model.hpp"
#include "bpls/numerics.hpp"
#include "bpls/rng.hpp"

namespace bpls {

// A fully labeled dataset before splitting: raw features, no basis expansion.
struct Dataset {
  std::string name;
  Matrix features;
  BinaryLabels labels;
  std::vector<std::string> column_names;

  std::size_t n_rows() const { return features.rows(); }
  std::size_t n_features() const { return features.cols(); }
};

struct LabeledSet {
  Matrix features;
  BinaryLabels labels;
};

struct TestSet {
  Matrix features;
  BinaryLabels labels;
};

// The scoring interface sees features and stable ids only; the true labels
// of pool rows live in SplitResult::pool_true_labels for auditing and never
// reach a criterion.
struct UnlabeledPool {
  std::vector<int> ids;
  Matrix features;

  std::size_t size() const { return ids.size(); }
};

struct SplitSpec {
  double test_share = 0.5;
  double unlabeled_share = 0.8;  // of the training rows
  std::uint64_t seed = 0;
};

struct SplitResult {
  LabeledSet labeled;
  UnlabeledPool pool;
  TestSet test;
  BinaryLabels pool_true_labels;  // audit only
  std::vector<int> labeled_indices;
  std::vector<int> pool_indices;
  std::vector<int> test_indices;
  std::vector<std::string> warnings;
};

struct SimSpec {
  int n = 0;
  int q = 0;
  double mu = 0.0;
  double sigma = 1.0;
  // Empty = the default sign pattern (-1 on feature 0, +1 elsewhere).
  std::vector<double> coefficients;
  std::uint64_t seed = 0;
};

struct LoadReport {
  Dataset dataset;
  int dropped_rows = 0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // strip \r and optional surrounding quotes
    while (!field.empty() && (field.back() == '\r' || field.back() == '\n')) field.pop_back();
    if (field.size() >= 2 && field.front() == '"' && field.back() == '"')
      field = field.substr(1, field.size() - 2);
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline bool parse_double(const std::string& token, double& out) {
  if (token.empty()) return false;
  char* end = nullptr;
  out = std::strtod(token.c_str(), &end);
  return end == token.c_str() + token.size() && std::isfinite(out);
}

}  // namespace detail

// Reads a comma-separated file with a header row. Feature cells must parse
// as numbers; rows with a missing or unparseable cell are dropped and
// counted. The target column maps to 1 on exact token match and 0 otherwise.
inline LoadReport load_csv(const std::string& path, const std::string& target_column,
                           const std::string& positive_label_token = "1") {
  std::ifstream in(path);
  if (!in) throw IoError("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("load_csv: empty file " + path);
  const std::vector<std::string> header = detail::split_csv_line(line);

  std::size_t target_idx = header.size();
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == target_column) target_idx = j;
  if (target_idx == header.size())
    throw MissingTarget("load_csv: no column named '" + target_column + "' in " + path);

  std::vector<std::string> feature_names;
  std::vector<std::size_t> feature_cols;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (j != target_idx) {
      feature_names.push_back(header[j]);
      feature_cols.push_back(j);
    }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::vector<std::size_t> parse_successes(feature_cols.size(), 0);
  int dropped = 0;
  std::size_t data_rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++data_rows;
    const std::vector<std::string> fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      ++dropped;
      continue;
    }
    std::vector<double> row(feature_cols.size());
    bool ok = true;
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      double v = 0.0;
      if (detail::parse_double(fields[feature_cols[k]], v)) {
        row[k] = v;
        ++parse_successes[k];
      } else {
        ok = false;
      }
    }
    const std::string& target_token = fields[target_idx];
    if (target_token.empty()) ok = false;
    if (!ok) {
      ++dropped;
      continue;
    }
    rows.push_back(std::move(row));
    labels.push_back(target_token == positive_label_token ? 1 : 0);
  }

  if (data_rows > 0)
    for (std::size_t k = 0; k < feature_cols.size(); ++k)
      if (parse_successes[k] == 0)
        throw NonNumericFeature("load_csv: column '" + feature_names[k] +
                                "' has no numeric values");
  if (rows.empty()) throw EmptyAfterDrop("load_csv: no usable rows in " + path);

  LoadReport report;
  report.dropped_rows = dropped;
  report.dataset.name = path;
  report.dataset.column_names = std::move(feature_names);
  report.dataset.features = Matrix::from_rows(rows);
  report.dataset.labels.values = std::move(labels);
  return report;
}

// The splitting protocol: draw the test rows first, then the labeled rows
// from the remaining training rows, and strip labels from the rest.
inline SplitResult split(const Dataset& ds, const SplitSpec& spec) {
  if (!(spec.test_share > 0.0 && spec.test_share < 1.0))
    throw std::invalid_argument("split: test_share must be in (0,1)");
  if (!(spec.unlabeled_share > 0.0 && spec.unlabeled_share < 1.0))
    throw std::invalid_argument("split: unlabeled_share must be in (0,1)");
  const std::size_t n = ds.n_rows();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  rng.shuffle(order);

  const std::size_t n_test =
      static_cast<std::size_t>(std::lround(spec.test_share * static_cast<double>(n)));
  const std::size_t n_train = n - n_test;
  const std::size_t n_labeled = static_cast<std::size_t>(
      std::lround((1.0 - spec.unlabeled_share) * static_cast<double>(n_train)));

  SplitResult result;
  result.test_indices.assign(order.begin(), order.begin() + n_test);
  result.labeled_indices.assign(order.begin() + n_test, order.begin() + n_test + n_labeled);
  result.pool_indices.assign(order.begin() + n_test + n_labeled, order.end());
  std::sort(result.test_indices.begin(), result.test_indices.end());
  std::sort(result.labeled_indices.begin(), result.labeled_indices.end());
  std::sort(result.pool_indices.begin(), result.pool_indices.end());

  const auto gather = [&](const std::vector<int>& idx, Matrix& features,
                          std::vector<int>* labels) {
    features = Matrix(idx.size(), ds.n_features());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < ds.n_features(); ++j)
        features.at(i, j) = ds.features.at(idx[i], j);
      if (labels) labels->push_back(ds.labels.values[idx[i]]);
    }
  };

  gather(result.labeled_indices, result.labeled.features, &result.labeled.labels.values);
  gather(result.test_indices, result.test.features, &result.test.labels.values);
  gather(result.pool_indices, result.pool.features, &result.pool_true_labels.values);
  result.pool.ids.resize(result.pool_indices.size());
  std::iota(result.pool.ids.begin(), result.pool.ids.end(), 0);

  if (result.labeled_indices.size() < 2)
    throw LabeledTooSmall("split: fewer than 2 labeled training rows");
  const auto& lv = result.labeled.labels.values;
  if (std::all_of(lv.begin(), lv.end(), [&](int y) { return y == lv.front(); }))
    throw LabeledTooSmall("split: labeled training rows are single-class");
  if (result.labeled_indices.size() < ds.n_features() + 1)
    result.warnings.push_back("labeled training size " +
                              std::to_string(result.labeled_indices.size()) +
                              " is below q+1 = " + std::to_string(ds.n_features() + 1));
  return result;
}

// Binomial simulation: q i.i.d. N(mu, sigma^2) features, linear predictor
// coefficients (-1, +1, ..., +1) by default (no intercept), Bernoulli labels.
inline Dataset simulate(const SimSpec& spec) {
  if (spec.n < 1 || spec.q < 1) throw std::invalid_argument("simulate: n and q must be >= 1");
  if (!(spec.sigma > 0.0)) throw std::invalid_argument("simulate: sigma must be positive");
  std::vector<double> coeffs = spec.coefficients;
  if (coeffs.empty()) {
    coeffs.assign(spec.q, 1.0);
    coeffs[0] = -1.0;
  }
  if (coeffs.size() != static_cast<std::size_t>(spec.q))
    throw std::invalid_argument("simulate: coefficient count != q");

  Dataset ds;
  ds.name = "simulated(n=" + std::to_string(spec.n) + ",q=" + std::to_string(spec.q) + ")";
  ds.features = Matrix(spec.n, spec.q);
  ds.labels.values.resize(spec.n);
  ds.column_names.resize(spec.q);
  for (int j = 0; j < spec.q; ++j) ds.column_names[j] = "x" + std::to_string(j);

  Rng rng(spec.seed);
  for (int i = 0; i < spec.n; ++i) {
    double eta = 0.0;
    for (int j = 0; j < spec.q; ++j) {
      const double x = rng.normal(spec.mu, spec.sigma);
      ds.features.at(i, j) = x;
      eta += coeffs[j] * x;
    }
    ds.labels.values[i] = rng.bernoulli(logistic(eta)) ? 1 : 0;
  }
  return ds;
}

}  // namespace bpls
