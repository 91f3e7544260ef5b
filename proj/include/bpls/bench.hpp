#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bpls/criteria.hpp"
#include "bpls/data.hpp"
#include "bpls/errors.hpp"
#include "bpls/selftrain.hpp"

namespace bpls {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Config types

struct CsvSource {
  std::string path;
  std::string target = "target";
  std::string positive = "1";
};

struct DataSource {
  std::optional<SimSpec> sim;
  std::optional<CsvSource> csv;
};

// One benchmark method: either a self-training criterion or the supervised
// baseline that never touches the pool.
struct MethodSpec {
  std::string name;
  bool supervised = false;
  SelfTrainConfig config;
};

struct ExperimentConfig {
  DataSource source;
  SplitSpec split;
  std::vector<MethodSpec> methods;
  int repetitions = 1;
  std::uint64_t master_seed = 0;
  std::optional<int> max_iterations;  // shared across methods, keeps curves aligned
  int threads = 1;
  std::string output_path;
  std::string audit_path;  // empty = no audit file
};

// ---------------------------------------------------------------------------
// Report types

struct CurvePoint {
  int iter = 0;
  double mean = 0.0;
  double se = 0.0;
};

struct MethodReport {
  std::string tag;
  std::vector<CurvePoint> curve;
  double oracle = 0.0;  // mean over reps of the per-rep best accuracy
  double final = 0.0;   // mean over reps of the last-iteration accuracy
  int failures = 0;
  double runtime_s = 0.0;
};

struct ExperimentReport {
  json config = json::object();
  std::vector<MethodReport> methods;
  double baseline = 0.0;  // mean supervised accuracy across reps
  double runtime_s = 0.0;
};

// ---------------------------------------------------------------------------
// JSON (de)serialization

inline std::string basis_to_string(const BasisSpec& spec) {
  switch (spec.kind) {
    case BasisKind::Identity: return "identity";
    case BasisKind::Polynomial: return "poly:" + std::to_string(spec.degree);
    case BasisKind::TruncatedPowerSpline:
      return "spline:" + std::to_string(spec.degree) + ":" + std::to_string(spec.knot_count);
  }
  return "identity";
}

inline BasisSpec parse_basis(const std::string& text) {
  if (text == "identity" || text.empty()) return BasisSpec::identity();
  std::stringstream ss(text);
  std::string kind;
  std::getline(ss, kind, ':');
  const auto next_int = [&](const char* what) {
    std::string tok;
    if (!std::getline(ss, tok, ':'))
      throw ConfigError(std::string("parse_basis: missing ") + what + " in '" + text + "'");
    try {
      return std::stoi(tok);
    } catch (const std::exception&) {
      throw ConfigError(std::string("parse_basis: bad ") + what + " in '" + text + "'");
    }
  };
  if (kind == "poly") return BasisSpec::polynomial(next_int("degree"));
  if (kind == "spline") {
    const int degree = next_int("degree");
    return BasisSpec::spline(degree, next_int("knot count"));
  }
  throw ConfigError("parse_basis: unknown basis '" + text + "'");
}

inline json prior_to_json(const Prior& prior) {
  if (!prior.is_gaussian()) return json{{"type", "uninformative"}};
  json cov = json::array();
  for (std::size_t i = 0; i < prior.dim(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < prior.dim(); ++j) row.push_back(prior.covariance().at(i, j));
    cov.push_back(row);
  }
  return json{{"type", "gaussian"}, {"mean", prior.mean()}, {"cov", cov}};
}

inline Prior prior_from_json(const json& j) {
  if (j.is_null()) return Prior::uninformative();
  const std::string type = j.value("type", "uninformative");
  if (type == "uninformative") return Prior::uninformative();
  if (type != "gaussian") throw ConfigError("prior: unknown type '" + type + "'");
  std::vector<double> mean = j.at("mean").get<std::vector<double>>();
  if (j.contains("cov_scale"))
    return Prior::isotropic_gaussian(std::move(mean), j.at("cov_scale").get<double>());
  const auto rows = j.at("cov").get<std::vector<std::vector<double>>>();
  return Prior::gaussian(std::move(mean), SpdMatrix::from_rows(rows));
}

inline PriorSet prior_set_from_json(const json& j) {
  PriorSet set;
  if (j.is_null()) return set;
  json members = j;
  if (j.is_object() && j.contains("path")) {
    std::ifstream in(j.at("path").get<std::string>());
    if (!in) throw IoError("prior_set: cannot open " + j.at("path").get<std::string>());
    in >> members;
  }
  if (!members.is_array()) throw ConfigError("prior_set: expected an array of priors");
  for (const json& m : members) set.members.push_back(prior_from_json(m));
  return set;
}

inline MethodSpec method_from_json(const json& j) {
  MethodSpec method;
  const std::string tag = j.at("criterion").get<std::string>();
  method.name = j.value("name", tag);
  if (tag == "supervised") {
    method.supervised = true;
    return method;
  }
  method.config.criterion = parse_criterion(tag);
  method.config.prior = prior_from_json(j.value("prior", json()));
  method.config.prior_set = prior_set_from_json(j.value("prior_set", json()));
  method.config.alpha = j.value("alpha", 0.5);
  method.config.lambda = j.value("lambda", 0.5);
  method.config.basis = parse_basis(j.value("basis", "identity"));
  if (j.contains("basis_ladder"))
    for (const json& b : j.at("basis_ladder"))
      method.config.basis_ladder.push_back(parse_basis(b.get<std::string>()));
  return method;
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg;
  const json& data = j.at("data");
  if (data.contains("sim")) {
    const json& s = data.at("sim");
    SimSpec sim;
    sim.n = s.at("n").get<int>();
    sim.q = s.at("q").get<int>();
    sim.mu = s.value("mu", 0.0);
    sim.sigma = s.value("sigma", 1.0);
    if (s.contains("coefficients"))
      sim.coefficients = s.at("coefficients").get<std::vector<double>>();
    cfg.source.sim = sim;
  } else if (data.contains("csv")) {
    const json& c = data.at("csv");
    CsvSource csv;
    csv.path = c.at("path").get<std::string>();
    csv.target = c.value("target", std::string("target"));
    csv.positive = c.value("positive", std::string("1"));
    cfg.source.csv = csv;
  } else {
    throw ConfigError("experiment config: data must contain 'sim' or 'csv'");
  }
  if (j.contains("split")) {
    cfg.split.test_share = j.at("split").value("test_share", 0.5);
    cfg.split.unlabeled_share = j.at("split").value("unlabeled_share", 0.8);
  }
  for (const json& m : j.at("methods")) cfg.methods.push_back(method_from_json(m));
  cfg.repetitions = j.value("repetitions", 1);
  cfg.master_seed = j.value("master_seed", std::uint64_t{0});
  if (j.contains("max_iterations") && !j.at("max_iterations").is_null())
    cfg.max_iterations = j.at("max_iterations").get<int>();
  cfg.threads = j.value("threads", 1);
  cfg.output_path = j.value("output", std::string());
  cfg.audit_path = j.value("audit", std::string());
  return cfg;
}

inline json experiment_config_to_json(const ExperimentConfig& cfg) {
  json j;
  if (cfg.source.sim) {
    const SimSpec& s = *cfg.source.sim;
    j["data"]["sim"] = {{"n", s.n}, {"q", s.q}, {"mu", s.mu}, {"sigma", s.sigma}};
    if (!s.coefficients.empty()) j["data"]["sim"]["coefficients"] = s.coefficients;
  }
  if (cfg.source.csv) {
    const CsvSource& c = *cfg.source.csv;
    j["data"]["csv"] = {{"path", c.path}, {"target", c.target}, {"positive", c.positive}};
  }
  j["split"] = {{"test_share", cfg.split.test_share},
                {"unlabeled_share", cfg.split.unlabeled_share}};
  j["methods"] = json::array();
  for (const MethodSpec& m : cfg.methods) {
    json mj;
    mj["name"] = m.name;
    mj["criterion"] = m.supervised ? "supervised" : std::string(criterion_tag(m.config.criterion));
    if (!m.supervised) {
      if (m.config.prior.is_gaussian()) mj["prior"] = prior_to_json(m.config.prior);
      if (!m.config.prior_set.members.empty()) {
        mj["prior_set"] = json::array();
        for (const Prior& p : m.config.prior_set.members)
          mj["prior_set"].push_back(prior_to_json(p));
      }
      mj["alpha"] = m.config.alpha;
      mj["lambda"] = m.config.lambda;
      mj["basis"] = basis_to_string(m.config.basis);
      if (!m.config.basis_ladder.empty()) {
        mj["basis_ladder"] = json::array();
        for (const BasisSpec& b : m.config.basis_ladder)
          mj["basis_ladder"].push_back(basis_to_string(b));
      }
    }
    j["methods"].push_back(mj);
  }
  j["repetitions"] = cfg.repetitions;
  j["master_seed"] = cfg.master_seed;
  if (cfg.max_iterations) j["max_iterations"] = *cfg.max_iterations;
  j["threads"] = cfg.threads;
  j["output"] = cfg.output_path;
  j["audit"] = cfg.audit_path;
  return j;
}

inline json report_to_json(const ExperimentReport& report) {
  json j;
  j["config"] = report.config;
  j["methods"] = json::array();
  for (const MethodReport& m : report.methods) {
    json mj;
    mj["tag"] = m.tag;
    mj["curve"] = json::array();
    for (const CurvePoint& p : m.curve)
      mj["curve"].push_back({{"iter", p.iter}, {"mean", p.mean}, {"se", p.se}});
    mj["oracle"] = m.oracle;
    mj["final"] = m.final;
    mj["failures"] = m.failures;
    mj["runtime_s"] = m.runtime_s;
    j["methods"].push_back(mj);
  }
  j["baseline"] = report.baseline;
  j["runtime_s"] = report.runtime_s;
  return j;
}

inline ExperimentReport report_from_json(const json& j) {
  ExperimentReport report;
  report.config = j.value("config", json::object());
  for (const json& mj : j.at("methods")) {
    MethodReport m;
    m.tag = mj.at("tag").get<std::string>();
    for (const json& pj : mj.at("curve"))
      m.curve.push_back({pj.at("iter").get<int>(), pj.at("mean").get<double>(),
                         pj.at("se").get<double>()});
    m.oracle = mj.at("oracle").get<double>();
    m.final = mj.at("final").get<double>();
    m.failures = mj.at("failures").get<int>();
    m.runtime_s = mj.value("runtime_s", 0.0);
    report.methods.push_back(std::move(m));
  }
  report.baseline = j.at("baseline").get<double>();
  report.runtime_s = j.at("runtime_s").get<double>();
  return report;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace detail {

// Accuracy curve of one (repetition, method) run: index 0 is the supervised
// baseline, 1..T the accuracy after each selection.
struct RepCurve {
  int rep = 0;
  std::string method;
  std::vector<double> accuracies;
  bool failed = false;
  std::string error;
  double runtime_s = 0.0;
};

inline MethodReport aggregate_method(const std::string& tag,
                                     const std::vector<const RepCurve*>& runs) {
  MethodReport report;
  report.tag = tag;
  std::size_t max_len = 0;
  double runtime = 0.0;
  std::vector<const RepCurve*> ok;
  for (const RepCurve* run : runs) {
    runtime += run->runtime_s;
    if (run->failed) {
      ++report.failures;
      continue;
    }
    ok.push_back(run);
    max_len = std::max(max_len, run->accuracies.size());
  }
  report.runtime_s = runtime;
  if (ok.empty()) return report;

  for (std::size_t t = 0; t < max_len; ++t) {
    double sum = 0.0, sum_sq = 0.0;
    int count = 0;
    for (const RepCurve* run : ok) {
      if (t >= run->accuracies.size()) continue;
      sum += run->accuracies[t];
      sum_sq += run->accuracies[t] * run->accuracies[t];
      ++count;
    }
    CurvePoint point;
    point.iter = static_cast<int>(t);
    point.mean = sum / count;
    if (count > 1) {
      const double var = std::max(0.0, (sum_sq - sum * sum / count) / (count - 1));
      point.se = std::sqrt(var / count);
    }
    report.curve.push_back(point);
  }

  double oracle_sum = 0.0, final_sum = 0.0;
  for (const RepCurve* run : ok) {
    double best = run->accuracies.front();
    for (double a : run->accuracies) best = std::max(best, a);
    oracle_sum += best;
    final_sum += run->accuracies.back();
  }
  report.oracle = oracle_sum / static_cast<double>(ok.size());
  report.final = final_sum / static_cast<double>(ok.size());
  return report;
}

inline ExperimentReport aggregate_rep_curves(const std::vector<RepCurve>& curves,
                                             const std::vector<std::string>& method_order,
                                             const json& config_snapshot) {
  ExperimentReport report;
  report.config = config_snapshot;
  for (const std::string& tag : method_order) {
    std::vector<const RepCurve*> runs;
    for (const RepCurve& c : curves)
      if (c.method == tag) runs.push_back(&c);
    report.methods.push_back(aggregate_method(tag, runs));
  }
  // Baseline = mean initial accuracy over successful runs; identical across
  // methods within a rep by the paired design.
  double base_sum = 0.0;
  int base_count = 0;
  std::map<int, bool> seen;
  for (const RepCurve& c : curves) {
    if (c.failed || c.accuracies.empty() || seen[c.rep]) continue;
    seen[c.rep] = true;
    base_sum += c.accuracies.front();
    ++base_count;
  }
  if (base_count > 0) report.baseline = base_sum / base_count;
  return report;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiment driver

// Runs every method on identical per-repetition splits (paired design),
// aggregates accuracy curves across repetitions and optionally persists one
// audit record per (rep, method). Aborts if more than 20% of repetitions
// fail for any method.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.repetitions < 1) throw ConfigError("run_experiment: repetitions must be >= 1");
  if (cfg.methods.empty()) throw ConfigError("run_experiment: no methods configured");
  {
    std::map<std::string, int> names;
    for (const MethodSpec& m : cfg.methods)
      if (++names[m.name] > 1) throw ConfigError("run_experiment: duplicate method name " + m.name);
  }
  const auto t_start = std::chrono::steady_clock::now();

  std::optional<Dataset> csv_data;
  if (cfg.source.csv)
    csv_data = load_csv(cfg.source.csv->path, cfg.source.csv->target, cfg.source.csv->positive)
                   .dataset;
  else if (!cfg.source.sim)
    throw ConfigError("run_experiment: no data source configured");

  std::ofstream audit;
  if (!cfg.audit_path.empty()) {
    audit.open(cfg.audit_path);
    if (!audit) throw IoError("run_experiment: cannot open audit file " + cfg.audit_path);
    json header;
    header["type"] = "config";
    header["config"] = experiment_config_to_json(cfg);
    audit << header.dump() << "\n";
  }

  std::vector<detail::RepCurve> curves;
  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    const std::uint64_t rep_seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(rep));
    Dataset data;
    if (cfg.source.sim) {
      SimSpec sim = *cfg.source.sim;
      sim.seed = derive_seed(rep_seed, 1);
      data = simulate(sim);
    } else {
      data = *csv_data;
    }
    SplitSpec split_spec = cfg.split;
    split_spec.seed = derive_seed(rep_seed, 2);
    const SplitResult parts = split(data, split_spec);
    const int horizon = cfg.max_iterations
                            ? std::min<int>(*cfg.max_iterations, static_cast<int>(parts.pool.size()))
                            : static_cast<int>(parts.pool.size());

    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
      const MethodSpec& method = cfg.methods[mi];
      detail::RepCurve curve;
      curve.rep = rep;
      curve.method = method.name;
      const auto m_start = std::chrono::steady_clock::now();
      try {
        if (method.supervised) {
          const BasisExpander expander =
              BasisExpander::fit(parts.labeled.features, method.config.basis);
          const DesignMatrix design = expander.transform(parts.labeled.features);
          const FittedModel model =
              fit(design, parts.labeled.labels, ObservationWeights::unit(design.n_rows()));
          const double acc =
              evaluate_accuracy(model, expander.transform(parts.test.features),
                                parts.test.labels);
          curve.accuracies.assign(static_cast<std::size_t>(horizon) + 1, acc);
        } else {
          SelfTrainConfig run_cfg = method.config;
          run_cfg.seed = derive_seed(rep_seed, 100 + mi);
          run_cfg.threads = cfg.threads;
          run_cfg.max_iterations = cfg.max_iterations;
          const SelfTrainTrace trace =
              run_self_training(run_cfg, parts.labeled, parts.pool, parts.test);
          curve.accuracies.push_back(trace.initial_accuracy);
          for (const IterationRecord& r : trace.records)
            curve.accuracies.push_back(r.test_accuracy);
          if (audit.is_open()) {
            json rec;
            rec["type"] = "trace";
            rec["rep"] = rep;
            rec["method"] = method.name;
            rec["initial_accuracy"] = trace.initial_accuracy;
            json ids = json::array(), labels = json::array(), values = json::array(),
                 accs = json::array(), pools = json::array();
            for (const IterationRecord& r : trace.records) {
              ids.push_back(r.candidate_id);
              labels.push_back(r.pseudo_label);
              values.push_back(r.value);
              accs.push_back(r.test_accuracy);
              pools.push_back(r.pool_size_remaining);
            }
            rec["ids"] = ids;
            rec["pseudo_labels"] = labels;
            rec["values"] = values;
            rec["accuracies"] = accs;
            rec["pool_sizes"] = pools;
            audit << rec.dump() << "\n";
          }
        }
      } catch (const std::exception& e) {
        curve.failed = true;
        curve.error = e.what();
        if (audit.is_open()) {
          json rec;
          rec["type"] = "failure";
          rec["rep"] = rep;
          rec["method"] = method.name;
          rec["error"] = e.what();
          audit << rec.dump() << "\n";
        }
      }
      curve.runtime_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - m_start).count();
      if (method.supervised && audit.is_open() && !curve.failed) {
        json rec;
        rec["type"] = "trace";
        rec["rep"] = rep;
        rec["method"] = method.name;
        rec["initial_accuracy"] = curve.accuracies.front();
        rec["accuracies"] = std::vector<double>(curve.accuracies.begin() + 1,
                                                curve.accuracies.end());
        audit << rec.dump() << "\n";
      }
      curves.push_back(std::move(curve));
    }
  }

  std::vector<std::string> order;
  for (const MethodSpec& m : cfg.methods) order.push_back(m.name);
  ExperimentReport report =
      detail::aggregate_rep_curves(curves, order, experiment_config_to_json(cfg));
  report.runtime_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  for (const MethodReport& m : report.methods)
    if (m.failures > 0.2 * cfg.repetitions)
      throw std::runtime_error("run_experiment: method " + m.tag + " failed " +
                               std::to_string(m.failures) + " of " +
                               std::to_string(cfg.repetitions) + " repetitions");
  return report;
}

enum class ReportFormat { Json, Csv };

inline void write_report(const ExperimentReport& report, const std::string& path,
                         ReportFormat format) {
  std::ofstream out(path);
  if (!out) throw IoError("write_report: cannot open " + path);
  if (format == ReportFormat::Json) {
    out << report_to_json(report).dump(2) << "\n";
  } else {
    out << "method,iteration,mean_acc,se_acc\n";
    out.precision(17);
    for (const MethodReport& m : report.methods)
      for (const CurvePoint& p : m.curve)
        out << m.tag << "," << p.iter << "," << p.mean << "," << p.se << "\n";
  }
  if (!out) throw IoError("write_report: write failed for " + path);
}

inline ExperimentReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_report: cannot open " + path);
  json j;
  in >> j;
  return report_from_json(j);
}

// Recomputes the aggregate report from a persisted audit file; used by the
// `report` subcommand and by the audit-consistency check.
inline ExperimentReport aggregate_audit(const std::string& audit_path) {
  std::ifstream in(audit_path);
  if (!in) throw IoError("aggregate_audit: cannot open " + audit_path);
  json config_snapshot = json::object();
  std::vector<detail::RepCurve> curves;
  std::vector<std::string> order;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    const std::string type = rec.value("type", "");
    if (type == "config") {
      config_snapshot = rec.at("config");
      if (config_snapshot.contains("methods"))
        for (const json& m : config_snapshot.at("methods"))
          order.push_back(m.value("name", m.value("criterion", "")));
      continue;
    }
    detail::RepCurve curve;
    curve.rep = rec.at("rep").get<int>();
    curve.method = rec.at("method").get<std::string>();
    if (type == "failure") {
      curve.failed = true;
      curve.error = rec.value("error", "");
    } else {
      curve.accuracies.push_back(rec.at("initial_accuracy").get<double>());
      for (const json& a : rec.at("accuracies")) curve.accuracies.push_back(a.get<double>());
    }
    curves.push_back(std::move(curve));
  }
  if (order.empty()) {
    for (const detail::RepCurve& c : curves) {
      bool known = false;
      for (const std::string& tag : order) known = known || tag == c.method;
      if (!known) order.push_back(c.method);
    }
  }
  return detail::aggregate_rep_curves(curves, order, config_snapshot);
}

// ---------------------------------------------------------------------------
// Fine-vs-simplified comparison

struct CompareConfig {
  SimSpec sim;                 // n is overridden by each grid entry
  std::vector<int> n_grid;
  SplitSpec split;
  std::vector<std::uint64_t> seeds;
  Criterion criterion_a = Criterion::PppFine;  // drives the shared trajectory
  Criterion criterion_b = Criterion::PppU;
  Prior prior;
  std::optional<int> max_iterations;
  int threads = 1;
};

struct CompareCell {
  std::uint64_t seed = 0;
  double agreement = 0.0;   // share of iterations where both argmaxes coincide
  double final_a = 0.0;
  double final_b = 0.0;
  double accuracy_gap = 0.0;
  int iterations = 0;
};

struct CompareRow {
  int n = 0;
  std::vector<CompareCell> cells;
  double mean_agreement = 0.0;
};

struct CompareReport {
  std::vector<CompareRow> rows;
};

namespace detail {

inline std::vector<CandidateScore> score_for_compare(Criterion criterion,
                                                     const LabeledData& labeled,
                                                     const std::vector<Candidate>& candidates,
                                                     const Prior& prior,
                                                     const FittedModel& base, int threads) {
  std::vector<CandidateScore> scores(candidates.size());
  ScoreOptions warm;
  warm.warm_start = base.theta;
  parallel_for(candidates.size(), threads, [&](std::size_t i) {
    switch (criterion) {
      case Criterion::PppU: scores[i] = score_ubpls(labeled, candidates[i], warm); break;
      case Criterion::PppI: scores[i] = score_ibpls(labeled, candidates[i], prior, warm); break;
      case Criterion::PppFine:
        scores[i] = score_fine_ppp(labeled, candidates[i], prior, warm);
        break;
      case Criterion::LikelihoodMaxmax:
        scores[i] = score_maxmax_likelihood(labeled, candidates[i], warm);
        break;
      case Criterion::ProbScore: scores[i] = score_probability(base, candidates[i]); break;
      case Criterion::PredVariance:
        scores[i] = score_predictive_variance(base, candidates[i]);
        break;
      default:
        throw ConfigError("compare_approximations: unsupported criterion " +
                          std::string(criterion_tag(criterion)));
    }
  });
  return scores;
}

}  // namespace detail

// Runs criterion A's self-training trajectory and, at every iteration,
// also evaluates criterion B's argmax on the identical state; the agreement
// rate is the share of iterations where the two selections coincide. The
// final-accuracy gap compares A's trajectory with an independent run of B.
inline CompareReport compare_approximations(const CompareConfig& cfg) {
  if (cfg.n_grid.empty() || cfg.seeds.empty())
    throw ConfigError("compare_approximations: need n_grid and seeds");
  CompareReport report;
  for (int n : cfg.n_grid) {
    CompareRow row;
    row.n = n;
    for (std::uint64_t seed : cfg.seeds) {
      SimSpec sim = cfg.sim;
      sim.n = n;
      sim.seed = derive_seed(seed, 1);
      const Dataset data = simulate(sim);
      SplitSpec split_spec = cfg.split;
      split_spec.seed = derive_seed(seed, 2);
      const SplitResult parts = split(data, split_spec);

      CompareCell cell;
      cell.seed = seed;

      // Trajectory driven by criterion A with B evaluated alongside.
      detail::LoopState state;
      state.labeled.design = expand_basis(parts.labeled.features, BasisSpec::identity());
      state.labeled.labels = parts.labeled.labels;
      state.raw_labeled = parts.labeled;
      state.pool_ids = parts.pool.ids;
      state.pool_raw = parts.pool.features;
      state.pool_design = expand_basis(parts.pool.features, BasisSpec::identity()).x;
      state.model = fit(state.labeled.design, state.labeled.labels,
                        ObservationWeights::unit(state.labeled.size()));
      const DesignMatrix test_design = expand_basis(parts.test.features, BasisSpec::identity());

      int matches = 0;
      int iterations = 0;
      while (!state.pool_ids.empty()) {
        if (cfg.max_iterations && iterations >= *cfg.max_iterations) break;
        ++iterations;
        std::vector<Candidate> candidates(state.pool_ids.size());
        for (std::size_t i = 0; i < state.pool_ids.size(); ++i) {
          const auto feature_row = state.pool_design.row(i);
          const double p = predict_proba(state.model.theta, feature_row);
          candidates[i] = {state.pool_ids[i], {feature_row.begin(), feature_row.end()},
                           p >= 0.5 ? 1 : 0};
        }
        const auto scores_a = detail::score_for_compare(cfg.criterion_a, state.labeled,
                                                        candidates, cfg.prior, state.model,
                                                        cfg.threads);
        const auto scores_b = detail::score_for_compare(cfg.criterion_b, state.labeled,
                                                        candidates, cfg.prior, state.model,
                                                        cfg.threads);
        const int pick_a = select_best(scores_a);
        const int pick_b = select_best(scores_b);
        if (pick_a == pick_b) ++matches;

        int idx = -1, label = 0;
        for (std::size_t i = 0; i < candidates.size(); ++i)
          if (candidates[i].id == pick_a) {
            idx = static_cast<int>(i);
            label = candidates[i].pseudo_label;
          }
        detail::append_labeled_row(state, static_cast<std::size_t>(idx), label);
        detail::remove_pool_row(state, static_cast<std::size_t>(idx));
        FitOptions refit;
        refit.initial_theta = state.model.theta;
        state.model = fit(state.labeled.design, state.labeled.labels,
                          ObservationWeights::unit(state.labeled.size()), refit);
      }
      cell.iterations = iterations;
      cell.agreement = iterations > 0 ? static_cast<double>(matches) / iterations : 1.0;
      cell.final_a = evaluate_accuracy(state.model, test_design, parts.test.labels);

      // Independent trajectory for criterion B.
      SelfTrainConfig b_cfg;
      b_cfg.criterion = cfg.criterion_b;
      b_cfg.prior = cfg.prior;
      b_cfg.max_iterations = cfg.max_iterations;
      b_cfg.threads = cfg.threads;
      b_cfg.seed = derive_seed(seed, 3);
      const SelfTrainTrace trace_b =
          run_self_training(b_cfg, parts.labeled, parts.pool, parts.test);
      cell.final_b =
          trace_b.records.empty() ? trace_b.initial_accuracy : trace_b.records.back().test_accuracy;
      cell.accuracy_gap = std::abs(cell.final_a - cell.final_b);
      row.cells.push_back(cell);
    }
    double sum = 0.0;
    for (const CompareCell& c : row.cells) sum += c.agreement;
    row.mean_agreement = sum / static_cast<double>(row.cells.size());
    report.rows.push_back(std::move(row));
  }
  return report;
}

inline json compare_report_to_json(const CompareReport& report) {
  json j;
  j["rows"] = json::array();
  for (const CompareRow& row : report.rows) {
    json rj;
    rj["n"] = row.n;
    rj["mean_agreement"] = row.mean_agreement;
    rj["cells"] = json::array();
    for (const CompareCell& c : row.cells)
      rj["cells"].push_back({{"seed", c.seed},
                             {"agreement", c.agreement},
                             {"final_a", c.final_a},
                             {"final_b", c.final_b},
                             {"accuracy_gap", c.accuracy_gap},
                             {"iterations", c.iterations}});
    j["rows"].push_back(rj);
  }
  return j;
}

}  // namespace bpls
