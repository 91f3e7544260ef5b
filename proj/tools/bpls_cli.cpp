// Command-line front end: simulation, single self-training runs, benchmark
// experiments, fine-vs-simplified comparisons and report re-aggregation.
// Progress goes to stderr; results go to files or stdout only.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "bpls/bpls.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

int default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void write_dataset_csv(const bpls::Dataset& ds, std::ostream& out) {
  out.precision(17);
  for (std::size_t j = 0; j < ds.column_names.size(); ++j) out << ds.column_names[j] << ",";
  out << "target\n";
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    for (std::size_t j = 0; j < ds.n_features(); ++j) out << ds.features.at(i, j) << ",";
    out << ds.labels.values[i] << "\n";
  }
}

bpls::json trace_to_json(const bpls::SelfTrainTrace& trace) {
  bpls::json j;
  j["criterion"] = std::string(bpls::criterion_tag(trace.config.criterion));
  j["seed"] = trace.config.seed;
  j["initial_accuracy"] = trace.initial_accuracy;
  j["records"] = bpls::json::array();
  for (const bpls::IterationRecord& r : trace.records)
    j["records"].push_back({{"iteration", r.iteration},
                            {"candidate_id", r.candidate_id},
                            {"pseudo_label", r.pseudo_label},
                            {"value", r.value},
                            {"test_accuracy", r.test_accuracy},
                            {"pool_size_remaining", r.pool_size_remaining}});
  j["warnings"] = trace.warnings;
  return j;
}

void emit(const bpls::json& payload, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << payload.dump(2) << "\n";
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw bpls::IoError("cannot open output file " + out_path);
  out << payload.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian pseudo-label selection for semi-supervised self-training"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  int threads = default_threads();
  app.add_option("--seed", seed, "Master seed controlling all randomness");
  app.add_option("--threads", threads, "Worker threads for candidate scoring");

  // --- simulate ------------------------------------------------------------
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a binomial simulation dataset as CSV");
  int sim_n = 400, sim_q = 4;
  double sim_mu = 0.0, sim_sigma = 1.0;
  std::string sim_out;
  sim_cmd->add_option("--n", sim_n, "Number of rows")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--q", sim_q, "Number of features")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--mu", sim_mu, "Feature mean");
  sim_cmd->add_option("--sigma", sim_sigma, "Feature standard deviation");
  sim_cmd->add_option("--out", sim_out, "Output CSV path (default stdout)");

  // --- run -----------------------------------------------------------------
  auto* run_cmd = app.add_subcommand("run", "Single self-training run, trace as JSON");
  std::string run_csv, run_target = "target", run_positive = "1";
  int run_n = 200, run_q = 4;
  double run_mu = 0.0, run_sigma = 1.0;
  std::string run_criterion = "ppp-u", run_basis = "identity", run_out;
  double run_test_share = 0.5, run_unlabeled_share = 0.8, run_alpha = 0.5, run_lambda = 0.5;
  std::optional<int> run_max_iters;
  std::string run_config;
  run_cmd->add_option("--csv", run_csv, "CSV dataset path (otherwise simulated data)");
  run_cmd->add_option("--target", run_target, "Target column name");
  run_cmd->add_option("--positive", run_positive, "Token mapped to class 1");
  run_cmd->add_option("--n", run_n, "Simulated rows");
  run_cmd->add_option("--q", run_q, "Simulated features");
  run_cmd->add_option("--mu", run_mu, "Simulated feature mean");
  run_cmd->add_option("--sigma", run_sigma, "Simulated feature stddev");
  run_cmd->add_option("--criterion", run_criterion, "Selection criterion tag");
  run_cmd->add_option("--basis", run_basis, "Basis: identity | poly:D | spline:D:K");
  run_cmd->add_option("--test-share", run_test_share, "Share of rows drawn as test set");
  run_cmd->add_option("--unlabeled-share", run_unlabeled_share, "Share of training rows unlabeled");
  run_cmd->add_option("--alpha", run_alpha, "Optimism weight for ppp-fantasy");
  run_cmd->add_option("--lambda", run_lambda, "Dimension penalty for bpls-bivariate");
  run_cmd->add_option("--max-iters", run_max_iters, "Iteration cap (default: pool exhaustion)");
  run_cmd->add_option("--config", run_config, "JSON file with prior / prior_set / basis_ladder");
  run_cmd->add_option("--out", run_out, "Output JSON path (default stdout)");

  // --- bench ---------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("bench", "Run a benchmark experiment from a JSON config");
  std::string bench_config, bench_out, bench_csv_out, bench_audit;
  std::optional<int> bench_reps;
  bench_cmd->add_option("--config", bench_config, "Experiment config JSON")->required();
  bench_cmd->add_option("--out", bench_out, "Report JSON path (overrides config)");
  bench_cmd->add_option("--csv", bench_csv_out, "Also write plot-ready CSV curves here");
  bench_cmd->add_option("--audit", bench_audit, "Audit trace JSONL path (overrides config)");
  bench_cmd->add_option("--reps", bench_reps, "Repetition count R (overrides config)");

  // --- compare-approx --------------------------------------------------------
  auto* cmp_cmd =
      app.add_subcommand("compare-approx", "Argmax agreement of fine vs simplified criterion");
  std::string cmp_config, cmp_out;
  cmp_cmd->add_option("--config", cmp_config, "Comparison config JSON")->required();
  cmp_cmd->add_option("--out", cmp_out, "Output JSON path (default stdout)");

  // --- report ----------------------------------------------------------------
  auto* report_cmd = app.add_subcommand("report", "Re-aggregate a report from an audit file");
  std::string report_audit, report_out, report_csv;
  report_cmd->add_option("--audit", report_audit, "Audit JSONL produced by bench")->required();
  report_cmd->add_option("--out", report_out, "Report JSON path (default stdout)");
  report_cmd->add_option("--csv", report_csv, "Also write plot-ready CSV curves here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*sim_cmd) {
      bpls::SimSpec spec;
      spec.n = sim_n;
      spec.q = sim_q;
      spec.mu = sim_mu;
      spec.sigma = sim_sigma;
      spec.seed = seed;
      const bpls::Dataset ds = bpls::simulate(spec);
      if (sim_out.empty()) {
        write_dataset_csv(ds, std::cout);
      } else {
        std::ofstream out(sim_out);
        if (!out) throw bpls::IoError("cannot open " + sim_out);
        write_dataset_csv(ds, out);
      }
      std::cerr << "simulated " << ds.n_rows() << " rows, " << ds.n_features()
                << " features\n";
    } else if (*run_cmd) {
      bpls::Dataset data;
      if (!run_csv.empty()) {
        const bpls::LoadReport loaded = bpls::load_csv(run_csv, run_target, run_positive);
        if (loaded.dropped_rows > 0)
          std::cerr << "dropped " << loaded.dropped_rows << " rows with missing cells\n";
        data = loaded.dataset;
      } else {
        bpls::SimSpec spec;
        spec.n = run_n;
        spec.q = run_q;
        spec.mu = run_mu;
        spec.sigma = run_sigma;
        spec.seed = bpls::derive_seed(seed, 1);
        data = bpls::simulate(spec);
      }
      bpls::SplitSpec split_spec;
      split_spec.test_share = run_test_share;
      split_spec.unlabeled_share = run_unlabeled_share;
      split_spec.seed = bpls::derive_seed(seed, 2);
      const bpls::SplitResult parts = bpls::split(data, split_spec);
      for (const std::string& w : parts.warnings) std::cerr << "warning: " << w << "\n";

      bpls::SelfTrainConfig cfg;
      cfg.criterion = bpls::parse_criterion(run_criterion);
      cfg.basis = bpls::parse_basis(run_basis);
      cfg.alpha = run_alpha;
      cfg.lambda = run_lambda;
      cfg.max_iterations = run_max_iters;
      cfg.seed = bpls::derive_seed(seed, 3);
      cfg.threads = threads;
      if (!run_config.empty()) {
        std::ifstream in(run_config);
        if (!in) throw bpls::IoError("cannot open " + run_config);
        bpls::json extra;
        in >> extra;
        cfg.prior = bpls::prior_from_json(extra.value("prior", bpls::json()));
        cfg.prior_set = bpls::prior_set_from_json(extra.value("prior_set", bpls::json()));
        if (extra.contains("basis_ladder"))
          for (const bpls::json& b : extra.at("basis_ladder"))
            cfg.basis_ladder.push_back(bpls::parse_basis(b.get<std::string>()));
      }
      const bpls::SelfTrainTrace trace =
          bpls::run_self_training(cfg, parts.labeled, parts.pool, parts.test);
      emit(trace_to_json(trace), run_out);
      std::cerr << "ran " << trace.records.size() << " iterations\n";
    } else if (*bench_cmd) {
      std::ifstream in(bench_config);
      if (!in) throw bpls::IoError("cannot open " + bench_config);
      bpls::json cj;
      in >> cj;
      bpls::ExperimentConfig cfg = bpls::experiment_config_from_json(cj);
      if (!bench_out.empty()) cfg.output_path = bench_out;
      if (!bench_audit.empty()) cfg.audit_path = bench_audit;
      if (bench_reps) cfg.repetitions = *bench_reps;
      if (app.count("--seed") > 0) cfg.master_seed = seed;
      if (app.count("--threads") > 0) cfg.threads = threads;
      const bpls::ExperimentReport report = bpls::run_experiment(cfg);
      if (cfg.output_path.empty()) {
        std::cout << bpls::report_to_json(report).dump(2) << "\n";
      } else {
        bpls::write_report(report, cfg.output_path, bpls::ReportFormat::Json);
        std::cerr << "report written to " << cfg.output_path << "\n";
      }
      if (!bench_csv_out.empty())
        bpls::write_report(report, bench_csv_out, bpls::ReportFormat::Csv);
    } else if (*cmp_cmd) {
      std::ifstream in(cmp_config);
      if (!in) throw bpls::IoError("cannot open " + cmp_config);
      bpls::json cj;
      in >> cj;
      bpls::CompareConfig cfg;
      cfg.sim.q = cj.at("q").get<int>();
      cfg.sim.mu = cj.value("mu", 0.0);
      cfg.sim.sigma = cj.value("sigma", 1.0);
      cfg.n_grid = cj.at("n_grid").get<std::vector<int>>();
      cfg.split.test_share = cj.value("test_share", 0.5);
      cfg.split.unlabeled_share = cj.value("unlabeled_share", 0.8);
      if (cj.contains("seeds")) {
        cfg.seeds = cj.at("seeds").get<std::vector<std::uint64_t>>();
      } else {
        const int count = cj.value("n_seeds", 5);
        for (int s = 0; s < count; ++s) cfg.seeds.push_back(bpls::derive_seed(seed, s));
      }
      if (cj.contains("max_iterations") && !cj.at("max_iterations").is_null())
        cfg.max_iterations = cj.at("max_iterations").get<int>();
      cfg.prior = bpls::prior_from_json(cj.value("prior", bpls::json()));
      cfg.threads = threads;
      const bpls::CompareReport report = bpls::compare_approximations(cfg);
      emit(bpls::compare_report_to_json(report), cmp_out);
    } else if (*report_cmd) {
      const bpls::ExperimentReport report = bpls::aggregate_audit(report_audit);
      if (report_out.empty()) {
        std::cout << bpls::report_to_json(report).dump(2) << "\n";
      } else {
        bpls::write_report(report, report_out, bpls::ReportFormat::Json);
      }
      if (!report_csv.empty()) bpls::write_report(report, report_csv, bpls::ReportFormat::Csv);
    }
  } catch (const bpls::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
