#pragma once

// The mhsim command line: cohort, simulate, evaluate, report.
// run_cli() is the whole program; tools/mhsim.cpp only forwards main().

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mhsim/cohort.hpp"
#include "mhsim/config.hpp"
#include "mhsim/engine.hpp"
#include "mhsim/error.hpp"
#include "mhsim/evaluation.hpp"
#include "mhsim/http_transport.hpp"
#include "mhsim/report.hpp"
#include "mhsim/runlog.hpp"
#include "mhsim/synthetic.hpp"

namespace mhsim {

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const DigestMismatchError*>(&e)) {
    return exit_code::kConfig;
  }
  if (dynamic_cast<const DataQualityError*>(&e) || dynamic_cast<const InsufficientDataError*>(&e)) {
    return exit_code::kDataQuality;
  }
  if (dynamic_cast<const AuthError*>(&e) || dynamic_cast<const TransportError*>(&e)) return exit_code::kProvider;
  return exit_code::kFailure;
}

struct CohortGenerateArgs {
  std::int64_t n = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string truth_out;
  int weeks = kDirectEvaluationWeeks;
};

struct CohortSubsampleArgs {
  std::string cohort;
  std::string truth;
  std::size_t target = 100;
  std::size_t k = kDefaultClusters;
  std::uint64_t seed = 0;
  std::string out;
  int trajectory_weeks = kDecisionWeeks;
};

struct SimulateArgs {
  std::string config;
  bool resume = false;
  std::string scenario;
  std::optional<int> weeks;
  std::optional<std::uint64_t> seed;
  std::string backends;
  std::string output_dir;
  std::optional<int> concurrency;
  std::string autoregression;
  std::string grouping;
  std::string templates_dir;
  bool write_truth = false;
};

struct EvaluateArgs {
  std::vector<std::string> logs;
  std::string truth;
  std::string metrics;
  std::string subjects;
  std::string out;
};

inline void cmd_cohort_generate(const CohortGenerateArgs& a, std::ostream& out) {
  const auto cohort = generate_cohort(a.n, a.seed);
  write_cohort(std::filesystem::path(a.out), cohort);
  out << "wrote " << cohort.size() << " mothers to " << a.out << "\n";
  if (!a.truth_out.empty()) {
    SyntheticWorldParams world;
    world.seed = a.seed;
    write_truth(a.truth_out, synthetic_truth_table(world, cohort, nullptr, a.weeks));
    out << "wrote ground truth for " << a.weeks << " weeks to " << a.truth_out << "\n";
  }
}

inline void cmd_cohort_subsample(const CohortSubsampleArgs& a, std::ostream& out) {
  const auto cohort = load_cohort(a.cohort);
  TruthTable truth;
  if (!a.truth.empty()) {
    truth = load_truth(a.truth);
  } else {
    SyntheticWorldParams world;
    world.seed = a.seed;
    truth = synthetic_truth_table(world, cohort, nullptr, a.trajectory_weeks);
  }
  std::vector<TrajectoryState> trajectories;
  for (const auto& m : cohort) {
    auto it = truth.find(m.id);
    if (it == truth.end()) throw ValidationError("subsample: no engagement sequence for mother " + m.id);
    TrajectoryState t;
    t.mother_id = m.id;
    t.ground_truth = it->second;
    trajectories.push_back(std::move(t));
  }
  const auto ids = select_subsample(cohort, trajectories, a.target, a.k, a.seed);
  write_id_list(a.out, ids);
  out << "selected " << ids.size() << " of " << cohort.size() << " mothers into " << a.out << "\n";
}

inline void cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  RunConfig cfg = load_run_config(a.config);
  if (!a.scenario.empty()) {
    if (!is_scenario_choice(a.scenario)) throw ConfigError("unknown scenario '" + a.scenario + "'");
    cfg.scenario = a.scenario;
  }
  if (a.weeks) cfg.weeks = *a.weeks;
  if (a.seed) cfg.seed = *a.seed;
  if (!a.backends.empty()) {
    cfg.backends = json::array();
    for (const auto& name : split(a.backends, ',')) {
      if (!name.empty()) cfg.backends.push_back(name);
    }
  }
  if (!a.output_dir.empty()) cfg.output_dir = a.output_dir;
  if (a.concurrency) cfg.concurrency = *a.concurrency;
  if (!a.autoregression.empty()) cfg.autoregression = parse_autoregression(a.autoregression);
  if (!a.grouping.empty()) cfg.grouping = parse_grouping(a.grouping);
  if (!a.templates_dir.empty()) cfg.templates_dir = std::filesystem::absolute(a.templates_dir);
  if (cfg.concurrency < 1) throw ConfigError("concurrency must be >= 1");

  const ScenarioSpec spec = config_spec(cfg);
  spec.validate();
  const std::filesystem::path dir = resolve(cfg, cfg.output_dir);
  std::filesystem::create_directories(dir);

  const TemplateSet templates =
      load_templates(cfg.templates_dir ? resolve(cfg, *cfg.templates_dir) : default_template_dir(), spec.templates_per_mode);

  EngineOptions opts;
  opts.concurrency = cfg.concurrency;
  opts.templates = &templates;
  opts.retain_queries = false;
  std::unique_ptr<ResponseCache> cache;
  if (any_hosted(spec.backends)) {
    cache = std::make_unique<ResponseCache>(cfg.cache_path ? resolve(cfg, *cfg.cache_path) : dir / "provider_cache.jsonl");
    opts.provider_cache = cache.get();
    opts.transport = std::make_shared<HttplibTransport>();
  }

  if (a.write_truth) {
    const auto truth = synthetic_truth_table(spec.world, spec.mothers, spec.schedule ? &*spec.schedule : nullptr, spec.weeks);
    write_truth(dir / "truth.csv", truth);
    out << "wrote synthetic ground truth to " << (dir / "truth.csv").string() << "\n";
  }

  std::vector<ScenarioSpec> runs = {spec};
  if (cfg.scenario == "paired") runs.push_back(counterfactual_of(spec));
  for (const auto& run : runs) {
    const auto path = dir / (std::string(scenario_name(run.scenario)) + ".jsonl");
    RunLog log;
    if (a.resume && std::filesystem::exists(path)) {
      log = resume(path, run, opts);
    } else {
      opts.log_path = path;
      log = run_scenario(run, opts);
    }
    out << scenario_name(run.scenario) << ": " << log.stats.new_queries << " new queries, " << log.stats.cache_hits
        << " cache hits, " << log.weeks_completed << " weeks -> " << path.string() << "\n";
  }
}

inline void cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  ReportInputs in;
  if (!a.metrics.empty()) in.selection = parse_report_selection(a.metrics);
  std::vector<RunLog> logs;
  logs.reserve(a.logs.size());
  for (const auto& p : a.logs) logs.push_back(load_run_log(p, {false}));
  for (const auto& l : logs) in.logs.push_back(&l);
  std::optional<TruthTable> truth;
  if (!a.truth.empty()) truth = load_truth(a.truth);
  in.truth = truth ? &*truth : nullptr;
  for (const auto& s : split(a.subjects, ',')) {
    if (!s.empty()) in.subjects.push_back(s);
  }
  const ReportBundle bundle = build_report(in);
  write_report(a.out, bundle);
  out << "wrote " << bundle.files.size() << " files to " << a.out << "\n";
}

inline std::string fixed_width(const json& v) {
  if (v.is_null()) return "-";
  if (v.is_number()) return format_g6(v.get<double>());
  return v.dump();
}

inline void cmd_report(const std::string& bundle_dir, std::ostream& out) {
  const auto path = std::filesystem::path(bundle_dir) / "summary.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("no summary.json in " + bundle_dir);
  const json s = json::parse(in, nullptr, false);
  if (s.is_discarded() || s.value("format_version", 0) != kReportFormatVersion) {
    throw ValidationError(path.string() + ": not a report summary");
  }
  out << "evaluated scenario: " << s.value("evaluated_scenario", "?") << "\n";
  for (const auto& [scenario, digest] : s.at("spec_digests").items()) {
    out << "  " << scenario << ": spec " << digest.get<std::string>() << ", " << s.at("weeks").at(scenario) << " weeks\n";
  }
  out << "subject                  accuracy   f1         log_lik    max_bias\n";
  for (const auto& subject : s.at("subjects")) {
    const auto name = subject.get<std::string>();
    const json& h = s.at("headline").value(name, json::object());
    double max_bias = -1.0;
    if (h.contains("bias")) {
      for (const auto& [f, b] : h.at("bias").items()) {
        if (b.is_number()) max_bias = std::max(max_bias, b.get<double>());
      }
    }
    std::string row = name;
    row.resize(std::max<std::size_t>(row.size() + 1, 25), ' ');
    for (const char* key : {"pooled_accuracy", "mean_f1", "mean_log_likelihood"}) {
      std::string cell = fixed_width(h.value(key, json(nullptr)));
      cell.resize(std::max<std::size_t>(cell.size() + 1, 11), ' ');
      row += cell;
    }
    row += max_bias < 0 ? "-" : format_g6(max_bias);
    out << row << "\n";
  }
  if (s.contains("engagement_difference")) {
    for (const auto& [subject, d] : s.at("engagement_difference").items()) {
      for (const auto& [key, v] : d.items()) out << subject << " " << key << " = " << fixed_width(v) << "\n";
    }
  }
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Engagement simulation with ensembles of prediction backends"};
  app.name("mhsim");
  app.require_subcommand(1);

  auto* cohort = app.add_subcommand("cohort", "Generate a synthetic cohort or select a representative subsample");
  cohort->require_subcommand(1);
  CohortGenerateArgs gen;
  auto* generate = cohort->add_subcommand("generate", "Write a synthetic cohort CSV");
  generate->add_option("--n", gen.n, "Number of mothers")->required();
  generate->add_option("--seed", gen.seed, "Generator seed")->required();
  generate->add_option("--out", gen.out, "Output cohort CSV")->required();
  generate->add_option("--truth-out", gen.truth_out, "Also write synthetic ground truth (default world) to this CSV");
  generate->add_option("--weeks", gen.weeks, "Weeks of ground truth")->capture_default_str();

  CohortSubsampleArgs sub;
  auto* subsample = cohort->add_subcommand("subsample", "Select a representative subsample by k-means");
  subsample->add_option("--cohort", sub.cohort, "Cohort CSV")->required()->check(CLI::ExistingFile);
  subsample->add_option("--truth", sub.truth, "Engagement sequences CSV (default: synthetic, default world)")
      ->check(CLI::ExistingFile);
  subsample->add_option("--target", sub.target, "Number of mothers to select")->capture_default_str();
  subsample->add_option("--k", sub.k, "Number of clusters")->capture_default_str();
  subsample->add_option("--seed", sub.seed, "Clustering seed")->required();
  subsample->add_option("--out", sub.out, "Output id list")->required();
  subsample->add_option("--trajectory-weeks", sub.trajectory_weeks, "Weeks of synthetic sequences when --truth is absent")
      ->capture_default_str();

  SimulateArgs sim;
  std::optional<int> sim_weeks, sim_concurrency;
  std::optional<std::uint64_t> sim_seed;
  auto* simulate = app.add_subcommand("simulate", "Run a scenario (or an intervention/counterfactual pair)");
  simulate->add_option("--config", sim.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  simulate->add_flag("--resume", sim.resume, "Continue existing run logs, reusing recorded queries");
  simulate->add_option("--scenario", sim.scenario, "intervention | counterfactual | control | paired");
  simulate->add_option("--weeks", sim_weeks, "Override the number of weeks");
  simulate->add_option("--seed", sim_seed, "Override the seed");
  simulate->add_option("--backends", sim.backends, "Comma-separated profile names; 'synthetic' = the three mock models");
  simulate->add_option("--output-dir", sim.output_dir, "Override the output directory");
  simulate->add_option("--concurrency", sim_concurrency, "Worker threads for query fan-out");
  simulate->add_option("--autoregression", sim.autoregression, "self_history | teacher_forced");
  simulate->add_option("--grouping", sim.grouping, "grouped | flat");
  simulate->add_option("--templates-dir", sim.templates_dir, "Prompt template directory");
  simulate->add_flag("--write-truth", sim.write_truth, "Write the synthetic world's ground truth to <output>/truth.csv");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Compute metrics and write the report bundle");
  evaluate->add_option("--log", ev.logs, "Run log (repeatable; the first is scored against --truth)")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--truth", ev.truth, "Ground-truth CSV (mother_id,week,engaged)")->check(CLI::ExistingFile);
  evaluate->add_option("--metrics", ev.metrics,
                       "Comma-separated subset of accuracy,f1,log_likelihood,bias,engagement,transitions (default all)");
  evaluate->add_option("--subjects", ev.subjects, "Comma-separated backend ids / ensemble methods (default all)");
  evaluate->add_option("--out", ev.out, "Output directory")->required();

  std::string bundle_dir;
  auto* report = app.add_subcommand("report", "Print the headline numbers of a report bundle");
  report->add_option("--bundle", bundle_dir, "Report bundle directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_code::kOk : exit_code::kConfig;
  }

  try {
    if (*generate) cmd_cohort_generate(gen, out);
    else if (*subsample) cmd_cohort_subsample(sub, out);
    else if (*simulate) {
      sim.weeks = sim_weeks;
      sim.seed = sim_seed;
      sim.concurrency = sim_concurrency;
      cmd_simulate(sim, out);
    } else if (*evaluate) cmd_evaluate(ev, out);
    else if (*report) cmd_report(bundle_dir, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return exit_code::kOk;
}

}  // namespace mhsim
