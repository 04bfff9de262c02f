#pragma once

// Report bundle: CSV tables plus summary.json. Everything is computed in
// memory first so a failing input never leaves partial files behind.
//
//   accuracy.csv, f1.csv, log_likelihood.csv   week,subject,metric,value,n_effective
//   bias.csv                                   subject,feature,category,accuracy,n,bias,note
//   engagement.csv                             scenario,week,subject,metric,value,n_effective
//   engagement_diff.csv                        comparison,week,subject,value
//   transitions.csv                            scenario,subject,week,p01,n0,p11,n1
//   summary.json
//
// Weeks are 1-based; for transitions `week` is the earlier week of the pair.
// Absent values are empty fields. Numbers use six significant digits.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mhsim/error.hpp"
#include "mhsim/evaluation.hpp"
#include "mhsim/runlog.hpp"
#include "mhsim/text.hpp"

namespace mhsim {

inline constexpr int kReportFormatVersion = 1;

struct ReportSelection {
  bool accuracy = true;
  bool f1 = true;
  bool log_likelihood = true;
  bool bias = true;
  bool engagement = true;
  bool transitions = true;

  bool any_direct() const { return accuracy || f1 || log_likelihood || bias; }
};

inline ReportSelection parse_report_selection(std::string_view list) {
  ReportSelection s{false, false, false, false, false, false};
  for (const auto& raw : split(list, ',')) {
    const auto name = raw;
    if (name.empty()) continue;
    if (name == "accuracy") s.accuracy = true;
    else if (name == "f1") s.f1 = true;
    else if (name == "log_likelihood") s.log_likelihood = true;
    else if (name == "bias") s.bias = true;
    else if (name == "engagement" || name == "engagement_proportion") s.engagement = true;
    else if (name == "transitions") s.transitions = true;
    else throw ConfigError("unknown metric '" + name + "'");
  }
  return s;
}

struct ReportInputs {
  std::vector<const RunLog*> logs;  // the first one is evaluated against the truth
  const TruthTable* truth = nullptr;
  std::vector<std::string> subjects;  // empty: every subject of the first log
  ReportSelection selection;
};

struct ReportBundle {
  std::map<std::string, std::string> files;  // file name -> content
};

inline std::string csv_number(double v) {
  if (v == 0.0) v = 0.0;  // no "-0"
  return format_g6(v);
}

inline std::string csv_optional(const std::optional<double>& v) { return v ? csv_number(*v) : std::string(); }

inline json json_number(const std::optional<double>& v) {
  if (!v) return nullptr;
  return std::stod(csv_number(*v));
}

namespace detail {

inline std::string series_rows(const std::vector<MetricSeries>& series) {
  std::ostringstream out;
  out << "week,subject,metric,value,n_effective\n";
  for (const auto& s : series) {
    for (std::size_t t = 0; t < s.values.size(); ++t) {
      out << t + 1 << ',' << s.subject << ',' << metric_name(s.metric) << ',' << csv_optional(s.values[t]) << ','
          << s.n_effective[t] << '\n';
    }
  }
  return out.str();
}

}  // namespace detail

inline ReportBundle build_report(const ReportInputs& in) {
  if (in.logs.empty()) throw ValidationError("report: no run logs");
  std::set<Scenario> seen;
  for (const RunLog* log : in.logs) {
    if (!log || log->mother_ids.empty() || log->weeks_completed < 1) {
      throw ValidationError("report: run log is empty");
    }
    if (!seen.insert(log->scenario).second) {
      throw ValidationError("report: more than one log for scenario " + std::string(scenario_name(log->scenario)));
    }
  }
  const RunLog& primary = *in.logs.front();
  const ReportSelection& sel = in.selection;
  if (sel.any_direct()) require_truth(primary, in.truth, "accuracy, f1, log_likelihood and bias");

  std::vector<std::string> subjects = in.subjects.empty() ? subjects_of(primary) : in.subjects;
  for (const auto& s : subjects) {
    for (const RunLog* log : in.logs) SubjectView check(*log, s);
  }

  ReportBundle bundle;
  json summary;
  summary["format_version"] = kReportFormatVersion;
  summary["subjects"] = subjects;
  json digests = json::object();
  json weeks = json::object();
  for (const RunLog* log : in.logs) {
    digests[std::string(scenario_name(log->scenario))] = log->spec_digest;
    weeks[std::string(scenario_name(log->scenario))] = log->weeks_completed;
  }
  summary["spec_digests"] = digests;
  summary["weeks"] = weeks;
  summary["evaluated_scenario"] = scenario_name(primary.scenario);
  json headline = json::object();
  for (const auto& s : subjects) headline[s] = json::object();

  auto direct = [&](bool enabled, Metric metric, const char* file, const char* key, bool weighted) {
    if (!enabled) return;
    std::vector<MetricSeries> series;
    for (const auto& s : subjects) {
      series.push_back(metric_series(primary, in.truth, s, metric));
      const auto& m = series.back();
      headline[s][key] = json_number(weighted ? pooled(m) : mean_over_weeks(m.values, 0, static_cast<int>(m.values.size())));
    }
    bundle.files[file] = detail::series_rows(series);
  };
  direct(sel.accuracy, Metric::kAccuracy, "accuracy.csv", "pooled_accuracy", true);
  direct(sel.f1, Metric::kF1, "f1.csv", "mean_f1", false);
  direct(sel.log_likelihood, Metric::kLogLikelihood, "log_likelihood.csv", "mean_log_likelihood", false);

  if (sel.bias) {
    std::ostringstream out;
    out << "subject,feature,category,accuracy,n,bias,note\n";
    for (const auto& s : subjects) {
      json per_feature = json::object();
      for (const auto& table : bias_table(primary, in.truth, s, primary.profiles)) {
        const std::string feature(bias_feature_name(table.feature));
        for (const auto& c : table.categories) {
          out << s << ',' << feature << ',' << c.category << ',' << csv_number(c.accuracy) << ',' << c.n << ','
              << csv_number(table.bias) << ",\n";
        }
        for (const auto& c : table.omitted) {
          out << s << ',' << feature << ',' << c << ",,0," << csv_number(table.bias) << ",no observations\n";
        }
        per_feature[feature] = json_number(table.bias);
      }
      headline[s]["bias"] = per_feature;
    }
    bundle.files["bias.csv"] = out.str();
  }

  if (sel.engagement) {
    std::map<Scenario, const RunLog*> by_scenario;
    for (const RunLog* log : in.logs) by_scenario[log->scenario] = log;
    std::ostringstream curves_csv;
    std::ostringstream diff_csv;
    curves_csv << "scenario,week,subject,metric,value,n_effective\n";
    diff_csv << "comparison,week,subject,value\n";
    json differences = json::object();
    std::map<Scenario, MetricSeries> truth_rows;
    for (const auto& s : subjects) {
      const EngagementCurves c = engagement_curves(by_scenario, s, in.truth);
      for (const auto& [scenario, series] : c.curves) {
        for (std::size_t t = 0; t < series.values.size(); ++t) {
          curves_csv << scenario_name(scenario) << ',' << t + 1 << ',' << s << ",engagement_proportion,"
                     << csv_optional(series.values[t]) << ',' << series.n_effective[t] << '\n';
        }
      }
      for (const auto& [scenario, series] : c.truth_curves) truth_rows[scenario] = series;
      json d = json::object();
      auto emit = [&](const char* name, const char* key, const auto& diff) {
        if (!diff) return;
        for (std::size_t t = 0; t < diff->size(); ++t) {
          diff_csv << name << ',' << t + 1 << ',' << s << ',' << csv_optional((*diff)[t]) << '\n';
        }
        d[key] = json_number(mean_over_weeks(*diff, 1, kDecisionWeeks));
      };
      emit("intervention-counterfactual", "intervention_minus_counterfactual_weeks_2_15", c.minus_counterfactual);
      emit("intervention-control", "intervention_minus_control_weeks_2_15", c.minus_control);
      if (!d.empty()) differences[s] = d;
    }
    for (const auto& [scenario, series] : truth_rows) {
      for (std::size_t t = 0; t < series.values.size(); ++t) {
        curves_csv << scenario_name(scenario) << ',' << t + 1 << ",ground_truth,engagement_proportion,"
                   << csv_optional(series.values[t]) << ',' << series.n_effective[t] << '\n';
      }
    }
    bundle.files["engagement.csv"] = curves_csv.str();
    bundle.files["engagement_diff.csv"] = diff_csv.str();
    summary["engagement_difference"] = differences;
  }

  if (sel.transitions) {
    std::ostringstream out;
    out << "scenario,subject,week,p01,n0,p11,n1\n";
    auto rows = [&](const std::vector<TransitionEstimate>& estimates) {
      for (const auto& e : estimates) {
        out << e.scenario << ',' << e.subject << ',' << e.week + 1 << ',' << csv_optional(e.p01) << ',' << e.n0 << ','
            << csv_optional(e.p11) << ',' << e.n1 << '\n';
      }
    };
    for (const RunLog* log : in.logs) {
      for (const auto& s : subjects) rows(transition_probs(*log, s));
      if (in.truth && log->scenario != Scenario::kCounterfactual && truth_covers(*in.truth, *log)) {
        TruthTable subset;
        for (const auto& id : log->mother_ids) subset[id] = in.truth->at(id);
        rows(transition_probs(subset, scenario_name(log->scenario), log->weeks_completed));
      }
    }
    bundle.files["transitions.csv"] = out.str();
  }

  summary["headline"] = headline;
  json files = json::array();
  for (const auto& [name, content] : bundle.files) files.push_back(name);
  summary["files"] = files;
  bundle.files["summary.json"] = summary.dump(2) + "\n";
  return bundle;
}

inline void write_report(const std::filesystem::path& dir, const ReportBundle& bundle) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
  for (const auto& [name, content] : bundle.files) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    if (!out) throw Error("write failed for " + path.string());
  }
}

}  // namespace mhsim
