#pragma once

// Run logs: in-memory form and the JSONL file layout.
//
// One JSON object per line, keys sorted, weeks 0-based:
//   {"type":"header", "format_version":1, "spec_digest", "scenario", "weeks",
//    "mother_ids":[...], "backend_ids":[...], "spec":{canonical spec}}
//   {"type":"query", ...QueryRecord}           week -> mother -> backend -> template -> repeat
//   {"type":"cell", "backend_id", "mother_id", "week", "missing", "mean_prediction",
//    "predictive", "aleatoric", "epistemic", "n_groups", "n_valid", "state"}
//   {"type":"ensemble", "mother_id", "week", "method", "missing",
//    "probability", "binarized", "weights":{backend_id: weight}}
//   {"type":"week_end", "week", "cells", "missing_cells"}
// A week is complete once its week_end line is on disk. Numeric fields of
// missing cells and ensembles are null.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "mhsim/backend.hpp"
#include "mhsim/ensemble.hpp"
#include "mhsim/error.hpp"
#include "mhsim/serialization.hpp"
#include "mhsim/uq.hpp"

namespace mhsim {

inline constexpr int kRunLogFormatVersion = 1;

struct CellRecord {
  std::string backend_id;
  std::string mother_id;
  int week = 0;
  bool missing = false;
  double mean_prediction = 0.0;
  UncertaintyEstimate uncertainty;
  int n_valid = 0;
  int state = 0;  // binary state fed back into this backend's history
};

struct EnsembleRecord {
  std::string mother_id;
  int week = 0;
  bool missing = false;
  EnsemblePrediction prediction;
};

struct RunStats {
  std::size_t new_queries = 0;
  std::size_t cache_hits = 0;
};

struct RunLog {
  std::string spec_digest;
  json spec;
  Scenario scenario = Scenario::kIntervention;
  int weeks = 0;
  std::vector<std::string> mother_ids;
  std::vector<std::string> backend_ids;
  std::vector<MotherProfile> profiles;

  std::vector<QueryRecord> queries;  // may be empty when not retained
  std::size_t query_count = 0;
  std::vector<CellRecord> cells;
  std::vector<EnsembleRecord> ensembles;
  int weeks_completed = 0;
  RunStats stats;

  const CellRecord* cell(const std::string& backend, const std::string& mother, int week) const {
    index();
    auto it = cell_index_.find({backend, mother, week});
    return it == cell_index_.end() ? nullptr : &cells[it->second];
  }

  const EnsembleRecord* ensemble(EnsembleMethod method, const std::string& mother, int week) const {
    index();
    auto it = ensemble_index_.find({static_cast<int>(method), mother, week});
    return it == ensemble_index_.end() ? nullptr : &ensembles[it->second];
  }

  void invalidate_index() const { indexed_cells_ = indexed_ensembles_ = static_cast<std::size_t>(-1); }

 private:
  void index() const {
    if (indexed_cells_ != cells.size()) {
      cell_index_.clear();
      for (std::size_t i = 0; i < cells.size(); ++i) {
        cell_index_[{cells[i].backend_id, cells[i].mother_id, cells[i].week}] = i;
      }
      indexed_cells_ = cells.size();
    }
    if (indexed_ensembles_ != ensembles.size()) {
      ensemble_index_.clear();
      for (std::size_t i = 0; i < ensembles.size(); ++i) {
        const auto& e = ensembles[i];
        ensemble_index_[{static_cast<int>(e.prediction.method), e.mother_id, e.week}] = i;
      }
      indexed_ensembles_ = ensembles.size();
    }
  }

  mutable std::map<std::tuple<std::string, std::string, int>, std::size_t> cell_index_;
  mutable std::map<std::tuple<int, std::string, int>, std::size_t> ensemble_index_;
  mutable std::size_t indexed_cells_ = static_cast<std::size_t>(-1);
  mutable std::size_t indexed_ensembles_ = static_cast<std::size_t>(-1);
};

inline json nullable(bool missing, double v) { return missing ? json(nullptr) : json(v); }

inline json to_json(const CellRecord& c) {
  return json{{"type", "cell"},
              {"backend_id", c.backend_id},
              {"mother_id", c.mother_id},
              {"week", c.week},
              {"missing", c.missing},
              {"mean_prediction", nullable(c.missing, c.mean_prediction)},
              {"predictive", nullable(c.missing, c.uncertainty.predictive)},
              {"aleatoric", nullable(c.missing, c.uncertainty.aleatoric)},
              {"epistemic", nullable(c.missing, c.uncertainty.epistemic)},
              {"n_groups", c.uncertainty.n_groups},
              {"n_valid", c.n_valid},
              {"state", c.state}};
}

inline json to_json(const EnsembleRecord& e) {
  json weights = json::object();
  for (const auto& [id, w] : e.prediction.contributing_weights) weights[id] = w;
  return json{{"type", "ensemble"},
              {"mother_id", e.mother_id},
              {"week", e.week},
              {"method", method_name(e.prediction.method)},
              {"missing", e.missing},
              {"probability", nullable(e.missing, e.prediction.probability)},
              {"binarized", e.missing ? json(nullptr) : json(e.prediction.binarized)},
              {"weights", weights}};
}

inline double number_or_zero(const json& j, const char* key) {
  const auto& v = j.at(key);
  return v.is_null() ? 0.0 : v.get<double>();
}

inline CellRecord cell_from_json(const json& j) {
  CellRecord c;
  c.backend_id = j.at("backend_id").get<std::string>();
  c.mother_id = j.at("mother_id").get<std::string>();
  c.week = j.at("week").get<int>();
  c.missing = j.at("missing").get<bool>();
  c.mean_prediction = number_or_zero(j, "mean_prediction");
  c.uncertainty.predictive = number_or_zero(j, "predictive");
  c.uncertainty.aleatoric = number_or_zero(j, "aleatoric");
  c.uncertainty.epistemic = number_or_zero(j, "epistemic");
  c.uncertainty.mean_prediction = c.mean_prediction;
  c.uncertainty.n_groups = j.value("n_groups", 0);
  c.n_valid = j.value("n_valid", 0);
  c.state = j.at("state").get<int>();
  return c;
}

inline EnsembleRecord ensemble_from_json(const json& j) {
  EnsembleRecord e;
  e.mother_id = j.at("mother_id").get<std::string>();
  e.week = j.at("week").get<int>();
  e.missing = j.at("missing").get<bool>();
  const auto method = parse_method(j.at("method").get<std::string>());
  if (!method) throw ValidationError("run log: unknown ensemble method");
  e.prediction.method = *method;
  e.prediction.probability = number_or_zero(j, "probability");
  e.prediction.binarized = j.at("binarized").is_null() ? 0 : j.at("binarized").get<int>();
  for (const auto& [id, w] : j.at("weights").items()) e.prediction.contributing_weights[id] = w.get<double>();
  return e;
}

inline json header_json(const RunLog& log) {
  return json{{"type", "header"},
              {"format_version", kRunLogFormatVersion},
              {"spec_digest", log.spec_digest},
              {"scenario", scenario_name(log.scenario)},
              {"weeks", log.weeks},
              {"mother_ids", log.mother_ids},
              {"backend_ids", log.backend_ids},
              {"spec", log.spec}};
}

inline void apply_header(RunLog& log, const json& h) {
  if (h.value("format_version", 0) != kRunLogFormatVersion) throw ValidationError("run log: unsupported format version");
  log.spec_digest = h.at("spec_digest").get<std::string>();
  log.scenario = parse_scenario(h.at("scenario").get<std::string>());
  log.weeks = h.at("weeks").get<int>();
  log.mother_ids = h.at("mother_ids").get<std::vector<std::string>>();
  log.backend_ids = h.at("backend_ids").get<std::vector<std::string>>();
  log.spec = h.value("spec", json::object());
  log.profiles.clear();
  if (log.spec.contains("mothers")) {
    for (const auto& m : log.spec.at("mothers")) log.profiles.push_back(profile_from_json(m));
  }
}

struct RunLogReadOptions {
  bool retain_queries = true;
};

// Parses a JSONL run log. A truncated final line is ignored.
inline RunLog load_run_log(const std::filesystem::path& path, RunLogReadOptions opts = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open run log " + path.string());
  RunLog log;
  bool have_header = false;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(std::move(line));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    line_no = i + 1;
    if (lines[i].empty()) continue;
    json j = json::parse(lines[i], nullptr, false);
    if (j.is_discarded()) {
      if (i + 1 == lines.size()) break;  // crash mid-write
      throw ValidationError(path.string() + " line " + std::to_string(line_no) + ": malformed JSON");
    }
    const std::string type = j.value("type", "");
    if (type == "header") {
      apply_header(log, j);
      have_header = true;
    } else if (!have_header) {
      throw ValidationError(path.string() + ": first record must be the header");
    } else if (type == "query") {
      ++log.query_count;
      if (opts.retain_queries) log.queries.push_back(query_record_from_json(j));
    } else if (type == "cell") {
      log.cells.push_back(cell_from_json(j));
    } else if (type == "ensemble") {
      log.ensembles.push_back(ensemble_from_json(j));
    } else if (type == "week_end") {
      log.weeks_completed = std::max(log.weeks_completed, j.at("week").get<int>() + 1);
    } else {
      throw ValidationError(path.string() + " line " + std::to_string(line_no) + ": unknown record type '" + type + "'");
    }
  }
  if (!have_header) throw ValidationError(path.string() + ": empty run log");
  return log;
}

inline json read_run_log_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open run log " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty run log");
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || j.value("type", "") != "header") throw ValidationError(path.string() + ": missing header");
  return j;
}

}  // namespace mhsim
