#pragma once

// Run configuration files (JSON, schema_version 1). Relative paths are
// resolved against the directory of the config file.
//
// {
//   "schema_version": 1,
//   "seed": 42,                                  required, unsigned integer
//   "scenario": "paired",                        intervention | counterfactual | control | paired
//   "weeks": 15,
//   "cohort": {"path": "cohort.csv"}             or {"generate": {"n": 500, "seed": 7}}
//   "mother_ids_path": "subsample.txt",          optional subset of the cohort
//   "schedule": {"weekly_fraction": 0.1, "weeks": 6, "seed": 3}   or {"path": "schedule.json"}
//   "backends": ["syn-calibrated", {"profile": "gpt-4o", "max_retries": 5}, {...full backend...}],
//   "repeats_per_template": 5,
//   "templates_per_mode": 5,
//   "templates_dir": "templates",
//   "grouping": "grouped",                       grouped | flat
//   "autoregression": "self_history",            self_history | teacher_forced
//   "truth": "truth.csv",                        or "synthetic": generated from "world"
//   "world": {"p01_base": 0.3, "p11_base": 0.8, "retention_boost": 0.15, ...},
//   "missing_abort_fraction": 0.4,
//   "output_dir": "runs/demo",
//   "concurrency": 1,
//   "cache_path": "provider_cache.jsonl"         hosted replies; default <output_dir>/provider_cache.jsonl
// }

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mhsim/backend.hpp"
#include "mhsim/cohort.hpp"
#include "mhsim/engine.hpp"
#include "mhsim/error.hpp"
#include "mhsim/serialization.hpp"
#include "mhsim/synthetic.hpp"

namespace mhsim {

inline constexpr int kConfigSchemaVersion = 1;

struct RunConfig {
  std::filesystem::path source_dir;
  std::uint64_t seed = 0;
  std::string scenario = "paired";
  int weeks = kDecisionWeeks;
  json cohort;
  std::optional<std::filesystem::path> mother_ids_path;
  json schedule;  // null when absent
  json backends = json::array();
  int repeats_per_template = kRepeatsPerTemplate;
  int templates_per_mode = kTemplatesPerMode;
  std::optional<std::filesystem::path> templates_dir;
  Grouping grouping = Grouping::kGrouped;
  Autoregression autoregression = Autoregression::kSelfHistory;
  std::optional<std::string> truth;  // path or "synthetic"
  SyntheticWorldParams world;
  double missing_abort_fraction = 0.4;
  std::filesystem::path output_dir = "runs";
  int concurrency = 1;
  std::optional<std::filesystem::path> cache_path;
};

inline std::filesystem::path resolve(const RunConfig& c, const std::filesystem::path& p) {
  return p.is_absolute() ? p : c.source_dir / p;
}

inline const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys = {
      "schema_version", "seed",         "scenario",       "weeks",         "cohort",
      "mother_ids_path", "schedule",    "backends",       "repeats_per_template",
      "templates_per_mode", "templates_dir", "grouping",  "autoregression", "truth",
      "world",          "missing_abort_fraction", "output_dir", "concurrency", "cache_path"};
  return keys;
}

inline bool is_scenario_choice(std::string_view s) {
  return s == "intervention" || s == "counterfactual" || s == "control" || s == "paired";
}

inline RunConfig parse_run_config(const json& j, const std::filesystem::path& source_dir) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!config_keys().count(key)) throw ConfigError("config: unknown key '" + key + "'");
  }
  if (j.value("schema_version", 0) != kConfigSchemaVersion) {
    throw ConfigError("config: schema_version must be " + std::to_string(kConfigSchemaVersion));
  }
  if (!j.contains("seed") || !j.at("seed").is_number_unsigned()) {
    throw ConfigError("config: 'seed' is required and must be a non-negative integer");
  }
  RunConfig c;
  try {
    c.source_dir = source_dir;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.scenario = j.value("scenario", c.scenario);
    if (!is_scenario_choice(c.scenario)) throw ConfigError("config: unknown scenario '" + c.scenario + "'");
    c.weeks = j.value("weeks", c.weeks);
    if (!j.contains("cohort")) throw ConfigError("config: 'cohort' is required");
    c.cohort = j.at("cohort");
    if (j.contains("mother_ids_path")) c.mother_ids_path = j.at("mother_ids_path").get<std::string>();
    c.schedule = j.value("schedule", json(nullptr));
    if (!j.contains("backends")) throw ConfigError("config: 'backends' is required");
    c.backends = j.at("backends");
    c.repeats_per_template = j.value("repeats_per_template", c.repeats_per_template);
    c.templates_per_mode = j.value("templates_per_mode", c.templates_per_mode);
    if (j.contains("templates_dir")) c.templates_dir = j.at("templates_dir").get<std::string>();
    if (j.contains("grouping")) c.grouping = parse_grouping(j.at("grouping").get<std::string>());
    if (j.contains("autoregression")) c.autoregression = parse_autoregression(j.at("autoregression").get<std::string>());
    if (j.contains("truth")) c.truth = j.at("truth").get<std::string>();
    if (j.contains("world")) c.world = world_from_json(j.at("world"));
    c.missing_abort_fraction = j.value("missing_abort_fraction", c.missing_abort_fraction);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    c.concurrency = j.value("concurrency", c.concurrency);
    if (j.contains("cache_path")) c.cache_path = j.at("cache_path").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.concurrency < 1) throw ConfigError("config: concurrency must be >= 1");
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path.string() + ": malformed JSON");
  return parse_run_config(j, path.parent_path());
}

inline std::vector<BackendConfig> named_profiles() {
  auto all = default_hosted_profiles();
  for (auto& s : default_synthetic_profiles()) all.push_back(std::move(s));
  return all;
}

inline BackendConfig profile_named(const std::string& name) {
  for (auto& p : named_profiles()) {
    if (p.backend_id == name) return p;
  }
  throw ConfigError("unknown backend profile '" + name + "'");
}

// "synthetic" expands to the three mock profiles.
inline std::vector<BackendConfig> parse_backend_list(const json& list) {
  if (!list.is_array() || list.empty()) throw ConfigError("config: 'backends' must be a non-empty list");
  std::vector<BackendConfig> out;
  for (const auto& entry : list) {
    if (entry.is_string()) {
      const auto name = entry.get<std::string>();
      if (name == "synthetic") {
        for (auto& s : default_synthetic_profiles()) out.push_back(std::move(s));
      } else {
        out.push_back(profile_named(name));
      }
    } else if (entry.is_object()) {
      BackendConfig base;
      if (entry.contains("profile")) base = profile_named(entry.at("profile").get<std::string>());
      json overrides = entry;
      overrides.erase("profile");
      try {
        out.push_back(backend_from_json(overrides, base));
      } catch (const json::exception& e) {
        throw ConfigError(std::string("config: backend: ") + e.what());
      }
    } else {
      throw ConfigError("config: backend entries must be names or objects");
    }
  }
  return out;
}

inline std::vector<BackendConfig> parse_backend_names(std::string_view comma_list) {
  json list = json::array();
  for (const auto& name : split(comma_list, ',')) {
    if (!name.empty()) list.push_back(name);
  }
  return parse_backend_list(list);
}

inline std::vector<MotherProfile> config_mothers(const RunConfig& c) {
  std::vector<MotherProfile> cohort;
  if (c.cohort.contains("path")) {
    cohort = load_cohort(resolve(c, c.cohort.at("path").get<std::string>()));
  } else if (c.cohort.contains("generate")) {
    const auto& g = c.cohort.at("generate");
    cohort = generate_cohort(g.at("n").get<std::int64_t>(), g.value("seed", c.seed));
  } else {
    throw ConfigError("config: cohort needs 'path' or 'generate'");
  }
  if (!c.mother_ids_path) return cohort;
  const auto ids = load_id_list(resolve(c, *c.mother_ids_path));
  std::map<std::string, MotherProfile> by_id;
  for (auto& m : cohort) by_id.emplace(m.id, std::move(m));
  std::vector<MotherProfile> out;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ConfigError("config: mother " + id + " from the id list is not in the cohort");
    out.push_back(it->second);
  }
  return out;
}

inline std::optional<InterventionSchedule> config_schedule(const RunConfig& c, const std::vector<MotherProfile>& mothers) {
  if (c.schedule.is_null()) return std::nullopt;
  if (c.schedule.contains("path")) {
    const auto path = resolve(c, c.schedule.at("path").get<std::string>());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open schedule " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("schedule " + path.string() + ": malformed JSON");
    return schedule_from_json(j);
  }
  return schedule_interventions(mothers, c.schedule.value("weekly_fraction", 0.10),
                                c.schedule.value("weeks", kInterventionWindow), c.schedule.value("seed", c.seed));
}

inline bool any_hosted(const std::vector<BackendConfig>& backends) {
  return std::any_of(backends.begin(), backends.end(), [](const auto& b) { return b.provider != Provider::kSynthetic; });
}

// Scenario spec for one scenario of the config. For "paired" this is the
// intervention half.
inline ScenarioSpec config_spec(const RunConfig& c) {
  ScenarioSpec s;
  s.scenario = c.scenario == "paired" ? Scenario::kIntervention : parse_scenario(c.scenario);
  s.mothers = config_mothers(c);
  s.schedule = config_schedule(c, s.mothers);
  s.weeks = c.weeks;
  s.backends = parse_backend_list(c.backends);
  s.repeats_per_template = c.repeats_per_template;
  s.templates_per_mode = c.templates_per_mode;
  s.seed = c.seed;
  s.grouping = c.grouping;
  s.autoregression = c.autoregression;
  s.world = c.world;
  s.missing_abort_fraction = c.missing_abort_fraction;
  if (c.truth) {
    if (*c.truth == "synthetic") {
      s.truth = synthetic_truth_table(s.world, s.mothers, s.schedule ? &*s.schedule : nullptr, s.weeks);
    } else {
      s.truth = load_truth(resolve(c, *c.truth));
    }
  }
  return s;
}

}  // namespace mhsim
