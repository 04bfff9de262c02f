#pragma once

// Weekly autoregressive simulation over the three scenarios.
//
// Week t (0-based) runs after week t-1 has been fully recorded. Within a week
// every (mother, backend, template) task renders one prompt from the
// backend's own trajectory so far and issues `repeats_per_template` queries.
// Results land in fixed slots, so dispatch order never changes the outcome.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mhsim/backend.hpp"
#include "mhsim/cohort.hpp"
#include "mhsim/ensemble.hpp"
#include "mhsim/error.hpp"
#include "mhsim/prompting.hpp"
#include "mhsim/providers.hpp"
#include "mhsim/rng.hpp"
#include "mhsim/runlog.hpp"
#include "mhsim/serialization.hpp"
#include "mhsim/synthetic.hpp"
#include "mhsim/uq.hpp"

namespace mhsim {

enum class Autoregression { kSelfHistory, kTeacherForced };

inline std::string_view autoregression_name(Autoregression a) {
  return a == Autoregression::kSelfHistory ? "self_history" : "teacher_forced";
}

inline Autoregression parse_autoregression(std::string_view text) {
  if (text == "self_history") return Autoregression::kSelfHistory;
  if (text == "teacher_forced") return Autoregression::kTeacherForced;
  throw ConfigError("unknown autoregression mode '" + std::string(text) + "'");
}

inline std::string_view grouping_name(Grouping g) { return g == Grouping::kGrouped ? "grouped" : "flat"; }

inline Grouping parse_grouping(std::string_view text) {
  if (text == "grouped") return Grouping::kGrouped;
  if (text == "flat") return Grouping::kFlat;
  throw ConfigError("unknown grouping mode '" + std::string(text) + "'");
}

inline constexpr int kDirectEvaluationWeeks = 40;
inline constexpr int kDecisionWeeks = 15;
inline constexpr int kRepeatsPerTemplate = 5;

struct ScenarioSpec {
  Scenario scenario = Scenario::kIntervention;
  std::vector<MotherProfile> mothers;
  std::optional<InterventionSchedule> schedule;
  int weeks = kDecisionWeeks;
  std::vector<BackendConfig> backends;
  int repeats_per_template = kRepeatsPerTemplate;
  int templates_per_mode = kTemplatesPerMode;
  std::uint64_t seed = 0;
  Grouping grouping = Grouping::kGrouped;
  Autoregression autoregression = Autoregression::kSelfHistory;
  SyntheticWorldParams world;         // drives the synthetic backends
  std::optional<TruthTable> truth;    // required for teacher forcing
  double missing_abort_fraction = 0.4;

  void validate() const {
    if (mothers.empty()) throw ConfigError("scenario: no mothers");
    if (weeks < 1) throw ConfigError("scenario: weeks must be >= 1");
    if (backends.empty()) throw ConfigError("scenario: no backends");
    if (repeats_per_template < 1 || repeats_per_template > kRepeatsPerTemplate) {
      throw ConfigError("scenario: repeats_per_template must be in [1, 5]");
    }
    if (templates_per_mode < 1 || templates_per_mode > kTemplatesPerMode) {
      throw ConfigError("scenario: templates_per_mode must be in [1, 5]");
    }
    if (!(missing_abort_fraction >= 0.0 && missing_abort_fraction <= 1.0)) {
      throw ConfigError("scenario: missing_abort_fraction must be in [0, 1]");
    }
    world.validate();

    std::set<std::string> ids;
    for (const auto& m : mothers) {
      validate_profile(m);
      if (!ids.insert(m.id).second) throw ConfigError("scenario: duplicate mother " + m.id);
    }
    std::set<std::string> backend_ids;
    for (const auto& b : backends) {
      b.validate();
      if (!backend_ids.insert(b.backend_id).second) throw ConfigError("scenario: duplicate backend " + b.backend_id);
    }

    const std::string name(scenario_name(scenario));
    if (scenario == Scenario::kIntervention && !schedule) {
      throw ConfigError("scenario intervention: an intervention schedule is required");
    }
    if (scenario != Scenario::kIntervention && schedule) {
      throw ConfigError("scenario " + name + ": an intervention schedule is not allowed");
    }
    if (schedule) {
      for (const auto& [id, week] : schedule->assignments) {
        if (week < 0 || week >= kInterventionWindow) {
          throw ConfigError("schedule: mother " + id + " assigned to week " + std::to_string(week) +
                            " outside the intervention window");
        }
      }
    }
    if (autoregression == Autoregression::kTeacherForced) {
      if (!truth) throw ConfigError("scenario: teacher forcing needs ground truth");
      for (const auto& m : mothers) {
        auto it = truth->find(m.id);
        if (it == truth->end() || it->second.size() + 1 < static_cast<std::size_t>(weeks)) {
          throw ConfigError("scenario: ground truth for " + m.id + " does not cover the simulated weeks");
        }
      }
    }
  }

 private:
  static void validate_profile(const MotherProfile& m) { mhsim::validate(m); }
};

// Mothers sorted by id; schedule restricted to the simulated mothers.
inline ScenarioSpec canonical(ScenarioSpec spec) {
  std::sort(spec.mothers.begin(), spec.mothers.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  if (spec.schedule) {
    std::set<std::string> ids;
    for (const auto& m : spec.mothers) ids.insert(m.id);
    for (auto it = spec.schedule->assignments.begin(); it != spec.schedule->assignments.end();) {
      it = ids.count(it->first) ? std::next(it) : spec.schedule->assignments.erase(it);
    }
  }
  return spec;
}

inline std::string truth_digest(const TruthTable& truth, const std::vector<MotherProfile>& mothers) {
  std::string all;
  for (const auto& m : mothers) {
    auto it = truth.find(m.id);
    all += m.id;
    all += ':';
    if (it != truth.end()) {
      for (int v : it->second) all += static_cast<char>('0' + v);
    }
    all += '\n';
  }
  return hex64(fnv1a64(all));
}

inline json spec_to_json(const ScenarioSpec& canonical_spec, const TemplateSet& templates) {
  const ScenarioSpec& s = canonical_spec;
  json mothers = json::array();
  for (const auto& m : s.mothers) mothers.push_back(profile_to_json(m));
  json backends = json::array();
  for (const auto& b : s.backends) backends.push_back(backend_to_json(b));
  return json{{"scenario", scenario_name(s.scenario)},
              {"mothers", mothers},
              {"schedule", s.schedule ? schedule_to_json(*s.schedule) : json(nullptr)},
              {"weeks", s.weeks},
              {"backends", backends},
              {"repeats_per_template", s.repeats_per_template},
              {"templates_per_mode", s.templates_per_mode},
              {"seed", s.seed},
              {"grouping", grouping_name(s.grouping)},
              {"autoregression", autoregression_name(s.autoregression)},
              {"world", world_to_json(s.world)},
              {"truth_digest", s.truth ? json(truth_digest(*s.truth, s.mothers)) : json(nullptr)},
              {"missing_abort_fraction", s.missing_abort_fraction},
              {"templates_digest", hex64(templates.digest())}};
}

// Inverse of spec_to_json apart from the ground truth, which is stored only as
// a digest.
inline ScenarioSpec spec_from_json(const json& j) {
  ScenarioSpec s;
  s.scenario = parse_scenario(j.at("scenario").get<std::string>());
  for (const auto& m : j.at("mothers")) s.mothers.push_back(profile_from_json(m));
  if (!j.at("schedule").is_null()) s.schedule = schedule_from_json(j.at("schedule"));
  s.weeks = j.at("weeks").get<int>();
  for (const auto& b : j.at("backends")) s.backends.push_back(backend_from_json(b));
  s.repeats_per_template = j.at("repeats_per_template").get<int>();
  s.templates_per_mode = j.at("templates_per_mode").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.grouping = parse_grouping(j.at("grouping").get<std::string>());
  s.autoregression = parse_autoregression(j.at("autoregression").get<std::string>());
  s.world = world_from_json(j.at("world"));
  s.missing_abort_fraction = j.at("missing_abort_fraction").get<double>();
  return s;
}

inline std::string digest_of(const json& canonical_json) { return hex64(fnv1a64(canonical_json.dump())); }

// Counterfactual twin of an intervention spec: same mothers and seeds, no
// schedule, histories without delivery information.
inline ScenarioSpec counterfactual_of(ScenarioSpec spec) {
  spec.scenario = Scenario::kCounterfactual;
  spec.schedule.reset();
  return spec;
}

inline std::filesystem::path default_template_dir() {
  if (const char* env = std::getenv("MHSIM_TEMPLATE_DIR"); env && *env) return env;
#ifdef MHSIM_DEFAULT_TEMPLATE_DIR
  return MHSIM_DEFAULT_TEMPLATE_DIR;
#else
  return "templates";
#endif
}

using BackendFactory = std::function<std::unique_ptr<Backend>(const BackendConfig&, const SyntheticWorldParams&)>;

struct EngineOptions {
  std::filesystem::path log_path;  // empty: in memory only
  bool retain_queries = true;      // keep QueryRecords in the returned RunLog
  int concurrency = 1;
  std::optional<std::uint64_t> shuffle_dispatch_seed;
  ResponseCache* provider_cache = nullptr;  // hosted replies, shared across runs
  const ResponseCache* replay = nullptr;    // records from an earlier attempt of this run
  std::shared_ptr<Transport> transport;     // needed for hosted backends
  BackendFactory backend_factory;           // overrides the default construction
  std::function<bool(int week)> stop_after_week;  // true -> RunInterrupted after that week
  Sleeper sleep = real_sleep;
  const TemplateSet* templates = nullptr;  // default: load_templates(default_template_dir())
  WarningSink warn = default_warning;
};

// Synthetic agents draw from a stream that also depends on the scenario seed.
inline BackendConfig seeded_backend(BackendConfig cfg, std::uint64_t scenario_seed) {
  if (cfg.provider == Provider::kSynthetic) cfg.synthetic.seed = mix64(cfg.synthetic.seed ^ mix64(scenario_seed));
  return cfg;
}

inline std::unique_ptr<Backend> make_backend(const BackendConfig& cfg, const SyntheticWorldParams& world,
                                             const EngineOptions& opts) {
  if (opts.backend_factory) return opts.backend_factory(cfg, world);
  if (cfg.provider == Provider::kSynthetic) return std::make_unique<SyntheticBackend>(cfg, world);
  if (!opts.transport) throw ConfigError("backend " + cfg.backend_id + ": hosted provider needs a network transport");
  return std::make_unique<HttpBackend>(cfg, opts.transport);
}

// Runs fn(i) for i in order[0..n) on up to `workers` threads. The first
// exception stops further dispatch and is rethrown.
inline void parallel_for(const std::vector<std::size_t>& order, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || order.size() <= 1) {
    for (std::size_t i : order) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t k = next.fetch_add(1);
      if (k >= order.size()) return;
      try {
        fn(order[k]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> threads;
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(workers), order.size());
  for (std::size_t i = 0; i < n; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::string dump_line(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
}

class RunLogWriter {
 public:
  explicit RunLogWriter(const std::filesystem::path& path) {
    if (path.empty()) return;
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error("cannot write run log " + path.string());
  }
  void write(const json& j) {
    if (out_.is_open()) out_ << dump_line(j);
  }
  void flush() {
    if (!out_.is_open()) return;
    out_.flush();
    if (!out_) throw Error("run log write failed");
  }

 private:
  std::ofstream out_;
};

inline TemplateSet load_default_templates(int per_mode) { return load_templates(default_template_dir(), per_mode); }

inline RunLog run_scenario(const ScenarioSpec& spec_in, const EngineOptions& opts = {}) {
  spec_in.validate();
  const ScenarioSpec spec = canonical(spec_in);

  std::optional<TemplateSet> owned_templates;
  const TemplateSet* templates = opts.templates;
  if (!templates) templates = &owned_templates.emplace(load_default_templates(spec.templates_per_mode));
  if (templates->count() < spec.templates_per_mode) throw ConfigError("scenario: not enough prompt templates loaded");

  RunLog log;
  log.spec = spec_to_json(spec, *templates);
  log.spec_digest = digest_of(log.spec);
  log.scenario = spec.scenario;
  log.weeks = spec.weeks;
  log.profiles = spec.mothers;
  for (const auto& m : spec.mothers) log.mother_ids.push_back(m.id);
  for (const auto& b : spec.backends) log.backend_ids.push_back(b.backend_id);

  std::vector<std::unique_ptr<Backend>> backends;
  for (const auto& cfg : spec.backends) backends.push_back(make_backend(seeded_backend(cfg, spec.seed), spec.world, opts));

  RunLogWriter writer(opts.log_path);
  writer.write(header_json(log));
  writer.flush();

  const std::size_t M = spec.mothers.size();
  const std::size_t B = backends.size();
  const auto T = static_cast<std::size_t>(spec.templates_per_mode);
  const auto R = static_cast<std::size_t>(spec.repeats_per_template);
  const bool teacher = spec.autoregression == Autoregression::kTeacherForced;

  std::vector<std::optional<int>> call_week(M);
  if (spec.scenario == Scenario::kIntervention) {
    for (std::size_t m = 0; m < M; ++m) call_week[m] = spec.schedule->week_of(spec.mothers[m].id);
  }

  // Trajectory of backend b for mother m lives at b * M + m.
  std::vector<TrajectoryState> trajectories(B * M);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t m = 0; m < M; ++m) trajectories[b * M + m].mother_id = spec.mothers[m].id;
  }

  std::vector<std::size_t> order(M * B * T);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (opts.shuffle_dispatch_seed) {
    SplitMix64 rng(mix64(*opts.shuffle_dispatch_seed ^ stream::kDispatch));
    rng.shuffle(order.begin(), order.end());
  }

  std::vector<QueryRecord> records(M * B * T * R);
  std::atomic<std::size_t> issued{0};
  std::atomic<std::size_t> hits{0};

  for (int week = 0; week < spec.weeks; ++week) {
    auto task = [&](std::size_t index) {
      const std::size_t k = index % T;
      const std::size_t b = (index / T) % B;
      const std::size_t m = index / (T * B);
      const MotherProfile& profile = spec.mothers[m];
      const bool live = call_week[m] && *call_week[m] == week;

      TrajectoryState forced;
      const TrajectoryState* view = &trajectories[b * M + m];
      if (teacher) {
        forced = *view;
        const auto& truth = spec.truth->at(profile.id);
        forced.engagement_history.assign(truth.begin(), truth.begin() + week);
        view = &forced;
      }
      const DeliveryMode mode = live ? DeliveryMode::kIntervention : DeliveryMode::kNoIntervention;
      const int template_id = static_cast<int>(k) + 1;
      const std::string prompt = render_prompt(templates->get(mode, template_id), profile, *view, spec.scenario);
      const std::uint64_t hash = fnv1a64(prompt);
      const std::string hash_hex = hex64(hash);

      for (std::size_t r = 0; r < R; ++r) {
        QueryRequest req;
        req.prompt = prompt;
        req.prompt_hash = hash;
        req.context = QueryContext{profile.id, week, template_id, static_cast<int>(r)};
        req.view = AgentView{&profile, view, spec.scenario, live};
        QueryRecord& slot = records[index * R + r];
        std::optional<QueryRecord> replayed;
        if (opts.replay) {
          replayed = opts.replay->lookup({backends[b]->config().backend_id, hash_hex, profile.id, week, static_cast<int>(r)});
        }
        if (replayed) {
          slot = std::move(*replayed);
          slot.template_id = template_id;
          ++hits;
        } else {
          QueryOutcome outcome = query(*backends[b], req, opts.provider_cache, opts.sleep);
          if (outcome.cache_hit) ++hits;
          if (outcome.issued) ++issued;
          slot = std::move(outcome.record);
        }
      }
    };
    parallel_for(order, opts.concurrency, task);

    // Queries in canonical order: mother -> backend -> template -> repeat.
    for (const auto& r : records) writer.write(to_json(r));
    log.query_count += records.size();
    if (opts.retain_queries) log.queries.insert(log.queries.end(), records.begin(), records.end());

    std::vector<CellRecord> week_cells(M * B);
    std::size_t missing = 0;
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t b = 0; b < B; ++b) {
        CellRecord& cell = week_cells[m * B + b];
        cell.backend_id = log.backend_ids[b];
        cell.mother_id = log.mother_ids[m];
        cell.week = week;
        std::vector<std::vector<int>> groups;
        for (std::size_t k = 0; k < T; ++k) {
          if (spec.grouping == Grouping::kGrouped) groups.emplace_back();
          for (std::size_t r = 0; r < R; ++r) {
            const auto& q = records[((m * B + b) * T + k) * R + r];
            if (q.verdict == Verdict::kUnparseable) continue;
            const int v = q.verdict == Verdict::kEngaged ? 1 : 0;
            if (spec.grouping == Grouping::kGrouped) groups.back().push_back(v);
            else groups.push_back({v});
            ++cell.n_valid;
          }
        }
        const auto& traj = trajectories[b * M + m];
        if (cell.n_valid == 0) {
          cell.missing = true;
          cell.state = traj.engagement_history.empty() ? 0 : traj.engagement_history.back();
          ++missing;
        } else {
          cell.uncertainty = decompose(groups);
          cell.mean_prediction = cell.uncertainty.mean_prediction;
          cell.state = binarize(cell.mean_prediction);
        }
        writer.write(to_json(cell));
      }
    }
    log.cells.insert(log.cells.end(), week_cells.begin(), week_cells.end());

    if (static_cast<double>(missing) > spec.missing_abort_fraction * static_cast<double>(M * B)) {
      writer.flush();
      throw DataQualityError("week " + std::to_string(week + 1) + ": " + std::to_string(missing) + " of " +
                             std::to_string(M * B) + " cells have no parseable verdict");
    }

    for (std::size_t m = 0; m < M; ++m) {
      std::vector<std::string> ids;
      std::vector<double> means;
      std::vector<double> epistemic;
      for (std::size_t b = 0; b < B; ++b) {
        const auto& cell = week_cells[m * B + b];
        if (cell.missing) continue;
        ids.push_back(cell.backend_id);
        means.push_back(cell.mean_prediction);
        epistemic.push_back(cell.uncertainty.epistemic);
      }
      for (EnsembleMethod method : kEnsembleMethods) {
        EnsembleRecord e;
        e.mother_id = log.mother_ids[m];
        e.week = week;
        e.prediction.method = method;
        if (ids.empty()) e.missing = true;
        else e.prediction = combine(method, make_cells(ids, means, epistemic));
        writer.write(to_json(e));
        log.ensembles.push_back(std::move(e));
      }
    }

    // Feed back each backend's own state; ensembles are not fed back.
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t b = 0; b < B; ++b) {
        auto& traj = trajectories[b * M + m];
        traj.engagement_history.push_back(week_cells[m * B + b].state);
        traj.action_history.push_back(call_week[m] && *call_week[m] == week ? 1 : 0);
      }
    }

    writer.write(json{{"type", "week_end"}, {"week", week}, {"cells", M * B}, {"missing_cells", missing}});
    writer.flush();
    log.weeks_completed = week + 1;
    if (opts.stop_after_week && week + 1 < spec.weeks && opts.stop_after_week(week)) {
      log.stats = {issued.load(), hits.load()};
      throw RunInterrupted("run stopped after week " + std::to_string(week + 1));
    }
  }
  log.stats = {issued.load(), hits.load()};
  log.invalidate_index();
  return log;
}

inline std::string spec_digest(const ScenarioSpec& spec, const TemplateSet& templates) {
  return digest_of(spec_to_json(canonical(spec), templates));
}

// Continues a partial run. Every query already on disk is reused, the log is
// rebuilt into a temporary file and moved over the original on success.
inline RunLog resume(const std::filesystem::path& log_path, const ScenarioSpec& spec, EngineOptions opts = {}) {
  const json header = read_run_log_header(log_path);
  std::optional<TemplateSet> owned_templates;
  if (!opts.templates) opts.templates = &owned_templates.emplace(load_default_templates(spec.templates_per_mode));
  const std::string digest = spec_digest(spec, *opts.templates);
  if (header.at("spec_digest").get<std::string>() != digest) {
    throw DigestMismatchError("run log " + log_path.string() + " was written for a different scenario spec");
  }
  ResponseCache replay;
  for (const auto& r : ResponseCache::read_records(log_path)) replay.insert(r);
  opts.replay = &replay;
  std::filesystem::path tmp = log_path;
  tmp += ".tmp";
  opts.log_path = tmp;
  RunLog log = run_scenario(spec, opts);
  std::filesystem::rename(tmp, log_path);
  return log;
}

// Resume using the spec stored in the log header. Not usable for
// teacher-forced runs, whose ground truth is stored only as a digest.
inline RunLog resume(const std::filesystem::path& log_path, EngineOptions opts = {}) {
  const json header = read_run_log_header(log_path);
  return resume(log_path, spec_from_json(header.at("spec")), std::move(opts));
}

struct PairedRun {
  RunLog intervention;
  RunLog counterfactual;
};

inline PairedRun run_paired(const ScenarioSpec& intervention_spec, EngineOptions opts = {},
                            const std::filesystem::path& intervention_log = {},
                            const std::filesystem::path& counterfactual_log = {}) {
  if (intervention_spec.scenario != Scenario::kIntervention) {
    throw ConfigError("run_paired: expects an intervention scenario");
  }
  intervention_spec.validate();
  PairedRun out;
  opts.log_path = intervention_log;
  out.intervention = run_scenario(intervention_spec, opts);
  opts.log_path = counterfactual_log;
  out.counterfactual = run_scenario(counterfactual_of(intervention_spec), opts);
  return out;
}

}  // namespace mhsim
