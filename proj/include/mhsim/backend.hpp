#pragma once

// Prediction backends behind one interface, the retrying query path and the
// response cache.

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "mhsim/cohort.hpp"
#include "mhsim/error.hpp"
#include "mhsim/prompting.hpp"
#include "mhsim/rng.hpp"
#include "mhsim/synthetic.hpp"

namespace mhsim {

using json = nlohmann::json;

// provider_a: generateContent-style API (Gemini models in the default profiles)
// provider_b: chat-completions API (GPT models)
// provider_c: messages API (Claude models)
enum class Provider { kProviderA, kProviderB, kProviderC, kSynthetic };

inline std::string_view provider_name(Provider p) {
  switch (p) {
    case Provider::kProviderA: return "provider_a";
    case Provider::kProviderB: return "provider_b";
    case Provider::kProviderC: return "provider_c";
    case Provider::kSynthetic: return "synthetic";
  }
  return "?";
}

inline Provider parse_provider(std::string_view text) {
  for (auto p : {Provider::kProviderA, Provider::kProviderB, Provider::kProviderC, Provider::kSynthetic}) {
    if (provider_name(p) == text) return p;
  }
  throw ConfigError("unknown provider '" + std::string(text) + "'");
}

struct BackendConfig {
  std::string backend_id;
  Provider provider = Provider::kSynthetic;
  std::string model_name;
  double temperature = 1.0;
  int max_tokens = 2048;
  std::string api_key_env;
  std::string base_url;  // empty = provider default
  double request_timeout = 60.0;  // seconds
  int max_retries = 3;  // maximum number of attempts per query, >= 1
  double backoff_base = 1.0;  // seconds; sleeps backoff_base * 2^(attempt-1) between attempts
  int max_in_flight = 8;
  SyntheticAgentParams synthetic;

  void validate() const {
    if (backend_id.empty()) throw ConfigError("backend: backend_id must not be empty");
    const std::string where = "backend " + backend_id + ": ";
    if (!(temperature >= 0.0)) throw ConfigError(where + "temperature must be >= 0");
    if (max_tokens < 1) throw ConfigError(where + "max_tokens must be >= 1");
    if (max_retries < 1) throw ConfigError(where + "max_retries must be >= 1");
    if (!(backoff_base >= 0.0)) throw ConfigError(where + "backoff_base must be >= 0");
    if (max_in_flight < 1) throw ConfigError(where + "max_in_flight must be >= 1");
    if (provider == Provider::kSynthetic) {
      if (!(synthetic.sharpness > 0.0)) throw ConfigError(where + "sharpness must be > 0");
      if (synthetic.noise_level && !(*synthetic.noise_level >= 0.0)) throw ConfigError(where + "noise_level must be >= 0");
    } else {
      if (model_name.empty()) throw ConfigError(where + "model_name must not be empty");
      if (api_key_env.empty()) throw ConfigError(where + "api_key_env must name an environment variable");
      if (!(request_timeout > 0.0)) throw ConfigError(where + "request_timeout must be > 0");
    }
  }
};

inline const char* default_base_url(Provider p) {
  switch (p) {
    case Provider::kProviderA: return "https://generativelanguage.googleapis.com";
    case Provider::kProviderB: return "https://api.openai.com";
    case Provider::kProviderC: return "https://api.anthropic.com";
    case Provider::kSynthetic: return "";
  }
  return "";
}

// Generation settings of the hosted models used for the published runs.
inline std::vector<BackendConfig> default_hosted_profiles() {
  auto make = [](std::string id, Provider p, double temperature, int max_tokens, std::string env) {
    BackendConfig c;
    c.backend_id = id;
    c.model_name = std::move(id);
    c.provider = p;
    c.temperature = temperature;
    c.max_tokens = max_tokens;
    c.api_key_env = std::move(env);
    return c;
  };
  return {
      make("gemini-1.5-pro-002", Provider::kProviderA, 1.0, 8192, "GOOGLE_API_KEY"),
      make("gemini-1.5-flash-002", Provider::kProviderA, 1.0, 8192, "GOOGLE_API_KEY"),
      make("gpt-4o", Provider::kProviderB, 0.7, 2048, "OPENAI_API_KEY"),
      make("gpt-4o-mini", Provider::kProviderB, 0.7, 2048, "OPENAI_API_KEY"),
      make("claude-instant-v1", Provider::kProviderC, 0.7, 2048, "ANTHROPIC_API_KEY"),
  };
}

// Three mock models: calibrated, noisier across wordings, and overconfident.
inline std::vector<BackendConfig> default_synthetic_profiles() {
  auto make = [](std::string id, double noise, double sharpness, std::uint64_t seed) {
    BackendConfig c;
    c.backend_id = std::move(id);
    c.provider = Provider::kSynthetic;
    c.model_name = "synthetic";
    c.synthetic.noise_level = noise;
    c.synthetic.sharpness = sharpness;
    c.synthetic.seed = seed;
    return c;
  };
  return {make("syn-calibrated", 0.3, 1.0, 1), make("syn-noisy", 1.0, 1.0, 2), make("syn-overconfident", 0.3, 3.0, 3)};
}

struct QueryContext {
  std::string mother_id;
  int week = 0;
  int template_id = 1;
  int repeat_index = 0;
};

// What a structured (non-text) backend may look at: the same information the
// rendered prompt carries.
struct AgentView {
  const MotherProfile* profile = nullptr;
  const TrajectoryState* trajectory = nullptr;
  Scenario scenario = Scenario::kControl;
  bool live_call_now = false;
};

struct QueryRequest {
  std::string_view prompt;
  std::uint64_t prompt_hash = 0;
  QueryContext context;
  AgentView view;
};

struct QueryRecord {
  std::string backend_id;
  std::string mother_id;
  int week = 0;
  int template_id = 1;
  int repeat_index = 0;
  std::string prompt_hash;
  Verdict verdict = Verdict::kUnparseable;
  std::string raw_text;
  double latency_ms = 0.0;
  int attempt_count = 0;

  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

inline json to_json(const QueryRecord& r) {
  return json{{"type", "query"},
              {"backend_id", r.backend_id},
              {"mother_id", r.mother_id},
              {"week", r.week},
              {"template_id", r.template_id},
              {"repeat_index", r.repeat_index},
              {"prompt_hash", r.prompt_hash},
              {"verdict", verdict_name(r.verdict)},
              {"raw_text", r.raw_text},
              {"latency_ms", r.latency_ms},
              {"attempt_count", r.attempt_count}};
}

inline QueryRecord query_record_from_json(const json& j) {
  QueryRecord r;
  r.backend_id = j.at("backend_id").get<std::string>();
  r.mother_id = j.at("mother_id").get<std::string>();
  r.week = j.at("week").get<int>();
  r.template_id = j.at("template_id").get<int>();
  r.repeat_index = j.at("repeat_index").get<int>();
  r.prompt_hash = j.at("prompt_hash").get<std::string>();
  r.verdict = parse_verdict_name(j.at("verdict").get<std::string>());
  r.raw_text = j.at("raw_text").get<std::string>();
  r.latency_ms = j.at("latency_ms").get<double>();
  r.attempt_count = j.at("attempt_count").get<int>();
  return r;
}

class Backend {
 public:
  virtual ~Backend() = default;
  virtual const BackendConfig& config() const = 0;
  // Raw reply text. Throws TransportError (retried) or AuthError (not retried).
  virtual std::string complete(const QueryRequest& request) = 0;
  virtual bool networked() const { return config().provider != Provider::kSynthetic; }
};

class SyntheticBackend final : public Backend {
 public:
  SyntheticBackend(BackendConfig config, SyntheticWorldParams world) : config_(std::move(config)), world_(std::move(world)) {
    config_.validate();
    world_.validate();
  }

  const BackendConfig& config() const override { return config_; }

  std::string complete(const QueryRequest& request) override {
    if (!request.view.profile || !request.view.trajectory) {
      throw ConfigError("synthetic backend needs the structured agent view");
    }
    const Verdict v = predict(*request.view.profile, *request.view.trajectory, request.view.scenario,
                              request.view.live_call_now, request.context);
    return v == Verdict::kEngaged ? "##Yes##" : "##No##";
  }

  Verdict predict(const MotherProfile& profile, const TrajectoryState& trajectory, Scenario scenario,
                  bool live_call_now, const QueryContext& ctx) const;

  const SyntheticWorldParams& world() const { return world_; }

 private:
  BackendConfig config_;
  SyntheticWorldParams world_;
};

// Live-call week visible to the agent: never in the counterfactual, otherwise
// from the action history or the current week.
inline std::optional<int> visible_call_week(const TrajectoryState& trajectory, Scenario scenario, bool live_call_now) {
  if (scenario == Scenario::kCounterfactual) return std::nullopt;
  for (std::size_t i = 0; i < trajectory.action_history.size(); ++i) {
    if (trajectory.action_history[i]) return static_cast<int>(i);
  }
  if (live_call_now) return static_cast<int>(trajectory.engagement_history.size());
  return std::nullopt;
}

// One mock-model verdict. Deterministic in (world seed, agent seed, backend,
// mother, week, template, repeat).
inline Verdict synthetic_predict(const SyntheticWorldParams& world, const BackendConfig& backend,
                                 const MotherProfile& profile, const TrajectoryState& trajectory, Scenario scenario,
                                 bool live_call_now, const QueryContext& ctx) {
  const double p = synthetic_conditional_probability(world, profile, trajectory,
                                                     visible_call_week(trajectory, scenario, live_call_now));
  const DrawKey key{backend.backend_id, ctx.mother_id.empty() ? profile.id : ctx.mother_id,
                    static_cast<int>(trajectory.engagement_history.size()), ctx.template_id, ctx.repeat_index};
  return synthetic_vote(world, backend.synthetic, p, key) ? Verdict::kEngaged : Verdict::kNotEngaged;
}

inline Verdict SyntheticBackend::predict(const MotherProfile& profile, const TrajectoryState& trajectory,
                                         Scenario scenario, bool live_call_now, const QueryContext& ctx) const {
  return synthetic_predict(world_, config_, profile, trajectory, scenario, live_call_now, ctx);
}

// ---------------------------------------------------------------------------
// Response cache, keyed by (backend_id, prompt_hash, mother_id, week,
// repeat_index). Optionally backed by an append-only JSONL file of
// QueryRecords; the last record for a key wins.

class ResponseCache {
 public:
  using Key = std::tuple<std::string, std::string, std::string, int, int>;

  ResponseCache() = default;

  explicit ResponseCache(std::filesystem::path file) : path_(std::move(file)) {
    for (const auto& r : read_records(path_)) records_[key_of(r)] = r;
  }

  static Key key_of(const QueryRecord& r) { return {r.backend_id, r.prompt_hash, r.mother_id, r.week, r.repeat_index}; }

  std::optional<QueryRecord> lookup(const Key& key) const {
    std::lock_guard lock(mutex_);
    auto it = records_.find(key);
    if (it == records_.end()) return std::nullopt;
    return it->second;
  }

  void insert(const QueryRecord& r) {
    std::lock_guard lock(mutex_);
    records_[key_of(r)] = r;
    if (!path_.empty()) {
      if (!out_.is_open()) {
        out_.open(path_, std::ios::binary | std::ios::app);
        if (!out_) throw Error("cannot append to cache file " + path_.string());
      }
      out_ << to_json(r).dump() << "\n";
      out_.flush();
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
  }

  // Reads QueryRecords from a JSONL file, ignoring non-query lines and a
  // truncated final line.
  static std::vector<QueryRecord> read_records(const std::filesystem::path& path) {
    std::vector<QueryRecord> out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) continue;
      if (j.value("type", "") != "query") continue;
      out.push_back(query_record_from_json(j));
    }
    return out;
  }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<Key, QueryRecord> records_;
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// Retrying query.

using Sleeper = std::function<void(double seconds)>;

inline void real_sleep(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

struct QueryOutcome {
  QueryRecord record;
  bool cache_hit = false;
  bool issued = false;  // at least one backend call was made
};

inline QueryOutcome query(Backend& backend, const QueryRequest& request, ResponseCache* cache = nullptr,
                          const Sleeper& sleep = real_sleep) {
  const BackendConfig& cfg = backend.config();
  QueryRecord rec;
  rec.backend_id = cfg.backend_id;
  rec.mother_id = request.context.mother_id;
  rec.week = request.context.week;
  rec.template_id = request.context.template_id;
  rec.repeat_index = request.context.repeat_index;
  rec.prompt_hash = hex64(request.prompt_hash);

  const ResponseCache::Key key{rec.backend_id, rec.prompt_hash, rec.mother_id, rec.week, rec.repeat_index};
  if (cache) {
    if (auto hit = cache->lookup(key)) {
      QueryRecord r = *hit;
      r.template_id = rec.template_id;
      return {std::move(r), true, false};
    }
  }

  const bool timed = backend.networked();
  const int attempts = std::max(1, cfg.max_retries);
  std::string last_text;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    rec.attempt_count = attempt;
    const auto start = std::chrono::steady_clock::now();
    try {
      last_text = backend.complete(request);
      ParsedResponse parsed = parse_response(last_text);
      rec.verdict = parsed.verdict;
      rec.raw_text = std::move(parsed.raw_text);
    } catch (const TransportError& e) {
      rec.verdict = Verdict::kUnparseable;
      rec.raw_text = std::string("transport error: ") + e.what();
    }
    if (timed) {
      rec.latency_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    if (rec.verdict != Verdict::kUnparseable) break;
    if (attempt < attempts) sleep(cfg.backoff_base * std::pow(2.0, attempt - 1));
  }

  if (cache && timed) cache->insert(rec);
  return {std::move(rec), false, true};
}

}  // namespace mhsim
